#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "tdi/core/image.hpp"
#include "tdi/core/manifest.hpp"
#include "tdi/core/png_io.hpp"
#include "tdi/core/rng.hpp"

namespace tdi::synth {

enum class TextureKind { gradient, noise, stripes };

struct SynthConfig {
    int image_size = 64;
    std::vector<std::string> class_list = {"disc", "box", "stripe"}; // class ids 1..k
    int object_count_min = 0;
    int object_count_max = 4;
    uint16_t target_class = 1;
    std::vector<TextureKind> texture_kinds = {TextureKind::gradient, TextureKind::noise,
                                              TextureKind::stripes};
    uint64_t seed = 0;
};

namespace detail {

struct ObjectSpec {
    uint16_t class_id;
    double cx, cy;
    double a, b;    // half extents (disc: a = radius)
    double angle;   // stripes only
    float color[3];
};

inline void render_background(Image& img, Rng& rng, const SynthConfig& cfg) {
    const int S = cfg.image_size;
    TextureKind kind = cfg.texture_kinds[size_t(rng.uniform_int(0, int(cfg.texture_kinds.size()) - 1))];
    float c0[3], c1[3];
    for (int c = 0; c < 3; ++c) c0[c] = float(rng.uniform(0.2, 0.8));
    for (int c = 0; c < 3; ++c) c1[c] = float(rng.uniform(0.2, 0.8));
    switch (kind) {
        case TextureKind::gradient: {
            double ang = rng.uniform(0, 2 * M_PI);
            double dx = std::cos(ang), dy = std::sin(ang);
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x) {
                    double t = ((x * dx + y * dy) / S + 1.0) * 0.5;
                    t = std::clamp(t, 0.0, 1.0);
                    for (int c = 0; c < 3; ++c)
                        img.at(y, x, c) = float(c0[c] * (1 - t) + c1[c] * t);
                }
            break;
        }
        case TextureKind::noise: {
            // value noise: random coarse grid, bilinear upsample
            const int G = 8;
            std::vector<float> grid(size_t(G + 1) * (G + 1) * 3);
            for (auto& v : grid) v = float(rng.uniform(0.2, 0.8));
            const double step = double(S) / G;
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x) {
                    double gx = x / step, gy = y / step;
                    int ix = std::min(int(gx), G - 1), iy = std::min(int(gy), G - 1);
                    double fx = gx - ix, fy = gy - iy;
                    for (int c = 0; c < 3; ++c) {
                        double v00 = grid[(size_t(iy) * (G + 1) + ix) * 3 + c];
                        double v01 = grid[(size_t(iy) * (G + 1) + ix + 1) * 3 + c];
                        double v10 = grid[(size_t(iy + 1) * (G + 1) + ix) * 3 + c];
                        double v11 = grid[(size_t(iy + 1) * (G + 1) + ix + 1) * 3 + c];
                        img.at(y, x, c) = float((v00 * (1 - fx) + v01 * fx) * (1 - fy) +
                                                (v10 * (1 - fx) + v11 * fx) * fy);
                    }
                }
            break;
        }
        case TextureKind::stripes: {
            double wavelength = rng.uniform(8.0, 24.0);
            double ang = rng.uniform(0, 2 * M_PI);
            double fx = std::cos(ang) / wavelength, fy = std::sin(ang) / wavelength;
            double phase = rng.uniform(0, 2 * M_PI);
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x) {
                    double t = 0.5 + 0.5 * std::sin(2 * M_PI * (fx * x + fy * y) + phase);
                    for (int c = 0; c < 3; ++c)
                        img.at(y, x, c) = float(c0[c] * (1 - t) + c1[c] * t);
                }
            break;
        }
    }
}

inline ObjectSpec draw_object_spec(Rng& rng, const SynthConfig& cfg, bool is_target) {
    ObjectSpec o{};
    const double S = cfg.image_size;
    if (is_target) {
        o.class_id = cfg.target_class;
    } else {
        // uniform over the non-target classes
        int pick = int(rng.uniform_int(1, int(cfg.class_list.size()) - 1));
        o.class_id = uint16_t(pick < cfg.target_class ? pick : pick + 1);
    }
    o.cx = rng.uniform(0.15 * S, 0.85 * S);
    o.cy = rng.uniform(0.15 * S, 0.85 * S);
    const std::string& name = cfg.class_list[o.class_id - 1];
    if (name == "box") {
        o.a = rng.uniform(0.07 * S, 0.16 * S);
        o.b = rng.uniform(0.07 * S, 0.16 * S);
        o.angle = 0;
    } else if (name == "stripe") {
        o.a = rng.uniform(0.18 * S, 0.32 * S); // half length
        o.b = rng.uniform(0.03 * S, 0.06 * S); // half thickness
        o.angle = rng.uniform(0, M_PI);
    } else { // disc
        o.a = o.b = rng.uniform(0.09 * S, 0.18 * S);
        o.angle = 0;
    }
    if (o.class_id == cfg.target_class) {
        // target objects carry a saturated red signature color: predictable,
        // so models that learn the shadow cue can confidently redraw the
        // object, and residual traces after removal are easy to detect
        o.color[0] = float(rng.uniform(0.85, 1.0));
        for (int c = 1; c < 3; ++c) o.color[c] = float(rng.uniform(0.0, 0.25));
    } else {
        for (int c = 0; c < 3; ++c) o.color[c] = float(rng.uniform(0.25, 0.75));
    }
    return o;
}

// Drop shadow beside a target object: a darkened patch cast diagonally from
// the object, never under it. Shadows are background content (never
// segmented), so they persist in the paired target-free render and act as a
// context cue that an object belongs next to them.
inline void render_shadow(Image& img, const ObjectSpec& o);

// Boundary coverage in [0,1]; pixels with coverage >= 0.5 belong to the object.
inline double object_coverage(const ObjectSpec& o, double x, double y) {
    double dx = x - o.cx, dy = y - o.cy;
    if (o.angle != 0) {
        double ca = std::cos(o.angle), sa = std::sin(o.angle);
        double rx = dx * ca + dy * sa, ry = -dx * sa + dy * ca;
        dx = rx;
        dy = ry;
    }
    if (o.a == o.b && o.angle == 0) {
        double d = std::sqrt(dx * dx + dy * dy);
        return std::clamp(o.a + 0.5 - d, 0.0, 1.0);
    }
    double cx_ = std::clamp(o.a + 0.5 - std::abs(dx), 0.0, 1.0);
    double cy_ = std::clamp(o.b + 0.5 - std::abs(dy), 0.0, 1.0);
    return cx_ * cy_;
}

// Anti-aliased blending restricted to coverage >= 0.5 so pixels outside the
// segmentation stay bit-identical between the paired renders.
inline void rasterize(Image& img, SegmentationMap* seg, InstanceMap* inst, uint16_t instance_id,
                      const ObjectSpec& o) {
    const int S = img.height;
    int x0 = std::max(0, int(o.cx - o.a - o.b - 2)), x1 = std::min(S - 1, int(o.cx + o.a + o.b + 2));
    int y0 = std::max(0, int(o.cy - o.a - o.b - 2)), y1 = std::min(S - 1, int(o.cy + o.a + o.b + 2));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            double cov = object_coverage(o, x, y);
            if (cov < 0.5) continue;
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = float(img.at(y, x, c) * (1 - cov) + o.color[c] * cov);
            if (seg) seg->at(y, x) = o.class_id;
            if (inst) inst->at(y, x) = instance_id;
        }
}

inline void render_shadow(Image& img, const ObjectSpec& o) {
    // cast diagonally down-right (fixed light direction), sized like the
    // object, never under it: the hole left by masking the object stays
    // bordered by plain background almost everywhere
    ObjectSpec s = o;
    s.cx = o.cx + 0.5 * o.a + 0.5;
    s.cy = o.cy + 0.5 * o.b + 0.5;
    s.a = o.a * 1.15 + 1.0;
    s.b = o.b * 1.15 + 1.0;
    const int S = img.height;
    int x0 = std::max(0, int(s.cx - s.a - s.b - 2)), x1 = std::min(S - 1, int(s.cx + s.a + s.b + 2));
    int y0 = std::max(0, int(s.cy - s.a - s.b - 2)), y1 = std::min(S - 1, int(s.cy + s.a + s.b + 2));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            double cov = object_coverage(s, x, y);
            if (cov < 0.5) continue;
            // annulus only: the object's own footprint is left untouched, so
            // the correct fill where an object stood is plain background
            if (object_coverage(o, x, y) >= 0.5) continue;
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = float(img.at(y, x, c) * 0.40);
        }
}

} // namespace detail

// Deterministic in (cfg.seed, index). gt_removal is the identical scene
// rendered without target-class objects.
inline SceneSample generate_scene(const SynthConfig& cfg, int index) {
    Rng rng = Rng::derive(cfg.seed, uint64_t(index));
    const int S = cfg.image_size;
    SceneSample s;
    s.image = Image(S, S);
    s.seg = SegmentationMap(S, S);
    s.inst = InstanceMap(S, S);
    detail::render_background(s.image, rng, cfg);
    Image gt = s.image; // same background, pre-object

    int n_objects = int(rng.uniform_int(cfg.object_count_min, cfg.object_count_max));
    // Target presence is decided independently of scene density so that
    // target-free scenes are just as cluttered as target-bearing ones;
    // otherwise "contains no targets" would leak into background statistics.
    int n_targets = 0;
    if (cfg.class_list.size() == 1) {
        n_targets = n_objects;
    } else if (n_objects > 0 && rng.bernoulli(0.5)) {
        n_targets = int(rng.uniform_int(1, std::min(2, n_objects)));
    }
    std::vector<char> is_target(size_t(n_objects), 0);
    for (int i = 0; i < n_targets; ++i) is_target[size_t(i)] = 1;
    for (int i = n_objects - 1; i > 0; --i) {
        int j = int(rng.uniform_int(0, i));
        std::swap(is_target[size_t(i)], is_target[size_t(j)]);
    }
    std::vector<detail::ObjectSpec> objects;
    objects.reserve(size_t(n_objects));
    for (int i = 0; i < n_objects; ++i)
        objects.push_back(detail::draw_object_spec(rng, cfg, is_target[size_t(i)]));

    // shadows go under everything, and under both renders, so that a removed
    // target leaves its shadow behind as visible evidence in the scene
    for (const auto& o : objects)
        if (o.class_id == cfg.target_class) {
            detail::render_shadow(s.image, o);
            detail::render_shadow(gt, o);
        }
    // occasionally a bare shadow with nothing above it, so shadows are part
    // of ordinary background statistics (including in target-free scenes)
    // rather than a perfect proxy for target presence
    if (rng.bernoulli(0.35)) {
        detail::ObjectSpec decoy = detail::draw_object_spec(rng, cfg, true);
        detail::render_shadow(s.image, decoy);
        detail::render_shadow(gt, decoy);
    }
    uint16_t instance_id = 0;
    for (const auto& o : objects) {
        ++instance_id;
        detail::rasterize(s.image, &s.seg, &s.inst, instance_id, o);
        s.inst.instance_class[instance_id] = o.class_id;
        if (o.class_id != cfg.target_class) detail::rasterize(gt, nullptr, nullptr, 0, o);
    }
    // instances fully painted over by later objects are dropped from the table
    std::vector<bool> visible(size_t(instance_id) + 1, false);
    for (uint16_t v : s.inst.data) visible[v] = true;
    for (uint16_t i = 1; i <= instance_id; ++i)
        if (!visible[i]) s.inst.instance_class.erase(i);

    // gt_removal: identical to the image except at target pixels, which show
    // the target-free render (occluded distractor parts reappear there)
    Image paired = s.image;
    for (size_t i = 0; i < s.seg.data.size(); ++i)
        if (s.seg.data[i] == cfg.target_class)
            for (int c = 0; c < 3; ++c) paired.data[i * 3 + c] = gt.data[i * 3 + c];
    s.gt_removal = std::move(paired);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth-%06d", index);
    s.id = buf;
    s.source = "synth";
    return s;
}

inline DatasetManifest generate_dataset(const SynthConfig& cfg, int n,
                                        const std::filesystem::path& out_dir,
                                        const std::string& split = "train") {
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    std::filesystem::create_directories(out_dir);
    DatasetManifest m;
    m.split = split;
    m.base_dir = out_dir;
    for (uint16_t i = 0; i < cfg.class_list.size(); ++i)
        m.class_table[uint16_t(i + 1)] = cfg.class_list[i];
    for (int i = 0; i < n; ++i) {
        SceneSample s = generate_scene(cfg, i);
        ManifestEntry e;
        e.id = s.id;
        e.image_path = s.id + "_img.png";
        e.seg_path = s.id + "_seg.png";
        e.inst_path = s.id + "_inst.png";
        e.gt_path = s.id + "_gt.png";
        e.split = split;
        e.source = s.source;
        e.instance_class = s.inst.instance_class;
        save_image_png(s.image, (out_dir / e.image_path).string());
        save_seg_png(s.seg, (out_dir / e.seg_path).string());
        save_u16_png(s.inst.data, s.inst.height, s.inst.width, (out_dir / e.inst_path).string());
        save_image_png(*s.gt_removal, (out_dir / *e.gt_path).string());
        m.entries.push_back(std::move(e));
    }
    save_manifest(m, out_dir / "manifest.jsonl");
    return m;
}

} // namespace tdi::synth
