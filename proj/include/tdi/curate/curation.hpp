#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdi/core/image.hpp"
#include "tdi/core/manifest.hpp"
#include "tdi/core/png_io.hpp"
#include "tdi/core/rng.hpp"

namespace tdi::curate {

struct CurationRule {
    double select_lo = 0.05;
    double select_hi = 0.40;
    double restore_cover_lo = 0.40;
    double restore_cover_hi = 0.60;
    double irregular_mask_prob = 0.5;
};

// Restorer data: images where the target class occupies [select_lo, select_hi]
// of the pixels, bounds inclusive.
inline DatasetManifest select_restorer_images(const DatasetManifest& m, uint16_t target_class,
                                              const CurationRule& rule = {}) {
    DatasetManifest out;
    out.class_table = m.class_table;
    out.split = m.split;
    out.base_dir = m.base_dir;
    for (const auto& e : m.entries) {
        SegmentationMap seg = load_seg_png(m.resolve(e.seg_path).string());
        double f = class_pixel_fraction(seg, target_class);
        if (f >= rule.select_lo && f <= rule.select_hi) out.entries.push_back(e);
    }
    return out;
}

// Remover data: images with strictly zero target-class pixels.
inline DatasetManifest select_remover_images(const DatasetManifest& m, uint16_t target_class) {
    DatasetManifest out;
    out.class_table = m.class_table;
    out.split = m.split;
    out.base_dir = m.base_dir;
    for (const auto& e : m.entries) {
        SegmentationMap seg = load_seg_png(m.resolve(e.seg_path).string());
        if (class_pixel_count(seg, target_class) == 0) out.entries.push_back(e);
    }
    return out;
}

struct RestorerMaskResult {
    Mask mask;
    std::vector<uint16_t> covered; // instances masked within the band
    std::vector<uint16_t> skipped; // instances too small to hit the band
};

// Mask that covers each listed instance by restore_cover_lo..restore_cover_hi
// of its pixels. Realized as a random half-plane cut through the instance:
// pixels are ordered by projection onto a random direction and the first
// round(f*n) of them are masked, which lands the occlusion in the band by
// construction. Instances below 5 px cannot hit the band and are skipped.
inline RestorerMaskResult gen_restorer_mask(const InstanceMap& inst,
                                            const std::vector<uint16_t>& target_instances,
                                            const CurationRule& rule, uint64_t seed) {
    if (target_instances.empty())
        throw std::invalid_argument("gen_restorer_mask: no target instances");
    RestorerMaskResult r;
    r.mask = Mask(inst.height, inst.width, 1);
    Rng rng(seed);
    for (uint16_t iid : target_instances) {
        if (inst.instance_class.find(iid) == inst.instance_class.end())
            throw std::invalid_argument("gen_restorer_mask: unknown instance id");
        std::vector<size_t> px;
        for (size_t i = 0; i < inst.data.size(); ++i)
            if (inst.data[i] == iid) px.push_back(i);
        double angle = rng.uniform(0, 2 * M_PI);
        double f = rng.uniform(rule.restore_cover_lo, rule.restore_cover_hi);
        const size_t n = px.size();
        if (n < 5) {
            r.skipped.push_back(iid);
            continue;
        }
        long k = std::lround(f * double(n));
        long k_lo = long(std::ceil(rule.restore_cover_lo * double(n) - 1e-9));
        long k_hi = long(std::floor(rule.restore_cover_hi * double(n) + 1e-9));
        k = std::clamp(k, k_lo, k_hi);
        double dx = std::cos(angle), dy = std::sin(angle);
        std::vector<std::pair<double, size_t>> proj(n);
        for (size_t i = 0; i < n; ++i) {
            int y = int(px[i] / size_t(inst.width)), x = int(px[i] % size_t(inst.width));
            proj[i] = {x * dx + y * dy, px[i]};
        }
        std::sort(proj.begin(), proj.end());
        for (long i = 0; i < k; ++i) r.mask.data[proj[size_t(i)].second] = 0;
        r.covered.push_back(iid);
    }
    return r;
}

struct MaskBank {
    std::vector<Mask> masks;
    std::vector<std::string> source_ids;
    uint16_t target_class = 0;
};

// One class-shaped mask per image: the hole is the union of all target-class
// pixels of that image.
inline MaskBank build_mask_bank(const DatasetManifest& m, uint16_t target_class) {
    MaskBank bank;
    bank.target_class = target_class;
    for (const auto& e : m.entries) {
        SegmentationMap seg = load_seg_png(m.resolve(e.seg_path).string());
        Mask mask(seg.height, seg.width, 1);
        size_t zeros = 0;
        for (size_t i = 0; i < seg.data.size(); ++i)
            if (seg.data[i] == target_class) {
                mask.data[i] = 0;
                ++zeros;
            }
        if (zeros == 0) continue;
        bank.masks.push_back(std::move(mask));
        bank.source_ids.push_back(e.id);
    }
    return bank;
}

struct StrokeConfig {
    int min_strokes = 1, max_strokes = 4;
    int min_rects = 0, max_rects = 2;
    double min_thickness = 3, max_thickness = 10;
    double cover_lo = 0.05, cover_hi = 0.45;
};

namespace detail {

inline void stamp_disc(Mask& m, double cx, double cy, double radius) {
    int x0 = std::max(0, int(cx - radius - 1)), x1 = std::min(m.width - 1, int(cx + radius + 1));
    int y0 = std::max(0, int(cy - radius - 1)), y1 = std::min(m.height - 1, int(cy + radius + 1));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= radius * radius) m.at(y, x) = 0;
        }
}

inline Mask irregular_once(int size, Rng& rng, const StrokeConfig& cfg) {
    Mask m(size, size, 1);
    int n_strokes = int(rng.uniform_int(cfg.min_strokes, cfg.max_strokes));
    for (int s = 0; s < n_strokes; ++s) {
        double x = rng.uniform(0, size), y = rng.uniform(0, size);
        double thickness = rng.uniform(cfg.min_thickness, cfg.max_thickness);
        int n_seg = int(rng.uniform_int(3, 8));
        double angle = rng.uniform(0, 2 * M_PI);
        for (int seg = 0; seg < n_seg; ++seg) {
            angle += rng.uniform(-1.0, 1.0);
            double len = rng.uniform(0.1 * size, 0.3 * size);
            double nx = x + len * std::cos(angle), ny = y + len * std::sin(angle);
            int steps = std::max(1, int(len));
            for (int t = 0; t <= steps; ++t) {
                double u = double(t) / steps;
                stamp_disc(m, x + (nx - x) * u, y + (ny - y) * u, thickness / 2);
            }
            x = nx;
            y = ny;
        }
    }
    int n_rects = int(rng.uniform_int(cfg.min_rects, cfg.max_rects));
    for (int r = 0; r < n_rects; ++r) {
        int w = int(rng.uniform(0.1 * size, 0.35 * size));
        int h = int(rng.uniform(0.1 * size, 0.35 * size));
        int x0 = int(rng.uniform_int(0, size - 1 - w));
        int y0 = int(rng.uniform_int(0, size - 1 - h));
        for (int y = y0; y <= y0 + h; ++y)
            for (int x = x0; x <= x0 + w; ++x) m.at(y, x) = 0;
    }
    return m;
}

} // namespace detail

// Free-form mask of thick polyline strokes plus rectangles; coverage kept in
// [cover_lo, cover_hi] by resampling (a centered square is the last resort).
inline Mask gen_irregular_mask(int size, uint64_t seed, const StrokeConfig& cfg = {}) {
    if (size < 32) throw std::invalid_argument("gen_irregular_mask: size must be >= 32");
    Rng rng(seed);
    for (int attempt = 0; attempt < 50; ++attempt) {
        Mask m = detail::irregular_once(size, rng, cfg);
        double cov = mask_coverage(m);
        if (cov >= cfg.cover_lo && cov <= cfg.cover_hi) return m;
    }
    Mask m(size, size, 1);
    int half = int(std::sqrt(0.2) * size / 2);
    for (int y = size / 2 - half; y < size / 2 + half; ++y)
        for (int x = size / 2 - half; x < size / 2 + half; ++x) m.at(y, x) = 0;
    return m;
}

enum class MaskKind { class_shaped, irregular };

struct TrainingMask {
    Mask mask;
    MaskKind kind;
};

// Remover-phase mask source: class-shaped bank masks mixed with irregular
// masks at irregular_mask_prob.
inline TrainingMask sample_training_mask(const MaskBank& bank, int size, const CurationRule& rule,
                                         uint64_t seed) {
    if (bank.masks.empty()) throw std::invalid_argument("sample_training_mask: empty bank");
    Rng rng(seed);
    if (rng.bernoulli(rule.irregular_mask_prob))
        return {gen_irregular_mask(size, rng.next_u64()), MaskKind::irregular};
    const Mask& src = bank.masks[size_t(rng.uniform_int(0, int(bank.masks.size()) - 1))];
    if (src.height == size && src.width == size) return {src, MaskKind::class_shaped};
    Mask out(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            int sy = std::min(src.height - 1, y * src.height / size);
            int sx = std::min(src.width - 1, x * src.width / size);
            out.at(y, x) = src.at(sy, sx) ? 1 : 0; // nearest neighbor, re-binarized
        }
    return {out, MaskKind::class_shaped};
}

// Mask bank persistence: a directory of mask PNGs plus a JSONL manifest.
inline void save_mask_bank(const MaskBank& bank, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "bank.jsonl");
    nlohmann::json header;
    header["type"] = "tdi-maskbank";
    header["version"] = 1;
    header["target_class"] = bank.target_class;
    out << header.dump() << "\n";
    for (size_t i = 0; i < bank.masks.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "mask_%05zu.png", i);
        save_mask_png(bank.masks[i], (dir / buf).string());
        nlohmann::json j;
        j["mask"] = buf;
        j["source"] = bank.source_ids[i];
        out << j.dump() << "\n";
    }
}

inline MaskBank load_mask_bank(const std::filesystem::path& dir) {
    std::ifstream in(dir / "bank.jsonl");
    if (!in)
        throw ManifestError(ManifestErrorKind::missing_file,
                            "mask bank not found: " + dir.string());
    MaskBank bank;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (!have_header) {
            if (!j.contains("type") || j["type"] != "tdi-maskbank")
                throw ManifestError(ManifestErrorKind::malformed_record,
                                    "missing mask bank header in " + dir.string());
            bank.target_class = j["target_class"].get<uint16_t>();
            have_header = true;
            continue;
        }
        bank.masks.push_back(load_mask_png((dir / j["mask"].get<std::string>()).string()));
        bank.source_ids.push_back(j["source"].get<std::string>());
    }
    return bank;
}

} // namespace tdi::curate
