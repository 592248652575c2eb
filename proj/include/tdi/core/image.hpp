#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tdi {

// RGB image, values in [0,1], row-major, interleaved channels.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> data; // height*width*3

    Image() = default;
    Image(int h, int w, float fill = 0.f) : height(h), width(w), data(size_t(h) * w * 3, fill) {}

    float& at(int y, int x, int c) { return data[(size_t(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const { return data[(size_t(y) * width + x) * 3 + c]; }
    size_t pixels() const { return size_t(height) * width; }

    bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
};

// Binary mask, 1 = known pixel, 0 = hole / removal target.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> data;

    Mask() = default;
    Mask(int h, int w, uint8_t fill = 1) : height(h), width(w), data(size_t(h) * w, fill) {}

    uint8_t& at(int y, int x) { return data[size_t(y) * width + x]; }
    uint8_t at(int y, int x) const { return data[size_t(y) * width + x]; }
    size_t pixels() const { return size_t(height) * width; }

    size_t zero_count() const {
        size_t n = 0;
        for (uint8_t v : data) n += (v == 0);
        return n;
    }

    Mask complement() const {
        Mask m(height, width);
        for (size_t i = 0; i < data.size(); ++i) m.data[i] = data[i] ? 0 : 1;
        return m;
    }
};

struct SegmentationMap {
    int height = 0;
    int width = 0;
    std::vector<uint16_t> data; // class ids, 0 = background

    SegmentationMap() = default;
    SegmentationMap(int h, int w) : height(h), width(w), data(size_t(h) * w, 0) {}

    uint16_t& at(int y, int x) { return data[size_t(y) * width + x]; }
    uint16_t at(int y, int x) const { return data[size_t(y) * width + x]; }
    size_t pixels() const { return size_t(height) * width; }
};

struct InstanceMap {
    int height = 0;
    int width = 0;
    std::vector<uint16_t> data;                  // instance ids, 0 = none
    std::map<uint16_t, uint16_t> instance_class; // instance id -> class id

    InstanceMap() = default;
    InstanceMap(int h, int w) : height(h), width(w), data(size_t(h) * w, 0) {}

    uint16_t& at(int y, int x) { return data[size_t(y) * width + x]; }
    uint16_t at(int y, int x) const { return data[size_t(y) * width + x]; }
};

struct SceneSample {
    Image image;
    SegmentationMap seg;
    InstanceMap inst;
    std::optional<Image> gt_removal;
    std::string id;
    std::string source;
};

// Composited output: original pixels where mask=1, generated pixels where mask=0.
inline Image composite(const Image& original, const Image& raw_output, const Mask& mask) {
    if (!original.same_shape(raw_output) || original.height != mask.height ||
        original.width != mask.width) {
        throw std::invalid_argument("composite: shape mismatch");
    }
    Image out = raw_output;
    for (size_t i = 0; i < mask.data.size(); ++i) {
        if (mask.data[i]) {
            out.data[i * 3 + 0] = original.data[i * 3 + 0];
            out.data[i * 3 + 1] = original.data[i * 3 + 1];
            out.data[i * 3 + 2] = original.data[i * 3 + 2];
        }
    }
    return out;
}

// Fraction of the image that is hole (mask = 0).
inline double mask_coverage(const Mask& mask) {
    return double(mask.zero_count()) / double(mask.pixels());
}

// Fraction of one instance's pixels covered by the hole.
inline double instance_occlusion(const InstanceMap& inst, int instance_id, const Mask& mask) {
    if (inst.instance_class.find(uint16_t(instance_id)) == inst.instance_class.end())
        throw std::invalid_argument("instance_occlusion: unknown instance id");
    size_t total = 0, occluded = 0;
    for (size_t i = 0; i < inst.data.size(); ++i) {
        if (inst.data[i] == instance_id) {
            ++total;
            occluded += (mask.data[i] == 0);
        }
    }
    if (total == 0) return 0.0;
    return double(occluded) / double(total);
}

inline double class_pixel_fraction(const SegmentationMap& seg, int class_id) {
    size_t n = 0;
    for (uint16_t v : seg.data) n += (v == class_id);
    return double(n) / double(seg.pixels());
}

inline size_t class_pixel_count(const SegmentationMap& seg, int class_id) {
    size_t n = 0;
    for (uint16_t v : seg.data) n += (v == class_id);
    return n;
}

} // namespace tdi
