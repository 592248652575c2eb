#pragma once

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdi/core/image.hpp"

namespace tdi {

namespace detail {

struct FileCloser {
    void operator()(FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw std::runtime_error("cannot open file: " + path);
    return f;
}

// Raw PNG read into 8- or 16-bit rows. channels: 1 or 3.
inline void read_png(const std::string& path, int channels, int bit_depth,
                     int& h, int& w, std::vector<uint16_t>& out) {
    FilePtr f = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png read error: " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    w = int(png_get_image_width(png, info));
    h = int(png_get_image_height(png, info));
    int depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (channels == 3 && (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA))
        png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (bit_depth == 8 && depth == 16) png_set_strip_16(png);
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    const int bytes_per_sample = bit_depth / 8;
    std::vector<png_byte> row(size_t(w) * channels * bytes_per_sample);
    out.assign(size_t(h) * w * channels, 0);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (size_t i = 0; i < size_t(w) * channels; ++i) {
            if (bit_depth == 16)
                out[size_t(y) * w * channels + i] = uint16_t((row[2 * i] << 8) | row[2 * i + 1]);
            else
                out[size_t(y) * w * channels + i] = row[i];
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
}

inline void write_png(const std::string& path, int channels, int bit_depth,
                      int h, int w, const uint16_t* data) {
    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png write error: " + path);
    }
    png_init_io(png, f.get());
    int color = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(png, info, w, h, bit_depth, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const int bytes_per_sample = bit_depth / 8;
    std::vector<png_byte> row(size_t(w) * channels * bytes_per_sample);
    for (int y = 0; y < h; ++y) {
        for (size_t i = 0; i < size_t(w) * channels; ++i) {
            uint16_t v = data[size_t(y) * w * channels + i];
            if (bit_depth == 16) {
                row[2 * i] = png_byte(v >> 8);
                row[2 * i + 1] = png_byte(v & 0xff);
            } else {
                row[i] = png_byte(v & 0xff);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace detail

// Images are stored as 8-bit RGB PNG; in memory they are [0,1] floats.
inline Image load_image_png(const std::string& path) {
    int h, w;
    std::vector<uint16_t> raw;
    detail::read_png(path, 3, 8, h, w, raw);
    Image img(h, w);
    for (size_t i = 0; i < raw.size(); ++i) img.data[i] = float(raw[i]) / 255.f;
    return img;
}

inline void save_image_png(const Image& img, const std::string& path) {
    std::vector<uint16_t> raw(img.data.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        float v = img.data[i];
        if (v < 0.f) v = 0.f;
        if (v > 1.f) v = 1.f;
        raw[i] = uint16_t(v * 255.f + 0.5f);
    }
    detail::write_png(path, 3, 8, img.height, img.width, raw.data());
}

// Segmentation / instance maps: 16-bit single-channel PNG.
inline SegmentationMap load_seg_png(const std::string& path) {
    SegmentationMap seg;
    detail::read_png(path, 1, 16, seg.height, seg.width, seg.data);
    return seg;
}

inline void save_seg_png(const SegmentationMap& seg, const std::string& path) {
    detail::write_png(path, 1, 16, seg.height, seg.width, seg.data.data());
}

inline void save_u16_png(const std::vector<uint16_t>& data, int h, int w, const std::string& path) {
    detail::write_png(path, 1, 16, h, w, data.data());
}

// Masks: 8-bit single-channel PNG, 255 = known, 0 = hole.
inline Mask load_mask_png(const std::string& path) {
    int h, w;
    std::vector<uint16_t> raw;
    detail::read_png(path, 1, 8, h, w, raw);
    Mask m(h, w);
    for (size_t i = 0; i < raw.size(); ++i) m.data[i] = raw[i] >= 128 ? 1 : 0;
    return m;
}

inline void save_mask_png(const Mask& m, const std::string& path) {
    std::vector<uint16_t> raw(m.data.size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = m.data[i] ? 255 : 0;
    detail::write_png(path, 1, 8, m.height, m.width, raw.data());
}

} // namespace tdi
