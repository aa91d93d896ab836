#pragma once

// 8-bit grayscale / RGB PNG encoding via libpng. No timestamps or text
// chunks are written, so equal canvases give byte-identical files.

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "raster_layout.hpp"

namespace docforge {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

[[noreturn]] inline void png_error_fn(png_structp png, png_const_charp msg) {
    auto* what = static_cast<std::string*>(png_get_error_ptr(png));
    if (what) *what = msg;
    png_longjmp(png, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

inline void png_write_vec(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + len);
}

inline void png_flush_noop(png_structp) {}

}  // namespace detail

/// Encodes a canvas to PNG bytes. `level` is the zlib compression level.
inline std::vector<std::uint8_t> encode_png(const raster::Canvas& c, int level = 1) {
    std::vector<std::uint8_t> out;
    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
    if (!png) fail(ErrorCode::Internal, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(ErrorCode::Internal, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorCode::Internal, "PNG encoding failed: " + err);
    }
    png_set_write_fn(png, &out, detail::png_write_vec, detail::png_flush_noop);
    png_set_compression_level(png, level);
    png_set_filter(png, 0, PNG_FILTER_NONE | PNG_FILTER_SUB | PNG_FILTER_UP);
    png_set_IHDR(png, info, static_cast<png_uint_32>(c.width), static_cast<png_uint_32>(c.height), 8,
                 c.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < c.height; ++y) png_write_row(png, const_cast<png_bytep>(c.at(0, y)));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

inline void write_png(const std::filesystem::path& path, const raster::Canvas& c, int level = 1) {
    const auto bytes = encode_png(c, level);
    std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.string().c_str(), "wb"));
    if (!f) fail(ErrorCode::Io, "cannot write " + path.string());
    if (std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size()) fail(ErrorCode::Io, "short write to " + path.string());
}

/// Reads an 8-bit grayscale or RGB PNG (palette/alpha/16-bit inputs are
/// converted).
inline raster::Canvas read_png(const std::filesystem::path& path) {
    std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.string().c_str(), "rb"));
    if (!f) fail(ErrorCode::Input, "cannot read " + path.string());
    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
    if (!png) fail(ErrorCode::Internal, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(ErrorCode::Internal, "png_create_info_struct failed");
    }
    raster::Canvas c;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCode::Input, path.string() + ": invalid PNG: " + err);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    const auto color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if ((color & PNG_COLOR_MASK_COLOR) == 0 && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const int channels = png_get_channels(png, info);
    c = raster::Canvas(static_cast<int>(png_get_image_width(png, info)), static_cast<int>(png_get_image_height(png, info)),
                       channels == 3 ? 3 : 1);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCode::Input, path.string() + ": unsupported channel count " + std::to_string(channels));
    }
    for (int y = 0; y < c.height; ++y) png_read_row(png, c.at(0, y), nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return c;
}

}  // namespace docforge
