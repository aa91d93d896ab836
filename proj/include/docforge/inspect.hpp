#pragma once

// Overlay rendering for generated pages: block boxes with their order
// indices drawn over the page image.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "augment.hpp"
#include "dataset.hpp"
#include "png_io.hpp"

namespace docforge {

struct InspectResult {
    std::string page_id;
    std::vector<SidecarEntry> boxes;  // as drawn, remapped for augmented pages
    std::string stream;
    std::filesystem::path overlay_path;
    std::filesystem::path stream_path;
};

namespace detail {

using Rgb = std::array<std::uint8_t, 3>;

inline Canvas to_rgb(const Canvas& in) {
    if (in.channels == 3) return in;
    Canvas out(in.width, in.height, 3);
    for (std::size_t i = 0; i < in.pixels.size(); ++i)
        for (int c = 0; c < 3; ++c) out.pixels[i * 3 + static_cast<std::size_t>(c)] = in.pixels[i];
    return out;
}

inline void put_rgb(Canvas& c, int x, int y, Rgb col) {
    if (x < 0 || y < 0 || x >= c.width || y >= c.height) return;
    auto* p = c.at(x, y);
    p[0] = col[0];
    p[1] = col[1];
    p[2] = col[2];
}

inline void rect_rgb(Canvas& c, PixelBox r, Rgb col, int thickness) {
    for (int t = 0; t < thickness; ++t) {
        for (int x = r.x; x < r.right(); ++x) {
            put_rgb(c, x, r.y + t, col);
            put_rgb(c, x, r.bottom() - 1 - t, col);
        }
        for (int y = r.y; y < r.bottom(); ++y) {
            put_rgb(c, r.x + t, y, col);
            put_rgb(c, r.right() - 1 - t, y, col);
        }
    }
}

inline void label_rgb(Canvas& c, const std::string& text, int x, int y, int scale, Rgb ink, Rgb bg) {
    const int w = static_cast<int>(text.size()) * raster::kCharAdvance * scale + 2 * scale;
    const int h = (raster::kGlyphH + 2) * scale;
    for (int yy = y; yy < y + h; ++yy)
        for (int xx = x; xx < x + w; ++xx) put_rgb(c, xx, yy, bg);
    int cx = x + scale;
    for (char ch : text) {
        const auto cols = glyph_columns(static_cast<char32_t>(ch));
        for (int col = 0; col < raster::kGlyphW; ++col)
            for (int row = 0; row < raster::kGlyphH; ++row)
                if (cols[static_cast<std::size_t>(col)] & (1u << row))
                    for (int dy = 0; dy < scale; ++dy)
                        for (int dx = 0; dx < scale; ++dx) put_rgb(c, cx + col * scale + dx, y + scale + row * scale + dy, ink);
        cx += raster::kCharAdvance * scale;
    }
}

}  // namespace detail

/// RGB copy of `page` with each box outlined and labelled by its order index.
inline Canvas draw_overlay(const Canvas& page, const std::vector<SidecarEntry>& boxes) {
    auto out = detail::to_rgb(page);
    static constexpr std::array<detail::Rgb, 5> kColors = {{{220, 40, 40}, {40, 90, 220}, {30, 150, 60}, {200, 120, 20}, {150, 50, 180}}};
    for (const auto& b : boxes) {
        const auto col = kColors[static_cast<std::size_t>(b.kind) % kColors.size()];
        detail::rect_rgb(out, b.bbox, col, 2);
        detail::label_rgb(out, std::to_string(b.order_index), b.bbox.x, b.bbox.y, 2, {255, 255, 255}, col);
    }
    return out;
}

/// Reads a page's sidecar (and image, when present) from a generated
/// dataset directory and writes `<id>.overlay.png` and `<id>.gt.txt` into
/// `out_dir`.
inline InspectResult inspect_page(const std::filesystem::path& dataset_dir, const std::string& page_id, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    const auto sidecar_path = dataset_dir / "sidecars" / (page_id + ".json");
    if (!fs::exists(sidecar_path)) fail(ErrorCode::Input, "unknown page id '" + page_id + "' (no " + sidecar_path.string() + ")");
    json sj;
    {
        std::ifstream in(sidecar_path);
        try {
            sj = json::parse(in);
        } catch (const json::exception& ex) {
            fail(ErrorCode::Input, sidecar_path.string() + ": " + ex.what());
        }
    }
    InspectResult r;
    r.page_id = page_id;
    r.stream = sj.at("ground_truth").get<std::string>();
    const bool augmented = sj.contains("augmentation");
    r.boxes = sj.at(augmented ? "remapped_blocks" : "blocks").get<std::vector<SidecarEntry>>();

    Canvas base;
    const auto image_path = dataset_dir / "pages" / (page_id + ".png");
    if (fs::exists(image_path)) {
        base = read_png(image_path);
    } else if (augmented) {
        const auto rec = record_from_json(sj["augmentation"]);
        base = Canvas(rec.out_w, rec.out_h);
    } else {
        base = Canvas(sj.at("page_size").at(0).get<int>(), sj.at("page_size").at(1).get<int>());
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    r.overlay_path = out_dir / (page_id + ".overlay.png");
    r.stream_path = out_dir / (page_id + ".gt.txt");
    write_png(r.overlay_path, draw_overlay(base, r.boxes));
    detail::write_text(r.stream_path, r.stream + "\n");
    return r;
}

}  // namespace docforge
