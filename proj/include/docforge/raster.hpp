#pragma once

// Element and page rendering on top of the integer layout primitives.

#include <string>

#include "elements.hpp"
#include "page.hpp"
#include "raster_layout.hpp"

namespace docforge {

using raster::Canvas;

/// Largest glyph scale at which a base-size layout fits into w x h, or 0.
inline int fitting_glyph_scale(int base_w, int base_h, int w, int h, int max_scale = raster::kMaxGlyphScale) {
    if (base_w <= 0 || base_h <= 0) return 0;
    return std::min({w / base_w, h / base_h, max_scale});
}

/// Draws markup at glyph scale g with its top-left corner at (x, y).
/// Figures need their base size since they have no content to measure.
inline void draw_markup(Canvas& c, const Markup& m, int x, int y, int g, int figure_base_w, int figure_base_h, const std::string& block_id) {
    if (kind_of(m) == ElementKind::Figure) {
        raster::draw_figure(c, {x, y, figure_base_w * g, figure_base_h * g}, g);
        return;
    }
    raster::draw_layout(c, raster::layout_markup(m), x, y, g, block_id);
}

/// Renders an element into a white patch the size of `target`; content is
/// drawn from the top-left corner at the largest integer glyph scale that
/// fits. Glyph-log boxes are patch-relative.
inline Canvas render_element(const Element& e, PixelBox target, const std::string& block_id = {}) {
    const auto base = base_size(e);
    const int g = fitting_glyph_scale(base.w, base.h, target.w, target.h);
    if (g < 1)
        fail(ErrorCode::Validation, "target " + std::to_string(target.w) + "x" + std::to_string(target.h) + " is smaller than the " +
                                        std::string(kind_name(e.kind)) + " element's minimum " + std::to_string(base.w) + "x" +
                                        std::to_string(base.h));
    Canvas c(target.w, target.h);
    draw_markup(c, e.markup, 0, 0, g, base.w, base.h, block_id.empty() ? e.id : block_id);
    return c;
}

/// Element crop at its intrinsic size (glyph scale 2).
inline Canvas render_element(const Element& e) { return render_element(e, {0, 0, e.intrinsic.w, e.intrinsic.h}); }

inline void draw_placement(Canvas& c, const Placement& p) {
    draw_markup(c, p.markup, p.bbox.x, p.bbox.y, p.glyph_scale, p.base_w, p.base_h, p.block_id);
}

/// White page with every placement drawn into its bbox.
inline Canvas render_page(const ComposedPage& page) {
    Canvas c(page.width, page.height);
    for (const auto& p : page.placements) {
        if (!c.bounds().contains(p.bbox))
            fail(ErrorCode::Validation, "placement " + p.block_id + " lies outside the page");
        draw_placement(c, p);
    }
    return c;
}

inline json glyph_log_json(const Canvas& c) {
    json out = json::array();
    for (const auto& g : c.glyph_log) {
        std::string ch;
        append_utf8(ch, g.cp);
        out.push_back({{"char", ch}, {"bbox", g.box}, {"block_id", g.block_id}});
    }
    return out;
}

}  // namespace docforge
