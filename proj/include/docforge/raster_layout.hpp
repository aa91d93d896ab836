#pragma once

// Integer layout and drawing primitives. Every element is laid out once in
// base units (one font pixel per unit); drawing at glyph scale g multiplies
// every coordinate by g, so rendered size is exactly g times the base size.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "detail/font5x7.hpp"
#include "doc_model.hpp"

namespace docforge::raster {

inline constexpr int kCharAdvance = 6;
inline constexpr int kGlyphW = 5;
inline constexpr int kGlyphH = 7;
inline constexpr int kLineHeight = 10;
inline constexpr int kTextPad = 2;
inline constexpr int kCellPad = 3;
inline constexpr int kMinBase = 8;
inline constexpr int kMaxGlyphScale = 8;

inline constexpr std::uint8_t kInk = 0;
inline constexpr std::uint8_t kHatch = 150;
inline constexpr std::uint8_t kPaper = 255;

struct GlyphItem {
    char32_t cp;
    int x;  // top-left of the glyph, base units
    int y;
};

struct Rect {
    int x, y, w, h;
};

struct ElementLayout {
    int width = kMinBase;
    int height = kMinBase;
    std::vector<GlyphItem> glyphs;
    std::vector<Rect> rules;
    bool figure = false;
};

// ---------------------------------------------------------------------------
// Text

inline void layout_line(ElementLayout& out, std::u32string_view text, int x, int y) {
    for (char32_t c : text) {
        if (!is_space(c)) out.glyphs.push_back({c, x, y});
        x += kCharAdvance;
    }
}

/// Greedy word wrap at `cols` codepoints; words longer than a line are split.
inline std::vector<std::u32string> wrap_text(std::u32string_view text, int cols) {
    std::vector<std::u32string> out;
    std::u32string line;
    std::size_t i = 0;
    const auto ucols = static_cast<std::size_t>(std::max(1, cols));
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j])) ++j;
        if (j == i) break;
        std::u32string_view word = text.substr(i, j - i);
        while (!word.empty()) {
            const std::size_t need = line.empty() ? word.size() : line.size() + 1 + word.size();
            if (need <= ucols) {
                if (!line.empty()) line.push_back(U' ');
                line += word;
                word = {};
            } else if (line.empty()) {
                line = word.substr(0, ucols);
                word.remove_prefix(ucols);
                out.push_back(std::move(line));
                line.clear();
            } else {
                out.push_back(std::move(line));
                line.clear();
            }
        }
        i = j;
    }
    if (!line.empty()) out.push_back(std::move(line));
    return out;
}

/// Lines laid out top to bottom. `wrap_cols` > 0 rewraps every line.
inline ElementLayout layout_lines(const std::vector<std::u32string>& lines, int wrap_cols = 0) {
    std::vector<std::u32string> shown;
    if (wrap_cols > 0) {
        for (const auto& l : lines)
            for (auto& w : wrap_text(l, wrap_cols)) shown.push_back(std::move(w));
    } else {
        shown = lines;
    }
    ElementLayout out;
    std::size_t widest = 0;
    for (std::size_t i = 0; i < shown.size(); ++i) {
        widest = std::max(widest, shown[i].size());
        layout_line(out, shown[i], kTextPad, kTextPad + static_cast<int>(i) * kLineHeight);
    }
    out.width = std::max(kMinBase, 2 * kTextPad + kCharAdvance * static_cast<int>(widest));
    out.height = std::max(kMinBase, 2 * kTextPad + kLineHeight * static_cast<int>(shown.size()));
    return out;
}

// ---------------------------------------------------------------------------
// Tables

/// Column boundaries and row boundaries (rule positions) of a laid-out table.
struct TableGeometry {
    Grid grid;
    std::vector<int> col_x;  // cols + 1 rule positions
    std::vector<int> row_y;  // rows + 1 rule positions
};

inline TableGeometry table_geometry(const Table& t) {
    TableGeometry geo;
    expand_grid(t, geo.grid);  // tolerate malformed input; overlaps just draw over each other
    const auto& g = geo.grid;
    std::vector<int> colw(static_cast<std::size_t>(g.cols), 2 * kCellPad + kCharAdvance);
    std::vector<const GridCell*> spanning;
    for (const auto& c : g.cells) {
        const int need = 2 * kCellPad + kCharAdvance * static_cast<int>(display_text(c.node->text).size());
        if (c.colspan == 1) {
            auto& w = colw[static_cast<std::size_t>(c.col)];
            w = std::max(w, need);
        } else {
            spanning.push_back(&c);
        }
    }
    std::stable_sort(spanning.begin(), spanning.end(),
                     [](const GridCell* a, const GridCell* b) { return a->colspan < b->colspan; });
    for (const auto* c : spanning) {
        const int need = 2 * kCellPad + kCharAdvance * static_cast<int>(display_text(c->node->text).size());
        int avail = c->colspan - 1;
        for (int k = 0; k < c->colspan; ++k) avail += colw[static_cast<std::size_t>(c->col + k)];
        if (need > avail) colw[static_cast<std::size_t>(c->col + c->colspan - 1)] += need - avail;
    }
    geo.col_x.push_back(0);
    for (int w : colw) geo.col_x.push_back(geo.col_x.back() + 1 + w);
    const int rowh = 2 * kCellPad + kGlyphH + 1;
    geo.row_y.push_back(0);
    for (int r = 0; r < g.rows; ++r) geo.row_y.push_back(geo.row_y.back() + 1 + rowh);
    return geo;
}

inline ElementLayout layout_table(const Table& t) {
    ElementLayout out;
    const auto geo = table_geometry(t);
    if (geo.grid.rows == 0 || geo.grid.cols == 0) return out;
    for (const auto& c : geo.grid.cells) {
        const int x0 = geo.col_x[static_cast<std::size_t>(c.col)];
        const int x1 = geo.col_x[static_cast<std::size_t>(c.col + c.colspan)];
        const int y0 = geo.row_y[static_cast<std::size_t>(c.row)];
        const int y1 = geo.row_y[static_cast<std::size_t>(c.row + c.rowspan)];
        out.rules.push_back({x0, y0, x1 - x0 + 1, 1});
        out.rules.push_back({x0, y1, x1 - x0 + 1, 1});
        out.rules.push_back({x0, y0, 1, y1 - y0 + 1});
        out.rules.push_back({x1, y0, 1, y1 - y0 + 1});
        layout_line(out, display_text(c.node->text), x0 + 1 + kCellPad, y0 + 1 + kCellPad);
    }
    out.width = geo.col_x.back() + 1;
    out.height = geo.row_y.back() + 1;
    return out;
}

// ---------------------------------------------------------------------------
// Formulas: boxes relative to (left, baseline); y grows downward.

namespace detail {

struct Box {
    int width = 0;
    int ascent = 0;
    int descent = 0;
    std::vector<GlyphItem> glyphs;
    std::vector<Rect> rules;

    void place(const Box& child, int dx, int dy) {
        for (const auto& g : child.glyphs) glyphs.push_back({g.cp, g.x + dx, g.y + dy});
        for (const auto& r : child.rules) rules.push_back({r.x + dx, r.y + dy, r.w, r.h});
        ascent = std::max(ascent, child.ascent - dy);
        descent = std::max(descent, child.descent + dy);
        width = std::max(width, dx + child.width);
    }
};

class FormulaLayout {
public:
    explicit FormulaLayout(const std::vector<std::string>& toks) : toks_(toks) {}

    Box run() {
        Box b;
        while (i_ < toks_.size()) {
            if (toks_[i_] == "}") {  // stray close brace
                ++i_;
                continue;
            }
            append(b, item());
        }
        return b;
    }

private:
    static constexpr int kGap = 2;
    const std::vector<std::string>& toks_;
    std::size_t i_ = 0;

    static void append(Box& seq, const Box& next) {
        const int dx = seq.width == 0 ? 0 : seq.width + kGap;
        seq.place(next, dx, 0);
    }

    static Box atom(std::string_view tok) {
        Box b;
        const auto text = to_u32(formula::visible_text(tok));
        int x = 0;
        for (char32_t c : text) {
            b.glyphs.push_back({c, x, -kGlyphH});
            x += kCharAdvance;
        }
        b.width = std::max(0, x - 1);
        b.ascent = kGlyphH;
        b.descent = 1;
        return b;
    }

    Box group() {
        ++i_;  // '{'
        Box b;
        while (i_ < toks_.size() && toks_[i_] != "}") append(b, item());
        if (i_ < toks_.size()) ++i_;
        return b;
    }

    Box arg() {
        if (i_ >= toks_.size()) return Box{};
        if (toks_[i_] == "{") return group();
        if (toks_[i_] == "}" || formula::is_layout_token(toks_[i_])) return Box{};
        return atom(toks_[i_++]);
    }

    Box item() {
        Box base;
        const auto& t = toks_[i_];
        if (t == "{") {
            base = group();
        } else if (t == "\\frac") {
            ++i_;
            const Box num = arg();
            const Box den = arg();
            const int w = std::max(num.width, den.width) + 4;
            const int rule_y = -3;
            base.width = w;
            base.rules.push_back({0, rule_y, w, 1});
            base.ascent = 3;
            base.descent = 0;
            base.place(num, (w - num.width) / 2, rule_y - 2 - num.descent);
            base.place(den, (w - den.width) / 2, rule_y + 2 + den.ascent);
        } else if (t == "\\sqrt") {
            ++i_;
            const Box body = arg();
            const int top = -std::max(body.ascent, kGlyphH) - 2;
            const int bottom = std::max(body.descent, 1);
            base.rules.push_back({1, -3, 1, 3 + bottom});
            base.rules.push_back({3, top, 1, bottom - top});
            base.rules.push_back({3, top, body.width + 4, 1});
            base.place(body, 6, 0);
            base.width = std::max(base.width, 6 + body.width + 1);
            base.ascent = std::max(base.ascent, -top);
            base.descent = std::max(base.descent, bottom);
        } else if (t == "^" || t == "_") {
            // script without a base: attaches to an empty box
        } else {
            base = atom(toks_[i_++]);
        }
        return scripts(std::move(base));
    }

    Box scripts(Box base) {
        // placed in token order so the glyph sequence follows the markup
        std::vector<std::pair<Box, bool>> scripts;
        while (i_ < toks_.size() && (toks_[i_] == "^" || toks_[i_] == "_")) {
            const bool is_sup = toks_[i_] == "^";
            ++i_;
            scripts.emplace_back(arg(), is_sup);
        }
        const int x = base.width + 1;
        for (auto& [box, is_sup] : scripts) base.place(box, x, is_sup ? -4 : 3);
        return base;
    }
};

}  // namespace detail

inline ElementLayout layout_formula(const std::vector<std::string>& tokens) {
    const auto box = detail::FormulaLayout(tokens).run();
    ElementLayout out;
    const int oy = kTextPad + box.ascent;
    for (const auto& g : box.glyphs) out.glyphs.push_back({g.cp, g.x + kTextPad, g.y + oy});
    for (const auto& r : box.rules) out.rules.push_back({r.x + kTextPad, r.y + oy, r.w, r.h});
    out.width = std::max(kMinBase, box.width + 2 * kTextPad);
    out.height = std::max(kMinBase, box.ascent + box.descent + 2 * kTextPad);
    return out;
}

// ---------------------------------------------------------------------------

/// Base-unit layout of a markup. Figures carry no content; their size comes
/// from the element, so the returned layout only sets `figure`.
inline ElementLayout layout_markup(const Markup& m, int wrap_cols = 0) {
    return std::visit(
        [&](const auto& x) -> ElementLayout {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Table>) {
                return layout_table(x);
            } else if constexpr (std::is_same_v<T, Formula>) {
                return layout_formula(x.tokens);
            } else if constexpr (std::is_same_v<T, Paragraph>) {
                std::vector<std::u32string> lines;
                for (const auto& l : x.lines) lines.push_back(display_text(l));
                return layout_lines(lines, wrap_cols);
            } else if constexpr (std::is_same_v<T, Title>) {
                return layout_lines({display_text(x.text)}, wrap_cols);
            } else {
                ElementLayout f;
                f.figure = true;
                return f;
            }
        },
        m);
}

// ---------------------------------------------------------------------------
// Canvas

struct GlyphLogEntry {
    char32_t cp = 0;
    PixelBox box;
    std::string block_id;
};

struct Canvas {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;
    std::vector<GlyphLogEntry> glyph_log;

    Canvas() = default;
    Canvas(int w, int h, int ch = 1, std::uint8_t fill = kPaper)
        : width(w), height(h), channels(ch), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(ch), fill) {
        if (w < 0 || h < 0 || (ch != 1 && ch != 3)) fail(ErrorCode::Validation, "invalid canvas geometry");
    }

    std::uint8_t* at(int x, int y) {
        return pixels.data() + (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * static_cast<std::size_t>(channels);
    }
    const std::uint8_t* at(int x, int y) const {
        return pixels.data() + (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * static_cast<std::size_t>(channels);
    }
    PixelBox bounds() const { return {0, 0, width, height}; }
};

inline void fill_rect(Canvas& c, PixelBox r, std::uint8_t value) {
    const int x0 = std::max(0, r.x), y0 = std::max(0, r.y);
    const int x1 = std::min(c.width, r.right()), y1 = std::min(c.height, r.bottom());
    if (x0 >= x1) return;
    for (int y = y0; y < y1; ++y) {
        auto* p = c.at(x0, y);
        std::fill(p, p + static_cast<std::ptrdiff_t>(x1 - x0) * c.channels, value);
    }
}

inline void draw_glyph(Canvas& c, char32_t cp, int x, int y, int scale, std::uint8_t ink = kInk) {
    const auto cols = docforge::detail::glyph_columns(cp);
    for (int col = 0; col < kGlyphW; ++col) {
        const auto bits = cols[static_cast<std::size_t>(col)];
        for (int row = 0; row < kGlyphH; ++row)
            if (bits & (1u << row)) fill_rect(c, {x + col * scale, y + row * scale, scale, scale}, ink);
    }
}

/// Frame plus diagonal hatching filling the box.
inline void draw_figure(Canvas& c, PixelBox box, int scale) {
    const int t = std::max(1, scale);
    const int period = 8 * t;
    const int x0 = std::max(box.x + t, 0), x1 = std::min(box.right() - t, c.width);
    const int y0 = std::max(box.y + t, 0), y1 = std::min(box.bottom() - t, c.height);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            const int d = ((x - box.x) - (y - box.y)) % period;
            if ((d < 0 ? d + period : d) < t) std::fill_n(c.at(x, y), c.channels, kHatch);
        }
    fill_rect(c, {box.x, box.y, box.w, t}, kInk);
    fill_rect(c, {box.x, box.bottom() - t, box.w, t}, kInk);
    fill_rect(c, {box.x, box.y, t, box.h}, kInk);
    fill_rect(c, {box.right() - t, box.y, t, box.h}, kInk);
}

/// Draws a base layout at glyph scale `g` with its origin at (ox, oy) and
/// logs every glyph.
inline void draw_layout(Canvas& c, const ElementLayout& lay, int ox, int oy, int g, const std::string& block_id) {
    for (const auto& r : lay.rules) fill_rect(c, {ox + r.x * g, oy + r.y * g, r.w * g, r.h * g}, kInk);
    for (const auto& gl : lay.glyphs) {
        const int x = ox + gl.x * g, y = oy + gl.y * g;
        draw_glyph(c, gl.cp, x, y, g);
        c.glyph_log.push_back({gl.cp, {x, y, kGlyphW * g, kGlyphH * g}, block_id});
    }
}

}  // namespace docforge::raster
