#pragma once

// Page composition: fills template regions with repository elements.

#include <optional>
#include <string>
#include <vector>

#include "elements.hpp"
#include "layout.hpp"
#include "page.hpp"
#include "raster.hpp"

namespace docforge {

/// What to do when no candidate element fits a region.
enum class UnfitPolicy { Skip, Reject };

struct FillPolicy {
    int page_width = 1240;
    int page_height = 1754;
    double empty_region_probability = 0.0;
    double min_scale = 0.5;  // relative to intrinsic size
    double max_scale = 1.5;
    bool allow_truncation = true;
    int max_candidates = 8;
    UnfitPolicy unfit = UnfitPolicy::Skip;
    KindSet enabled_kinds{ElementKind::Table, ElementKind::Formula, ElementKind::Paragraph, ElementKind::Figure};
};

/// Glyph-scale bounds for a policy. Placement scale s corresponds to glyph
/// scale 2s, so scales are multiples of 0.5.
inline std::pair<int, int> glyph_scale_bounds(const FillPolicy& p) {
    const int lo = std::max(1, static_cast<int>(std::ceil(2 * p.min_scale - 1e-9)));
    const int hi = std::min(raster::kMaxGlyphScale, static_cast<int>(std::floor(2 * p.max_scale + 1e-9)));
    return {lo, hi};
}

inline std::optional<std::string> validate_fill_policy(const FillPolicy& p) {
    if (p.page_width < 16 || p.page_height < 16) return "page size must be at least 16x16";
    if (!(p.empty_region_probability >= 0 && p.empty_region_probability <= 1)) return "empty_region_probability must lie in [0,1]";
    if (!(p.min_scale > 0 && p.max_scale <= 4 && p.min_scale <= p.max_scale)) return "scales must satisfy 0 < min_scale <= max_scale <= 4";
    const auto [lo, hi] = glyph_scale_bounds(p);
    if (lo > hi) return "no half-integer scale lies in [min_scale, max_scale]";
    if (p.max_candidates < 1) return "max_candidates must be positive";
    if (p.enabled_kinds.empty()) return "no element kinds enabled";
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Truncation

/// The first `keep` rows of a table; rowspans crossing the cut are clipped
/// and sections left without rows are dropped.
inline Table truncate_table_rows(const Table& t, std::size_t keep) {
    Table out;
    out.root.tag = t.root.tag;
    std::size_t row = 0;
    auto take_rows = [&](const std::vector<TableNode>& rows, std::vector<TableNode>& dst) {
        for (const auto& tr : rows) {
            if (row >= keep) return;
            TableNode copy = tr;
            for (auto& td : copy.children) td.rowspan = std::min(td.rowspan, static_cast<int>(keep - row));
            dst.push_back(std::move(copy));
            ++row;
        }
    };
    for (const auto& c : t.root.children) {
        if (row >= keep) break;
        if (c.tag == "tr") {
            take_rows({c}, out.root.children);
        } else {
            TableNode section{c.tag, 1, 1, {}, {}};
            take_rows(c.children, section.children);
            if (!section.children.empty()) out.root.children.push_back(std::move(section));
        }
    }
    return out;
}

inline Paragraph truncate_paragraph_lines(const Paragraph& p, std::size_t keep) {
    Paragraph out;
    out.lines.assign(p.lines.begin(), p.lines.begin() + static_cast<std::ptrdiff_t>(std::min(keep, p.lines.size())));
    return out;
}

namespace detail {

struct Fit {
    Markup markup;
    int base_w, base_h, g;
    OverflowPolicy policy;
};

/// Largest prefix (rows or lines) whose layout fits w x h at glyph scale 1.
inline std::optional<Fit> truncate_to_fit(const Element& e, int w, int h) {
    if (e.kind == ElementKind::Table) {
        const auto& t = std::get<Table>(e.markup);
        const auto total = table_rows(t).size();
        if (total < 2) return std::nullopt;
        for (std::size_t keep = total - 1; keep >= 1; --keep) {
            Table cut = truncate_table_rows(t, keep);
            const auto lay = raster::layout_table(cut);
            if (lay.width <= w && lay.height <= h) return Fit{std::move(cut), lay.width, lay.height, 1, OverflowPolicy::TruncateRows};
            if (lay.width > w) return std::nullopt;  // narrower prefixes are rare; stop early
        }
    } else if (e.kind == ElementKind::Paragraph) {
        const auto& p = std::get<Paragraph>(e.markup);
        if (p.lines.size() < 2) return std::nullopt;
        for (std::size_t keep = p.lines.size() - 1; keep >= 1; --keep) {
            Paragraph cut = truncate_paragraph_lines(p, keep);
            const auto lay = raster::layout_markup(cut);
            if (lay.width <= w && lay.height <= h) return Fit{std::move(cut), lay.width, lay.height, 1, OverflowPolicy::TruncateLines};
        }
    }
    return std::nullopt;
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Fills the template's regions in reading order. Each region tries up to
/// `max_candidates` seeded element picks: scale to fit (largest glyph scale
/// within bounds), else truncate whole rows/lines at the minimum scale,
/// else the next candidate. Ground-truth blocks follow the reading order of
/// the filled regions.
inline ComposedPage compose_page(const LayoutTemplate& tmpl, const Repository& repo, const FillPolicy& policy, std::uint64_t seed,
                                 std::string page_id = {}) {
    if (auto p = validate_fill_policy(policy)) fail(ErrorCode::Validation, "fill policy: " + *p);
    const auto rep = validate_template(tmpl);
    if (!rep.valid()) fail(ErrorCode::Validation, "template " + tmpl.id + " is invalid: " + rep.summary());
    const auto [gmin, gmax] = glyph_scale_bounds(policy);

    ComposedPage page;
    page.page_id = page_id.empty() ? "page-" + hex64(seed) : std::move(page_id);
    page.template_id = tmpl.id;
    page.width = policy.page_width;
    page.height = policy.page_height;
    page.seed = seed;

    for (const auto ri : tmpl.reading_order()) {
        const auto& region = tmpl.regions[ri];
        Rng rng(derive_seed(seed, "region", ri));
        if (policy.empty_region_probability > 0 && rng.bernoulli(policy.empty_region_probability)) {
            ++page.skipped_regions;
            continue;
        }
        std::vector<std::size_t> pool;
        for (auto k : region.kinds.to_vector())
            if (policy.enabled_kinds.contains(k)) {
                const auto& idx = repo.indices_of(k);
                pool.insert(pool.end(), idx.begin(), idx.end());
            }
        const auto area = to_pixels(region.bbox, page.width, page.height);
        std::optional<std::pair<const Element*, detail::Fit>> chosen;
        for (int attempt = 0; attempt < policy.max_candidates && !pool.empty() && !chosen; ++attempt) {
            const auto& e = repo.elements()[pool[rng.index(pool.size())]];
            const auto base = base_size(e);
            const int g = fitting_glyph_scale(base.w, base.h, area.w, area.h, gmax);
            if (g >= gmin) {
                chosen.emplace(&e, detail::Fit{e.markup, base.w, base.h, g, OverflowPolicy::FitScale});
            } else if (policy.allow_truncation && gmin == 1 && base.w <= area.w) {
                if (auto fit = detail::truncate_to_fit(e, area.w, area.h)) chosen.emplace(&e, std::move(*fit));
            }
        }
        if (!chosen) {
            if (policy.unfit == UnfitPolicy::Reject)
                fail(ErrorCode::Validation, "no eligible element fits region " + std::to_string(ri) + " (order " +
                                                std::to_string(region.order_index) + ") of template " + tmpl.id);
            ++page.skipped_regions;
            continue;
        }
        auto& [elem, fit] = *chosen;
        Placement p;
        p.element_id = elem->id;
        p.region_index = ri;
        p.glyph_scale = fit.g;
        p.scale = fit.g / 2.0;
        p.policy = fit.policy;
        p.kind = elem->kind;
        p.lang = elem->lang;
        p.base_w = fit.base_w;
        p.base_h = fit.base_h;
        const int w = fit.base_w * fit.g, h = fit.base_h * fit.g;
        const bool centered = elem->kind == ElementKind::Formula || elem->kind == ElementKind::Figure;
        p.bbox = {area.x + (centered ? (area.w - w) / 2 : 0), area.y, w, h};
        p.markup = std::move(fit.markup);
        p.block_id = "b" + std::to_string(page.placements.size());
        page.placements.push_back(std::move(p));
    }

    std::vector<Markup> blocks;
    blocks.reserve(page.placements.size());
    for (std::size_t i = 0; i < page.placements.size(); ++i) {
        const auto& p = page.placements[i];
        blocks.push_back(p.markup);
        page.ground_truth.sidecar.push_back({p.block_id, p.kind, p.bbox, static_cast<int>(i), p.element_id});
    }
    page.ground_truth.stream = serialize_ground_truth(blocks);
    return page;
}

}  // namespace docforge
