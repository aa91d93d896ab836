#pragma once

// Layout templates: validation, composition of partial templates, the
// built-in library and constrained sampling.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "doc_model.hpp"

namespace docforge {

inline constexpr double kMinRegionSize = 0.02;
inline constexpr double kOverlapEpsilon = 0.01;
inline constexpr double kGeomTolerance = 1e-9;

/// Axis-aligned box in page fractions.
struct FracBox {
    double x = 0, y = 0, w = 0, h = 0;
    double right() const { return x + w; }
    double bottom() const { return y + h; }
    bool operator==(const FracBox&) const = default;
};

inline double iou(const FracBox& a, const FracBox& b) {
    const double ix = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0 ? inter / uni : 0.0;
}

/// Pixel box of a fractional box on a page; both edges are rounded so
/// adjacent regions share borders exactly.
inline PixelBox to_pixels(const FracBox& b, int page_w, int page_h) {
    const auto x0 = static_cast<int>(std::llround(b.x * page_w));
    const auto y0 = static_cast<int>(std::llround(b.y * page_h));
    const auto x1 = static_cast<int>(std::llround(b.right() * page_w));
    const auto y1 = static_cast<int>(std::llround(b.bottom() * page_h));
    return {x0, y0, x1 - x0, y1 - y0};
}

struct Region {
    FracBox bbox;
    KindSet kinds;
    int order_index = 0;
    bool operator==(const Region&) const = default;
};

enum class TemplateProvenance { Authored, Composed };

struct LayoutTemplate {
    std::string id;
    double aspect = 1754.0 / 1240.0;  // height / width
    std::vector<Region> regions;
    int columns = 1;
    TemplateProvenance provenance = TemplateProvenance::Authored;
    bool operator==(const LayoutTemplate&) const = default;

    /// Region indices sorted by reading order.
    std::vector<std::size_t> reading_order() const {
        std::vector<std::size_t> idx(regions.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return regions[a].order_index < regions[b].order_index; });
        return idx;
    }
};

/// Two regions share a column band when their horizontal overlap exceeds
/// half the narrower width.
inline bool same_column_band(const FracBox& a, const FracBox& b) {
    const double overlap = std::min(a.right(), b.right()) - std::max(a.x, b.x);
    return overlap > 0.5 * std::min(a.w, b.w);
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
    std::string rule;  // bounds | min-size | kinds | overlap | permutation | reading-order | aspect
    std::vector<std::size_t> regions;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool valid() const { return violations.empty(); }
    bool has(std::string_view rule) const {
        return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.rule == rule; });
    }
    std::string summary() const {
        std::string out;
        for (const auto& v : violations) {
            if (!out.empty()) out += "; ";
            out += v.rule + ": " + v.message;
        }
        return out;
    }
};

inline ValidationReport validate_template(const LayoutTemplate& t) {
    ValidationReport rep;
    auto add = [&](std::string rule, std::vector<std::size_t> idx, std::string msg) {
        rep.violations.push_back({std::move(rule), std::move(idx), std::move(msg)});
    };
    if (!(t.aspect > 0) || !std::isfinite(t.aspect)) add("aspect", {}, "aspect ratio must be positive");
    const auto n = t.regions.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& b = t.regions[i].bbox;
        const auto tag = "region " + std::to_string(i);
        if (!(b.x >= -kGeomTolerance && b.y >= -kGeomTolerance && b.right() <= 1 + kGeomTolerance &&
              b.bottom() <= 1 + kGeomTolerance))
            add("bounds", {i}, tag + " extends outside the page");
        if (!(b.w >= kMinRegionSize - kGeomTolerance && b.h >= kMinRegionSize - kGeomTolerance))
            add("min-size", {i}, tag + " is smaller than " + std::to_string(kMinRegionSize));
        if (t.regions[i].kinds.empty()) add("kinds", {i}, tag + " allows no element kinds");
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (iou(t.regions[i].bbox, t.regions[j].bbox) > kOverlapEpsilon)
                add("overlap", {i, j}, "regions " + std::to_string(i) + " and " + std::to_string(j) + " overlap");
    std::vector<std::vector<std::size_t>> holders(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int o = t.regions[i].order_index;
        if (o < 0 || static_cast<std::size_t>(o) >= n)
            add("permutation", {i}, "region " + std::to_string(i) + " has order_index " + std::to_string(o) + " outside 0.." +
                                        std::to_string(n == 0 ? 0 : n - 1));
        else
            holders[static_cast<std::size_t>(o)].push_back(i);
    }
    for (std::size_t o = 0; o < n; ++o)
        if (holders[o].size() > 1) {
            std::string list;
            for (auto i : holders[o]) list += (list.empty() ? "" : ", ") + std::to_string(i);
            add("permutation", holders[o], "order_index " + std::to_string(o) + " is duplicated by regions " + list);
        }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const auto& a = t.regions[i];
            const auto& b = t.regions[j];
            if (i == j || a.order_index >= b.order_index || !same_column_band(a.bbox, b.bbox)) continue;
            if (a.bbox.y > b.bbox.y + kGeomTolerance)
                add("reading-order", {i, j},
                    "region " + std::to_string(i) + " precedes region " + std::to_string(j) + " but starts below it in the same column");
        }
    return rep;
}

// ---------------------------------------------------------------------------
// JSON

inline std::string_view provenance_name(TemplateProvenance p) { return p == TemplateProvenance::Authored ? "authored" : "composed"; }

inline void to_json(json& j, const KindSet& k) {
    j = json::array();
    for (auto kind : k.to_vector()) j.push_back(kind_name(kind));
}

inline void from_json(const json& j, KindSet& k) {
    k = {};
    for (const auto& s : j) k.insert(kind_or_throw(s.get<std::string>()));
}

inline void to_json(json& j, const LayoutTemplate& t) {
    j = json{{"id", t.id}, {"aspect", t.aspect}, {"columns", t.columns}, {"provenance", provenance_name(t.provenance)}, {"regions", json::array()}};
    for (const auto& r : t.regions)
        j["regions"].push_back({{"bbox", {r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h}}, {"kinds", r.kinds}, {"order", r.order_index}});
}

inline void from_json(const json& j, LayoutTemplate& t) {
    t = {};
    t.id = j.at("id").get<std::string>();
    t.aspect = j.value("aspect", 1754.0 / 1240.0);
    t.columns = j.value("columns", 1);
    t.provenance = j.value("provenance", std::string("authored")) == "composed" ? TemplateProvenance::Composed : TemplateProvenance::Authored;
    for (const auto& r : j.at("regions")) {
        const auto& b = r.at("bbox");
        if (!b.is_array() || b.size() != 4) fail(ErrorCode::Input, "template " + t.id + ": region bbox must be [x,y,w,h]");
        t.regions.push_back({{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()},
                             r.at("kinds").get<KindSet>(),
                             r.at("order").get<int>()});
    }
}

// ---------------------------------------------------------------------------
// Composition

enum class ComposeMode { TopBottom, LeftRight };

struct ComposeOptions {
    double split = 0.5;         // fraction of the page given to the first band
    double gutter = 0.02;       // gap between bands
    double split_jitter = 0.0;  // seeded offset added to split, uniform in [-j, j]
};

/// Maps `a` into the first band and `b` into the second. Reading order of a
/// precedes b and is otherwise preserved.
inline LayoutTemplate compose_partial_templates(const LayoutTemplate& a, const LayoutTemplate& b, ComposeMode mode, std::uint64_t seed,
                                                const ComposeOptions& opt = {}) {
    for (const auto* t : {&a, &b}) {
        const auto rep = validate_template(*t);
        if (!rep.valid()) fail(ErrorCode::Validation, "cannot compose invalid template " + t->id + ": " + rep.summary());
    }
    double split = opt.split;
    if (opt.split_jitter > 0) {
        Rng rng(derive_seed(seed, "compose-split"));
        split += rng.uniform(-opt.split_jitter, opt.split_jitter);
    }
    const double first_len = split - opt.gutter / 2;
    const double second_start = split + opt.gutter / 2;
    const double second_len = 1.0 - second_start;
    if (first_len <= 0 || second_len <= 0) fail(ErrorCode::Validation, "split and gutter leave an empty band");

    LayoutTemplate out;
    out.aspect = a.aspect;
    out.provenance = TemplateProvenance::Composed;
    out.columns = mode == ComposeMode::TopBottom ? std::max(a.columns, b.columns) : std::min(3, a.columns + b.columns);
    auto map = [&](const LayoutTemplate& src, double start, double len, int order_offset) {
        for (std::size_t i = 0; i < src.regions.size(); ++i) {
            Region r = src.regions[i];
            if (mode == ComposeMode::TopBottom) {
                r.bbox.y = start + r.bbox.y * len;
                r.bbox.h *= len;
            } else {
                r.bbox.x = start + r.bbox.x * len;
                r.bbox.w *= len;
            }
            if (r.bbox.w < kMinRegionSize - kGeomTolerance || r.bbox.h < kMinRegionSize - kGeomTolerance)
                fail(ErrorCode::Validation, "composition shrinks region " + std::to_string(i) + " of template " + src.id +
                                                " below the minimum size " + std::to_string(kMinRegionSize));
            r.order_index += order_offset;
            out.regions.push_back(r);
        }
    };
    map(a, 0.0, first_len, 0);
    map(b, second_start, second_len, static_cast<int>(a.regions.size()));
    out.id = "c-" + hex64(fnv1a64(a.id + "|" + b.id + "|" + (mode == ComposeMode::TopBottom ? "tb" : "lr") + "|" + std::to_string(seed) +
                                  "|" + json(out).dump()));
    return out;
}

// ---------------------------------------------------------------------------
// Library

class TemplateLibrary {
public:
    /// Inserts a template; invalid templates and duplicate ids are rejected.
    void add(LayoutTemplate t) {
        const auto rep = validate_template(t);
        if (!rep.valid()) fail(ErrorCode::Validation, "template " + t.id + " is invalid: " + rep.summary());
        if (std::any_of(templates_.begin(), templates_.end(), [&](const LayoutTemplate& x) { return x.id == t.id; }))
            fail(ErrorCode::Validation, "duplicate template id " + t.id);
        templates_.push_back(std::move(t));
    }

    const std::vector<LayoutTemplate>& templates() const { return templates_; }
    std::size_t size() const { return templates_.size(); }
    bool empty() const { return templates_.empty(); }

    std::uint64_t content_hash() const {
        std::uint64_t h = kFnvOffset;
        for (const auto& t : templates_) h = fnv1a64(json(t).dump() + "\n", h);
        return h;
    }

    /// Loads every *.json file below `dir` (recursively, in path order). A
    /// file holds one template object or an array of them.
    static TemplateLibrary load_dir(const std::filesystem::path& dir) {
        namespace fs = std::filesystem;
        if (!fs::is_directory(dir)) fail(ErrorCode::Input, "template library " + dir.string() + " is not a directory");
        std::vector<fs::path> files;
        for (const auto& entry : fs::recursive_directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        TemplateLibrary lib;
        for (const auto& f : files) {
            std::ifstream in(f);
            if (!in) fail(ErrorCode::Io, "cannot read " + f.string());
            try {
                const auto j = json::parse(in);
                if (j.is_array()) {
                    for (const auto& t : j) lib.add(t.get<LayoutTemplate>());
                } else {
                    lib.add(j.get<LayoutTemplate>());
                }
            } catch (const json::exception& ex) {
                fail(ErrorCode::Input, f.string() + ": " + ex.what());
            }
        }
        return lib;
    }

    void save(const std::filesystem::path& file) const {
        std::ofstream out(file);
        if (!out) fail(ErrorCode::Io, "cannot write " + file.string());
        out << json(templates_).dump(1) << "\n";
    }

private:
    std::vector<LayoutTemplate> templates_;
};

namespace detail {

// Built-in templates are parametric families laid out on a page with fixed
// margins. Each family is a list of columns; a column is a list of relative
// heights with the kinds allowed in each slot.

struct Slot {
    double weight;
    KindSet kinds;
};

inline const KindSet kText{ElementKind::Paragraph};
inline const KindSet kHeader{ElementKind::Paragraph, ElementKind::Title};
inline const KindSet kTableSlot{ElementKind::Table};
inline const KindSet kFormulaSlot{ElementKind::Formula};
inline const KindSet kFigureSlot{ElementKind::Figure};
inline const KindSet kAnySlot{ElementKind::Paragraph, ElementKind::Table, ElementKind::Formula, ElementKind::Figure};
inline const KindSet kTextFormula{ElementKind::Paragraph, ElementKind::Formula};
inline const KindSet kTableFigure{ElementKind::Table, ElementKind::Figure};

inline constexpr double kMarginX = 0.06;
inline constexpr double kMarginY = 0.05;
inline constexpr double kGap = 0.015;

/// Stacks slots vertically within [x, x+w] x [y, y+h], appending regions
/// with consecutive order indices.
inline void stack(std::vector<Region>& out, const std::vector<Slot>& slots, double x, double w, double y, double h) {
    double total = 0;
    for (const auto& s : slots) total += s.weight;
    const double usable = h - kGap * static_cast<double>(slots.size() - 1);
    double cy = y;
    for (const auto& s : slots) {
        const double sh = usable * s.weight / total;
        out.push_back({{x, cy, w, sh}, s.kinds, static_cast<int>(out.size())});
        cy += sh + kGap;
    }
}

inline KindSet pick_kinds(Rng& rng, bool wide) {
    static const std::vector<KindSet> narrow = {kText, kText, kText, kTextFormula, kFormulaSlot, kFigureSlot, kAnySlot, kTableSlot};
    static const std::vector<KindSet> broad = {kText, kText, kTableSlot, kTableSlot, kTableFigure, kFigureSlot, kAnySlot, kTextFormula};
    return rng.pick(wide ? broad : narrow);
}

inline std::vector<Slot> random_slots(Rng& rng, int count, bool wide) {
    std::vector<Slot> out;
    for (int i = 0; i < count; ++i) out.push_back({rng.uniform(0.6, 1.8), pick_kinds(rng, wide)});
    return out;
}

/// One authored template: optional full-width header, 1 to 3 columns and
/// an optional full-width footer band.
inline LayoutTemplate authored(int index) {
    Rng rng(derive_seed(0x4c41594f5554ULL, "authored", static_cast<std::uint64_t>(index)));
    LayoutTemplate t;
    t.id = "a-" + std::to_string(index);
    t.columns = 1 + index % 3;
    const bool header = rng.bernoulli(0.6);
    const bool footer = rng.bernoulli(0.3);
    const double inner_w = 1.0 - 2 * kMarginX;
    double y = kMarginY;
    double bottom = 1.0 - kMarginY;
    if (header) {
        const double hh = rng.uniform(0.04, 0.09);
        t.regions.push_back({{kMarginX, y, inner_w, hh}, kHeader, 0});
        y += hh + kGap;
    }
    std::vector<Slot> footer_slots;
    double footer_h = 0;
    if (footer) {
        footer_h = rng.uniform(0.12, 0.22);
        bottom -= footer_h + kGap;
        footer_slots.push_back({1.0, rng.bernoulli(0.5) ? kTableSlot : kTableFigure});
    }
    const int cols = t.columns;
    const double col_w = (inner_w - kGap * (cols - 1)) / cols;
    for (int c = 0; c < cols; ++c) {
        const int max_slots = cols == 1 ? 6 : cols == 2 ? 5 : 4;
        const int n = static_cast<int>(rng.uniform_int(1, max_slots));
        stack(t.regions, random_slots(rng, n, cols == 1), kMarginX + c * (col_w + kGap), col_w, y, bottom - y);
    }
    if (footer) stack(t.regions, footer_slots, kMarginX, inner_w, bottom + kGap, footer_h);
    return t;
}

}  // namespace detail

inline constexpr int kBuiltinTemplateCount = 200;

/// The built-in library: `count` parametric authored templates.
inline TemplateLibrary builtin_library(int count = kBuiltinTemplateCount) {
    TemplateLibrary lib;
    for (int i = 0; i < count; ++i) lib.add(detail::authored(i));
    return lib;
}

/// Grows a library with composed templates until it holds `target`
/// templates (or no progress is possible). Each new template combines two
/// seeded picks; compositions that fail validation or exceed `max_regions`
/// are skipped.
inline void extend_library(TemplateLibrary& lib, std::size_t target, std::uint64_t seed, std::size_t max_regions = 16) {
    if (lib.empty()) return;
    const std::size_t base = lib.size();
    std::size_t attempts = 0;
    for (std::uint64_t k = 0; lib.size() < target && attempts < 20 * target; ++k, ++attempts) {
        Rng rng(derive_seed(seed, "extend", k));
        const auto& a = lib.templates()[rng.index(base)];
        const auto& b = lib.templates()[rng.index(base)];
        if (a.regions.size() + b.regions.size() > max_regions) continue;
        const auto mode = rng.bernoulli(0.5) ? ComposeMode::TopBottom : ComposeMode::LeftRight;
        try {
            auto t = compose_partial_templates(a, b, mode, rng.next(), {0.5, 0.02, 0.1});
            if (std::any_of(lib.templates().begin(), lib.templates().end(), [&](const LayoutTemplate& x) { return x.id == t.id; })) continue;
            lib.add(std::move(t));
        } catch (const Error&) {
        }
    }
}

// ---------------------------------------------------------------------------
// Sampling

struct SampleConstraints {
    std::optional<std::size_t> min_regions;
    std::optional<std::size_t> max_regions;
    KindSet required_kinds;
};

inline KindSet kinds_offered(const LayoutTemplate& t) {
    KindSet k;
    for (const auto& r : t.regions)
        for (auto kind : r.kinds.to_vector()) k.insert(kind);
    return k;
}

inline bool satisfies(const LayoutTemplate& t, const SampleConstraints& c) {
    if (c.min_regions && t.regions.size() < *c.min_regions) return false;
    if (c.max_regions && t.regions.size() > *c.max_regions) return false;
    return kinds_offered(t).contains_all(c.required_kinds);
}

/// Uniform choice among matching templates, deterministic in (library,
/// constraints, seed).
inline const LayoutTemplate& sample_template(const TemplateLibrary& lib, const SampleConstraints& c, std::uint64_t seed) {
    if (lib.empty()) fail(ErrorCode::Validation, "template library is empty");
    std::vector<std::size_t> matches;
    for (std::size_t i = 0; i < lib.size(); ++i)
        if (satisfies(lib.templates()[i], c)) matches.push_back(i);
    if (matches.empty()) {
        std::size_t most = 0, fewest = SIZE_MAX;
        KindSet all;
        for (const auto& t : lib.templates()) {
            most = std::max(most, t.regions.size());
            fewest = std::min(fewest, t.regions.size());
            for (auto k : kinds_offered(t).to_vector()) all.insert(k);
        }
        std::vector<std::string> why;
        if (c.min_regions && *c.min_regions > most)
            why.push_back("min_regions=" + std::to_string(*c.min_regions) + " (largest template has " + std::to_string(most) + ")");
        if (c.max_regions && *c.max_regions < fewest)
            why.push_back("max_regions=" + std::to_string(*c.max_regions) + " (smallest template has " + std::to_string(fewest) + ")");
        for (auto k : c.required_kinds.to_vector())
            if (!all.contains(k)) why.push_back("required kind " + std::string(kind_name(k)) + " (offered by no template)");
        if (why.empty()) why.push_back("combination of min_regions, max_regions and required kinds");
        fail(ErrorCode::Validation, "no template satisfies " + join(why, ", "));
    }
    Rng rng(derive_seed(seed, "sample-template"));
    return lib.templates()[matches[rng.index(matches.size())]];
}

}  // namespace docforge
