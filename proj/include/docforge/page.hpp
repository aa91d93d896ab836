#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "doc_model.hpp"

namespace docforge {

enum class OverflowPolicy { FitScale, TruncateRows, TruncateLines };

inline std::string_view overflow_name(OverflowPolicy p) {
    switch (p) {
        case OverflowPolicy::FitScale: return "fit-scale";
        case OverflowPolicy::TruncateRows: return "truncate-rows";
        case OverflowPolicy::TruncateLines: return "truncate-lines";
    }
    return "";
}

/// An element placed on a page. `markup` is what was actually placed (after
/// truncation) and `base` its raster size at glyph scale 1; the final bbox
/// is exactly `glyph_scale` times `base`.
struct Placement {
    std::string element_id;
    std::size_t region_index = 0;
    double scale = 1.0;  // relative to the element's intrinsic size, glyph_scale / 2
    int glyph_scale = 2;
    PixelBox bbox;
    OverflowPolicy policy = OverflowPolicy::FitScale;
    ElementKind kind = ElementKind::Paragraph;
    std::string lang;
    Markup markup;
    int base_w = 0;
    int base_h = 0;
    std::string block_id;
};

struct ComposedPage {
    std::string page_id;
    std::string template_id;
    int width = 1240;
    int height = 1754;
    std::vector<Placement> placements;  // in reading order
    GroundTruth ground_truth;
    std::uint64_t seed = 0;
    std::size_t skipped_regions = 0;

    std::vector<std::string> languages() const {
        std::vector<std::string> out;
        for (const auto& p : placements)
            if (std::find(out.begin(), out.end(), p.lang) == out.end()) out.push_back(p.lang);
        std::sort(out.begin(), out.end());
        return out;
    }
};

inline void to_json(json& j, const Placement& p) {
    j = json{{"block_id", p.block_id},
             {"element_id", p.element_id},
             {"region_index", p.region_index},
             {"scale", p.scale},
             {"bbox", p.bbox},
             {"policy", overflow_name(p.policy)},
             {"kind", kind_name(p.kind)},
             {"lang", p.lang}};
}

}  // namespace docforge
