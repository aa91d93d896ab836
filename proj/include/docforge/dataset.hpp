#pragma once

// Dataset emission: stage-1 element records, stage-2 page records and the
// end-to-end generation pipeline with its manifest.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "augment.hpp"
#include "composer.hpp"
#include "png_io.hpp"

namespace docforge {

struct Prompts {
    std::map<std::string, std::string> element{
        {"table", "Convert the table in the image into structured table markup."},
        {"formula", "Transcribe the formula in the image as formula tokens."},
        {"paragraph", "Read the paragraph in the image line by line."},
        {"figure", "Mark the figure region in the image."},
        {"title", "Read the title in the image."},
    };
    std::string page = "Parse the document page into structured markup in reading order.";

    const std::string& for_kind(ElementKind k) const {
        const auto it = element.find(std::string(kind_name(k)));
        if (it == element.end()) fail(ErrorCode::Validation, "no stage-1 prompt configured for " + std::string(kind_name(k)));
        return it->second;
    }
};

struct DatasetRecord {
    int stage = 2;
    std::string prompt;
    std::string image;
    std::string target;
    json meta = json::object();
};

inline void to_json(json& j, const DatasetRecord& r) {
    j = json{{"stage", r.stage}, {"prompt", r.prompt}, {"image", r.image}, {"target", r.target}, {"meta", r.meta}};
}

inline void from_json(const json& j, DatasetRecord& r) {
    r.stage = j.at("stage").get<int>();
    r.prompt = j.at("prompt").get<std::string>();
    r.image = j.value("image", std::string{});
    r.target = j.at("target").get<std::string>();
    r.meta = j.value("meta", json::object());
}

/// One JSON object per line, in order.
inline std::vector<DatasetRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Input, "cannot read manifest " + path.string());
    std::vector<DatasetRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(json::parse(line).get<DatasetRecord>());
        } catch (const json::exception& ex) {
            fail(ErrorCode::Input, path.string() + ":" + std::to_string(n) + ": " + ex.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stage 1

struct Stage1Item {
    DatasetRecord record;
    std::size_t element_index = 0;
};

/// Default kind mixture for stage-1 records.
inline std::map<std::string, double> default_stage1_proportions() {
    return {{"table", 0.35}, {"formula", 0.25}, {"paragraph", 0.30}, {"figure", 0.10}};
}

/// n element records: a kind is drawn from the proportions (restricted to
/// kinds present in the repository), then an element of that kind
/// uniformly. Targets are the element's block markup.
inline std::vector<Stage1Item> emit_stage1(const Repository& repo, long long n, std::uint64_t seed,
                                           const std::map<std::string, double>& proportions = default_stage1_proportions(),
                                           const Prompts& prompts = {}, const std::string& image_dir = "elements") {
    if (n <= 0) fail(ErrorCode::Validation, "stage-1 record count must be positive, got " + std::to_string(n));
    if (repo.empty()) fail(ErrorCode::Validation, "stage-1 emission needs a non-empty repository");
    std::vector<std::pair<ElementKind, double>> mix;
    double total = 0;
    for (const auto& [name, w] : proportions) {
        const auto kind = kind_or_throw(name);
        if (!(w >= 0)) fail(ErrorCode::Validation, "proportion for " + name + " must be non-negative");
        if (w > 0 && !repo.indices_of(kind).empty()) {
            mix.emplace_back(kind, w);
            total += w;
        }
    }
    if (mix.empty()) fail(ErrorCode::Validation, "no kind with a positive proportion has elements in the repository");
    std::vector<Stage1Item> out;
    out.reserve(static_cast<std::size_t>(n));
    for (long long i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, "stage1", static_cast<std::uint64_t>(i)));
        double u = rng.uniform() * total;
        ElementKind kind = mix.back().first;
        for (const auto& [k, w] : mix) {
            if (u < w) {
                kind = k;
                break;
            }
            u -= w;
        }
        const auto& idx = repo.indices_of(kind);
        const auto ei = idx[rng.index(idx.size())];
        const auto& e = repo.elements()[ei];
        char name[32];
        std::snprintf(name, sizeof name, "s1-%07lld.png", i);
        Stage1Item item;
        item.element_index = ei;
        item.record.stage = 1;
        item.record.prompt = prompts.for_kind(kind);
        item.record.image = image_dir + "/" + name;
        item.record.target = serialize_block(e.markup);
        item.record.meta = {{"element_id", e.id}, {"kind", kind_name(kind)}, {"languages", {e.lang}}, {"augmented", false},
                            {"provenance", provenance_name(e.provenance)}};
        out.push_back(std::move(item));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stage 2

struct FinishedPage {
    ComposedPage page;
    std::string image;
    bool augmented = false;
};

struct BudgetReport {
    std::size_t total = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::vector<std::pair<std::string, std::size_t>> rejected_pages;  // (page id, token count)
};

inline void to_json(json& j, const BudgetReport& r) {
    json pages = json::array();
    for (const auto& [id, n] : r.rejected_pages) pages.push_back({{"page_id", id}, {"tokens", n}});
    j = json{{"total", r.total}, {"accepted", r.accepted}, {"rejected", r.rejected}, {"rejected_pages", pages}};
}

inline constexpr std::size_t kDefaultTokenBudget = 8192;

inline DatasetRecord stage2_record(const ComposedPage& p, const std::string& image, bool augmented, const Prompts& prompts) {
    DatasetRecord r;
    r.stage = 2;
    r.prompt = prompts.page;
    r.image = image;
    r.target = p.ground_truth.stream;
    r.meta = {{"page_id", p.page_id}, {"template_id", p.template_id}, {"languages", p.languages()}, {"augmented", augmented}};
    return r;
}

/// One record per page whose target fits the token budget.
inline std::pair<std::vector<DatasetRecord>, BudgetReport> emit_stage2(std::span<const FinishedPage> pages,
                                                                       std::size_t budget = kDefaultTokenBudget,
                                                                       const Prompts& prompts = {}) {
    std::vector<DatasetRecord> out;
    BudgetReport rep;
    for (const auto& fp : pages) {
        ++rep.total;
        const auto n = tokenize(fp.page.ground_truth.stream).size();
        if (n > budget) {
            ++rep.rejected;
            rep.rejected_pages.emplace_back(fp.page.page_id, n);
            continue;
        }
        ++rep.accepted;
        out.push_back(stage2_record(fp.page, fp.image, fp.augmented, prompts));
    }
    return {std::move(out), std::move(rep)};
}

// ---------------------------------------------------------------------------
// Generation config

struct TemplateConfig {
    std::string library;  // directory of template JSON files; empty = built-in
    int builtin = kBuiltinTemplateCount;
    std::size_t extend_to = 0;  // grow by composition up to this many templates
    std::optional<std::size_t> min_regions;
    std::optional<std::size_t> max_regions;
};

struct GenerationConfig {
    std::uint64_t seed = 0;
    long long pages = 10;
    double augment_fraction = 0.2;
    std::string output_dir = "out";
    int workers = 1;
    std::size_t token_budget = kDefaultTokenBudget;
    long long stage1_records = 0;
    bool render_images = true;
    bool emit_sidecars = true;
    bool emit_glyph_log = false;
    int png_compression = 1;
    std::size_t chunk_size = 64;
    std::string repository_path;  // load instead of building
    RepositoryConfig repository;
    TemplateConfig templates;
    FillPolicy fill;
    AugmentationSpec augmentation = default_augmentation_spec();
    std::map<std::string, double> stage1_proportions = default_stage1_proportions();
    Prompts prompts;
};

inline json config_to_json(const GenerationConfig& c) {
    json sources = json::array();
    for (const auto& s : c.repository.sources) sources.push_back({{"path", s.path}, {"format", corpus_format_name(s.format)}});
    json templates{{"library", c.templates.library}, {"builtin", c.templates.builtin}, {"extend_to", c.templates.extend_to}};
    if (c.templates.min_regions) templates["min_regions"] = *c.templates.min_regions;
    if (c.templates.max_regions) templates["max_regions"] = *c.templates.max_regions;
    json kinds = json::array();
    for (auto k : c.fill.enabled_kinds.to_vector()) kinds.push_back(kind_name(k));
    return json{
        {"seed", c.seed},
        {"pages", c.pages},
        {"augment_fraction", c.augment_fraction},
        {"output_dir", c.output_dir},
        {"workers", c.workers},
        {"token_budget", c.token_budget},
        {"stage1_records", c.stage1_records},
        {"render_images", c.render_images},
        {"emit_sidecars", c.emit_sidecars},
        {"emit_glyph_log", c.emit_glyph_log},
        {"png_compression", c.png_compression},
        {"chunk_size", c.chunk_size},
        {"repository_path", c.repository_path},
        {"repository",
         {{"seed", c.repository.seed},
          {"per_kind", c.repository.per_kind},
          {"languages", c.repository.languages},
          {"mutated_fraction", c.repository.mutated_fraction},
          {"titles", c.repository.titles},
          {"sources", sources}}},
        {"templates", templates},
        {"fill",
         {{"page_size", {c.fill.page_width, c.fill.page_height}},
          {"empty_region_probability", c.fill.empty_region_probability},
          {"min_scale", c.fill.min_scale},
          {"max_scale", c.fill.max_scale},
          {"allow_truncation", c.fill.allow_truncation},
          {"max_candidates", c.fill.max_candidates},
          {"unfit", c.fill.unfit == UnfitPolicy::Reject ? "reject" : "skip"},
          {"kinds", kinds}}},
        {"augmentation", spec_to_json(c.augmentation)},
        {"stage1_proportions", c.stage1_proportions},
        {"prompts", {{"element", c.prompts.element}, {"page", c.prompts.page}}},
    };
}

namespace detail {

inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
    if (!j.is_object()) fail(ErrorCode::Validation, std::string(where) + " must be an object");
    for (const auto& [key, _] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            fail(ErrorCode::Validation, "unknown config key '" + std::string(where) + (where.empty() ? "" : ".") + key + "'");
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// Applies a JSON config document over `c` (missing keys keep their
/// values). Unknown keys are rejected.
inline void apply_config_json(GenerationConfig& c, const json& j) {
    using detail::read_key;
    try {
        detail::check_keys(j,
                           {"seed", "pages", "augment_fraction", "output_dir", "workers", "token_budget", "stage1_records", "render_images",
                            "emit_sidecars", "emit_glyph_log", "png_compression", "chunk_size", "repository_path", "repository",
                            "templates", "fill", "augmentation", "stage1_proportions", "prompts"},
                           "");
        read_key(j, "seed", c.seed);
        read_key(j, "pages", c.pages);
        read_key(j, "augment_fraction", c.augment_fraction);
        read_key(j, "output_dir", c.output_dir);
        read_key(j, "workers", c.workers);
        read_key(j, "token_budget", c.token_budget);
        read_key(j, "stage1_records", c.stage1_records);
        read_key(j, "render_images", c.render_images);
        read_key(j, "emit_sidecars", c.emit_sidecars);
        read_key(j, "emit_glyph_log", c.emit_glyph_log);
        read_key(j, "png_compression", c.png_compression);
        read_key(j, "chunk_size", c.chunk_size);
        read_key(j, "repository_path", c.repository_path);
        if (j.contains("repository")) {
            const auto& r = j["repository"];
            detail::check_keys(r, {"seed", "per_kind", "languages", "mutated_fraction", "titles", "sources"}, "repository");
            read_key(r, "seed", c.repository.seed);
            read_key(r, "per_kind", c.repository.per_kind);
            read_key(r, "languages", c.repository.languages);
            read_key(r, "mutated_fraction", c.repository.mutated_fraction);
            read_key(r, "titles", c.repository.titles);
            if (r.contains("sources")) {
                c.repository.sources.clear();
                for (const auto& s : r["sources"]) {
                    detail::check_keys(s, {"path", "format"}, "repository.sources[]");
                    c.repository.sources.push_back({s.at("path").get<std::string>(), corpus_format_or_throw(s.at("format").get<std::string>())});
                }
            }
        }
        if (j.contains("templates")) {
            const auto& t = j["templates"];
            detail::check_keys(t, {"library", "builtin", "extend_to", "min_regions", "max_regions"}, "templates");
            read_key(t, "library", c.templates.library);
            read_key(t, "builtin", c.templates.builtin);
            read_key(t, "extend_to", c.templates.extend_to);
            if (t.contains("min_regions")) c.templates.min_regions = t["min_regions"].get<std::size_t>();
            if (t.contains("max_regions")) c.templates.max_regions = t["max_regions"].get<std::size_t>();
        }
        if (j.contains("fill")) {
            const auto& f = j["fill"];
            detail::check_keys(f, {"page_size", "empty_region_probability", "min_scale", "max_scale", "allow_truncation", "max_candidates", "unfit", "kinds"},
                               "fill");
            if (f.contains("page_size")) {
                c.fill.page_width = f["page_size"].at(0).get<int>();
                c.fill.page_height = f["page_size"].at(1).get<int>();
            }
            read_key(f, "empty_region_probability", c.fill.empty_region_probability);
            read_key(f, "min_scale", c.fill.min_scale);
            read_key(f, "max_scale", c.fill.max_scale);
            read_key(f, "allow_truncation", c.fill.allow_truncation);
            read_key(f, "max_candidates", c.fill.max_candidates);
            if (f.contains("unfit")) {
                const auto u = f["unfit"].get<std::string>();
                if (u != "skip" && u != "reject") fail(ErrorCode::Validation, "fill.unfit must be skip or reject");
                c.fill.unfit = u == "reject" ? UnfitPolicy::Reject : UnfitPolicy::Skip;
            }
            if (f.contains("kinds")) c.fill.enabled_kinds = f["kinds"].get<KindSet>();
        }
        if (j.contains("augmentation")) c.augmentation = spec_from_json(j["augmentation"]);
        if (j.contains("stage1_proportions")) c.stage1_proportions = j["stage1_proportions"].get<std::map<std::string, double>>();
        if (j.contains("prompts")) {
            const auto& p = j["prompts"];
            detail::check_keys(p, {"element", "page"}, "prompts");
            if (p.contains("element"))
                for (const auto& [k, v] : p["element"].items()) c.prompts.element[k] = v.get<std::string>();
            read_key(p, "page", c.prompts.page);
        }
    } catch (const json::exception& ex) {
        fail(ErrorCode::Validation, std::string("config: ") + ex.what());
    }
}

inline GenerationConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Input, "cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& ex) {
        fail(ErrorCode::Input, path.string() + ": " + ex.what());
    }
    GenerationConfig c;
    apply_config_json(c, j);
    return c;
}

inline std::vector<std::string> validate_config(const GenerationConfig& c) {
    std::vector<std::string> out;
    if (c.pages < 0) out.push_back("pages must be non-negative");
    if (!(c.augment_fraction >= 0 && c.augment_fraction <= 1)) out.push_back("augment_fraction must lie in [0,1]");
    if (c.workers < 1) out.push_back("workers must be at least 1");
    if (c.token_budget == 0) out.push_back("token_budget must be positive");
    if (c.stage1_records < 0) out.push_back("stage1_records must be non-negative");
    if (c.png_compression < 0 || c.png_compression > 9) out.push_back("png_compression must lie in [0,9]");
    if (c.chunk_size == 0) out.push_back("chunk_size must be positive");
    if (c.output_dir.empty()) out.push_back("output_dir must be set");
    if (c.repository_path.empty()) {
        if (c.repository.per_kind < 1 && c.repository.sources.empty()) out.push_back("repository.per_kind must be positive");
        if (!(c.repository.mutated_fraction >= 0 && c.repository.mutated_fraction <= 1)) out.push_back("repository.mutated_fraction must lie in [0,1]");
        if (c.repository.languages.empty()) out.push_back("repository.languages must not be empty");
        for (const auto& l : c.repository.languages)
            if (!detail::find_pool(l)) out.push_back("no word pool for language '" + l + "'");
    }
    if (c.templates.library.empty() && c.templates.builtin < 1) out.push_back("templates.builtin must be positive without a library");
    if (auto p = validate_fill_policy(c.fill)) out.push_back("fill: " + *p);
    if (c.fill.enabled_kinds.contains(ElementKind::Title) && !c.repository.titles && c.repository_path.empty())
        out.push_back("fill.kinds includes title but repository.titles is off");
    for (const auto& p : validate_spec(c.augmentation)) out.push_back("augmentation: " + p);
    for (const auto& [k, w] : c.stage1_proportions) {
        if (!parse_kind(k)) out.push_back("stage1_proportions: unknown kind '" + k + "'");
        if (!(w >= 0)) out.push_back("stage1_proportions: weight for " + k + " must be non-negative");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline

struct GenerationSummary {
    long long pages = 0;
    std::size_t augmented = 0;
    std::size_t rejected = 0;
    std::size_t stage1_records = 0;
    std::size_t stage2_records = 0;
    std::size_t skipped_regions = 0;
    std::size_t blocks = 0;
    std::string manifest_path;
    std::string manifest_digest;
    std::string library_hash;
    std::string repository_hash;
    std::size_t templates = 0;
    std::size_t elements = 0;
};

inline void to_json(json& j, const GenerationSummary& s) {
    j = json{{"pages", s.pages},
             {"augmented", s.augmented},
             {"rejected", s.rejected},
             {"stage1_records", s.stage1_records},
             {"stage2_records", s.stage2_records},
             {"skipped_regions", s.skipped_regions},
             {"blocks", s.blocks},
             {"manifest", s.manifest_path},
             {"manifest_digest", s.manifest_digest},
             {"library_hash", s.library_hash},
             {"repository_hash", s.repository_hash},
             {"templates", s.templates},
             {"elements", s.elements}};
}

/// The indices of the pages to augment: exactly round(fraction * n) of
/// them, chosen by a seeded permutation.
inline std::vector<bool> augmentation_mask(long long n, double fraction, std::uint64_t seed) {
    const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<std::size_t> idx(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(derive_seed(seed, "augment-select"));
    rng.shuffle(idx);
    std::vector<bool> mask(idx.size(), false);
    for (std::size_t i = 0; i < count && i < idx.size(); ++i) mask[idx[i]] = true;
    return mask;
}

inline std::string page_name(long long i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "p%07lld", i);
    return buf;
}

struct PipelineInputs {
    Repository repository;
    TemplateLibrary library;
};

inline PipelineInputs prepare_inputs(const GenerationConfig& c) {
    PipelineInputs in;
    if (!c.repository_path.empty()) {
        in.repository = Repository::load(c.repository_path);
    } else {
        auto rc = c.repository;
        if (rc.seed == 0) rc.seed = derive_seed(c.seed, "repository");
        in.repository = build_repository(rc, c.workers);
    }
    in.library = c.templates.library.empty() ? builtin_library(c.templates.builtin) : TemplateLibrary::load_dir(c.templates.library);
    if (c.templates.extend_to > in.library.size()) extend_library(in.library, c.templates.extend_to, derive_seed(c.seed, "library"));
    return in;
}

/// Everything produced for one page before it is written.
struct PageResult {
    ComposedPage page;
    bool augmented = false;
    std::optional<AugmentationRecord> record;
    std::size_t tokens = 0;
    bool rejected = false;
    std::string manifest_line;
};

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot write " + p.string());
    out << text;
    if (!out) fail(ErrorCode::Io, "short write to " + p.string());
}

}  // namespace detail

/// Builds one page: template sample, composition, optional augmentation,
/// images and sidecar. Depends only on (config, inputs, index).
inline PageResult produce_page(const GenerationConfig& c, const PipelineInputs& in, long long i, bool augmented,
                               const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    const auto seed = derive_seed(c.seed, "page", static_cast<std::uint64_t>(i));
    SampleConstraints sc;
    sc.min_regions = c.templates.min_regions;
    sc.max_regions = c.templates.max_regions;
    const auto& tmpl = sample_template(in.library, sc, derive_seed(seed, "template"));
    PageResult r;
    r.page = compose_page(tmpl, in.repository, c.fill, seed, page_name(i));
    r.augmented = augmented;
    r.tokens = tokenize(r.page.ground_truth.stream).size();
    r.rejected = r.tokens > c.token_budget;
    if (r.rejected) return r;
    if (augmented) r.record = sample_augmentation(r.page.width, r.page.height, c.augmentation, derive_seed(seed, "augment"));
    const std::string image = "pages/" + r.page.page_id + ".png";
    if (c.render_images) {
        auto canvas = render_page(r.page);
        if (c.emit_glyph_log) detail::write_text(out_dir / "pages" / (r.page.page_id + ".glyphs.json"), glyph_log_json(canvas).dump() + "\n");
        if (r.record) canvas = apply_augmentation(canvas, *r.record);
        write_png(out_dir / image, canvas, c.png_compression);
    }
    const std::string sidecar = "sidecars/" + r.page.page_id + ".json";
    if (c.emit_sidecars) {
        json sj{{"page_id", r.page.page_id},
                {"template_id", r.page.template_id},
                {"page_size", {r.page.width, r.page.height}},
                {"seed", hex64(seed)},
                {"augmented", augmented},
                {"ground_truth", r.page.ground_truth.stream},
                {"blocks", r.page.ground_truth.sidecar},
                {"placements", r.page.placements},
                {"skipped_regions", r.page.skipped_regions}};
        if (r.record) {
            sj["augmentation"] = record_to_json(*r.record);
            sj["remapped_blocks"] = remap_bboxes(r.page.ground_truth.sidecar, *r.record);
        }
        detail::write_text(out_dir / sidecar, sj.dump() + "\n");
    }
    auto rec = stage2_record(r.page, image, augmented, c.prompts);
    if (c.emit_sidecars) rec.meta["sidecar"] = sidecar;
    r.manifest_line = json(rec).dump();
    r.page.placements.clear();  // keep per-chunk memory small
    return r;
}

/// Runs the whole pipeline and writes config.json, manifest.jsonl,
/// summary.json, rejected.json, images and sidecars under output_dir. Output
/// bytes depend only on the config, never on `workers`.
inline GenerationSummary generate_dataset(const GenerationConfig& c) {
    namespace fs = std::filesystem;
    if (auto problems = validate_config(c); !problems.empty()) fail(ErrorCode::Validation, "invalid config: " + join(problems, "; "));
    const fs::path out_dir(c.output_dir);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    for (const char* sub : {"pages", "sidecars", "elements"}) fs::create_directories(out_dir / sub, ec);
    if (ec || !fs::is_directory(out_dir)) fail(ErrorCode::Io, "cannot create output directory " + out_dir.string());

    auto snapshot = config_to_json(c);
    snapshot.erase("workers");  // not part of the output contract
    detail::write_text(out_dir / "config.json", snapshot.dump(2) + "\n");

    const auto inputs = prepare_inputs(c);
    GenerationSummary sum;
    sum.pages = c.pages;
    sum.library_hash = hex64(inputs.library.content_hash());
    sum.repository_hash = hex64(inputs.repository.content_hash());
    sum.templates = inputs.library.size();
    sum.elements = inputs.repository.size();
    sum.manifest_path = (out_dir / "manifest.jsonl").string();

    std::ofstream manifest(out_dir / "manifest.jsonl", std::ios::binary);
    if (!manifest) fail(ErrorCode::Io, "cannot write " + (out_dir / "manifest.jsonl").string());
    std::uint64_t digest = kFnvOffset;
    auto emit_line = [&](const std::string& line) {
        manifest << line << '\n';
        digest = fnv1a64(line + "\n", digest);
    };

    if (c.stage1_records > 0) {
        const auto items = emit_stage1(inputs.repository, c.stage1_records, derive_seed(c.seed, "stage1"), c.stage1_proportions, c.prompts);
        if (c.render_images)
            parallel_for(items.size(), c.workers, [&](std::size_t k) {
                write_png(out_dir / items[k].record.image, render_element(inputs.repository.elements()[items[k].element_index]), c.png_compression);
            });
        for (const auto& it : items) emit_line(json(it.record).dump());
        sum.stage1_records = items.size();
    }

    const auto mask = augmentation_mask(c.pages, c.augment_fraction, c.seed);
    BudgetReport budget;
    const auto chunk = static_cast<long long>(c.chunk_size);
    std::vector<PageResult> results;
    for (long long start = 0; start < c.pages; start += chunk) {
        const long long end = std::min(c.pages, start + chunk);
        results.assign(static_cast<std::size_t>(end - start), PageResult{});
        parallel_for(results.size(), c.workers, [&](std::size_t k) {
            const long long i = start + static_cast<long long>(k);
            results[k] = produce_page(c, inputs, i, mask[static_cast<std::size_t>(i)], out_dir);
        });
        for (const auto& r : results) {
            ++budget.total;
            sum.skipped_regions += r.page.skipped_regions;
            if (r.rejected) {
                ++budget.rejected;
                budget.rejected_pages.emplace_back(r.page.page_id, r.tokens);
                continue;
            }
            ++budget.accepted;
            sum.blocks += r.page.ground_truth.sidecar.size();
            if (r.augmented) ++sum.augmented;
            emit_line(r.manifest_line);
            ++sum.stage2_records;
        }
    }
    manifest.close();
    if (!manifest) fail(ErrorCode::Io, "failed writing manifest");
    sum.rejected = budget.rejected;
    sum.manifest_digest = hex64(digest);
    detail::write_text(out_dir / "rejected.json", json(budget).dump(2) + "\n");
    detail::write_text(out_dir / "summary.json", json(sum).dump(2) + "\n");
    return sum;
}

}  // namespace docforge
