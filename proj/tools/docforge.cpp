// docforge command-line front end.
//
//   docforge generate --config data/generate.json --pages 100 --workers 4
//   docforge augment  --input page.png --seed 3 --output warped.png
//   docforge evaluate --pred pred.jsonl --gt out/manifest.jsonl --wild-pair pairs.json
//   docforge inspect  --dir out --page p0000003 --out overlays
//   docforge elements --per-kind 20 --output elements.jsonl
//
// Exit codes: 0 success, 1 internal error, 2 user or input error. Errors are
// printed to stderr as a single JSON object.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "docforge/docforge.hpp"

namespace fs = std::filesystem;
using docforge::ErrorCode;
using docforge::json;

namespace {

int exit_code_for(ErrorCode c) { return c == ErrorCode::Validation || c == ErrorCode::Input ? 2 : 1; }

std::string_view code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::Validation: return "validation";
        case ErrorCode::Input: return "input";
        case ErrorCode::Io: return "io";
        case ErrorCode::Internal: return "internal";
    }
    return "internal";
}

void report_error(std::string_view code, const std::string& message) {
    std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << std::endl;
}

json read_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) docforge::fail(ErrorCode::Input, "cannot read " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& ex) {
        docforge::fail(ErrorCode::Input, p.string() + ": " + ex.what());
    }
}

void write_json_file(const fs::path& p, const json& j) {
    std::ofstream out(p, std::ios::binary);
    if (!out) docforge::fail(ErrorCode::Io, "cannot write " + p.string());
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<long long> pages;
    std::optional<double> augment_fraction;
    std::optional<std::string> output;
    std::optional<int> workers;
    std::optional<long long> stage1;
    std::optional<std::string> library;
    std::optional<std::size_t> token_budget;
    std::optional<std::string> page_size;
    bool no_images = false;
    bool glyph_log = false;
};

int run_generate(const GenerateArgs& a) {
    docforge::GenerationConfig cfg;
    cfg.workers = docforge::default_workers();
    if (!a.config.empty()) docforge::apply_config_json(cfg, read_json_file(a.config));
    if (a.seed) cfg.seed = *a.seed;
    if (a.pages) cfg.pages = *a.pages;
    if (a.augment_fraction) cfg.augment_fraction = *a.augment_fraction;
    if (a.output) cfg.output_dir = *a.output;
    if (a.workers) cfg.workers = *a.workers;
    if (a.stage1) cfg.stage1_records = *a.stage1;
    if (a.library) cfg.templates.library = *a.library;
    if (a.token_budget) cfg.token_budget = *a.token_budget;
    if (a.page_size) {
        const auto x = a.page_size->find('x');
        try {
            if (x == std::string::npos) throw std::invalid_argument("missing x");
            cfg.fill.page_width = std::stoi(a.page_size->substr(0, x));
            cfg.fill.page_height = std::stoi(a.page_size->substr(x + 1));
        } catch (const std::exception&) {
            docforge::fail(ErrorCode::Validation, "--page-size must look like 1240x1754");
        }
    }
    if (a.no_images) cfg.render_images = false;
    if (a.glyph_log) cfg.emit_glyph_log = true;

    const auto t0 = std::chrono::steady_clock::now();
    const auto sum = docforge::generate_dataset(cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json out = sum;
    out["wall_time_s"] = secs;
    std::cout << out.dump(2) << std::endl;
    return 0;
}

// ---------------------------------------------------------------------------

struct AugmentArgs {
    std::string input, output, spec, sidecar, record;
    std::uint64_t seed = 0;
};

int run_augment(const AugmentArgs& a) {
    const auto spec = a.spec.empty() ? docforge::default_augmentation_spec() : docforge::spec_from_json(read_json_file(a.spec));
    if (auto problems = docforge::validate_spec(spec); !problems.empty())
        docforge::fail(ErrorCode::Validation, "augmentation spec: " + docforge::join(problems, "; "));
    const auto page = docforge::read_png(a.input);
    auto [img, rec] = docforge::augment(page, spec, a.seed);
    docforge::write_png(a.output, img);
    json meta{{"input", a.input}, {"output", a.output}, {"seed", a.seed}, {"spec", docforge::spec_to_json(spec)},
              {"record", docforge::record_to_json(rec)}};
    if (!a.sidecar.empty()) {
        const auto sj = read_json_file(a.sidecar);
        const auto& blocks = sj.contains("blocks") ? sj["blocks"] : sj;
        meta["remapped_blocks"] = docforge::remap_bboxes(blocks.get<std::vector<docforge::SidecarEntry>>(), rec);
    }
    const auto record_path = a.record.empty() ? fs::path(a.output).replace_extension(".augment.json") : fs::path(a.record);
    write_json_file(record_path, meta);
    std::cout << json{{"output", a.output}, {"record", record_path.string()}, {"steps", rec.steps.size()}, {"size", {rec.out_w, rec.out_h}}}.dump()
              << std::endl;
    return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string pred, gt, wild_pair, out;
    bool any = false;
    std::size_t max_len = docforge::kDefaultTokenBudget;
    std::optional<int> workers;
};

int run_evaluate(const EvaluateArgs& a) {
    for (const auto& p : {a.pred, a.gt})
        if (!fs::exists(p)) docforge::fail(ErrorCode::Input, "no such file: " + p);
    const auto pred = docforge::read_manifest(a.pred);
    const auto gt = docforge::read_manifest(a.gt);
    std::optional<docforge::WildPairing> pairing;
    if (!a.wild_pair.empty()) pairing = docforge::pairing_from_json(read_json_file(a.wild_pair));
    docforge::EvalOptions opt;
    opt.max_len = a.max_len;
    opt.repetition.any = a.any;
    opt.workers = a.workers.value_or(docforge::default_workers());
    const auto rep = docforge::evaluate(pred, gt, pairing, opt);
    const auto text = docforge::report_to_text(rep);
    if (!a.out.empty()) {
        std::error_code ec;
        fs::create_directories(a.out, ec);
        write_json_file(fs::path(a.out) / "report.json", docforge::report_to_json(rep));
        std::ofstream(fs::path(a.out) / "report.txt") << text;
        write_json_file(fs::path(a.out) / "command.json", {{"command", "evaluate"},
                                                           {"pred", a.pred},
                                                           {"gt", a.gt},
                                                           {"wild_pair", a.wild_pair},
                                                           {"any", a.any},
                                                           {"max_len", a.max_len}});
    }
    std::cout << text;
    return 0;
}

// ---------------------------------------------------------------------------

struct InspectArgs {
    std::string dir, page, out;
};

int run_inspect(const InspectArgs& a) {
    const auto out = a.out.empty() ? fs::path(a.dir) / "inspect" : fs::path(a.out);
    const auto r = docforge::inspect_page(a.dir, a.page, out);
    std::cout << json{{"page_id", r.page_id}, {"boxes", r.boxes.size()}, {"overlay", r.overlay_path.string()}, {"ground_truth", r.stream_path.string()}}.dump()
              << std::endl;
    return 0;
}

// ---------------------------------------------------------------------------

struct ElementsArgs {
    std::string output = "elements.jsonl";
    std::string render_dir;
    std::uint64_t seed = 0;
    int per_kind = 20;
    std::vector<std::string> languages;
    std::vector<std::string> sources;  // path:format
    double mutated_fraction = 0.15;
    bool titles = false;
    std::size_t render = 0;
    std::optional<int> workers;
};

int run_elements(const ElementsArgs& a) {
    docforge::RepositoryConfig cfg;
    cfg.seed = a.seed;
    cfg.per_kind = a.per_kind;
    if (!a.languages.empty()) cfg.languages = a.languages;
    cfg.mutated_fraction = a.mutated_fraction;
    cfg.titles = a.titles;
    for (const auto& s : a.sources) {
        const auto colon = s.rfind(':');
        if (colon == std::string::npos) docforge::fail(ErrorCode::Validation, "--source expects path:format, got '" + s + "'");
        cfg.sources.push_back({s.substr(0, colon), docforge::corpus_format_or_throw(s.substr(colon + 1))});
    }
    const auto repo = docforge::build_repository(cfg, a.workers.value_or(docforge::default_workers()));
    repo.save(a.output);
    if (a.render > 0) {
        const fs::path dir = a.render_dir.empty() ? fs::path(a.output).parent_path() / "element_crops" : fs::path(a.render_dir);
        std::error_code ec;
        fs::create_directories(dir, ec);
        for (std::size_t i = 0; i < std::min(a.render, repo.size()); ++i) {
            const auto& e = repo.elements()[i];
            docforge::write_png(dir / (e.id + ".png"), docforge::render_element(e));
        }
    }
    json counts = json::object();
    for (auto k : docforge::kAllKinds) counts[std::string(docforge::kind_name(k))] = repo.indices_of(k).size();
    std::cout << json{{"output", a.output}, {"elements", repo.size()}, {"by_kind", counts}, {"content_hash", docforge::hex64(repo.content_hash())}}.dump()
              << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic document page generation, augmentation and evaluation"};
    app.require_subcommand(1);

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Generate a page dataset with manifest");
    gen->add_option("-c,--config", ga.config, "JSON config file")->check(CLI::ExistingFile);
    gen->add_option("--seed", ga.seed, "Master seed");
    gen->add_option("--pages", ga.pages, "Number of stage-2 pages");
    gen->add_option("--augment-fraction", ga.augment_fraction, "Fraction of pages to augment");
    gen->add_option("-o,--output", ga.output, "Output directory");
    gen->add_option("-j,--workers", ga.workers, "Worker threads (default: DOCFORGE_WORKERS or 1)");
    gen->add_option("--stage1", ga.stage1, "Number of stage-1 element records");
    gen->add_option("--template-library", ga.library, "Directory of template JSON files");
    gen->add_option("--token-budget", ga.token_budget, "Maximum target tokens per page");
    gen->add_option("--page-size", ga.page_size, "Page size as WxH");
    gen->add_flag("--no-images", ga.no_images, "Skip PNG rendering");
    gen->add_flag("--glyph-log", ga.glyph_log, "Write per-page glyph logs");

    AugmentArgs aa;
    auto* aug = app.add_subcommand("augment", "Apply capture-style augmentation to a PNG");
    aug->add_option("-i,--input", aa.input, "Input PNG")->required()->check(CLI::ExistingFile);
    aug->add_option("-o,--output", aa.output, "Output PNG")->required();
    aug->add_option("--spec", aa.spec, "Augmentation spec JSON (default: built-in spec)")->check(CLI::ExistingFile);
    aug->add_option("--seed", aa.seed, "Seed");
    aug->add_option("--sidecar", aa.sidecar, "Sidecar JSON whose blocks are remapped")->check(CLI::ExistingFile);
    aug->add_option("--record", aa.record, "Where to write the augmentation record");

    EvaluateArgs ea;
    auto* ev = app.add_subcommand("evaluate", "Score predictions against a ground-truth manifest");
    ev->add_option("--pred", ea.pred, "Prediction manifest (JSONL)")->required();
    ev->add_option("--gt", ea.gt, "Ground-truth manifest (JSONL)")->required();
    ev->add_option("--wild-pair", ea.wild_pair, "JSON origin/wild page pairing");
    ev->add_option("-o,--out", ea.out, "Directory for report.json and report.txt");
    ev->add_option("--max-len", ea.max_len, "Maximum generation length in tokens");
    ev->add_flag("--any", ea.any, "Flag repetition on either condition");
    ev->add_option("-j,--workers", ea.workers, "Worker threads");

    InspectArgs ia;
    auto* ins = app.add_subcommand("inspect", "Draw block boxes and order indices over a generated page");
    ins->add_option("-d,--dir", ia.dir, "Generated dataset directory")->required()->check(CLI::ExistingDirectory);
    ins->add_option("-p,--page", ia.page, "Page id")->required();
    ins->add_option("-o,--out", ia.out, "Output directory (default: <dir>/inspect)");

    ElementsArgs la;
    auto* el = app.add_subcommand("elements", "Build and save an element repository");
    el->add_option("-o,--output", la.output, "Repository JSONL path");
    el->add_option("--seed", la.seed, "Seed");
    el->add_option("--per-kind", la.per_kind, "Procedural elements per kind");
    el->add_option("--languages", la.languages, "Language tags");
    el->add_option("--source", la.sources, "Corpus to ingest as path:format");
    el->add_option("--mutated-fraction", la.mutated_fraction, "Fraction of mutated variants");
    el->add_flag("--titles", la.titles, "Also generate titles");
    el->add_option("--render", la.render, "Render the first N elements as PNG crops");
    el->add_option("--render-dir", la.render_dir, "Directory for rendered crops");
    el->add_option("-j,--workers", la.workers, "Worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("usage", e.what());
        return 2;
    }

    try {
        if (*gen) return run_generate(ga);
        if (*aug) return run_augment(aa);
        if (*ev) return run_evaluate(ea);
        if (*ins) return run_inspect(ia);
        if (*el) return run_elements(la);
    } catch (const docforge::Error& e) {
        report_error(code_name(e.code()), e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        report_error("internal", e.what());
        return 1;
    }
    return 1;
}
