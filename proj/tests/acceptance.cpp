// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <sys/wait.h>
#include <thread>

#include "support.hpp"

using namespace docforge;
using testsupport::TempDir;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
    std::vector<std::string> problems;

    void check(bool ok, const std::string& what) {
        if (ok) return;
        pass = false;
        if (problems.size() < 5) problems.push_back(what);
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 3) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(prec);
    os << v;
    return os.str();
}

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

struct Proc {
    int status = -1;
    std::string out;
};

Proc run_cli(const std::string& args) {
    const std::string cmd = std::string("'") + DOCFORGE_CLI_PATH + "' " + args;
    Proc r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int raw = ::pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

std::string quote(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

long status_kb(const char* field) {
    std::ifstream in("/proc/self/status");
    std::string line;
    const std::string key = std::string(field) + ":";
    while (std::getline(in, line))
        if (line.rfind(key, 0) == 0) return std::stol(line.substr(key.size()));
    return -1;
}

// ---------------------------------------------------------------------------
// 1. Determinism and throughput

Outcome determinism() {
    Outcome o;
    TempDir dir("acc-determinism");
    const json cfg{{"seed", 20240611}, {"pages", 1000}, {"augment_fraction", 0.2}, {"stage1_records", 100}};
    testsupport::spit(dir / "config.json", cfg.dump());
    const auto base = "generate -c " + quote(dir / "config.json") + " -o ";

    const auto t0 = std::chrono::steady_clock::now();
    const auto a = run_cli(base + quote(dir / "a") + " -j 8");
    const double wall = seconds_since(t0);
    const auto b = run_cli(base + quote(dir / "b") + " -j 8");
    const auto c = run_cli(base + quote(dir / "c") + " -j 1");
    for (const auto* r : {&a, &b, &c}) o.check(r->status == 0, "generate exited with " + std::to_string(r->status));
    if (!o.pass) return o;

    const auto sa = json::parse(a.out);
    o.check(sa["augmented"] == 200, "augmented " + sa["augmented"].dump() + ", expected 200");
    const auto ma = testsupport::slurp(dir / "a" / "manifest.jsonl");
    o.check(ma == testsupport::slurp(dir / "b" / "manifest.jsonl"), "manifest differs between two runs");
    o.check(ma == testsupport::slurp(dir / "c" / "manifest.jsonl"), "manifest differs between 1 and 8 workers");
    std::size_t images = 0;
    for (const auto& rec : read_manifest(dir / "a" / "manifest.jsonl")) {
        ++images;
        const auto pa = dir / "a" / rec.image;
        for (const char* other : {"b", "c"}) {
            const auto po = dir / other / rec.image;
            if (testsupport::slurp(pa) == testsupport::slurp(po)) continue;
            const auto ia = read_png(pa), io = read_png(po);
            o.check(ia.width == io.width && ia.height == io.height && ia.pixels == io.pixels, "pixels differ for " + rec.image);
        }
    }
    const unsigned cores = std::max(1u, std::thread::hardware_concurrency());
    o.check(wall < 120.0, "1000 pages took " + fmt(wall, 1) + " s (limit 120 s)");
    o.detail = std::to_string(images) + " images and manifests identical across 2 runs and workers {1, 8}; 1000 pages in " + fmt(wall, 1) +
               " s with 8 workers on " + std::to_string(cores) + " core(s)";
    return o;
}

// ---------------------------------------------------------------------------
// 2. Structure-weighted loss

Outcome loss() {
    Outcome o;
    const auto ex = structured_loss({"<table>", "a", "</table>"}, {-1, -2, -1});
    o.check(ex.loss == 10.0, "worked example gave " + fmt(ex.loss, 17));

    std::mt19937_64 gen(2);
    const auto vocab = vocab::all_tokens();
    const std::vector<std::string> words{"a", "x", "1", "the", "\\alpha", "表"};
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto n = 1 + gen() % 64;
        std::vector<std::string> toks;
        std::vector<double> lp;
        for (std::size_t k = 0; k < n; ++k) {
            toks.push_back(gen() % 2 ? vocab[gen() % vocab.size()] : words[gen() % words.size()]);
            lp.push_back(-std::uniform_real_distribution<double>(0, 20)(gen));
        }
        LossSpec one;
        one.lambda = 1;
        const double diff = std::abs(structured_loss(toks, lp, one).loss - unweighted_nll(lp));
        worst = std::max(worst, diff);
        o.check(diff <= 1e-12, "lambda=1 differs from NLL by " + std::to_string(diff));

        LossSpec l1, l2;
        l1.lambda = std::uniform_real_distribution<double>(1.5, 10)(gen);
        l2.lambda = l1.lambda + 1;
        const auto w1 = structured_loss(toks, lp, l1).weights, w2 = structured_loss(toks, lp, l2).weights;
        for (std::size_t k = 0; k < n; ++k) {
            const bool structural = std::find(vocab.begin(), vocab.end(), toks[k]) != vocab.end();
            o.check((w1[k] != w2[k]) == structural, "weight change at position " + std::to_string(k) + " (" + toks[k] + ")");
        }
    }
    o.detail = "example = " + fmt(ex.loss, 1) + "; 10^4 inputs, max |lambda=1 - NLL| = " + sci(worst);
    return o;
}

// ---------------------------------------------------------------------------
// 3. Tree edit distance

Outcome teds_oracle() {
    Outcome o;
    std::mt19937_64 gen(3);
    int pairs = 0;
    for (int i = 0; i < 300; ++i) {
        const auto a = testsupport::random_tree(gen, 1 + static_cast<int>(gen() % 7));
        const auto b = testsupport::random_tree(gen, 1 + static_cast<int>(gen() % 7));
        const auto got = tree_edit_distance(&a, &b);
        const auto want = testsupport::brute_force_ted(a, b);
        const bool same = got.exact && static_cast<__int128>(got.numerator) * want.den == want.num * static_cast<__int128>(got.denominator);
        o.check(same, "pair " + std::to_string(i) + " disagrees with the exhaustive oracle");
        ++pairs;
    }
    const auto langs = supported_languages();
    int tables = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        auto e = generate_element(ElementKind::Table, langs[s % langs.size()], s);
        if (s % 4 == 1) {
            MutationRule r;
            r.kind = s % 8 == 1 ? MutationKind::TableRowShuffle : MutationKind::TableColMerge;
            r.seed = s;
            try {
                e = mutate_element(e, r);
            } catch (const Error&) {
                // single-column tables cannot be merged
            }
        }
        const auto& t = std::get<Table>(e.markup);
        o.check(!validate_markup(e.markup).has_value(), "generated table " + std::to_string(s) + " is invalid");
        o.check(teds(t, t) == 1.0, "teds(t, t) != 1 for table " + std::to_string(s));
        ++tables;
    }
    o.detail = std::to_string(pairs) + " tree pairs equal the exhaustive oracle; teds(t,t)=1 on " + std::to_string(tables) + " tables";
    return o;
}

// ---------------------------------------------------------------------------
// 4. Edit distance

Outcome edit_distance() {
    Outcome o;
    const double kitten = text_edit_score("kitten", "sitting");
    o.check(kitten == 3.0 / 7.0, "kitten/sitting gave " + fmt(kitten, 17));
    std::mt19937_64 gen(4);
    const std::string alphabet = "abcxyz";
    for (int i = 0; i < 1000; ++i) {
        std::string a, b;
        for (auto n = gen() % 51; n > 0; --n) a += alphabet[gen() % alphabet.size()];
        for (auto n = gen() % 51; n > 0; --n) b += alphabet[gen() % alphabet.size()];
        o.check(levenshtein(a, b) == testsupport::reference_levenshtein(a, b), "mismatch on '" + a + "' / '" + b + "'");
        const double norm = std::max(a.size(), b.size()) == 0 ? 0.0
                                                                : static_cast<double>(testsupport::reference_levenshtein(a, b)) /
                                                                      static_cast<double>(std::max(a.size(), b.size()));
        o.check(text_edit_score(a, b) == norm, "normalized score mismatch on '" + a + "' / '" + b + "'");
    }
    o.detail = "kitten/sitting = " + fmt(kitten, 6) + "; 1000 random pairs equal the full-table reference";
    return o;
}

// ---------------------------------------------------------------------------
// 5. Repetition metric

struct RepItem {
    std::string name;
    std::vector<std::string> tokens;
    std::size_t max_len;
    bool expected;
};

std::vector<std::string> times(const std::vector<std::string>& unit, int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.insert(out.end(), unit.begin(), unit.end());
    return out;
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::vector<std::string> fresh(int n, const std::string& stem = "f") {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back(stem + std::to_string(i));
    return out;
}

std::vector<RepItem> repetition_fixture() {
    const std::vector<std::string> row{"<tr>", "<td>", "a", "</td>", "</tr>"};
    const std::vector<std::string> row2{"<tr>", "<td>", "1", "</td>", "<td>", "2", "</td>", "</tr>"};
    const std::vector<std::string> sub{"x", "_", "{", "1", "}", "+"};
    const std::vector<std::string> words{"the", "cat", "sat", "on"};
    const std::vector<std::string> frac{"\\frac", "{", "a", "}", "{", "b", "}"};
    const auto long_unit = fresh(20, "u");
    const auto p7 = cat({"<doc>", "<table>"}, times(row2, 11));
    std::vector<RepItem> v{
        // repeated more than 10 times and at the length limit
        {"table row x12 at limit", times(row, 12), 60, true},
        {"subscript x15 at limit", times(sub, 15), 90, true},
        {"words x20 at limit", times(words, 20), 80, true},
        {"prefix then row x11", cat(fresh(10), times(row, 11)), 65, true},
        {"x11 plus partial unit", cat(times(words, 11), {"the", "cat"}), 46, true},
        {"7-token unit x14", times(fresh(7, "s"), 14), 98, true},
        {"stream rows x11", p7, p7.size(), true},
        {"4-token unit x30", times({"a", "b", "c", "d"}, 30), 120, true},
        {"frac x12 after prefix", cat({"<doc>", "<formula>"}, times(frac, 12)), 86, true},
        {"20-token unit x11", times(long_unit, 11), 220, true},
        // repeated enough but shorter than the limit
        {"table row x12 short", times(row, 12), 200, false},
        {"words x20 short", times(words, 20), 81, false},
        {"frac x15 short", times(frac, 15), 1000, false},
        {"subscript x11 short", cat(times(sub, 11), fresh(3)), 100, false},
        {"20-token unit x12 short", times(long_unit, 12), 8192, false},
        // at the limit but not repeated more than 10 times
        {"row x10 padded", cat(times(row, 10), fresh(30)), 80, false},
        {"words x9 padded", cat(times(words, 9), fresh(44)), 80, false},
        {"no repetition", fresh(64), 64, false},
        {"interrupted 6+6", cat(cat(times(row, 6), {"<br>"}), times(row, 6)), 61, false},
        {"two units x8 each", cat(times(words, 8), times(frac, 8)), 88, false},
    };
    return v;
}

Outcome repetition() {
    Outcome o;
    int tp = 0, fp = 0, fn = 0, tn = 0;
    const auto items = repetition_fixture();
    for (const auto& it : items) {
        const bool flag = repetition_flag(it.tokens, it.max_len).flag;
        if (flag && it.expected) ++tp;
        if (flag && !it.expected) ++fp;
        if (!flag && it.expected) ++fn;
        if (!flag && !it.expected) ++tn;
        o.check(flag == it.expected, "item '" + it.name + "' flagged " + (flag ? "true" : "false"));
    }
    const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
    const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
    o.check(items.size() == 20, "fixture size");
    o.check(precision == 1.0 && recall == 1.0, "precision/recall below 1");
    o.detail = std::to_string(items.size()) + " items, precision " + fmt(precision, 2) + ", recall " + fmt(recall, 2);
    return o;
}

// ---------------------------------------------------------------------------
// 6. Augmentation safety

Range random_range(Rng& rng, double lo, double hi) {
    double a = rng.uniform(lo, hi), b = rng.uniform(lo, hi);
    if (a > b) std::swap(a, b);
    return {a, b};
}

AugmentationSpec random_spec(Rng& rng, bool analytic_only) {
    AugmentationSpec s;
    auto prob = [&] { return rng.bernoulli(0.3) ? 1.0 : rng.uniform(0, 1); };
    if (rng.bernoulli(0.6)) s.transforms.push_back({PerspectiveSpec{rng.uniform(0, 0.1)}, prob()});
    if (!analytic_only) {
        if (rng.bernoulli(0.5)) {
            const auto axes = std::array<std::string, 3>{"x", "y", "random"};
            s.transforms.push_back({BendSpec{random_range(rng, 0, 12), random_range(rng, 50, 600), axes[rng.index(3)]}, prob()});
        }
        if (rng.bernoulli(0.5)) s.transforms.push_back({WrinkleSpec{static_cast<int>(rng.uniform_int(2, 16)), rng.uniform(0, 6)}, prob()});
    }
    if (rng.bernoulli(0.6)) {
        const double turn = 90.0 * static_cast<double>(rng.uniform_int(-2, 2));
        s.transforms.push_back({RotateSpec{rng.bernoulli(0.2) ? Range{turn, turn} : random_range(rng, -45, 45)}, prob()});
    }
    if (rng.bernoulli(0.5)) {
        std::optional<double> dir;
        if (rng.bernoulli(0.5)) dir = rng.uniform(0, 360);
        s.transforms.push_back({IlluminationSpec{dir, random_range(rng, 0.5, 1.3)}, prob()});
    }
    if (rng.bernoulli(0.5)) s.transforms.push_back({ExposureSpec{random_range(rng, 0.6, 1.6)}, prob()});
    if (rng.bernoulli(0.6)) {
        const auto tex = std::array<std::string, 5>{"wood", "desk", "moire", "plain", "random"};
        s.transforms.push_back({BackgroundSpec{tex[rng.index(5)], random_range(rng, 0.6, 1.0)}, prob()});
    }
    return s;
}

AugmentationSpec identity_spec(Rng& rng) {
    AugmentationSpec s;
    if (rng.bernoulli(0.5)) s.transforms.push_back({PerspectiveSpec{0.0}, 1.0});
    if (rng.bernoulli(0.5)) s.transforms.push_back({BendSpec{{0, 0}, {100, 300}, "random"}, 1.0});
    if (rng.bernoulli(0.5)) s.transforms.push_back({WrinkleSpec{8, 0.0}, 1.0});
    if (rng.bernoulli(0.5)) s.transforms.push_back({RotateSpec{{0, 0}}, 1.0});
    if (rng.bernoulli(0.5)) s.transforms.push_back({IlluminationSpec{std::nullopt, {1, 1}}, 1.0});
    if (rng.bernoulli(0.5)) s.transforms.push_back({ExposureSpec{{1, 1}}, 1.0});
    if (rng.bernoulli(0.3)) s.transforms.push_back({ExposureSpec{{0.5, 2}}, 0.0});  // never fires
    if (rng.bernoulli(0.5)) s.transforms.push_back({BackgroundSpec{"plain", {1, 1}}, 1.0});
    return s;
}

Outcome augmentation_safety() {
    Outcome o;
    const auto& repo = testsupport::small_repo();
    const auto& lib = testsupport::library();
    Rng rng(6);
    int analytic = 0, identity = 0, general = 0, boxes = 0;
    double worst_edge = 0;
    for (int i = 0; i < 1000; ++i) {
        FillPolicy fp;
        fp.page_width = static_cast<int>(rng.uniform_int(240, 640));
        fp.page_height = static_cast<int>(rng.uniform_int(320, 900));
        const auto page = compose_page(sample_template(lib, {}, rng.next()), repo, fp, rng.next(), "acc" + std::to_string(i));
        const std::string gt_before = page.ground_truth.stream;
        const auto sidecar_before = page.ground_truth.sidecar;
        const auto canvas = render_page(page);
        const int mode = i % 3;
        const auto spec = mode == 0 ? random_spec(rng, false) : mode == 1 ? random_spec(rng, true) : identity_spec(rng);
        o.check(validate_spec(spec).empty(), "random spec invalid: " + join(validate_spec(spec), "; "));
        const auto [out, rec] = augment(canvas, spec, rng.next());
        const auto remapped = remap_bboxes(page.ground_truth.sidecar, rec);

        // ground truth is untouched by augmentation
        o.check(page.ground_truth.stream == gt_before, "GT stream changed on page " + std::to_string(i));
        o.check(page.ground_truth.sidecar == sidecar_before, "sidecar changed on page " + std::to_string(i));
        o.check(stage2_record(page, "x.png", true, {}).target == gt_before, "augmented record target differs on page " + std::to_string(i));
        o.check(token_texts(stage2_record(page, "x.png", true, {}).target) == token_texts(gt_before), "token stream differs");

        if (mode == 0) ++general;
        if (mode == 1) {
            ++analytic;
            for (std::size_t k = 0; k < remapped.size(); ++k) {
                const auto e = testsupport::oracle_edges(rec, sidecar_before[k].bbox);
                const auto& g = remapped[k].bbox;
                const double err = std::max({std::abs(g.x - e[0]), std::abs(g.y - e[1]), std::abs(g.right() - e[2]), std::abs(g.bottom() - e[3])});
                worst_edge = std::max(worst_edge, err);
                o.check(err <= 0.5 + 1e-9, "page " + std::to_string(i) + " block " + std::to_string(k) + " off by " + fmt(err, 4) + " px");
                ++boxes;
            }
        }
        if (mode == 2) {
            ++identity;
            o.check(out.width == canvas.width && out.height == canvas.height && out.pixels == canvas.pixels,
                    "identity spec changed pixels on page " + std::to_string(i));
            o.check(remapped == sidecar_before, "identity spec moved boxes on page " + std::to_string(i));
        }
    }
    o.detail = "1000 pairs (" + std::to_string(general) + " general, " + std::to_string(analytic) + " analytic, " + std::to_string(identity) +
               " identity); GT unchanged; " + std::to_string(boxes) + " remapped boxes, max edge error " + fmt(worst_edge, 4) + " px";
    return o;
}

// ---------------------------------------------------------------------------
// 7. Composition validity

double box_iou(const PixelBox& a, const PixelBox& b) {
    const long ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const long iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = static_cast<double>(ix * iy);
    const double uni = static_cast<double>(long(a.w) * a.h + long(b.w) * b.h) - inter;
    return uni <= 0 ? 0.0 : inter / uni;
}

Outcome composition_validity() {
    Outcome o;
    RepositoryConfig rc;
    rc.seed = 77;
    rc.per_kind = 120;
    rc.titles = true;
    const auto repo = build_repository(rc);
    auto lib = builtin_library();
    extend_library(lib, lib.size() + 200, 7);
    FillPolicy fp;
    fp.enabled_kinds.insert(ElementKind::Title);
    std::size_t blocks = 0, glyphs = 0, overlaps = 0, bad_orders = 0, glyph_mismatch = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const auto seed = derive_seed(707, "page", static_cast<std::uint64_t>(i));
        const auto& tmpl = sample_template(lib, {}, derive_seed(seed, "template"));
        const auto page = compose_page(tmpl, repo, fp, seed, "c" + std::to_string(i));
        const auto& pl = page.placements;
        const auto& side = page.ground_truth.sidecar;
        const auto parsed = parse_ground_truth(page.ground_truth.stream);

        for (std::size_t a = 0; a < pl.size(); ++a)
            for (std::size_t b = a + 1; b < pl.size(); ++b)
                if (box_iou(pl[a].bbox, pl[b].bbox) > 0.01) ++overlaps;

        // reading order: sidecar indices are a permutation matching stream order and template order
        std::vector<std::size_t> idx;
        for (const auto& s : side) idx.push_back(s.order_index);
        std::vector<std::size_t> sorted = idx;
        std::sort(sorted.begin(), sorted.end());
        bool order_ok = parsed.warnings.empty() && parsed.blocks.size() == side.size() && pl.size() == side.size();
        for (std::size_t k = 0; k < sorted.size(); ++k) order_ok = order_ok && sorted[k] == k && idx[k] == k;
        for (std::size_t k = 1; order_ok && k < pl.size(); ++k)
            order_ok = tmpl.regions[pl[k - 1].region_index].order_index < tmpl.regions[pl[k].region_index].order_index;
        if (!order_ok) ++bad_orders;

        // glyphs drawn for each block reproduce that block's ground-truth content in order
        const auto canvas = render_page(page);
        std::map<std::string, std::u32string> drawn;
        std::map<std::string, PixelBox> boxes_by_id;
        for (const auto& s : side) boxes_by_id[s.block_id] = s.bbox;
        bool glyph_ok = true;
        for (const auto& g : canvas.glyph_log) {
            const auto it = boxes_by_id.find(g.block_id);
            glyph_ok = glyph_ok && it != boxes_by_id.end() && it->second.contains(g.box);
            drawn[g.block_id].push_back(g.cp);
        }
        for (std::size_t k = 0; order_ok && k < side.size(); ++k) {
            glyph_ok = glyph_ok && pl[k].block_id == side[k].block_id && serialize_block(pl[k].markup) == serialize_block(parsed.blocks[k]);
            glyph_ok = glyph_ok && drawn[side[k].block_id] == content_codepoints(parsed.blocks[k]);
        }
        if (!glyph_ok) ++glyph_mismatch;
        blocks += side.size();
        glyphs += canvas.glyph_log.size();
    }
    o.check(overlaps == 0, std::to_string(overlaps) + " placement pairs exceed IoU 0.01");
    o.check(bad_orders == 0, std::to_string(bad_orders) + " pages with an invalid reading order");
    o.check(glyph_mismatch == 0, std::to_string(glyph_mismatch) + " pages where glyph logs disagree with ground truth");
    o.detail = std::to_string(n) + " pages, " + std::to_string(blocks) + " blocks, " + std::to_string(glyphs) +
               " glyphs; overlaps " + std::to_string(overlaps) + ", bad orders " + std::to_string(bad_orders) + ", glyph mismatches " +
               std::to_string(glyph_mismatch);
    return o;
}

// ---------------------------------------------------------------------------
// 8. Degradation report

DatasetRecord page_record(const std::string& id, std::vector<Markup> blocks) {
    DatasetRecord r;
    r.target = serialize_ground_truth(blocks);
    r.meta = {{"page_id", id}};
    return r;
}

Table one_row(std::vector<std::string> cells) {
    Table t;
    TableNode tr{"tr", 1, 1, {}, {}};
    for (auto& c : cells) tr.children.push_back(make_td(c));
    t.root.children.push_back(tr);
    return t;
}

Outcome degradation() {
    Outcome o;
    const Formula f{{"a", "+", "b", "=", "c", "+", "d", "e"}};
    Formula f_wild = f;
    f_wild.tokens.back() = "f";
    const std::vector<DatasetRecord> gt{page_record("o1", {Paragraph{{"abcd"}}}), page_record("w1", {Paragraph{{"abcd"}}}),
                                        page_record("o2", {one_row({"a", "b"})}),   page_record("w2", {one_row({"a", "b"})}),
                                        page_record("o3", {f}),                     page_record("w3", {f})};
    const std::vector<DatasetRecord> pred{page_record("o1", {Paragraph{{"abcd"}}}), page_record("w1", {Paragraph{{"abcx"}}}),
                                          page_record("o2", {one_row({"a", "b"})}),   page_record("w2", {one_row({"a", "c"})}),
                                          page_record("o3", {f}),                     page_record("w3", {f_wild})};
    const auto rep = evaluate(pred, gt, WildPairing{{"o1", "w1"}, {"o2", "w2"}, {"o3", "w3"}});
    if (!rep.delta) {
        o.check(false, "no degradation block in the report");
        return o;
    }
    // hand computation: origin predictions are exact; the wild pages carry one
    // substitution in 4 characters, one relabelled leaf in a 4-node table tree
    // and one substituted token out of 8
    struct Expect {
        const char* name;
        std::optional<double> origin, wild, delta;
        double hand_origin, hand_wild;
    };
    const auto& O = *rep.origin;
    const auto& W = *rep.wild;
    const auto& D = *rep.delta;
    const std::vector<Expect> rows{
        {"text_edit", O.text_edit, W.text_edit, D.text_edit, 0.0, 0.25},
        {"text_similarity", O.text_similarity, W.text_similarity, D.text_similarity, 1.0, 0.75},
        {"table_teds", O.table_teds, W.table_teds, D.table_teds, 1.0, 0.75},
        {"formula_token_edit", O.formula_token_edit, W.formula_token_edit, D.formula_token_edit, 0.0, 0.125},
        {"reading_order_edit", O.reading_order_edit, W.reading_order_edit, D.reading_order_edit, 0.0, 0.0},
        {"repetition_rate", O.repetition_rate, W.repetition_rate, D.repetition_rate, 0.0, 0.0},
    };
    std::string shown;
    for (const auto& r : rows) {
        const bool present = r.origin && r.wild && r.delta;
        o.check(present, std::string(r.name) + " missing");
        if (!present) continue;
        o.check(*r.origin == r.hand_origin && *r.wild == r.hand_wild, std::string(r.name) + " differs from the hand computation");
        o.check(*r.delta == *r.wild - *r.origin, std::string(r.name) + " delta != wild - origin");
        o.check(*r.delta == r.hand_wild - r.hand_origin, std::string(r.name) + " delta differs from the hand value");
        shown += std::string(shown.empty() ? "" : ", ") + r.name + " " + fmt(*r.delta, 3);
    }
    for (const auto& p : rep.pairs) {
        const auto& d = p.delta;
        const auto& w = p.wild_scores;
        const auto& og = p.origin_scores;
        auto same = [](const std::optional<double>& dd, const std::optional<double>& ww, const std::optional<double>& oo) {
            return dd.has_value() == (ww && oo) && (!dd || *dd == *ww - *oo);
        };
        o.check(same(d.text_edit, w.text_edit, og.text_edit) && same(d.table_teds, w.table_teds, og.table_teds) &&
                    same(d.formula_token_edit, w.formula_token_edit, og.formula_token_edit) &&
                    same(d.reading_order_edit, w.reading_order_edit, og.reading_order_edit) &&
                    d.repetition_rate == w.repetition_rate - og.repetition_rate,
                "pair " + p.origin + "/" + p.wild + " delta != wild - origin");
    }
    o.detail = "3 pairs; " + shown;
    return o;
}

// ---------------------------------------------------------------------------
// 9. Serialization round trip and repair

Outcome round_trip() {
    Outcome o;
    std::mt19937_64 gen(9);
    std::size_t blocks = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto b = testsupport::random_blocks(gen, 8);
        const auto stream = serialize_ground_truth(b);
        const auto back = parse_ground_truth(stream);
        o.check(back.blocks == b && back.warnings.empty(), "round trip failed for list " + std::to_string(i));
        blocks += b.size();
    }
    std::size_t warned = 0;
    for (int i = 0; i < 1000; ++i) {
        auto b = testsupport::random_blocks(gen, 8);
        if (b.empty()) b.push_back(generate_element(ElementKind::Table, "en", gen()).markup);
        const auto stream = serialize_ground_truth(b);
        const auto cut = stream.substr(0, gen() % stream.size());
        try {
            const auto r = parse_ground_truth(cut);
            warned += !r.warnings.empty();
            for (const auto& m : r.blocks) o.check(!validate_markup(m).has_value(), "repaired block invalid for truncation " + std::to_string(i));
            serialize_ground_truth(r.blocks);
        } catch (const std::exception& e) {
            o.check(false, "repair aborted on truncation " + std::to_string(i) + ": " + e.what());
        }
    }
    o.detail = "10^4 lists (" + std::to_string(blocks) + " blocks) round-trip; 1000 truncations repaired without abort (" +
               std::to_string(warned) + " with warnings)";
    return o;
}

// ---------------------------------------------------------------------------
// 10. Scale smoke test

Outcome scale() {
    Outcome o;
    TempDir dir("acc-scale");
    GenerationConfig c;
    c.seed = 1010;
    c.pages = 100000;
    c.augment_fraction = 0.2;
    c.render_images = false;
    c.workers = 8;
    c.output_dir = (dir / "out").string();

    {
        std::ofstream("/proc/self/clear_refs") << "5";  // reset the peak RSS counter
    }
    const long rss0 = status_kb("VmRSS");
    const auto t0 = std::chrono::steady_clock::now();
    const auto sum = generate_dataset(c);
    const double secs = seconds_since(t0);
    const long hwm = status_kb("VmHWM");
    const double growth_mb = static_cast<double>(hwm - rss0) / 1024.0;
    o.check(rss0 > 0 && hwm > 0, "cannot read /proc/self/status");
    o.check(growth_mb < 256.0, "RSS grew by " + fmt(growth_mb, 1) + " MB");
    o.check(sum.stage2_records == 100000, "stage-2 records: " + std::to_string(sum.stage2_records) + " (rejected " +
                                               std::to_string(sum.rejected) + ")");

    // stream the manifest back: every line is a valid stage-2 record with a unique id
    std::ifstream in(dir / "out" / "manifest.jsonl", std::ios::binary);
    std::string line;
    std::size_t lines = 0, bad = 0;
    std::uint64_t digest = kFnvOffset;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
        ++lines;
        digest = fnv1a64(line + "\n", digest);
        try {
            const auto rec = json::parse(line).get<DatasetRecord>();
            const auto parsed = parse_ground_truth(rec.target);
            if (rec.stage != 2 || !parsed.warnings.empty() || !ids.insert(record_key(rec)).second) ++bad;
        } catch (const std::exception&) {
            ++bad;
        }
    }
    o.check(lines == sum.stage2_records && bad == 0, std::to_string(bad) + " invalid manifest lines of " + std::to_string(lines));
    o.check(hex64(digest) == sum.manifest_digest, "manifest digest mismatch");
    o.detail = std::to_string(lines) + " records in " + fmt(secs, 1) + " s, RSS growth " + fmt(growth_mb, 1) + " MB (VmHWM " +
               std::to_string(hwm / 1024) + " MB), manifest valid";
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"determinism", determinism},
        {"structured loss", loss},
        {"TEDS oracle", teds_oracle},
        {"edit distance", edit_distance},
        {"repetition metric", repetition},
        {"augmentation safety", augmentation_safety},
        {"composition validity", composition_validity},
        {"degradation report", degradation},
        {"round trip", round_trip},
        {"scale smoke test", scale},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!selected.empty() && !selected.contains(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        all = all && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << ": " << o.detail;
        for (const auto& p : o.problems) std::cout << " | " << p;
        std::cout << " (" << fmt(seconds_since(t0), 1) << " s)" << std::endl;
    }
    return all ? 0 : 1;
}
