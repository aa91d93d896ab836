#pragma once

// Evaluation metrics and the structure-token weighted loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "dataset.hpp"
#include "doc_model.hpp"

namespace docforge {

// ---------------------------------------------------------------------------
// Weighted loss

enum class Reduction { Sum, Mean };

inline std::unordered_set<std::string> default_structure_set() {
    const auto all = vocab::all_tokens();
    return {all.begin(), all.end()};
}

struct LossSpec {
    double lambda = 4.0;
    std::unordered_set<std::string> structure_tokens = default_structure_set();
    Reduction reduction = Reduction::Sum;
};

struct LossResult {
    double loss = 0;
    std::vector<double> weights;
};

/// Weighted negative log-likelihood over target positions: positions whose
/// token is in the structure set get weight lambda, all others weight 1.
inline LossResult structured_loss(const std::vector<std::string>& tokens, const std::vector<double>& logprobs, const LossSpec& spec = {}) {
    if (tokens.size() != logprobs.size())
        fail(ErrorCode::Validation, "token count " + std::to_string(tokens.size()) + " != log-prob count " + std::to_string(logprobs.size()));
    if (!(spec.lambda > 0) || !std::isfinite(spec.lambda)) fail(ErrorCode::Validation, "lambda must be a positive finite number");
    LossResult r;
    r.weights.resize(tokens.size());
    double acc = 0;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const double lp = logprobs[t];
        if (std::isnan(lp)) fail(ErrorCode::Validation, "log-prob at position " + std::to_string(t) + " is NaN");
        if (lp > 0) fail(ErrorCode::Validation, "log-prob at position " + std::to_string(t) + " is positive");
        r.weights[t] = spec.structure_tokens.contains(tokens[t]) ? spec.lambda : 1.0;
        acc += r.weights[t] * lp;
    }
    r.loss = -acc;
    if (spec.reduction == Reduction::Mean && !tokens.empty()) r.loss /= static_cast<double>(tokens.size());
    return r;
}

/// Same, with the target given as a serialized stream.
inline LossResult structured_loss(std::string_view stream, const std::vector<double>& logprobs, const LossSpec& spec = {}) {
    return structured_loss(token_texts(stream), logprobs, spec);
}

inline double unweighted_nll(const std::vector<double>& logprobs, Reduction red = Reduction::Sum) {
    double acc = 0;
    for (double lp : logprobs) acc += lp;
    double loss = -acc;
    if (red == Reduction::Mean && !logprobs.empty()) loss /= static_cast<double>(logprobs.size());
    return loss;
}

// ---------------------------------------------------------------------------
// Edit distances

/// Levenshtein distance between two sequences with unit costs.
template <typename SeqA, typename SeqB>
std::size_t levenshtein(const SeqA& a, const SeqB& b) {
    const std::size_t n = std::size(a), m = std::size(b);
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    auto ia = std::begin(a);
    for (std::size_t i = 1; i <= n; ++i, ++ia) {
        cur[0] = i;
        auto ib = std::begin(b);
        for (std::size_t j = 1; j <= m; ++j, ++ib) {
            const std::size_t sub = prev[j - 1] + (*ia == *ib ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

/// Levenshtein distance over Unicode code points, normalized by the longer
/// length. 0 when both are empty.
inline double text_edit_score(std::string_view pred, std::string_view gt) {
    const auto a = to_u32(pred), b = to_u32(gt);
    const auto len = std::max(a.size(), b.size());
    if (len == 0) return 0.0;
    return static_cast<double>(levenshtein(a, b)) / static_cast<double>(len);
}

inline double formula_token_edit(const std::vector<std::string>& pred, const std::vector<std::string>& gt) {
    const auto len = std::max(pred.size(), gt.size());
    if (len == 0) return 0.0;
    return static_cast<double>(levenshtein(pred, gt)) / static_cast<double>(len);
}

// ---------------------------------------------------------------------------
// Tree edit distance

struct TedTree {
    std::string label;
    std::string text;
    std::vector<TedTree> children;
};

inline std::size_t tree_size(const TedTree& t) {
    std::size_t n = 1;
    for (const auto& c : t.children) n += tree_size(c);
    return n;
}

/// Table as a labelled tree. Cell labels carry their spans, so cells only
/// compare by text when their spans agree.
inline TedTree table_tree(const TableNode& n) {
    TedTree t;
    t.label = n.tag;
    if (n.tag == "td") {
        if (n.rowspan > 1) t.label += " r" + std::to_string(n.rowspan);
        if (n.colspan > 1) t.label += " c" + std::to_string(n.colspan);
        t.text = n.text;
    }
    for (const auto& c : n.children) t.children.push_back(table_tree(c));
    return t;
}

inline TedTree table_tree(const Table& t) { return table_tree(t.root); }

/// An edit distance held as an exact fraction when possible.
struct TedResult {
    double distance = 0;
    std::int64_t numerator = 0;
    std::int64_t denominator = 1;
    bool exact = true;
};

namespace detail {

struct TedNodeInfo {
    const TedTree* node;
    std::size_t leftmost;  // postorder index of leftmost leaf descendant
    std::u32string text;
};

inline void ted_postorder(const TedTree& t, std::vector<TedNodeInfo>& out) {
    const std::size_t first = out.size();
    for (const auto& c : t.children) ted_postorder(c, out);
    const std::size_t leftmost = t.children.empty() ? out.size() : out[first].leftmost;
    out.push_back({&t, leftmost, to_u32(t.text)});
}

inline std::vector<std::size_t> ted_keyroots(const std::vector<TedNodeInfo>& nodes) {
    // A node is a keyroot if no later node in postorder shares its leftmost leaf.
    std::vector<std::size_t> out;
    std::vector<bool> seen(nodes.size(), false);
    for (std::size_t i = nodes.size(); i-- > 0;) {
        if (!seen[nodes[i].leftmost]) {
            seen[nodes[i].leftmost] = true;
            out.push_back(i);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Zhang-Shasha over postorder arrays with a caller-supplied rename cost.
template <typename Cost, typename Rename>
Cost zhang_shasha(const std::vector<TedNodeInfo>& A, const std::vector<TedNodeInfo>& B, Cost unit, Rename&& rename) {
    const std::size_t n = A.size(), m = B.size();
    std::vector<Cost> td(n * m, Cost{});
    std::vector<Cost> fd((n + 1) * (m + 1), Cost{});
    auto FD = [&](std::size_t i, std::size_t j) -> Cost& { return fd[i * (m + 1) + j]; };
    for (auto ka : ted_keyroots(A)) {
        for (auto kb : ted_keyroots(B)) {
            const std::size_t la = A[ka].leftmost, lb = B[kb].leftmost;
            // FD(x, y) is the distance between forests A[la..la+x-1] and B[lb..lb+y-1].
            const std::size_t nx = ka - la + 1, ny = kb - lb + 1;
            FD(0, 0) = Cost{};
            for (std::size_t x = 1; x <= nx; ++x) FD(x, 0) = FD(x - 1, 0) + unit;
            for (std::size_t y = 1; y <= ny; ++y) FD(0, y) = FD(0, y - 1) + unit;
            for (std::size_t x = 1; x <= nx; ++x) {
                const std::size_t i = la + x - 1;
                for (std::size_t y = 1; y <= ny; ++y) {
                    const std::size_t j = lb + y - 1;
                    const Cost del = FD(x - 1, y) + unit;
                    const Cost ins = FD(x, y - 1) + unit;
                    if (A[i].leftmost == la && B[j].leftmost == lb) {
                        const Cost best = std::min({del, ins, FD(x - 1, y - 1) + rename(A[i], B[j])});
                        FD(x, y) = best;
                        td[i * m + j] = best;
                    } else {
                        const std::size_t px = A[i].leftmost - la, py = B[j].leftmost - lb;
                        FD(x, y) = std::min({del, ins, FD(px, py) + td[i * m + j]});
                    }
                }
            }
        }
    }
    return td[(n - 1) * m + (m - 1)];
}

inline bool mul_ok(std::int64_t a, std::int64_t b, std::int64_t& out) { return !__builtin_mul_overflow(a, b, &out); }

}  // namespace detail

/// Rename cost between two tree nodes: 1 when labels differ, otherwise the
/// normalized code-point edit distance of their texts.
inline double ted_rename_cost(const TedTree& a, const TedTree& b) {
    if (a.label != b.label) return 1.0;
    return text_edit_score(a.text, b.text);
}

/// Ordered tree edit distance with unit insert/delete costs. A null pointer
/// stands for the empty tree. Costs are accumulated as integers over the
/// least common multiple of all text-length denominators, so the result is
/// exact whenever that multiple is representable.
inline TedResult tree_edit_distance(const TedTree* a, const TedTree* b) {
    TedResult r;
    if (!a || !b) {
        const auto n = static_cast<std::int64_t>(a ? tree_size(*a) : b ? tree_size(*b) : 0);
        r.numerator = n;
        r.distance = static_cast<double>(n);
        return r;
    }
    std::vector<detail::TedNodeInfo> A, B;
    detail::ted_postorder(*a, A);
    detail::ted_postorder(*b, B);

    std::set<std::size_t> lens_a, lens_b;
    for (const auto& x : A) lens_a.insert(x.text.size());
    for (const auto& y : B) lens_b.insert(y.text.size());
    std::int64_t unit = 1;
    bool exact = true;
    for (auto la : lens_a)
        for (auto lb : lens_b) {
            const auto d = static_cast<std::int64_t>(std::max(la, lb));
            if (d <= 1) continue;
            const auto g = std::gcd(unit, d);
            std::int64_t next;
            if (!detail::mul_ok(unit / g, d, next)) exact = false;
            else unit = next;
        }
    const auto total = static_cast<std::int64_t>(A.size() + B.size());
    std::int64_t bound;
    if (exact && !detail::mul_ok(unit, total, bound)) exact = false;

    if (exact) {
        auto rename = [&](const detail::TedNodeInfo& x, const detail::TedNodeInfo& y) -> std::int64_t {
            if (x.node->label != y.node->label) return unit;
            const auto len = static_cast<std::int64_t>(std::max(x.text.size(), y.text.size()));
            if (len == 0) return 0;
            return static_cast<std::int64_t>(levenshtein(x.text, y.text)) * (unit / len);
        };
        const auto units = detail::zhang_shasha<std::int64_t>(A, B, unit, rename);
        const auto g = std::gcd(units, unit);
        r.numerator = units / g;
        r.denominator = unit / g;
        r.distance = static_cast<double>(r.numerator) / static_cast<double>(r.denominator);
        return r;
    }
    auto rename = [](const detail::TedNodeInfo& x, const detail::TedNodeInfo& y) { return ted_rename_cost(*x.node, *y.node); };
    r.exact = false;
    r.distance = detail::zhang_shasha<double>(A, B, 1.0, rename);
    r.numerator = 0;
    r.denominator = 0;
    return r;
}

/// 1 - TED / max(|a|, |b|); two empty trees are identical.
inline double teds(const TedTree* a, const TedTree* b) {
    const auto na = a ? tree_size(*a) : 0, nb = b ? tree_size(*b) : 0;
    const auto n = std::max(na, nb);
    if (n == 0) return 1.0;
    const double s = 1.0 - tree_edit_distance(a, b).distance / static_cast<double>(n);
    return std::clamp(s, 0.0, 1.0);
}

inline double teds(const Table& pred, const Table& gt) {
    const auto a = table_tree(pred), b = table_tree(gt);
    return teds(&a, &b);
}

// ---------------------------------------------------------------------------
// Reading order

/// Text used to compare blocks: the block's serialized markup.
inline std::string block_text(const Markup& m) { return serialize_block(m); }

struct OrderMatch {
    double edit = 0;
    std::vector<long> matched;  // for each pred block, the matched GT index or -1
};

/// Greedy block matching (same kind, highest similarity first, similarity
/// strictly above `threshold`), then Levenshtein between the matched GT
/// indices in prediction order and 0..n-1, divided by the GT block count.
inline OrderMatch reading_order_match(const std::vector<Markup>& pred, const std::vector<Markup>& gt, double threshold = 0.5) {
    OrderMatch out;
    out.matched.assign(pred.size(), -1);
    if (gt.empty()) {
        out.edit = pred.empty() ? 0.0 : 1.0;
        return out;
    }
    struct Cand {
        double sim;
        std::size_t p, g;
    };
    std::vector<Cand> cands;
    std::vector<std::string> gt_text(gt.size());
    for (std::size_t g = 0; g < gt.size(); ++g) gt_text[g] = block_text(gt[g]);
    for (std::size_t p = 0; p < pred.size(); ++p) {
        const auto pt = block_text(pred[p]);
        for (std::size_t g = 0; g < gt.size(); ++g) {
            if (kind_of(pred[p]) != kind_of(gt[g])) continue;
            const double sim = 1.0 - text_edit_score(pt, gt_text[g]);
            if (sim > threshold) cands.push_back({sim, p, g});
        }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
        if (x.sim != y.sim) return x.sim > y.sim;
        if (x.p != y.p) return x.p < y.p;
        return x.g < y.g;
    });
    std::vector<bool> gt_used(gt.size(), false);
    for (const auto& c : cands) {
        if (out.matched[c.p] >= 0 || gt_used[c.g]) continue;
        out.matched[c.p] = static_cast<long>(c.g);
        gt_used[c.g] = true;
    }
    std::vector<long> seq, ref(gt.size());
    for (auto m : out.matched)
        if (m >= 0) seq.push_back(m);
    std::iota(ref.begin(), ref.end(), 0L);
    out.edit = static_cast<double>(levenshtein(seq, ref)) / static_cast<double>(gt.size());
    return out;
}

inline double reading_order_edit(const std::vector<Markup>& pred, const std::vector<Markup>& gt) {
    return reading_order_match(pred, gt).edit;
}

// ---------------------------------------------------------------------------
// Repetition

struct RepetitionOptions {
    std::size_t min_period = 4;
    std::size_t min_repeats = 11;  // "more than 10"
    bool any = false;              // flag on either condition instead of both
};

struct RepetitionResult {
    bool flag = false;
    bool repeated = false;  // a qualifying periodic run exists
    bool at_max_len = false;
    std::size_t length = 0;
    std::vector<std::string> pattern;
    std::size_t period = 0;
    std::size_t repeats = 0;
    std::size_t run_start = 0;
};

namespace detail {

/// Length of the shortest period of `v`.
inline std::size_t primitive_period(const std::vector<std::string>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> border(n + 1, 0);
    for (std::size_t i = 1, k = 0; i < n; ++i) {
        while (k > 0 && v[i] != v[k]) k = border[k];
        if (v[i] == v[k]) ++k;
        border[i + 1] = k;
    }
    const std::size_t p = n - border[n];
    return n % p == 0 ? p : n;
}

}  // namespace detail

/// Looks for a pattern of at least `min_period` tokens (not itself a power of
/// a shorter pattern) repeated back to back at least `min_repeats` times, and
/// checks whether the output reached `max_len` tokens.
inline RepetitionResult repetition_flag(const std::vector<std::string>& tokens, std::size_t max_len, const RepetitionOptions& opt = {}) {
    if (max_len == 0) fail(ErrorCode::Validation, "max_len must be positive");
    RepetitionResult r;
    r.length = tokens.size();
    r.at_max_len = tokens.size() >= max_len;
    const std::size_t n = tokens.size();
    const std::size_t reps = std::max<std::size_t>(opt.min_repeats, 2);
    for (std::size_t p = std::max<std::size_t>(opt.min_period, 1); p * reps <= n; ++p) {
        // Maximal runs of positions i with tokens[i] == tokens[i + p].
        std::size_t i = 0;
        while (i + p < n) {
            if (tokens[i] != tokens[i + p]) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j + p < n && tokens[j] == tokens[j + p]) ++j;
            const std::size_t span = (j - i) + p;  // tokens[i, i+span) has period p
            const std::size_t count = span / p;
            if (count >= reps && count > r.repeats) {
                std::vector<std::string> pat(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                             tokens.begin() + static_cast<std::ptrdiff_t>(i + p));
                if (detail::primitive_period(pat) == p) {
                    r.repeated = true;
                    r.pattern = std::move(pat);
                    r.period = p;
                    r.repeats = count;
                    r.run_start = i;
                }
            }
            i = j + 1;
        }
    }
    r.flag = opt.any ? (r.repeated || r.at_max_len) : (r.repeated && r.at_max_len);
    return r;
}

inline RepetitionResult repetition_flag(std::string_view stream, std::size_t max_len, const RepetitionOptions& opt = {}) {
    return repetition_flag(token_texts(stream), max_len, opt);
}

inline json to_json_value(const RepetitionResult& r) {
    json j{{"flag", r.flag}, {"repeated", r.repeated}, {"at_max_len", r.at_max_len}, {"length", r.length}};
    if (r.repeated) {
        j["pattern"] = join(r.pattern, " ");
        j["period"] = r.period;
        j["repeats"] = r.repeats;
        j["run_start"] = r.run_start;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Page and manifest evaluation

struct PageScores {
    std::string page_id;
    std::optional<double> text_edit;
    std::optional<double> table_teds;
    std::optional<double> formula_token_edit;
    std::optional<double> reading_order_edit;
    RepetitionResult repetition;
};

/// Metric values averaged over the pages that have them.
struct AggregateScores {
    std::size_t pages = 0;
    std::optional<double> text_edit;
    std::optional<double> text_similarity;
    std::optional<double> table_teds;
    std::optional<double> formula_token_edit;
    std::optional<double> reading_order_edit;
    double repetition_rate = 0;
};

struct PairDelta {
    std::string origin, wild;
    AggregateScores origin_scores, wild_scores, delta;
};

struct EvalReport {
    std::vector<PageScores> pages;
    AggregateScores aggregate;
    std::optional<AggregateScores> origin, wild, delta;
    std::vector<PairDelta> pairs;
};

namespace detail {

inline std::string plain_text(const Markup& m) {
    if (const auto* p = std::get_if<Paragraph>(&m)) return join(p->lines, "\n");
    if (const auto* t = std::get_if<Title>(&m)) return t->text;
    return {};
}

inline std::optional<double> mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline std::optional<double> opt_delta(const std::optional<double>& w, const std::optional<double>& o) {
    if (!w || !o) return std::nullopt;
    return *w - *o;
}

}  // namespace detail

/// Scores one predicted stream against its ground truth. Text blocks
/// (paragraphs, titles) are concatenated in order; tables and display
/// formulas are paired by position, a missing partner scoring worst.
inline PageScores score_page(const std::string& page_id, std::string_view pred_stream, std::string_view gt_stream, std::size_t max_len,
                             const RepetitionOptions& rep = {}) {
    PageScores s;
    s.page_id = page_id;
    const auto pred = parse_ground_truth(pred_stream).blocks;
    const auto gt = parse_ground_truth(gt_stream).blocks;

    std::vector<std::string> pt, gtt;
    std::vector<const Table*> ptab, gtab;
    std::vector<const Formula*> pf, gf;
    auto collect = [](const std::vector<Markup>& blocks, std::vector<std::string>& text, std::vector<const Table*>& tabs,
                      std::vector<const Formula*>& forms) {
        for (const auto& b : blocks) {
            if (const auto* t = std::get_if<Table>(&b)) tabs.push_back(t);
            else if (const auto* f = std::get_if<Formula>(&b)) forms.push_back(f);
            else if (std::holds_alternative<Paragraph>(b) || std::holds_alternative<Title>(b)) text.push_back(detail::plain_text(b));
        }
    };
    collect(pred, pt, ptab, pf);
    collect(gt, gtt, gtab, gf);

    if (!pt.empty() || !gtt.empty()) s.text_edit = text_edit_score(join(pt, "\n"), join(gtt, "\n"));
    if (!ptab.empty() || !gtab.empty()) {
        std::vector<double> v;
        for (std::size_t i = 0; i < std::max(ptab.size(), gtab.size()); ++i) {
            if (i < ptab.size() && i < gtab.size()) {
                v.push_back(teds(*ptab[i], *gtab[i]));
            } else {
                v.push_back(0.0);
            }
        }
        s.table_teds = detail::mean_of(v);
    }
    if (!pf.empty() || !gf.empty()) {
        std::vector<double> v;
        for (std::size_t i = 0; i < std::max(pf.size(), gf.size()); ++i)
            v.push_back(i < pf.size() && i < gf.size() ? formula_token_edit(pf[i]->tokens, gf[i]->tokens) : 1.0);
        s.formula_token_edit = detail::mean_of(v);
    }
    if (!pred.empty() || !gt.empty()) s.reading_order_edit = reading_order_edit(pred, gt);
    s.repetition = repetition_flag(pred_stream, max_len, rep);
    return s;
}

/// Means over pages in the order given (callers pass pages sorted by id).
inline AggregateScores aggregate_scores(const std::vector<const PageScores*>& pages) {
    AggregateScores a;
    a.pages = pages.size();
    std::vector<double> te, tt, fe, ro;
    std::size_t flagged = 0;
    for (const auto* p : pages) {
        if (p->text_edit) te.push_back(*p->text_edit);
        if (p->table_teds) tt.push_back(*p->table_teds);
        if (p->formula_token_edit) fe.push_back(*p->formula_token_edit);
        if (p->reading_order_edit) ro.push_back(*p->reading_order_edit);
        if (p->repetition.flag) ++flagged;
    }
    a.text_edit = detail::mean_of(te);
    if (a.text_edit) a.text_similarity = 1.0 - *a.text_edit;
    a.table_teds = detail::mean_of(tt);
    a.formula_token_edit = detail::mean_of(fe);
    a.reading_order_edit = detail::mean_of(ro);
    a.repetition_rate = pages.empty() ? 0.0 : static_cast<double>(flagged) / static_cast<double>(pages.size());
    return a;
}

/// Element-wise wild - origin; metrics missing on either side stay empty.
inline AggregateScores delta_scores(const AggregateScores& wild, const AggregateScores& origin) {
    AggregateScores d;
    d.pages = wild.pages;
    d.text_edit = detail::opt_delta(wild.text_edit, origin.text_edit);
    d.text_similarity = detail::opt_delta(wild.text_similarity, origin.text_similarity);
    d.table_teds = detail::opt_delta(wild.table_teds, origin.table_teds);
    d.formula_token_edit = detail::opt_delta(wild.formula_token_edit, origin.formula_token_edit);
    d.reading_order_edit = detail::opt_delta(wild.reading_order_edit, origin.reading_order_edit);
    d.repetition_rate = wild.repetition_rate - origin.repetition_rate;
    return d;
}

/// (origin page id, wild page id) pairs.
using WildPairing = std::vector<std::pair<std::string, std::string>>;

inline std::string record_key(const DatasetRecord& r) {
    if (r.meta.contains("page_id")) return r.meta["page_id"].get<std::string>();
    if (r.meta.contains("id")) return r.meta["id"].get<std::string>();
    if (!r.image.empty()) return r.image;
    fail(ErrorCode::Input, "manifest record has no page id");
}

struct EvalOptions {
    std::size_t max_len = kDefaultTokenBudget;
    RepetitionOptions repetition;
    int workers = 1;
};

/// Scores predictions against ground truth page by page. Both manifests
/// must hold the same page ids; pages are reported sorted by id.
inline EvalReport evaluate(const std::vector<DatasetRecord>& pred, const std::vector<DatasetRecord>& gt,
                           const std::optional<WildPairing>& pairing = std::nullopt, const EvalOptions& opt = {}) {
    std::map<std::string, const DatasetRecord*> pm, gm;
    auto index = [](const std::vector<DatasetRecord>& v, std::map<std::string, const DatasetRecord*>& m, const char* which) {
        for (const auto& r : v)
            if (!m.emplace(record_key(r), &r).second) fail(ErrorCode::Input, std::string("duplicate page id '") + record_key(r) + "' in " + which + " manifest");
    };
    index(pred, pm, "prediction");
    index(gt, gm, "ground-truth");
    std::vector<std::string> only_pred, only_gt;
    for (const auto& [k, _] : pm)
        if (!gm.contains(k)) only_pred.push_back(k);
    for (const auto& [k, _] : gm)
        if (!pm.contains(k)) only_gt.push_back(k);
    if (!only_pred.empty() || !only_gt.empty()) {
        std::string msg = "manifests do not align";
        if (!only_pred.empty()) msg += "; only in prediction: " + join(only_pred, ", ");
        if (!only_gt.empty()) msg += "; only in ground truth: " + join(only_gt, ", ");
        fail(ErrorCode::Input, msg);
    }

    EvalReport rep;
    std::vector<std::string> ids;
    for (const auto& [k, _] : gm) ids.push_back(k);
    rep.pages.resize(ids.size());
    parallel_for(ids.size(), opt.workers, [&](std::size_t i) {
        rep.pages[i] = score_page(ids[i], pm[ids[i]]->target, gm[ids[i]]->target, opt.max_len, opt.repetition);
    });
    std::vector<const PageScores*> all;
    std::map<std::string, const PageScores*> by_id;
    for (const auto& p : rep.pages) {
        all.push_back(&p);
        by_id[p.page_id] = &p;
    }
    rep.aggregate = aggregate_scores(all);

    if (pairing) {
        std::vector<std::string> missing;
        std::set<std::string> origins, wilds;
        for (const auto& [o, w] : *pairing) {
            if (!by_id.contains(o)) missing.push_back(o);
            if (!by_id.contains(w)) missing.push_back(w);
            origins.insert(o);
            wilds.insert(w);
        }
        if (!missing.empty()) fail(ErrorCode::Input, "pairing names unknown page ids: " + join(missing, ", "));
        std::vector<const PageScores*> o_pages, w_pages;
        for (const auto& id : origins) o_pages.push_back(by_id[id]);
        for (const auto& id : wilds) w_pages.push_back(by_id[id]);
        rep.origin = aggregate_scores(o_pages);
        rep.wild = aggregate_scores(w_pages);
        rep.delta = delta_scores(*rep.wild, *rep.origin);
        for (const auto& [o, w] : *pairing) {
            PairDelta d;
            d.origin = o;
            d.wild = w;
            d.origin_scores = aggregate_scores({by_id[o]});
            d.wild_scores = aggregate_scores({by_id[w]});
            d.delta = delta_scores(d.wild_scores, d.origin_scores);
            rep.pairs.push_back(std::move(d));
        }
    }
    return rep;
}

/// (origin, wild) pairs from JSON: an object mapping wild id to origin id,
/// or an array of {"origin": .., "wild": ..} objects.
inline WildPairing pairing_from_json(const json& j) {
    WildPairing out;
    try {
        if (j.is_object()) {
            for (const auto& [wild, origin] : j.items()) out.emplace_back(origin.get<std::string>(), wild);
        } else if (j.is_array()) {
            for (const auto& e : j) out.emplace_back(e.at("origin").get<std::string>(), e.at("wild").get<std::string>());
        } else {
            fail(ErrorCode::Input, "pairing must be an object or an array");
        }
    } catch (const json::exception& ex) {
        fail(ErrorCode::Input, std::string("pairing: ") + ex.what());
    }
    return out;
}

namespace detail {

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace detail

inline json to_json_value(const AggregateScores& a) {
    return json{{"pages", a.pages},
                {"text_edit", detail::opt_json(a.text_edit)},
                {"text_similarity", detail::opt_json(a.text_similarity)},
                {"table_teds", detail::opt_json(a.table_teds)},
                {"formula_token_edit", detail::opt_json(a.formula_token_edit)},
                {"reading_order_edit", detail::opt_json(a.reading_order_edit)},
                {"repetition_rate", a.repetition_rate}};
}

inline json report_to_json(const EvalReport& r) {
    json pages = json::array();
    for (const auto& p : r.pages) {
        json pj{{"page_id", p.page_id},
                {"text_edit", detail::opt_json(p.text_edit)},
                {"table_teds", detail::opt_json(p.table_teds)},
                {"formula_token_edit", detail::opt_json(p.formula_token_edit)},
                {"reading_order_edit", detail::opt_json(p.reading_order_edit)},
                {"repetition", to_json_value(p.repetition)}};
        pages.push_back(std::move(pj));
    }
    json j{{"aggregate", to_json_value(r.aggregate)}, {"pages", pages}};
    if (r.delta) {
        json pairs = json::array();
        for (const auto& d : r.pairs)
            pairs.push_back({{"origin", d.origin}, {"wild", d.wild}, {"origin_scores", to_json_value(d.origin_scores)},
                             {"wild_scores", to_json_value(d.wild_scores)}, {"delta", to_json_value(d.delta)}});
        j["degradation"] = {{"origin", to_json_value(*r.origin)}, {"wild", to_json_value(*r.wild)}, {"delta", to_json_value(*r.delta)},
                            {"pairs", pairs}};
    }
    return j;
}

/// Aligned plain-text table: one row per aggregate (overall, and origin,
/// wild and delta when a pairing was given).
inline std::string report_to_text(const EvalReport& r) {
    std::ostringstream os;
    auto cell = [&](const std::optional<double>& v, bool signed_) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(3);
        if (!v) c << "-";
        else if (signed_) c << std::showpos << *v;
        else c << *v;
        os << std::setw(12) << c.str();
    };
    auto row = [&](const std::string& name, const AggregateScores& a, bool signed_) {
        os << std::left << std::setw(10) << name << std::right << std::setw(7) << a.pages;
        cell(a.text_edit, signed_);
        cell(a.table_teds, signed_);
        cell(a.formula_token_edit, signed_);
        cell(a.reading_order_edit, signed_);
        cell(a.repetition_rate, signed_);
        os << '\n';
    };
    os << std::left << std::setw(10) << "set" << std::right << std::setw(7) << "pages" << std::setw(12) << "text_edit" << std::setw(12)
       << "table_teds" << std::setw(12) << "formula_ed" << std::setw(12) << "order_edit" << std::setw(12) << "repetition" << '\n';
    row("overall", r.aggregate, false);
    if (r.delta) {
        row("origin", *r.origin, false);
        row("wild", *r.wild, false);
        row("delta", *r.delta, true);
    }
    return os.str();
}

}  // namespace docforge
