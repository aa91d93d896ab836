#pragma once

// Shared fixtures and independent reference implementations for the tests.

#include <filesystem>
#include <fstream>
#include <random>
#include <numbers>
#include <stdexcept>
#include <unistd.h>
#include <string>
#include <vector>

#include "docforge/docforge.hpp"

namespace testsupport {

using namespace docforge;

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("docforge-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

/// A small repository shared by composer-level tests.
inline const Repository& small_repo() {
    static const Repository repo = [] {
        RepositoryConfig cfg;
        cfg.seed = 11;
        cfg.per_kind = 40;
        cfg.mutated_fraction = 0.15;
        return build_repository(cfg);
    }();
    return repo;
}

inline const TemplateLibrary& library() {
    static const TemplateLibrary lib = builtin_library();
    return lib;
}

/// Random block list built from generated and mutated elements.
inline std::vector<Markup> random_blocks(std::mt19937_64& gen, std::size_t max_blocks = 6) {
    static const std::array<ElementKind, 5> kinds = {ElementKind::Table, ElementKind::Formula, ElementKind::Paragraph,
                                                      ElementKind::Figure, ElementKind::Title};
    const auto langs = supported_languages();
    std::vector<Markup> out;
    const auto n = gen() % (max_blocks + 1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto kind = kinds[gen() % kinds.size()];
        const auto lang = langs[gen() % langs.size()];
        auto e = generate_element(kind, lang, gen());
        if ((kind == ElementKind::Table || kind == ElementKind::Paragraph) && gen() % 3 == 0) {
            MutationRule rule;
            rule.kind = MutationKind::HybridEmbed;
            rule.seed = gen();
            rule.guest = std::get<Formula>(generate_element(ElementKind::Formula, "en", gen()).markup);
            e = mutate_element(e, rule);
        }
        out.push_back(e.markup);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reference edit distance: the full (n+1) x (m+1) table, no row reuse.

template <typename S>
std::size_t reference_levenshtein(const S& a, const S& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1, 0));
    for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j) {
            std::size_t best = d[i - 1][j] + 1;
            best = std::min(best, d[i][j - 1] + 1);
            best = std::min(best, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u));
            d[i][j] = best;
        }
    return d[n][m];
}

// ---------------------------------------------------------------------------
// Exhaustive tree edit oracle.
//
// Enumerates every mapping between the node sets that is one-to-one and
// preserves both ancestry and left-to-right order, and returns the cheapest
// cost (renames for mapped pairs, one per unmapped node). Costs are exact
// fractions so the comparison with the library needs no tolerance.

struct Frac {
    __int128 num = 0;
    __int128 den = 1;
};

inline __int128 gcd128(__int128 a, __int128 b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b != 0) {
        const auto t = a % b;
        a = b;
        b = t;
    }
    return a == 0 ? 1 : a;
}

inline Frac make_frac(__int128 n, __int128 d) {
    const auto g = gcd128(n, d);
    return {n / g, d / g};
}

inline Frac operator+(Frac a, Frac b) { return make_frac(a.num * b.den + b.num * a.den, a.den * b.den); }
inline bool operator<(Frac a, Frac b) { return a.num * b.den < b.num * a.den; }
inline bool operator==(Frac a, Frac b) { return a.num * b.den == b.num * a.den; }

struct FlatNode {
    std::string label, text;
    int parent;
    int pre;   // preorder index
    int post;  // postorder index
};

inline void flatten(const TedTree& t, int parent, std::vector<FlatNode>& out, int& pre, int& post) {
    const int me = static_cast<int>(out.size());
    out.push_back({t.label, t.text, parent, pre++, 0});
    for (const auto& c : t.children) flatten(c, me, out, pre, post);
    out[static_cast<std::size_t>(me)].post = post++;
}

inline std::vector<FlatNode> flatten(const TedTree& t) {
    std::vector<FlatNode> out;
    int pre = 0, post = 0;
    flatten(t, -1, out, pre, post);
    return out;
}

inline bool is_ancestor(const std::vector<FlatNode>& v, int a, int d) {
    return v[static_cast<std::size_t>(a)].pre < v[static_cast<std::size_t>(d)].pre &&
           v[static_cast<std::size_t>(a)].post > v[static_cast<std::size_t>(d)].post;
}

inline bool left_of(const std::vector<FlatNode>& v, int a, int b) {
    return v[static_cast<std::size_t>(a)].pre < v[static_cast<std::size_t>(b)].pre &&
           v[static_cast<std::size_t>(a)].post < v[static_cast<std::size_t>(b)].post;
}

inline Frac rename_frac(const FlatNode& a, const FlatNode& b) {
    if (a.label != b.label) return {1, 1};
    const auto x = to_u32(a.text), y = to_u32(b.text);
    const auto len = std::max(x.size(), y.size());
    if (len == 0) return {0, 1};
    return make_frac(static_cast<__int128>(reference_levenshtein(x, y)), static_cast<__int128>(len));
}

inline Frac brute_force_ted(const TedTree& ta, const TedTree& tb) {
    const auto A = flatten(ta), B = flatten(tb);
    const int n = static_cast<int>(A.size()), m = static_cast<int>(B.size());
    Frac best{n + m, 1};
    std::vector<std::pair<int, int>> pairs;
    std::vector<bool> used_b(static_cast<std::size_t>(m), false);
    auto compatible = [&](int i, int j) {
        for (auto [k, l] : pairs) {
            if (is_ancestor(A, k, i) != is_ancestor(B, l, j)) return false;
            if (left_of(A, k, i) != left_of(B, l, j)) return false;
        }
        return true;
    };
    // node i of A is either unmapped or mapped to an unused compatible node of B
    auto rec = [&](auto&& self, int i, Frac cost) -> void {
        if (i == n) {
            const auto unmapped = static_cast<__int128>(n + m - 2 * static_cast<int>(pairs.size()));
            const Frac total = cost + Frac{unmapped, 1};
            if (total < best) best = total;
            return;
        }
        self(self, i + 1, cost);
        for (int j = 0; j < m; ++j) {
            if (used_b[static_cast<std::size_t>(j)] || !compatible(i, j)) continue;
            used_b[static_cast<std::size_t>(j)] = true;
            pairs.emplace_back(i, j);
            self(self, i + 1, cost + rename_frac(A[static_cast<std::size_t>(i)], B[static_cast<std::size_t>(j)]));
            pairs.pop_back();
            used_b[static_cast<std::size_t>(j)] = false;
        }
    };
    rec(rec, 0, Frac{0, 1});
    return best;
}

/// Random labelled tree with exactly `nodes` nodes.
inline TedTree random_tree(std::mt19937_64& gen, int nodes) {
    static const std::vector<std::string> labels = {"tr", "td", "td r2", "tbody"};
    static const std::vector<std::string> texts = {"", "a", "ab", "abc", "b", "ba", "xyz", "abcd", "12"};
    TedTree root;
    root.label = labels[gen() % labels.size()];
    root.text = texts[gen() % texts.size()];
    std::vector<TedTree*> all{&root};
    all.reserve(static_cast<std::size_t>(nodes));
    for (int i = 1; i < nodes; ++i) {
        TedTree* parent = all[gen() % all.size()];
        TedTree child;
        child.label = labels[gen() % labels.size()];
        child.text = texts[gen() % texts.size()];
        const auto pos = gen() % (parent->children.size() + 1);
        parent->children.insert(parent->children.begin() + static_cast<std::ptrdiff_t>(pos), child);
        // insertion may move siblings; rebuild pointer list
        all.clear();
        std::vector<TedTree*> stack{&root};
        while (!stack.empty()) {
            auto* t = stack.back();
            stack.pop_back();
            all.push_back(t);
            for (auto& c : t->children) stack.push_back(&c);
        }
    }
    return root;
}

// ---------------------------------------------------------------------------
// Augmentation oracle helpers

/// Square-to-quad projective map in closed form (Heckbert): maps the unit
/// square corners (0,0),(1,0),(1,1),(0,1) to q0..q3.
inline std::array<double, 9> square_to_quad(const std::array<Point, 4>& q) {
    const double sx = q[0].x - q[1].x + q[2].x - q[3].x;
    const double sy = q[0].y - q[1].y + q[2].y - q[3].y;
    double a, b, c, d, e, f, g, h;
    if (sx == 0 && sy == 0) {
        a = q[1].x - q[0].x;
        b = q[2].x - q[1].x;
        c = q[0].x;
        d = q[1].y - q[0].y;
        e = q[2].y - q[1].y;
        f = q[0].y;
        g = h = 0;
    } else {
        const double dx1 = q[1].x - q[2].x, dx2 = q[3].x - q[2].x;
        const double dy1 = q[1].y - q[2].y, dy2 = q[3].y - q[2].y;
        const double den = dx1 * dy2 - dx2 * dy1;
        g = (sx * dy2 - dx2 * sy) / den;
        h = (dx1 * sy - sx * dy1) / den;
        a = q[1].x - q[0].x + g * q[1].x;
        b = q[3].x - q[0].x + h * q[3].x;
        c = q[0].x;
        d = q[1].y - q[0].y + g * q[1].y;
        e = q[3].y - q[0].y + h * q[3].y;
        f = q[0].y;
    }
    return {a, b, c, d, e, f, g, h, 1.0};
}

/// Direct 3x3 projective multiply of a point.
inline Point project(const std::array<double, 9>& m, Point p) {
    const double x = m[0] * p.x + m[1] * p.y + m[2];
    const double y = m[3] * p.x + m[4] * p.y + m[5];
    const double w = m[6] * p.x + m[7] * p.y + m[8];
    return {x / w, y / w};
}

/// Independent model of the projective augmentation steps. Perspective uses
/// the closed-form square-to-quad map; rotation and padding are written out
/// directly.
inline Point oracle_map(const AugmentationRecord& rec, Point p) {
    for (const auto& s : rec.steps) {
        switch (s.kind) {
            case TransformKind::Perspective: {
                const auto m = square_to_quad(s.corners);
                p = project(m, {p.x / s.in_w, p.y / s.in_h});
                break;
            }
            case TransformKind::Rotate: {
                const double a = s.direction * std::numbers::pi / 180.0;
                const double dx = p.x - s.in_w / 2.0, dy = p.y - s.in_h / 2.0;
                p = {std::cos(a) * dx - std::sin(a) * dy + s.out_w / 2.0, std::sin(a) * dx + std::cos(a) * dy + s.out_h / 2.0};
                break;
            }
            case TransformKind::Background: p = {p.x + s.offset_x, p.y + s.offset_y}; break;
            case TransformKind::Illumination:
            case TransformKind::Exposure: break;
            default: throw std::logic_error("non-projective step in oracle");
        }
    }
    return p;
}

/// Real-valued hull {x0, y0, x1, y1} of a mapped box, clipped to the output.
inline std::array<double, 4> oracle_edges(const AugmentationRecord& rec, const PixelBox& b) {
    double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
    for (const Point c : {Point{double(b.x), double(b.y)}, Point{double(b.right()), double(b.y)}, Point{double(b.right()), double(b.bottom())},
                          Point{double(b.x), double(b.bottom())}}) {
        const auto q = oracle_map(rec, c);
        x0 = std::min(x0, q.x);
        y0 = std::min(y0, q.y);
        x1 = std::max(x1, q.x);
        y1 = std::max(y1, q.y);
    }
    return {std::clamp(x0, 0.0, double(rec.out_w)), std::clamp(y0, 0.0, double(rec.out_h)), std::clamp(x1, 0.0, double(rec.out_w)),
            std::clamp(y1, 0.0, double(rec.out_h))};
}

}  // namespace testsupport
