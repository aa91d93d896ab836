#pragma once

// Shared domain types, the structure-token vocabulary and the canonical
// ground-truth serialization.
//
// Surface syntax of a ground-truth stream:
//
//   <doc>
//     <title>text</title>
//     <para>line one\nline two</para>
//     <table><tr><td><colspan=2>cell</td></tr></table>
//     <formula>\frac { a } { b }</formula>
//     <figure/>
//   </doc>
//
// (whitespace above is for illustration only; the canonical form has none
// between tags). Table cells and paragraph lines may embed inline
// <formula>...</formula> spans.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "common.hpp"

namespace docforge {

using json = nlohmann::json;

enum class ElementKind : std::uint8_t { Table = 0, Formula = 1, Paragraph = 2, Figure = 3, Title = 4 };

inline constexpr std::array<ElementKind, 5> kAllKinds = {ElementKind::Table, ElementKind::Formula,
                                                        ElementKind::Paragraph, ElementKind::Figure,
                                                        ElementKind::Title};

inline std::string_view kind_name(ElementKind k) {
    switch (k) {
        case ElementKind::Table: return "table";
        case ElementKind::Formula: return "formula";
        case ElementKind::Paragraph: return "paragraph";
        case ElementKind::Figure: return "figure";
        case ElementKind::Title: return "title";
    }
    return "unknown";
}

inline std::optional<ElementKind> parse_kind(std::string_view s) {
    for (auto k : kAllKinds)
        if (kind_name(k) == s) return k;
    return std::nullopt;
}

inline ElementKind kind_or_throw(std::string_view s) {
    if (auto k = parse_kind(s)) return *k;
    fail(ErrorCode::Input, "unknown element kind '" + std::string(s) + "'");
}

/// Small set of element kinds.
class KindSet {
public:
    KindSet() = default;
    KindSet(std::initializer_list<ElementKind> kinds) {
        for (auto k : kinds) insert(k);
    }
    void insert(ElementKind k) { bits_ |= bit(k); }
    void erase(ElementKind k) { bits_ &= static_cast<std::uint8_t>(~bit(k)); }
    bool contains(ElementKind k) const { return (bits_ & bit(k)) != 0; }
    bool empty() const { return bits_ == 0; }
    bool contains_all(KindSet other) const { return (bits_ & other.bits_) == other.bits_; }
    std::vector<ElementKind> to_vector() const {
        std::vector<ElementKind> out;
        for (auto k : kAllKinds)
            if (contains(k)) out.push_back(k);
        return out;
    }
    std::uint8_t bits() const { return bits_; }
    bool operator==(const KindSet&) const = default;

private:
    static std::uint8_t bit(ElementKind k) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(k)); }
    std::uint8_t bits_ = 0;
};

struct PixelBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
    bool operator==(const PixelBox&) const = default;
    int right() const { return x + w; }
    int bottom() const { return y + h; }
    bool contains(const PixelBox& o) const { return o.x >= x && o.y >= y && o.right() <= right() && o.bottom() <= bottom(); }
    long long area() const { return static_cast<long long>(w) * h; }
};

inline double iou(const PixelBox& a, const PixelBox& b) {
    const long long ix = std::max(0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
    const long long iy = std::max(0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
    const long long inter = ix * iy;
    const long long uni = a.area() + b.area() - inter;
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

// ---------------------------------------------------------------------------
// Structure-token vocabulary

namespace vocab {

inline constexpr int kVersion = 1;
inline constexpr int kMaxSpan = 32;

inline constexpr std::array<std::string_view, 19> kFixedTokens = {
    "<doc>",   "</doc>",   "<title>", "</title>", "<para>",    "</para>",    "<table>",
    "</table>", "<thead>", "</thead>", "<tbody>", "</tbody>",  "<tr>",       "</tr>",
    "<td>",    "</td>",    "<formula>", "</formula>", "<figure/>"};

inline std::string rowspan_token(int n) { return "<rowspan=" + std::to_string(n) + ">"; }
inline std::string colspan_token(int n) { return "<colspan=" + std::to_string(n) + ">"; }

/// Parses `<rowspan=N>` / `<colspan=N>`; returns ('r'|'c', N).
inline std::optional<std::pair<char, int>> parse_span_token(std::string_view tok) {
    char which;
    std::string_view rest;
    if (tok.starts_with("<rowspan=")) {
        which = 'r';
        rest = tok.substr(9);
    } else if (tok.starts_with("<colspan=")) {
        which = 'c';
        rest = tok.substr(9);
    } else {
        return std::nullopt;
    }
    if (rest.size() < 2 || rest.back() != '>') return std::nullopt;
    rest.remove_suffix(1);
    if (rest.size() > 2 || rest[0] == '0') return std::nullopt;
    int n = 0;
    for (char c : rest) {
        if (c < '0' || c > '9') return std::nullopt;
        n = n * 10 + (c - '0');
    }
    if (n < 2 || n > kMaxSpan) return std::nullopt;
    return std::pair{which, n};
}

/// Length of the structure token starting at `pos`, or 0 if none does.
inline std::size_t match_at(std::string_view s, std::size_t pos) {
    if (pos >= s.size() || s[pos] != '<') return 0;
    const auto rest = s.substr(pos);
    for (auto t : kFixedTokens)
        if (rest.starts_with(t)) return t.size();
    if (rest.starts_with("<rowspan=") || rest.starts_with("<colspan=")) {
        const auto close = rest.find('>');
        if (close != std::string_view::npos && close <= 12 && parse_span_token(rest.substr(0, close + 1)))
            return close + 1;
    }
    return 0;
}

inline bool contains(std::string_view tok) { return !tok.empty() && match_at(tok, 0) == tok.size(); }

/// The whole closed vocabulary, fixed tokens first.
inline std::vector<std::string> all_tokens() {
    std::vector<std::string> out(kFixedTokens.begin(), kFixedTokens.end());
    for (int n = 2; n <= kMaxSpan; ++n) out.push_back(rowspan_token(n));
    for (int n = 2; n <= kMaxSpan; ++n) out.push_back(colspan_token(n));
    return out;
}

}  // namespace vocab

// ---------------------------------------------------------------------------
// Formula grammar

namespace formula {

enum class TokenClass {
    Identifier,
    Number,
    Operator,
    Greek,
    Relation,
    Binary,
    BigOperator,
    Misc,
    Frac,
    Sqrt,
    OpenBrace,
    CloseBrace,
    Superscript,
    Subscript,
    Invalid
};

inline constexpr std::array<std::string_view, 15> kGreek = {"\\alpha", "\\beta",  "\\gamma", "\\delta", "\\epsilon",
                                                            "\\theta", "\\lambda", "\\mu",   "\\pi",    "\\sigma",
                                                            "\\phi",   "\\omega", "\\Delta", "\\Sigma", "\\Omega"};
inline constexpr std::array<std::string_view, 6> kRelations = {"\\leq", "\\geq", "\\neq", "\\approx", "\\equiv", "\\in"};
inline constexpr std::array<std::string_view, 4> kBinary = {"\\times", "\\cdot", "\\pm", "\\div"};
inline constexpr std::array<std::string_view, 4> kBigOps = {"\\sum", "\\prod", "\\int", "\\lim"};
inline constexpr std::array<std::string_view, 5> kMisc = {"\\infty", "\\partial", "\\ldots", "\\cdots", "\\nabla"};
inline constexpr std::string_view kOperators = "+-=<>()[],./|!':;*";

template <std::size_t N>
bool in(const std::array<std::string_view, N>& set, std::string_view t) {
    return std::find(set.begin(), set.end(), t) != set.end();
}

inline TokenClass classify(std::string_view t) {
    if (t.empty()) return TokenClass::Invalid;
    if (t == "{") return TokenClass::OpenBrace;
    if (t == "}") return TokenClass::CloseBrace;
    if (t == "^") return TokenClass::Superscript;
    if (t == "_") return TokenClass::Subscript;
    if (t == "\\frac") return TokenClass::Frac;
    if (t == "\\sqrt") return TokenClass::Sqrt;
    if (t[0] == '\\') {
        if (in(kGreek, t)) return TokenClass::Greek;
        if (in(kRelations, t)) return TokenClass::Relation;
        if (in(kBinary, t)) return TokenClass::Binary;
        if (in(kBigOps, t)) return TokenClass::BigOperator;
        if (in(kMisc, t)) return TokenClass::Misc;
        return TokenClass::Invalid;
    }
    if (t.size() == 1 && ((t[0] >= 'a' && t[0] <= 'z') || (t[0] >= 'A' && t[0] <= 'Z'))) return TokenClass::Identifier;
    if (t.size() == 1 && kOperators.find(t[0]) != std::string_view::npos) return TokenClass::Operator;
    bool digits = false;
    int dots = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] >= '0' && t[i] <= '9') {
            digits = true;
        } else if (t[i] == '.' && i > 0 && i + 1 < t.size()) {
            ++dots;
        } else {
            return TokenClass::Invalid;
        }
    }
    return digits && dots <= 1 ? TokenClass::Number : TokenClass::Invalid;
}

/// Tokens that shape the layout rather than being drawn as glyphs.
inline bool is_layout_token(std::string_view t) {
    const auto c = classify(t);
    return c == TokenClass::OpenBrace || c == TokenClass::CloseBrace || c == TokenClass::Superscript ||
           c == TokenClass::Subscript || c == TokenClass::Frac || c == TokenClass::Sqrt;
}

/// Text drawn for a token: command names lose their backslash.
inline std::string_view visible_text(std::string_view t) { return (t.size() > 1 && t[0] == '\\') ? t.substr(1) : t; }

namespace detail {

struct Validator {
    const std::vector<std::string>& toks;
    std::size_t i = 0;
    std::string problem;

    bool atom_at(std::size_t k) const {
        if (k >= toks.size()) return false;
        const auto c = classify(toks[k]);
        return c != TokenClass::Invalid && !is_layout_token(toks[k]);
    }

    bool arg() {
        if (i >= toks.size()) return err("missing argument at end of formula");
        if (toks[i] == "{") return group();
        if (atom_at(i)) {
            ++i;
            return true;
        }
        return err("missing argument before token " + std::to_string(i) + " '" + toks[i] + "'");
    }

    bool group() {
        ++i;  // '{'
        if (!seq(true)) return false;
        if (i >= toks.size() || toks[i] != "}") return err("unbalanced braces: missing '}'");
        ++i;
        return true;
    }

    bool scripts() {
        bool sup = false, sub = false;
        while (i < toks.size() && (toks[i] == "^" || toks[i] == "_")) {
            bool& seen = toks[i] == "^" ? sup : sub;
            if (seen) return err("double script at token " + std::to_string(i));
            seen = true;
            ++i;
            if (!arg()) return false;
        }
        return true;
    }

    bool item() {
        const auto& t = toks[i];
        const auto c = classify(t);
        switch (c) {
            case TokenClass::OpenBrace:
                if (!group()) return false;
                break;
            case TokenClass::Frac:
                ++i;
                if (!arg() || !arg()) return false;
                break;
            case TokenClass::Sqrt:
                ++i;
                if (!arg()) return false;
                break;
            case TokenClass::Superscript:
            case TokenClass::Subscript:
                return err("script without base at token " + std::to_string(i));
            case TokenClass::CloseBrace:
                return err("unbalanced braces: unexpected '}' at token " + std::to_string(i));
            case TokenClass::Invalid:
                return err("token outside the formula grammar: '" + t + "'");
            default:
                ++i;
        }
        return scripts();
    }

    bool seq(bool in_group) {
        while (i < toks.size()) {
            if (toks[i] == "}") {
                if (in_group) return true;
                return err("unbalanced braces: unexpected '}' at token " + std::to_string(i));
            }
            if (!item()) return false;
        }
        return true;
    }

    bool err(std::string msg) {
        if (problem.empty()) problem = std::move(msg);
        return false;
    }
};

}  // namespace detail

/// Returns a description of the first grammar violation, if any.
inline std::optional<std::string> validate(const std::vector<std::string>& tokens) {
    if (tokens.empty()) return "empty formula";
    detail::Validator v{tokens, 0, {}};
    if (!v.seq(false)) return v.problem;
    return std::nullopt;
}

/// Longest prefix of `tokens` that validates once its open groups are
/// closed, with the closing braces appended. Empty when nothing survives.
inline std::vector<std::string> repair(const std::vector<std::string>& tokens) {
    if (!validate(tokens)) return tokens;
    for (std::size_t k = tokens.size(); k > 0; --k) {
        std::vector<std::string> cand(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(k));
        int open = 0;
        bool negative = false;
        for (const auto& t : cand) {
            open += t == "{" ? 1 : t == "}" ? -1 : 0;
            negative = negative || open < 0;
        }
        if (negative) continue;
        cand.insert(cand.end(), static_cast<std::size_t>(open), "}");
        if (!validate(cand)) return cand;
    }
    return {};
}

inline int brace_depth(const std::vector<std::string>& tokens) {
    int depth = 0, best = 0;
    for (const auto& t : tokens) {
        if (t == "{") best = std::max(best, ++depth);
        if (t == "}") --depth;
    }
    return best;
}

}  // namespace formula

// ---------------------------------------------------------------------------
// Markup

struct TableNode {
    std::string tag;  // table | thead | tbody | tr | td
    int rowspan = 1;
    int colspan = 1;
    std::string text;  // td only; may hold inline <formula> spans
    std::vector<TableNode> children;

    bool operator==(const TableNode&) const = default;
};

inline TableNode make_td(std::string text, int rowspan = 1, int colspan = 1) {
    return TableNode{"td", rowspan, colspan, std::move(text), {}};
}

struct Table {
    TableNode root{"table", 1, 1, {}, {}};
    bool operator==(const Table&) const = default;
};

struct Formula {
    std::vector<std::string> tokens;
    bool operator==(const Formula&) const = default;
};

struct Paragraph {
    std::vector<std::string> lines;
    bool operator==(const Paragraph&) const = default;
};

struct Figure {
    bool operator==(const Figure&) const = default;
};

struct Title {
    std::string text;
    bool operator==(const Title&) const = default;
};

/// Alternative order matches ElementKind.
using Markup = std::variant<Table, Formula, Paragraph, Figure, Title>;

inline ElementKind kind_of(const Markup& m) { return static_cast<ElementKind>(m.index()); }

/// Rows of a table in document order, across thead/tbody sections.
inline std::vector<const TableNode*> table_rows(const Table& t) {
    std::vector<const TableNode*> rows;
    for (const auto& c : t.root.children) {
        if (c.tag == "tr") {
            rows.push_back(&c);
        } else {
            for (const auto& r : c.children)
                if (r.tag == "tr") rows.push_back(&r);
        }
    }
    return rows;
}

inline std::vector<TableNode*> table_rows(Table& t) {
    std::vector<TableNode*> rows;
    for (auto& c : t.root.children) {
        if (c.tag == "tr") {
            rows.push_back(&c);
        } else {
            for (auto& r : c.children)
                if (r.tag == "tr") rows.push_back(&r);
        }
    }
    return rows;
}

struct GridCell {
    int row = 0;
    int col = 0;
    int rowspan = 1;
    int colspan = 1;
    const TableNode* node = nullptr;
};

struct Grid {
    int rows = 0;
    int cols = 0;
    std::vector<GridCell> cells;  // document order
};

/// Expands spans into grid positions. Cells are placed left to right in the
/// first free column of their row. Returns a problem description on overlap
/// or when a rowspan runs past the last row.
inline std::optional<std::string> expand_grid(const Table& t, Grid& out) {
    out = Grid{};
    const auto rows = table_rows(t);
    out.rows = static_cast<int>(rows.size());
    std::vector<std::vector<char>> occ(rows.size());
    auto occupied = [&](int r, int c) {
        return c < static_cast<int>(occ[static_cast<std::size_t>(r)].size()) && occ[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    };
    for (int r = 0; r < out.rows; ++r) {
        int c = 0;
        for (const auto& cell : rows[static_cast<std::size_t>(r)]->children) {
            while (occupied(r, c)) ++c;
            const int rs = std::max(1, cell.rowspan), cs = std::max(1, cell.colspan);
            if (r + rs > out.rows)
                return "rowspan of cell at row " + std::to_string(r) + " extends past the last row";
            for (int dr = 0; dr < rs; ++dr) {
                auto& line = occ[static_cast<std::size_t>(r + dr)];
                if (static_cast<int>(line.size()) < c + cs) line.resize(static_cast<std::size_t>(c + cs), 0);
                for (int dc = 0; dc < cs; ++dc) {
                    if (line[static_cast<std::size_t>(c + dc)])
                        return "cell grid overlap at row " + std::to_string(r + dr) + ", column " + std::to_string(c + dc);
                    line[static_cast<std::size_t>(c + dc)] = 1;
                }
            }
            out.cells.push_back({r, c, rs, cs, &cell});
            out.cols = std::max(out.cols, c + cs);
            c += cs;
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Inline text (cells, paragraph lines, titles)

/// Visits an inline text as alternating plain segments and formula spans.
/// `on_text(string_view)` / `on_formula(string_view inner)`; returns false if a
/// structure token other than a well-formed <formula> span is present.
template <typename OnText, typename OnFormula>
bool visit_inline(std::string_view text, OnText&& on_text, OnFormula&& on_formula) {
    std::size_t pos = 0, seg = 0;
    while (pos < text.size()) {
        const auto len = vocab::match_at(text, pos);
        if (len == 0) {
            ++pos;
            continue;
        }
        if (text.substr(pos, len) != "<formula>") return false;
        if (pos > seg) on_text(text.substr(seg, pos - seg));
        const auto inner_begin = pos + len;
        std::size_t q = inner_begin;
        std::size_t close = std::string_view::npos;
        while (q < text.size()) {
            const auto l2 = vocab::match_at(text, q);
            if (l2 == 0) {
                ++q;
                continue;
            }
            if (text.substr(q, l2) != "</formula>") return false;
            close = q;
            break;
        }
        if (close == std::string_view::npos) return false;
        on_formula(text.substr(inner_begin, close - inner_begin));
        pos = seg = close + std::string_view("</formula>").size();
    }
    if (seg < text.size()) on_text(text.substr(seg));
    return true;
}

inline std::optional<std::string> validate_inline(std::string_view text) {
    std::u32string cps;
    if (!decode_utf8(text, cps)) return "invalid UTF-8";
    for (char32_t c : cps)
        if (c < 0x20 || c == 0x7F) return "control character in text";
    std::optional<std::string> problem;
    const bool ok = visit_inline(
        text, [](std::string_view) {},
        [&](std::string_view inner) {
            if (problem) return;
            if (auto p = formula::validate(split_whitespace(inner))) problem = "inline formula: " + *p;
        });
    if (!ok) return "structure token inside text";
    return problem;
}

/// Drops bytes that do not decode as UTF-8 and control characters, and
/// repairs or removes broken inline formula spans.
inline std::string repair_inline(std::string_view text) {
    std::string clean;
    for (std::size_t i = 0; i < text.size();) {
        std::size_t len = 1;
        const auto c = static_cast<unsigned char>(text[i]);
        if (c >= 0xF0) len = 4;
        else if (c >= 0xE0) len = 3;
        else if (c >= 0xC0) len = 2;
        std::u32string cp;
        if (i + len <= text.size() && decode_utf8(text.substr(i, len), cp) && cp.size() == 1 && cp[0] >= 0x20 && cp[0] != 0x7F)
            clean.append(text.substr(i, len));
        i += (i + len <= text.size() && !cp.empty()) ? len : 1;
    }
    std::string out;
    const bool ok = visit_inline(
        clean, [&](std::string_view seg) { out += seg; },
        [&](std::string_view inner) {
            const auto fixed = formula::repair(split_whitespace(inner));
            if (fixed.empty()) return;
            out += "<formula>";
            for (std::size_t k = 0; k < fixed.size(); ++k) out += (k ? " " : "") + fixed[k];
            out += "</formula>";
        });
    return ok ? out : std::string{};
}

/// The text as drawn: inline formula spans become their visible tokens
/// separated by single spaces.
inline std::u32string display_text(std::string_view text) {
    std::string out;
    visit_inline(
        text, [&](std::string_view s) { out += s; },
        [&](std::string_view inner) {
            bool first = true;
            for (const auto& t : split_whitespace(inner)) {
                if (formula::is_layout_token(t)) continue;
                if (!first) out += ' ';
                out += formula::visible_text(t);
                first = false;
            }
        });
    return to_u32(out);
}

/// Non-whitespace codepoints a renderer must draw for this markup, in
/// document order. Used for ground-truth/render consistency checks.
inline std::u32string content_codepoints(const Markup& m) {
    std::u32string out;
    auto add = [&](std::u32string_view s) {
        for (char32_t c : s)
            if (!is_space(c)) out.push_back(c);
    };
    std::visit(
        [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Table>) {
                for (const auto* row : table_rows(x))
                    for (const auto& cell : row->children) add(display_text(cell.text));
            } else if constexpr (std::is_same_v<T, Formula>) {
                for (const auto& t : x.tokens)
                    if (!formula::is_layout_token(t)) add(to_u32(formula::visible_text(t)));
            } else if constexpr (std::is_same_v<T, Paragraph>) {
                for (const auto& l : x.lines) add(display_text(l));
            } else if constexpr (std::is_same_v<T, Title>) {
                add(display_text(x.text));
            }
        },
        m);
    return out;
}

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline std::optional<std::string> validate_table(const Table& t) {
    const auto& root = t.root;
    if (root.tag != "table") return "root tag is '" + root.tag + "', expected 'table'";
    if (!root.text.empty() || root.rowspan != 1 || root.colspan != 1) return "attributes on <table>";
    auto check_row = [](const TableNode& tr) -> std::optional<std::string> {
        if (!tr.text.empty() || tr.rowspan != 1 || tr.colspan != 1) return std::string("attributes on <tr>");
        if (tr.children.empty()) return std::string("row without cells");
        for (const auto& td : tr.children) {
            if (td.tag != "td") return "child <" + td.tag + "> inside <tr>";
            if (!td.children.empty()) return std::string("<td> with child nodes");
            if (td.rowspan < 1 || td.rowspan > vocab::kMaxSpan || td.colspan < 1 || td.colspan > vocab::kMaxSpan)
                return std::string("span out of range");
            if (auto p = validate_inline(td.text)) return "cell text: " + *p;
        }
        return std::nullopt;
    };
    std::size_t rows = 0;
    for (const auto& c : root.children) {
        if (c.tag == "tr") {
            if (auto p = check_row(c)) return p;
            ++rows;
        } else if (c.tag == "thead" || c.tag == "tbody") {
            if (!c.text.empty() || c.rowspan != 1 || c.colspan != 1) return "attributes on <" + c.tag + ">";
            if (c.children.empty()) return "empty <" + c.tag + ">";
            for (const auto& r : c.children) {
                if (r.tag != "tr") return "child <" + r.tag + "> inside <" + c.tag + ">";
                if (auto p = check_row(r)) return p;
                ++rows;
            }
        } else {
            return "child <" + c.tag + "> inside <table>";
        }
    }
    if (rows == 0) return "table without rows";
    Grid g;
    return expand_grid(t, g);
}

}  // namespace detail

/// Returns the first problem found, or nullopt for valid markup.
inline std::optional<std::string> validate_markup(const Markup& m) {
    return std::visit(
        [](const auto& x) -> std::optional<std::string> {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Table>) {
                return detail::validate_table(x);
            } else if constexpr (std::is_same_v<T, Formula>) {
                for (const auto& t : x.tokens)
                    if (t.empty() || t.find_first_of(" \t\n\r") != std::string::npos)
                        return std::string("formula token contains whitespace or is empty");
                return formula::validate(x.tokens);
            } else if constexpr (std::is_same_v<T, Paragraph>) {
                for (std::size_t i = 0; i < x.lines.size(); ++i) {
                    if (x.lines[i].empty()) return "empty line " + std::to_string(i);
                    if (auto p = validate_inline(x.lines[i])) return "line " + std::to_string(i) + ": " + *p;
                }
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, Title>) {
                if (x.text.empty()) return std::string("empty title");
                return validate_inline(x.text);
            } else {
                return std::nullopt;
            }
        },
        m);
}

namespace detail {

inline void repair_table(Table& t) {
    auto fix_rows = [](std::vector<TableNode>& rows) {
        for (auto& tr : rows) {
            if (tr.tag != "tr") continue;
            for (auto& td : tr.children) {
                td.text = repair_inline(td.text);
                td.rowspan = std::clamp(td.rowspan, 1, vocab::kMaxSpan);
                td.colspan = std::clamp(td.colspan, 1, vocab::kMaxSpan);
            }
        }
        std::erase_if(rows, [](const TableNode& n) { return n.tag == "tr" && n.children.empty(); });
    };
    fix_rows(t.root.children);
    for (auto& c : t.root.children)
        if (c.tag != "tr") fix_rows(c.children);
    std::erase_if(t.root.children, [](const TableNode& n) { return n.tag != "tr" && n.children.empty(); });

    // spans that run past the last row or collide fall back to single cells
    Grid g;
    if (expand_grid(t, g)) {
        auto reset = [](std::vector<TableNode>& rows) {
            for (auto& tr : rows)
                for (auto& td : tr.children) td.rowspan = td.colspan = 1;
        };
        for (auto& c : t.root.children) {
            if (c.tag == "tr") {
                for (auto& td : c.children) td.rowspan = td.colspan = 1;
            } else {
                reset(c.children);
            }
        }
    }
}

}  // namespace detail

/// Minimal fix for a block that fails validation. Returns false when
/// nothing usable is left and the block should be dropped.
inline bool repair_markup(Markup& m) {
    if (!validate_markup(m)) return true;
    std::visit(
        [](auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Table>) {
                detail::repair_table(x);
            } else if constexpr (std::is_same_v<T, Formula>) {
                std::erase_if(x.tokens, [](const std::string& t) { return t.empty(); });
                x.tokens = formula::repair(x.tokens);
            } else if constexpr (std::is_same_v<T, Paragraph>) {
                std::vector<std::string> lines;
                for (const auto& l : x.lines)
                    if (auto fixed = repair_inline(l); !fixed.empty()) lines.push_back(std::move(fixed));
                x.lines = std::move(lines);
            } else if constexpr (std::is_same_v<T, Title>) {
                x.text = repair_inline(x.text);
            }
        },
        m);
    return !validate_markup(m);
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline void write_table_node(std::string& out, const TableNode& n) {
    out += '<';
    out += n.tag;
    out += '>';
    if (n.tag == "td") {
        if (n.rowspan > 1) out += vocab::rowspan_token(n.rowspan);
        if (n.colspan > 1) out += vocab::colspan_token(n.colspan);
        out += n.text;
    }
    for (const auto& c : n.children) write_table_node(out, c);
    out += "</";
    out += n.tag;
    out += '>';
}

}  // namespace detail

/// Appends one block without validating it.
inline void append_block(std::string& out, const Markup& m) {
    std::visit(
        [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Table>) {
                detail::write_table_node(out, x.root);
            } else if constexpr (std::is_same_v<T, Formula>) {
                out += "<formula>";
                out += join(x.tokens, " ");
                out += "</formula>";
            } else if constexpr (std::is_same_v<T, Paragraph>) {
                out += "<para>";
                out += join(x.lines, "\n");
                out += "</para>";
            } else if constexpr (std::is_same_v<T, Figure>) {
                out += "<figure/>";
            } else {
                out += "<title>";
                out += x.text;
                out += "</title>";
            }
        },
        m);
}

inline std::string serialize_block(const Markup& m) {
    std::string s;
    append_block(s, m);
    return s;
}

/// Canonical ground-truth stream for blocks already in reading order.
/// Throws ErrorCode::Validation naming the first malformed block.
inline std::string serialize_ground_truth(std::span<const Markup> blocks) {
    std::string out = "<doc>";
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (auto p = validate_markup(blocks[i]))
            fail(ErrorCode::Validation,
                 "block " + std::to_string(i) + " (" + std::string(kind_name(kind_of(blocks[i]))) + "): " + *p);
        append_block(out, blocks[i]);
    }
    out += "</doc>";
    return out;
}

// ---------------------------------------------------------------------------
// Tokenization (metrics and loss weighting)

struct Token {
    std::string text;
    bool structural = false;
    bool operator==(const Token&) const = default;
};

/// Structure tokens plus whitespace-split words.
inline std::vector<Token> tokenize(std::string_view stream) {
    std::vector<Token> out;
    std::size_t pos = 0, seg = 0;
    auto flush = [&](std::size_t end) {
        for (auto& w : split_whitespace(stream.substr(seg, end - seg))) out.push_back({std::move(w), false});
    };
    while (pos < stream.size()) {
        const auto len = vocab::match_at(stream, pos);
        if (len == 0) {
            ++pos;
            continue;
        }
        flush(pos);
        out.push_back({std::string(stream.substr(pos, len)), true});
        pos += len;
        seg = pos;
    }
    flush(stream.size());
    return out;
}

inline std::vector<std::string> token_texts(std::string_view stream) {
    std::vector<std::string> out;
    for (auto& t : tokenize(stream)) out.push_back(std::move(t.text));
    return out;
}

// ---------------------------------------------------------------------------
// Tolerant parsing of candidate streams

struct ParseResult {
    std::vector<Markup> blocks;
    std::vector<std::string> warnings;
};

namespace detail {

class StreamParser {
public:
    ParseResult run(std::string_view s) {
        if (s.find_first_not_of(" \t\r\n") == std::string_view::npos) {
            res_.warnings.push_back("empty stream");
            return std::move(res_);
        }
        std::size_t pos = 0, seg = 0;
        while (pos < s.size()) {
            const auto len = vocab::match_at(s, pos);
            if (len == 0) {
                ++pos;
                continue;
            }
            if (pos > seg) on_text(s.substr(seg, pos - seg));
            on_token(s.substr(pos, len));
            pos += len;
            seg = pos;
        }
        if (seg < s.size()) on_text(s.substr(seg));
        if (block_ != Block::None) {
            warn("unclosed tags at end of stream");
            close_block();
        }
        if (!seen_doc_) warn("missing <doc>");
        else if (!doc_closed_) warn("missing </doc>");
        return std::move(res_);
    }

private:
    enum class Block { None, Para, Title, Formula, Table };

    ParseResult res_;
    Block block_ = Block::None;
    std::string buf_;
    bool inline_formula_ = false;
    bool seen_doc_ = false;
    bool doc_closed_ = false;
    bool after_doc_warned_ = false;
    Table table_;
    int section_ = -1;  // index into table_.root.children, or -1
    bool tr_open_ = false;
    bool td_open_ = false;
    bool td_fresh_ = false;

    void warn(std::string w) { res_.warnings.push_back(std::move(w)); }

    std::vector<TableNode>& row_container() {
        return section_ >= 0 ? table_.root.children[static_cast<std::size_t>(section_)].children : table_.root.children;
    }
    TableNode& current_tr() { return row_container().back(); }
    TableNode& current_td() { return current_tr().children.back(); }

    std::string& text_target() { return block_ == Block::Table ? current_td().text : buf_; }

    void close_inline_formula(bool warn_unclosed) {
        if (!inline_formula_) return;
        if (warn_unclosed) warn("unclosed tags: inline <formula>");
        text_target() += "</formula>";
        inline_formula_ = false;
    }

    void close_td(bool explicit_close) {
        if (!td_open_) return;
        close_inline_formula(true);
        if (!explicit_close) warn("unclosed tags: <td>");
        td_open_ = false;
        td_fresh_ = false;
    }
    void close_tr(bool explicit_close) {
        close_td(false);
        if (!tr_open_) return;
        if (!explicit_close) warn("unclosed tags: <tr>");
        tr_open_ = false;
    }
    void close_section(bool explicit_close) {
        close_tr(false);
        if (section_ < 0) return;
        if (!explicit_close) warn("unclosed tags: <" + table_.root.children[static_cast<std::size_t>(section_)].tag + ">");
        section_ = -1;
    }

    void close_block() {
        switch (block_) {
            case Block::None: break;
            case Block::Para: {
                close_inline_formula(true);
                Paragraph p;
                std::size_t start = 0;
                while (start <= buf_.size()) {
                    auto nl = buf_.find('\n', start);
                    if (nl == std::string::npos) nl = buf_.size();
                    if (nl > start) p.lines.push_back(buf_.substr(start, nl - start));
                    start = nl + 1;
                }
                res_.blocks.emplace_back(std::move(p));
                break;
            }
            case Block::Title:
                close_inline_formula(true);
                res_.blocks.emplace_back(Title{buf_});
                break;
            case Block::Formula: res_.blocks.emplace_back(Formula{split_whitespace(buf_)}); break;
            case Block::Table:
                close_section(true);
                res_.blocks.emplace_back(std::move(table_));
                break;
        }
        if (block_ != Block::None) {
            auto& last = res_.blocks.back();
            if (auto why = validate_markup(last)) {
                const std::string kind(kind_name(kind_of(last)));
                if (repair_markup(last)) {
                    warn("repaired " + kind + " block: " + *why);
                } else {
                    warn("dropped " + kind + " block: " + *why);
                    res_.blocks.pop_back();
                }
            }
        }
        block_ = Block::None;
        buf_.clear();
        table_ = Table{};
        section_ = -1;
        tr_open_ = td_open_ = td_fresh_ = inline_formula_ = false;
    }

    void open_block(Block b) {
        if (block_ != Block::None) {
            warn("unclosed tags: block closed by a new block");
            close_block();
        }
        if (doc_closed_ && !after_doc_warned_) {
            warn("content after </doc>");
            after_doc_warned_ = true;
        }
        block_ = b;
    }

    void ensure_table() {
        if (block_ != Block::Table) {
            warn("implicit <table> inserted");
            open_block(Block::Table);
        }
    }

    void on_text(std::string_view t) {
        const bool blank = t.find_first_not_of(" \t\r\n") == std::string_view::npos;
        switch (block_) {
            case Block::Para:
            case Block::Title:
            case Block::Formula: buf_ += t; break;
            case Block::Table:
                if (td_open_) {
                    current_td().text += t;
                    td_fresh_ = false;
                } else if (!blank) {
                    warn("text outside table cell dropped");
                }
                break;
            case Block::None:
                if (!blank) {
                    warn("text outside any block wrapped as paragraph");
                    open_block(Block::Para);
                    buf_ += t;
                }
                break;
        }
    }

    void on_token(std::string_view tok) {
        if (tok == "<doc>") {
            if (!seen_doc_ && block_ == Block::None && res_.blocks.empty()) {
                seen_doc_ = true;
            } else {
                warn("unexpected <doc>");
            }
        } else if (tok == "</doc>") {
            if (block_ != Block::None) {
                warn("unclosed tags before </doc>");
                close_block();
            }
            if (doc_closed_) warn("duplicate </doc>");
            doc_closed_ = true;
        } else if (tok == "<para>") {
            open_block(Block::Para);
        } else if (tok == "<title>") {
            open_block(Block::Title);
        } else if (tok == "<table>") {
            open_block(Block::Table);
        } else if (tok == "<figure/>") {
            open_block(Block::None);
            res_.blocks.emplace_back(Figure{});
        } else if (tok == "<formula>") {
            const bool inline_ctx = block_ == Block::Para || block_ == Block::Title || (block_ == Block::Table && td_open_);
            if (inline_ctx) {
                if (inline_formula_) {
                    warn("nested <formula> ignored");
                    return;
                }
                text_target() += tok;
                td_fresh_ = false;
                inline_formula_ = true;
            } else {
                open_block(Block::Formula);
            }
        } else if (tok == "</formula>") {
            if (inline_formula_) {
                text_target() += tok;
                inline_formula_ = false;
            } else if (block_ == Block::Formula) {
                close_block();
            } else {
                warn("stray </formula>");
            }
        } else if (tok == "</para>" || tok == "</title>") {
            const Block want = tok == "</para>" ? Block::Para : Block::Title;
            if (block_ == want) {
                close_inline_formula(true);
                close_block();
            } else {
                warn("stray " + std::string(tok));
            }
        } else if (tok == "</table>") {
            if (block_ == Block::Table) {
                if (section_ >= 0 || tr_open_ || td_open_) close_section(false);
                close_block();
            } else {
                warn("stray </table>");
            }
        } else if (tok == "<thead>" || tok == "<tbody>") {
            ensure_table();
            close_section(false);
            table_.root.children.push_back(TableNode{std::string(tok.substr(1, tok.size() - 2)), 1, 1, {}, {}});
            section_ = static_cast<int>(table_.root.children.size()) - 1;
        } else if (tok == "</thead>" || tok == "</tbody>") {
            const auto tag = tok.substr(2, tok.size() - 3);
            if (block_ == Block::Table && section_ >= 0 && table_.root.children[static_cast<std::size_t>(section_)].tag == tag) {
                close_tr(false);
                section_ = -1;
            } else {
                warn("stray " + std::string(tok));
            }
        } else if (tok == "<tr>") {
            ensure_table();
            close_tr(false);
            row_container().push_back(TableNode{"tr", 1, 1, {}, {}});
            tr_open_ = true;
        } else if (tok == "</tr>") {
            if (block_ == Block::Table && tr_open_) {
                close_td(false);
                tr_open_ = false;
            } else {
                warn("stray </tr>");
            }
        } else if (tok == "<td>") {
            ensure_table();
            close_td(false);
            if (!tr_open_) {
                warn("implicit <tr> inserted");
                row_container().push_back(TableNode{"tr", 1, 1, {}, {}});
                tr_open_ = true;
            }
            current_tr().children.push_back(make_td(""));
            td_open_ = true;
            td_fresh_ = true;
        } else if (tok == "</td>") {
            if (block_ == Block::Table && td_open_) {
                close_td(true);
            } else {
                warn("stray </td>");
            }
        } else if (auto span = vocab::parse_span_token(tok)) {
            if (block_ == Block::Table && td_open_ && td_fresh_) {
                auto& td = current_td();
                (span->first == 'r' ? td.rowspan : td.colspan) = span->second;
            } else {
                warn("misplaced attribute token " + std::string(tok));
            }
        }
    }
};

}  // namespace detail

/// Best-effort segmentation of an arbitrary candidate stream. Unbalanced
/// tags are closed at the next block boundary or end of stream, with a
/// warning for each repair. Never throws on content.
inline ParseResult parse_ground_truth(std::string_view stream) { return detail::StreamParser{}.run(stream); }

// ---------------------------------------------------------------------------
// Ground truth with sidecar

struct SidecarEntry {
    std::string block_id;
    ElementKind kind = ElementKind::Paragraph;
    PixelBox bbox;
    int order_index = 0;
    std::string markup_ref;
    bool operator==(const SidecarEntry&) const = default;
};

struct GroundTruth {
    std::string stream;
    std::vector<SidecarEntry> sidecar;
};

inline void to_json(json& j, const PixelBox& b) { j = json::array({b.x, b.y, b.w, b.h}); }
inline void from_json(const json& j, PixelBox& b) {
    if (!j.is_array() || j.size() != 4) fail(ErrorCode::Input, "bbox must be [x,y,w,h]");
    b = {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

inline void to_json(json& j, const SidecarEntry& e) {
    j = json{{"block_id", e.block_id},
             {"kind", kind_name(e.kind)},
             {"bbox", e.bbox},
             {"order_index", e.order_index},
             {"markup_ref", e.markup_ref}};
}
inline void from_json(const json& j, SidecarEntry& e) {
    e.block_id = j.at("block_id").get<std::string>();
    e.kind = kind_or_throw(j.at("kind").get<std::string>());
    e.bbox = j.at("bbox").get<PixelBox>();
    e.order_index = j.at("order_index").get<int>();
    e.markup_ref = j.value("markup_ref", std::string{});
}

}  // namespace docforge
