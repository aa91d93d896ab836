#pragma once

// Element repository: procedural generators, corpus ingestion and
// rule-based mutation.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "detail/word_pools.hpp"
#include "doc_model.hpp"
#include "parallel.hpp"
#include "raster_layout.hpp"

namespace docforge {

enum class Provenance { Procedural, Ingested, Mutated };

inline std::string_view provenance_name(Provenance p) {
    switch (p) {
        case Provenance::Procedural: return "procedural";
        case Provenance::Ingested: return "ingested";
        case Provenance::Mutated: return "mutated";
    }
    return "procedural";
}

inline Provenance provenance_or_throw(std::string_view s) {
    if (s == "procedural") return Provenance::Procedural;
    if (s == "ingested") return Provenance::Ingested;
    if (s == "mutated") return Provenance::Mutated;
    fail(ErrorCode::Input, "unknown provenance '" + std::string(s) + "'");
}

struct Size {
    int w = 0;
    int h = 0;
    bool operator==(const Size&) const = default;
};

/// An atomic element: content plus its canonical markup.
///
/// `intrinsic` is measured in layout units and is always twice the raster
/// base size, so placing at scale s (a multiple of 0.5) draws the content at
/// integer glyph scale 2s.
struct Element {
    std::string id;
    ElementKind kind = ElementKind::Paragraph;
    Markup markup;
    Size intrinsic;
    std::string lang;
    Provenance provenance = Provenance::Procedural;
};

/// Raster base size (glyph scale 1) of an element.
inline Size base_size(const Element& e) { return {e.intrinsic.w / 2, e.intrinsic.h / 2}; }

inline bool well_formed_lang(std::string_view tag) {
    if (tag.empty() || tag.size() > 35) return false;
    std::size_t i = 0, part = 0;
    while (i <= tag.size()) {
        const auto end = std::min(tag.find('-', i), tag.size());
        const auto len = end - i;
        if (len == 0 || len > 8 || (part == 0 && len < 2)) return false;
        for (std::size_t k = i; k < end; ++k) {
            const auto c = static_cast<unsigned char>(tag[k]);
            if (!(std::isalpha(c) || (part > 0 && std::isdigit(c)))) return false;
        }
        ++part;
        i = end + 1;
    }
    return true;
}

inline std::string element_id(ElementKind kind, const Markup& m, std::string_view lang, Size figure_size = {}) {
    std::string key(kind_name(kind));
    key += '\x1f';
    key += lang;
    key += '\x1f';
    append_block(key, m);
    if (kind == ElementKind::Figure) key += "\x1f" + std::to_string(figure_size.w) + "x" + std::to_string(figure_size.h);
    return hex64(fnv1a64(key));
}

/// Validates the markup and fills id and intrinsic size. `figure_size` is
/// only used for figures (which have no measurable content); both sides are
/// rounded up to even values.
inline Element make_element(Markup m, std::string lang, Provenance prov, Size figure_size = {}) {
    if (auto p = validate_markup(m)) fail(ErrorCode::Validation, "invalid " + std::string(kind_name(kind_of(m))) + " markup: " + *p);
    if (!well_formed_lang(lang)) fail(ErrorCode::Validation, "malformed language tag '" + lang + "'");
    Element e;
    e.kind = kind_of(m);
    e.markup = std::move(m);
    e.lang = std::move(lang);
    e.provenance = prov;
    if (e.kind == ElementKind::Figure) {
        if (figure_size.w <= 0 || figure_size.h <= 0) fail(ErrorCode::Validation, "figure needs a positive size");
        e.intrinsic = {figure_size.w + (figure_size.w & 1), figure_size.h + (figure_size.h & 1)};
    } else {
        const auto lay = raster::layout_markup(e.markup);
        e.intrinsic = {2 * lay.width, 2 * lay.height};
    }
    e.id = element_id(e.kind, e.markup, e.lang, e.intrinsic);
    return e;
}

// ---------------------------------------------------------------------------
// Procedural generation

struct GeneratorOptions {
    int max_rows = 12;
    int max_cols = 8;
    double span_probability = 0.35;
    double thead_probability = 0.4;
    int max_formula_depth = 4;
    int max_formula_tokens = 48;
    int max_paragraph_lines = 8;
    int max_line_chars = 64;
};

inline std::vector<std::string_view> supported_languages() {
    std::vector<std::string_view> out;
    for (const auto& p : detail::kWordPools) out.push_back(p.lang);
    return out;
}

namespace detail {

inline std::string words(Rng& rng, const WordPool& pool, int count, int max_chars) {
    std::string out;
    int chars = 0;
    for (int i = 0; i < count; ++i) {
        const auto w = pool.words[rng.index(pool.words.size())];
        const int wl = static_cast<int>(to_u32(w).size());
        if (i > 0 && chars + wl + (pool.spaced ? 1 : 0) > max_chars) break;
        if (i > 0 && pool.spaced) {
            out += ' ';
            ++chars;
        }
        out += w;
        chars += wl;
    }
    return out;
}

inline std::string number_text(Rng& rng) {
    switch (rng.uniform_int(0, 3)) {
        case 0: return std::to_string(rng.uniform_int(0, 999));
        case 1: return std::to_string(rng.uniform_int(1, 99)) + "." + std::to_string(rng.uniform_int(0, 9));
        case 2: return std::to_string(rng.uniform_int(1, 9)) + "," + std::to_string(rng.uniform_int(100, 999));
        default: return std::to_string(rng.uniform_int(1, 99)) + "%";
    }
}

inline Table generate_table(Rng& rng, const WordPool& pool, const GeneratorOptions& opt) {
    const int rows = static_cast<int>(rng.uniform_int(1, opt.max_rows));
    const int cols = static_cast<int>(rng.uniform_int(1, opt.max_cols));
    const bool thead = rows >= 2 && rng.bernoulli(opt.thead_probability);
    // span[r][c]: -1 covered, 0 free, >0 cell start encoded as rs*64+cs
    std::vector<std::vector<int>> span(static_cast<std::size_t>(rows), std::vector<int>(static_cast<std::size_t>(cols), 0));
    auto at = [&](int r, int c) -> int& { return span[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]; };
    if (rng.bernoulli(opt.span_probability)) {
        const int spans = static_cast<int>(rng.uniform_int(1, 2));
        for (int s = 0; s < spans; ++s) {
            const bool colspan = rng.bernoulli(0.5);
            if (colspan && cols >= 2) {
                const int r = static_cast<int>(rng.uniform_int(0, rows - 1));
                const int cs = static_cast<int>(rng.uniform_int(2, std::min(cols, 4)));
                const int c = static_cast<int>(rng.uniform_int(0, cols - cs));
                bool free = true;
                for (int k = 0; k < cs; ++k) free = free && at(r, c + k) == 0;
                if (!free) continue;
                for (int k = 0; k < cs; ++k) at(r, c + k) = -1;
                at(r, c) = 1 * 64 + cs;
            } else {
                const int first_body = thead ? 1 : 0;
                if (rows - first_body < 2) continue;
                const int rs = static_cast<int>(rng.uniform_int(2, std::min(rows - first_body, 4)));
                const int r = static_cast<int>(rng.uniform_int(first_body, rows - rs));
                const int c = static_cast<int>(rng.uniform_int(0, cols - 1));
                bool free = true;
                for (int k = 0; k < rs; ++k) free = free && at(r + k, c) == 0;
                if (!free) continue;
                for (int k = 0; k < rs; ++k) at(r + k, c) = -1;
                at(r, c) = rs * 64 + 1;
            }
        }
    }
    // a row fully covered by rowspans from above would have no cells
    for (const auto& row : span)
        if (std::all_of(row.begin(), row.end(), [](int v) { return v == -1; }))
            for (auto& line : span) std::fill(line.begin(), line.end(), 0);
    std::vector<TableNode> trs;
    for (int r = 0; r < rows; ++r) {
        TableNode tr{"tr", 1, 1, {}, {}};
        for (int c = 0; c < cols; ++c) {
            const int v = at(r, c);
            if (v == -1) continue;
            int rs = 1, cs = 1;
            if (v > 0) {
                rs = v / 64;
                cs = v % 64;
            }
            std::string text;
            if (r == 0 || c == 0) {
                text = words(rng, pool, static_cast<int>(rng.uniform_int(1, 2)), 14);
            } else if (rng.bernoulli(0.08)) {
                text.clear();
            } else {
                text = number_text(rng);
            }
            tr.children.push_back(make_td(std::move(text), rs, cs));
        }
        trs.push_back(std::move(tr));
    }
    Table t;
    if (thead) {
        TableNode head{"thead", 1, 1, {}, {}}, body{"tbody", 1, 1, {}, {}};
        head.children.push_back(std::move(trs[0]));
        for (std::size_t i = 1; i < trs.size(); ++i) body.children.push_back(std::move(trs[i]));
        t.root.children.push_back(std::move(head));
        t.root.children.push_back(std::move(body));
    } else {
        t.root.children = std::move(trs);
    }
    return t;
}

class FormulaGen {
public:
    FormulaGen(Rng& rng, int max_tokens) : rng_(rng), max_tokens_(max_tokens) {}

    std::vector<std::string> run(int depth) {
        expr(depth);
        return std::move(out_);
    }

private:
    Rng& rng_;
    int max_tokens_;
    std::vector<std::string> out_;

    bool room(int n) const { return static_cast<int>(out_.size()) + n <= max_tokens_; }
    void emit(std::string_view t) { out_.emplace_back(t); }

    void atom() {
        switch (rng_.uniform_int(0, 5)) {
            case 0: emit(std::to_string(rng_.uniform_int(0, 99))); break;
            case 1: emit(formula::kGreek[rng_.index(10)]); break;
            default: emit(std::string(1, static_cast<char>('a' + rng_.uniform_int(0, 25))));
        }
    }

    void braced(int depth) {
        emit("{");
        expr(depth - 1);
        emit("}");
    }

    void term(int depth) {
        const int choice = depth > 0 && room(8) ? static_cast<int>(rng_.uniform_int(0, 7)) : 0;
        switch (choice) {
            case 1:
                atom();
                emit("^");
                if (rng_.bernoulli(0.5)) braced(depth);
                else atom();
                break;
            case 2:
                atom();
                emit("_");
                atom();
                break;
            case 3:
                emit("\\frac");
                braced(depth);
                braced(depth);
                break;
            case 4:
                emit("\\sqrt");
                braced(depth);
                break;
            case 5:
                emit(formula::kBigOps[rng_.index(2)]);
                emit("_");
                emit("{");
                emit("i");
                emit("=");
                emit("1");
                emit("}");
                emit("^");
                emit("n");
                term(depth - 1);
                break;
            case 6:
                emit("(");
                expr(depth);
                emit(")");
                break;
            default: atom();
        }
    }

    void expr(int depth) {
        static constexpr std::string_view ops[] = {"+", "-", "=", "\\times", "\\cdot", "\\pm", "\\leq"};
        const int terms = static_cast<int>(rng_.uniform_int(1, 3));
        for (int i = 0; i < terms; ++i) {
            if (i > 0) {
                if (!room(2)) break;
                emit(ops[rng_.index(std::size(ops))]);
            }
            term(depth);
        }
    }
};

}  // namespace detail

/// Deterministic element for (kind, lang, seed).
inline Element generate_element(ElementKind kind, std::string_view lang, std::uint64_t seed, const GeneratorOptions& opt = {}) {
    const auto* pool = detail::find_pool(lang);
    const bool needs_pool = kind == ElementKind::Table || kind == ElementKind::Paragraph || kind == ElementKind::Title;
    if (needs_pool && !pool)
        fail(ErrorCode::Input, "unsupported language '" + std::string(lang) + "' for " + std::string(kind_name(kind)));
    if (!needs_pool && !well_formed_lang(lang)) fail(ErrorCode::Input, "malformed language tag '" + std::string(lang) + "'");
    Rng rng(derive_seed(seed, kind_name(kind)));
    switch (kind) {
        case ElementKind::Table: return make_element(detail::generate_table(rng, *pool, opt), std::string(lang), Provenance::Procedural);
        case ElementKind::Formula: {
            const int depth = static_cast<int>(rng.uniform_int(1, opt.max_formula_depth));
            return make_element(Formula{detail::FormulaGen(rng, opt.max_formula_tokens).run(depth)}, std::string(lang), Provenance::Procedural);
        }
        case ElementKind::Paragraph: {
            Paragraph p;
            const int lines = static_cast<int>(rng.uniform_int(1, opt.max_paragraph_lines));
            for (int i = 0; i < lines; ++i) {
                const int n = static_cast<int>(rng.uniform_int(pool->spaced ? 3 : 6, pool->spaced ? 12 : 24));
                p.lines.push_back(detail::words(rng, *pool, n, opt.max_line_chars));
            }
            return make_element(std::move(p), std::string(lang), Provenance::Procedural);
        }
        case ElementKind::Figure: {
            const Size s{static_cast<int>(rng.uniform_int(60, 200)) * 2, static_cast<int>(rng.uniform_int(40, 150)) * 2};
            return make_element(Figure{}, std::string(lang), Provenance::Procedural, {2 * s.w, 2 * s.h});
        }
        case ElementKind::Title:
            return make_element(Title{detail::words(rng, *pool, static_cast<int>(rng.uniform_int(2, 6)), 48)}, std::string(lang),
                                Provenance::Procedural);
    }
    fail(ErrorCode::Internal, "unreachable element kind");
}

// ---------------------------------------------------------------------------
// Ingestion

enum class CorpusFormat { HtmlTableJsonl, FormulaJsonl, TextJsonl };

inline CorpusFormat corpus_format_or_throw(std::string_view s) {
    if (s == "html-table-jsonl") return CorpusFormat::HtmlTableJsonl;
    if (s == "formula-jsonl") return CorpusFormat::FormulaJsonl;
    if (s == "text-jsonl") return CorpusFormat::TextJsonl;
    fail(ErrorCode::Input, "unknown corpus format '" + std::string(s) + "'");
}

inline std::string_view corpus_format_name(CorpusFormat f) {
    switch (f) {
        case CorpusFormat::HtmlTableJsonl: return "html-table-jsonl";
        case CorpusFormat::FormulaJsonl: return "formula-jsonl";
        case CorpusFormat::TextJsonl: return "text-jsonl";
    }
    return "";
}

struct IngestReport {
    std::size_t total = 0;
    std::size_t accepted = 0;
    std::size_t skipped = 0;
    std::vector<std::string> reasons;  // first few, "line N: why"
};

struct IngestResult {
    std::vector<Element> elements;
    IngestReport report;
};

namespace detail {

inline std::string decode_entities(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '&') {
            out += s[i];
            continue;
        }
        const auto semi = s.find(';', i);
        if (semi == std::string_view::npos || semi - i > 10) {
            out += '&';
            continue;
        }
        const auto name = s.substr(i + 1, semi - i - 1);
        if (name == "amp") out += '&';
        else if (name == "lt") out += '<';
        else if (name == "gt") out += '>';
        else if (name == "quot") out += '"';
        else if (name == "apos") out += '\'';
        else if (name == "nbsp") out += ' ';
        else if (name.size() > 1 && name[0] == '#') {
            char32_t cp = 0;
            try {
                cp = static_cast<char32_t>(name[1] == 'x' || name[1] == 'X' ? std::stoul(std::string(name.substr(2)), nullptr, 16)
                                                                             : std::stoul(std::string(name.substr(1))));
            } catch (...) {
                out += '&';
                continue;
            }
            append_utf8(out, cp);
        } else {
            out += '&';
            continue;
        }
        i = semi;
    }
    return out;
}

inline std::string collapse_ws(std::string_view s) { return join(split_whitespace(s), " "); }

/// Lenient HTML table reader: th becomes td, tfoot becomes tbody, inline
/// markup is dropped and its text kept.
inline std::optional<Table> html_table(std::string_view html, std::string& why) {
    Table t;
    bool in_table = false, done = false;
    int section = -1;
    bool tr_open = false, td_open = false;
    std::string cell;
    auto rows = [&]() -> std::vector<TableNode>& {
        return section >= 0 ? t.root.children[static_cast<std::size_t>(section)].children : t.root.children;
    };
    auto close_td = [&] {
        if (!td_open) return;
        rows().back().children.back().text = collapse_ws(decode_entities(cell));
        cell.clear();
        td_open = false;
    };
    auto close_tr = [&] {
        close_td();
        tr_open = false;
    };
    std::size_t i = 0;
    while (i < html.size() && !done) {
        if (html[i] != '<') {
            const auto next = html.find('<', i);
            const auto text = html.substr(i, (next == std::string_view::npos ? html.size() : next) - i);
            if (td_open) cell += text;
            i = next == std::string_view::npos ? html.size() : next;
            continue;
        }
        const auto close = html.find('>', i);
        if (close == std::string_view::npos) {
            why = "unterminated tag";
            return std::nullopt;
        }
        std::string_view tag = html.substr(i + 1, close - i - 1);
        i = close + 1;
        const bool end = !tag.empty() && tag[0] == '/';
        if (end) tag.remove_prefix(1);
        std::size_t nl = 0;
        while (nl < tag.size() && std::isalnum(static_cast<unsigned char>(tag[nl]))) ++nl;
        std::string name(tag.substr(0, nl));
        for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        const auto attrs = tag.substr(nl);
        if (name == "table") {
            if (end) {
                close_tr();
                done = in_table;
            } else if (in_table) {
                why = "nested table";
                return std::nullopt;
            } else {
                in_table = true;
            }
        } else if (!in_table) {
            continue;
        } else if (name == "thead" || name == "tbody" || name == "tfoot") {
            close_tr();
            if (end) {
                section = -1;
            } else {
                t.root.children.push_back(TableNode{name == "thead" ? "thead" : "tbody", 1, 1, {}, {}});
                section = static_cast<int>(t.root.children.size()) - 1;
            }
        } else if (name == "tr") {
            close_tr();
            if (!end) {
                rows().push_back(TableNode{"tr", 1, 1, {}, {}});
                tr_open = true;
            }
        } else if (name == "td" || name == "th") {
            close_td();
            if (end) continue;
            if (!tr_open) {
                rows().push_back(TableNode{"tr", 1, 1, {}, {}});
                tr_open = true;
            }
            auto td = make_td("");
            auto attr = [&](std::string_view key) -> int {
                std::string lower(attrs);
                for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
                const auto p = lower.find(key);
                if (p == std::string::npos) return 1;
                std::size_t q = p + key.size();
                while (q < lower.size() && (lower[q] == ' ' || lower[q] == '=' || lower[q] == '"' || lower[q] == '\'')) ++q;
                int v = 0;
                while (q < lower.size() && std::isdigit(static_cast<unsigned char>(lower[q]))) v = v * 10 + (lower[q++] - '0');
                return v > 0 ? v : 1;
            };
            td.rowspan = attr("rowspan");
            td.colspan = attr("colspan");
            rows().back().children.push_back(std::move(td));
            td_open = true;
        } else if (name == "br" && td_open) {
            cell += ' ';
        }
    }
    if (!in_table) {
        why = "no <table> element";
        return std::nullopt;
    }
    close_tr();
    // sections left empty by stray tags are dropped
    std::erase_if(t.root.children, [](const TableNode& n) { return n.tag != "tr" && n.children.empty(); });
    return t;
}

/// Splits LaTeX source into grammar tokens. Spacing commands and
/// \left/\right are dropped.
inline std::optional<std::vector<std::string>> latex_tokens(std::string_view src, std::string& why) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < src.size()) {
        const char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (c == '\\') {
            std::size_t j = i + 1;
            while (j < src.size() && std::isalpha(static_cast<unsigned char>(src[j]))) ++j;
            if (j == i + 1) {
                // \, \; \! \  and escaped punctuation
                if (j < src.size() && std::string_view(",;!: ").find(src[j]) != std::string_view::npos) {
                    i = j + 1;
                    continue;
                }
                why = "unsupported escape";
                return std::nullopt;
            }
            std::string cmd(src.substr(i, j - i));
            i = j;
            if (cmd == "\\left" || cmd == "\\right" || cmd == "\\quad" || cmd == "\\qquad") continue;
            out.push_back(std::move(cmd));
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) ||
                                      (src[j] == '.' && j + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[j + 1])))))
                ++j;
            out.emplace_back(src.substr(i, j - i));
            i = j;
        } else {
            out.emplace_back(1, c);
            ++i;
        }
    }
    for (const auto& t : out)
        if (formula::classify(t) == formula::TokenClass::Invalid) {
            why = "token outside the formula grammar: '" + t + "'";
            return std::nullopt;
        }
    return out;
}

inline std::vector<std::string> wrap_lines(std::string_view text, int cols) {
    std::vector<std::string> out;
    for (const auto& l : raster::wrap_text(to_u32(text), cols)) out.push_back(to_utf8(l));
    return out;
}

inline std::optional<Element> ingest_record(const json& rec, CorpusFormat fmt, std::string& why) {
    if (!rec.is_object()) {
        why = "record is not an object";
        return std::nullopt;
    }
    const std::string lang = rec.contains("lang") && rec["lang"].is_string() ? rec["lang"].get<std::string>() : "en";
    if (!well_formed_lang(lang)) {
        why = "malformed language tag";
        return std::nullopt;
    }
    if (!rec.contains("content")) {
        why = "missing content";
        return std::nullopt;
    }
    const auto& content = rec["content"];
    std::string kind = rec.contains("kind") && rec["kind"].is_string() ? rec["kind"].get<std::string>() : "";
    std::optional<Markup> markup;
    switch (fmt) {
        case CorpusFormat::HtmlTableJsonl: {
            if (!kind.empty() && kind != "table") {
                why = "kind '" + kind + "' in table corpus";
                return std::nullopt;
            }
            if (!content.is_string()) {
                why = "content is not a string";
                return std::nullopt;
            }
            if (auto t = html_table(content.get<std::string>(), why)) markup = std::move(*t);
            break;
        }
        case CorpusFormat::FormulaJsonl: {
            if (!kind.empty() && kind != "formula") {
                why = "kind '" + kind + "' in formula corpus";
                return std::nullopt;
            }
            if (!content.is_string()) {
                why = "content is not a string";
                return std::nullopt;
            }
            if (auto toks = latex_tokens(content.get<std::string>(), why)) markup = Formula{std::move(*toks)};
            break;
        }
        case CorpusFormat::TextJsonl: {
            if (kind.empty()) kind = "paragraph";
            std::string text;
            if (content.is_string()) {
                text = content.get<std::string>();
            } else if (content.is_array()) {
                for (const auto& l : content)
                    if (l.is_string()) text += l.get<std::string>() + " ";
            } else {
                why = "content is neither string nor array";
                return std::nullopt;
            }
            text = collapse_ws(text);
            if (text.empty()) {
                why = "empty text";
                return std::nullopt;
            }
            if (kind == "paragraph") {
                markup = Paragraph{wrap_lines(text, 72)};
            } else if (kind == "title") {
                if (to_u32(text).size() > 80) {
                    why = "title longer than 80 characters";
                    return std::nullopt;
                }
                markup = Title{text};
            } else {
                why = "kind '" + kind + "' in text corpus";
                return std::nullopt;
            }
            break;
        }
    }
    if (!markup) return std::nullopt;
    if (auto p = validate_markup(*markup)) {
        why = *p;
        return std::nullopt;
    }
    return make_element(std::move(*markup), lang, Provenance::Ingested);
}

}  // namespace detail

/// Normalizes JSONL records ({"kind", "content", "lang"}) into elements.
/// Invalid records are skipped and counted; more than half invalid is
/// treated as a corpus/format mismatch and throws.
inline IngestResult ingest_stream(std::istream& in, CorpusFormat fmt, std::string_view source = "<stream>") {
    IngestResult res;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++res.report.total;
        std::string why;
        std::optional<Element> e;
        try {
            e = detail::ingest_record(json::parse(line), fmt, why);
        } catch (const json::exception& ex) {
            why = std::string("malformed JSON: ") + ex.what();
        } catch (const Error& ex) {
            why = ex.what();
        }
        if (e) {
            res.elements.push_back(std::move(*e));
            ++res.report.accepted;
        } else {
            ++res.report.skipped;
            if (res.report.reasons.size() < 20) res.report.reasons.push_back("line " + std::to_string(lineno) + ": " + why);
        }
    }
    if (res.report.total > 0 && res.report.skipped * 2 > res.report.total)
        fail(ErrorCode::Input, std::string(source) + ": " + std::to_string(res.report.skipped) + " of " +
                                   std::to_string(res.report.total) + " records invalid for format " +
                                   std::string(corpus_format_name(fmt)));
    return res;
}

inline IngestResult ingest_elements(const std::filesystem::path& path, CorpusFormat fmt) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Input, "cannot read corpus file " + path.string());
    return ingest_stream(in, fmt, path.string());
}

// ---------------------------------------------------------------------------
// Mutation

enum class MutationKind { TableRowShuffle, TableColMerge, FormulaSymbolSwap, HybridEmbed, ParagraphRegroup };

inline std::string_view mutation_name(MutationKind k) {
    switch (k) {
        case MutationKind::TableRowShuffle: return "table-row-shuffle";
        case MutationKind::TableColMerge: return "table-col-merge";
        case MutationKind::FormulaSymbolSwap: return "formula-symbol-swap";
        case MutationKind::HybridEmbed: return "hybrid-embed";
        case MutationKind::ParagraphRegroup: return "paragraph-regroup";
    }
    return "";
}

struct MutationRule {
    MutationKind kind = MutationKind::TableRowShuffle;
    std::uint64_t seed = 0;
    std::optional<Formula> guest;  // hybrid-embed only
    int column = -1;               // table-col-merge: left column, -1 = seeded choice
    int width = 0;                 // paragraph-regroup: line width, 0 = seeded choice
};

/// Interchangeable symbols for formula-symbol-swap; a token is only ever
/// replaced by another member of its own class.
inline const std::vector<std::vector<std::string>>& symbol_swap_classes() {
    static const std::vector<std::vector<std::string>> classes = [] {
        std::vector<std::vector<std::string>> c = {
            {"+", "-", "\\pm"},
            {"\\times", "\\cdot", "\\div"},
            {"=", "\\leq", "\\geq", "\\neq", "\\approx", "\\equiv"},
            {"\\alpha", "\\beta", "\\gamma", "\\delta", "\\epsilon", "\\theta", "\\lambda", "\\mu", "\\pi", "\\sigma", "\\phi", "\\omega"},
            {"\\sum", "\\prod"},
        };
        std::vector<std::string> letters;
        for (char ch = 'a'; ch <= 'z'; ++ch) letters.emplace_back(1, ch);
        c.push_back(letters);
        std::vector<std::string> digits;
        for (char ch = '0'; ch <= '9'; ++ch) digits.emplace_back(1, ch);
        c.push_back(digits);
        return c;
    }();
    return classes;
}

inline const std::vector<std::string>* swap_class_of(std::string_view tok) {
    for (const auto& c : symbol_swap_classes())
        if (std::find(c.begin(), c.end(), tok) != c.end()) return &c;
    return nullptr;
}

namespace detail {

inline void shuffle_row_groups(std::vector<TableNode>& rows, Rng& rng) {
    if (rows.size() < 2) return;
    std::vector<std::vector<TableNode>> groups;
    std::size_t i = 0;
    while (i < rows.size()) {
        std::size_t end = i;
        std::size_t k = i;
        while (k <= end && k < rows.size()) {
            for (const auto& td : rows[k].children) end = std::max(end, k + static_cast<std::size_t>(std::max(1, td.rowspan)) - 1);
            ++k;
        }
        end = std::min(end, rows.size() - 1);
        groups.emplace_back(std::make_move_iterator(rows.begin() + static_cast<std::ptrdiff_t>(i)),
                            std::make_move_iterator(rows.begin() + static_cast<std::ptrdiff_t>(end) + 1));
        i = end + 1;
    }
    rng.shuffle(groups);
    rows.clear();
    for (auto& g : groups)
        for (auto& r : g) rows.push_back(std::move(r));
}

inline Table row_shuffle(Table t, Rng& rng) {
    // header rows stay in place
    bool rows_direct = false;
    for (auto& c : t.root.children) {
        if (c.tag == "tbody") shuffle_row_groups(c.children, rng);
        rows_direct = rows_direct || c.tag == "tr";
    }
    if (rows_direct) {
        std::vector<std::size_t> slots;
        std::vector<TableNode> direct;
        for (std::size_t i = 0; i < t.root.children.size(); ++i)
            if (t.root.children[i].tag == "tr") {
                slots.push_back(i);
                direct.push_back(std::move(t.root.children[i]));
            }
        shuffle_row_groups(direct, rng);
        for (std::size_t k = 0; k < slots.size(); ++k) t.root.children[slots[k]] = std::move(direct[k]);
    }
    return t;
}

inline Table col_merge(Table t, int column, Rng& rng) {
    Grid grid;
    expand_grid(t, grid);
    if (grid.cols < 2) return t;
    const int c = column >= 0 ? std::min(column, grid.cols - 2) : static_cast<int>(rng.uniform_int(0, grid.cols - 2));
    const auto const_rows = table_rows(std::as_const(t));
    auto rows = table_rows(t);
    // (row, cell index) pairs to merge: left cell ends at c, right starts at c+1
    std::vector<std::pair<std::size_t, std::size_t>> merges;
    for (std::size_t ci = 0; ci + 1 < grid.cells.size(); ++ci) {
        const auto& a = grid.cells[ci];
        const auto& b = grid.cells[ci + 1];
        if (a.row != b.row || a.rowspan != 1 || b.rowspan != 1) continue;
        if (a.col + a.colspan - 1 != c || b.col != c + 1) continue;
        const auto* row = const_rows[static_cast<std::size_t>(a.row)];
        merges.emplace_back(static_cast<std::size_t>(a.row), static_cast<std::size_t>(a.node - row->children.data()));
    }
    for (auto it = merges.rbegin(); it != merges.rend(); ++it) {
        auto& cells = rows[it->first]->children;
        auto& left = cells[it->second];
        auto& right = cells[it->second + 1];
        if (left.colspan + right.colspan > vocab::kMaxSpan) continue;
        left.colspan += right.colspan;
        if (!right.text.empty()) left.text = left.text.empty() ? right.text : left.text + " " + right.text;
        cells.erase(cells.begin() + static_cast<std::ptrdiff_t>(it->second) + 1);
    }
    return t;
}

/// Words of a line where each inline formula span stays one unit.
inline std::vector<std::string> inline_units(std::string_view line) {
    std::vector<std::string> out;
    visit_inline(
        line,
        [&](std::string_view s) {
            for (auto& w : split_whitespace(s)) out.push_back(std::move(w));
        },
        [&](std::string_view inner) { out.push_back("<formula>" + join(split_whitespace(inner), " ") + "</formula>"); });
    return out;
}

}  // namespace detail

/// Applies a mutation rule; the result has provenance Mutated and a fresh id.
inline Element mutate_element(const Element& e, const MutationRule& rule) {
    auto inapplicable = [&]() -> Element {
        fail(ErrorCode::Validation, "mutation " + std::string(mutation_name(rule.kind)) + " is not applicable to " +
                                        std::string(kind_name(e.kind)) + " elements");
    };
    Rng rng(derive_seed(rule.seed, mutation_name(rule.kind)));
    Markup out = e.markup;
    switch (rule.kind) {
        case MutationKind::TableRowShuffle:
            if (e.kind != ElementKind::Table) return inapplicable();
            out = detail::row_shuffle(std::get<Table>(e.markup), rng);
            break;
        case MutationKind::TableColMerge:
            if (e.kind != ElementKind::Table) return inapplicable();
            out = detail::col_merge(std::get<Table>(e.markup), rule.column, rng);
            break;
        case MutationKind::FormulaSymbolSwap: {
            if (e.kind != ElementKind::Formula) return inapplicable();
            auto f = std::get<Formula>(e.markup);
            std::vector<std::size_t> swappable;
            for (std::size_t i = 0; i < f.tokens.size(); ++i)
                if (swap_class_of(f.tokens[i])) swappable.push_back(i);
            if (!swappable.empty()) {
                const auto pos = swappable[rng.index(swappable.size())];
                const auto& cls = *swap_class_of(f.tokens[pos]);
                std::vector<std::string> others;
                for (const auto& s : cls)
                    if (s != f.tokens[pos]) others.push_back(s);
                f.tokens[pos] = rng.pick(others);
            }
            out = std::move(f);
            break;
        }
        case MutationKind::HybridEmbed: {
            if (e.kind != ElementKind::Table && e.kind != ElementKind::Paragraph) return inapplicable();
            if (!rule.guest) fail(ErrorCode::Validation, "hybrid-embed needs a guest formula");
            if (auto p = validate_markup(*rule.guest)) fail(ErrorCode::Validation, "hybrid-embed guest: " + *p);
            const std::string span = "<formula>" + join(rule.guest->tokens, " ") + "</formula>";
            if (e.kind == ElementKind::Table) {
                auto t = std::get<Table>(e.markup);
                auto rows = table_rows(t);
                std::size_t cells = 0;
                for (auto* r : rows) cells += r->children.size();
                std::size_t pick = rng.index(cells);
                for (auto* r : rows) {
                    if (pick < r->children.size()) {
                        r->children[pick].text = span;
                        break;
                    }
                    pick -= r->children.size();
                }
                out = std::move(t);
            } else {
                auto p = std::get<Paragraph>(e.markup);
                if (p.lines.empty()) {
                    p.lines.push_back(span);
                } else {
                    auto& line = p.lines[rng.index(p.lines.size())];
                    auto units = detail::inline_units(line);
                    units.insert(units.begin() + static_cast<std::ptrdiff_t>(rng.index(units.size() + 1)), span);
                    line = join(units, " ");
                }
                out = std::move(p);
            }
            break;
        }
        case MutationKind::ParagraphRegroup: {
            if (e.kind != ElementKind::Paragraph) return inapplicable();
            const auto& src = std::get<Paragraph>(e.markup);
            std::vector<std::string> units;
            for (const auto& l : src.lines)
                for (auto& u : detail::inline_units(l)) units.push_back(std::move(u));
            const std::size_t width = static_cast<std::size_t>(rule.width > 0 ? rule.width : rng.uniform_int(20, 60));
            Paragraph p;
            std::string line;
            std::size_t len = 0;
            for (const auto& u : units) {
                const auto ul = display_text(u).size();
                if (!line.empty() && len + 1 + ul > width) {
                    p.lines.push_back(std::move(line));
                    line.clear();
                    len = 0;
                }
                if (!line.empty()) {
                    line += ' ';
                    ++len;
                }
                line += u;
                len += ul;
            }
            if (!line.empty()) p.lines.push_back(std::move(line));
            out = std::move(p);
            break;
        }
    }
    return make_element(std::move(out), e.lang, Provenance::Mutated, e.intrinsic);
}

// ---------------------------------------------------------------------------
// Repository

inline void to_json(json& j, const Element& e) {
    j = json{{"id", e.id},
             {"kind", kind_name(e.kind)},
             {"lang", e.lang},
             {"provenance", provenance_name(e.provenance)},
             {"size", {e.intrinsic.w, e.intrinsic.h}},
             {"markup", serialize_block(e.markup)}};
}

inline Element element_from_json(const json& j) {
    const auto kind = kind_or_throw(j.at("kind").get<std::string>());
    auto parsed = parse_ground_truth("<doc>" + j.at("markup").get<std::string>() + "</doc>");
    if (parsed.blocks.size() != 1 || !parsed.warnings.empty() || kind_of(parsed.blocks[0]) != kind)
        fail(ErrorCode::Input, "element record " + j.value("id", std::string("?")) + " has malformed markup");
    const auto size = j.at("size");
    auto e = make_element(std::move(parsed.blocks[0]), j.at("lang").get<std::string>(),
                          provenance_or_throw(j.value("provenance", std::string("procedural"))),
                          {size.at(0).get<int>(), size.at(1).get<int>()});
    if (e.id != j.at("id").get<std::string>()) fail(ErrorCode::Input, "element id mismatch for " + j.at("id").get<std::string>());
    return e;
}

class Repository {
public:
    /// Adds an element unless one with the same id is already present.
    bool add(Element e) {
        if (!ids_.emplace(e.id, elements_.size()).second) return false;
        by_kind_[static_cast<std::size_t>(e.kind)].push_back(elements_.size());
        elements_.push_back(std::move(e));
        return true;
    }

    const std::vector<Element>& elements() const { return elements_; }
    const std::vector<std::size_t>& indices_of(ElementKind k) const { return by_kind_[static_cast<std::size_t>(k)]; }
    std::size_t size() const { return elements_.size(); }
    bool empty() const { return elements_.empty(); }
    const Element* find(const std::string& id) const {
        const auto it = ids_.find(id);
        return it == ids_.end() ? nullptr : &elements_[it->second];
    }

    std::string to_jsonl() const {
        std::string out;
        for (const auto& e : elements_) out += json(e).dump() + "\n";
        return out;
    }

    std::uint64_t content_hash() const { return fnv1a64(to_jsonl()); }

    /// Writes `<stem>.jsonl` and the `<stem>.index.json` content-hash index.
    void save(const std::filesystem::path& jsonl_path) const {
        const auto body = to_jsonl();
        {
            std::ofstream out(jsonl_path, std::ios::binary);
            if (!out) fail(ErrorCode::Io, "cannot write " + jsonl_path.string());
            out << body;
        }
        json index{{"count", elements_.size()}, {"content_hash", hex64(fnv1a64(body))}, {"entries", json::array()}};
        std::size_t offset = 0;
        for (const auto& e : elements_) {
            const auto line = json(e).dump();
            index["entries"].push_back({{"id", e.id}, {"kind", kind_name(e.kind)}, {"offset", offset}});
            offset += line.size() + 1;
        }
        auto index_path = jsonl_path;
        index_path.replace_extension(".index.json");
        std::ofstream out(index_path, std::ios::binary);
        if (!out) fail(ErrorCode::Io, "cannot write " + index_path.string());
        out << index.dump(2) << "\n";
    }

    static Repository load(const std::filesystem::path& jsonl_path) {
        std::ifstream in(jsonl_path);
        if (!in) fail(ErrorCode::Input, "cannot read repository " + jsonl_path.string());
        Repository repo;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                repo.add(element_from_json(json::parse(line)));
            } catch (const json::exception& ex) {
                fail(ErrorCode::Input, jsonl_path.string() + ": " + ex.what());
            }
        }
        return repo;
    }

private:
    std::vector<Element> elements_;
    std::array<std::vector<std::size_t>, 5> by_kind_;
    std::map<std::string, std::size_t> ids_;
};

struct CorpusSource {
    std::string path;
    CorpusFormat format = CorpusFormat::TextJsonl;
};

struct RepositoryConfig {
    std::uint64_t seed = 0;
    int per_kind = 240;  // procedural elements per kind
    std::vector<std::string> languages{"en", "zh", "de", "fr", "es", "it", "ja", "pt"};
    double mutated_fraction = 0.15;
    bool titles = false;
    std::vector<CorpusSource> sources;
    GeneratorOptions generator;
};

/// Procedural elements per kind, ingested corpora, then mutations of the
/// procedural set. Per-record seeds keep the result independent of `workers`.
inline Repository build_repository(const RepositoryConfig& cfg, int workers = 1) {
    if (cfg.languages.empty()) fail(ErrorCode::Validation, "repository needs at least one language");
    for (const auto& l : cfg.languages)
        if (!detail::find_pool(l)) fail(ErrorCode::Validation, "no word pool for language '" + l + "'");
    std::vector<ElementKind> kinds{ElementKind::Table, ElementKind::Formula, ElementKind::Paragraph, ElementKind::Figure};
    if (cfg.titles) kinds.push_back(ElementKind::Title);
    const auto per_kind = static_cast<std::size_t>(std::max(0, cfg.per_kind));
    std::vector<Element> generated(kinds.size() * per_kind);
    parallel_for(generated.size(), workers, [&](std::size_t i) {
        const auto kind = kinds[i / per_kind];
        const auto k = i % per_kind;
        const auto& lang = cfg.languages[k % cfg.languages.size()];
        generated[i] = generate_element(kind, lang, derive_seed(cfg.seed, kind_name(kind), k), cfg.generator);
    });
    Repository repo;
    for (auto& e : generated) repo.add(std::move(e));
    for (const auto& src : cfg.sources)
        for (auto& e : ingest_elements(src.path, src.format).elements) repo.add(std::move(e));

    const auto base = repo.elements();
    const auto& formulas = repo.indices_of(ElementKind::Formula);
    const auto mutations = static_cast<std::size_t>(std::llround(cfg.mutated_fraction * static_cast<double>(base.size())));
    std::vector<std::optional<Element>> mutated(mutations);
    if (!base.empty()) {
        parallel_for(mutations, workers, [&](std::size_t i) {
            Rng rng(derive_seed(cfg.seed, "mutation", i));
            const auto& host = base[rng.index(base.size())];
            MutationRule rule;
            rule.seed = rng.next();
            switch (host.kind) {
                case ElementKind::Table: {
                    const auto r = rng.uniform_int(0, 2);
                    rule.kind = r == 0 ? MutationKind::TableRowShuffle : r == 1 ? MutationKind::TableColMerge : MutationKind::HybridEmbed;
                    break;
                }
                case ElementKind::Formula: rule.kind = MutationKind::FormulaSymbolSwap; break;
                case ElementKind::Paragraph:
                    rule.kind = rng.bernoulli(0.5) ? MutationKind::ParagraphRegroup : MutationKind::HybridEmbed;
                    break;
                default: return;
            }
            if (rule.kind == MutationKind::HybridEmbed) {
                if (formulas.empty()) return;
                const auto& guest = std::get<Formula>(base[formulas[rng.index(formulas.size())]].markup);
                if (guest.tokens.size() > 12) return;  // keep embedded spans short
                rule.guest = guest;
            }
            mutated[i] = mutate_element(host, rule);
        });
    }
    for (auto& m : mutated)
        if (m) repo.add(std::move(*m));
    return repo;
}

}  // namespace docforge
