#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "support.hpp"

using namespace docforge;

namespace {

std::size_t count_token(const std::string& stream, const std::string& tok) {
    std::size_t n = 0;
    for (const auto& t : tokenize(stream))
        if (t.structural && t.text == tok) ++n;
    return n;
}

// Independent brace checker: every "{" closes with a "}" and depth never dips below zero.
bool braces_balanced(const std::vector<std::string>& tokens) {
    long depth = 0;
    for (const auto& t : tokens) {
        if (t == "{") ++depth;
        if (t == "}" && --depth < 0) return false;
    }
    return depth == 0;
}

Element table_element(std::vector<std::vector<std::string>> rows) {
    Table t;
    for (auto& r : rows) {
        TableNode tr{"tr", 1, 1, {}, {}};
        for (auto& c : r) tr.children.push_back(make_td(c));
        t.root.children.push_back(tr);
    }
    return make_element(t, "en", Provenance::Procedural);
}

}  // namespace

TEST(Generate, Deterministic) {
    for (auto kind : kAllKinds) {
        const auto a = generate_element(kind, "en", 99);
        const auto b = generate_element(kind, "en", 99);
        EXPECT_EQ(a.id, b.id);
        EXPECT_EQ(a.markup, b.markup);
        EXPECT_EQ(a.intrinsic, b.intrinsic);
    }
}

TEST(Generate, TwoByTwoTableHasFourCells) {
    // search for a seed whose table came out as a plain 2x2 grid
    bool found = false;
    for (std::uint64_t seed = 0; seed < 20000 && !found; ++seed) {
        const auto e = generate_element(ElementKind::Table, "en", seed);
        Grid g;
        expand_grid(std::get<Table>(e.markup), g);
        if (g.rows != 2 || g.cols != 2) continue;
        bool spans = false;
        for (const auto& c : g.cells) spans = spans || c.rowspan > 1 || c.colspan > 1;
        if (spans) continue;
        found = true;
        EXPECT_EQ(count_token(serialize_block(e.markup), "<td>"), 4u);
    }
    EXPECT_TRUE(found);
}

TEST(Generate, FormulaBracesBalance) {
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
        const auto e = generate_element(ElementKind::Formula, "en", seed);
        const auto& toks = std::get<Formula>(e.markup).tokens;
        ASSERT_FALSE(toks.empty());
        ASSERT_TRUE(braces_balanced(toks)) << serialize_block(e.markup);
    }
}

TEST(Generate, AllLanguagesAndKindsAreValid) {
    const auto langs = supported_languages();
    EXPECT_EQ(langs.size(), 8u);
    for (auto lang : langs)
        for (auto kind : kAllKinds)
            for (std::uint64_t seed = 0; seed < 150; ++seed) {
                const auto e = generate_element(kind, lang, seed);
                ASSERT_EQ(e.kind, kind);
                ASSERT_FALSE(validate_markup(e.markup).has_value());
                ASSERT_GT(e.intrinsic.w, 0);
                ASSERT_GT(e.intrinsic.h, 0);
                ASSERT_EQ(e.intrinsic.w % 2, 0);
                ASSERT_EQ(e.intrinsic.h % 2, 0);
            }
}

TEST(Generate, UnsupportedLanguage) {
    try {
        generate_element(ElementKind::Paragraph, "xx", 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Input);
    }
}

TEST(Generate, IntrinsicSizeIsTwiceLayout) {
    const auto e = generate_element(ElementKind::Table, "en", 3);
    const auto lay = raster::layout_markup(e.markup);
    EXPECT_EQ(e.intrinsic, (Size{2 * lay.width, 2 * lay.height}));
}

TEST(Ingest, ThreeValidTables) {
    std::istringstream in(
        R"({"content": "<table><tr><td>a</td><td>b</td></tr></table>"})"
        "\n"
        R"({"content": "<table><thead><tr><th>h</th></tr></thead><tbody><tr><td>1</td></tr></tbody></table>"})"
        "\n"
        R"({"content": "<table><tr><td rowspan=\"2\">x</td><td>y</td></tr><tr><td>z</td></tr></table>", "lang": "de"})"
        "\n");
    const auto r = ingest_stream(in, CorpusFormat::HtmlTableJsonl);
    EXPECT_EQ(r.elements.size(), 3u);
    EXPECT_EQ(r.report.total, 3u);
    EXPECT_EQ(r.report.skipped, 0u);
    for (const auto& e : r.elements) {
        EXPECT_EQ(e.kind, ElementKind::Table);
        EXPECT_EQ(e.provenance, Provenance::Ingested);
    }
    EXPECT_EQ(r.elements[2].lang, "de");
    EXPECT_EQ(std::get<Table>(r.elements[2].markup).root.children[0].children[0].rowspan, 2);
}

TEST(Ingest, OneValidOneMalformed) {
    std::istringstream in("{\"content\": \"a + b = c\"}\n{\"content\": \"{ a + b\"}\n");
    const auto r = ingest_stream(in, CorpusFormat::FormulaJsonl);
    EXPECT_EQ(r.elements.size(), 1u);
    EXPECT_EQ(r.report.total, 2u);
    EXPECT_EQ(r.report.skipped, 1u);
    ASSERT_EQ(r.report.reasons.size(), 1u);
    EXPECT_NE(r.report.reasons[0].find("line 2"), std::string::npos);
}

TEST(Ingest, EmptyFile) {
    testsupport::TempDir dir("ingest");
    testsupport::spit(dir / "empty.jsonl", "");
    const auto r = ingest_elements(dir / "empty.jsonl", CorpusFormat::TextJsonl);
    EXPECT_TRUE(r.elements.empty());
    EXPECT_EQ(r.report.total, 0u);
}

TEST(Ingest, MostlyInvalidThrows) {
    std::istringstream in("not json\n{\"content\": 3}\n{\"content\": \"fine text\"}\n");
    EXPECT_THROW(ingest_stream(in, CorpusFormat::TextJsonl), Error);
}

TEST(Ingest, UnreadableFile) {
    try {
        ingest_elements("/nonexistent/corpus.jsonl", CorpusFormat::TextJsonl);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Input);
    }
}

TEST(Mutate, RowShuffleOnSingleRowIsFixedPoint) {
    const auto e = table_element({{"a", "b", "c"}});
    MutationRule rule{MutationKind::TableRowShuffle, 5, std::nullopt, -1, 0};
    const auto m = mutate_element(e, rule);
    EXPECT_EQ(m.markup, e.markup);
    EXPECT_EQ(m.provenance, Provenance::Mutated);
}

TEST(Mutate, RowShufflePermutesRows) {
    const auto e = table_element({{"1"}, {"2"}, {"3"}, {"4"}, {"5"}});
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto m = mutate_element(e, {MutationKind::TableRowShuffle, s, std::nullopt, -1, 0});
        std::multiset<std::string> before, after;
        for (const auto* r : table_rows(std::get<Table>(e.markup))) before.insert(r->children[0].text);
        for (const auto* r : table_rows(std::get<Table>(m.markup))) after.insert(r->children[0].text);
        EXPECT_EQ(before, after);
    }
}

TEST(Mutate, SymbolSwapStaysInClass) {
    const auto e = make_element(Formula{{"a", "+", "b"}}, "en", Provenance::Procedural);
    bool changed = false;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto m = mutate_element(e, {MutationKind::FormulaSymbolSwap, s, std::nullopt, -1, 0});
        const auto& before = std::get<Formula>(e.markup).tokens;
        const auto& after = std::get<Formula>(m.markup).tokens;
        ASSERT_EQ(before.size(), after.size());
        int diffs = 0;
        for (std::size_t i = 0; i < before.size(); ++i) {
            if (before[i] == after[i]) continue;
            ++diffs;
            // the replacement must sit in the same declared class as the original
            bool same_class = false;
            for (const auto& cls : symbol_swap_classes()) {
                const bool has_a = std::find(cls.begin(), cls.end(), before[i]) != cls.end();
                const bool has_b = std::find(cls.begin(), cls.end(), after[i]) != cls.end();
                same_class = same_class || (has_a && has_b);
            }
            EXPECT_TRUE(same_class) << before[i] << " -> " << after[i];
        }
        EXPECT_EQ(diffs, 1);
        changed = changed || after[1] != "+";
    }
    EXPECT_TRUE(changed);
}

TEST(Mutate, HybridEmbedIntoTableCell) {
    const auto e = table_element({{"a", "b"}, {"c", "d"}});
    MutationRule rule{MutationKind::HybridEmbed, 7, Formula{{"x", "^", "{", "2", "}"}}, -1, 0};
    const auto m = mutate_element(e, rule);
    const auto stream = "<doc>" + serialize_block(m.markup) + "</doc>";
    const auto parsed = parse_ground_truth(stream);
    ASSERT_TRUE(parsed.warnings.empty());
    ASSERT_EQ(parsed.blocks.size(), 1u);
    int spans = 0, plain = 0;
    for (const auto* r : table_rows(std::get<Table>(parsed.blocks[0])))
        for (const auto& td : r->children) {
            if (td.text == "<formula>x ^ { 2 }</formula>")
                ++spans;
            else
                ++plain;
        }
    EXPECT_EQ(spans, 1);
    EXPECT_EQ(plain, 3);
}

TEST(Mutate, InapplicablePairs) {
    const auto f = make_element(Formula{{"a"}}, "en", Provenance::Procedural);
    EXPECT_THROW(mutate_element(f, {MutationKind::TableRowShuffle, 1, std::nullopt, -1, 0}), Error);
    const auto t = table_element({{"a"}});
    EXPECT_THROW(mutate_element(t, {MutationKind::FormulaSymbolSwap, 1, std::nullopt, -1, 0}), Error);
    EXPECT_THROW(mutate_element(t, {MutationKind::HybridEmbed, 1, std::nullopt, -1, 0}), Error);
}

TEST(Mutate, ColMergeKeepsGridWidth) {
    const auto e = table_element({{"a", "b", "c"}, {"d", "e", "f"}});
    const auto m = mutate_element(e, {MutationKind::TableColMerge, 1, std::nullopt, 0, 0});
    Grid g;
    ASSERT_FALSE(expand_grid(std::get<Table>(m.markup), g).has_value());
    EXPECT_EQ(g.cols, 3);
    EXPECT_EQ(g.cells.size(), 4u);
    EXPECT_EQ(g.cells[0].colspan, 2);
    EXPECT_EQ(g.cells[0].node->text, "a b");
}

TEST(Mutate, ParagraphRegroupKeepsWords) {
    const auto e = make_element(Paragraph{{"one two three", "four five six seven"}}, "en", Provenance::Procedural);
    const auto m = mutate_element(e, {MutationKind::ParagraphRegroup, 1, std::nullopt, -1, 10});
    std::string a, b;
    for (const auto& l : std::get<Paragraph>(e.markup).lines) a += l + " ";
    for (const auto& l : std::get<Paragraph>(m.markup).lines) b += l + " ";
    EXPECT_EQ(split_whitespace(a), split_whitespace(b));
    for (const auto& l : std::get<Paragraph>(m.markup).lines) EXPECT_LE(l.size(), 10u);
}

TEST(MutateProperty, RandomMutationsStayValid) {
    std::mt19937_64 gen(3);
    for (int i = 0; i < 2000; ++i) {
        const auto t = generate_element(ElementKind::Table, "en", gen());
        const auto p = generate_element(ElementKind::Paragraph, "fr", gen());
        const auto f = generate_element(ElementKind::Formula, "en", gen());
        const Formula guest = std::get<Formula>(f.markup);
        const std::vector<std::pair<const Element*, MutationRule>> cases = {
            {&t, {MutationKind::TableRowShuffle, gen(), std::nullopt, -1, 0}},
            {&t, {MutationKind::TableColMerge, gen(), std::nullopt, -1, 0}},
            {&t, {MutationKind::HybridEmbed, gen(), guest, -1, 0}},
            {&p, {MutationKind::HybridEmbed, gen(), guest, -1, 0}},
            {&p, {MutationKind::ParagraphRegroup, gen(), std::nullopt, -1, 0}},
            {&f, {MutationKind::FormulaSymbolSwap, gen(), std::nullopt, -1, 0}},
        };
        for (const auto& [e, rule] : cases) {
            const auto m = mutate_element(*e, rule);
            ASSERT_FALSE(validate_markup(m.markup).has_value());
            ASSERT_EQ(m.kind, e->kind);
        }
    }
}

TEST(Repository, BuildIsDeterministicAndWorkerIndependent) {
    RepositoryConfig cfg;
    cfg.seed = 42;
    cfg.per_kind = 30;
    const auto a = build_repository(cfg, 1);
    const auto b = build_repository(cfg, 4);
    EXPECT_EQ(a.content_hash(), b.content_hash());
    EXPECT_GE(a.size(), 4u * 30u);
    for (auto k : {ElementKind::Table, ElementKind::Formula, ElementKind::Paragraph, ElementKind::Figure})
        EXPECT_FALSE(a.indices_of(k).empty());
    EXPECT_TRUE(a.indices_of(ElementKind::Title).empty());
    std::size_t mutated = 0;
    for (const auto& e : a.elements()) mutated += e.provenance == Provenance::Mutated;
    EXPECT_GT(mutated, 0u);
}

TEST(Repository, SaveLoadRoundTrip) {
    testsupport::TempDir dir("repo");
    RepositoryConfig cfg;
    cfg.seed = 1;
    cfg.per_kind = 10;
    cfg.titles = true;
    const auto repo = build_repository(cfg);
    repo.save(dir / "repo.jsonl");
    EXPECT_TRUE(std::filesystem::exists(dir / "repo.index.json"));
    const auto back = Repository::load(dir / "repo.jsonl");
    EXPECT_EQ(back.size(), repo.size());
    EXPECT_EQ(back.content_hash(), repo.content_hash());
    const auto index = json::parse(testsupport::slurp(dir / "repo.index.json"));
    EXPECT_EQ(index.at("content_hash").get<std::string>(), hex64(repo.content_hash()));
}

TEST(Repository, DuplicatesAreDropped) {
    Repository r;
    const auto e = generate_element(ElementKind::Formula, "en", 1);
    EXPECT_TRUE(r.add(e));
    EXPECT_FALSE(r.add(e));
    EXPECT_EQ(r.size(), 1u);
    EXPECT_EQ(r.find(e.id)->id, e.id);
}
