#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace docforge;

namespace {

LayoutTemplate one_region(const std::string& id, KindSet kinds = {ElementKind::Paragraph}) {
    LayoutTemplate t;
    t.id = id;
    t.regions.push_back({{0, 0, 1, 1}, kinds, 0});
    return t;
}

LayoutTemplate two_stacked(const std::string& id) {
    LayoutTemplate t;
    t.id = id;
    t.regions.push_back({{0.1, 0.1, 0.8, 0.3}, {ElementKind::Paragraph}, 0});
    t.regions.push_back({{0.1, 0.5, 0.8, 0.3}, {ElementKind::Table}, 1});
    return t;
}

constexpr double kTol = 1e-12;

}  // namespace

TEST(Validate, FullPageRegion) {
    EXPECT_TRUE(validate_template(one_region("t")).valid());
}

TEST(Validate, IdenticalBoxesOverlap) {
    LayoutTemplate t;
    t.regions.push_back({{0.1, 0.1, 0.5, 0.5}, {ElementKind::Paragraph}, 0});
    t.regions.push_back({{0.1, 0.1, 0.5, 0.5}, {ElementKind::Paragraph}, 1});
    const auto rep = validate_template(t);
    EXPECT_TRUE(rep.has("overlap"));
}

TEST(Validate, DuplicateOrderNamed) {
    LayoutTemplate t;
    t.regions.push_back({{0.0, 0.0, 0.3, 0.3}, {ElementKind::Paragraph}, 0});
    t.regions.push_back({{0.35, 0.0, 0.3, 0.3}, {ElementKind::Paragraph}, 0});
    t.regions.push_back({{0.7, 0.0, 0.3, 0.3}, {ElementKind::Paragraph}, 1});
    const auto rep = validate_template(t);
    ASSERT_TRUE(rep.has("permutation"));
    bool named = false;
    for (const auto& v : rep.violations)
        if (v.rule == "permutation") {
            named = named || v.message.find("order_index 0") != std::string::npos;
            EXPECT_EQ(v.regions, (std::vector<std::size_t>{0, 1}));
        }
    EXPECT_TRUE(named) << rep.summary();
}

TEST(Validate, OtherRules) {
    auto t = one_region("t");
    t.regions[0].bbox = {0.5, 0.5, 0.6, 0.2};
    EXPECT_TRUE(validate_template(t).has("bounds"));
    t.regions[0].bbox = {0.1, 0.1, 0.01, 0.5};
    EXPECT_TRUE(validate_template(t).has("min-size"));
    t = one_region("t", KindSet{});
    EXPECT_TRUE(validate_template(t).has("kinds"));
    // same column, later order starts above the earlier one
    LayoutTemplate r;
    r.regions.push_back({{0.1, 0.6, 0.8, 0.2}, {ElementKind::Paragraph}, 0});
    r.regions.push_back({{0.1, 0.1, 0.8, 0.2}, {ElementKind::Paragraph}, 1});
    EXPECT_TRUE(validate_template(r).has("reading-order"));
}

TEST(Validate, TouchingRegionsAllowed) {
    LayoutTemplate t;
    t.regions.push_back({{0.0, 0.0, 0.5, 1.0}, {ElementKind::Paragraph}, 0});
    t.regions.push_back({{0.5, 0.0, 0.5, 1.0}, {ElementKind::Paragraph}, 1});
    EXPECT_TRUE(validate_template(t).valid());
}

TEST(Compose, EmptyPartnerScalesIntoTopBand) {
    const auto t = two_stacked("t");
    LayoutTemplate empty;
    empty.id = "empty";
    const auto c = compose_partial_templates(t, empty, ComposeMode::TopBottom, 1);
    ASSERT_EQ(c.regions.size(), t.regions.size());
    const double band = 0.5 - 0.02 / 2;
    for (std::size_t i = 0; i < t.regions.size(); ++i) {
        EXPECT_NEAR(c.regions[i].bbox.x, t.regions[i].bbox.x, kTol);
        EXPECT_NEAR(c.regions[i].bbox.w, t.regions[i].bbox.w, kTol);
        EXPECT_NEAR(c.regions[i].bbox.y, t.regions[i].bbox.y * band, kTol);
        EXPECT_NEAR(c.regions[i].bbox.h, t.regions[i].bbox.h * band, kTol);
        EXPECT_EQ(c.regions[i].order_index, t.regions[i].order_index);
        EXPECT_EQ(c.regions[i].kinds, t.regions[i].kinds);
    }
    EXPECT_EQ(c.provenance, TemplateProvenance::Composed);
    EXPECT_TRUE(validate_template(c).valid());
}

TEST(Compose, LeftRightHalvesMinusGutter) {
    const auto c = compose_partial_templates(one_region("a"), one_region("b"), ComposeMode::LeftRight, 9);
    ASSERT_EQ(c.regions.size(), 2u);
    const double gutter = 0.02;
    EXPECT_NEAR(c.regions[0].bbox.x, 0.0, kTol);
    EXPECT_NEAR(c.regions[0].bbox.w, 0.5 - gutter / 2, kTol);
    EXPECT_NEAR(c.regions[1].bbox.x, 0.5 + gutter / 2, kTol);
    EXPECT_NEAR(c.regions[1].bbox.w, 0.5 - gutter / 2, kTol);
    for (const auto& r : c.regions) {
        EXPECT_NEAR(r.bbox.y, 0.0, kTol);
        EXPECT_NEAR(r.bbox.h, 1.0, kTol);
    }
    EXPECT_EQ(c.regions[0].order_index, 0);
    EXPECT_EQ(c.regions[1].order_index, 1);
    EXPECT_EQ(c.columns, 2);
    EXPECT_TRUE(validate_template(c).valid());
}

TEST(Compose, TooSmallRegionIsAnError) {
    // a 0.02-high region squeezed into a top band of height 0.49 drops below the minimum
    LayoutTemplate a;
    a.id = "thin";
    a.regions.push_back({{0.1, 0.1, 0.8, 0.02}, {ElementKind::Paragraph}, 0});
    ASSERT_TRUE(validate_template(a).valid());
    try {
        compose_partial_templates(a, one_region("b"), ComposeMode::TopBottom, 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Validation);
        EXPECT_NE(std::string(e.what()).find("minimum"), std::string::npos);
    }
}

TEST(Compose, PropertyResultsValidate) {
    const auto lib = builtin_library(40);
    Rng rng(12);
    int ok = 0;
    for (int i = 0; i < 400; ++i) {
        const auto& a = rng.pick(lib.templates());
        const auto& b = rng.pick(lib.templates());
        try {
            const auto c = compose_partial_templates(a, b, rng.bernoulli(0.5) ? ComposeMode::TopBottom : ComposeMode::LeftRight, rng.next(),
                                                     {0.5, 0.02, 0.1});
            ASSERT_TRUE(validate_template(c).valid()) << validate_template(c).summary();
            ASSERT_EQ(c.regions.size(), a.regions.size() + b.regions.size());
            ++ok;
        } catch (const Error&) {
        }
    }
    EXPECT_GT(ok, 200);
}

TEST(Sample, SingleTemplateLibrary) {
    TemplateLibrary lib;
    lib.add(one_region("only"));
    EXPECT_EQ(sample_template(lib, {}, 1).id, "only");
    EXPECT_EQ(sample_template(lib, {}, 12345).id, "only");
}

TEST(Sample, RequiredKindPicksTheOnlyMatch) {
    TemplateLibrary lib;
    for (int i = 0; i < 6; ++i) lib.add(one_region("p" + std::to_string(i)));
    lib.add(two_stacked("with-table"));
    SampleConstraints c;
    c.required_kinds.insert(ElementKind::Table);
    for (std::uint64_t seed = 0; seed < 50; ++seed) EXPECT_EQ(sample_template(lib, c, seed).id, "with-table");
}

TEST(Sample, UnsatisfiableMinRegions) {
    TemplateLibrary lib;
    lib.add(two_stacked("a"));
    lib.add(two_stacked("b"));
    SampleConstraints c;
    c.min_regions = 5;
    try {
        sample_template(lib, c, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("min_regions"), std::string::npos);
    }
}

TEST(Sample, ReproducibleAndCoversMatches) {
    const auto lib = builtin_library();
    std::set<std::string> seen;
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
        const auto& a = sample_template(lib, {}, seed);
        EXPECT_EQ(a.id, sample_template(lib, {}, seed).id);
        seen.insert(a.id);
    }
    EXPECT_GT(seen.size(), 100u);
}

TEST(Library, BuiltinTemplatesAreValid) {
    const auto lib = builtin_library();
    EXPECT_EQ(lib.size(), static_cast<std::size_t>(kBuiltinTemplateCount));
    std::set<std::size_t> region_counts;
    for (const auto& t : lib.templates()) {
        EXPECT_TRUE(validate_template(t).valid()) << t.id;
        region_counts.insert(t.regions.size());
    }
    EXPECT_GT(region_counts.size(), 3u);
}

TEST(Library, ExtendAndPersist) {
    auto lib = builtin_library(20);
    extend_library(lib, 60, 5);
    EXPECT_EQ(lib.size(), 60u);
    testsupport::TempDir dir("lib");
    lib.save(dir / "lib.json");
    const auto back = TemplateLibrary::load_dir(dir.path());
    EXPECT_EQ(back.content_hash(), lib.content_hash());
    EXPECT_EQ(back.templates(), lib.templates());
}

TEST(Library, RejectsInvalidAndDuplicate) {
    TemplateLibrary lib;
    lib.add(one_region("x"));
    EXPECT_THROW(lib.add(one_region("x")), Error);
    auto bad = one_region("y");
    bad.regions[0].order_index = 3;
    EXPECT_THROW(lib.add(bad), Error);
}

TEST(Pixels, AdjacentRegionsShareEdges) {
    const FracBox a{0.0, 0.0, 1.0 / 3, 0.5}, b{1.0 / 3, 0.0, 1.0 / 3, 0.5};
    const auto pa = to_pixels(a, 1240, 1754), pb = to_pixels(b, 1240, 1754);
    EXPECT_EQ(pa.right(), pb.x);
}
