#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "gramnas/error.hpp"
#include "gramnas/kernel.hpp"
#include "gramnas/sampler.hpp"
#include "support.hpp"

using namespace gramnas;

namespace {

auto sorted_counts(const WLFeatures& f) -> std::vector<std::uint32_t>
{
    std::vector<std::uint32_t> out;
    for (auto [id, c] : f.counts) {
        out.push_back(c);
    }
    std::sort(out.begin(), out.end());
    return out;
}

auto sorted_counts(const std::map<std::string, int>& f) -> std::vector<std::uint32_t>
{
    std::vector<std::uint32_t> out;
    for (const auto& [k, c] : f) {
        out.push_back(static_cast<std::uint32_t>(c));
    }
    std::sort(out.begin(), out.end());
    return out;
}

auto path_graph(std::vector<std::string> labels) -> LabeledGraph
{
    LabeledGraph g;
    g.labels = std::move(labels);
    for (int i = 0; i + 1 < static_cast<int>(g.labels.size()); ++i) {
        g.edges.emplace_back(i, i + 1);
    }
    return g;
}

auto samples(const char* fixture, int n, std::uint64_t seed) -> std::vector<Term>
{
    auto g = test::fixture(fixture);
    Sampler s(*g, 20);
    Rng rng(seed);
    std::vector<Term> out;
    for (int i = 0; i < n; ++i) {
        out.push_back(s.sample(rng));
    }
    return out;
}

} // namespace

TEST(NodeView, SingleEdge)
{
    auto g = parse_grammar("S ::= conv");
    auto v = node_view(assemble(parse_term("conv", *g), *g));
    EXPECT_EQ(v.labels, (std::vector<std::string>{kInputMarker, kOutputMarker, "conv"}));
    EXPECT_EQ(v.edges, (std::vector<std::pair<int, int>>{{0, 2}, {2, 1}}));
}

TEST(NodeView, FoldedChain)
{
    auto g = test::residual_grammar();
    auto v = node_view(assemble(parse_term(test::kOmega, *g), *g, 2));
    ASSERT_EQ(v.labels.size(), 5U);
    EXPECT_EQ(v.labels[2], "S:Residual");
    EXPECT_EQ(v.labels[4], "fc");
    EXPECT_EQ(v.edges.size(), 4U);
}

TEST(NodeView, AllZeroCellHasOnlyMarkers)
{
    auto g = parse_grammar("CL ::= Cell(OP, OP, OP, OP, OP, OP)\nOP ::= zero | id\n");
    auto v = node_view(assemble(parse_term("Cell(zero,zero,zero,zero,zero,zero)", *g), *g));
    EXPECT_EQ(v.labels.size(), 2U);
    EXPECT_TRUE(v.edges.empty());
}

TEST(WL, DepthZeroCountsLabels)
{
    LabelDictionary dict;
    auto f = wl_features(path_graph({"INPUT", "conv", "OUTPUT"}), 0, dict);
    EXPECT_EQ(f.counts.size(), 3U);
    for (auto [id, c] : f.counts) {
        EXPECT_EQ(c, 1U);
    }
}

TEST(WL, IsomorphismInvariance)
{
    LabeledGraph a{{"x", "y", "z", "y"}, {{0, 1}, {1, 2}, {0, 3}, {3, 2}}};
    LabeledGraph b{{"y", "z", "y", "x"}, {{3, 0}, {0, 1}, {3, 2}, {2, 1}}};
    LabelDictionary dict;
    EXPECT_EQ(wl_features(a, 2, dict).counts, wl_features(b, 2, dict).counts);
}

TEST(WL, PathVersusStarMatchesOracle)
{
    auto path = path_graph({"a", "b", "b", "a"});
    LabeledGraph star{{"a", "b", "b", "b"}, {{0, 1}, {0, 2}, {0, 3}}};
    LabelDictionary dict;
    auto fp = wl_features(path, 1, dict);
    auto fs = wl_features(star, 1, dict);
    auto op = test::brute_force_wl(path, 1);
    auto os = test::brute_force_wl(star, 1);
    EXPECT_EQ(wl_dot(fp, fs), static_cast<double>(test::oracle_dot(op, os)));
    // Only the h = 0 labels are shared: 2 * 1 (a) + 2 * 3 (b).
    EXPECT_EQ(wl_dot(fp, fs), 8.0);
}

TEST(WL, KernelBasics)
{
    LabelDictionary dict;
    auto a = wl_features(path_graph({"a", "b"}), 2, dict);
    auto b = wl_features(path_graph({"c", "d"}), 2, dict);
    EXPECT_DOUBLE_EQ(wl_kernel(a, a), 1.0);
    EXPECT_DOUBLE_EQ(wl_kernel(a, b), 0.0);
    LabelDictionary other;
    auto c = wl_features(path_graph({"a", "b"}), 2, other);
    EXPECT_THROW(wl_kernel(a, c), Error);
    auto d = wl_features(path_graph({"a", "b"}), 1, dict);
    EXPECT_THROW(wl_kernel(a, d), Error);
}

TEST(WL, LookupModeLeavesDictionaryUntouched)
{
    LabelDictionary dict;
    auto a = wl_features(path_graph({"a", "b", "c"}), 2, dict);
    auto size = dict.size();
    auto b = wl_features(path_graph({"a", "b", "d", "e"}), 2, dict, false);
    EXPECT_EQ(dict.size(), size);
    auto b_ins = wl_features(path_graph({"a", "b", "d", "e"}), 2, dict);
    EXPECT_EQ(wl_dot(a, b), wl_dot(a, b_ins));
    EXPECT_EQ(wl_dot(b, b), wl_dot(b_ins, b_ins));
}

TEST(WL, DictionaryIsInjectiveAndOrdered)
{
    LabelDictionary d;
    EXPECT_EQ(d.id("x"), 0U);
    EXPECT_EQ(d.id("y"), 1U);
    EXPECT_EQ(d.id("x"), 0U);
    EXPECT_EQ(d.label(1), "y");
    EXPECT_FALSE(d.find("z").has_value());
}

// Exhaustive-style oracle check over random small graphs.
TEST(WL, RandomGraphsMatchOracle)
{
    Rng rng(1234);
    for (int i = 0; i < 200; ++i) {
        for (int h = 0; h <= 2; ++h) {
            auto a = test::random_labeled_graph(rng, 6, 3);
            auto b = test::random_labeled_graph(rng, 6, 3);
            LabelDictionary dict;
            auto fa = wl_features(a, h, dict);
            auto fb = wl_features(b, h, dict);
            auto oa = test::brute_force_wl(a, h);
            auto ob = test::brute_force_wl(b, h);
            ASSERT_EQ(sorted_counts(fa), sorted_counts(oa));
            ASSERT_EQ(sorted_counts(fb), sorted_counts(ob));
            ASSERT_EQ(wl_dot(fa, fb), static_cast<double>(test::oracle_dot(oa, ob)));
            ASSERT_EQ(wl_dot(fa, fa), static_cast<double>(test::oracle_dot(oa, oa)));
        }
    }
}

TEST(HWL, ConfigValidation)
{
    HWLConfig c;
    c.levels = 3;
    EXPECT_EQ(c.weights(), (std::vector<double>{0.5, 0.5}));
    c.lambda = {0.0, 0.0};
    EXPECT_THROW(c.validate(), Error);
    c.lambda = {-1.0, 2.0};
    EXPECT_THROW(c.validate(), Error);
    c.lambda = {1.0};
    EXPECT_THROW(c.validate(), Error);
}

TEST(HWL, SelfKernelIsLambdaSum)
{
    auto g = test::fixture("nb201_hierarchical");
    auto terms = samples("nb201_hierarchical", 3, 5);
    Featurizer f(g, 2, 7);
    HWLConfig cfg;
    cfg.levels = 7;
    cfg.lambda = {0.1, 0.2, 0.3, 0.1, 0.2, 0.4};
    for (const auto& t : terms) {
        EXPECT_NEAR(hwl_kernel(t, t, cfg, f), 1.3, 1e-12);
    }
}

TEST(HWL, TopLevelOnlyEqualsPlainWL)
{
    auto g = test::fixture("nb201_hierarchical");
    auto terms = samples("nb201_hierarchical", 6, 9);
    Featurizer f(g, 2, 7);
    HWLConfig cfg;
    cfg.levels = 7;
    cfg.lambda = {0, 0, 0, 0, 0, 1};
    LabelDictionary dict;
    for (const auto& a : terms) {
        for (const auto& b : terms) {
            auto fa = wl_features(node_view(assemble(a, *g)), 2, dict);
            auto fb = wl_features(node_view(assemble(b, *g)), 2, dict);
            EXPECT_NEAR(hwl_kernel(a, b, cfg, f), wl_kernel(fa, fb), 1e-12);
        }
    }
}

TEST(HWL, EqualsSumOfIndependentLevelKernels)
{
    auto g = test::fixture("nb201_hierarchical");
    auto terms = samples("nb201_hierarchical", 4, 13);
    Featurizer f(g, 2, 7);
    HWLConfig cfg;
    cfg.levels = 7;
    LabelDictionary dict;
    for (const auto& a : terms) {
        for (const auto& b : terms) {
            double expected = 0.0;
            for (int l = 2; l <= 7; ++l) {
                auto ga = l >= depth(a) ? assemble(a, *g) : assemble(fold(a, l), *g);
                auto gb = l >= depth(b) ? assemble(b, *g) : assemble(fold(b, l), *g);
                expected += wl_kernel(wl_features(node_view(ga), 2, dict), wl_features(node_view(gb), 2, dict)) / 6.0;
            }
            EXPECT_NEAR(hwl_kernel(a, b, cfg, f), expected, 1e-12);
        }
    }
}

TEST(HWL, HierarchySensitivity)
{
    // Two terms equal up to level 2 but with different leaves below share
    // their level-2 contribution exactly.
    auto g = test::residual_grammar();
    auto a = parse_term("Linear(Residual(conv,id,conv),Residual(conv,id,conv),fc)", *g);
    auto b = parse_term("Linear(Residual(id,id,id),Residual(conv,conv,fc),fc)", *g);
    Featurizer f(g, 2, 3);
    auto k = f.level_kernels(*f.features(a), *f.features(b), true);
    ASSERT_EQ(k.size(), 2U);
    EXPECT_DOUBLE_EQ(k[0], 1.0);
    EXPECT_LT(k[1], 1.0);
}

TEST(HWL, GramMatrixBasics)
{
    auto g = test::fixture("nb201_hierarchical");
    auto terms = samples("nb201_hierarchical", 5, 21);
    terms.push_back(terms[1]);
    Featurizer f(g, 2, 7);
    HWLConfig cfg;
    cfg.levels = 7;
    auto k = gram_matrix(terms, cfg, f);
    EXPECT_TRUE(k.isApprox(k.transpose(), 0.0));
    EXPECT_TRUE(k.row(1).isApprox(k.row(5), 0.0));
    auto one = gram_matrix(std::span<const Term>(terms.data(), 1), cfg, f);
    EXPECT_NEAR(one(0, 0), 1.0, 1e-12);
}

TEST(HWL, GramMatricesArePositiveSemidefinite)
{
    auto g = test::fixture("nb201_hierarchical");
    Sampler s(*g, 20);
    Rng rng(77);
    auto f = std::make_shared<Featurizer>(g, 2, 7);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<Term> terms;
        for (int i = 0; i < 20; ++i) {
            terms.push_back(s.sample(rng));
        }
        HWLConfig cfg;
        cfg.levels = 7;
        cfg.lambda.resize(6);
        for (auto& l : cfg.lambda) {
            l = rng.uniform();
        }
        auto k = gram_matrix(terms, cfg, *f);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
    }
}

TEST(HWL, SymmetricOnSampledPairs)
{
    auto g = test::fixture("darts");
    auto terms = samples("darts", 8, 3);
    Featurizer f(g, 2, 3);
    HWLConfig cfg;
    cfg.levels = 3;
    for (const auto& a : terms) {
        for (const auto& b : terms) {
            EXPECT_EQ(hwl_kernel(a, b, cfg, f), hwl_kernel(b, a, cfg, f));
        }
    }
}
