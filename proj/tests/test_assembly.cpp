#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "gramnas/assembly.hpp"
#include "gramnas/error.hpp"
#include "gramnas/sampler.hpp"
#include "support.hpp"

using namespace gramnas;

namespace {

const char* kCellGrammar = "CL ::= Cell(OP, OP, OP, OP, OP, OP)\nOP ::= zero | id | conv1x1 | conv3x3 | avg_pool\n";

auto labels_of(const ArchGraph& g) -> std::multiset<std::string>
{
    std::multiset<std::string> out;
    for (const auto& e : g.edges) {
        out.insert(e.label);
    }
    return out;
}

// Every input->output path, as label sequences, by plain DFS.
void all_paths(const ArchGraph& g, int v, std::vector<std::string>& path, std::vector<std::vector<std::string>>& out)
{
    if (v == g.output) {
        out.push_back(path);
        return;
    }
    for (const auto& e : g.edges) {
        if (e.tail == v) {
            path.push_back(e.label);
            all_paths(g, e.head, path, out);
            path.pop_back();
        }
    }
}

// Set of downsample counts reachable at each node.
auto downsample_counts(const ArchGraph& g) -> std::set<int>
{
    std::vector<std::set<int>> at(static_cast<std::size_t>(g.node_count()));
    at[static_cast<std::size_t>(g.input)].insert(0);
    for (int v : topological_order(g)) {
        for (const auto& e : g.edges) {
            if (e.tail != v) {
                continue;
            }
            for (int c : at[static_cast<std::size_t>(v)]) {
                at[static_cast<std::size_t>(e.head)].insert(c + (e.attrs.contains("downsample") ? 1 : 0));
            }
        }
    }
    return at[static_cast<std::size_t>(g.output)];
}

void expect_single_source_sink(const ArchGraph& g)
{
    std::vector<int> in(static_cast<std::size_t>(g.node_count()), 0);
    std::vector<int> out(static_cast<std::size_t>(g.node_count()), 0);
    for (const auto& e : g.edges) {
        ++out[static_cast<std::size_t>(e.tail)];
        ++in[static_cast<std::size_t>(e.head)];
    }
    EXPECT_EQ(in[static_cast<std::size_t>(g.input)], 0);
    EXPECT_EQ(out[static_cast<std::size_t>(g.output)], 0);
    for (int v = 0; v < g.node_count(); ++v) {
        if (v != g.input) {
            EXPECT_GT(in[static_cast<std::size_t>(v)], 0);
        }
        if (v != g.output) {
            EXPECT_GT(out[static_cast<std::size_t>(v)], 0);
        }
    }
    EXPECT_EQ(topological_order(g).size(), static_cast<std::size_t>(g.node_count()));
}

} // namespace

TEST(Assembly, OmegaHasSevenEdges)
{
    auto g = test::residual_grammar();
    auto a = assemble(parse_term(test::kOmega, *g), *g);
    EXPECT_EQ(a.edges.size(), 7U);
    EXPECT_EQ(a.node_count(), 6);
    EXPECT_EQ(labels_of(a), (std::multiset<std::string>{"conv", "conv", "conv", "conv", "id", "id", "fc"}));
    expect_single_source_sink(a);
    EXPECT_TRUE(is_connected(a));

    std::vector<std::string> path;
    std::vector<std::vector<std::string>> paths;
    all_paths(a, a.input, path, paths);
    std::size_t longest = 0;
    for (const auto& p : paths) {
        longest = std::max(longest, p.size());
    }
    EXPECT_EQ(paths.size(), 4U);
    EXPECT_EQ(longest, 5U);
    EXPECT_EQ(graph_stats(a).longest_path, 5);
}

TEST(Assembly, SinglePrimitive)
{
    auto g = parse_grammar("S ::= conv");
    auto a = assemble(parse_term("conv", *g), *g);
    auto s = graph_stats(a);
    EXPECT_EQ(s.nodes, 2);
    EXPECT_EQ(s.edges, 1);
    EXPECT_EQ(s.longest_path, 1);
    EXPECT_EQ(s.labels, (std::map<std::string, int>{{"conv", 1}}));
    auto j = to_json(a);
    EXPECT_EQ(j["nodes"].size(), 2U);
    EXPECT_EQ(j["edges"].size(), 1U);
}

TEST(Assembly, FoldedOmegaIsAChain)
{
    auto g = test::residual_grammar();
    auto t = parse_term(test::kOmega, *g);
    for (const auto& a : {assemble(t, *g, 2), assemble(fold(t, 2), *g)}) {
        ASSERT_EQ(a.node_count(), 4);
        std::vector<std::string> path;
        std::vector<std::vector<std::string>> paths;
        all_paths(a, a.input, path, paths);
        ASSERT_EQ(paths.size(), 1U);
        EXPECT_EQ(paths[0], (std::vector<std::string>{"Residual", "Residual", "fc"}));
        EXPECT_EQ(a.edges[0].attrs.at("folded"), "true");
        EXPECT_EQ(a.edges[0].attrs.at("nt"), "S");
    }
    auto direct = assemble(t, *g, 2);
    auto via_fold = assemble(fold(t, 2), *g);
    EXPECT_EQ(direct.nodes, via_fold.nodes);
    EXPECT_EQ(direct.edges, via_fold.edges);
    EXPECT_EQ(direct.term, test::kOmega);
    EXPECT_EQ(via_fold.term, "Linear(Residual,Residual,fc)");
}

TEST(Assembly, MergeNodesAnnotated)
{
    auto g = test::residual_grammar();
    auto a = assemble(parse_term("Residual(conv,id,conv)", *g), *g);
    std::vector<int> in(static_cast<std::size_t>(a.node_count()), 0);
    for (const auto& e : a.edges) {
        ++in[static_cast<std::size_t>(e.head)];
    }
    for (int v = 0; v < a.node_count(); ++v) {
        EXPECT_EQ(in[static_cast<std::size_t>(v)] > 1, a.nodes[static_cast<std::size_t>(v)].contains("merge"));
    }
    EXPECT_EQ(a.nodes[static_cast<std::size_t>(a.output)].at("merge"), "sum");
}

TEST(Assembly, MissingTemplateRejected)
{
    EXPECT_THROW(parse_grammar("S ::= Foo(conv, id)"), GrammarError);
}

TEST(Prune, NoZeroEdgesIsIdentity)
{
    auto g = test::residual_grammar();
    auto a = assemble(parse_term(test::kOmega, *g), *g);
    EXPECT_EQ(prune_zero(a), a);
}

TEST(Prune, AllZeroCellDisconnects)
{
    auto g = parse_grammar(kCellGrammar);
    auto a = assemble(parse_term("Cell(zero,zero,zero,zero,zero,zero)", *g), *g);
    auto p = prune_zero(a);
    EXPECT_EQ(p.node_count(), 2);
    EXPECT_TRUE(p.edges.empty());
    EXPECT_FALSE(is_connected(a));
    auto s = graph_stats(a);
    EXPECT_EQ(s.longest_path, 0);
    EXPECT_EQ(s.edges, 0);
}

TEST(Prune, CellWithTwoZeros)
{
    // Choices 1,2,1,5,4,3 of (zero, id, conv1x1, conv3x3, avg_pool) on the
    // cell edges 0-1, 0-2, 1-2, 0-3, 1-3, 2-3. Node 1 loses its only input,
    // so 1-3 dies with it; 0-2, 0-3 and 2-3 remain.
    auto g = parse_grammar(kCellGrammar);
    auto a = assemble(parse_term("Cell(zero,id,zero,avg_pool,conv3x3,conv1x1)", *g), *g);
    auto p = prune_zero(a);
    EXPECT_EQ(p.edges.size(), 3U);
    EXPECT_EQ(labels_of(p), (std::multiset<std::string>{"id", "avg_pool", "conv1x1"}));
    EXPECT_EQ(p.node_count(), 3);
    EXPECT_TRUE(is_connected(a));
    EXPECT_EQ(graph_stats(a).longest_path, 2);
}

TEST(Export, JsonRoundTripAndSchema)
{
    auto g = test::fixture("nb201_hierarchical");
    Sampler s(*g, 20);
    Rng rng(12);
    for (int i = 0; i < 20; ++i) {
        auto t = s.sample(rng);
        auto a = assemble(t, *g);
        auto j = to_json(a);
        EXPECT_EQ(j["schema"], "archgraph/1");
        EXPECT_EQ(j["meta"]["term_string"], to_string(t));
        EXPECT_EQ(j["meta"]["downsample_count"], 2);
        EXPECT_EQ(j["edges"].size(), a.edges.size());
        EXPECT_EQ(graph_from_json(nlohmann::json::parse(j.dump())), a);
    }
}

TEST(Export, MalformedJsonRejected)
{
    EXPECT_THROW(graph_from_json(nlohmann::json{{"schema", "other"}}), Error);
    EXPECT_THROW(graph_from_json(nlohmann::json::parse(R"({"schema":"archgraph/1","nodes":[{"id":0,"attrs":{}}],
        "edges":[{"tail":0,"head":5,"label":"x","attrs":{}}],"input":0,"output":0})")),
                 Error);
}

TEST(Export, DotHasSevenEdges)
{
    auto g = test::residual_grammar();
    auto dot = to_dot(assemble(parse_term(test::kOmega, *g), *g));
    std::size_t arrows = 0;
    for (auto p = dot.find("->"); p != std::string::npos; p = dot.find("->", p + 1)) {
        ++arrows;
    }
    EXPECT_EQ(arrows, 7U);
    EXPECT_NE(dot.find("label=\"fc\""), std::string::npos);
}

TEST(Topology, CycleDetected)
{
    ArchGraph g;
    g.nodes.resize(3);
    g.edges = {{0, 2, "a", {}}, {2, 0, "b", {}}, {2, 1, "c", {}}};
    EXPECT_THROW(topological_order(g), Error);
}

// Properties over samples of every fixture.

class AssemblyProperties : public ::testing::TestWithParam<const char*> {};

TEST_P(AssemblyProperties, DagWithUniqueEndpointsAndFoldMonotone)
{
    auto g = test::fixture(GetParam());
    int max_depth = std::string(GetParam()) == "residual" ? 5 : 20;
    Sampler s(*g, max_depth);
    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
        auto t = s.sample(rng);
        auto a = assemble(t, *g);
        expect_single_source_sink(a);
        auto p = prune_zero(a);
        EXPECT_EQ(prune_zero(p), p);
        for (int l = 1; l <= depth(t); ++l) {
            EXPECT_LE(assemble(t, *g, l).edges.size(), a.edges.size());
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Fixtures, AssemblyProperties,
                         ::testing::Values("nb201_hierarchical", "nb201_cell", "nb201_macro", "darts", "hier_cell",
                                           "mobilenet", "residual"));

TEST(Assembly, DownsamplingConservation)
{
    auto g = test::fixture("nb201_hierarchical");
    Sampler s(*g, 20);
    Rng rng(41);
    for (int i = 0; i < 300; ++i) {
        auto a = prune_zero(assemble(s.sample(rng), *g));
        EXPECT_EQ(downsample_counts(a), std::set<int>{2});
    }
}
