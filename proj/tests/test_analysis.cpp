#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gramnas/analysis.hpp"
#include "gramnas/error.hpp"
#include "support.hpp"

using namespace gramnas;

namespace {

auto history(const std::vector<std::pair<std::string, double>>& rows) -> RunHistory
{
    RunHistory h;
    double inc = 1e300;
    for (const auto& [term, value] : rows) {
        inc = std::min(inc, value);
        h.records.push_back({static_cast<int>(h.records.size()), term, value, inc, std::nullopt, nullptr, ""});
    }
    return h;
}

auto read_lines(const std::filesystem::path& p) -> std::vector<std::string>
{
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) {
        out.push_back(line);
    }
    return out;
}

} // namespace

TEST(Analysis, CohortsByValue)
{
    auto g = parse_grammar("S ::= a | b | c\n");
    std::vector<std::pair<std::string, double>> rows;
    // a gets the 5 best values, c the 5 worst.
    for (int i = 0; i < 15; ++i) {
        rows.emplace_back(i < 5 ? "a" : i < 10 ? "b" : "c", 0.1 * i);
    }
    std::vector<RunHistory> logs{history(rows)};
    auto r = analyze(logs, *g);
    EXPECT_EQ(r.record_count, 15U);
    EXPECT_EQ(r.cohort_size, 2U);
    ASSERT_EQ(r.productions.size(), 3U);
    EXPECT_EQ(r.productions[0].rule, "S ::= a");
    EXPECT_EQ(r.productions[0].top, 2);
    EXPECT_EQ(r.productions[0].middle, 3);
    EXPECT_EQ(r.productions[0].worst, 0);
    EXPECT_EQ(r.productions[1].top + r.productions[1].worst, 0);
    EXPECT_EQ(r.productions[2].worst, 2);
    EXPECT_NEAR(r.productions[0].mean_value, 0.2, 1e-12);
    EXPECT_NEAR(r.productions[2].mean_value, 1.2, 1e-12);
    for (const auto& p : r.productions) {
        EXPECT_EQ(p.records, 5);
    }
}

TEST(Analysis, TiesKeepEvaluationOrderAndCohortsAreDisjoint)
{
    auto g = parse_grammar("S ::= a | b\n");
    std::vector<std::pair<std::string, double>> rows(10, {"a", 0.5});
    rows[0].first = "b";
    std::vector<RunHistory> logs{history(rows)};
    auto r = analyze(logs, *g);
    EXPECT_EQ(r.cohort_size, 1U);
    // Record 0 takes the top slot, the worst slot goes to record 1.
    EXPECT_EQ(r.productions[1].top, 1);
    EXPECT_EQ(r.productions[0].worst, 1);
    EXPECT_EQ(r.productions[0].middle, 8);
    // Degenerate range: every value lands in the first unit-width bin.
    EXPECT_EQ(r.density[0].count, 10);
    EXPECT_DOUBLE_EQ(r.density[0].hi - r.density[0].lo, 1.0);
}

TEST(Analysis, LogsAreConcatenated)
{
    auto g = test::fixture("nb201_hierarchical");
    Sampler s(*g, 20);
    Rng rng(1);
    std::vector<RunHistory> logs(2);
    for (int i = 0; i < 23; ++i) {
        auto t = s.sample(rng);
        logs[static_cast<std::size_t>(i % 2)].records.push_back(
            {i, to_string(t), rng.uniform(), 0.0, std::nullopt, nullptr, ""});
    }
    auto r = analyze(logs, *g);
    EXPECT_EQ(r.record_count, 23U);
    EXPECT_EQ(r.cohort_size, 3U);
    EXPECT_EQ(r.depth_vs_value.size(), 23U);
    int density_total = 0;
    double mass = 0.0;
    for (const auto& d : r.density) {
        density_total += d.count;
        mass += d.density * (d.hi - d.lo);
    }
    EXPECT_EQ(density_total, 23);
    EXPECT_NEAR(mass, 1.0, 1e-12);
    // Every record uses exactly one production of the start symbol.
    ProductionUsage start;
    for (auto i : g->productions_of(g->start())) {
        start.records += r.productions[i].records;
        start.top += r.productions[i].top;
        start.worst += r.productions[i].worst;
        start.middle += r.productions[i].middle;
    }
    EXPECT_EQ(start.records, 23);
    EXPECT_EQ(start.top, 3);
    EXPECT_EQ(start.worst, 3);
    EXPECT_EQ(start.middle, 17);
    int top = 0;
    for (const auto& p : r.productions) {
        EXPECT_EQ(p.top + p.worst + p.middle, p.records);
        top += p.top;
    }
    EXPECT_GE(top, 3);
}

TEST(Analysis, BindingProductionsReported)
{
    auto g = test::fixture("nb201_cell");
    Sampler s(*g, 20);
    Rng rng(2);
    std::vector<RunHistory> logs(1);
    for (int i = 0; i < 10; ++i) {
        logs[0].records.push_back({i, to_string(s.sample(rng)), 0.1 * i, 0.0, std::nullopt, nullptr, ""});
    }
    auto r = analyze(logs, *g);
    std::size_t root = g->productions().size();
    ASSERT_GT(r.productions.size(), root);
    int binding_uses = 0;
    for (std::size_t i = root; i < r.productions.size(); ++i) {
        binding_uses += r.productions[i].records;
    }
    EXPECT_GT(binding_uses, 0);
}

TEST(Analysis, EmptyLogsRejected)
{
    auto g = parse_grammar("S ::= a\n");
    std::vector<RunHistory> logs(2);
    EXPECT_THROW(analyze(logs, *g), Error);
}

TEST(Analysis, WritesCsvFiles)
{
    auto g = parse_grammar("S ::= a | b | c\n");
    std::vector<RunHistory> logs{history({{"a", 0.1}, {"b", 0.2}, {"c", 0.3}})};
    auto r = analyze(logs, *g, 4);
    auto dir = std::filesystem::temp_directory_path() / "gramnas_analysis_test";
    std::filesystem::remove_all(dir);
    write_report(r, dir);
    auto density = read_lines(dir / "density.csv");
    ASSERT_EQ(density.size(), 5U);
    EXPECT_EQ(density[0], "bin_lo,bin_hi,count,density");
    auto cohorts = read_lines(dir / "production_cohorts.csv");
    ASSERT_EQ(cohorts.size(), 4U);
    EXPECT_EQ(cohorts[0], "production,rule,worst,top,middle,worst_frac,top_frac,middle_frac");
    EXPECT_EQ(cohorts[1].rfind("\"", 0), 0U);
    EXPECT_NE(cohorts[1].find("\"S ::= a\",0,1,0,0,1,0"), std::string::npos) << cohorts[1];
    EXPECT_EQ(read_lines(dir / "production_marginals.csv")[0], "production,rule,records,mean_value");
    auto dv = read_lines(dir / "depth_vs_value.csv");
    ASSERT_EQ(dv.size(), 4U);
    EXPECT_EQ(dv[0], "record,depth,value");
    EXPECT_EQ(dv[1].substr(0, 4), "0,1,");
    std::filesystem::remove_all(dir);
}
