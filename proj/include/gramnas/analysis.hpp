#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gramnas/grammar.hpp"
#include "gramnas/search.hpp"

namespace gramnas {

struct ProductionUsage {
    // `grammar:index`, with the production rendered as `LHS ::= rhs`.
    std::string key;
    std::string rule;
    int worst = 0;
    int top = 0;
    int middle = 0;
    // Mean objective over records whose term uses the production.
    double mean_value = 0.0;
    int records = 0;
};

struct DensityBin {
    double lo = 0.0;
    double hi = 0.0;
    int count = 0;
    double density = 0.0;
};

struct AnalysisReport {
    std::vector<ProductionUsage> productions;
    std::vector<DensityBin> density;
    // (evaluation order, depth, value)
    std::vector<std::tuple<int, int, double>> depth_vs_value;
    std::size_t record_count = 0;
    std::size_t cohort_size = 0;
};

// Records of all logs are concatenated in order. Top and worst cohorts hold
// ceil(10%) records each, ties broken by evaluation order; a record is in at
// most one cohort (top first).
auto analyze(std::span<const RunHistory> logs, const Grammar& g, int bins = 20) -> AnalysisReport;

auto production_rule(const Grammar& g, std::size_t index) -> std::string;

// density.csv, production_cohorts.csv, production_marginals.csv,
// depth_vs_value.csv.
void write_report(const AnalysisReport& r, const std::filesystem::path& dir);

} // namespace gramnas
