#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "gramnas/evolution.hpp"
#include "gramnas/objective.hpp"
#include "gramnas/surrogate.hpp"

namespace gramnas {

// EI for minimization; max(0, best - mean) when variance is 0.
auto expected_improvement(double mean, double variance, double best) -> double;

// EI of `t` under `m` against the incumbent value `best`.
auto acquisition(const TermGP& m, const Term& t, double best) -> double;

// Greedy batch: each pick maximizes EI, then is added to the model as a
// pending observation at its posterior mean. Picks avoid `excluded` and
// each other.
auto kriging_believer_batch(const TermGP& m, int b, double best, const Sampler& s, std::span<const Term> seeds,
                            std::unordered_set<std::string> excluded, const EvolutionConfig& cfg, Rng& rng)
    -> std::vector<Term>;

enum class Strategy { banat, rs, re };
enum class SurrogateKind { hwl, wl };

auto parse_strategy(const std::string& s) -> Strategy;
auto parse_surrogate(const std::string& s) -> SurrogateKind;
auto to_string(Strategy s) -> std::string;
auto to_string(SurrogateKind s) -> std::string;

struct RunRecord {
    // Dispatch index; records are stored in completion order.
    int iteration = 0;
    std::string term;
    double value = 0.0;
    double incumbent = 0.0;
    std::optional<double> wall_time;
    // Surrogate state used to pick the term; null for random picks.
    nlohmann::json hyper;
    std::string error;
};

struct RunHistory {
    std::vector<RunRecord> records;

    [[nodiscard]] auto incumbent() const -> double;
};

auto record_to_json(const RunRecord& r) -> nlohmann::json;
auto record_from_json(const nlohmann::json& j) -> RunRecord;
void write_jsonl(std::ostream& out, const RunHistory& h);
auto read_jsonl(std::istream& in) -> RunHistory;
auto read_jsonl(const std::filesystem::path& path) -> RunHistory;

struct SearchConfig {
    std::shared_ptr<const Grammar> grammar;
    int max_depth = 20;
    int budget = 100;
    int initial = 10;
    int workers = 8;
    int batch = 1;
    std::uint64_t seed = 0;
    Strategy strategy = Strategy::banat;
    SurrogateKind surrogate = SurrogateKind::hwl;
    EvolutionConfig evolution;
    ObjectiveSpec objective;
    double penalty = 1.0;
    int wl_iterations = 2;
    // hWL levels; 0 picks the deepest initial-design term.
    int levels = 0;
    int fit_evaluations = 500;
    int re_population = 30;
    int re_sample = 10;
    bool timing = false;
    // Records of an earlier run to continue from.
    std::vector<RunRecord> resume;
    // Called once per completed evaluation, in completion order.
    std::function<void(const RunRecord&)> on_record;
    // Evaluator factory; defaults to make_evaluator(objective).
    std::function<std::unique_ptr<Evaluator>()> evaluator;

    void validate() const;
};

auto run_search(const SearchConfig& cfg) -> RunHistory;

} // namespace gramnas
