#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <string>

#include "json.hpp"

#include "gramnas/assembly.hpp"
#include "gramnas/term.hpp"

namespace gramnas {

struct ObjectiveSpec {
    enum class Kind { synthetic, noisy, external };

    Kind kind = Kind::synthetic;
    // Target label distribution p* and longest path L*.
    std::map<std::string, double> target = default_target();
    int target_depth = 60;
    double w_mix = 0.5;
    double w_depth = 0.5;
    double noise = 0.05;
    std::uint64_t noise_seed = 0;
    // Shell command of an external worker.
    std::string command;
    std::chrono::milliseconds timeout{3600 * 1000};

    static auto default_target() -> std::map<std::string, double>;
    void validate() const;
};

auto total_variation(const std::map<std::string, int>& histogram, const std::map<std::string, double>& target)
    -> double;

// w_mix * TV(p_G, p*) + w_depth * min(1, |LP - L*| / L*) on prune_zero(G);
// 1 for disconnected graphs.
auto evaluate_synthetic(const ArchGraph& g, const ObjectiveSpec& spec) -> double;

// Synthetic value plus noise seeded by the term string, clamped to [0, 1].
auto evaluate_noisy(const ArchGraph& g, const ObjectiveSpec& spec) -> double;

// One per worker slot. Throws EvaluationError on failure.
class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual auto evaluate(int id, const Term& t, const ArchGraph& g) -> double = 0;
};

auto make_evaluator(const ObjectiveSpec& spec) -> std::unique_ptr<Evaluator>;

// Wire protocol: one JSON object per line on the worker's stdin/stdout.
auto make_request(int id, const std::string& term, const ArchGraph& g) -> nlohmann::json;
// Value of a response line; throws EvaluationError for error responses,
// malformed lines or mismatched ids.
auto parse_response(const std::string& line, int expected_id) -> double;

// Long-lived worker subprocess (`/bin/sh -c command`), restarted after a
// failure.
class ExternalEvaluator : public Evaluator {
public:
    ExternalEvaluator(std::string command, std::chrono::milliseconds timeout);
    ~ExternalEvaluator() override;
    ExternalEvaluator(const ExternalEvaluator&) = delete;
    auto operator=(const ExternalEvaluator&) -> ExternalEvaluator& = delete;

    auto evaluate(int id, const Term& t, const ArchGraph& g) -> double override;

private:
    void start();
    void stop();
    auto read_line() -> std::string;

    std::string command_;
    std::chrono::milliseconds timeout_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
};

} // namespace gramnas
