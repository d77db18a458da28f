#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gramnas/kernel.hpp"
#include "gramnas/term.hpp"

namespace gramnas {

struct Observation {
    Term term;
    double value = 0.0;
    // Hallucinated (Kriging Believer) value for an evaluation in flight.
    bool pending = false;
};

struct GPHyper {
    // Level weights for levels 2..L, normalized to sum 1 by the optimizer.
    std::vector<double> lambda;
    double signal_var = 1.0;
    double noise_var = 1e-2;
};

inline constexpr double kNoiseFloor = 1e-8;  // sigma_n >= 1e-4
inline constexpr double kDefaultJitter = 1e-6;
inline constexpr double kMaxJitter = 1e-2;

struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
};

// GP over a weighted sum of precomputed per-level kernel matrices with
// standardized targets.
class GaussianProcess {
public:
    GaussianProcess(std::vector<Eigen::MatrixXd> levels, Eigen::VectorXd y, GPHyper hyper,
                    double jitter = kDefaultJitter);

    // Same as above with explicit standardization constants.
    GaussianProcess(std::vector<Eigen::MatrixXd> levels, Eigen::VectorXd y, GPHyper hyper, double mean, double scale,
                    double jitter);

    // `cross[l]` holds k_l(x, x_i) for every training point, `self[l]` k_l(x, x).
    [[nodiscard]] auto predict(const std::vector<Eigen::VectorXd>& cross, std::span<const double> self) const
        -> Prediction;

    [[nodiscard]] auto log_marginal_likelihood() const noexcept -> double { return lml_; }
    [[nodiscard]] auto hyper() const noexcept -> const GPHyper& { return hyper_; }
    [[nodiscard]] auto jitter() const noexcept -> double { return jitter_; }
    [[nodiscard]] auto target_mean() const noexcept -> double { return mean_; }
    [[nodiscard]] auto target_scale() const noexcept -> double { return scale_; }
    [[nodiscard]] auto size() const noexcept -> Eigen::Index { return y_.size(); }
    [[nodiscard]] auto levels() const noexcept -> const std::vector<Eigen::MatrixXd>& { return levels_; }
    [[nodiscard]] auto targets() const noexcept -> const Eigen::VectorXd& { return y_; }

    // sigma_f^2 * sum_l lambda_l K_l, without noise.
    [[nodiscard]] auto covariance() const -> Eigen::MatrixXd;

private:
    void factorize(double jitter);

    std::vector<Eigen::MatrixXd> levels_;
    Eigen::VectorXd y_;
    GPHyper hyper_;
    double mean_ = 0.0;
    double scale_ = 1.0;
    double jitter_ = kDefaultJitter;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd alpha_;
    double lml_ = 0.0;
};

struct FitOptions {
    bool optimize = true;
    // Keep the initial lambda; only the variances are tuned.
    bool fixed_lambda = false;
    int restarts = 5;
    int max_evaluations = 500;
    std::uint64_t seed = 0;
    double jitter = kDefaultJitter;
};

// Log-evidence maximization by multi-start coordinate search in log space.
// The initial configuration is always evaluated first, so the result is
// never worse than `initial`.
auto optimize_hyper(const std::vector<Eigen::MatrixXd>& levels, const Eigen::VectorXd& y, const GPHyper& initial,
                    const FitOptions& opts) -> GPHyper;

// GP over terms with the hierarchical WL kernel.
class TermGP {
public:
    // Requires at least 2 observations. Observations are sorted by canonical
    // string first, so the fit does not depend on their order.
    static auto fit(std::vector<Observation> obs, std::shared_ptr<Featurizer> featurizer, const HWLConfig& cfg0,
                    const FitOptions& opts = {}) -> TermGP;

    [[nodiscard]] auto predict(const Term& t) const -> Prediction;
    [[nodiscard]] auto log_marginal_likelihood() const noexcept -> double { return gp_.log_marginal_likelihood(); }
    [[nodiscard]] auto hyper() const noexcept -> const GPHyper& { return gp_.hyper(); }
    [[nodiscard]] auto gp() const noexcept -> const GaussianProcess& { return gp_; }
    [[nodiscard]] auto observations() const noexcept -> const std::vector<Observation>& { return obs_; }
    [[nodiscard]] auto config() const -> HWLConfig;

    // Adds (t, value) as a pending observation keeping hyperparameters and
    // standardization.
    [[nodiscard]] auto condition(const Term& t, double value) const -> TermGP;

private:
    TermGP(std::vector<Observation> obs, std::vector<std::shared_ptr<const Featurizer::TermFeatures>> feats,
           std::shared_ptr<Featurizer> featurizer, bool normalize, GaussianProcess gp);

    void build_index();

    std::vector<Observation> obs_;
    std::vector<std::shared_ptr<const Featurizer::TermFeatures>> feats_;
    // Per level: feature id -> (training index, count).
    std::vector<std::unordered_map<std::uint32_t, std::vector<std::pair<std::uint32_t, std::uint32_t>>>> index_;
    std::shared_ptr<Featurizer> featurizer_;
    bool normalize_ = true;
    GaussianProcess gp_;
};

} // namespace gramnas
