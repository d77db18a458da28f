#include "gramnas/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "gramnas/error.hpp"
#include "gramnas/random.hpp"

namespace gramnas {

namespace {

auto standardize(const Eigen::VectorXd& y) -> std::pair<double, double>
{
    double mean = y.mean();
    double scale = 1.0;
    if (y.size() > 1) {
        double var = (y.array() - mean).square().sum() / static_cast<double>(y.size() - 1);
        if (var > 1e-24) {
            scale = std::sqrt(var);
        }
    }
    return {mean, scale};
}

} // namespace

GaussianProcess::GaussianProcess(std::vector<Eigen::MatrixXd> levels, Eigen::VectorXd y, GPHyper hyper, double jitter)
    : levels_(std::move(levels))
    , y_(std::move(y))
    , hyper_(std::move(hyper))
{
    std::tie(mean_, scale_) = standardize(y_);
    factorize(jitter);
}

GaussianProcess::GaussianProcess(std::vector<Eigen::MatrixXd> levels, Eigen::VectorXd y, GPHyper hyper, double mean,
                                 double scale, double jitter)
    : levels_(std::move(levels))
    , y_(std::move(y))
    , hyper_(std::move(hyper))
    , mean_(mean)
    , scale_(scale)
{
    factorize(jitter);
}

auto GaussianProcess::covariance() const -> Eigen::MatrixXd
{
    auto n = y_.size();
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t l = 0; l < levels_.size(); ++l) {
        k += hyper_.lambda.at(l) * levels_[l];
    }
    return hyper_.signal_var * k;
}

void GaussianProcess::factorize(double jitter)
{
    if (y_.size() == 0) {
        throw Error("GP needs at least one observation");
    }
    if (hyper_.lambda.size() != levels_.size()) {
        throw Error("GP: one level weight per kernel level required");
    }
    hyper_.noise_var = std::max(hyper_.noise_var, kNoiseFloor);
    Eigen::MatrixXd k = covariance();
    auto n = y_.size();
    for (jitter_ = jitter;; jitter_ *= 10.0) {
        Eigen::MatrixXd a = k;
        a.diagonal().array() += hyper_.noise_var + jitter_;
        llt_.compute(a);
        bool ok = llt_.info() == Eigen::Success;
        if (ok) {
            auto d = llt_.matrixL().toDenseMatrix().diagonal();
            ok = (d.array() > 0.0).all() && d.allFinite();
        }
        if (ok) {
            break;
        }
        if (jitter_ * 10.0 > kMaxJitter * (1.0 + 1e-9)) {
            throw Error("GP covariance is not positive definite even with jitter " + std::to_string(jitter_));
        }
    }
    Eigen::VectorXd z = (y_.array() - mean_) / scale_;
    alpha_ = llt_.solve(z);
    Eigen::MatrixXd l = llt_.matrixL();
    double logdet = l.diagonal().array().log().sum();
    lml_ = -0.5 * z.dot(alpha_) - logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

auto GaussianProcess::predict(const std::vector<Eigen::VectorXd>& cross, std::span<const double> self) const
    -> Prediction
{
    Eigen::VectorXd ks = Eigen::VectorXd::Zero(y_.size());
    double kss = 0.0;
    for (std::size_t l = 0; l < levels_.size(); ++l) {
        ks += hyper_.lambda[l] * cross.at(l);
        kss += hyper_.lambda[l] * self[l];
    }
    ks *= hyper_.signal_var;
    kss *= hyper_.signal_var;
    Eigen::VectorXd v = llt_.matrixL().solve(ks);
    Prediction p;
    p.mean = mean_ + scale_ * ks.dot(alpha_);
    p.variance = std::max(0.0, kss - v.squaredNorm()) * scale_ * scale_;
    return p;
}

auto optimize_hyper(const std::vector<Eigen::MatrixXd>& levels, const Eigen::VectorXd& y, const GPHyper& initial,
                    const FitOptions& opts) -> GPHyper
{
    if (!opts.optimize) {
        return initial;
    }
    const std::size_t nl = opts.fixed_lambda ? 0 : levels.size();
    const std::size_t dim = nl + 2;
    std::vector<double> lo(dim);
    std::vector<double> hi(dim);
    for (std::size_t i = 0; i < nl; ++i) {
        lo[i] = -6.0;
        hi[i] = 2.0;
    }
    lo[nl] = std::log(0.05);
    hi[nl] = std::log(20.0);
    lo[nl + 1] = std::log(kNoiseFloor);
    hi[nl + 1] = 0.0;

    auto decode = [&](const std::vector<double>& theta) {
        GPHyper h = initial;
        if (nl > 0) {
            double sum = 0.0;
            for (std::size_t i = 0; i < nl; ++i) {
                h.lambda[i] = std::exp(theta[i]);
                sum += h.lambda[i];
            }
            for (auto& l : h.lambda) {
                l /= sum;
            }
        }
        h.signal_var = std::exp(theta[nl]);
        h.noise_var = std::exp(theta[nl + 1]);
        return h;
    };
    int evaluations = 0;
    auto score = [&](const GPHyper& h) {
        ++evaluations;
        try {
            double v = GaussianProcess(levels, y, h, opts.jitter).log_marginal_likelihood();
            return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
        } catch (const Error&) {
            return -std::numeric_limits<double>::infinity();
        }
    };

    GPHyper best = initial;
    best.noise_var = std::max(best.noise_var, kNoiseFloor);
    double best_score = score(best);

    std::vector<double> theta0(dim);
    {
        double sum = 0.0;
        for (std::size_t i = 0; i < nl; ++i) {
            sum += initial.lambda[i];
        }
        for (std::size_t i = 0; i < nl; ++i) {
            theta0[i] = std::clamp(std::log(std::max(initial.lambda[i] / sum, 1e-12)), lo[i], hi[i]);
        }
        theta0[nl] = std::clamp(std::log(initial.signal_var), lo[nl], hi[nl]);
        theta0[nl + 1] = std::clamp(std::log(std::max(initial.noise_var, kNoiseFloor)), lo[nl + 1], hi[nl + 1]);
    }

    Rng rng(opts.seed);
    const int starts = opts.restarts + 1;
    const int per_start = std::max(1, (opts.max_evaluations - 1) / starts);
    for (int s = 0; s < starts; ++s) {
        std::vector<double> theta = theta0;
        if (s > 0) {
            for (std::size_t i = 0; i < dim; ++i) {
                theta[i] = lo[i] + (hi[i] - lo[i]) * rng.uniform();
            }
        }
        int budget_end = std::min(evaluations + per_start, opts.max_evaluations);
        GPHyper cur = decode(theta);
        double cur_score = score(cur);
        double step = 1.0;
        while (step >= 1e-2 && evaluations < budget_end) {
            bool improved = false;
            for (std::size_t d = 0; d < dim && evaluations < budget_end; ++d) {
                for (double sign : {1.0, -1.0}) {
                    auto trial = theta;
                    trial[d] = std::clamp(trial[d] + sign * step, lo[d], hi[d]);
                    if (trial[d] == theta[d]) {
                        continue;
                    }
                    auto h = decode(trial);
                    double v = score(h);
                    if (v > cur_score) {
                        theta = std::move(trial);
                        cur = h;
                        cur_score = v;
                        improved = true;
                        break;
                    }
                    if (evaluations >= budget_end) {
                        break;
                    }
                }
            }
            if (!improved) {
                step *= 0.5;
            }
        }
        if (cur_score > best_score) {
            best = cur;
            best_score = cur_score;
        }
    }
    return best;
}

TermGP::TermGP(std::vector<Observation> obs, std::vector<std::shared_ptr<const Featurizer::TermFeatures>> feats,
               std::shared_ptr<Featurizer> featurizer, bool normalize, GaussianProcess gp)
    : obs_(std::move(obs))
    , feats_(std::move(feats))
    , featurizer_(std::move(featurizer))
    , normalize_(normalize)
    , gp_(std::move(gp))
{
    build_index();
}

void TermGP::build_index()
{
    index_.clear();
    if (feats_.empty()) {
        return;
    }
    index_.resize(feats_.front()->levels.size());
    for (std::size_t l = 0; l < index_.size(); ++l) {
        for (std::size_t i = 0; i < feats_.size(); ++i) {
            for (auto [id, c] : feats_[i]->levels[l]->counts) {
                index_[l][id].emplace_back(static_cast<std::uint32_t>(i), c);
            }
        }
    }
}

auto TermGP::fit(std::vector<Observation> obs, std::shared_ptr<Featurizer> featurizer, const HWLConfig& cfg0,
                 const FitOptions& opts) -> TermGP
{
    if (obs.size() < 2) {
        throw Error("GP fit needs at least two observations");
    }
    cfg0.validate();
    if (cfg0.levels != featurizer->levels() || cfg0.iterations != featurizer->iterations()) {
        throw Error("hWL configuration does not match the featurizer");
    }
    std::vector<std::pair<std::string, std::size_t>> keys;
    keys.reserve(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
        keys.emplace_back(to_string(obs[i].term), i);
    }
    std::sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) {
            return a.first < b.first;
        }
        return obs[a.second].value < obs[b.second].value;
    });
    std::vector<Observation> sorted;
    sorted.reserve(obs.size());
    for (const auto& k : keys) {
        sorted.push_back(std::move(obs[k.second]));
    }
    std::vector<Term> terms;
    Eigen::VectorXd y(static_cast<Eigen::Index>(sorted.size()));
    std::vector<std::shared_ptr<const Featurizer::TermFeatures>> feats;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (!std::isfinite(sorted[i].value)) {
            throw Error("observation values must be finite");
        }
        terms.push_back(sorted[i].term);
        y[static_cast<Eigen::Index>(i)] = sorted[i].value;
        feats.push_back(featurizer->features(sorted[i].term));
    }
    auto levels = level_gram_matrices(terms, *featurizer, cfg0.normalize);
    GPHyper initial;
    initial.lambda = cfg0.weights();
    auto hyper = optimize_hyper(levels, y, initial, opts);
    GaussianProcess gp(std::move(levels), std::move(y), std::move(hyper), opts.jitter);
    return TermGP(std::move(sorted), std::move(feats), std::move(featurizer), cfg0.normalize, std::move(gp));
}

auto TermGP::config() const -> HWLConfig
{
    HWLConfig cfg;
    cfg.iterations = featurizer_->iterations();
    cfg.levels = featurizer_->levels();
    cfg.lambda = gp_.hyper().lambda;
    cfg.normalize = normalize_;
    return cfg;
}

auto TermGP::predict(const Term& t) const -> Prediction
{
    auto f = featurizer_->features(t, false);
    auto nl = f->levels.size();
    auto n = static_cast<Eigen::Index>(feats_.size());
    std::vector<Eigen::VectorXd> cross(nl);
    std::vector<double> self(nl);
    for (std::size_t l = 0; l < nl; ++l) {
        // Levels at or above the term's depth share one feature vector.
        if (l > 0 && f->levels[l] == f->levels[l - 1] && index_[l].size() == index_[l - 1].size()) {
            bool same = true;
            for (const auto& tf : feats_) {
                same = same && tf->levels[l] == tf->levels[l - 1];
            }
            if (same) {
                cross[l] = cross[l - 1];
                self[l] = self[l - 1];
                continue;
            }
        }
        Eigen::VectorXd dots = Eigen::VectorXd::Zero(n);
        for (auto [id, c] : f->levels[l]->counts) {
            if (id >= kLocalLabelBase) {
                break;
            }
            auto it = index_[l].find(id);
            if (it == index_[l].end()) {
                continue;
            }
            for (auto [i, c2] : it->second) {
                dots[static_cast<Eigen::Index>(i)] += static_cast<double>(c) * static_cast<double>(c2);
            }
        }
        if (normalize_) {
            for (Eigen::Index i = 0; i < n; ++i) {
                double norm = std::sqrt(f->self[l] * feats_[static_cast<std::size_t>(i)]->self[l]);
                dots[i] = norm > 0.0 ? dots[i] / norm : 0.0;
            }
            self[l] = f->self[l] > 0.0 ? 1.0 : 0.0;
        } else {
            self[l] = f->self[l];
        }
        cross[l] = std::move(dots);
    }
    return gp_.predict(cross, self);
}

auto TermGP::condition(const Term& t, double value) const -> TermGP
{
    auto f = featurizer_->features(t);
    auto n = static_cast<Eigen::Index>(feats_.size());
    auto levels = gp_.levels();
    for (auto& m : levels) {
        m.conservativeResize(n + 1, n + 1);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        auto k = featurizer_->level_kernels(*f, *feats_[static_cast<std::size_t>(i)], normalize_);
        for (std::size_t l = 0; l < levels.size(); ++l) {
            levels[l](n, i) = k[l];
            levels[l](i, n) = k[l];
        }
    }
    auto self = featurizer_->level_kernels(*f, *f, normalize_);
    for (std::size_t l = 0; l < levels.size(); ++l) {
        levels[l](n, n) = self[l];
    }
    Eigen::VectorXd y(n + 1);
    y.head(n) = gp_.targets();
    y[n] = value;
    auto obs = obs_;
    obs.push_back({t, value, true});
    auto feats = feats_;
    feats.push_back(f);
    GaussianProcess gp(std::move(levels), std::move(y), gp_.hyper(), gp_.target_mean(), gp_.target_scale(),
                       gp_.jitter());
    return TermGP(std::move(obs), std::move(feats), featurizer_, normalize_, std::move(gp));
}

} // namespace gramnas
