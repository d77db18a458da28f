#include "gramnas/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include "gramnas/error.hpp"
#include "gramnas/stats.hpp"

namespace gramnas {

auto expected_improvement(double mean, double variance, double best) -> double
{
    if (!(variance > 0.0)) {
        return std::max(0.0, best - mean);
    }
    double sigma = std::sqrt(variance);
    double z = (best - mean) / sigma;
    return std::max(0.0, (best - mean) * normal_cdf(z) + sigma * normal_pdf(z));
}

auto acquisition(const TermGP& m, const Term& t, double best) -> double
{
    auto p = m.predict(t);
    return expected_improvement(p.mean, p.variance, best);
}

auto kriging_believer_batch(const TermGP& m, int b, double best, const Sampler& s, std::span<const Term> seeds,
                            std::unordered_set<std::string> excluded, const EvolutionConfig& cfg, Rng& rng)
    -> std::vector<Term>
{
    if (b < 1) {
        throw Error("batch size must be at least 1");
    }
    std::vector<Term> picks;
    std::optional<TermGP> believed;
    for (int i = 0; i < b; ++i) {
        const TermGP& cur = believed ? *believed : m;
        auto pick = optimize_acquisition([&](const Term& t) { return acquisition(cur, t, best); }, s, seeds, excluded,
                                         cfg, rng);
        excluded.insert(to_string(pick));
        if (i + 1 < b) {
            auto hallucinated = cur.condition(pick, cur.predict(pick).mean);
            believed.emplace(std::move(hallucinated));
        }
        picks.push_back(std::move(pick));
    }
    return picks;
}

auto parse_strategy(const std::string& s) -> Strategy
{
    if (s == "banat") {
        return Strategy::banat;
    }
    if (s == "rs") {
        return Strategy::rs;
    }
    if (s == "re") {
        return Strategy::re;
    }
    throw Error("unknown strategy '" + s + "' (expected banat, rs or re)");
}

auto parse_surrogate(const std::string& s) -> SurrogateKind
{
    if (s == "hwl") {
        return SurrogateKind::hwl;
    }
    if (s == "wl") {
        return SurrogateKind::wl;
    }
    throw Error("unknown surrogate '" + s + "' (expected hwl or wl)");
}

auto to_string(Strategy s) -> std::string
{
    switch (s) {
    case Strategy::banat: return "banat";
    case Strategy::rs: return "rs";
    case Strategy::re: return "re";
    }
    return "?";
}

auto to_string(SurrogateKind s) -> std::string
{
    return s == SurrogateKind::hwl ? "hwl" : "wl";
}

auto RunHistory::incumbent() const -> double
{
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : records) {
        best = std::min(best, r.value);
    }
    return best;
}

auto record_to_json(const RunRecord& r) -> nlohmann::json
{
    nlohmann::json j{{"iteration", r.iteration}, {"term", r.term},          {"value", r.value},
                     {"incumbent", r.incumbent}, {"hyper", r.hyper}};
    if (r.wall_time) {
        j["wall_time"] = *r.wall_time;
    }
    if (!r.error.empty()) {
        j["error"] = r.error;
    }
    return j;
}

auto record_from_json(const nlohmann::json& j) -> RunRecord
{
    RunRecord r;
    r.iteration = j.at("iteration").get<int>();
    r.term = j.at("term").get<std::string>();
    r.value = j.at("value").get<double>();
    r.incumbent = j.at("incumbent").get<double>();
    r.hyper = j.value("hyper", nlohmann::json(nullptr));
    if (j.contains("wall_time")) {
        r.wall_time = j["wall_time"].get<double>();
    }
    r.error = j.value("error", "");
    return r;
}

void write_jsonl(std::ostream& out, const RunHistory& h)
{
    for (const auto& r : h.records) {
        out << record_to_json(r).dump() << '\n';
    }
}

auto read_jsonl(std::istream& in) -> RunHistory
{
    RunHistory h;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            h.records.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error("run log line " + std::to_string(number) + ": " + e.what());
        }
    }
    return h;
}

auto read_jsonl(const std::filesystem::path& path) -> RunHistory
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open run log " + path.string());
    }
    return read_jsonl(in);
}

void SearchConfig::validate() const
{
    if (!grammar) {
        throw Error("search needs a grammar");
    }
    if (budget < 1 || initial < 0 || initial > budget) {
        throw Error("search needs 0 <= initial design <= budget and budget >= 1");
    }
    if (workers < 1 || batch < 1) {
        throw Error("workers and batch size must be at least 1");
    }
    if (re_population < 1 || re_sample < 1) {
        throw Error("regularized evolution needs positive population and sample sizes");
    }
    evolution.validate();
    if (!evaluator) {
        objective.validate();
    }
}

namespace {

struct Job {
    int iteration;
    Term term;
};

struct Done {
    int iteration;
    Term term;
    double value;
    std::string error;
};

// Worker threads evaluate jobs; the calling thread coordinates.
class WorkerPool {
public:
    WorkerPool(int n, const Grammar& g, const std::function<std::unique_ptr<Evaluator>()>& factory)
    {
        for (int i = 0; i < n; ++i) {
            threads_.emplace_back([this, &g, factory] { loop(g, factory); });
        }
    }

    ~WorkerPool()
    {
        {
            std::lock_guard lock(mutex_);
            stop_ = true;
        }
        jobs_cv_.notify_all();
        for (auto& t : threads_) {
            t.join();
        }
    }

    WorkerPool(const WorkerPool&) = delete;
    auto operator=(const WorkerPool&) -> WorkerPool& = delete;

    void submit(Job job)
    {
        {
            std::lock_guard lock(mutex_);
            jobs_.push_back(std::move(job));
        }
        jobs_cv_.notify_one();
    }

    auto wait() -> Done
    {
        std::unique_lock lock(mutex_);
        done_cv_.wait(lock, [this] { return !done_.empty(); });
        Done d = std::move(done_.front());
        done_.pop_front();
        return d;
    }

private:
    void loop(const Grammar& g, const std::function<std::unique_ptr<Evaluator>()>& factory)
    {
        std::unique_ptr<Evaluator> ev;
        std::string setup_error;
        try {
            ev = factory();
        } catch (const std::exception& e) {
            setup_error = e.what();
        }
        for (;;) {
            Job job;
            {
                std::unique_lock lock(mutex_);
                jobs_cv_.wait(lock, [this] { return stop_ || !jobs_.empty(); });
                if (stop_ && jobs_.empty()) {
                    return;
                }
                job = std::move(jobs_.front());
                jobs_.pop_front();
            }
            Done d{job.iteration, std::move(job.term), 0.0, setup_error};
            if (ev) {
                try {
                    auto graph = assemble(d.term, g);
                    d.value = ev->evaluate(job.iteration, d.term, graph);
                    if (!std::isfinite(d.value)) {
                        d.error = "objective returned a non-finite value";
                    }
                } catch (const std::exception& e) {
                    d.error = e.what();
                }
            }
            {
                std::lock_guard lock(mutex_);
                done_.push_back(std::move(d));
            }
            done_cv_.notify_one();
        }
    }

    std::mutex mutex_;
    std::condition_variable jobs_cv_;
    std::condition_variable done_cv_;
    std::deque<Job> jobs_;
    std::deque<Done> done_;
    bool stop_ = false;
    std::vector<std::thread> threads_;
};

auto hyper_json(const TermGP& m) -> nlohmann::json
{
    return {{"lambda", m.hyper().lambda},
            {"signal_var", m.hyper().signal_var},
            {"noise_var", m.hyper().noise_var},
            {"lml", m.log_marginal_likelihood()},
            {"levels", m.config().levels}};
}

class Coordinator {
public:
    explicit Coordinator(const SearchConfig& cfg)
        : cfg_(cfg)
        , sampler_(*cfg.grammar, cfg.max_depth)
    {
        for (const auto& r : cfg.resume) {
            history_.records.push_back(r);
            auto t = parse_term(r.term, *cfg.grammar);
            evaluated_.insert(to_string(t));
            completed_.push_back({r.iteration, std::move(t), r.value});
            next_iteration_ = std::max(next_iteration_, r.iteration + 1);
        }
    }

    auto run() -> RunHistory
    {
        auto factory = cfg_.evaluator ? cfg_.evaluator : [spec = cfg_.objective] { return make_evaluator(spec); };
        WorkerPool pool(cfg_.workers, *cfg_.grammar, factory);
        auto start = std::chrono::steady_clock::now();
        std::size_t in_flight = 0;
        auto total = [&] { return static_cast<int>(history_.records.size() + in_flight); };
        for (;;) {
            while (static_cast<int>(in_flight) < cfg_.workers && total() < cfg_.budget) {
                if (queued_.empty()) {
                    pick(cfg_.budget - total());
                }
                auto [iteration, term, hyper] = std::move(queued_.front());
                queued_.pop_front();
                pending_.emplace(iteration, Pending{term, hyper});
                pool.submit({iteration, std::move(term)});
                ++in_flight;
            }
            if (in_flight == 0) {
                break;
            }
            Done d = pool.wait();
            --in_flight;
            auto p = pending_.extract(d.iteration);
            RunRecord r;
            r.iteration = d.iteration;
            r.term = to_string(d.term);
            r.value = d.error.empty() ? d.value : cfg_.penalty;
            r.error = d.error;
            r.incumbent = std::min(history_.incumbent(), r.value);
            r.hyper = p.empty() ? nlohmann::json(nullptr) : p.mapped().hyper;
            if (cfg_.timing) {
                r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            }
            history_.records.push_back(r);
            completed_.push_back({d.iteration, std::move(d.term), r.value});
            if (cfg_.on_record) {
                cfg_.on_record(r);
            }
        }
        return std::move(history_);
    }

private:
    struct Pending {
        Term term;
        nlohmann::json hyper;
    };
    struct Completed {
        int iteration;
        Term term;
        double value;
    };
    struct Queued {
        int iteration;
        Term term;
        nlohmann::json hyper;
    };

    auto excluded() const -> std::unordered_set<std::string>
    {
        auto out = evaluated_;
        for (const auto& [i, p] : pending_) {
            out.insert(to_string(p.term));
        }
        for (const auto& q : queued_) {
            out.insert(to_string(q.term));
        }
        return out;
    }

    void enqueue(Term t, nlohmann::json hyper)
    {
        evaluated_.insert(to_string(t));
        queued_.push_back({next_iteration_++, std::move(t), std::move(hyper)});
    }

    auto random_unique(Rng& rng) -> Term
    {
        auto ex = excluded();
        std::optional<Term> last;
        for (int tries = 0; tries < 1000; ++tries) {
            auto t = sampler_.sample(rng);
            if (!ex.contains(to_string(t))) {
                return t;
            }
            last = std::move(t);
        }
        return std::move(*last);
    }

    void pick(int remaining)
    {
        int iteration = next_iteration_;
        Rng rng(Rng::mix(cfg_.seed ^ Rng::mix(static_cast<std::uint64_t>(iteration))));
        bool random_phase = iteration < cfg_.initial || cfg_.strategy == Strategy::rs;
        if (random_phase || (cfg_.strategy == Strategy::banat && completed_.size() < 2) || completed_.empty()) {
            enqueue(random_unique(rng), nullptr);
            return;
        }
        if (cfg_.strategy == Strategy::re) {
            enqueue(regularized_evolution(rng), nullptr);
            return;
        }
        bayesian(std::min(cfg_.batch, remaining), iteration, rng);
    }

    auto regularized_evolution(Rng& rng) -> Term
    {
        auto n = completed_.size();
        auto window = std::min<std::size_t>(n, static_cast<std::size_t>(cfg_.re_population));
        const Completed* parent = nullptr;
        for (int i = 0; i < cfg_.re_sample; ++i) {
            const auto& c = completed_[n - window + rng.below(window)];
            if (parent == nullptr || c.value < parent->value) {
                parent = &c;
            }
        }
        auto ex = excluded();
        for (int tries = 0; tries < 100; ++tries) {
            auto child = mutate(parent->term, sampler_, rng);
            if (!ex.contains(to_string(child))) {
                return child;
            }
        }
        return random_unique(rng);
    }

    auto featurizer() -> std::shared_ptr<Featurizer>
    {
        if (!featurizer_) {
            int levels = cfg_.levels;
            if (levels <= 0) {
                levels = 2;
                for (const auto& c : completed_) {
                    if (c.iteration < std::max(cfg_.initial, 2)) {
                        levels = std::max(levels, depth(c.term));
                    }
                }
            }
            featurizer_ = std::make_shared<Featurizer>(cfg_.grammar, cfg_.wl_iterations, levels);
        }
        return featurizer_;
    }

    void bayesian(int batch, int iteration, Rng& rng)
    {
        auto f = featurizer();
        std::vector<Observation> obs;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : completed_) {
            obs.push_back({c.term, c.value, false});
            best = std::min(best, c.value);
        }
        HWLConfig hcfg;
        hcfg.iterations = cfg_.wl_iterations;
        hcfg.levels = f->levels();
        FitOptions fit;
        fit.seed = Rng::mix(cfg_.seed + static_cast<std::uint64_t>(iteration));
        fit.max_evaluations = cfg_.fit_evaluations;
        if (cfg_.surrogate == SurrogateKind::wl) {
            hcfg.lambda.assign(static_cast<std::size_t>(hcfg.levels - 1), 0.0);
            hcfg.lambda.back() = 1.0;
            fit.fixed_lambda = true;
        }
        auto model = TermGP::fit(std::move(obs), f, hcfg, fit);
        auto hyper = hyper_json(model);
        for (const auto& [i, p] : pending_) {
            model = model.condition(p.term, model.predict(p.term).mean);
        }
        std::vector<const Completed*> ranked;
        for (const auto& c : completed_) {
            ranked.push_back(&c);
        }
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const Completed* a, const Completed* b) { return a->value < b->value; });
        std::vector<Term> seeds;
        for (std::size_t i = 0; i < ranked.size() && static_cast<int>(i) < cfg_.evolution.seeds; ++i) {
            seeds.push_back(ranked[i]->term);
        }
        auto picks = kriging_believer_batch(model, batch, best, sampler_, seeds, excluded(), cfg_.evolution, rng);
        for (auto& t : picks) {
            enqueue(std::move(t), hyper);
        }
    }

    const SearchConfig& cfg_;
    Sampler sampler_;
    RunHistory history_;
    std::unordered_set<std::string> evaluated_;
    std::vector<Completed> completed_;
    std::map<int, Pending> pending_;
    std::deque<Queued> queued_;
    int next_iteration_ = 0;
    std::shared_ptr<Featurizer> featurizer_;
};

} // namespace

auto run_search(const SearchConfig& cfg) -> RunHistory
{
    cfg.validate();
    return Coordinator(cfg).run();
}

} // namespace gramnas
