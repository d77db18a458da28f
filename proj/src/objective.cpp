#include "gramnas/objective.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "gramnas/error.hpp"
#include "gramnas/random.hpp"

namespace gramnas {

auto ObjectiveSpec::default_target() -> std::map<std::string, double>
{
    return {{"conv3x3", 0.4}, {"conv1x1", 0.2}, {"dconv3x3", 0.1}, {"relu", 0.1}, {"batch", 0.1}, {"id", 0.1}};
}

void ObjectiveSpec::validate() const
{
    if (kind == Kind::external) {
        if (command.empty()) {
            throw Error("external objective needs a worker command");
        }
        return;
    }
    double sum = 0.0;
    for (const auto& [label, p] : target) {
        if (!(p >= 0.0)) {
            throw Error("target probability for '" + label + "' is negative");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw Error("target distribution sums to " + std::to_string(sum) + ", expected 1");
    }
    if (target_depth < 1) {
        throw Error("target longest path must be at least 1");
    }
    if (w_mix < 0.0 || w_depth < 0.0 || std::abs(w_mix + w_depth - 1.0) > 1e-9) {
        throw Error("objective weights must be non-negative and sum to 1");
    }
}

auto total_variation(const std::map<std::string, int>& histogram, const std::map<std::string, double>& target)
    -> double
{
    double total = 0.0;
    for (const auto& [label, c] : histogram) {
        total += c;
    }
    double tv = 0.0;
    for (const auto& [label, c] : histogram) {
        auto it = target.find(label);
        double q = it == target.end() ? 0.0 : it->second;
        tv += std::abs((total > 0.0 ? c / total : 0.0) - q);
    }
    for (const auto& [label, q] : target) {
        if (!histogram.contains(label)) {
            tv += q;
        }
    }
    return 0.5 * tv;
}

auto evaluate_synthetic(const ArchGraph& g, const ObjectiveSpec& spec) -> double
{
    if (!is_connected(g)) {
        return 1.0;
    }
    auto s = graph_stats(g);
    double tv = total_variation(s.labels, spec.target);
    double lp = std::min(1.0, std::abs(s.longest_path - spec.target_depth) / static_cast<double>(spec.target_depth));
    return std::clamp(spec.w_mix * tv + spec.w_depth * lp, 0.0, 1.0);
}

auto evaluate_noisy(const ArchGraph& g, const ObjectiveSpec& spec) -> double
{
    Rng rng(stable_hash(g.term, spec.noise_seed));
    return std::clamp(evaluate_synthetic(g, spec) + spec.noise * rng.normal(), 0.0, 1.0);
}

namespace {

class SyntheticEvaluator : public Evaluator {
public:
    explicit SyntheticEvaluator(ObjectiveSpec spec)
        : spec_(std::move(spec))
    {
    }

    auto evaluate(int /*id*/, const Term& /*t*/, const ArchGraph& g) -> double override
    {
        return spec_.kind == ObjectiveSpec::Kind::noisy ? evaluate_noisy(g, spec_) : evaluate_synthetic(g, spec_);
    }

private:
    ObjectiveSpec spec_;
};

} // namespace

auto make_evaluator(const ObjectiveSpec& spec) -> std::unique_ptr<Evaluator>
{
    spec.validate();
    if (spec.kind == ObjectiveSpec::Kind::external) {
        return std::make_unique<ExternalEvaluator>(spec.command, spec.timeout);
    }
    return std::make_unique<SyntheticEvaluator>(spec);
}

auto make_request(int id, const std::string& term, const ArchGraph& g) -> nlohmann::json
{
    return {{"id", id}, {"term", term}, {"graph", to_json(g)}};
}

auto parse_response(const std::string& line, int expected_id) -> double
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw EvaluationError("malformed worker response: " + std::string(e.what()));
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_number_integer()) {
        throw EvaluationError("worker response without an integer id");
    }
    if (j["id"].get<int>() != expected_id) {
        throw EvaluationError("worker answered id " + std::to_string(j["id"].get<int>()) + ", expected "
                              + std::to_string(expected_id));
    }
    if (j.contains("error")) {
        throw EvaluationError("worker error: " + (j["error"].is_string() ? j["error"].get<std::string>() : j["error"].dump()));
    }
    if (!j.contains("value") || !j["value"].is_number()) {
        throw EvaluationError("worker response without a numeric value");
    }
    double v = j["value"].get<double>();
    if (!std::isfinite(v)) {
        throw EvaluationError("worker returned a non-finite value");
    }
    return v;
}

ExternalEvaluator::ExternalEvaluator(std::string command, std::chrono::milliseconds timeout)
    : command_(std::move(command))
    , timeout_(timeout)
{
}

ExternalEvaluator::~ExternalEvaluator()
{
    stop();
}

void ExternalEvaluator::start()
{
    int in[2];
    int out[2];
    if (pipe(in) != 0 || pipe(out) != 0) {
        throw EvaluationError("cannot create worker pipes: " + std::string(std::strerror(errno)));
    }
    pid_t pid = fork();
    if (pid < 0) {
        throw EvaluationError("cannot fork worker: " + std::string(std::strerror(errno)));
    }
    if (pid == 0) {
        // Own process group, so stop() also reaches anything the shell spawns.
        setpgid(0, 0);
        dup2(in[0], STDIN_FILENO);
        dup2(out[1], STDOUT_FILENO);
        close(in[0]);
        close(in[1]);
        close(out[0]);
        close(out[1]);
        execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    // A worker that dies mid-request must surface as a write error, not
    // terminate the engine.
    std::signal(SIGPIPE, SIG_IGN);
    close(in[0]);
    close(out[1]);
    fcntl(in[1], F_SETFD, FD_CLOEXEC);
    fcntl(out[0], F_SETFD, FD_CLOEXEC);
    setpgid(pid, pid);
    pid_ = pid;
    to_child_ = in[1];
    from_child_ = out[0];
    buffer_.clear();
}

void ExternalEvaluator::stop()
{
    if (to_child_ >= 0) {
        close(to_child_);
        to_child_ = -1;
    }
    if (from_child_ >= 0) {
        close(from_child_);
        from_child_ = -1;
    }
    if (pid_ > 0) {
        int status = 0;
        // Give the worker a moment to exit on EOF before killing it.
        bool exited = false;
        for (int i = 0; i < 50 && !exited; ++i) {
            exited = waitpid(pid_, &status, WNOHANG) == pid_;
            if (!exited) {
                usleep(2000);
            }
        }
        kill(-pid_, SIGKILL);
        if (!exited) {
            waitpid(pid_, &status, 0);
        }
        pid_ = -1;
    }
}

auto ExternalEvaluator::read_line() -> std::string
{
    auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
        auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            throw EvaluationError("worker timed out");
        }
        pollfd p{from_child_, POLLIN, 0};
        int r = poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
        if (r < 0 && errno == EINTR) {
            continue;
        }
        if (r < 0) {
            throw EvaluationError("poll on worker failed: " + std::string(std::strerror(errno)));
        }
        if (r == 0) {
            continue;
        }
        char chunk[4096];
        auto n = read(from_child_, chunk, sizeof chunk);
        if (n < 0 && errno == EINTR) {
            continue;
        }
        if (n <= 0) {
            throw EvaluationError("worker exited before responding");
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

auto ExternalEvaluator::evaluate(int id, const Term& t, const ArchGraph& g) -> double
{
    if (pid_ < 0) {
        start();
    }
    std::string reply;
    try {
        auto line = make_request(id, to_string(t), g).dump() + "\n";
        std::size_t sent = 0;
        while (sent < line.size()) {
            auto n = write(to_child_, line.data() + sent, line.size() - sent);
            if (n < 0 && errno == EINTR) {
                continue;
            }
            if (n <= 0) {
                throw EvaluationError("cannot write to worker");
            }
            sent += static_cast<std::size_t>(n);
        }
        reply = read_line();
    } catch (const EvaluationError&) {
        stop();
        throw;
    }
    try {
        return parse_response(reply, id);
    } catch (const EvaluationError&) {
        // An error response leaves the worker usable; anything else does not.
        auto j = nlohmann::json::parse(reply, nullptr, false);
        if (!(j.is_object() && j.contains("error") && j.value("id", -1) == id)) {
            stop();
        }
        throw;
    }
}

} // namespace gramnas
