#include "gramnas/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "gramnas/error.hpp"

namespace gramnas {

auto LabelDictionary::id(const std::string& label) -> std::uint32_t
{
    std::lock_guard lock(mutex_);
    auto [it, inserted] = ids_.try_emplace(label, static_cast<std::uint32_t>(labels_.size()));
    if (inserted) {
        labels_.push_back(label);
    }
    return it->second;
}

auto LabelDictionary::find(const std::string& label) const -> std::optional<std::uint32_t>
{
    std::lock_guard lock(mutex_);
    if (auto it = ids_.find(label); it != ids_.end()) {
        return it->second;
    }
    return std::nullopt;
}

auto LabelDictionary::size() const -> std::size_t
{
    std::lock_guard lock(mutex_);
    return labels_.size();
}

auto LabelDictionary::label(std::uint32_t id) const -> std::string
{
    std::lock_guard lock(mutex_);
    return labels_.at(id);
}

auto kernel_label(const GraphEdge& e) -> std::string
{
    auto it = e.attrs.find("nt");
    if (it != e.attrs.end() && e.attrs.contains("folded")) {
        return it->second + ":" + e.label;
    }
    return e.label;
}

auto node_view(const ArchGraph& g) -> LabeledGraph
{
    // Same edge set as prune_zero(g), without copying the graph.
    auto n = g.nodes.size();
    std::vector<std::vector<int>> fwd(n);
    std::vector<std::vector<int>> bwd(n);
    for (const auto& e : g.edges) {
        if (e.label != "zero") {
            fwd[static_cast<std::size_t>(e.tail)].push_back(e.head);
            bwd[static_cast<std::size_t>(e.head)].push_back(e.tail);
        }
    }
    auto mark = [n](const std::vector<std::vector<int>>& adj, int from) {
        std::vector<char> seen(n, 0);
        std::vector<int> stack{from};
        seen[static_cast<std::size_t>(from)] = 1;
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int w : adj[static_cast<std::size_t>(v)]) {
                if (seen[static_cast<std::size_t>(w)] == 0) {
                    seen[static_cast<std::size_t>(w)] = 1;
                    stack.push_back(w);
                }
            }
        }
        return seen;
    };
    auto from_input = mark(fwd, g.input);
    auto to_output = mark(bwd, g.output);

    LabeledGraph v;
    v.labels = {kInputMarker, kOutputMarker};
    std::vector<std::vector<int>> in_edges(n);
    std::vector<std::vector<int>> out_edges(n);
    for (const auto& e : g.edges) {
        auto t = static_cast<std::size_t>(e.tail);
        auto h = static_cast<std::size_t>(e.head);
        if (e.label == "zero" || from_input[t] == 0 || to_output[h] == 0) {
            continue;
        }
        int id = static_cast<int>(v.labels.size());
        v.labels.push_back(kernel_label(e));
        out_edges[t].push_back(id);
        in_edges[h].push_back(id);
        if (e.tail == g.input) {
            v.edges.emplace_back(0, id);
        }
        if (e.head == g.output) {
            v.edges.emplace_back(id, 1);
        }
    }
    for (std::size_t x = 0; x < n; ++x) {
        for (int a : in_edges[x]) {
            for (int b : out_edges[x]) {
                v.edges.emplace_back(a, b);
            }
        }
    }
    return v;
}

namespace {

void append_id(std::string& key, std::uint32_t id)
{
    char bytes[4];
    std::memcpy(bytes, &id, 4);
    key.append(bytes, 4);
}

} // namespace

auto wl_features(const LabeledGraph& g, int iterations, LabelDictionary& dict, bool insert) -> WLFeatures
{
    if (iterations < 0) {
        throw Error("WL iteration count must be non-negative");
    }
    std::unordered_map<std::string, std::uint32_t> local;
    auto lookup = [&](const std::string& key) -> std::uint32_t {
        if (insert) {
            return dict.id(key);
        }
        if (auto id = dict.find(key)) {
            return *id;
        }
        return local.try_emplace(key, kLocalLabelBase + static_cast<std::uint32_t>(local.size())).first->second;
    };
    auto n = g.labels.size();
    // CSR adjacency: in-neighbours and out-neighbours per node.
    std::vector<std::uint32_t> in_start(n + 1, 0);
    std::vector<std::uint32_t> out_start(n + 1, 0);
    for (auto [a, b] : g.edges) {
        ++out_start[static_cast<std::size_t>(a) + 1];
        ++in_start[static_cast<std::size_t>(b) + 1];
    }
    for (std::size_t i = 0; i < n; ++i) {
        in_start[i + 1] += in_start[i];
        out_start[i + 1] += out_start[i];
    }
    std::vector<int> in_adj(g.edges.size());
    std::vector<int> out_adj(g.edges.size());
    {
        auto in_fill = in_start;
        auto out_fill = out_start;
        for (auto [a, b] : g.edges) {
            out_adj[out_fill[static_cast<std::size_t>(a)]++] = b;
            in_adj[in_fill[static_cast<std::size_t>(b)]++] = a;
        }
    }
    std::vector<std::uint32_t> all;
    all.reserve(n * static_cast<std::size_t>(iterations + 1));
    std::vector<std::uint32_t> current(n);
    std::string key;
    for (std::size_t i = 0; i < n; ++i) {
        key.assign("0:");
        key += g.labels[i];
        current[i] = lookup(key);
        all.push_back(current[i]);
    }
    // Refined keys are binary: marker byte, h, previous id, sorted in-ids,
    // separator, sorted out-ids.
    std::vector<std::uint32_t> next(n);
    std::vector<std::uint32_t> scratch;
    for (int h = 1; h <= iterations; ++h) {
        for (std::size_t i = 0; i < n; ++i) {
            key.assign(1, '\x01');
            append_id(key, static_cast<std::uint32_t>(h));
            append_id(key, current[i]);
            for (int side = 0; side < 2; ++side) {
                const auto& start = side == 0 ? in_start : out_start;
                const auto& adj = side == 0 ? in_adj : out_adj;
                scratch.clear();
                for (auto k = start[i]; k < start[i + 1]; ++k) {
                    scratch.push_back(current[static_cast<std::size_t>(adj[k])]);
                }
                std::sort(scratch.begin(), scratch.end());
                append_id(key, static_cast<std::uint32_t>(scratch.size()));
                for (auto s : scratch) {
                    append_id(key, s);
                }
            }
            next[i] = lookup(key);
            all.push_back(next[i]);
        }
        current.swap(next);
    }
    std::sort(all.begin(), all.end());
    WLFeatures f;
    for (auto id : all) {
        if (f.counts.empty() || f.counts.back().first != id) {
            f.counts.emplace_back(id, 0);
        }
        ++f.counts.back().second;
    }
    f.iterations = iterations;
    f.dictionary = &dict;
    return f;
}

auto wl_dot(const WLFeatures& a, const WLFeatures& b) -> double
{
    double sum = 0.0;
    auto i = a.counts.begin();
    auto j = b.counts.begin();
    while (i != a.counts.end() && j != b.counts.end()) {
        if (i->first < j->first) {
            ++i;
        } else if (j->first < i->first) {
            ++j;
        } else {
            sum += static_cast<double>(i->second) * static_cast<double>(j->second);
            ++i;
            ++j;
        }
    }
    return sum;
}

auto wl_kernel(const WLFeatures& a, const WLFeatures& b, bool normalize) -> double
{
    if (a.dictionary != b.dictionary || a.iterations != b.iterations) {
        throw Error("WL features built with different dictionaries or iteration counts");
    }
    double k = wl_dot(a, b);
    if (!normalize) {
        return k;
    }
    double norm = std::sqrt(wl_dot(a, a) * wl_dot(b, b));
    return norm > 0.0 ? k / norm : 0.0;
}

auto HWLConfig::weights() const -> std::vector<double>
{
    auto n = static_cast<std::size_t>(std::max(levels - 1, 0));
    if (lambda.empty()) {
        return std::vector<double>(n, 1.0 / static_cast<double>(n));
    }
    return lambda;
}

void HWLConfig::validate() const
{
    if (iterations < 0) {
        throw Error("hWL: iterations must be non-negative");
    }
    if (levels < 2) {
        throw Error("hWL: need at least two levels");
    }
    if (!lambda.empty()) {
        if (lambda.size() != static_cast<std::size_t>(levels - 1)) {
            throw Error("hWL: expected " + std::to_string(levels - 1) + " level weights");
        }
        bool positive = false;
        for (double l : lambda) {
            if (!(l >= 0.0) || !std::isfinite(l)) {
                throw Error("hWL: level weights must be finite and non-negative");
            }
            positive = positive || l > 0.0;
        }
        if (!positive) {
            throw Error("hWL: at least one level weight must be positive");
        }
    }
}

Featurizer::Featurizer(std::shared_ptr<const Grammar> g, int iterations, int levels)
    : g_(std::move(g))
    , iterations_(iterations)
    , levels_(levels)
{
    if (levels_ < 2) {
        throw Error("featurizer needs at least two levels");
    }
}

auto Featurizer::level_graph(const Term& t, int level) const -> ArchGraph
{
    return assemble(t, *g_, level < levels_ ? level : 0);
}

auto Featurizer::features(const Term& t, bool remember) -> std::shared_ptr<const TermFeatures>
{
    auto key = to_string(t);
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) {
            return it->second;
        }
    }
    auto tf = std::make_shared<TermFeatures>();
    int d = depth(t);
    std::shared_ptr<const WLFeatures> full;
    for (int l = 2; l <= levels_; ++l) {
        bool unfolded = l >= d || l == levels_;
        if (unfolded && full) {
            tf->levels.push_back(full);
        } else {
            auto f = std::make_shared<const WLFeatures>(
                wl_features(node_view(assemble(t, *g_, unfolded ? 0 : l)), iterations_, dict_, remember));
            if (unfolded) {
                full = f;
            }
            tf->levels.push_back(std::move(f));
        }
        tf->self.push_back(wl_dot(*tf->levels.back(), *tf->levels.back()));
    }
    if (!remember) {
        return tf;
    }
    std::lock_guard lock(mutex_);
    return cache_.try_emplace(key, std::move(tf)).first->second;
}

auto Featurizer::level_kernels(const TermFeatures& a, const TermFeatures& b, bool normalize) const
    -> std::vector<double>
{
    std::vector<double> out(a.levels.size());
    for (std::size_t l = 0; l < a.levels.size(); ++l) {
        double k = wl_dot(*a.levels[l], *b.levels[l]);
        if (normalize) {
            double norm = std::sqrt(a.self[l] * b.self[l]);
            k = norm > 0.0 ? k / norm : 0.0;
        }
        out[l] = k;
    }
    return out;
}

auto hwl_kernel(const Term& a, const Term& b, const HWLConfig& cfg, Featurizer& f) -> double
{
    cfg.validate();
    if (cfg.levels != f.levels() || cfg.iterations != f.iterations()) {
        throw Error("hWL configuration does not match the featurizer");
    }
    auto w = cfg.weights();
    auto k = f.level_kernels(*f.features(a), *f.features(b), cfg.normalize);
    return std::inner_product(w.begin(), w.end(), k.begin(), 0.0);
}

auto level_gram_matrices(std::span<const Term> terms, Featurizer& f, bool normalize) -> std::vector<Eigen::MatrixXd>
{
    auto n = static_cast<Eigen::Index>(terms.size());
    std::vector<std::shared_ptr<const Featurizer::TermFeatures>> feats;
    feats.reserve(terms.size());
    for (const auto& t : terms) {
        feats.push_back(f.features(t));
    }
    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(f.levels() - 1), Eigen::MatrixXd::Zero(n, n));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            auto k = f.level_kernels(*feats[static_cast<std::size_t>(i)], *feats[static_cast<std::size_t>(j)], normalize);
            for (std::size_t l = 0; l < k.size(); ++l) {
                out[l](i, j) = k[l];
                out[l](j, i) = k[l];
            }
        }
    }
    return out;
}

auto gram_matrix(std::span<const Term> terms, const HWLConfig& cfg, Featurizer& f) -> Eigen::MatrixXd
{
    cfg.validate();
    auto levels = level_gram_matrices(terms, f, cfg.normalize);
    auto w = cfg.weights();
    auto n = static_cast<Eigen::Index>(terms.size());
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t l = 0; l < levels.size(); ++l) {
        k += w[l] * levels[l];
    }
    return k;
}

} // namespace gramnas
