#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gramnas/assembly.hpp"
#include "gramnas/grammar.hpp"
#include "gramnas/term.hpp"

namespace gramnas {

// Injective string -> id map, ids assigned in insertion order. Thread-safe.
class LabelDictionary {
public:
    auto id(const std::string& label) -> std::uint32_t;
    // Lookup without insertion.
    [[nodiscard]] auto find(const std::string& label) const -> std::optional<std::uint32_t>;
    [[nodiscard]] auto size() const -> std::size_t;
    [[nodiscard]] auto label(std::uint32_t id) const -> std::string;

private:
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::uint32_t> ids_;
    std::vector<std::string> labels_;
};

// Node-labeled directed graph.
struct LabeledGraph {
    std::vector<std::string> labels;
    std::vector<std::pair<int, int>> edges;
};

inline constexpr const char* kInputMarker = "INPUT";
inline constexpr const char* kOutputMarker = "OUTPUT";

// Edge label as seen by the kernel: `NT:Op` for folded edges.
auto kernel_label(const GraphEdge& e) -> std::string;

// Line graph of prune_zero(g): one node per edge, u -> v when u's head is
// v's tail, plus INPUT/OUTPUT marker nodes (ids 0 and 1) attached to the
// edges leaving the input and entering the output.
auto node_view(const ArchGraph& g) -> LabeledGraph;

// Sparse feature vector: (feature id, count) sorted by id.
struct WLFeatures {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> counts;
    int iterations = 0;
    const LabelDictionary* dictionary = nullptr;
};

// Ids at or above this value are private to one feature vector: labels not
// in the dictionary when featurizing with insert = false.
inline constexpr std::uint32_t kLocalLabelBase = 0x80000000U;

// h = 0 counts the original labels; iteration h relabels every node by its
// previous label followed by the sorted labels of its in-neighbours and of
// its out-neighbours. Feature keys include h, so levels never collide.
// With insert = false the dictionary is left untouched; unseen labels get
// local ids, which keeps self-similarity exact and contributes nothing to
// products with dictionary features.
auto wl_features(const LabeledGraph& g, int iterations, LabelDictionary& dict, bool insert = true) -> WLFeatures;

auto wl_dot(const WLFeatures& a, const WLFeatures& b) -> double;

// Throws Error when the features come from different dictionaries or
// iteration counts.
auto wl_kernel(const WLFeatures& a, const WLFeatures& b, bool normalize = true) -> double;

struct HWLConfig {
    int iterations = 2;
    // Levels 2..levels; the top level always uses the unfolded graph.
    int levels = 2;
    // lambda[i] weights level i + 2. Empty means uniform.
    std::vector<double> lambda;
    bool normalize = true;

    [[nodiscard]] auto weights() const -> std::vector<double>;
    void validate() const;
};

// Per-term, per-level WL features with a shared dictionary. Safe for
// concurrent use.
class Featurizer {
public:
    Featurizer(std::shared_ptr<const Grammar> g, int iterations, int levels);

    struct TermFeatures {
        // Index i holds level i + 2.
        std::vector<std::shared_ptr<const WLFeatures>> levels;
        std::vector<double> self;
    };

    // With remember = false the result is neither cached nor added to the
    // dictionary (used for acquisition candidates).
    auto features(const Term& t, bool remember = true) -> std::shared_ptr<const TermFeatures>;

    // Graph used at `level` (2..levels).
    auto level_graph(const Term& t, int level) const -> ArchGraph;

    [[nodiscard]] auto levels() const noexcept -> int { return levels_; }
    [[nodiscard]] auto iterations() const noexcept -> int { return iterations_; }
    [[nodiscard]] auto grammar() const noexcept -> const Grammar& { return *g_; }
    [[nodiscard]] auto dictionary() noexcept -> LabelDictionary& { return dict_; }

    // Per-level kernel values k_l(a, b), l = 2..levels.
    auto level_kernels(const TermFeatures& a, const TermFeatures& b, bool normalize) const -> std::vector<double>;

private:
    std::shared_ptr<const Grammar> g_;
    int iterations_;
    int levels_;
    LabelDictionary dict_;
    std::mutex mutex_;
    std::unordered_map<std::string, std::shared_ptr<const TermFeatures>> cache_;
};

auto hwl_kernel(const Term& a, const Term& b, const HWLConfig& cfg, Featurizer& f) -> double;

// One matrix per level, K_l[i][j] = k_l(t_i, t_j).
auto level_gram_matrices(std::span<const Term> terms, Featurizer& f, bool normalize) -> std::vector<Eigen::MatrixXd>;

auto gram_matrix(std::span<const Term> terms, const HWLConfig& cfg, Featurizer& f) -> Eigen::MatrixXd;

} // namespace gramnas
