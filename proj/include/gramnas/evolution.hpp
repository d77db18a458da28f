#pragma once

#include <functional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>

#include "gramnas/random.hpp"
#include "gramnas/sampler.hpp"
#include "gramnas/term.hpp"

namespace gramnas {

struct EvolutionConfig {
    int pool = 200;
    double p_mut = 0.5;
    // Half of the crossover events are self-crossovers.
    double p_cross = 0.5;
    double p_tour = 0.2;
    int min_iterations = 10;
    int max_iterations = 50;
    int patience = 5;
    // Incumbents seeded into the initial population.
    int seeds = 10;

    void validate() const;
};

// Depth bound of `s` and every constraint of its grammar.
auto is_valid_term(const Term& t, const Sampler& s) -> bool;

// Replaces one uniformly chosen derivation step by a fresh subtree of the
// same nonterminal. After 10 rejected attempts a fresh sample is returned.
auto mutate(const Term& t, const Sampler& s, Rng& rng) -> Term;

// Swaps sub-terms rooted at a common nonterminal. Returns the parents
// unchanged (and `swapped` false) when no valid swap is found.
auto crossover(const Term& a, const Term& b, const Sampler& s, Rng& rng, bool* swapped = nullptr)
    -> std::pair<Term, Term>;

// Swaps two disjoint sub-terms of one term that share a nonterminal.
auto self_crossover(const Term& t, const Sampler& s, Rng& rng, bool* swapped = nullptr) -> Term;

// Larger is better.
using Fitness = std::function<double(const Term&)>;

struct EvolutionStats {
    int iterations = 0;
    std::size_t fitness_evaluations = 0;
    std::size_t failed_crossovers = 0;
};

// Tournament-selection evolution seeded with `seeds` (the rest of the pool
// is sampled). Returns the fittest term whose canonical string is not in
// `excluded`; falls back to a fresh unexcluded sample when every candidate
// was excluded.
auto optimize_acquisition(const Fitness& fitness, const Sampler& s, std::span<const Term> seeds,
                          const std::unordered_set<std::string>& excluded, const EvolutionConfig& cfg, Rng& rng,
                          EvolutionStats* stats = nullptr) -> Term;

} // namespace gramnas
