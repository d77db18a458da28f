#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "gramnas/grammar.hpp"
#include "gramnas/kernel.hpp"
#include "gramnas/random.hpp"
#include "gramnas/sampler.hpp"
#include "gramnas/term.hpp"

namespace gramnas::test {

inline auto fixture(const std::string& name) -> std::shared_ptr<const Grammar>
{
    return load_grammar(fixture_directory() / (name + ".cfg"));
}

inline constexpr const char* kOmega = "Linear(Residual(conv,id,conv),Residual(conv,id,conv),fc)";

inline auto residual_grammar() -> std::shared_ptr<const Grammar>
{
    return parse_grammar("S ::= Linear(S, S, S) | Residual(S, S, S) | conv | id | fc\n");
}

// Random acyclic grammar: A_i only refers to A_j with j > i, so every
// nonterminal terminates and the language is finite.
inline auto random_acyclic_grammar(Rng& rng) -> std::string
{
    const std::vector<std::string> terminals{"a", "b", "c", "d"};
    const std::vector<std::pair<std::string, int>> ops{{"Linear2", 2}, {"Linear3", 3}, {"Residual2", 3}};
    int k = 1 + static_cast<int>(rng.below(4));
    std::string text;
    for (int i = 0; i < k; ++i) {
        std::set<std::string> rhs;
        int alternatives = 1 + static_cast<int>(rng.below(3));
        for (int tries = 0; static_cast<int>(rhs.size()) < alternatives && tries < 20; ++tries) {
            if (i == k - 1 || rng.bernoulli(0.4)) {
                rhs.insert(terminals[rng.below(terminals.size())]);
                continue;
            }
            const auto& [op, arity] = ops[rng.below(ops.size())];
            std::string alt = op + "(";
            for (int a = 0; a < arity; ++a) {
                int j = i + 1 + static_cast<int>(rng.below(static_cast<std::size_t>(k - i)));
                std::string arg = j < k ? "A" + std::to_string(j) : terminals[rng.below(terminals.size())];
                alt += (a > 0 ? ", " : "") + arg;
            }
            rhs.insert(alt + ")");
        }
        text += "A" + std::to_string(i) + " ::= ";
        bool first = true;
        for (const auto& r : rhs) {
            text += (first ? "" : " | ") + r;
            first = false;
        }
        text += '\n';
    }
    return text;
}

inline auto random_labeled_graph(Rng& rng, int max_nodes, int alphabet) -> LabeledGraph
{
    LabeledGraph g;
    int n = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(max_nodes)));
    for (int i = 0; i < n; ++i) {
        g.labels.push_back(std::string(1, static_cast<char>('a' + rng.below(static_cast<std::size_t>(alphabet)))));
    }
    for (int u = 0; u < n; ++u) {
        for (int v = 0; v < n; ++v) {
            if (u != v && rng.bernoulli(0.3)) {
                g.edges.emplace_back(u, v);
            }
        }
    }
    return g;
}

// Plain WL refinement on nested strings; the feature of a node at step h is
// the full string of its refined label, so no compression is involved.
inline auto brute_force_wl(const LabeledGraph& g, int iterations) -> std::map<std::string, int>
{
    auto n = g.labels.size();
    std::vector<std::string> label(n);
    for (std::size_t i = 0; i < n; ++i) {
        label[i] = g.labels[i];
    }
    std::map<std::string, int> counts;
    for (int h = 0;; ++h) {
        for (const auto& l : label) {
            ++counts[std::to_string(h) + "|" + l];
        }
        if (h == iterations) {
            break;
        }
        std::vector<std::string> next(n);
        for (std::size_t v = 0; v < n; ++v) {
            std::vector<std::string> in;
            std::vector<std::string> out;
            for (auto [a, b] : g.edges) {
                if (static_cast<std::size_t>(b) == v) {
                    in.push_back(label[static_cast<std::size_t>(a)]);
                }
                if (static_cast<std::size_t>(a) == v) {
                    out.push_back(label[static_cast<std::size_t>(b)]);
                }
            }
            std::sort(in.begin(), in.end());
            std::sort(out.begin(), out.end());
            std::string s = "(" + label[v] + ";in";
            for (const auto& x : in) {
                s += "," + x;
            }
            s += ";out";
            for (const auto& x : out) {
                s += "," + x;
            }
            next[v] = s + ")";
        }
        label = std::move(next);
    }
    return counts;
}

inline auto oracle_dot(const std::map<std::string, int>& a, const std::map<std::string, int>& b) -> long long
{
    long long s = 0;
    for (const auto& [k, v] : a) {
        if (auto it = b.find(k); it != b.end()) {
            s += static_cast<long long>(v) * it->second;
        }
    }
    return s;
}

} // namespace gramnas::test
