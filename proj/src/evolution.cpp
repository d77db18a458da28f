#include "gramnas/evolution.hpp"

#include <algorithm>
#include <optional>
#include <set>
#include <unordered_map>

#include "gramnas/error.hpp"

namespace gramnas {

void EvolutionConfig::validate() const
{
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(p_mut) || !prob(p_cross) || !prob(p_tour)) {
        throw Error("evolution probabilities must lie in [0, 1]");
    }
    if (pool < 1 || min_iterations < 0 || max_iterations < 0 || min_iterations > max_iterations || patience < 1
        || seeds < 0) {
        throw Error("invalid evolution configuration");
    }
}

auto is_valid_term(const Term& t, const Sampler& s) -> bool
{
    return depth(t) <= s.max_depth() && satisfies_constraints(t, s.grammar());
}

namespace {

constexpr int kAttempts = 10;

auto subtree_at(const Term& t, const Site& site) -> Node
{
    Node n = node_at(t, site);
    n.chain.erase(n.chain.begin(), n.chain.begin() + static_cast<std::ptrdiff_t>(site.step));
    return n;
}

auto with_binding(const Term& t, int index, Term inner) -> Term
{
    Term out = t;
    out.bindings[static_cast<std::size_t>(index)].term = std::make_shared<const Term>(std::move(inner));
    return out;
}

auto main_site(const Site& s) -> Site
{
    return Site{-1, s.path, s.step};
}

void collect_placeholders(const Node& n, std::set<std::string>& out)
{
    if (n.kind == Node::Kind::placeholder) {
        out.insert(n.name);
    }
    for (const auto& c : n.children) {
        collect_placeholders(c, out);
    }
}

// Placeholders moved in from `donor` take the donor's binding.
void adopt_bindings(Term& t, const Term& donor, const Grammar& g)
{
    prune_bindings(t);
    std::set<std::string> used;
    collect_placeholders(t.root, used);
    for (const auto& name : used) {
        if (t.binding(name) == nullptr) {
            for (const auto& b : donor.bindings) {
                if (b.placeholder == name) {
                    t.bindings.push_back(b);
                }
            }
        }
    }
    const auto& declared = g.bindings();
    auto rank = [&](const TermBinding& b) {
        auto it = std::find_if(declared.begin(), declared.end(),
                               [&](const Binding& d) { return d.placeholder == b.placeholder; });
        return it - declared.begin();
    };
    std::stable_sort(t.bindings.begin(), t.bindings.end(),
                     [&](const TermBinding& x, const TermBinding& y) { return rank(x) < rank(y); });
}

auto mutate_at(const Term& t, const Site& site, const Sampler& s, Rng& rng) -> std::optional<Term>
{
    if (site.binding >= 0) {
        const auto& b = t.bindings.at(static_cast<std::size_t>(site.binding));
        const Sampler* inner = s.binding_sampler(b.placeholder);
        if (inner == nullptr) {
            return std::nullopt;
        }
        auto edited = mutate_at(*b.term, main_site(site), *inner, rng);
        if (!edited) {
            return std::nullopt;
        }
        return with_binding(t, site.binding, std::move(*edited));
    }
    const auto& g = s.grammar();
    auto nt = g.find(site_nonterminal(t, site));
    if (!nt) {
        return std::nullopt;
    }
    int budget = s.max_depth() - site_level(t, site) + 1;
    if (budget < s.min_depth(*nt)) {
        return std::nullopt;
    }
    auto bindings = t.bindings;
    Node fresh;
    try {
        fresh = s.sample_subtree(*nt, budget, bindings, rng);
    } catch (const Unsatisfiable&) {
        return std::nullopt;
    }
    Term out = t;
    out.bindings = std::move(bindings);
    out = replace(out, site, fresh);
    prune_bindings(out);
    return out;
}

auto site_grammar(const Term& t, const Site& site, const Sampler& s) -> const Sampler*
{
    if (site.binding < 0) {
        return &s;
    }
    return s.binding_sampler(t.bindings.at(static_cast<std::size_t>(site.binding)).placeholder);
}

auto cross_at(const Term& a, const Site& sa, const Term& b, const Site& sb, const Sampler& s)
    -> std::optional<std::pair<Term, Term>>
{
    if (sa.binding >= 0) {
        const auto& ba = a.bindings.at(static_cast<std::size_t>(sa.binding));
        const auto& bb = b.bindings.at(static_cast<std::size_t>(sb.binding));
        const Sampler* inner = s.binding_sampler(ba.placeholder);
        if (inner == nullptr) {
            return std::nullopt;
        }
        auto r = cross_at(*ba.term, main_site(sa), *bb.term, main_site(sb), *inner);
        if (!r) {
            return std::nullopt;
        }
        return std::pair{with_binding(a, sa.binding, std::move(r->first)),
                         with_binding(b, sb.binding, std::move(r->second))};
    }
    Node from_a = subtree_at(a, sa);
    Node from_b = subtree_at(b, sb);
    Term na = replace(a, sa, from_b);
    Term nb = replace(b, sb, from_a);
    adopt_bindings(na, b, s.grammar());
    adopt_bindings(nb, a, s.grammar());
    return std::pair{std::move(na), std::move(nb)};
}

auto same_tree(const Site& x, const Site& y, const Term& a, const Term& b) -> bool
{
    if (x.binding < 0 || y.binding < 0) {
        return x.binding < 0 && y.binding < 0;
    }
    return a.bindings[static_cast<std::size_t>(x.binding)].placeholder
           == b.bindings[static_cast<std::size_t>(y.binding)].placeholder;
}

auto nested(const Site& x, const Site& y) -> bool
{
    if (x.binding != y.binding) {
        return false;
    }
    auto n = std::min(x.path.size(), y.path.size());
    return std::equal(x.path.begin(), x.path.begin() + static_cast<std::ptrdiff_t>(n), y.path.begin());
}

} // namespace

auto mutate(const Term& t, const Sampler& s, Rng& rng) -> Term
{
    auto sites = all_sites(t);
    if (!sites.empty()) {
        for (int attempt = 0; attempt < kAttempts; ++attempt) {
            const auto& site = sites[rng.below(sites.size())];
            auto out = mutate_at(t, site, s, rng);
            if (out && is_valid_term(*out, s)) {
                return std::move(*out);
            }
        }
    }
    return s.sample(rng);
}

auto crossover(const Term& a, const Term& b, const Sampler& s, Rng& rng, bool* swapped) -> std::pair<Term, Term>
{
    if (swapped != nullptr) {
        *swapped = false;
    }
    auto sites_a = all_sites(a);
    auto sites_b = all_sites(b);
    for (int attempt = 0; attempt < kAttempts && !sites_a.empty(); ++attempt) {
        const auto& sa = sites_a[rng.below(sites_a.size())];
        const auto& nt = site_nonterminal(a, sa);
        const Sampler* ga = site_grammar(a, sa, s);
        std::vector<const Site*> partners;
        for (const auto& sb : sites_b) {
            if (same_tree(sa, sb, a, b) && site_nonterminal(b, sb) == nt && site_grammar(b, sb, s) == ga) {
                partners.push_back(&sb);
            }
        }
        if (partners.empty()) {
            continue;
        }
        const auto& sb = *partners[rng.below(partners.size())];
        auto r = cross_at(a, sa, b, sb, s);
        if (r && is_valid_term(r->first, s) && is_valid_term(r->second, s)) {
            if (swapped != nullptr) {
                *swapped = true;
            }
            return std::move(*r);
        }
    }
    return {a, b};
}

auto self_crossover(const Term& t, const Sampler& s, Rng& rng, bool* swapped) -> Term
{
    if (swapped != nullptr) {
        *swapped = false;
    }
    auto sites = all_sites(t);
    for (int attempt = 0; attempt < kAttempts && !sites.empty(); ++attempt) {
        const auto& x = sites[rng.below(sites.size())];
        const auto& nt = site_nonterminal(t, x);
        std::vector<const Site*> partners;
        for (const auto& y : sites) {
            if (y.binding == x.binding && !nested(x, y) && site_nonterminal(t, y) == nt) {
                partners.push_back(&y);
            }
        }
        if (partners.empty()) {
            continue;
        }
        const auto& y = *partners[rng.below(partners.size())];
        Node from_x = subtree_at(t, x);
        Node from_y = subtree_at(t, y);
        Term out = replace(replace(t, x, from_y), y, from_x);
        if (is_valid_term(out, s)) {
            if (swapped != nullptr) {
                *swapped = true;
            }
            return out;
        }
    }
    return t;
}

auto optimize_acquisition(const Fitness& fitness, const Sampler& s, std::span<const Term> seeds,
                          const std::unordered_set<std::string>& excluded, const EvolutionConfig& cfg, Rng& rng,
                          EvolutionStats* stats) -> Term
{
    cfg.validate();
    struct Member {
        Term term;
        std::string key;
        double fit;
    };
    EvolutionStats local;
    EvolutionStats& st = stats != nullptr ? *stats : local;
    st = {};
    std::unordered_map<std::string, double> memo;
    std::optional<Member> best;
    auto score = [&](Term t) -> std::optional<Member> {
        auto key = to_string(t);
        auto it = memo.find(key);
        if (it == memo.end()) {
            it = memo.emplace(key, fitness(t)).first;
            ++st.fitness_evaluations;
            if (!excluded.contains(key) && (!best || it->second > best->fit)) {
                best = Member{t, key, it->second};
            }
        }
        return Member{std::move(t), std::move(key), it->second};
    };

    auto pool = static_cast<std::size_t>(cfg.pool);
    std::vector<Member> population;
    std::unordered_set<std::string> members;
    auto admit = [&](Term t) {
        auto m = score(std::move(t));
        if (members.insert(m->key).second) {
            population.push_back(std::move(*m));
        }
    };
    for (std::size_t i = 0; i < seeds.size() && population.size() < pool; ++i) {
        admit(seeds[i]);
    }
    for (std::size_t tries = 0; population.size() < pool && tries < 4 * pool; ++tries) {
        try {
            admit(s.sample(rng));
        } catch (const Unsatisfiable&) {
            break;
        }
    }
    if (population.empty()) {
        return s.sample(rng);
    }

    auto tournament = [&]() -> const Member& {
        auto k = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.p_tour * static_cast<double>(population.size()) + 0.5));
        const Member* winner = nullptr;
        for (std::size_t i = 0; i < k; ++i) {
            const auto& m = population[rng.below(population.size())];
            if (winner == nullptr || m.fit > winner->fit) {
                winner = &m;
            }
        }
        return *winner;
    };

    double last_best = best ? best->fit : -std::numeric_limits<double>::infinity();
    int stall = 0;
    for (int it = 0; it < cfg.max_iterations; ++it) {
        std::vector<Term> offspring;
        offspring.reserve(pool);
        while (offspring.size() < pool) {
            if (rng.bernoulli(cfg.p_mut)) {
                offspring.push_back(mutate(tournament().term, s, rng));
            } else if (rng.bernoulli(0.5)) {
                bool ok = false;
                offspring.push_back(self_crossover(tournament().term, s, rng, &ok));
                st.failed_crossovers += ok ? 0 : 1;
            } else {
                bool ok = false;
                const auto& pa = tournament();
                const auto& pb = tournament();
                auto [ca, cb] = crossover(pa.term, pb.term, s, rng, &ok);
                st.failed_crossovers += ok ? 0 : 1;
                offspring.push_back(std::move(ca));
                if (offspring.size() < pool) {
                    offspring.push_back(std::move(cb));
                }
            }
        }
        for (auto& t : offspring) {
            admit(std::move(t));
        }
        std::stable_sort(population.begin(), population.end(),
                         [](const Member& x, const Member& y) { return x.fit > y.fit; });
        while (population.size() > pool) {
            members.erase(population.back().key);
            population.pop_back();
        }
        st.iterations = it + 1;
        double now = best ? best->fit : -std::numeric_limits<double>::infinity();
        if (now > last_best) {
            last_best = now;
            stall = 0;
        } else {
            ++stall;
        }
        if (it + 1 >= cfg.min_iterations && stall >= cfg.patience) {
            break;
        }
    }
    if (best) {
        return best->term;
    }
    for (int tries = 0; tries < 100; ++tries) {
        auto t = s.sample(rng);
        if (!excluded.contains(to_string(t))) {
            return t;
        }
    }
    return population.front().term;
}

} // namespace gramnas
