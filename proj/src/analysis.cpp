#include "gramnas/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "gramnas/error.hpp"

namespace gramnas {

auto production_rule(const Grammar& g, std::size_t index) -> std::string
{
    const auto& p = g.production(index);
    std::string out = g.symbol(p.lhs).name + " ::= " + g.symbol(p.head).name;
    if (!p.args.empty()) {
        out += '(';
        for (std::size_t i = 0; i < p.args.size(); ++i) {
            out += (i > 0 ? ", " : "") + g.symbol(p.args[i]).name;
        }
        out += ')';
    }
    return out;
}

namespace {

void collect(const Node& n, const Grammar& g, std::set<std::string>& out)
{
    for (const auto& a : n.chain) {
        out.insert(g.name() + ":" + std::to_string(a.production));
    }
    for (const auto& c : n.children) {
        collect(c, g, out);
    }
}

void productions_used(const Term& t, const Grammar& g, std::set<std::string>& out)
{
    collect(t.root, g, out);
    for (const auto& b : t.bindings) {
        if (const auto* decl = g.binding(b.placeholder)) {
            productions_used(*b.term, *decl->grammar, out);
        }
    }
}

void all_rules(const Grammar& g, std::vector<ProductionUsage>& out, std::set<const Grammar*>& seen)
{
    if (!seen.insert(&g).second) {
        return;
    }
    for (std::size_t i = 0; i < g.productions().size(); ++i) {
        out.push_back(ProductionUsage{g.name() + ":" + std::to_string(i), production_rule(g, i)});
    }
    for (const auto& b : g.bindings()) {
        all_rules(*b.grammar, out, seen);
    }
}

void write_csv_field(std::ostream& out, const std::string& s)
{
    out << '"';
    for (char c : s) {
        out << (c == '"' ? "\"\"" : std::string(1, c));
    }
    out << '"';
}

} // namespace

auto analyze(std::span<const RunHistory> logs, const Grammar& g, int bins) -> AnalysisReport
{
    std::vector<const RunRecord*> records;
    for (const auto& h : logs) {
        for (const auto& r : h.records) {
            records.push_back(&r);
        }
    }
    if (records.empty()) {
        throw Error("no records to analyze");
    }
    AnalysisReport report;
    report.record_count = records.size();
    auto n = records.size();
    auto k = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(n)));
    report.cohort_size = k;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return records[a]->value < records[b]->value; });
    std::vector<int> cohort(n, 0);  // 1 top, -1 worst
    for (std::size_t i = 0; i < k; ++i) {
        cohort[order[i]] = 1;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return records[a]->value > records[b]->value; });
    for (std::size_t i = 0, taken = 0; i < n && taken < k; ++i) {
        if (cohort[order[i]] == 0) {
            cohort[order[i]] = -1;
            ++taken;
        }
    }

    std::set<const Grammar*> seen;
    all_rules(g, report.productions, seen);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < report.productions.size(); ++i) {
        index.emplace(report.productions[i].key, i);
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto t = parse_term(records[i]->term, g);
        std::set<std::string> used;
        productions_used(t, g, used);
        for (const auto& key : used) {
            auto& u = report.productions.at(index.at(key));
            (cohort[i] > 0 ? u.top : cohort[i] < 0 ? u.worst : u.middle) += 1;
            u.mean_value += records[i]->value;
            ++u.records;
        }
        report.depth_vs_value.emplace_back(static_cast<int>(i), depth(t), records[i]->value);
    }
    for (auto& u : report.productions) {
        if (u.records > 0) {
            u.mean_value /= u.records;
        }
    }

    double lo = records[0]->value;
    double hi = lo;
    for (const auto* r : records) {
        lo = std::min(lo, r->value);
        hi = std::max(hi, r->value);
    }
    bins = std::max(bins, 1);
    double width = hi > lo ? (hi - lo) / bins : 1.0;
    report.density.resize(static_cast<std::size_t>(bins));
    for (int b = 0; b < bins; ++b) {
        report.density[static_cast<std::size_t>(b)].lo = lo + b * width;
        report.density[static_cast<std::size_t>(b)].hi = lo + (b + 1) * width;
    }
    for (const auto* r : records) {
        auto b = std::min(bins - 1, static_cast<int>((r->value - lo) / width));
        ++report.density[static_cast<std::size_t>(b)].count;
    }
    for (auto& d : report.density) {
        d.density = static_cast<double>(d.count) / (static_cast<double>(n) * width);
    }
    return report;
}

void write_report(const AnalysisReport& r, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out) {
            throw Error("cannot write " + (dir / name).string());
        }
        out.precision(17);
        return out;
    };
    {
        auto out = open("density.csv");
        out << "bin_lo,bin_hi,count,density\n";
        for (const auto& d : r.density) {
            out << d.lo << ',' << d.hi << ',' << d.count << ',' << d.density << '\n';
        }
    }
    {
        auto out = open("production_cohorts.csv");
        out << "production,rule,worst,top,middle,worst_frac,top_frac,middle_frac\n";
        for (const auto& p : r.productions) {
            double total = p.worst + p.top + p.middle;
            write_csv_field(out, p.key);
            out << ',';
            write_csv_field(out, p.rule);
            out << ',' << p.worst << ',' << p.top << ',' << p.middle << ',';
            if (total > 0) {
                out << p.worst / total << ',' << p.top / total << ',' << p.middle / total << '\n';
            } else {
                out << ",,\n";
            }
        }
    }
    {
        auto out = open("production_marginals.csv");
        out << "production,rule,records,mean_value\n";
        for (const auto& p : r.productions) {
            write_csv_field(out, p.key);
            out << ',';
            write_csv_field(out, p.rule);
            out << ',' << p.records << ',';
            if (p.records > 0) {
                out << p.mean_value;
            }
            out << '\n';
        }
    }
    {
        auto out = open("depth_vs_value.csv");
        out << "record,depth,value\n";
        for (const auto& [i, d, v] : r.depth_vs_value) {
            out << i << ',' << d << ',' << v << '\n';
        }
    }
}

} // namespace gramnas
