// gramnas command-line interface.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gramnas/analysis.hpp"
#include "gramnas/assembly.hpp"
#include "gramnas/error.hpp"
#include "gramnas/grammar.hpp"
#include "gramnas/kernel.hpp"
#include "gramnas/sampler.hpp"
#include "gramnas/search.hpp"
#include "gramnas/term.hpp"

using namespace gramnas;

namespace {

constexpr const char* kTermFormat = R"(Term files: one term per line. A term with bindings continues on
following lines of the form `placeholder=Term` (nested bindings use
`outer.inner=`). Blank lines and lines starting with # are ignored.)";

constexpr const char* kAnalyzeSchemas = R"(Output files (CSV, header row first):
  density.csv              bin_lo,bin_hi,count,density
  production_cohorts.csv   production,rule,worst,top,middle,worst_frac,top_frac,middle_frac
  production_marginals.csv production,rule,records,mean_value
  depth_vs_value.csv       record,depth,value
`production` is `grammar:index`; cohorts hold ceil(10%) records each, ties
broken by evaluation order.)";

auto grammar_arg(const std::string& spec) -> std::shared_ptr<const Grammar>
{
    return load_grammar(resolve_grammar_path(spec));
}

auto read_text(const std::string& path) -> std::string
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

auto split_terms(const std::string& text) -> std::vector<std::string>
{
    static const std::regex binding_line(R"(^\s*[A-Za-z_][A-Za-z0-9_.]*\s*=)");
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        if (std::regex_search(line, binding_line) && !out.empty()) {
            out.back() += '\n' + line;
        } else {
            out.push_back(line);
        }
    }
    return out;
}

// A term given as `@file` is read from the file.
auto term_arg(const std::string& arg) -> std::string
{
    return !arg.empty() && arg[0] == '@' ? read_text(arg.substr(1)) : arg;
}

auto cmd_grammar_check(const std::string& path) -> int
{
    auto g = grammar_arg(path);
    auto diags = validate_grammar(*g);
    // An infinite language is reported but does not fail the check.
    bool clean = true;
    for (const auto& d : diags) {
        std::cout << d.message << '\n';
        clean = clean && d.kind == Diagnostic::Kind::infinite_language;
    }
    if (clean) {
        std::cout << "ok: " << g->productions().size() << " productions, " << g->nonterminals().size()
                  << " nonterminals\n";
    }
    return clean ? 0 : 1;
}

auto cmd_grammar_size(const std::string& path) -> int
{
    auto g = grammar_arg(path);
    auto size = count_space(*g);
    if (!size.finite) {
        std::cout << "infinite\n";
        return 0;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", size.log10);
    std::cout << size.exact << "\nlog10 " << buf << '\n';
    return 0;
}

auto cmd_grammar_enumerate(const std::string& path, std::size_t limit, int max_depth) -> int
{
    auto g = grammar_arg(path);
    auto e = enumerate_terms(*g, limit, max_depth);
    for (const auto& t : e.terms) {
        std::cout << to_string(t) << '\n';
    }
    if (e.truncated) {
        std::cerr << "truncated after " << limit << " terms\n";
    }
    return 0;
}

auto cmd_sample(const std::string& grammar, int n, std::uint64_t seed, int max_depth) -> int
{
    auto g = grammar_arg(grammar);
    Sampler s(*g, max_depth);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        std::cout << to_string(s.sample(rng)) << '\n';
    }
    return 0;
}

auto cmd_export(const std::string& grammar, const std::string& format, const std::string& term, int fold,
                bool prune) -> int
{
    auto g = grammar_arg(grammar);
    auto t = parse_term(term_arg(term), *g);
    auto graph = assemble(t, *g, fold);
    if (prune) {
        graph = prune_zero(graph);
    }
    if (format == "dot") {
        std::cout << to_dot(graph);
    } else {
        std::cout << to_json(graph).dump(2) << '\n';
    }
    return 0;
}

auto cmd_kernel(const std::string& grammar, const std::string& file, const std::string& surrogate, int iterations,
                int levels) -> int
{
    auto g = grammar_arg(grammar);
    std::vector<Term> terms;
    for (const auto& s : split_terms(read_text(file))) {
        terms.push_back(parse_term(s, *g));
    }
    if (terms.empty()) {
        throw Error("no terms in " + file);
    }
    if (levels <= 0) {
        levels = 2;
        for (const auto& t : terms) {
            levels = std::max(levels, depth(t));
        }
    }
    Featurizer f(g, iterations, levels);
    HWLConfig cfg;
    cfg.iterations = iterations;
    cfg.levels = levels;
    if (parse_surrogate(surrogate) == SurrogateKind::wl) {
        cfg.lambda.assign(static_cast<std::size_t>(levels - 1), 0.0);
        cfg.lambda.back() = 1.0;
    }
    auto k = gram_matrix(terms, cfg, f);
    std::cout.precision(17);
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
        for (Eigen::Index j = 0; j < k.cols(); ++j) {
            std::cout << (j > 0 ? "," : "") << k(i, j);
        }
        std::cout << '\n';
    }
    return 0;
}

struct SearchArgs {
    std::string grammar = "nb201_hierarchical";
    int budget = 100;
    int initial = 10;
    int workers = 1;
    int batch = 1;
    std::uint64_t seed = 0;
    int max_depth = 20;
    std::string objective = "synthetic";
    std::string worker;
    double timeout = 3600.0;
    std::string surrogate = "hwl";
    std::string strategy = "banat";
    std::string out;
    std::string resume;
    bool timing = false;
    int levels = 0;
    int pool = 200;
    int evo_min = 10;
    int evo_max = 50;
};

auto cmd_search(const SearchArgs& a) -> int
{
    SearchConfig cfg;
    cfg.grammar = grammar_arg(a.grammar);
    cfg.budget = a.budget;
    cfg.initial = a.initial;
    cfg.workers = a.workers;
    cfg.batch = a.batch;
    cfg.seed = a.seed;
    cfg.max_depth = a.max_depth;
    cfg.strategy = parse_strategy(a.strategy);
    cfg.surrogate = parse_surrogate(a.surrogate);
    cfg.timing = a.timing;
    cfg.levels = a.levels;
    cfg.evolution.pool = a.pool;
    cfg.evolution.min_iterations = a.evo_min;
    cfg.evolution.max_iterations = a.evo_max;
    if (a.objective == "synthetic") {
        cfg.objective.kind = ObjectiveSpec::Kind::synthetic;
    } else if (a.objective == "noisy") {
        cfg.objective.kind = ObjectiveSpec::Kind::noisy;
        cfg.objective.noise_seed = a.seed;
    } else if (a.objective == "external") {
        cfg.objective.kind = ObjectiveSpec::Kind::external;
        cfg.objective.command = a.worker;
        cfg.objective.timeout = std::chrono::milliseconds(static_cast<long long>(a.timeout * 1000.0));
    } else {
        throw Error("unknown objective: " + a.objective);
    }
    if (!a.resume.empty()) {
        cfg.resume = read_jsonl(std::filesystem::path(a.resume)).records;
    }

    std::ofstream file;
    std::ostream* out = &std::cout;
    if (!a.out.empty()) {
        file.open(a.out, std::ios::trunc);
        if (!file) {
            throw Error("cannot write " + a.out);
        }
        out = &file;
    }
    write_jsonl(*out, RunHistory{cfg.resume});
    out->flush();
    cfg.on_record = [out](const RunRecord& r) {
        *out << record_to_json(r).dump() << '\n';
        out->flush();
    };
    auto h = run_search(cfg);
    std::cerr << "records " << h.records.size() << ", incumbent " << h.incumbent() << '\n';
    return 0;
}

auto cmd_analyze(const std::string& grammar, const std::vector<std::string>& logs, const std::string& out_dir,
                 int bins) -> int
{
    auto g = grammar_arg(grammar);
    std::vector<RunHistory> histories;
    std::size_t total = 0;
    for (const auto& path : logs) {
        histories.push_back(read_jsonl(std::filesystem::path(path)));
        total += histories.back().records.size();
    }
    if (total == 0) {
        std::cerr << "error: run logs are empty\n";
        return 1;
    }
    auto report = analyze(histories, *g, bins);
    write_report(report, out_dir);
    std::cout << "records " << report.record_count << ", cohort size " << report.cohort_size << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Grammar-based hierarchical architecture search.\nGrammars are paths or fixture names; "
                 "GRAMNAS_FIXTURES overrides the fixture directory."};
    app.require_subcommand(1);
    int rc = 0;

    auto* grammar = app.add_subcommand("grammar", "Inspect a grammar");
    grammar->require_subcommand(1);
    std::string gpath;
    auto* check = grammar->add_subcommand("check", "Print diagnostics; exit 0 iff clean");
    check->add_option("grammar", gpath)->required();
    check->callback([&] { rc = cmd_grammar_check(gpath); });
    auto* size = grammar->add_subcommand("size", "Print the exact number of terms and its log10");
    size->add_option("grammar", gpath)->required();
    size->callback([&] { rc = cmd_grammar_size(gpath); });
    auto* enumerate = grammar->add_subcommand("enumerate", "List terms in production order");
    std::size_t limit = 1000;
    int enum_depth = 16;
    enumerate->add_option("grammar", gpath)->required();
    enumerate->add_option("--limit", limit, "Maximum number of terms")->capture_default_str();
    enumerate->add_option("--max-depth", enum_depth)->capture_default_str();
    enumerate->callback([&] { rc = cmd_grammar_enumerate(gpath, limit, enum_depth); });

    auto* sample = app.add_subcommand("sample", "Sample terms, one per line");
    sample->footer(kTermFormat);
    int n = 1;
    std::uint64_t seed = 0;
    int max_depth = 20;
    sample->add_option("--grammar", gpath)->required();
    sample->add_option("--n", n)->capture_default_str();
    sample->add_option("--seed", seed)->capture_default_str();
    sample->add_option("--max-depth", max_depth)->capture_default_str();
    sample->callback([&] { rc = cmd_sample(gpath, n, seed, max_depth); });

    auto* exp = app.add_subcommand("export", "Assemble a term into an archgraph/1 JSON or DOT graph");
    std::string format = "json";
    std::string term;
    int fold = 0;
    bool prune = false;
    exp->add_option("--grammar", gpath)->required();
    exp->add_option("--format", format)->check(CLI::IsMember({"json", "dot"}))->capture_default_str();
    exp->add_option("--fold", fold, "Fold level; 0 keeps every level")->capture_default_str();
    exp->add_flag("--prune", prune, "Drop zero edges and dead nodes");
    exp->add_option("term", term, "Term string, or @file")->required();
    exp->callback([&] { rc = cmd_export(gpath, format, term, fold, prune); });

    auto* kernel = app.add_subcommand("kernel", "Print the Gram matrix of terms in a file as CSV");
    kernel->footer(std::string(kTermFormat) + "\nOutput: one CSV row per term, no header; entry (i, j) is k(t_i, t_j).");
    std::string file;
    std::string surrogate = "hwl";
    int iterations = 2;
    int levels = 0;
    kernel->add_option("--grammar", gpath)->required();
    kernel->add_option("--kernel", surrogate)->check(CLI::IsMember({"hwl", "wl"}))->capture_default_str();
    kernel->add_option("--iterations", iterations, "WL iterations H")->capture_default_str();
    kernel->add_option("--levels", levels, "hWL levels; 0 uses the deepest term")->capture_default_str();
    kernel->add_option("terms", file)->required()->check(CLI::ExistingFile);
    kernel->callback([&] { rc = cmd_kernel(gpath, file, surrogate, iterations, levels); });

    auto* search = app.add_subcommand("search", "Run a search and write a JSON-lines run log");
    search->footer("Log records: {iteration, term, value, incumbent, hyper[, wall_time][, error]}.");
    SearchArgs sa;
    search->add_option("--grammar", sa.grammar)->capture_default_str();
    search->add_option("--budget", sa.budget)->capture_default_str();
    search->add_option("--init", sa.initial, "Random initial design size")->capture_default_str();
    search->add_option("--workers", sa.workers)->capture_default_str();
    search->add_option("--batch", sa.batch, "Kriging Believer batch size")->capture_default_str();
    search->add_option("--seed", sa.seed)->capture_default_str();
    search->add_option("--max-depth", sa.max_depth)->capture_default_str();
    search->add_option("--objective", sa.objective)
        ->check(CLI::IsMember({"synthetic", "noisy", "external"}))
        ->capture_default_str();
    search->add_option("--worker", sa.worker, "Shell command of the external evaluator");
    search->add_option("--timeout", sa.timeout, "External evaluation timeout in seconds")->capture_default_str();
    search->add_option("--surrogate", sa.surrogate)->check(CLI::IsMember({"hwl", "wl"}))->capture_default_str();
    search->add_option("--strategy", sa.strategy)->check(CLI::IsMember({"banat", "rs", "re"}))->capture_default_str();
    search->add_option("--levels", sa.levels, "hWL levels; 0 picks from the initial design")->capture_default_str();
    search->add_option("--pool", sa.pool, "Evolution population size")->capture_default_str();
    search->add_option("--evo-min", sa.evo_min, "Minimum evolution generations")->capture_default_str();
    search->add_option("--evo-max", sa.evo_max, "Maximum evolution generations")->capture_default_str();
    search->add_option("--out", sa.out, "Run log path; stdout when omitted");
    search->add_option("--resume", sa.resume, "Continue from this run log")->check(CLI::ExistingFile);
    search->add_flag("--timing", sa.timing, "Record wall_time per evaluation");
    search->callback([&] { rc = cmd_search(sa); });

    auto* an = app.add_subcommand("analyze", "Production-rule statistics over run logs");
    an->footer(kAnalyzeSchemas);
    std::vector<std::string> logs;
    std::string out_dir = ".";
    int bins = 20;
    an->add_option("--grammar", gpath)->required();
    an->add_option("--out", out_dir, "Output directory")->capture_default_str();
    an->add_option("--bins", bins, "Density histogram bins")->capture_default_str();
    an->add_option("logs", logs)->required()->check(CLI::ExistingFile);
    an->callback([&] { rc = cmd_analyze(gpath, logs, out_dir, bins); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return rc;
}
