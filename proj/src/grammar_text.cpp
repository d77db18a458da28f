// Text format for grammars: parsing and rendering.
#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "gramnas/error.hpp"
#include "gramnas/grammar.hpp"

namespace gramnas {

namespace {

struct Pos {
    std::size_t line = 0;
    std::size_t column = 0;
};

enum class Tok { ident, number, define, pipe, semi, lparen, rparen, comma, lbracket, rbracket };

struct Token {
    Tok kind;
    std::string text;
    Pos pos;
};

[[noreturn]] void syntax(const std::string& message, Pos pos)
{
    throw GrammarError(GrammarError::Kind::syntax, message, pos.line, pos.column);
}

auto is_ident_start(char c) -> bool
{
    return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_';
}

auto is_ident_char(char c) -> bool
{
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

auto tokenize(std::string_view text, std::size_t line, std::size_t first_column) -> std::vector<Token>
{
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < text.size()) {
        char c = text[i];
        Pos pos{line, first_column + i};
        if (std::isspace(static_cast<unsigned char>(c)) != 0) {
            ++i;
            continue;
        }
        if (text.substr(i, 3) == "::=") {
            out.push_back({Tok::define, "::=", pos});
            i += 3;
            continue;
        }
        if (is_ident_start(c)) {
            std::size_t j = i;
            while (j < text.size() && is_ident_char(text[j])) {
                ++j;
            }
            out.push_back({Tok::ident, std::string(text.substr(i, j - i)), pos});
            i = j;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) != 0
            || ((c == '-' || c == '+' || c == '.') && i + 1 < text.size()
                && std::isdigit(static_cast<unsigned char>(text[i + 1])) != 0)) {
            std::size_t j = i + 1;
            while (j < text.size()
                   && (std::isalnum(static_cast<unsigned char>(text[j])) != 0 || text[j] == '.'
                       || ((text[j] == '-' || text[j] == '+') && (text[j - 1] == 'e' || text[j - 1] == 'E')))) {
                ++j;
            }
            out.push_back({Tok::number, std::string(text.substr(i, j - i)), pos});
            i = j;
            continue;
        }
        Tok kind{};
        switch (c) {
        case '|': kind = Tok::pipe; break;
        case ';': kind = Tok::semi; break;
        case '(': kind = Tok::lparen; break;
        case ')': kind = Tok::rparen; break;
        case ',': kind = Tok::comma; break;
        case '[': kind = Tok::lbracket; break;
        case ']': kind = Tok::rbracket; break;
        default: syntax(std::string("unexpected character '") + c + "'", pos);
        }
        out.push_back({kind, std::string(1, c), pos});
        ++i;
    }
    return out;
}

auto parse_double(const std::string& text, Pos pos) -> double
{
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        syntax("invalid number '" + text + "'", pos);
    }
    return value;
}

auto parse_int(std::string_view text, Pos pos) -> int
{
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        syntax("invalid integer '" + std::string(text) + "'", pos);
    }
    return value;
}

auto trim(std::string_view s) -> std::string_view
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())) != 0) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())) != 0) {
        s.remove_suffix(1);
    }
    return s;
}

auto split(std::string_view s, char sep) -> std::vector<std::string_view>
{
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        auto at = s.find(sep, start);
        parts.push_back(trim(s.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start)));
        if (at == std::string_view::npos) {
            return parts;
        }
        start = at + 1;
    }
}

auto looks_like_nonterminal(const std::string& name) -> bool
{
    bool letter = false;
    for (char c : name) {
        if (std::islower(static_cast<unsigned char>(c)) != 0) {
            return false;
        }
        letter = letter || std::isupper(static_cast<unsigned char>(c)) != 0;
    }
    return letter && std::isupper(static_cast<unsigned char>(name.front())) != 0;
}

struct RawSymbol {
    std::string name;
    Pos pos;
};

struct RawAlt {
    RawSymbol head;
    bool applied = false;
    std::vector<RawSymbol> args;
    double weight = 1.0;
};

struct RawRule {
    RawSymbol lhs;
    std::vector<RawAlt> alts;
};

struct RawBind {
    std::string placeholder;
    std::string grammar;
    std::string start;
    Pos pos;
};

struct RawAttributes {
    std::string terminal;
    Attributes values;
    Pos pos;
};

struct Section {
    std::string name;
    Pos pos;
    bool named = false;
    std::vector<RawRule> rules;
    std::optional<RawSymbol> start;
    std::vector<std::pair<ConstraintSpec, Pos>> constraints;
    std::vector<RawBind> binds;
    std::vector<RawAttributes> attributes;
    std::vector<GraphTemplate> templates;
};

class RuleParser {
public:
    explicit RuleParser(std::vector<Token> tokens)
        : tokens_(std::move(tokens))
    {
    }

    auto parse() -> std::vector<RawRule>
    {
        std::vector<RawRule> rules;
        while (!done()) {
            if (peek().kind == Tok::semi) {
                ++at_;
                continue;
            }
            rules.push_back(rule());
        }
        return rules;
    }

private:
    auto done() const -> bool { return at_ >= tokens_.size(); }
    auto peek() const -> const Token& { return tokens_[at_]; }
    auto end_pos() const -> Pos { return tokens_.empty() ? Pos{} : tokens_.back().pos; }

    auto expect(Tok kind, const char* what) -> const Token&
    {
        if (done()) {
            syntax(std::string("expected ") + what + " at end of rule", end_pos());
        }
        if (peek().kind != kind) {
            syntax(std::string("expected ") + what + ", found '" + peek().text + "'", peek().pos);
        }
        return tokens_[at_++];
    }

    auto symbol() -> RawSymbol
    {
        if (done()) {
            syntax("expected a symbol at end of rule", end_pos());
        }
        const auto& t = peek();
        if (t.kind != Tok::ident && t.kind != Tok::number) {
            syntax("expected a symbol, found '" + t.text + "'", t.pos);
        }
        ++at_;
        return {t.text, t.pos};
    }

    auto rule() -> RawRule
    {
        RawRule r;
        const auto& lhs = expect(Tok::ident, "a nonterminal");
        r.lhs = {lhs.text, lhs.pos};
        expect(Tok::define, "'::='");
        r.alts.push_back(alternative());
        while (!done() && peek().kind == Tok::pipe) {
            ++at_;
            r.alts.push_back(alternative());
        }
        if (!done() && peek().kind != Tok::semi) {
            syntax("expected '|' or ';', found '" + peek().text + "'", peek().pos);
        }
        return r;
    }

    auto alternative() -> RawAlt
    {
        RawAlt alt;
        alt.head = symbol();
        if (!done() && peek().kind == Tok::lparen) {
            ++at_;
            alt.applied = true;
            alt.args.push_back(argument());
            while (!done() && peek().kind == Tok::comma) {
                ++at_;
                alt.args.push_back(argument());
            }
            expect(Tok::rparen, "')'");
        }
        if (!done() && peek().kind == Tok::lbracket) {
            ++at_;
            const auto& w = expect(Tok::number, "a weight");
            alt.weight = parse_double(w.text, w.pos);
            if (!(alt.weight > 0.0)) {
                throw GrammarError(GrammarError::Kind::invalid, "weight must be positive", w.pos.line, w.pos.column);
            }
            expect(Tok::rbracket, "']'");
        }
        return alt;
    }

    auto argument() -> RawSymbol
    {
        auto s = symbol();
        if (!done() && peek().kind == Tok::lparen) {
            syntax("nested operator application; introduce a nonterminal for '" + s.name + "'", peek().pos);
        }
        return s;
    }

    std::vector<Token> tokens_;
    std::size_t at_ = 0;
};

auto parse_constraint(std::string_view body, Pos pos) -> ConstraintSpec
{
    // body is the text between the parentheses: `kind[: A, B]`
    ConstraintSpec c;
    auto colon = body.find(':');
    auto head = trim(body.substr(0, colon));
    if (colon != std::string_view::npos) {
        for (auto name : split(body.substr(colon + 1), ',')) {
            if (name.empty()) {
                syntax("empty name in constraint scope", pos);
            }
            c.scope.emplace_back(name);
        }
    }
    if (head == "connectivity") {
        c.kind = ConstraintSpec::Kind::connectivity;
    } else if (head.starts_with("derivations")) {
        auto eq = head.find('=');
        if (eq == std::string_view::npos) {
            syntax("derivations constraint needs a count, e.g. derivations=12", pos);
        }
        int n = parse_int(trim(head.substr(eq + 1)), pos);
        if (n < 1) {
            throw GrammarError(GrammarError::Kind::invalid, "derivation count must be at least 1", pos.line, pos.column);
        }
        c.kind = ConstraintSpec::Kind::derivation_count;
        c.count = static_cast<std::size_t>(n);
    } else if (head.starts_with("hook")) {
        auto eq = head.find('=');
        if (eq == std::string_view::npos || trim(head.substr(eq + 1)).empty()) {
            syntax("hook constraint needs a name, e.g. hook=full_nodes", pos);
        }
        c.kind = ConstraintSpec::Kind::custom_hook;
        c.hook = std::string(trim(head.substr(eq + 1)));
    } else {
        syntax("unknown constraint kind '" + std::string(head) + "'", pos);
    }
    return c;
}

auto parse_int_list(std::string_view text, Pos pos) -> std::vector<int>
{
    std::vector<int> out;
    for (auto part : split(text, ',')) {
        out.push_back(parse_int(part, pos));
    }
    return out;
}

auto parse_template(std::string_view rest, Pos pos) -> GraphTemplate
{
    std::istringstream in{std::string(rest)};
    GraphTemplate t;
    if (!(in >> t.name) || !is_ident_start(t.name.front())) {
        syntax("@template needs a name", pos);
    }
    t.slots.clear();
    std::string item;
    bool nodes_set = false;
    while (in >> item) {
        auto eq = item.find('=');
        if (eq == std::string::npos) {
            syntax("expected key=value in @template, found '" + item + "'", pos);
        }
        auto key = std::string_view(item).substr(0, eq);
        auto value = std::string_view(item).substr(eq + 1);
        if (key == "nodes") {
            t.nodes = parse_int(value, pos);
            nodes_set = true;
        } else if (key == "ports") {
            t.ports = parse_int_list(value, pos);
        } else if (key == "slot") {
            t.slots.push_back(parse_int_list(value, pos));
        } else if (key == "edge") {
            auto parts = split(value, ',');
            if (parts.size() != 3) {
                syntax("edge needs tail,head,label", pos);
            }
            t.fixed.push_back({parse_int(parts[0], pos), parse_int(parts[1], pos), std::string(parts[2])});
        } else if (key == "merge") {
            t.merge = std::string(value);
        } else {
            syntax("unknown @template key '" + std::string(key) + "'", pos);
        }
    }
    if (!nodes_set) {
        syntax("@template needs nodes=N", pos);
    }
    if (auto problem = t.check(); !problem.empty()) {
        throw GrammarError(GrammarError::Kind::invalid, "template '" + t.name + "': " + problem, pos.line, pos.column);
    }
    return t;
}

auto parse_attributes(std::string_view rest, Pos pos) -> RawAttributes
{
    auto colon = rest.find(':');
    if (colon == std::string_view::npos) {
        syntax("expected '@attributes name: key=value, ...'", pos);
    }
    RawAttributes a;
    a.terminal = std::string(trim(rest.substr(0, colon)));
    a.pos = pos;
    for (auto kv : split(rest.substr(colon + 1), ',')) {
        auto eq = kv.find('=');
        if (eq == std::string_view::npos || trim(kv.substr(0, eq)).empty()) {
            syntax("expected key=value in @attributes", pos);
        }
        a.values[std::string(trim(kv.substr(0, eq)))] = std::string(trim(kv.substr(eq + 1)));
    }
    return a;
}

auto parse_bind(std::string_view rest, Pos pos) -> RawBind
{
    auto arrow = rest.find("->");
    if (arrow == std::string_view::npos) {
        syntax("expected 'bind x -> Grammar.Start'", pos);
    }
    RawBind b;
    b.placeholder = std::string(trim(rest.substr(0, arrow)));
    b.pos = pos;
    auto target = trim(rest.substr(arrow + 2));
    auto dot = target.find('.');
    b.grammar = std::string(target.substr(0, dot));
    if (dot != std::string_view::npos) {
        b.start = std::string(target.substr(dot + 1));
    }
    auto valid = [](const std::string& s) {
        return !s.empty() && is_ident_start(s.front()) && std::all_of(s.begin(), s.end(), is_ident_char);
    };
    if (!valid(b.placeholder) || !valid(b.grammar) || (dot != std::string_view::npos && !valid(b.start))) {
        syntax("malformed bind target", pos);
    }
    return b;
}

struct Line {
    std::string_view text;
    std::size_t number;
    std::size_t column; // 1-based column of text.front()
};

auto split_sections(std::string_view source) -> std::vector<Section>
{
    std::vector<Section> sections(1);
    sections[0].name = "main";
    std::vector<Token> pending;
    auto flush = [&]() {
        if (!pending.empty()) {
            auto rules = RuleParser(std::move(pending)).parse();
            auto& dst = sections.back().rules;
            dst.insert(dst.end(), rules.begin(), rules.end());
            pending.clear();
        }
    };
    auto continues = [&]() {
        if (pending.empty()) {
            return false;
        }
        auto k = pending.back().kind;
        return k == Tok::pipe || k == Tok::comma || k == Tok::lparen || k == Tok::define || k == Tok::lbracket;
    };

    std::size_t number = 0;
    std::size_t start = 0;
    while (start <= source.size()) {
        auto end = source.find('\n', start);
        auto raw = source.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        start = end == std::string_view::npos ? source.size() + 1 : end + 1;
        ++number;
        if (auto hash = raw.find('#'); hash != std::string_view::npos) {
            raw = raw.substr(0, hash);
        }
        if (!raw.empty() && raw.back() == '\r') {
            raw.remove_suffix(1);
        }
        auto text = trim(raw);
        if (text.empty()) {
            continue;
        }
        Pos pos{number, static_cast<std::size_t>(text.data() - raw.data()) + 1};

        if (text.front() == '|' || continues()) {
            auto more = tokenize(text, pos.line, pos.column);
            pending.insert(pending.end(), more.begin(), more.end());
            continue;
        }
        flush();
        if (text.starts_with("@grammar")) {
            auto name = trim(text.substr(8));
            if (name.empty() || !is_ident_start(name.front())
                || !std::all_of(name.begin(), name.end(), is_ident_char)) {
                syntax("@grammar needs a name", pos);
            }
            for (const auto& s : sections) {
                if (s.named && s.name == name) {
                    throw GrammarError(GrammarError::Kind::duplicate_symbol,
                                       "grammar '" + std::string(name) + "' defined twice", pos.line, pos.column);
                }
            }
            sections.push_back({});
            sections.back().name = std::string(name);
            sections.back().pos = pos;
            sections.back().named = true;
        } else if (text.starts_with("@start")) {
            auto name = trim(text.substr(6));
            if (name.empty()) {
                syntax("@start needs a nonterminal", pos);
            }
            sections.back().start = RawSymbol{std::string(name), pos};
        } else if (text.starts_with("@constraint")) {
            auto body = trim(text.substr(11));
            if (body.size() < 2 || body.front() != '(' || body.back() != ')') {
                syntax("expected '@constraint(...)'", pos);
            }
            sections.back().constraints.emplace_back(parse_constraint(body.substr(1, body.size() - 2), pos), pos);
        } else if (text.starts_with("@attributes")) {
            sections.back().attributes.push_back(parse_attributes(text.substr(11), pos));
        } else if (text.starts_with("@template")) {
            sections.back().templates.push_back(parse_template(text.substr(9), pos));
        } else if (text.front() == '@') {
            syntax("unknown directive '" + std::string(text.substr(0, text.find(' '))) + "'", pos);
        } else if (text.starts_with("bind ") || text.starts_with("bind\t")) {
            sections.back().binds.push_back(parse_bind(text.substr(5), pos));
        } else {
            auto more = tokenize(text, pos.line, pos.column);
            pending.insert(pending.end(), more.begin(), more.end());
        }
    }
    flush();
    return sections;
}

class SectionBuilder {
public:
    explicit SectionBuilder(std::vector<Section> sections)
        : sections_(std::move(sections))
    {
        // A leading section without rules only carries file-wide templates
        // and attributes.
        if (sections_.size() > 1 && sections_.front().rules.empty()) {
            const auto& pre = sections_.front();
            if (pre.start || !pre.constraints.empty() || !pre.binds.empty()) {
                auto p = pre.start ? pre.start->pos : !pre.binds.empty() ? pre.binds.front().pos
                                                                         : pre.constraints.front().second;
                syntax("directive outside of a grammar section", p);
            }
            global_templates_ = pre.templates;
            global_attributes_ = pre.attributes;
            sections_.erase(sections_.begin());
        }
        state_.assign(sections_.size(), State::fresh);
        built_.resize(sections_.size());
    }

    auto build_main() -> std::shared_ptr<const Grammar>
    {
        if (sections_.empty() || sections_.front().rules.empty()) {
            throw GrammarError(GrammarError::Kind::invalid, "grammar has no productions");
        }
        auto main = build(0);
        std::vector<bool> used(sections_.size(), false);
        used[0] = true;
        std::function<void(const Grammar&)> mark = [&](const Grammar& g) {
            for (const auto& b : g.bindings()) {
                used[index_of(b.grammar->name())] = true;
                mark(*b.grammar);
            }
        };
        mark(*main);
        for (std::size_t i = 0; i < sections_.size(); ++i) {
            if (!used[i] && !built_[i]) {
                build(i); // report errors in unused sections too
            }
        }
        return main;
    }

private:
    enum class State { fresh, visiting, done };

    auto index_of(const std::string& name) const -> std::size_t
    {
        for (std::size_t i = 0; i < sections_.size(); ++i) {
            if (sections_[i].name == name) {
                return i;
            }
        }
        return sections_.size();
    }

    auto build(std::size_t index) -> std::shared_ptr<const Grammar>
    {
        if (state_[index] == State::done) {
            return built_[index];
        }
        state_[index] = State::visiting;
        const auto& s = sections_[index];
        if (s.rules.empty()) {
            throw GrammarError(GrammarError::Kind::invalid, "grammar '" + s.name + "' has no productions", s.pos.line,
                               s.pos.column);
        }
        using Kind = GrammarError::Kind;

        std::set<std::string> lhs;
        std::map<std::string, Pos> placeholders;
        std::map<std::string, std::size_t> operators;
        for (const auto& r : s.rules) {
            lhs.insert(r.lhs.name);
            for (const auto& alt : r.alts) {
                if (alt.applied) {
                    auto [it, fresh] = operators.emplace(alt.head.name, alt.args.size());
                    if (!fresh && it->second != alt.args.size()) {
                        throw GrammarError(Kind::arity_mismatch,
                                           "operator '" + alt.head.name + "' used with arities "
                                               + std::to_string(it->second) + " and " + std::to_string(alt.args.size()),
                                           alt.head.pos.line, alt.head.pos.column);
                    }
                }
            }
        }
        for (const auto& b : s.binds) {
            if (!placeholders.emplace(b.placeholder, b.pos).second) {
                throw GrammarError(Kind::duplicate_symbol, "placeholder '" + b.placeholder + "' bound twice",
                                   b.pos.line, b.pos.column);
            }
            if (lhs.contains(b.placeholder) || operators.contains(b.placeholder)) {
                throw GrammarError(Kind::duplicate_symbol, "'" + b.placeholder + "' is both a placeholder and a "
                                                               + (lhs.contains(b.placeholder) ? "nonterminal" : "operator"),
                                   b.pos.line, b.pos.column);
            }
        }

        GrammarBuilder builder(s.name);
        auto classify = [&](const RawSymbol& sym, bool applied, std::size_t arity) -> SymbolId {
            Symbol out;
            out.name = sym.name;
            if (applied) {
                if (lhs.contains(sym.name)) {
                    throw GrammarError(Kind::duplicate_symbol, "'" + sym.name + "' is both a nonterminal and an operator",
                                       sym.pos.line, sym.pos.column);
                }
                out.kind = SymbolKind::operator_terminal;
                out.arity = arity;
            } else if (lhs.contains(sym.name)) {
                out.kind = SymbolKind::nonterminal;
            } else if (operators.contains(sym.name)) {
                out.kind = SymbolKind::operator_terminal;
                throw GrammarError(Kind::arity_mismatch, "operator '" + sym.name + "' used without arguments",
                                   sym.pos.line, sym.pos.column);
            } else if (placeholders.contains(sym.name)) {
                out.kind = SymbolKind::placeholder_terminal;
            } else if (looks_like_nonterminal(sym.name)) {
                throw GrammarError(Kind::undefined_nonterminal, "nonterminal '" + sym.name + "' has no productions",
                                   sym.pos.line, sym.pos.column);
            } else {
                out.kind = SymbolKind::primitive_terminal;
            }
            try {
                return builder.add_symbol(std::move(out));
            } catch (const GrammarError& e) {
                throw GrammarError(e.kind(), e.what(), sym.pos.line, sym.pos.column);
            }
        };

        for (const auto& r : s.rules) {
            SymbolId l = classify(r.lhs, false, 0);
            for (const auto& alt : r.alts) {
                Production p;
                p.lhs = l;
                p.head = classify(alt.head, alt.applied, alt.args.size());
                for (const auto& a : alt.args) {
                    p.args.push_back(classify(a, false, 0));
                }
                p.weight = alt.weight;
                builder.add_production(std::move(p));
            }
        }

        auto apply_attributes = [&](const RawAttributes& a, bool required) {
            auto id = builder.find(a.terminal);
            if (!id) {
                if (required) {
                    throw GrammarError(Kind::invalid, "attributes for unknown terminal '" + a.terminal + "'", a.pos.line,
                                       a.pos.column);
                }
                return;
            }
            if (lhs.contains(a.terminal)) {
                throw GrammarError(Kind::invalid, "attributes on nonterminal '" + a.terminal + "'", a.pos.line,
                                   a.pos.column);
            }
            Symbol sym;
            sym.name = a.terminal;
            sym.kind = placeholders.contains(a.terminal) ? SymbolKind::placeholder_terminal
                       : operators.contains(a.terminal)  ? SymbolKind::operator_terminal
                                                         : SymbolKind::primitive_terminal;
            sym.arity = operators.contains(a.terminal) ? operators[a.terminal] : 0;
            sym.attributes = a.values;
            builder.add_symbol(std::move(sym));
        };
        for (const auto& a : global_attributes_) {
            apply_attributes(a, false);
        }
        for (const auto& a : s.attributes) {
            apply_attributes(a, true);
        }
        for (const auto& t : global_templates_) {
            builder.add_template(t, true);
        }
        for (const auto& t : s.templates) {
            builder.add_template(t, true);
        }

        if (s.start) {
            auto id = builder.find(s.start->name);
            if (!id || !lhs.contains(s.start->name)) {
                throw GrammarError(Kind::undefined_nonterminal, "start symbol '" + s.start->name + "' has no productions",
                                   s.start->pos.line, s.start->pos.column);
            }
            builder.set_start(*id);
        }

        for (const auto& [c, pos] : s.constraints) {
            for (const auto& name : c.scope) {
                if (!lhs.contains(name)) {
                    throw GrammarError(Kind::undefined_nonterminal, "constraint scope '" + name + "' is not a nonterminal",
                                       pos.line, pos.column);
                }
            }
            builder.add_constraint(c);
        }

        for (const auto& b : s.binds) {
            auto target = index_of(b.grammar);
            if (target == sections_.size()) {
                throw GrammarError(Kind::undefined_nonterminal, "bind target grammar '" + b.grammar + "' not found",
                                   b.pos.line, b.pos.column);
            }
            if (state_[target] == State::visiting) {
                throw GrammarError(Kind::cyclic_binding, "binding cycle through grammar '" + b.grammar + "'", b.pos.line,
                                   b.pos.column);
            }
            auto sub = build(target);
            auto start = b.start.empty() ? sub->symbol(sub->start()).name : b.start;
            auto id = sub->find(start);
            if (!id || sub->symbol(*id).kind != SymbolKind::nonterminal) {
                throw GrammarError(Kind::undefined_nonterminal,
                                   "bind target '" + b.grammar + "." + start + "' is not a nonterminal", b.pos.line,
                                   b.pos.column);
            }
            builder.add_binding({b.placeholder, start, sub});
        }

        try {
            built_[index] = std::move(builder).build();
        } catch (const GrammarError& e) {
            if (e.line() != 0) {
                throw;
            }
            throw GrammarError(e.kind(), e.what(), s.pos.line, s.pos.column);
        }
        state_[index] = State::done;
        return built_[index];
    }

    std::vector<Section> sections_;
    std::vector<GraphTemplate> global_templates_;
    std::vector<RawAttributes> global_attributes_;
    std::vector<State> state_;
    std::vector<std::shared_ptr<const Grammar>> built_;
};

auto format_double(double v) -> std::string
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, ptr};
}

auto join_ints(const std::vector<int>& values) -> std::string
{
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i != 0) {
            out += ',';
        }
        out += std::to_string(values[i]);
    }
    return out;
}

void render_section(const Grammar& g, std::string& out)
{
    out += "@grammar " + g.name() + "\n";
    out += "@start " + g.symbol(g.start()).name + "\n";
    for (const auto& name : g.declared_templates()) {
        const auto& t = *g.template_of(name);
        out += "@template " + t.name + " nodes=" + std::to_string(t.nodes) + " ports=" + join_ints(t.ports);
        for (const auto& slot : t.slots) {
            out += " slot=" + join_ints(slot);
        }
        for (const auto& e : t.fixed) {
            out += " edge=" + std::to_string(e.tail) + "," + std::to_string(e.head) + "," + e.label;
        }
        if (!t.merge.empty()) {
            out += " merge=" + t.merge;
        }
        out += "\n";
    }
    for (const auto& sym : g.symbols()) {
        if (sym.is_terminal() && !sym.attributes.empty()) {
            out += "@attributes " + sym.name + ":";
            bool first = true;
            for (const auto& [k, v] : sym.attributes) {
                out += (first ? " " : ", ") + k + "=" + v;
                first = false;
            }
            out += "\n";
        }
    }
    for (const auto& b : g.bindings()) {
        out += "bind " + b.placeholder + " -> " + b.grammar->name() + "." + b.start + "\n";
    }
    for (const auto& c : g.constraints()) {
        out += "@constraint(";
        switch (c.kind) {
        case ConstraintSpec::Kind::connectivity: out += "connectivity"; break;
        case ConstraintSpec::Kind::derivation_count: out += "derivations=" + std::to_string(c.count); break;
        case ConstraintSpec::Kind::custom_hook: out += "hook=" + c.hook; break;
        }
        for (std::size_t i = 0; i < c.scope.size(); ++i) {
            out += (i == 0 ? ": " : ", ") + c.scope[i];
        }
        out += ")\n";
    }
    const auto& prods = g.productions();
    for (std::size_t i = 0; i < prods.size(); ++i) {
        const auto& p = prods[i];
        bool continues = i > 0 && prods[i - 1].lhs == p.lhs;
        out += continues ? "    | " : g.symbol(p.lhs).name + " ::= ";
        out += g.symbol(p.head).name;
        if (g.symbol(p.head).kind == SymbolKind::operator_terminal) {
            out += '(';
            for (std::size_t a = 0; a < p.args.size(); ++a) {
                out += (a == 0 ? "" : ", ") + g.symbol(p.args[a]).name;
            }
            out += ')';
        }
        if (p.weight != 1.0) {
            out += " [" + format_double(p.weight) + "]";
        }
        out += '\n';
    }
}

} // namespace

auto parse_grammar(std::string_view text) -> std::shared_ptr<const Grammar>
{
    return SectionBuilder(split_sections(text)).build_main();
}

auto load_grammar(const std::filesystem::path& path) -> std::shared_ptr<const Grammar>
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open grammar file " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_grammar(buffer.str());
}

auto render(const Grammar& g) -> std::string
{
    std::string out;
    std::vector<const Grammar*> order;
    std::function<void(const Grammar&)> visit = [&](const Grammar& x) {
        if (std::any_of(order.begin(), order.end(), [&](const Grammar* y) { return y->name() == x.name(); })) {
            return;
        }
        order.push_back(&x);
        for (const auto& b : x.bindings()) {
            visit(*b.grammar);
        }
    };
    visit(g);
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i != 0) {
            out += '\n';
        }
        render_section(*order[i], out);
    }
    return out;
}

} // namespace gramnas
