#include "gramnas/term.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <set>

#include "gramnas/error.hpp"

namespace gramnas {

auto Node::nonterminal() const -> const std::string&
{
    static const std::string none;
    return chain.empty() ? none : chain.back().nonterminal;
}

auto Term::binding(std::string_view placeholder) const -> const Term*
{
    for (const auto& b : bindings) {
        if (b.placeholder == placeholder) {
            return b.term.get();
        }
    }
    return nullptr;
}

auto operator==(const Term& a, const Term& b) -> bool
{
    if (!(a.root == b.root) || a.bindings.size() != b.bindings.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.bindings.size(); ++i) {
        const auto& x = a.bindings[i];
        const auto& y = b.bindings[i];
        if (x.placeholder != y.placeholder || (x.term != y.term && !(*x.term == *y.term))) {
            return false;
        }
    }
    return true;
}

namespace {

void append(const Node& n, std::string& out)
{
    out += n.name;
    if (n.kind == Node::Kind::op && !n.children.empty()) {
        out += '(';
        for (std::size_t i = 0; i < n.children.size(); ++i) {
            if (i != 0) {
                out += ',';
            }
            append(n.children[i], out);
        }
        out += ')';
    }
}

void append_bindings(const Term& t, const std::string& prefix, std::string& out)
{
    for (const auto& b : t.bindings) {
        out += '\n';
        out += prefix + b.placeholder + '=';
        append(b.term->root, out);
        append_bindings(*b.term, prefix + b.placeholder + '.', out);
    }
}

} // namespace

auto to_string(const Node& n) -> std::string
{
    std::string out;
    append(n, out);
    return out;
}

auto to_string(const Term& t) -> std::string
{
    std::string out;
    append(t.root, out);
    append_bindings(t, "", out);
    return out;
}

namespace {

struct Raw {
    std::string name;
    bool applied = false;
    std::vector<Raw> children;
    int level = 1;
};

class ExprParser {
public:
    explicit ExprParser(std::string_view text)
        : text_(text)
    {
    }

    auto parse() -> Raw
    {
        auto r = expr(1);
        skip();
        if (at_ != text_.size()) {
            fail("unexpected '" + std::string(1, text_[at_]) + "'");
        }
        return r;
    }

private:
    [[noreturn]] void fail(const std::string& what) const
    {
        throw TermError(TermError::Kind::syntax, what + " at offset " + std::to_string(at_) + " in '"
                                                     + std::string(text_) + "'",
                        std::string(text_));
    }

    void skip()
    {
        while (at_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[at_])) != 0) {
            ++at_;
        }
    }

    auto expr(int level) -> Raw
    {
        skip();
        Raw r;
        r.level = level;
        auto start = at_;
        while (at_ < text_.size() && text_[at_] != '(' && text_[at_] != ')' && text_[at_] != ','
               && std::isspace(static_cast<unsigned char>(text_[at_])) == 0) {
            ++at_;
        }
        if (start == at_) {
            fail("expected a name");
        }
        r.name = std::string(text_.substr(start, at_ - start));
        skip();
        if (at_ < text_.size() && text_[at_] == '(') {
            ++at_;
            r.applied = true;
            r.children.push_back(expr(level + 1));
            skip();
            while (at_ < text_.size() && text_[at_] == ',') {
                ++at_;
                r.children.push_back(expr(level + 1));
                skip();
            }
            if (at_ >= text_.size() || text_[at_] != ')') {
                fail("expected ')'");
            }
            ++at_;
        }
        return r;
    }

    std::string_view text_;
    std::size_t at_ = 0;
};

auto raw_string(const Raw& r) -> std::string
{
    std::string out = r.name;
    if (r.applied) {
        out += '(';
        for (std::size_t i = 0; i < r.children.size(); ++i) {
            out += (i == 0 ? "" : ",") + raw_string(r.children[i]);
        }
        out += ')';
    }
    return out;
}

class Deriver {
public:
    explicit Deriver(const Grammar& g)
        : g_(g)
    {
    }

    auto derive(const Raw& raw, SymbolId nt) -> std::optional<Node>
    {
        auto key = std::make_pair(&raw, nt);
        if (auto it = memo_.find(key); it != memo_.end()) {
            return it->second;
        }
        if (!active_.insert(key).second) {
            return std::nullopt; // unit cycle
        }
        auto result = attempt(raw, nt);
        active_.erase(key);
        if (!result && (failure_ == nullptr || raw.level > failure_->level)) {
            failure_ = &raw;
            failure_nt_ = nt;
        }
        memo_.emplace(key, result);
        return result;
    }

    [[noreturn]] void fail(const Raw& root) const
    {
        const Raw& bad = failure_ != nullptr ? *failure_ : root;
        auto text = raw_string(bad);
        throw TermError(TermError::Kind::not_derivable,
                        "'" + text + "' is not derivable from " + g_.symbol(failure_ != nullptr ? failure_nt_ : g_.start()).name
                            + " in grammar " + g_.name(),
                        text);
    }

private:
    auto terminal(const Raw& raw, SymbolId s) -> std::optional<Node>
    {
        const auto& sym = g_.symbol(s);
        if (raw.applied || raw.name != sym.name) {
            return std::nullopt;
        }
        Node n;
        n.name = sym.name;
        switch (sym.kind) {
        case SymbolKind::primitive_terminal: n.kind = Node::Kind::primitive; break;
        case SymbolKind::placeholder_terminal: n.kind = Node::Kind::placeholder; break;
        case SymbolKind::operator_terminal: n.kind = Node::Kind::folded; break;
        case SymbolKind::nonterminal: return std::nullopt;
        }
        return n;
    }

    auto argument(const Raw& raw, SymbolId s) -> std::optional<Node>
    {
        if (g_.symbol(s).kind == SymbolKind::nonterminal) {
            return derive(raw, s);
        }
        return terminal(raw, s);
    }

    auto attempt(const Raw& raw, SymbolId nt) -> std::optional<Node>
    {
        for (auto pi : g_.productions_of(nt)) {
            const auto& p = g_.production(pi);
            const auto& head = g_.symbol(p.head);
            std::optional<Node> n;
            if (head.kind == SymbolKind::nonterminal) {
                n = derive(raw, p.head);
            } else if (head.kind == SymbolKind::operator_terminal && raw.applied) {
                if (raw.name != head.name || raw.children.size() != p.args.size()) {
                    continue;
                }
                Node op;
                op.kind = Node::Kind::op;
                op.name = head.name;
                bool ok = true;
                for (std::size_t i = 0; i < p.args.size() && ok; ++i) {
                    auto child = argument(raw.children[i], p.args[i]);
                    if (child) {
                        op.children.push_back(std::move(*child));
                    } else {
                        ok = false;
                    }
                }
                if (ok) {
                    n = std::move(op);
                }
            } else {
                n = terminal(raw, p.head);
            }
            if (n) {
                n->chain.insert(n->chain.begin(), Annotation{g_.symbol(nt).name, pi});
                return n;
            }
        }
        return std::nullopt;
    }

    const Grammar& g_;
    std::map<std::pair<const Raw*, SymbolId>, std::optional<Node>> memo_;
    std::set<std::pair<const Raw*, SymbolId>> active_;
    const Raw* failure_ = nullptr;
    SymbolId failure_nt_ = 0;
};

void used_placeholders(const Node& n, std::set<std::string>& out)
{
    if (n.kind == Node::Kind::placeholder) {
        out.insert(n.name);
    }
    for (const auto& c : n.children) {
        used_placeholders(c, out);
    }
}

auto parse_with(const std::map<std::string, std::string>& lines, const std::string& prefix, std::string_view expr,
                const Grammar& g, SymbolId start, std::set<std::string>& consumed) -> Term
{
    Raw raw = ExprParser(expr).parse();
    Deriver d(g);
    auto root = d.derive(raw, start);
    if (!root) {
        d.fail(raw);
    }
    Term t;
    t.root = std::move(*root);
    std::set<std::string> used;
    used_placeholders(t.root, used);
    for (const auto& b : g.bindings()) {
        if (!used.contains(b.placeholder)) {
            continue;
        }
        auto key = prefix + b.placeholder;
        auto it = lines.find(key);
        if (it == lines.end()) {
            throw TermError(TermError::Kind::not_derivable, "missing binding line for placeholder " + key, key);
        }
        consumed.insert(key);
        auto sub = parse_with(lines, key + ".", it->second, *b.grammar, b.grammar->id_of(b.start), consumed);
        t.bindings.push_back({b.placeholder, std::make_shared<const Term>(std::move(sub))});
    }
    return t;
}

} // namespace

auto parse_term(std::string_view text, const Grammar& g) -> Term
{
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        auto line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())) != 0) {
            line.remove_suffix(1);
        }
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front())) != 0) {
            line.remove_prefix(1);
        }
        if (!line.empty()) {
            lines.push_back(line);
        }
        if (end == std::string_view::npos) {
            break;
        }
        start = end + 1;
    }
    if (lines.empty()) {
        throw TermError(TermError::Kind::syntax, "empty term", "");
    }
    std::map<std::string, std::string> bound;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto eq = lines[i].find('=');
        if (eq == std::string_view::npos || eq == 0) {
            throw TermError(TermError::Kind::syntax, "expected 'placeholder=term' binding line", std::string(lines[i]));
        }
        auto name = std::string(lines[i].substr(0, eq));
        while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back())) != 0) {
            name.pop_back();
        }
        if (!bound.emplace(name, std::string(lines[i].substr(eq + 1))).second) {
            throw TermError(TermError::Kind::syntax, "placeholder " + name + " bound twice", name);
        }
    }
    std::set<std::string> consumed;
    auto t = parse_with(bound, "", lines.front(), g, g.start(), consumed);
    for (const auto& [name, value] : bound) {
        if (!consumed.contains(name)) {
            throw TermError(TermError::Kind::not_derivable, "binding " + name + " is not used by the term", name);
        }
    }
    return t;
}

namespace {

auto expand_node(const Node& n, const Term& context) -> Node
{
    if (n.kind == Node::Kind::placeholder) {
        const Term* sub = context.binding(n.name);
        if (sub == nullptr) {
            return n;
        }
        Node out = expand_node(sub->root, *sub);
        out.chain.insert(out.chain.begin(), n.chain.begin(), n.chain.end());
        return out;
    }
    Node out;
    out.kind = n.kind;
    out.name = n.name;
    out.chain = n.chain;
    out.children.reserve(n.children.size());
    for (const auto& c : n.children) {
        out.children.push_back(expand_node(c, context));
    }
    return out;
}

auto depth_in(const Node& n, const Term& context) -> int
{
    if (n.kind == Node::Kind::placeholder) {
        if (const Term* sub = context.binding(n.name)) {
            return depth_in(sub->root, *sub);
        }
        return 1;
    }
    int deepest = 0;
    for (const auto& c : n.children) {
        deepest = std::max(deepest, depth_in(c, context));
    }
    return 1 + deepest;
}

auto count_in(const Node& n, const Term& context) -> std::size_t
{
    if (n.kind == Node::Kind::placeholder) {
        if (const Term* sub = context.binding(n.name)) {
            return count_in(sub->root, *sub);
        }
        return 1;
    }
    std::size_t total = 1;
    for (const auto& c : n.children) {
        total += count_in(c, context);
    }
    return total;
}

void truncate(Node& n, int level, int limit)
{
    if (level == limit) {
        if (!n.children.empty()) {
            n.children.clear();
            n.kind = Node::Kind::folded;
        }
        return;
    }
    for (auto& c : n.children) {
        truncate(c, level + 1, limit);
    }
}

} // namespace

auto expand(const Term& t) -> Term
{
    return Term{expand_node(t.root, t), {}};
}

auto depth(const Term& t) -> int
{
    return depth_in(t.root, t);
}

auto depth(const Node& n) -> int
{
    int deepest = 0;
    for (const auto& c : n.children) {
        deepest = std::max(deepest, depth(c));
    }
    return 1 + deepest;
}

auto node_count(const Term& t) -> std::size_t
{
    return count_in(t.root, t);
}

auto fold(const Term& t, int level) -> Term
{
    if (level < 1) {
        throw Error("fold level must be at least 1");
    }
    if (level >= depth(t)) {
        return t;
    }
    Term out = expand(t);
    truncate(out.root, 1, level);
    return out;
}

namespace {

void collect_sites(const Node& n, int binding, std::vector<std::uint32_t>& path, std::vector<Site>& out)
{
    for (std::size_t s = 0; s < n.chain.size(); ++s) {
        out.push_back({binding, path, s});
    }
    for (std::uint32_t i = 0; i < n.children.size(); ++i) {
        path.push_back(i);
        collect_sites(n.children[i], binding, path, out);
        path.pop_back();
    }
}

auto tree_of(const Term& t, int binding) -> const Node&
{
    if (binding < 0) {
        return t.root;
    }
    return t.bindings.at(static_cast<std::size_t>(binding)).term->root;
}

} // namespace

auto all_sites(const Term& t) -> std::vector<Site>
{
    std::vector<Site> out;
    std::vector<std::uint32_t> path;
    collect_sites(t.root, -1, path, out);
    for (std::size_t b = 0; b < t.bindings.size(); ++b) {
        collect_sites(t.bindings[b].term->root, static_cast<int>(b), path, out);
    }
    return out;
}

auto node_at(const Term& t, const Site& site) -> const Node&
{
    const Node* n = &tree_of(t, site.binding);
    for (auto i : site.path) {
        n = &n->children.at(i);
    }
    return *n;
}

auto site_nonterminal(const Term& t, const Site& site) -> const std::string&
{
    return node_at(t, site).chain.at(site.step).nonterminal;
}

auto subterm_sites(const Term& t, std::string_view nonterminal) -> std::vector<Site>
{
    auto sites = all_sites(t);
    std::erase_if(sites, [&](const Site& s) { return site_nonterminal(t, s) != nonterminal; });
    return sites;
}

auto replace(const Term& t, const Site& site, const Node& subtree) -> Term
{
    Term out = t;
    Node* target = nullptr;
    Term edited_binding;
    if (site.binding < 0) {
        target = &out.root;
    } else {
        edited_binding = *t.bindings.at(static_cast<std::size_t>(site.binding)).term;
        target = &edited_binding.root;
    }
    for (auto i : site.path) {
        target = &target->children.at(i);
    }
    Node fresh = subtree;
    std::vector<Annotation> chain(target->chain.begin(),
                                  target->chain.begin() + static_cast<std::ptrdiff_t>(std::min(site.step, target->chain.size())));
    chain.insert(chain.end(), fresh.chain.begin(), fresh.chain.end());
    fresh.chain = std::move(chain);
    *target = std::move(fresh);
    if (site.binding >= 0) {
        out.bindings[static_cast<std::size_t>(site.binding)].term = std::make_shared<const Term>(std::move(edited_binding));
    }
    return out;
}

namespace {

void placeholder_levels(const Node& n, const std::string& name, int level, int& best)
{
    if (n.kind == Node::Kind::placeholder && n.name == name) {
        best = std::max(best, level);
    }
    for (const auto& c : n.children) {
        placeholder_levels(c, name, level + 1, best);
    }
}

} // namespace

auto site_level(const Term& t, const Site& site) -> int
{
    int base = 1;
    if (site.binding >= 0) {
        int best = 0;
        placeholder_levels(t.root, t.bindings.at(static_cast<std::size_t>(site.binding)).placeholder, 1, best);
        base = std::max(best, 1);
    }
    return base + static_cast<int>(site.path.size());
}

namespace {

auto node_json(const Node& n) -> nlohmann::json
{
    nlohmann::json j;
    j["op"] = n.name;
    j["nt"] = n.chain.empty() ? nlohmann::json(nullptr) : nlohmann::json(n.chain.front().nonterminal);
    auto children = nlohmann::json::array();
    for (const auto& c : n.children) {
        children.push_back(node_json(c));
    }
    j["children"] = std::move(children);
    return j;
}

} // namespace

auto term_to_json(const Term& t) -> nlohmann::json
{
    nlohmann::json j;
    j["root"] = node_json(t.root);
    auto bindings = nlohmann::json::object();
    for (const auto& b : t.bindings) {
        bindings[b.placeholder] = term_to_json(*b.term);
    }
    j["bindings"] = std::move(bindings);
    return j;
}

} // namespace gramnas
