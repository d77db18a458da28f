#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gramnas {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised by the grammar text parser. Line and column are 1-based; 0 means
// the problem is not tied to a source position (e.g. a cyclic binding).
class GrammarError : public Error {
public:
    enum class Kind { syntax, undefined_nonterminal, arity_mismatch, duplicate_symbol, cyclic_binding, invalid };

    GrammarError(Kind kind, std::string message, std::size_t line = 0, std::size_t column = 0);

    [[nodiscard]] auto kind() const noexcept -> Kind { return kind_; }
    [[nodiscard]] auto line() const noexcept -> std::size_t { return line_; }
    [[nodiscard]] auto column() const noexcept -> std::size_t { return column_; }

private:
    Kind kind_;
    std::size_t line_;
    std::size_t column_;
};

class TermError : public Error {
public:
    enum class Kind { syntax, not_derivable };

    TermError(Kind kind, std::string message, std::string offending = {});

    [[nodiscard]] auto kind() const noexcept -> Kind { return kind_; }
    // Canonical string of the first subterm that could not be derived.
    [[nodiscard]] auto offending() const noexcept -> const std::string& { return offending_; }

private:
    Kind kind_;
    std::string offending_;
};

// No admissible production exists for a nonterminal under the remaining
// depth budget and the active constraints.
class Unsatisfiable : public Error {
public:
    Unsatisfiable(std::string nonterminal, int remaining_depth);

    [[nodiscard]] auto nonterminal() const noexcept -> const std::string& { return nonterminal_; }
    [[nodiscard]] auto remaining_depth() const noexcept -> int { return remaining_depth_; }

private:
    std::string nonterminal_;
    int remaining_depth_;
};

class AssemblyError : public Error {
public:
    using Error::Error;
};

class EvaluationError : public Error {
public:
    using Error::Error;
};

} // namespace gramnas
