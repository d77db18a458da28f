#include "gramnas/error.hpp"

namespace gramnas {

namespace {

auto located(const std::string& message, std::size_t line, std::size_t column) -> std::string
{
    if (line == 0) {
        return message;
    }
    return std::to_string(line) + ":" + std::to_string(column) + ": " + message;
}

} // namespace

GrammarError::GrammarError(Kind kind, std::string message, std::size_t line, std::size_t column)
    : Error(located(message, line, column))
    , kind_(kind)
    , line_(line)
    , column_(column)
{
}

TermError::TermError(Kind kind, std::string message, std::string offending)
    : Error(std::move(message))
    , kind_(kind)
    , offending_(std::move(offending))
{
}

Unsatisfiable::Unsatisfiable(std::string nonterminal, int remaining_depth)
    : Error("no admissible production for " + nonterminal + " with remaining depth " + std::to_string(remaining_depth))
    , nonterminal_(std::move(nonterminal))
    , remaining_depth_(remaining_depth)
{
}

} // namespace gramnas
