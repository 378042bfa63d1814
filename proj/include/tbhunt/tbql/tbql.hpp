#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tbhunt/tbql/ast.hpp"

namespace tbhunt::tbql {

/// Lexical or grammatical error, positioned at the offending token.
class SyntaxError : public ValidationError {
public:
    SyntaxError(std::size_t line, std::size_t column, std::set<std::string> expected, std::string found);

    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }
    const std::set<std::string>& expected() const { return expected_; }
    const std::string& found() const { return found_; }

private:
    std::size_t line_, column_;
    std::set<std::string> expected_;
    std::string found_;
};

/// Well-formed text that violates a semantic rule (duplicate pattern id,
/// undeclared id, attribute not carried by an entity type, ...).
class SemanticError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Parses and validates TBQL text.
QueryAst parse(std::string_view text);

/// Parses only the grammar; no semantic checks.
QueryAst parse_unchecked(std::string_view text);

/// Parses a single `<wind>` clause such as `last 2 day`.
TimeWindow parse_window(std::string_view text);

/// Parses a standalone attribute expression such as `user = "root"`.
AttrExpr parse_attr_expr(std::string_view text);

/// Semantic checks; also recomputes `sharedEntities`. Throws SemanticError.
void validate(QueryAst& ast);

/// Rewrites bare values to default-attribute comparisons and bare return
/// ids to `id.<default attribute>`. Idempotent.
QueryAst desugar(QueryAst ast);

/// Canonical text: one global filter or pattern per line, then `with` and
/// `return`. parse(pretty_print(a)) == a.
std::string pretty_print(const QueryAst& ast);

std::string print_attr_expr(const AttrExpr& e);
std::string print_op_expr(const OpExpr& e);
std::string print_window(const TimeWindow& w);
std::string print_literal(const Value& v);
std::string format_datetime(Micros t);
/// Accepts `YYYY-MM-DDTHH:MM:SS[.ffffff]`, interpreted as UTC.
std::optional<Micros> parse_datetime(std::string_view text);

/// Entity id -> declared type, over all patterns.
std::map<std::string, EntityType> entity_types(const QueryAst& ast);

/// Characters excluding whitespace and `#` comments.
std::size_t count_query_chars(std::string_view text);
/// Whitespace-separated words excluding `#` comments.
std::size_t count_query_words(std::string_view text);

}  // namespace tbhunt::tbql
