#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tbhunt/audit_model.hpp"
#include "tbhunt/bool_expr.hpp"

namespace tbhunt {

enum class CompareOp : std::uint8_t { Eq, Ne, Lt, Le, Gt, Ge };

std::string_view to_string(CompareOp op);

/// SQL-LIKE style match where `%` matches any (possibly empty) character
/// sequence. Anchored at both ends, case-sensitive.
bool wildcard_match(std::string_view pattern, std::string_view text);

bool has_wildcard(std::string_view pattern);

/// Compares a stored value against a query literal. String equality honours
/// `%` wildcards in the literal; ordering comparisons are numeric when both
/// sides are numeric (or the literal parses as one) and lexicographic
/// otherwise.
bool compare_values(const Value& stored, CompareOp op, const Value& literal);

/// One atomic test against a single attribute of an entity or event.
struct PredicateAtom {
    enum class Kind : std::uint8_t { Compare, InSet };

    Kind kind = Kind::Compare;
    std::string attribute;
    CompareOp op = CompareOp::Eq;
    Value value;
    bool negated = false;       // `not in`
    std::vector<Value> values;  // InSet

    bool operator==(const PredicateAtom&) const = default;
};

using Predicate = BoolExpr<PredicateAtom>;

/// Predicate that accepts everything (an empty conjunction).
inline Predicate match_all() { return Predicate::all_of({}); }

inline bool is_match_all(const Predicate& p) {
    return p.kind == Predicate::Kind::And && p.children.empty();
}

PredicateAtom compare_atom(std::string attribute, CompareOp op, Value value);

/// Evaluates against an entity. An attribute the entity's kind does not
/// carry makes the atom false. A file's `name` matches either the basename
/// or the absolute path.
bool evaluate(const Predicate& p, const SystemEntity& entity);
bool evaluate(const Predicate& p, const SystemEvent& event);

std::string to_string(const Predicate& p);

}  // namespace tbhunt
