#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tbhunt/audit_model.hpp"
#include "tbhunt/bool_expr.hpp"
#include "tbhunt/predicate.hpp"

namespace tbhunt::tbql {

enum class EntityType : std::uint8_t { File, Proc, Ip };

EntityKind to_kind(EntityType t);
std::string_view keyword(EntityType t);

/// `name`, `p1` or `p1.pid`. Inside entity brackets only `head` is used.
struct AttrName {
    std::string head;
    std::optional<std::string> member;

    std::string text() const { return member ? head + "." + *member : head; }
    bool operator==(const AttrName&) const = default;
};

struct AttrAtom {
    enum class Kind : std::uint8_t { Compare, Bare, InSet };

    Kind kind = Kind::Compare;
    AttrName attr;           // Compare, InSet
    CompareOp op = CompareOp::Eq;
    Value value;             // Compare, Bare
    bool negated = false;    // InSet: `not in`
    std::vector<Value> values;

    static AttrAtom compare(AttrName a, CompareOp op, Value v);
    static AttrAtom bare(Value v);
    static AttrAtom in_set(AttrName a, std::vector<Value> vs, bool negated);

    bool operator==(const AttrAtom&) const = default;
};

using AttrExpr = BoolExpr<AttrAtom>;

/// Operation keywords. `open` is accepted as shorthand for `read || write`
/// since opening a file is not itself a monitored event.
enum class OpKeyword : std::uint8_t { Read, Write, Execute, Start, End, Rename, Open };

std::string_view keyword(OpKeyword op);

using OpExpr = BoolExpr<OpKeyword>;

enum class PathArrow : std::uint8_t { Tilde, Arrow };

/// `~>(min~max)[op]` or `->[op]`.
struct PathSpec {
    PathArrow arrow = PathArrow::Tilde;
    std::optional<int> minLength;
    std::optional<int> maxLength;
    std::optional<OpExpr> finalOp;

    int effective_min() const { return arrow == PathArrow::Arrow ? 1 : minLength.value_or(1); }
    std::optional<int> effective_max() const {
        if (arrow == PathArrow::Arrow) return 1;
        return maxLength;
    }
    bool operator==(const PathSpec&) const = default;
};

struct EntityDecl {
    EntityType type = EntityType::Proc;
    std::string id;
    std::optional<AttrExpr> filter;
    bool operator==(const EntityDecl&) const = default;
};

enum class TimeUnit : std::uint8_t { Sec, Min, Hour, Day };

std::string_view keyword(TimeUnit u);
Micros unit_micros(TimeUnit u);

struct TimeWindow {
    enum class Kind : std::uint8_t { FromTo, At, Before, After, Last };

    Kind kind = Kind::FromTo;
    Micros from = 0;  // FromTo start; At/Before/After instant
    Micros to = 0;    // FromTo end
    std::int64_t amount = 0;  // Last
    TimeUnit unit = TimeUnit::Sec;

    bool operator==(const TimeWindow&) const = default;
};

struct Pattern {
    EntityDecl subject;
    std::variant<OpExpr, PathSpec> connector;
    EntityDecl object;
    std::optional<std::string> id;
    std::optional<AttrExpr> idFilter;
    std::optional<TimeWindow> window;

    bool is_path() const { return std::holds_alternative<PathSpec>(connector); }
    bool operator==(const Pattern&) const = default;
};

using GlobalFilter = std::variant<AttrExpr, TimeWindow>;

struct TemporalBound {
    std::int64_t low = 0;
    std::int64_t high = 0;
    TimeUnit unit = TimeUnit::Sec;
    bool operator==(const TemporalBound&) const = default;
};

struct TemporalRel {
    enum class Kind : std::uint8_t { Before, After, Within };

    std::string left;
    Kind kind = Kind::Before;
    std::optional<TemporalBound> bound;
    std::string right;
    bool operator==(const TemporalRel&) const = default;
};

struct AttributeRel {
    AttrName left;
    CompareOp op = CompareOp::Eq;
    AttrName right;
    bool operator==(const AttributeRel&) const = default;
};

using RelClause = std::variant<TemporalRel, AttributeRel>;

struct ReturnClause {
    bool distinct = false;
    std::vector<AttrName> items;
    bool operator==(const ReturnClause&) const = default;
};

/// An entity id used by more than one pattern; the patterns must bind the
/// same system entity.
struct SharedEntity {
    std::string id;
    std::vector<std::size_t> patterns;
    bool operator==(const SharedEntity&) const = default;
};

struct QueryAst {
    std::vector<GlobalFilter> globalFilters;
    std::vector<Pattern> patterns;
    std::vector<RelClause> relations;
    ReturnClause returns;
    /// Derived from entity-id reuse; recomputed by validate() and desugar().
    std::vector<SharedEntity> sharedEntities;

    bool operator==(const QueryAst&) const = default;
};

}  // namespace tbhunt::tbql
