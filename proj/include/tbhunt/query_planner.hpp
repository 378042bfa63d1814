#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tbhunt/event_store.hpp"
#include "tbhunt/tbql/ast.hpp"

namespace tbhunt {

struct PlannerOptions {
    /// Upper bound on path length; also the base of the path-length score bonus.
    int pathCap = 8;
    /// Path-expansion budget per path pattern (0 = unlimited).
    std::uint64_t maxExpansions = 0;
    /// Bound uid sets larger than this are not pushed into later patterns.
    std::size_t propagationCap = 100'000;
    bool propagate = true;
};

/// One pattern compiled against the store's filter vocabulary.
struct PatternPlan {
    std::size_t patternIndex = 0;
    std::string label;  // pattern id, or "#<n>" when the pattern has none
    std::string subjectId, objectId;
    bool isPath = false;
    EventFilter filter;  // event patterns; also holds the entity filters of path patterns
    int minLength = 1;
    std::optional<int> maxLength;
    std::vector<tbql::TimeWindow> windows;  // resolved against the snapshot at execution
    int pruningScore = 0;
    /// (other pattern index, shared entity id); symmetric across patterns.
    std::vector<std::pair<std::size_t, std::string>> dependencies;
};

struct ExecutionPlan {
    std::vector<PatternPlan> patterns;  // declaration order
    std::vector<std::size_t> schedule;  // indices into `patterns`
    std::vector<std::string> entityIds; // sorted; index = slot in BindingRow::entities
    std::map<std::string, tbql::EntityType> entityTypes;
    std::map<std::string, std::size_t> patternIds;
    std::vector<tbql::SharedEntity> joins;
    std::vector<tbql::RelClause> relations;
    tbql::ReturnClause returns;
};

/// Constraint count used to order execution: atomic attribute predicates on
/// both entities and the event, operation leaves, windows, plus
/// max(0, cap - maxLength) for bounded path patterns.
int score_pattern(const tbql::Pattern& pattern, int pathCap = 8);

/// Compiles a validated AST. Bare values are desugared here if the caller
/// has not done so. Throws SemanticError for global filters that mix heads.
ExecutionPlan build_plan(const tbql::QueryAst& ast, const PlannerOptions& options = {});

/// Pattern-level view of a match: the event rows it covers (one for event
/// patterns) and the representative times used by temporal relations.
struct PatternMatch {
    EventPath events;
    EntityUid subject{}, object{};
    Micros start = 0;  // first hop start
    Micros end = 0;    // last hop end
};

struct BindingRow {
    std::vector<EventPath> patterns;   // by pattern index
    std::vector<EntityUid> entities;   // by ExecutionPlan::entityIds slot
    std::vector<Value> projected;      // return clause order
};

struct PatternStats {
    std::size_t patternIndex = 0;
    std::uint64_t eventsExamined = 0;
    std::uint64_t entitiesExamined = 0;
    std::uint64_t pathExpansions = 0;
    std::string accessPath;
    std::size_t matches = 0;
    std::vector<std::pair<std::string, std::size_t>> pushedFilters;  // entity id, uid count
    double millis = 0;
};

struct ExecutionStats {
    std::vector<PatternStats> patterns;  // schedule order
    std::uint64_t eventsExamined = 0;
    std::uint64_t joinRows = 0;
    double joinMillis = 0;
    double totalMillis = 0;
};

struct BindingSet {
    std::vector<BindingRow> rows;  // sorted by pattern event rows
    std::vector<std::string> columns;
    ExecutionStats stats;
};

BindingSet execute(const ExecutionPlan& plan, const StoreSnapshot& snapshot, const PlannerOptions& options = {});

/// Time range a window denotes; `last` counts back from the store's latest time.
TimeRange resolve_window(const tbql::TimeWindow& w, Micros latest);

/// Matching semantics of relations, shared with test oracles.
bool temporal_holds(const tbql::TemporalRel& rel, const PatternMatch& left, const PatternMatch& right);
/// Numeric when both values are integers, otherwise exact string comparison.
bool relation_compare(const Value& left, CompareOp op, const Value& right);

std::string explain_text(const ExecutionPlan& plan, const ExecutionStats& stats);
/// JSON document with the same content as explain_text.
std::string explain_json(const ExecutionPlan& plan, const ExecutionStats& stats);

struct BaselineQueries {
    std::optional<std::string> tabular;  // absent when the query has path patterns
    std::string graph;
    std::vector<std::string> notices;
};

/// Monolithic SQL-style and Cypher-style renderings of a desugared query,
/// used for conciseness comparison only.
BaselineQueries emit_baseline_query_text(const tbql::QueryAst& ast);

}  // namespace tbhunt
