#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tbhunt/event_store.hpp"
#include "tbhunt/tbql/ast.hpp"

namespace tbhunt {

struct FuzzyOptions {
    double nodeThreshold = 0.8;
    double scoreThreshold = 1.0 / 3.0;
    /// Path expansions plus alignment steps before giving up (0 = unlimited).
    std::uint64_t budget = 1'000'000;
    /// Longest flow realizing an event pattern.
    int pathCap = 8;
};

std::size_t levenshtein(std::string_view a, std::string_view b);

/// 1 when the query string (with `%` wildcards) matches the candidate,
/// otherwise 1 - levenshtein / max length after stripping `%`.
double ioc_similarity(std::string_view query, std::string_view candidate);

/// IOC string a query entity is aligned on: the first `=` comparison of its
/// default attribute against a string. nullopt when the entity has none.
std::optional<std::string> query_ioc(const tbql::QueryAst& desugared, const std::string& entityId);

/// Similarity of a store entity to an IOC string; files compare against both
/// name and path and keep the better score.
double entity_similarity(const SystemEntity& entity, std::string_view ioc);

struct NodeCandidate {
    EntityUid uid{};
    double similarity = 0;
    bool operator==(const NodeCandidate&) const = default;
};

/// Per query entity id, store entities of the declared kind with similarity
/// at or above the threshold, best first (ties by uid). Entities without an
/// IOC string accept every entity of their kind at similarity 1.
std::map<std::string, std::vector<NodeCandidate>> align_nodes(const tbql::QueryAst& ast, const StoreSnapshot& snapshot,
                                                              double nodeThreshold);

struct Flow {
    std::size_t patternIndex = 0;
    EventPath path;
    /// 1 + distinct processes acting on the flow after its first hop, other
    /// than the aligned subject.
    int influence = 1;
};

struct GraphAlignment {
    std::vector<std::pair<std::string, EntityUid>> nodeMap;  // sorted by entity id
    std::vector<Flow> flows;                                 // by pattern index
    double score = 0;
    double similarity = 0;  // sum over the node map
    std::vector<Value> projected;
};

struct FuzzyResult {
    std::vector<GraphAlignment> alignments;  // score desc, then node map
    std::vector<std::string> columns;
    std::vector<std::string> unmatchedEntities;  // ids with no candidate
    bool budgetExhausted = false;
    std::uint64_t expansions = 0;
};

/// Influence count of a store path whose head is aligned to `seed`.
int flow_influence(const StoreSnapshot& snapshot, const EventPath& path, EntityUid seed);

/// Exhaustive search for every alignment scoring at or above the threshold.
/// On budget exhaustion returns what was found so far with the flag set.
FuzzyResult search_alignments(const tbql::QueryAst& ast, const StoreSnapshot& snapshot, const FuzzyOptions& options = {});

/// Node map, per-flow event ids, influence counts and score as JSON.
std::string alignment_report_json(const FuzzyResult& result, const StoreSnapshot& snapshot);

}  // namespace tbhunt
