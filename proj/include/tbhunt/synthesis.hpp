#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tbhunt/audit_model.hpp"
#include "tbhunt/tbql/ast.hpp"

namespace tbhunt {

enum class IocType : std::uint8_t { Filepath, Filename, ProcessName, IP, Domain, URL, Email, Hash, Registry, CVE };

std::string_view to_string(IocType t);
std::optional<IocType> parse_ioc_type(std::string_view text);
/// Types the auditing layer can observe: Filepath, Filename, ProcessName, IP.
bool is_supported_ioc(IocType t);

struct GraphNode {
    std::string id;
    IocType type = IocType::Filepath;
    std::string value;
    bool operator==(const GraphNode&) const = default;
};

struct GraphEdge {
    std::string src, dst;
    std::string relation;  // lemmatized verb
    int seq = 0;
    bool operator==(const GraphEdge&) const = default;
};

struct ThreatBehaviorGraph {
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;

    const GraphNode* node(std::string_view id) const;
    bool operator==(const ThreatBehaviorGraph&) const = default;
};

/// Input document that does not follow the graph, rule or plan schema.
/// `pointer()` is a JSON pointer to the offending value.
class SchemaError : public ValidationError {
public:
    SchemaError(const std::string& pointer, const std::string& message);
    const std::string& pointer() const { return pointer_; }

private:
    std::string pointer_;
};

class SynthesisEmpty : public Error {
public:
    using Error::Error;
};

ThreatBehaviorGraph parse_graph_json(std::string_view text);
ThreatBehaviorGraph load_graph(const std::filesystem::path& file);
std::string graph_to_json(const ThreatBehaviorGraph& graph);

enum class RuleDirection : std::uint8_t { AsWritten, Inverted };

/// `verb`, `srcType` and `dstType` are `|`-separated alternatives or `*`.
struct MappingRule {
    std::string verb;
    std::string srcType;
    std::string dstType;
    tbql::EntityType object = tbql::EntityType::File;
    OperationType operation = OperationType::Read;
    RuleDirection direction = RuleDirection::AsWritten;
    bool operator==(const MappingRule&) const = default;
};

struct RelationMappingRules {
    std::vector<MappingRule> rules;

    /// First rule matching the verb and endpoint types.
    const MappingRule* find(std::string_view verb, IocType src, IocType dst) const;
    static RelationMappingRules defaults();
    bool operator==(const RelationMappingRules&) const = default;
};

RelationMappingRules parse_rules_json(std::string_view text);
RelationMappingRules load_rules(const std::filesystem::path& file);
std::string rules_to_json(const RelationMappingRules& rules);

struct SynthesisPlan {
    bool usePathPatterns = false;
    bool wildcardWrap = true;
    /// TBQL window clause added as a global filter, e.g. `last 2 day`.
    std::optional<std::string> window;
    /// TBQL attribute expressions added as global filters, e.g. `user = "root"`.
    std::vector<std::string> extraAttributes;
};

SynthesisPlan parse_plan_json(std::string_view text);
SynthesisPlan load_plan(const std::filesystem::path& file);

struct DroppedItem {
    enum class Kind : std::uint8_t { Node, Edge } kind = Kind::Node;
    std::string id;  // node id, or "src->dst#seq" for edges
    std::string reason;
};

struct ScreenResult {
    ThreatBehaviorGraph graph;
    std::vector<DroppedItem> dropped;
};

/// Removes unsupported IOC nodes with their edges, edges no rule maps and
/// nodes left without edges.
ScreenResult screen(const ThreatBehaviorGraph& graph, const RelationMappingRules& rules);

struct MappedRelation {
    tbql::EntityType object = tbql::EntityType::File;
    OperationType operation = OperationType::Read;
    RuleDirection direction = RuleDirection::AsWritten;
};

/// Throws ContractViolation when no rule matches.
MappedRelation map_relation(const GraphEdge& edge, IocType src, IocType dst, const RelationMappingRules& rules);

struct Synthesis {
    tbql::QueryAst query;
    std::vector<DroppedItem> dropped;
};

/// Screens the graph and synthesizes one pattern per surviving edge.
/// Throws SynthesisEmpty when nothing survives screening.
Synthesis synthesize(const ThreatBehaviorGraph& graph, const RelationMappingRules& rules = RelationMappingRules::defaults(),
                     const SynthesisPlan& plan = {});

}  // namespace tbhunt
