#include "tbhunt/synthesis.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tbhunt/ingestion.hpp"
#include "tbhunt/tbql/tbql.hpp"

namespace tbhunt {

using nlohmann::json;
using tbql::EntityType;

namespace {

constexpr std::pair<IocType, std::string_view> kIocNames[] = {
    {IocType::Filepath, "Filepath"}, {IocType::Filename, "Filename"}, {IocType::ProcessName, "ProcessName"},
    {IocType::IP, "IP"},             {IocType::Domain, "Domain"},     {IocType::URL, "URL"},
    {IocType::Email, "Email"},       {IocType::Hash, "Hash"},         {IocType::Registry, "Registry"},
    {IocType::CVE, "CVE"}};

std::string read_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_document(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("invalid JSON: ") + e.what());
    }
}

const json& member(const json& obj, const std::string& ptr, const char* key, json::value_t type) {
    if (!obj.is_object()) throw SchemaError(ptr, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(ptr + "/" + key, "missing required field");
    const bool ok = type == json::value_t::number_integer ? it->is_number_integer() : it->type() == type;
    if (!ok) throw SchemaError(ptr + "/" + key, "wrong type");
    return *it;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

/// `*` or `|`-separated alternatives, compared case-insensitively.
bool alternatives_match(std::string_view pattern, std::string_view value) {
    if (pattern == "*") return true;
    const auto v = lower(value);
    std::size_t start = 0;
    while (start <= pattern.size()) {
        auto bar = pattern.find('|', start);
        if (bar == std::string_view::npos) bar = pattern.size();
        if (lower(pattern.substr(start, bar - start)) == v) return true;
        start = bar + 1;
    }
    return false;
}

std::string edge_label(const GraphEdge& e) { return e.src + "->" + e.dst + "#" + std::to_string(e.seq); }

EntityType parse_entity_type(std::string_view s, const std::string& ptr) {
    if (s == "file") return EntityType::File;
    if (s == "proc") return EntityType::Proc;
    if (s == "ip") return EntityType::Ip;
    throw SchemaError(ptr, "unknown entity type '" + std::string(s) + "'");
}

/// Subject and object node of an edge once the rule's direction is applied.
std::pair<const GraphNode*, const GraphNode*> oriented(const ThreatBehaviorGraph& g, const GraphEdge& e,
                                                       RuleDirection d) {
    const auto* s = g.node(e.src);
    const auto* o = g.node(e.dst);
    if (d == RuleDirection::Inverted) std::swap(s, o);
    return {s, o};
}

tbql::OpKeyword op_keyword(OperationType op) {
    switch (op) {
        case OperationType::Read: return tbql::OpKeyword::Read;
        case OperationType::Write: return tbql::OpKeyword::Write;
        case OperationType::Execute: return tbql::OpKeyword::Execute;
        case OperationType::Start: return tbql::OpKeyword::Start;
        case OperationType::End: return tbql::OpKeyword::End;
        case OperationType::Rename: return tbql::OpKeyword::Rename;
    }
    return tbql::OpKeyword::Read;
}

}  // namespace

std::string_view to_string(IocType t) {
    for (const auto& [type, name] : kIocNames)
        if (type == t) return name;
    return "?";
}

std::optional<IocType> parse_ioc_type(std::string_view text) {
    for (const auto& [type, name] : kIocNames)
        if (name == text) return type;
    return std::nullopt;
}

bool is_supported_ioc(IocType t) {
    return t == IocType::Filepath || t == IocType::Filename || t == IocType::ProcessName || t == IocType::IP;
}

const GraphNode* ThreatBehaviorGraph::node(std::string_view id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

SchemaError::SchemaError(const std::string& pointer, const std::string& message)
    : ValidationError((pointer.empty() ? std::string("/") : pointer) + ": " + message), pointer_(pointer) {}

// ----------------------------------------------------------------------------
// Graph JSON
// ----------------------------------------------------------------------------

ThreatBehaviorGraph parse_graph_json(std::string_view text) {
    const auto doc = parse_document(text);
    ThreatBehaviorGraph g;
    const auto& nodes = member(doc, "", "nodes", json::value_t::array);
    const auto& edges = member(doc, "", "edges", json::value_t::array);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto ptr = "/nodes/" + std::to_string(i);
        GraphNode n;
        n.id = member(nodes[i], ptr, "id", json::value_t::string).get<std::string>();
        const auto type = member(nodes[i], ptr, "ioc_type", json::value_t::string).get<std::string>();
        auto parsed = parse_ioc_type(type);
        if (!parsed) throw SchemaError(ptr + "/ioc_type", "unknown IOC type '" + type + "'");
        n.type = *parsed;
        n.value = member(nodes[i], ptr, "value", json::value_t::string).get<std::string>();
        if (n.value.empty()) throw SchemaError(ptr + "/value", "empty IOC value");
        if (!ids.insert(n.id).second) throw SchemaError(ptr + "/id", "duplicate node id '" + n.id + "'");
        g.nodes.push_back(std::move(n));
    }
    std::set<int> seqs;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const auto ptr = "/edges/" + std::to_string(i);
        GraphEdge e;
        e.src = member(edges[i], ptr, "src", json::value_t::string).get<std::string>();
        e.dst = member(edges[i], ptr, "dst", json::value_t::string).get<std::string>();
        e.relation = member(edges[i], ptr, "relation", json::value_t::string).get<std::string>();
        const auto& seq = member(edges[i], ptr, "seq", json::value_t::number_integer);
        if (seq.get<long long>() < 1 || seq.get<long long>() > 1'000'000'000)
            throw SchemaError(ptr + "/seq", "sequence number must be a positive integer");
        e.seq = seq.get<int>();
        if (!ids.count(e.src)) throw SchemaError(ptr + "/src", "unknown node '" + e.src + "'");
        if (!ids.count(e.dst)) throw SchemaError(ptr + "/dst", "unknown node '" + e.dst + "'");
        if (!seqs.insert(e.seq).second) throw SchemaError(ptr + "/seq", "duplicate sequence number");
        g.edges.push_back(std::move(e));
    }
    return g;
}

ThreatBehaviorGraph load_graph(const std::filesystem::path& file) { return parse_graph_json(read_file(file)); }

std::string graph_to_json(const ThreatBehaviorGraph& graph) {
    json doc{{"nodes", json::array()}, {"edges", json::array()}};
    for (const auto& n : graph.nodes)
        doc["nodes"].push_back({{"id", n.id}, {"ioc_type", std::string(to_string(n.type))}, {"value", n.value}});
    for (const auto& e : graph.edges)
        doc["edges"].push_back({{"src", e.src}, {"dst", e.dst}, {"relation", e.relation}, {"seq", e.seq}});
    return doc.dump(2);
}

// ----------------------------------------------------------------------------
// Rules
// ----------------------------------------------------------------------------

const MappingRule* RelationMappingRules::find(std::string_view verb, IocType src, IocType dst) const {
    for (const auto& r : rules)
        if (alternatives_match(r.verb, verb) && alternatives_match(r.srcType, to_string(src)) &&
            alternatives_match(r.dstType, to_string(dst)))
            return &r;
    return nullptr;
}

RelationMappingRules RelationMappingRules::defaults() {
    using Op = OperationType;
    constexpr auto W = RuleDirection::AsWritten;
    return {{
        {"download", "Filepath", "Filepath", EntityType::File, Op::Write, W},
        {"download", "Filepath", "IP", EntityType::Ip, Op::Read, W},
        {"download|receive|fetch", "*", "IP", EntityType::Ip, Op::Read, W},
        {"upload|send|exfiltrate|transfer", "*", "IP", EntityType::Ip, Op::Write, W},
        {"read|open|access", "*", "IP", EntityType::Ip, Op::Read, W},
        {"read|open|access", "*", "*", EntityType::File, Op::Read, W},
        {"write|create|modify|drop|save", "*", "IP", EntityType::Ip, Op::Write, W},
        {"write|create|modify|drop|save", "*", "*", EntityType::File, Op::Write, W},
        {"execute|run|launch", "*", "*", EntityType::File, Op::Execute, W},
        {"start|spawn|fork", "*", "*", EntityType::Proc, Op::Start, W},
        {"rename|move", "*", "*", EntityType::File, Op::Rename, W},
    }};
}

RelationMappingRules parse_rules_json(std::string_view text) {
    const auto doc = parse_document(text);
    if (!doc.is_array()) throw SchemaError("", "expected an array of rules");
    RelationMappingRules out;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto ptr = "/" + std::to_string(i);
        MappingRule r;
        r.verb = member(doc[i], ptr, "verb", json::value_t::string).get<std::string>();
        r.srcType = member(doc[i], ptr, "src", json::value_t::string).get<std::string>();
        r.dstType = member(doc[i], ptr, "dst", json::value_t::string).get<std::string>();
        r.object = parse_entity_type(member(doc[i], ptr, "object", json::value_t::string).get<std::string>(), ptr + "/object");
        const auto op = member(doc[i], ptr, "operation", json::value_t::string).get<std::string>();
        auto parsed = parse_operation(op);
        if (!parsed) throw SchemaError(ptr + "/operation", "unknown operation '" + op + "'");
        r.operation = *parsed;
        if (auto it = doc[i].find("direction"); it != doc[i].end()) {
            if (*it == "as_written")
                r.direction = RuleDirection::AsWritten;
            else if (*it == "inverted")
                r.direction = RuleDirection::Inverted;
            else
                throw SchemaError(ptr + "/direction", "expected \"as_written\" or \"inverted\"");
        }
        for (const auto& [field, pattern] : {std::pair{"src", &r.srcType}, std::pair{"dst", &r.dstType}}) {
            if (*pattern == "*") continue;
            std::size_t start = 0;
            while (start <= pattern->size()) {
                auto bar = pattern->find('|', start);
                if (bar == std::string::npos) bar = pattern->size();
                const auto name = pattern->substr(start, bar - start);
                if (!parse_ioc_type(name)) throw SchemaError(ptr + "/" + field, "unknown IOC type '" + name + "'");
                start = bar + 1;
            }
        }
        out.rules.push_back(std::move(r));
    }
    return out;
}

RelationMappingRules load_rules(const std::filesystem::path& file) { return parse_rules_json(read_file(file)); }

std::string rules_to_json(const RelationMappingRules& rules) {
    json doc = json::array();
    for (const auto& r : rules.rules)
        doc.push_back({{"verb", r.verb},
                       {"src", r.srcType},
                       {"dst", r.dstType},
                       {"object", std::string(tbql::keyword(r.object))},
                       {"operation", std::string(to_string(r.operation))},
                       {"direction", r.direction == RuleDirection::Inverted ? "inverted" : "as_written"}});
    return doc.dump(2);
}

// ----------------------------------------------------------------------------
// Plans
// ----------------------------------------------------------------------------

SynthesisPlan parse_plan_json(std::string_view text) {
    const auto doc = parse_document(text);
    if (!doc.is_object()) throw SchemaError("", "expected an object");
    SynthesisPlan plan;
    for (const auto& [key, value] : doc.items()) {
        const auto ptr = "/" + key;
        if (key == "use_path_patterns" || key == "wildcard_wrap") {
            if (!value.is_boolean()) throw SchemaError(ptr, "expected a boolean");
            (key == "wildcard_wrap" ? plan.wildcardWrap : plan.usePathPatterns) = value.get<bool>();
        } else if (key == "window") {
            if (!value.is_string()) throw SchemaError(ptr, "expected a TBQL window string");
            try {
                tbql::parse_window(value.get<std::string>());
            } catch (const ValidationError& e) {
                throw SchemaError(ptr, e.what());
            }
            plan.window = value.get<std::string>();
        } else if (key == "extra_attributes") {
            if (!value.is_array()) throw SchemaError(ptr, "expected an array of strings");
            for (std::size_t i = 0; i < value.size(); ++i) {
                if (!value[i].is_string()) throw SchemaError(ptr + "/" + std::to_string(i), "expected a string");
                try {
                    tbql::parse_attr_expr(value[i].get<std::string>());
                } catch (const ValidationError& e) {
                    throw SchemaError(ptr + "/" + std::to_string(i), e.what());
                }
                plan.extraAttributes.push_back(value[i].get<std::string>());
            }
        } else {
            throw SchemaError(ptr, "unknown plan option");
        }
    }
    return plan;
}

SynthesisPlan load_plan(const std::filesystem::path& file) { return parse_plan_json(read_file(file)); }

// ----------------------------------------------------------------------------
// Screening and synthesis
// ----------------------------------------------------------------------------

ScreenResult screen(const ThreatBehaviorGraph& graph, const RelationMappingRules& rules) {
    ScreenResult out;
    std::set<std::string> removed;
    for (const auto& n : graph.nodes) {
        if (is_supported_ioc(n.type)) continue;
        removed.insert(n.id);
        out.dropped.push_back({DroppedItem::Kind::Node, n.id, "unsupported ioc type"});
    }
    std::set<std::string> used;
    for (const auto& e : graph.edges) {
        if (removed.count(e.src) || removed.count(e.dst)) {
            out.dropped.push_back({DroppedItem::Kind::Edge, edge_label(e), "endpoint has unsupported ioc type"});
            continue;
        }
        const auto* rule = rules.find(e.relation, graph.node(e.src)->type, graph.node(e.dst)->type);
        if (!rule) {
            out.dropped.push_back({DroppedItem::Kind::Edge, edge_label(e), "no mapping rule for '" + e.relation + "'"});
            continue;
        }
        if (oriented(graph, e, rule->direction).first->type == IocType::IP) {
            out.dropped.push_back({DroppedItem::Kind::Edge, edge_label(e), "an IP cannot act as the subject"});
            continue;
        }
        out.graph.edges.push_back(e);
        used.insert(e.src);
        used.insert(e.dst);
    }
    for (const auto& n : graph.nodes) {
        if (removed.count(n.id)) continue;
        if (!used.count(n.id)) {
            out.dropped.push_back({DroppedItem::Kind::Node, n.id, "no remaining relations"});
            continue;
        }
        out.graph.nodes.push_back(n);
    }
    return out;
}

MappedRelation map_relation(const GraphEdge& edge, IocType src, IocType dst, const RelationMappingRules& rules) {
    const auto* rule = rules.find(edge.relation, src, dst);
    if (!rule) throw ContractViolation("no mapping rule for relation '" + edge.relation + "'");
    return {rule->object, rule->operation, rule->direction};
}

Synthesis synthesize(const ThreatBehaviorGraph& graph, const RelationMappingRules& rules, const SynthesisPlan& plan) {
    auto screened = screen(graph, rules);
    Synthesis out;
    out.dropped = std::move(screened.dropped);
    const auto& g = screened.graph;
    if (g.edges.empty()) throw SynthesisEmpty("no IOC relation survives screening");

    auto edges = g.edges;
    std::sort(edges.begin(), edges.end(), [](const GraphEdge& a, const GraphEdge& b) { return a.seq < b.seq; });

    auto& q = out.query;
    if (plan.window) q.globalFilters.emplace_back(tbql::parse_window(*plan.window));
    for (const auto& attr : plan.extraAttributes) q.globalFilters.emplace_back(tbql::parse_attr_expr(attr));

    std::map<std::pair<std::string, EntityType>, std::string> ids;
    std::map<EntityType, int> counters;
    auto declare = [&](const GraphNode& node, EntityType type) {
        tbql::EntityDecl d;
        d.type = type;
        auto [it, fresh] = ids.try_emplace({node.id, type});
        if (fresh) {
            const char prefix = type == EntityType::File ? 'f' : type == EntityType::Proc ? 'p' : 'i';
            it->second = prefix + std::to_string(++counters[type]);
            const bool wrap = plan.wildcardWrap && type != EntityType::Ip;
            d.filter = tbql::AttrExpr::make_leaf(tbql::AttrAtom::bare(wrap ? "%" + node.value + "%" : node.value));
            q.returns.items.push_back({it->second, std::nullopt});
        }
        d.id = it->second;
        return d;
    };

    std::vector<std::string> eventIds;
    for (const auto& e : edges) {
        const auto mapped = map_relation(e, g.node(e.src)->type, g.node(e.dst)->type, rules);
        const auto [subjectNode, objectNode] = oriented(g, e, mapped.direction);
        tbql::Pattern p;
        p.subject = declare(*subjectNode, EntityType::Proc);
        p.object = declare(*objectNode, objectNode->type == IocType::IP ? EntityType::Ip : mapped.object);
        const auto op = op_keyword(mapped.operation);
        if (plan.usePathPatterns) {
            tbql::PathSpec path;
            path.finalOp = tbql::OpExpr::make_leaf(op);
            p.connector = path;
        } else {
            p.connector = tbql::OpExpr::make_leaf(op);
        }
        p.id = "evt" + std::to_string(e.seq);
        eventIds.push_back(*p.id);
        q.patterns.push_back(std::move(p));
    }
    if (!plan.usePathPatterns)
        for (std::size_t i = 1; i < eventIds.size(); ++i)
            q.relations.emplace_back(tbql::TemporalRel{eventIds[i - 1], tbql::TemporalRel::Kind::Before, std::nullopt, eventIds[i]});

    tbql::validate(q);
    return out;
}

}  // namespace tbhunt
