#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tbhunt/synthesis.hpp"
#include "tbhunt/tbql/tbql.hpp"

using namespace tbhunt;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::filesystem::path kFixtures = TBHUNT_FIXTURES;

void expect_schema_error(const std::string& doc, const std::string& pointer) {
    CAPTURE(doc);
    try {
        parse_graph_json(doc);
        FAIL("expected a schema error");
    } catch (const SchemaError& e) {
        CHECK(e.pointer() == pointer);
    }
}

ThreatBehaviorGraph graph(std::vector<GraphNode> nodes, std::vector<GraphEdge> edges) {
    return {std::move(nodes), std::move(edges)};
}

}  // namespace

TEST_CASE("graph JSON round trip") {
    const auto g = load_graph(kFixtures / "data_leak_graph.json");
    REQUIRE(g.nodes.size() == 3);
    CHECK(g.nodes[2].type == IocType::IP);
    REQUIRE(g.edges.size() == 2);
    CHECK(g.edges[1].relation == "write");
    CHECK(parse_graph_json(graph_to_json(g)) == g);
    CHECK(g.node("n2")->value == "/etc/passwd");
    CHECK(g.node("zz") == nullptr);
}

TEST_CASE("graph schema errors carry a pointer") {
    expect_schema_error("{", "");
    expect_schema_error("[]", "");
    expect_schema_error(R"({"edges": []})", "/nodes");
    expect_schema_error(R"({"nodes": [{"id": "a", "ioc_type": "Bogus", "value": "x"}], "edges": []})",
                        "/nodes/0/ioc_type");
    expect_schema_error(R"({"nodes": [{"id": "a", "ioc_type": "IP", "value": ""}], "edges": []})", "/nodes/0/value");
    expect_schema_error(
        R"({"nodes": [{"id": "a", "ioc_type": "IP", "value": "1"}, {"id": "a", "ioc_type": "IP", "value": "2"}], "edges": []})",
        "/nodes/1/id");
    expect_schema_error(
        R"({"nodes": [{"id": "a", "ioc_type": "IP", "value": "1"}], "edges": [{"src": "a", "dst": "b", "relation": "x", "seq": 1}]})",
        "/edges/0/dst");
    expect_schema_error(
        R"({"nodes": [{"id": "a", "ioc_type": "IP", "value": "1"}], "edges": [{"src": "a", "dst": "a", "relation": "x", "seq": 0}]})",
        "/edges/0/seq");
    expect_schema_error(
        R"({"nodes": [{"id": "a", "ioc_type": "IP", "value": 1}], "edges": []})", "/nodes/0/value");
    CHECK_THROWS_WITH_AS(parse_graph_json(R"({"edges": []})"), "/nodes: missing required field", SchemaError);
}

TEST_CASE("default rules match the shipped config") {
    const auto defaults = RelationMappingRules::defaults();
    CHECK(load_rules(std::filesystem::path(TBHUNT_CONFIG) / "relation_rules.json") == defaults);
    CHECK(parse_rules_json(rules_to_json(defaults)) == defaults);

    const auto* fileDownload = defaults.find("download", IocType::Filepath, IocType::Filepath);
    REQUIRE(fileDownload);
    CHECK(fileDownload->object == tbql::EntityType::File);
    CHECK(fileDownload->operation == OperationType::Write);
    const auto* ipDownload = defaults.find("download", IocType::Filepath, IocType::IP);
    REQUIRE(ipDownload);
    CHECK(ipDownload->object == tbql::EntityType::Ip);
    CHECK(ipDownload->operation == OperationType::Read);
    CHECK(defaults.find("ponder", IocType::Filepath, IocType::Filepath) == nullptr);

    CHECK_THROWS_AS(parse_rules_json(R"([{"verb": "x", "src": "*", "dst": "*", "object": "file", "operation": "fly"}])"),
                    SchemaError);
    CHECK_THROWS_AS(map_relation({"a", "b", "ponder", 1}, IocType::Filepath, IocType::Filepath, defaults),
                    ContractViolation);
}

TEST_CASE("plan documents") {
    const auto plan = load_plan(std::filesystem::path(TBHUNT_CONFIG) / "synthesis_plan.json");
    CHECK_FALSE(plan.usePathPatterns);
    CHECK(plan.wildcardWrap);
    CHECK(plan.extraAttributes.empty());

    const auto full = parse_plan_json(R"({"window": "last 2 day", "extra_attributes": ["user = \"root\""]})");
    CHECK(full.window == std::optional<std::string>("last 2 day"));
    CHECK(full.extraAttributes.size() == 1);

    auto pointer_of = [](const char* doc) {
        try {
            parse_plan_json(doc);
        } catch (const SchemaError& e) {
            return e.pointer();
        }
        return std::string("<none>");
    };
    CHECK(pointer_of(R"({"use_path_patterns": 1})") == "/use_path_patterns");
    CHECK(pointer_of(R"({"window": "yesterday"})") == "/window");
    CHECK(pointer_of(R"({"extra_attributes": ["ok = 1", "= broken"]})") == "/extra_attributes/1");
    CHECK(pointer_of(R"({"colour": "blue"})") == "/colour");
}

TEST_CASE("the data leak graph synthesizes the demo query") {
    const auto s = synthesize(load_graph(kFixtures / "data_leak_graph.json"));
    CHECK(s.dropped.empty());
    const auto expected = tbql::parse(slurp(kFixtures / "data_leak_query.tbql"));
    CHECK(s.query == expected);
    CHECK(tbql::parse(tbql::pretty_print(s.query)) == s.query);
}

TEST_CASE("screening") {
    const auto g = graph(
        {{"a", IocType::Filepath, "/bin/sh"},
         {"b", IocType::Registry, "HKLM\\Run"},
         {"c", IocType::IP, "10.0.0.1"},
         {"d", IocType::Filepath, "/tmp/x"},
         {"e", IocType::Filename, "lonely"},
         {"f", IocType::Domain, "evil.example"}},
        {{"a", "b", "write", 1}, {"a", "d", "ponder", 2}, {"c", "d", "write", 3}, {"a", "c", "send", 4}});
    const auto r = screen(g, RelationMappingRules::defaults());
    std::map<std::string, std::string> reasons;
    for (const auto& d : r.dropped) reasons[d.id] = d.reason;
    CHECK(reasons["b"] == "unsupported ioc type");
    CHECK(reasons["f"] == "unsupported ioc type");
    CHECK(reasons["a->b#1"] == "endpoint has unsupported ioc type");
    CHECK(reasons["a->d#2"] == "no mapping rule for 'ponder'");
    CHECK(reasons["c->d#3"] == "an IP cannot act as the subject");
    CHECK(reasons["d"] == "no remaining relations");
    CHECK(reasons["e"] == "no remaining relations");
    REQUIRE(r.graph.edges.size() == 1);
    CHECK(r.graph.edges[0].seq == 4);
    CHECK(r.graph.nodes.size() == 2);
}

TEST_CASE("nothing left to synthesize") {
    CHECK_THROWS_AS(synthesize(load_graph(kFixtures / "registry_only_graph.json")), SynthesisEmpty);
    CHECK_THROWS_AS(synthesize(graph({{"a", IocType::Filepath, "/x"}}, {})), SynthesisEmpty);
}

TEST_CASE("a self-loop run edge executes the file") {
    const auto s = synthesize(graph({{"n1", IocType::Filepath, "/tmp/x.sh"}}, {{"n1", "n1", "run", 1}}));
    CHECK(s.query == tbql::parse(R"(proc p1["%/tmp/x.sh%"] execute file f1["%/tmp/x.sh%"] as evt1 return p1, f1)"));
}

TEST_CASE("download edges") {
    const auto s = synthesize(graph({{"n1", IocType::Filepath, "/usr/bin/wget"},
                                     {"n2", IocType::Filepath, "/tmp/payload"},
                                     {"n3", IocType::IP, "203.0.113.7"}},
                                    {{"n1", "n2", "download", 1}, {"n1", "n3", "download", 2}}));
    CHECK(s.query == tbql::parse(R"(proc p1["%/usr/bin/wget%"] write file f1["%/tmp/payload%"] as evt1
proc p1 read ip i1["203.0.113.7"] as evt2
with evt1 before evt2
return p1, f1, i1)"));
}

TEST_CASE("plan options shape the query") {
    SynthesisPlan plan;
    plan.usePathPatterns = true;
    plan.wildcardWrap = false;
    plan.window = "last 2 day";
    plan.extraAttributes = {"user = \"root\""};
    const auto s = synthesize(load_graph(kFixtures / "data_leak_graph.json"), RelationMappingRules::defaults(), plan);
    CHECK(s.query == tbql::parse(R"(last 2 day
user = "root"
proc p1["/bin/tar"] ~>[read] file f1["/etc/passwd"] as evt1
proc p1 ~>[write] ip i1["192.168.29.128"] as evt2
return p1, f1, i1)"));
}
