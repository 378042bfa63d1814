#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <json.hpp>

#include "generators.hpp"
#include "oracles.hpp"
#include "tbhunt/fuzzy_match.hpp"
#include "tbhunt/ingestion.hpp"
#include "tbhunt/query_planner.hpp"
#include "tbhunt/tbql/tbql.hpp"

using namespace tbhunt;

namespace {

StoreSnapshot demo_store() {
    auto log = parse_records(std::filesystem::path(TBHUNT_FIXTURES) / "demo_audit.ndjson");
    return StoreSnapshot::load(std::move(log.entities), reduce_events(log.events));
}

const char* kTypo = R"(proc p1["%/bin/tarr%"] read file f1["%/etc/passwd%"] as evt1
proc p1 write ip i1["192.168.29.128"] as evt2
with evt1 before evt2
return p1, f1, i1)";

oracle::Alignment as_oracle(const GraphAlignment& a) {
    oracle::Alignment o;
    for (const auto& [id, uid] : a.nodeMap) o.nodes[id] = uid;
    for (const auto& f : a.flows) o.flows.push_back(f.path);
    o.score = a.score;
    return o;
}

}  // namespace

TEST_CASE("edit distance") {
    CHECK(levenshtein("kitten", "sitting") == 3);
    CHECK(levenshtein("", "abc") == 3);
    CHECK(levenshtein("abc", "") == 3);
    CHECK(levenshtein("flaw", "lawn") == 2);
    CHECK(levenshtein("same", "same") == 0);
    testing::Rng rng(4);
    const std::string alphabet = "ab/%x";
    for (int i = 0; i < 500; ++i) {
        std::string a, b;
        for (auto n = testing::uniform(rng, 0, 12); n > 0; --n) a += alphabet[testing::uniform(rng, 0, 4)];
        for (auto n = testing::uniform(rng, 0, 12); n > 0; --n) b += alphabet[testing::uniform(rng, 0, 4)];
        CAPTURE(a);
        CAPTURE(b);
        CHECK(levenshtein(a, b) == oracle::levenshtein(a, b));
        CHECK(levenshtein(a, b) == levenshtein(b, a));
    }
}

TEST_CASE("IOC similarity") {
    CHECK(ioc_similarity("%/bin/tar%", "/bin/tar") == 1.0);
    CHECK(ioc_similarity("%/bin/tarr%", "/bin/tar") == doctest::Approx(1.0 - 1.0 / 9.0));
    CHECK(ioc_similarity("abc", "xyz") == 0.0);
    CHECK(ioc_similarity("%", "") == 1.0);
    CHECK(entity_similarity(make_file("/etc/passwd"), "passwd") == 1.0);
    CHECK(entity_similarity(make_file("/etc/passwd"), "/etc/passwdd") == doctest::Approx(1.0 - 1.0 / 12.0));
    CHECK(entity_similarity(make_process("/bin/sh", 1), "/bin/sh") == 1.0);
    CHECK(entity_similarity(make_network("1.1.1.1", 1, "8.8.8.8", 53, "udp"), "8.8.8.9") ==
          doctest::Approx(1.0 - 1.0 / 7.0));

    const auto ast = tbql::desugar(tbql::parse(kTypo));
    CHECK(query_ioc(ast, "p1") == std::optional<std::string>("%/bin/tarr%"));
    CHECK(query_ioc(ast, "i1") == std::optional<std::string>("192.168.29.128"));
    CHECK_FALSE(query_ioc(tbql::parse("proc p[pid = 3] read file f return p"), "p"));
}

TEST_CASE("influence counts downstream actors") {
    using O = OperationType;
    std::vector<SystemEntity> ents;
    for (std::uint32_t i = 0; i < 4; ++i) {
        auto p = make_process("/bin/p" + std::to_string(i), i);
        p.uid = EntityUid{i};
        ents.push_back(p);
    }
    auto f = make_file("/tmp/f");
    f.uid = EntityUid{4};
    ents.push_back(f);
    auto mk = [](std::uint64_t id, std::uint32_t s, std::uint32_t o, Micros t, bool file = false) {
        SystemEvent e;
        e.id = EventId{id};
        e.subject = EntityUid{s};
        e.object = EntityUid{o};
        e.category = file ? EventCategory::ProcessToFile : EventCategory::ProcessToProcess;
        e.operation = file ? O::Write : O::Start;
        e.startTime = e.endTime = t;
        return e;
    };
    const auto store =
        StoreSnapshot::load(ents, {mk(1, 0, 1, 1), mk(2, 1, 2, 2), mk(3, 2, 0, 3), mk(4, 0, 4, 4, true)});
    CHECK(flow_influence(store, {3}, EntityUid{0}) == 1);
    CHECK(flow_influence(store, {0, 1, 2, 3}, EntityUid{0}) == 3);
    CHECK(flow_influence(store, {0, 1}, EntityUid{0}) == 2);
}

TEST_CASE("the misspelt demo query is recovered") {
    const auto store = demo_store();
    const auto ast = tbql::parse(kTypo);
    CHECK(execute(build_plan(ast), store).rows.empty());
    const auto result = search_alignments(ast, store);
    CHECK_FALSE(result.budgetExhausted);
    REQUIRE(result.alignments.size() == 1);
    const auto& a = result.alignments[0];
    CHECK(a.score == doctest::Approx(1.0));
    REQUIRE(a.flows.size() == 2);
    CHECK(a.flows[0].path.size() == 1);
    CHECK(a.projected[0] == Value{std::string("/bin/tar")});
    const auto doc = nlohmann::json::parse(alignment_report_json(result, store));
    CHECK(doc.is_object());
}

TEST_CASE("search agrees with exhaustive enumeration") {
    testing::Rng rng(31);
    int nonEmpty = 0;
    for (int round = 0; round < 150; ++round) {
        testing::StoreParams params;
        params.processes = static_cast<std::size_t>(testing::uniform(rng, 2, 4));
        params.files = static_cast<std::size_t>(testing::uniform(rng, 2, 5));
        params.networks = static_cast<std::size_t>(testing::uniform(rng, 1, 3));
        params.events = static_cast<std::size_t>(testing::uniform(rng, 5, 40));
        params.processEventShare = 0.35;
        const auto store = testing::random_store(rng, params);
        const auto ast = testing::random_query(rng, store, 2);
        FuzzyOptions options;
        options.nodeThreshold = testing::coin(rng) ? 0.5 : 0.8;
        options.scoreThreshold = testing::coin(rng) ? 1.0 / 3.0 : 0.0;
        options.pathCap = 3;
        options.budget = 0;
        CAPTURE(tbql::pretty_print(ast));
        const auto result = search_alignments(ast, store, options);
        std::vector<oracle::Alignment> got;
        for (const auto& a : result.alignments) got.push_back(as_oracle(a));
        std::sort(got.begin(), got.end());
        const auto expected =
            oracle::fuzzy_enumerate(ast, store, options.nodeThreshold, options.scoreThreshold, options.pathCap);
        REQUIRE(got.size() == expected.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].nodes == expected[i].nodes);
            CHECK(got[i].flows == expected[i].flows);
            CHECK(std::abs(got[i].score - expected[i].score) < 1e-9);
        }
        if (!got.empty()) ++nonEmpty;
        for (std::size_t i = 1; i < result.alignments.size(); ++i)
            CHECK(result.alignments[i - 1].score >= result.alignments[i].score);
    }
    CHECK(nonEmpty > 20);
}

TEST_CASE("budget exhaustion returns partial results") {
    testing::Rng rng(2);
    auto params = testing::StoreParams{};
    params.events = 120;
    const auto store = testing::random_store(rng, params);
    const auto ast = tbql::parse("proc p read file f as e1\nproc p write ip i as e2\nreturn p, f, i");
    FuzzyOptions unlimited;
    unlimited.budget = 0;
    unlimited.pathCap = 2;
    const auto full = search_alignments(ast, store, unlimited);
    CHECK_FALSE(full.budgetExhausted);
    FuzzyOptions tight;
    tight.budget = 5;
    tight.pathCap = 2;
    const auto partial = search_alignments(ast, store, tight);
    CHECK(partial.budgetExhausted);
    CHECK(partial.alignments.size() <= full.alignments.size());
}
