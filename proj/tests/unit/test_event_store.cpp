#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "generators.hpp"
#include "oracles.hpp"
#include "tbhunt/event_store.hpp"
#include "tbhunt/ingestion.hpp"

using namespace tbhunt;

namespace {

SystemEvent ev(std::uint64_t id, std::uint32_t s, std::uint32_t o, OperationType op, Micros start,
               EventCategory cat = EventCategory::ProcessToFile) {
    SystemEvent e;
    e.id = EventId{id};
    e.subject = EntityUid{s};
    e.object = EntityUid{o};
    e.category = cat;
    e.operation = op;
    e.startTime = start;
    e.endTime = start + 1;
    return e;
}

std::vector<SystemEntity> small_entities() {
    auto p = make_process("/bin/tar", 1);
    p.uid = EntityUid{0};
    auto f = make_file("/etc/passwd");
    f.uid = EntityUid{1};
    auto q = make_process("/bin/sh", 2);
    q.uid = EntityUid{2};
    return {p, f, q};
}

Predicate eq(std::string attr, std::string v) {
    return Predicate::make_leaf(compare_atom(std::move(attr), CompareOp::Eq, Value{std::move(v)}));
}

EntityFilter random_entity_filter(testing::Rng& rng) {
    using namespace testing;
    EntityFilter f;
    switch (uniform(rng, 0, 5)) {
        case 0: break;
        case 1: f.kind = EntityKind::Process; f.predicate = eq("exename", pick(rng, kExenames)); break;
        case 2: f.kind = EntityKind::File; f.predicate = eq("name", "%" + pick(rng, kFilePaths).substr(5) + "%"); break;
        case 3: f.kind = EntityKind::NetworkConnection; f.predicate = eq("dstip", pick(rng, kDstIps)); break;
        case 4: f.predicate = eq("user", pick(rng, kUsers)); break;
        default: {
            std::vector<EntityUid> uids;
            for (int i = 0; i < 3; ++i) uids.push_back(EntityUid{static_cast<std::uint32_t>(uniform(rng, 0, 12))});
            std::sort(uids.begin(), uids.end());
            uids.erase(std::unique(uids.begin(), uids.end()), uids.end());
            f.uids = uids;
        }
    }
    return f;
}

TimeRange random_window(testing::Rng& rng) {
    using namespace testing;
    TimeRange w;
    if (coin(rng, 0.3)) w.startMin = kBaseTime + uniform(rng, 0, 300) * kMicrosPerSecond;
    if (coin(rng, 0.3)) w.startMax = kBaseTime + uniform(rng, 200, 600) * kMicrosPerSecond;
    if (coin(rng, 0.1)) w.endMax = kBaseTime + uniform(rng, 300, 600) * kMicrosPerSecond;
    return w;
}

OpSet random_ops(testing::Rng& rng) {
    if (testing::coin(rng)) return OpSet::all();
    OpSet s = OpSet::none();
    for (auto op : kAllOperations)
        if (testing::coin(rng, 0.4)) s = s | OpSet::of(op);
    return s;
}

}  // namespace

TEST_CASE("load rejects inconsistent tables") {
    using O = OperationType;
    auto ents = small_entities();
    CHECK_NOTHROW(StoreSnapshot::load(ents, {ev(1, 0, 1, O::Read, 5)}));

    CHECK_THROWS_WITH_AS(StoreSnapshot::load(ents, {ev(1, 0, 9, O::Read, 5)}),
                         "event 1 references unknown object uid 9", IntegrityError);
    CHECK_THROWS_WITH_AS(StoreSnapshot::load(ents, {ev(1, 7, 1, O::Read, 5)}),
                         "event 1 references unknown subject uid 7", IntegrityError);
    CHECK_THROWS_WITH_AS(StoreSnapshot::load(ents, {ev(1, 1, 0, O::Start, 5, EventCategory::ProcessToProcess)}),
                         "event 1 has a non-process subject", IntegrityError);
    CHECK_THROWS_WITH_AS(StoreSnapshot::load(ents, {ev(1, 0, 2, O::Start, 5)}),
                         "event 1 category does not match its object kind", IntegrityError);
    auto backwards = ev(1, 0, 1, O::Read, 5);
    backwards.endTime = 4;
    CHECK_THROWS_WITH_AS(StoreSnapshot::load(ents, {backwards}), "event 1 has startTime > endTime", IntegrityError);
    CHECK_THROWS_WITH_AS(StoreSnapshot::load(ents, {ev(1, 0, 1, O::Read, 5), ev(1, 0, 1, O::Write, 6)}),
                         "duplicate event 1", IntegrityError);
    ents.push_back(ents.front());
    CHECK_THROWS_WITH_AS(StoreSnapshot::load(ents, {}), "duplicate entity uid 0", IntegrityError);
}

TEST_CASE("load sorts events and tracks the latest time") {
    using O = OperationType;
    auto store = StoreSnapshot::load(small_entities(), {ev(2, 0, 1, O::Write, 50), ev(1, 0, 1, O::Read, 10)});
    CHECK(store.event(0).id == EventId{1});
    CHECK(store.event(1).id == EventId{2});
    CHECK(store.latest_time() == 51);
    CHECK(store.entity(EntityUid{2}).process()->exename == "/bin/sh");
    CHECK_THROWS_AS(store.entity(EntityUid{99}), IntegrityError);
    CHECK_FALSE(store.row_of(EntityUid{99}).has_value());
    CHECK(store.outgoing(0).size() == 2);
    CHECK(store.incoming(1).size() == 2);
    CHECK(store.verify_indexes().empty());
}

TEST_CASE("time ranges") {
    SystemEvent e;
    e.startTime = 10;
    e.endTime = 20;
    TimeRange w;
    CHECK(w.unbounded());
    CHECK(w.contains(e));
    w.startMin = 10;
    w.endMax = 20;
    CHECK(w.contains(e));
    TimeRange narrower;
    narrower.startMin = 11;
    w.intersect(narrower);
    CHECK(*w.startMin == 11);
    CHECK_FALSE(w.contains(e));
}

TEST_CASE("scans agree with a linear oracle") {
    testing::Rng rng(3);
    for (int round = 0; round < 40; ++round) {
        auto params = testing::StoreParams{};
        params.events = static_cast<std::size_t>(testing::uniform(rng, 0, 400));
        const auto store = testing::random_store(rng, params);
        REQUIRE(store.verify_indexes().empty());
        for (int q = 0; q < 25; ++q) {
            EventFilter f;
            f.subject = random_entity_filter(rng);
            f.object = random_entity_filter(rng);
            f.ops = random_ops(rng);
            f.window = random_window(rng);
            if (testing::coin(rng, 0.2))
                f.eventPredicate = Predicate::make_leaf(
                    compare_atom("amount", CompareOp::Gt, Value{std::int64_t{testing::uniform(rng, 0, 4000)}}));
            CAPTURE(round);
            CAPTURE(q);
            ScanStats stats;
            const auto got = store.scan_events(f, &stats);
            CHECK(got == oracle::scan(store, f));
            CHECK(stats.eventsExamined <= store.event_count());
            CHECK(std::is_sorted(got.begin(), got.end()));

            std::vector<EntityRow> expected;
            for (EntityRow r = 0; r < store.entity_count(); ++r)
                if (oracle::entity_matches(f.object, store.entity_at(r))) expected.push_back(r);
            CHECK(store.resolve_entities(f.object) == expected);
        }
    }
}

TEST_CASE("path traversal agrees with exhaustive extension") {
    testing::Rng rng(5);
    for (int round = 0; round < 30; ++round) {
        auto params = testing::StoreParams{};
        params.events = static_cast<std::size_t>(testing::uniform(rng, 0, 150));
        params.processEventShare = 0.35;
        const auto store = testing::random_store(rng, params);
        for (int q = 0; q < 15; ++q) {
            PathQuery pq;
            pq.source = random_entity_filter(rng);
            pq.target = random_entity_filter(rng);
            pq.minLength = static_cast<int>(testing::uniform(rng, 1, 3));
            if (testing::coin(rng, 0.7) || pq.target.unconstrained())
                pq.maxLength = pq.minLength + static_cast<int>(testing::uniform(rng, 0, 2));
            pq.finalOps = random_ops(rng);
            pq.window = random_window(rng);
            const int cap = 4;
            CAPTURE(round);
            CAPTURE(q);
            std::vector<EventPath> got;
            try {
                got = store.traverse_paths(pq, {cap, 0});
            } catch (const ValidationError&) {
                // Only a match-all target with no bound is refused.
                CHECK(!pq.maxLength);
                continue;
            }
            std::sort(got.begin(), got.end());
            CHECK(got == oracle::paths(store, pq, cap));
            for (const auto& p : got) {
                for (std::size_t i = 1; i < p.size(); ++i) {
                    CHECK(store.event(p[i]).subject == store.event(p[i - 1]).object);
                    CHECK(store.event(p[i]).startTime >= store.event(p[i - 1]).startTime);
                }
            }
        }
    }
}

TEST_CASE("traversal limits") {
    testing::Rng rng(8);
    auto params = testing::StoreParams{};
    params.events = 300;
    params.processEventShare = 0.4;
    const auto store = testing::random_store(rng, params);
    PathQuery pq;
    pq.maxLength = 3;
    CHECK_THROWS_AS(store.traverse_paths(pq, {8, 5}), BudgetExceeded);
    pq.minLength = 4;
    CHECK_THROWS_AS(store.traverse_paths(pq), ValidationError);
    pq.minLength = 0;
    CHECK_THROWS_AS(store.traverse_paths(pq), ValidationError);
    PathQuery unbounded;
    CHECK_THROWS_WITH_AS(store.traverse_paths(unbounded), "unbounded path requires a constrained destination entity",
                         ValidationError);
}

TEST_CASE("snapshot round trip") {
    testing::Rng rng(13);
    const auto store = testing::random_store(rng, testing::StoreParams{});
    const auto bytes = serialize(store);
    const auto back = deserialize(bytes);
    CHECK(std::equal(store.entities().begin(), store.entities().end(), back.entities().begin(),
                     back.entities().end()));
    CHECK(std::equal(store.events().begin(), store.events().end(), back.events().begin(), back.events().end()));
    CHECK(serialize(back) == bytes);
    CHECK(back.verify_indexes().empty());

    const auto file = std::filesystem::temp_directory_path() / "tbhunt_unit_snapshot.tbhs";
    persist(store, file);
    CHECK(serialize(restore(file)) == bytes);
    std::filesystem::remove(file);
    CHECK_THROWS_AS(restore("/nonexistent/snapshot.tbhs"), IoError);
}

TEST_CASE("corrupt snapshots are rejected with an offset") {
    testing::Rng rng(21);
    const auto bytes = serialize(testing::random_store(rng, testing::StoreParams{}));

    try {
        deserialize("XXXX" + bytes.substr(4));
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(e.offset() == 0);
    }
    auto wrongVersion = bytes;
    wrongVersion[4] = 9;
    try {
        deserialize(wrongVersion);
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(e.offset() == 4);
        CHECK(std::string(e.what()).find("unsupported snapshot version 9 (expected 1)") != std::string::npos);
    }
    CHECK_THROWS_AS(deserialize(bytes.substr(0, bytes.size() - 3)), LoadError);
    CHECK_THROWS_AS(deserialize(bytes + "z"), LoadError);
    CHECK_THROWS_AS(deserialize(""), LoadError);
    for (std::size_t cut = 0; cut < bytes.size(); cut += 97) CHECK_THROWS_AS(deserialize(bytes.substr(0, cut)), LoadError);
}
