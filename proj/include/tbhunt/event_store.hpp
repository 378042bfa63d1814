#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tbhunt/audit_model.hpp"
#include "tbhunt/predicate.hpp"

namespace tbhunt {

class IntegrityError : public Error {
public:
    using Error::Error;
};

/// Snapshot file could not be decoded.
class LoadError : public Error {
public:
    LoadError(const std::string& what, std::size_t offset);
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class BudgetExceeded : public Error {
public:
    using Error::Error;
};

/// Row index into the snapshot's events table (sorted by startTime).
using EventRow = std::uint32_t;
/// Row index into the snapshot's entities table (sorted by uid).
using EntityRow = std::uint32_t;

/// Bit set over OperationType.
class OpSet {
public:
    constexpr OpSet() = default;
    static constexpr OpSet all() { return OpSet(0x3F); }
    static constexpr OpSet none() { return OpSet(0); }
    static constexpr OpSet of(OperationType op) { return OpSet(static_cast<std::uint8_t>(1u << static_cast<unsigned>(op))); }

    constexpr bool contains(OperationType op) const { return (bits_ >> static_cast<unsigned>(op)) & 1u; }
    constexpr bool is_all() const { return bits_ == 0x3F; }
    constexpr bool empty() const { return bits_ == 0; }
    constexpr std::uint8_t bits() const { return bits_; }

    constexpr OpSet operator|(OpSet o) const { return OpSet(bits_ | o.bits_); }
    constexpr OpSet operator&(OpSet o) const { return OpSet(bits_ & o.bits_); }
    constexpr OpSet operator~() const { return OpSet(static_cast<std::uint8_t>(~bits_ & 0x3F)); }
    constexpr bool operator==(const OpSet&) const = default;

private:
    constexpr explicit OpSet(std::uint8_t bits) : bits_(bits) {}
    std::uint8_t bits_ = 0x3F;
};

/// Inclusive bounds on an event's start and end times.
struct TimeRange {
    std::optional<Micros> startMin, startMax, endMin, endMax;

    bool contains(const SystemEvent& e) const;
    bool unbounded() const { return !startMin && !startMax && !endMin && !endMax; }
    void intersect(const TimeRange& other);
    bool operator==(const TimeRange&) const = default;
};

struct EntityFilter {
    std::optional<EntityKind> kind;
    Predicate predicate = match_all();
    /// Restricts to these uids (sorted, unique) when set.
    std::optional<std::vector<EntityUid>> uids;

    bool unconstrained() const { return !kind && is_match_all(predicate) && !uids; }
};

struct EventFilter {
    EntityFilter subject;
    EntityFilter object;
    OpSet ops = OpSet::all();
    TimeRange window;
    Predicate eventPredicate = match_all();
};

struct PathQuery {
    EntityFilter source;
    EntityFilter target;
    int minLength = 1;
    std::optional<int> maxLength;  // nullopt = unbounded (clamped to the cap)
    OpSet finalOps = OpSet::all();
    TimeRange window;              // applies to every hop
    Predicate finalEventPredicate = match_all();
};

struct TraversalLimits {
    int pathCap = 8;
    std::uint64_t maxExpansions = 0;  // 0 = unlimited
};

/// Sequence of event rows, head first.
using EventPath = std::vector<EventRow>;

/// Counters filled in by scans; callers own them.
struct ScanStats {
    std::uint64_t eventsExamined = 0;
    std::uint64_t entitiesExamined = 0;
    std::uint64_t pathExpansions = 0;
    std::string lastAccessPath;
};

/// Immutable dual-index store: tables with secondary indexes for
/// join-style pattern evaluation plus adjacency lists for path traversal.
class StoreSnapshot {
public:
    StoreSnapshot() = default;

    /// Builds all indexes. Throws IntegrityError if an event references an
    /// unknown entity, an entity uid is duplicated, or an event is
    /// inconsistent (non-process subject, wrong category, start > end).
    static StoreSnapshot load(std::vector<SystemEntity> entities, std::vector<SystemEvent> events);

    std::span<const SystemEntity> entities() const { return entities_; }
    std::span<const SystemEvent> events() const { return events_; }
    std::size_t entity_count() const { return entities_.size(); }
    std::size_t event_count() const { return events_.size(); }

    const SystemEvent& event(EventRow row) const { return events_[row]; }
    const SystemEntity& entity_at(EntityRow row) const { return entities_[row]; }
    std::optional<EntityRow> row_of(EntityUid uid) const;
    const SystemEntity& entity(EntityUid uid) const;

    /// Latest endTime in the store; reference point for `last <n> <unit>`.
    Micros latest_time() const { return latestTime_; }

    /// Entity rows satisfying the filter, ascending.
    std::vector<EntityRow> resolve_entities(const EntityFilter& filter, ScanStats* stats = nullptr) const;

    /// All and only matching events, in startTime order.
    std::vector<EventRow> scan_events(const EventFilter& filter, ScanStats* stats = nullptr) const;

    /// Causally ordered paths: consecutive hops share the intermediate
    /// entity, start times never decrease, no event repeats.
    std::vector<EventPath> traverse_paths(const PathQuery& query, const TraversalLimits& limits = {},
                                          ScanStats* stats = nullptr) const;

    std::span<const EventRow> outgoing(EntityRow row) const;
    std::span<const EventRow> incoming(EntityRow row) const;

    /// Rebuilds every index from the tables and compares; returns a list of
    /// discrepancies (empty when consistent).
    std::vector<std::string> verify_indexes() const;

private:
    struct StringIndex {
        std::vector<std::pair<std::string, EntityRow>> entries;  // sorted
        void lookup(std::string_view pattern, std::vector<EntityRow>& out) const;
        std::size_t estimate(std::string_view pattern) const;
    };

    void build_indexes();
    const StringIndex* index_for(EntityKind kind, std::string_view attribute) const;
    std::optional<std::vector<EntityRow>> indexed_candidates(const EntityFilter& filter) const;

    std::vector<SystemEntity> entities_;
    std::vector<SystemEvent> events_;
    std::unordered_map<std::uint32_t, EntityRow> rowByUid_;
    std::vector<EntityRow> kindRows_[3];

    // CSR adjacency: offsets have entity_count()+1 entries.
    std::vector<std::uint32_t> outOffsets_, inOffsets_;
    std::vector<EventRow> outEdges_, inEdges_;
    std::vector<EventRow> opRows_[6];

    StringIndex fileName_, filePath_, procExename_, netDstip_;
    Micros latestTime_ = 0;
};

/// Binary snapshot: "TBHS" magic, u32 version, entity table, event table;
/// integers little-endian, strings u32-length-prefixed.
std::string serialize(const StoreSnapshot& snapshot);
StoreSnapshot deserialize(std::string_view bytes);

void persist(const StoreSnapshot& snapshot, const std::filesystem::path& file);
StoreSnapshot restore(const std::filesystem::path& file);

inline constexpr std::uint32_t kSnapshotVersion = 1;

}  // namespace tbhunt
