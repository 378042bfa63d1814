#include "tbhunt/event_store.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

namespace tbhunt {

LoadError::LoadError(const std::string& what, std::size_t offset)
    : Error("snapshot load failed at offset " + std::to_string(offset) + ": " + what), offset_(offset) {}

// ----------------------------------------------------------------------------
// TimeRange
// ----------------------------------------------------------------------------

bool TimeRange::contains(const SystemEvent& e) const {
    if (startMin && e.startTime < *startMin) return false;
    if (startMax && e.startTime > *startMax) return false;
    if (endMin && e.endTime < *endMin) return false;
    if (endMax && e.endTime > *endMax) return false;
    return true;
}

void TimeRange::intersect(const TimeRange& o) {
    auto tighten_min = [](std::optional<Micros>& a, const std::optional<Micros>& b) {
        if (b && (!a || *b > *a)) a = b;
    };
    auto tighten_max = [](std::optional<Micros>& a, const std::optional<Micros>& b) {
        if (b && (!a || *b < *a)) a = b;
    };
    tighten_min(startMin, o.startMin);
    tighten_max(startMax, o.startMax);
    tighten_min(endMin, o.endMin);
    tighten_max(endMax, o.endMax);
}

// ----------------------------------------------------------------------------
// String index
// ----------------------------------------------------------------------------

namespace {

std::string_view literal_prefix(std::string_view pattern) {
    auto pos = pattern.find('%');
    return pos == std::string_view::npos ? pattern : pattern.substr(0, pos);
}

template <class Entries>
auto prefix_range(const Entries& entries, std::string_view prefix) {
    auto lo = std::lower_bound(entries.begin(), entries.end(), prefix,
                               [](const auto& e, std::string_view p) { return std::string_view(e.first) < p; });
    auto hi = lo;
    while (hi != entries.end() && std::string_view(hi->first).starts_with(prefix)) ++hi;
    return std::make_pair(lo, hi);
}

}  // namespace

void StoreSnapshot::StringIndex::lookup(std::string_view pattern, std::vector<EntityRow>& out) const {
    if (!has_wildcard(pattern)) {
        auto lo = std::lower_bound(entries.begin(), entries.end(), pattern,
                                   [](const auto& e, std::string_view p) { return std::string_view(e.first) < p; });
        for (; lo != entries.end() && lo->first == pattern; ++lo) out.push_back(lo->second);
        return;
    }
    auto [lo, hi] = prefix_range(entries, literal_prefix(pattern));
    for (; lo != hi; ++lo)
        if (wildcard_match(pattern, lo->first)) out.push_back(lo->second);
}

std::size_t StoreSnapshot::StringIndex::estimate(std::string_view pattern) const {
    const auto prefix = literal_prefix(pattern);
    if (prefix.empty()) return entries.size();
    auto [lo, hi] = prefix_range(entries, prefix);
    return static_cast<std::size_t>(hi - lo);
}

// ----------------------------------------------------------------------------
// Loading and index construction
// ----------------------------------------------------------------------------

StoreSnapshot StoreSnapshot::load(std::vector<SystemEntity> entities, std::vector<SystemEvent> events) {
    if (events.size() >= std::numeric_limits<EventRow>::max())
        throw IntegrityError("too many events for one snapshot");
    StoreSnapshot s;
    std::sort(entities.begin(), entities.end(),
              [](const SystemEntity& a, const SystemEntity& b) { return a.uid < b.uid; });
    for (std::size_t i = 0; i < entities.size(); ++i) {
        auto [it, inserted] = s.rowByUid_.emplace(to_underlying(entities[i].uid), static_cast<EntityRow>(i));
        if (!inserted)
            throw IntegrityError("duplicate entity uid " + std::to_string(to_underlying(entities[i].uid)));
    }
    std::unordered_set<std::uint64_t> ids;
    ids.reserve(events.size());
    for (const auto& e : events) {
        const auto name = "event " + std::to_string(to_underlying(e.id));
        auto subj = s.rowByUid_.find(to_underlying(e.subject));
        auto obj = s.rowByUid_.find(to_underlying(e.object));
        if (subj == s.rowByUid_.end())
            throw IntegrityError(name + " references unknown subject uid " + std::to_string(to_underlying(e.subject)));
        if (obj == s.rowByUid_.end())
            throw IntegrityError(name + " references unknown object uid " + std::to_string(to_underlying(e.object)));
        if (entities[subj->second].kind() != EntityKind::Process)
            throw IntegrityError(name + " has a non-process subject");
        if (e.category != category_for(entities[obj->second].kind()))
            throw IntegrityError(name + " category does not match its object kind");
        if (e.startTime > e.endTime) throw IntegrityError(name + " has startTime > endTime");
        if (!ids.insert(to_underlying(e.id)).second) throw IntegrityError("duplicate " + name);
    }
    std::stable_sort(events.begin(), events.end(), [](const SystemEvent& a, const SystemEvent& b) {
        return a.startTime != b.startTime ? a.startTime < b.startTime : a.id < b.id;
    });
    s.entities_ = std::move(entities);
    s.events_ = std::move(events);
    s.build_indexes();
    return s;
}

void StoreSnapshot::build_indexes() {
    const auto nEntities = entities_.size();
    for (auto& k : kindRows_) k.clear();
    for (auto& o : opRows_) o.clear();
    fileName_.entries.clear();
    filePath_.entries.clear();
    procExename_.entries.clear();
    netDstip_.entries.clear();
    rowByUid_.clear();

    for (EntityRow r = 0; r < nEntities; ++r) {
        const auto& e = entities_[r];
        rowByUid_.emplace(to_underlying(e.uid), r);
        kindRows_[static_cast<int>(e.kind())].push_back(r);
        if (const auto* f = e.file()) {
            fileName_.entries.emplace_back(f->name, r);
            filePath_.entries.emplace_back(f->path, r);
        } else if (const auto* p = e.process()) {
            procExename_.entries.emplace_back(p->exename, r);
        } else if (const auto* n = e.network()) {
            netDstip_.entries.emplace_back(n->dstip, r);
        }
    }
    for (auto* idx : {&fileName_, &filePath_, &procExename_, &netDstip_})
        std::sort(idx->entries.begin(), idx->entries.end());

    outOffsets_.assign(nEntities + 1, 0);
    inOffsets_.assign(nEntities + 1, 0);
    latestTime_ = 0;
    for (const auto& ev : events_) {
        ++outOffsets_[rowByUid_.at(to_underlying(ev.subject)) + 1];
        ++inOffsets_[rowByUid_.at(to_underlying(ev.object)) + 1];
        latestTime_ = std::max(latestTime_, ev.endTime);
    }
    std::partial_sum(outOffsets_.begin(), outOffsets_.end(), outOffsets_.begin());
    std::partial_sum(inOffsets_.begin(), inOffsets_.end(), inOffsets_.begin());
    outEdges_.assign(events_.size(), 0);
    inEdges_.assign(events_.size(), 0);
    std::vector<std::uint32_t> outFill(outOffsets_.begin(), outOffsets_.end() - 1);
    std::vector<std::uint32_t> inFill(inOffsets_.begin(), inOffsets_.end() - 1);
    for (EventRow r = 0; r < events_.size(); ++r) {
        const auto& ev = events_[r];
        outEdges_[outFill[rowByUid_.at(to_underlying(ev.subject))]++] = r;
        inEdges_[inFill[rowByUid_.at(to_underlying(ev.object))]++] = r;
        opRows_[static_cast<int>(ev.operation)].push_back(r);
    }
}

std::optional<EntityRow> StoreSnapshot::row_of(EntityUid uid) const {
    auto it = rowByUid_.find(to_underlying(uid));
    if (it == rowByUid_.end()) return std::nullopt;
    return it->second;
}

const SystemEntity& StoreSnapshot::entity(EntityUid uid) const {
    auto row = row_of(uid);
    if (!row) throw IntegrityError("unknown entity uid " + std::to_string(to_underlying(uid)));
    return entities_[*row];
}

std::span<const EventRow> StoreSnapshot::outgoing(EntityRow row) const {
    return {outEdges_.data() + outOffsets_[row], outOffsets_[row + 1] - outOffsets_[row]};
}

std::span<const EventRow> StoreSnapshot::incoming(EntityRow row) const {
    return {inEdges_.data() + inOffsets_[row], inOffsets_[row + 1] - inOffsets_[row]};
}

// ----------------------------------------------------------------------------
// Entity resolution
// ----------------------------------------------------------------------------

const StoreSnapshot::StringIndex* StoreSnapshot::index_for(EntityKind kind, std::string_view attribute) const {
    if (kind == EntityKind::File && attribute == "path") return &filePath_;
    if (kind == EntityKind::Process && attribute == "exename") return &procExename_;
    if (kind == EntityKind::NetworkConnection && attribute == "dstip") return &netDstip_;
    return nullptr;
}

std::optional<std::vector<EntityRow>> StoreSnapshot::indexed_candidates(const EntityFilter& filter) const {
    if (!filter.kind) return std::nullopt;
    const auto kind = *filter.kind;

    std::vector<const PredicateAtom*> conjuncts;
    if (filter.predicate.kind == Predicate::Kind::Atom) {
        conjuncts.push_back(&filter.predicate.leaf);
    } else if (filter.predicate.kind == Predicate::Kind::And) {
        for (const auto& c : filter.predicate.children)
            if (c.kind == Predicate::Kind::Atom) conjuncts.push_back(&c.leaf);
    }

    // Each usable atom yields a list of string patterns to look up; a file's
    // `name` is looked up in both the basename and path indexes.
    struct Plan {
        std::vector<std::pair<const StringIndex*, std::string>> lookups;
        std::size_t estimate = 0;
    };
    std::optional<Plan> best;
    for (const auto* atom : conjuncts) {
        std::vector<std::string> patterns;
        if (atom->kind == PredicateAtom::Kind::Compare && atom->op == CompareOp::Eq) {
            if (const auto* s = std::get_if<std::string>(&atom->value)) patterns.push_back(*s);
        } else if (atom->kind == PredicateAtom::Kind::InSet && !atom->negated) {
            bool allStrings = true;
            for (const auto& v : atom->values) {
                if (const auto* s = std::get_if<std::string>(&v))
                    patterns.push_back(*s);
                else
                    allStrings = false;
            }
            if (!allStrings) continue;
        }
        if (patterns.empty()) continue;
        std::vector<const StringIndex*> indexes;
        if (kind == EntityKind::File && atom->attribute == "name") {
            indexes = {&fileName_, &filePath_};
        } else if (const auto* idx = index_for(kind, atom->attribute)) {
            indexes = {idx};
        } else {
            continue;
        }
        Plan plan;
        for (const auto* idx : indexes) {
            for (const auto& p : patterns) {
                plan.estimate += idx->estimate(p);
                plan.lookups.emplace_back(idx, p);
            }
        }
        if (!best || plan.estimate < best->estimate) best = std::move(plan);
    }
    if (!best || best->estimate >= kindRows_[static_cast<int>(kind)].size()) return std::nullopt;
    std::vector<EntityRow> rows;
    for (const auto& [idx, pattern] : best->lookups) idx->lookup(pattern, rows);
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    return rows;
}

std::vector<EntityRow> StoreSnapshot::resolve_entities(const EntityFilter& filter, ScanStats* stats) const {
    std::vector<EntityRow> candidates;
    if (filter.uids) {
        for (auto uid : *filter.uids)
            if (auto r = row_of(uid)) candidates.push_back(*r);
        std::sort(candidates.begin(), candidates.end());
    } else if (auto indexed = indexed_candidates(filter)) {
        candidates = std::move(*indexed);
    } else if (filter.kind) {
        candidates = kindRows_[static_cast<int>(*filter.kind)];
    } else {
        candidates.resize(entities_.size());
        std::iota(candidates.begin(), candidates.end(), EntityRow{0});
    }
    if (stats) stats->entitiesExamined += candidates.size();
    std::vector<EntityRow> out;
    out.reserve(candidates.size());
    for (auto r : candidates) {
        const auto& e = entities_[r];
        if (filter.kind && e.kind() != *filter.kind) continue;
        if (!evaluate(filter.predicate, e)) continue;
        out.push_back(r);
    }
    return out;
}

// ----------------------------------------------------------------------------
// Event scans
// ----------------------------------------------------------------------------

namespace {

bool selective(const EntityFilter& f) { return !is_match_all(f.predicate) || f.uids.has_value(); }

/// Membership over entity rows, either materialised or checked lazily.
class EntitySet {
public:
    EntitySet(const EntityFilter& filter, std::span<const SystemEntity> entities)
        : filter_(&filter), entities_(entities) {}

    void materialise(const std::vector<EntityRow>& rows, std::size_t entityCount) {
        bits_.assign(entityCount, 0);
        for (auto r : rows) bits_[r] = 1;
        materialised_ = true;
    }

    bool contains(EntityRow row) const {
        if (materialised_) return bits_[row] != 0;
        const auto& e = entities_[row];
        if (filter_->kind && e.kind() != *filter_->kind) return false;
        return evaluate(filter_->predicate, e);
    }

private:
    const EntityFilter* filter_;
    std::span<const SystemEntity> entities_;
    std::vector<char> bits_;
    bool materialised_ = false;
};

}  // namespace

std::vector<EventRow> StoreSnapshot::scan_events(const EventFilter& filter, ScanStats* stats) const {
    const auto n = events_.size();
    enum class Access { Full, Operation, Time, Subject, Object };
    Access access = Access::Full;
    std::size_t bestCost = n;

    std::size_t opCost = 0;
    if (!filter.ops.is_all()) {
        for (auto op : kAllOperations)
            if (filter.ops.contains(op)) opCost += opRows_[static_cast<int>(op)].size();
        if (opCost < bestCost) {
            bestCost = opCost;
            access = Access::Operation;
        }
    }

    auto byStart = [this](EventRow r, Micros t) { return events_[r].startTime < t; };
    auto startGt = [this](Micros t, EventRow r) { return t < events_[r].startTime; };
    std::size_t timeLo = 0, timeHi = n;
    if (filter.window.startMin || filter.window.startMax) {
        if (filter.window.startMin)
            timeLo = static_cast<std::size_t>(
                std::partition_point(events_.begin(), events_.end(),
                                     [&](const SystemEvent& e) { return e.startTime < *filter.window.startMin; }) -
                events_.begin());
        if (filter.window.startMax)
            timeHi = static_cast<std::size_t>(
                std::partition_point(events_.begin(), events_.end(),
                                     [&](const SystemEvent& e) { return e.startTime <= *filter.window.startMax; }) -
                events_.begin());
        if (timeHi < timeLo) timeHi = timeLo;
        if (timeHi - timeLo < bestCost) {
            bestCost = timeHi - timeLo;
            access = Access::Time;
        }
    }

    EntitySet subjects(filter.subject, entities_);
    EntitySet objects(filter.object, entities_);
    std::vector<EntityRow> subjectRows, objectRows;
    if (selective(filter.subject)) {
        subjectRows = resolve_entities(filter.subject, stats);
        subjects.materialise(subjectRows, entities_.size());
        std::size_t cost = 0;
        for (auto r : subjectRows) cost += outOffsets_[r + 1] - outOffsets_[r];
        if (cost < bestCost) {
            bestCost = cost;
            access = Access::Subject;
        }
    }
    if (selective(filter.object)) {
        objectRows = resolve_entities(filter.object, stats);
        objects.materialise(objectRows, entities_.size());
        std::size_t cost = 0;
        for (auto r : objectRows) cost += inOffsets_[r + 1] - inOffsets_[r];
        if (cost < bestCost) {
            bestCost = cost;
            access = Access::Object;
        }
    }

    std::vector<EventRow> out;
    std::uint64_t examined = 0;
    auto consider = [&](EventRow r) {
        ++examined;
        const auto& e = events_[r];
        if (!filter.ops.contains(e.operation)) return;
        if (!filter.window.contains(e)) return;
        if (!subjects.contains(rowByUid_.at(to_underlying(e.subject)))) return;
        if (!objects.contains(rowByUid_.at(to_underlying(e.object)))) return;
        if (!is_match_all(filter.eventPredicate) && !evaluate(filter.eventPredicate, e)) return;
        out.push_back(r);
    };
    auto visit_adjacency = [&](const std::vector<EntityRow>& rows, const std::vector<std::uint32_t>& offsets,
                               const std::vector<EventRow>& edges) {
        std::vector<EventRow> cands;
        for (auto row : rows) {
            auto first = edges.begin() + offsets[row];
            auto last = edges.begin() + offsets[row + 1];
            if (filter.window.startMin) first = std::lower_bound(first, last, *filter.window.startMin, byStart);
            if (filter.window.startMax) last = std::upper_bound(first, last, *filter.window.startMax, startGt);
            cands.insert(cands.end(), first, last);
        }
        std::sort(cands.begin(), cands.end());
        for (auto r : cands) consider(r);
    };

    switch (access) {
        case Access::Full:
            for (EventRow r = 0; r < n; ++r) consider(r);
            break;
        case Access::Time:
            for (auto r = timeLo; r < timeHi; ++r) consider(static_cast<EventRow>(r));
            break;
        case Access::Operation: {
            std::vector<EventRow> cands;
            for (auto op : kAllOperations)
                if (filter.ops.contains(op)) {
                    const auto& rows = opRows_[static_cast<int>(op)];
                    cands.insert(cands.end(), rows.begin(), rows.end());
                }
            std::sort(cands.begin(), cands.end());
            for (auto r : cands) consider(r);
            break;
        }
        case Access::Subject:
            visit_adjacency(subjectRows, outOffsets_, outEdges_);
            break;
        case Access::Object:
            visit_adjacency(objectRows, inOffsets_, inEdges_);
            break;
    }
    if (stats) {
        stats->eventsExamined += examined;
        static constexpr const char* names[] = {"full-scan", "operation-index", "time-index", "subject-index",
                                                "object-index"};
        stats->lastAccessPath = names[static_cast<int>(access)];
    }
    return out;
}

// ----------------------------------------------------------------------------
// Path traversal
// ----------------------------------------------------------------------------

std::vector<EventPath> StoreSnapshot::traverse_paths(const PathQuery& q, const TraversalLimits& limits,
                                                     ScanStats* stats) const {
    if (q.minLength < 1) throw ValidationError("path minimum length must be >= 1");
    int maxLen = 0;
    if (q.maxLength) {
        maxLen = *q.maxLength;
    } else {
        if (!selective(q.target))
            throw ValidationError("unbounded path requires a constrained destination entity");
        maxLen = limits.pathCap;
    }
    if (maxLen < q.minLength) throw ValidationError("path minimum length exceeds maximum length");

    EntityFilter source = q.source;
    source.kind = EntityKind::Process;
    const auto sources = resolve_entities(source, stats);
    EntitySet targets(q.target, entities_);
    if (selective(q.target)) targets.materialise(resolve_entities(q.target, stats), entities_.size());

    std::vector<EventPath> out;
    EventPath path;
    std::uint64_t expansions = 0;
    auto byStart = [this](EventRow r, Micros t) { return events_[r].startTime < t; };

    auto dfs = [&](auto&& self, EntityRow at, Micros notBefore) -> void {
        auto first = outEdges_.begin() + outOffsets_[at];
        auto last = outEdges_.begin() + outOffsets_[at + 1];
        first = std::lower_bound(first, last, notBefore, byStart);
        for (auto it = first; it != last; ++it) {
            const EventRow r = *it;
            const auto& e = events_[r];
            if (!q.window.contains(e)) continue;
            if (std::find(path.begin(), path.end(), r) != path.end()) continue;
            if (limits.maxExpansions && expansions >= limits.maxExpansions)
                throw BudgetExceeded("path traversal exceeded " + std::to_string(limits.maxExpansions) + " expansions");
            ++expansions;
            path.push_back(r);
            const auto next = rowByUid_.at(to_underlying(e.object));
            const int len = static_cast<int>(path.size());
            if (len >= q.minLength && q.finalOps.contains(e.operation) && targets.contains(next) &&
                (is_match_all(q.finalEventPredicate) || evaluate(q.finalEventPredicate, e)))
                out.push_back(path);
            if (len < maxLen && entities_[next].kind() == EntityKind::Process) self(self, next, e.startTime);
            path.pop_back();
        }
    };
    try {
        for (auto s : sources) dfs(dfs, s, std::numeric_limits<Micros>::min());
    } catch (const BudgetExceeded&) {
        if (stats) stats->pathExpansions += expansions;
        throw;
    }
    if (stats) {
        stats->pathExpansions += expansions;
        stats->eventsExamined += expansions;
        stats->lastAccessPath = "adjacency-traversal";
    }
    return out;
}

// ----------------------------------------------------------------------------
// Consistency check
// ----------------------------------------------------------------------------

std::vector<std::string> StoreSnapshot::verify_indexes() const {
    std::vector<std::string> problems;
    StoreSnapshot fresh;
    fresh.entities_ = entities_;
    fresh.events_ = events_;
    fresh.build_indexes();
    if (fresh.rowByUid_ != rowByUid_) problems.emplace_back("uid map differs");
    for (int k = 0; k < 3; ++k)
        if (fresh.kindRows_[k] != kindRows_[k]) problems.emplace_back("kind index differs");
    for (int k = 0; k < 6; ++k)
        if (fresh.opRows_[k] != opRows_[k]) problems.emplace_back("operation index differs");
    if (fresh.outOffsets_ != outOffsets_ || fresh.outEdges_ != outEdges_) problems.emplace_back("outgoing adjacency differs");
    if (fresh.inOffsets_ != inOffsets_ || fresh.inEdges_ != inEdges_) problems.emplace_back("incoming adjacency differs");
    if (fresh.fileName_.entries != fileName_.entries || fresh.filePath_.entries != filePath_.entries ||
        fresh.procExename_.entries != procExename_.entries || fresh.netDstip_.entries != netDstip_.entries)
        problems.emplace_back("attribute index differs");
    // Every adjacency edge maps back to exactly one event row.
    std::vector<int> seen(events_.size(), 0);
    for (auto r : outEdges_) ++seen[r];
    for (std::size_t r = 0; r < seen.size(); ++r)
        if (seen[r] != 1) problems.push_back("event row " + std::to_string(r) + " appears " + std::to_string(seen[r]) + " times in adjacency");
    for (EntityRow row = 0; row < entities_.size(); ++row)
        for (auto r : outgoing(row))
            if (events_[r].subject != entities_[row].uid) problems.push_back("edge subject mismatch at row " + std::to_string(r));
    return problems;
}

}  // namespace tbhunt
