#include "tbhunt/query_planner.hpp"

#include <algorithm>
#include <chrono>
#include <set>
#include <unordered_map>

#include "tbhunt/tbql/tbql.hpp"

namespace tbhunt {

using namespace tbql;

namespace {

using Clock = std::chrono::steady_clock;

double millis_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string pattern_label(const Pattern& p, std::size_t index) {
    return p.id ? *p.id : "#" + std::to_string(index + 1);
}

PredicateAtom to_predicate_atom(const AttrAtom& a, std::string_view defaultAttr) {
    PredicateAtom out;
    switch (a.kind) {
        case AttrAtom::Kind::Bare:
            return compare_atom(std::string(defaultAttr), CompareOp::Eq, a.value);
        case AttrAtom::Kind::Compare:
            return compare_atom(a.attr.member ? *a.attr.member : a.attr.head, a.op, a.value);
        case AttrAtom::Kind::InSet:
            out.kind = PredicateAtom::Kind::InSet;
            out.attribute = a.attr.member ? *a.attr.member : a.attr.head;
            out.values = a.values;
            out.negated = a.negated;
            return out;
    }
    return out;
}

Predicate to_predicate(const AttrExpr& e, std::string_view defaultAttr = {}) {
    using E = AttrExpr;
    std::vector<Predicate> parts;
    switch (e.kind) {
        case E::Kind::Atom:
            return Predicate::make_leaf(to_predicate_atom(e.leaf, defaultAttr));
        case E::Kind::Not:
            return Predicate::negate(to_predicate(e.children.front(), defaultAttr));
        case E::Kind::And:
        case E::Kind::Or:
            for (const auto& c : e.children) parts.push_back(to_predicate(c, defaultAttr));
            return e.kind == E::Kind::And ? Predicate::all_of(std::move(parts)) : Predicate::any_of(std::move(parts));
    }
    return match_all();
}

OpSet op_set(const OpExpr& e) {
    OpSet out = OpSet::none();
    for (auto op : kAllOperations) {
        const bool hit = e.evaluate([op](OpKeyword k) {
            switch (k) {
                case OpKeyword::Read: return op == OperationType::Read;
                case OpKeyword::Write: return op == OperationType::Write;
                case OpKeyword::Execute: return op == OperationType::Execute;
                case OpKeyword::Start: return op == OperationType::Start;
                case OpKeyword::End: return op == OperationType::End;
                case OpKeyword::Rename: return op == OperationType::Rename;
                case OpKeyword::Open: return op == OperationType::Read || op == OperationType::Write;
            }
            return false;
        });
        if (hit) out = out | OpSet::of(op);
    }
    return out;
}

/// Where a global attribute filter applies.
struct GlobalScope {
    enum class Kind { Entities, Events, Entity, Pattern } kind;
    std::string head;                // Entity / Pattern
    std::set<std::string> names;     // attribute names used
    const AttrExpr* expr = nullptr;
};

std::vector<GlobalScope> classify_globals(const QueryAst& ast, const std::map<std::string, EntityType>& types) {
    std::vector<GlobalScope> out;
    for (const auto& g : ast.globalFilters) {
        const auto* expr = std::get_if<AttrExpr>(&g);
        if (!expr) continue;
        std::set<std::string> heads, names;
        bool qualified = false, unqualified = false;
        expr->for_each_leaf([&](const AttrAtom& a) {
            if (a.attr.member) {
                qualified = true;
                heads.insert(a.attr.head);
                names.insert(*a.attr.member);
            } else {
                unqualified = true;
                names.insert(a.attr.head);
            }
        });
        const auto text = print_attr_expr(*expr);
        if (qualified && (unqualified || heads.size() != 1))
            throw SemanticError("global filter '" + text + "' must refer to a single entity or pattern");
        GlobalScope scope{GlobalScope::Kind::Entities, {}, names, expr};
        if (qualified) {
            scope.head = *heads.begin();
            scope.kind = types.count(scope.head) ? GlobalScope::Kind::Entity : GlobalScope::Kind::Pattern;
        } else {
            const bool allEvent = std::all_of(names.begin(), names.end(), [](const auto& n) { return is_event_attribute(n); });
            const bool anyEvent = std::any_of(names.begin(), names.end(), [](const auto& n) { return is_event_attribute(n); });
            if (anyEvent && !allEvent)
                throw SemanticError("global filter '" + text + "' mixes event and entity attributes");
            if (allEvent) scope.kind = GlobalScope::Kind::Events;
        }
        out.push_back(std::move(scope));
    }
    return out;
}

bool kind_has_all(EntityKind kind, const std::set<std::string>& names) {
    return std::all_of(names.begin(), names.end(), [kind](const auto& n) { return has_attribute(kind, n); });
}

/// Every attribute expression that constrains entity `id`.
std::vector<const AttrExpr*> entity_constraints(const QueryAst& ast, const std::string& id, EntityType type,
                                                const std::vector<GlobalScope>& globals) {
    std::vector<const AttrExpr*> out;
    for (const auto& p : ast.patterns)
        for (const auto* d : {&p.subject, &p.object})
            if (d->id == id && d->filter) out.push_back(&*d->filter);
    for (const auto& g : globals) {
        if (g.kind == GlobalScope::Kind::Entity && g.head == id) out.push_back(g.expr);
        if (g.kind == GlobalScope::Kind::Entities && kind_has_all(to_kind(type), g.names)) out.push_back(g.expr);
    }
    return out;
}

std::vector<const AttrExpr*> event_constraints(const Pattern& p, const std::vector<GlobalScope>& globals) {
    std::vector<const AttrExpr*> out;
    if (p.idFilter) out.push_back(&*p.idFilter);
    for (const auto& g : globals) {
        if (g.kind == GlobalScope::Kind::Events) out.push_back(g.expr);
        if (g.kind == GlobalScope::Kind::Pattern && p.id && g.head == *p.id) out.push_back(g.expr);
    }
    return out;
}

std::optional<AttrExpr> merge_exprs(const std::vector<const AttrExpr*>& exprs) {
    if (exprs.empty()) return std::nullopt;
    std::vector<AttrExpr> parts;
    for (const auto* e : exprs) parts.push_back(*e);
    return AttrExpr::all_of(std::move(parts));
}

}  // namespace

// ----------------------------------------------------------------------------
// Scoring and planning
// ----------------------------------------------------------------------------

int score_pattern(const Pattern& p, int pathCap) {
    std::size_t score = 0;
    if (p.subject.filter) score += p.subject.filter->leaf_count();
    if (p.object.filter) score += p.object.filter->leaf_count();
    if (p.idFilter) score += p.idFilter->leaf_count();
    if (p.window) ++score;
    if (const auto* ops = std::get_if<OpExpr>(&p.connector)) {
        score += ops->leaf_count();
    } else {
        const auto& path = std::get<PathSpec>(p.connector);
        if (path.finalOp) score += path.finalOp->leaf_count();
        if (auto maxLen = path.effective_max()) score += static_cast<std::size_t>(std::max(0, pathCap - *maxLen));
    }
    return static_cast<int>(score);
}

ExecutionPlan build_plan(const QueryAst& input, const PlannerOptions& options) {
    const QueryAst ast = desugar(input);
    ExecutionPlan plan;
    plan.entityTypes = entity_types(ast);
    for (const auto& [id, type] : plan.entityTypes) plan.entityIds.push_back(id);
    plan.joins = ast.sharedEntities;
    plan.relations = ast.relations;
    plan.returns = ast.returns;

    const auto globals = classify_globals(ast, plan.entityTypes);
    std::vector<TimeWindow> globalWindows;
    for (const auto& g : ast.globalFilters)
        if (const auto* w = std::get_if<TimeWindow>(&g)) globalWindows.push_back(*w);

    std::map<std::string, std::optional<AttrExpr>> effective;
    for (const auto& [id, type] : plan.entityTypes)
        effective[id] = merge_exprs(entity_constraints(ast, id, type, globals));

    auto entity_filter = [&](const EntityDecl& d) {
        EntityFilter f;
        f.kind = to_kind(d.type);
        if (const auto& e = effective[d.id]) f.predicate = to_predicate(*e, default_attribute(*f.kind));
        return f;
    };

    for (std::size_t i = 0; i < ast.patterns.size(); ++i) {
        const auto& p = ast.patterns[i];
        PatternPlan pp;
        pp.patternIndex = i;
        pp.label = pattern_label(p, i);
        if (p.id) plan.patternIds.emplace(*p.id, i);
        pp.subjectId = p.subject.id;
        pp.objectId = p.object.id;
        pp.isPath = p.is_path();
        pp.filter.subject = entity_filter(p.subject);
        pp.filter.object = entity_filter(p.object);
        const auto eventExpr = merge_exprs(event_constraints(p, globals));
        if (eventExpr) pp.filter.eventPredicate = to_predicate(*eventExpr);
        if (const auto* ops = std::get_if<OpExpr>(&p.connector)) {
            pp.filter.ops = op_set(*ops);
        } else {
            const auto& path = std::get<PathSpec>(p.connector);
            pp.minLength = path.effective_min();
            pp.maxLength = path.effective_max();
            if (path.finalOp) pp.filter.ops = op_set(*path.finalOp);
        }
        pp.windows = globalWindows;
        if (p.window) pp.windows.push_back(*p.window);

        Pattern scored = p;
        scored.subject.filter = effective[p.subject.id];
        scored.object.filter = effective[p.object.id];
        scored.idFilter = eventExpr;
        scored.window.reset();
        pp.pruningScore = score_pattern(scored, options.pathCap) + static_cast<int>(pp.windows.size());
        plan.patterns.push_back(std::move(pp));
    }

    for (const auto& shared : plan.joins)
        for (auto a : shared.patterns)
            for (auto b : shared.patterns)
                if (a != b) plan.patterns[a].dependencies.emplace_back(b, shared.id);

    plan.schedule.resize(plan.patterns.size());
    for (std::size_t i = 0; i < plan.schedule.size(); ++i) plan.schedule[i] = i;
    std::stable_sort(plan.schedule.begin(), plan.schedule.end(), [&](std::size_t a, std::size_t b) {
        return plan.patterns[a].pruningScore > plan.patterns[b].pruningScore;
    });
    return plan;
}

// ----------------------------------------------------------------------------
// Relations
// ----------------------------------------------------------------------------

TimeRange resolve_window(const TimeWindow& w, Micros latest) {
    TimeRange r;
    switch (w.kind) {
        case TimeWindow::Kind::FromTo:
            r.startMin = w.from;
            r.startMax = w.to;
            break;
        case TimeWindow::Kind::At:
            r.startMax = w.from;
            r.endMin = w.from;
            break;
        case TimeWindow::Kind::Before:
            r.startMax = w.from - 1;
            break;
        case TimeWindow::Kind::After:
            r.startMin = w.from + 1;
            break;
        case TimeWindow::Kind::Last:
            r.startMin = latest - w.amount * unit_micros(w.unit);
            break;
    }
    return r;
}

bool temporal_holds(const TemporalRel& rel, const PatternMatch& left, const PatternMatch& right) {
    auto in_bound = [&](Micros diff) {
        if (!rel.bound) return true;
        const auto unit = unit_micros(rel.bound->unit);
        return diff >= rel.bound->low * unit && diff <= rel.bound->high * unit;
    };
    switch (rel.kind) {
        case TemporalRel::Kind::Before:
            return left.end < right.start && in_bound(right.start - left.end);
        case TemporalRel::Kind::After:
            return right.end < left.start && in_bound(left.start - right.end);
        case TemporalRel::Kind::Within: {
            const auto diff = left.start > right.start ? left.start - right.start : right.start - left.start;
            return rel.bound && in_bound(diff);
        }
    }
    return false;
}

bool relation_compare(const Value& left, CompareOp op, const Value& right) {
    int cmp = 0;
    const auto* li = std::get_if<std::int64_t>(&left);
    const auto* ri = std::get_if<std::int64_t>(&right);
    if (li && ri) {
        cmp = *li < *ri ? -1 : (*li > *ri ? 1 : 0);
    } else {
        const auto ls = value_to_string(left), rs = value_to_string(right);
        cmp = ls.compare(rs);
        cmp = cmp < 0 ? -1 : (cmp > 0 ? 1 : 0);
    }
    switch (op) {
        case CompareOp::Eq: return cmp == 0;
        case CompareOp::Ne: return cmp != 0;
        case CompareOp::Lt: return cmp < 0;
        case CompareOp::Le: return cmp <= 0;
        case CompareOp::Gt: return cmp > 0;
        case CompareOp::Ge: return cmp >= 0;
    }
    return false;
}

// ----------------------------------------------------------------------------
// Execution
// ----------------------------------------------------------------------------

namespace {

constexpr std::size_t kUnbound = static_cast<std::size_t>(-1);

struct Executor {
    const ExecutionPlan& plan;
    const StoreSnapshot& store;
    const PlannerOptions& options;

    std::map<std::string, std::size_t> slot;  // entity id -> slot
    std::vector<std::vector<PatternMatch>> matches;

    /// Partial row: chosen match per pattern (kUnbound if not joined yet)
    /// plus the entity binding per slot.
    struct Partial {
        std::vector<std::size_t> match;
        std::vector<std::optional<EntityUid>> entity;
    };

    Executor(const ExecutionPlan& p, const StoreSnapshot& s, const PlannerOptions& o)
        : plan(p), store(s), options(o), matches(p.patterns.size()) {
        for (std::size_t i = 0; i < plan.entityIds.size(); ++i) slot[plan.entityIds[i]] = i;
    }

    std::optional<Value> attribute_of(const Partial& row, const AttrName& a) const {
        if (auto it = slot.find(a.head); it != slot.end()) {
            const auto uid = row.entity[it->second];
            if (!uid) return std::nullopt;
            const auto& e = store.entity(*uid);
            if (!a.member) return e.attribute(default_attribute(e.kind()));
            return e.attribute(*a.member);
        }
        const auto p = plan.patternIds.at(a.head);
        if (row.match[p] == kUnbound) return std::nullopt;
        const auto& m = matches[p][row.match[p]];
        return event_attribute(store.event(m.events.back()), *a.member);
    }

    bool relation_ready(const RelClause& rel, const Partial& row) const {
        auto bound = [&](const std::string& head) {
            if (auto it = slot.find(head); it != slot.end()) return row.entity[it->second].has_value();
            return row.match[plan.patternIds.at(head)] != kUnbound;
        };
        if (const auto* t = std::get_if<TemporalRel>(&rel)) return bound(t->left) && bound(t->right);
        const auto& a = std::get<AttributeRel>(rel);
        return bound(a.left.head) && bound(a.right.head);
    }

    bool relation_holds(const RelClause& rel, const Partial& row) const {
        if (const auto* t = std::get_if<TemporalRel>(&rel)) {
            const auto l = plan.patternIds.at(t->left), r = plan.patternIds.at(t->right);
            return temporal_holds(*t, matches[l][row.match[l]], matches[r][row.match[r]]);
        }
        const auto& a = std::get<AttributeRel>(rel);
        auto lv = attribute_of(row, a.left), rv = attribute_of(row, a.right);
        return lv && rv && relation_compare(*lv, a.op, *rv);
    }

    std::vector<PatternMatch> run_pattern(const PatternPlan& pp, const std::map<std::string, std::vector<EntityUid>>& bound,
                                          PatternStats& st) const {
        TimeRange window;
        for (const auto& w : pp.windows) window.intersect(resolve_window(w, store.latest_time()));
        EventFilter filter = pp.filter;
        filter.window = window;
        for (auto [id, target] : {std::pair{pp.subjectId, &filter.subject}, std::pair{pp.objectId, &filter.object}}) {
            auto it = bound.find(id);
            if (it == bound.end() || it->second.size() > options.propagationCap) continue;
            target->uids = it->second;
            st.pushedFilters.emplace_back(id, it->second.size());
        }

        ScanStats scan;
        std::vector<PatternMatch> out;
        if (!pp.isPath) {
            for (auto r : store.scan_events(filter, &scan)) {
                const auto& e = store.event(r);
                out.push_back({{r}, e.subject, e.object, e.startTime, e.endTime});
            }
        } else {
            PathQuery q;
            q.source = filter.subject;
            q.target = filter.object;
            q.minLength = pp.minLength;
            q.maxLength = pp.maxLength;
            if (q.maxLength) q.maxLength = std::min(*q.maxLength, options.pathCap);
            q.finalOps = filter.ops;
            q.window = filter.window;
            q.finalEventPredicate = filter.eventPredicate;
            TraversalLimits limits{options.pathCap, options.maxExpansions};
            for (auto& path : store.traverse_paths(q, limits, &scan)) {
                const auto& first = store.event(path.front());
                const auto& last = store.event(path.back());
                out.push_back({std::move(path), first.subject, last.object, first.startTime, last.endTime});
            }
        }
        st.eventsExamined = scan.eventsExamined;
        st.entitiesExamined = scan.entitiesExamined;
        st.pathExpansions = scan.pathExpansions;
        st.accessPath = scan.lastAccessPath;
        st.matches = out.size();
        return out;
    }

    BindingSet run() {
        BindingSet result;
        const auto t0 = Clock::now();
        auto& stats = result.stats;

        std::set<std::string> sharedIds;
        for (const auto& s : plan.joins) sharedIds.insert(s.id);
        std::map<std::string, std::vector<EntityUid>> bound;
        bool empty = false;
        for (auto pi : plan.schedule) {
            const auto& pp = plan.patterns[pi];
            PatternStats st;
            st.patternIndex = pi;
            const auto tp = Clock::now();
            matches[pi] = run_pattern(pp, options.propagate ? bound : decltype(bound){}, st);
            st.millis = millis_since(tp);
            stats.eventsExamined += st.eventsExamined;
            stats.patterns.push_back(std::move(st));
            for (const auto& [id, isSubject] : {std::pair{pp.subjectId, true}, std::pair{pp.objectId, false}}) {
                if (!sharedIds.count(id)) continue;
                std::vector<EntityUid> uids;
                for (const auto& m : matches[pi]) uids.push_back(isSubject ? m.subject : m.object);
                std::sort(uids.begin(), uids.end());
                uids.erase(std::unique(uids.begin(), uids.end()), uids.end());
                if (auto it = bound.find(id); it != bound.end()) {
                    std::vector<EntityUid> both;
                    std::set_intersection(it->second.begin(), it->second.end(), uids.begin(), uids.end(),
                                          std::back_inserter(both));
                    uids = std::move(both);
                }
                bound[id] = std::move(uids);
            }
            if (matches[pi].empty()) {
                empty = true;
                break;
            }
        }

        const auto tj = Clock::now();
        std::vector<Partial> rows;
        if (!empty) rows = join(stats);
        stats.joinMillis = millis_since(tj);

        for (const auto& a : plan.returns.items) result.columns.push_back(a.text());
        for (auto& row : rows) {
            BindingRow out;
            for (std::size_t p = 0; p < row.match.size(); ++p) out.patterns.push_back(matches[p][row.match[p]].events);
            for (const auto& uid : row.entity) out.entities.push_back(*uid);
            for (const auto& a : plan.returns.items) out.projected.push_back(attribute_of(row, a).value_or(Value{}));
            result.rows.push_back(std::move(out));
        }
        std::sort(result.rows.begin(), result.rows.end(),
                  [](const BindingRow& a, const BindingRow& b) { return a.patterns < b.patterns; });
        if (plan.returns.distinct) {
            std::set<std::vector<Value>> seen;
            std::erase_if(result.rows, [&](const BindingRow& r) { return !seen.insert(r.projected).second; });
        }
        stats.totalMillis = millis_since(t0);
        return result;
    }

    std::vector<Partial> join(ExecutionStats& stats) const {
        const auto nPatterns = plan.patterns.size();
        std::vector<bool> applied(plan.relations.size(), false);
        std::vector<Partial> rows{Partial{std::vector<std::size_t>(nPatterns, kUnbound),
                                          std::vector<std::optional<EntityUid>>(plan.entityIds.size())}};
        for (auto pi : plan.schedule) {
            const auto& pp = plan.patterns[pi];
            const auto s = slot.at(pp.subjectId), o = slot.at(pp.objectId);
            const bool subjBound = rows.front().entity[s].has_value();
            const bool objBound = rows.front().entity[o].has_value();

            // Hash the new pattern's matches on whichever endpoints are already bound.
            auto key = [&](std::optional<EntityUid> a, std::optional<EntityUid> b) {
                std::uint64_t k = 0;
                if (subjBound) k = to_underlying(*a);
                if (objBound) k = (k << 32) | to_underlying(*b);
                return k;
            };
            std::unordered_multimap<std::uint64_t, std::size_t> index;
            const auto& ms = matches[pi];
            for (std::size_t m = 0; m < ms.size(); ++m) {
                if (s == o && ms[m].subject != ms[m].object) continue;
                index.emplace(key(ms[m].subject, ms[m].object), m);
            }

            std::vector<Partial> next;
            for (const auto& row : rows) {
                auto [lo, hi] = index.equal_range(key(row.entity[s], row.entity[o]));
                for (auto it = lo; it != hi; ++it) {
                    Partial r = row;
                    r.match[pi] = it->second;
                    r.entity[s] = ms[it->second].subject;
                    r.entity[o] = ms[it->second].object;
                    next.push_back(std::move(r));
                }
            }
            rows = std::move(next);

            for (std::size_t k = 0; k < plan.relations.size(); ++k) {
                if (applied[k] || rows.empty() || !relation_ready(plan.relations[k], rows.front())) continue;
                applied[k] = true;
                std::erase_if(rows, [&](const Partial& r) { return !relation_holds(plan.relations[k], r); });
            }
            stats.joinRows += rows.size();
            if (rows.empty()) break;
        }
        return rows;
    }
};

}  // namespace

BindingSet execute(const ExecutionPlan& plan, const StoreSnapshot& snapshot, const PlannerOptions& options) {
    return Executor(plan, snapshot, options).run();
}

}  // namespace tbhunt
