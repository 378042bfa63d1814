#include "oracles.hpp"

#include <algorithm>
#include <functional>
#include <random>
#include <set>

#include "tbhunt/predicate.hpp"

namespace tbhunt::oracle {

using namespace tbql;

namespace {

bool in_range(const TimeRange& r, const SystemEvent& e) {
    if (r.startMin && e.startTime < *r.startMin) return false;
    if (r.startMax && e.startTime > *r.startMax) return false;
    if (r.endMin && e.endTime < *r.endMin) return false;
    if (r.endMax && e.endTime > *r.endMax) return false;
    return true;
}

std::map<EntityUid, std::vector<EventRow>> rows_by_subject(const StoreSnapshot& store) {
    std::map<EntityUid, std::vector<EventRow>> out;
    for (EventRow r = 0; r < store.event_count(); ++r) out[store.event(r).subject].push_back(r);
    return out;
}

/// Depth-first extension shared by the path oracles. `first` decides which
/// events may start a path, `hop` which may appear anywhere, `accept` which
/// complete paths are reported.
void extend_paths(const StoreSnapshot& store, const std::map<EntityUid, std::vector<EventRow>>& bySubject, int minLen,
                  int maxLen, const std::function<bool(const SystemEvent&)>& first,
                  const std::function<bool(const SystemEvent&)>& hop,
                  const std::function<bool(const EventPath&)>& accept, std::vector<EventPath>& out) {
    EventPath path;
    std::function<void()> grow = [&] {
        const auto& last = store.event(path.back());
        const int len = static_cast<int>(path.size());
        if (len >= minLen && accept(path)) out.push_back(path);
        if (len >= maxLen) return;
        auto it = bySubject.find(last.object);
        if (it == bySubject.end()) return;
        for (auto r : it->second) {
            const auto& e = store.event(r);
            if (e.startTime < last.startTime || !hop(e)) continue;
            if (std::find(path.begin(), path.end(), r) != path.end()) continue;
            path.push_back(r);
            grow();
            path.pop_back();
        }
    };
    for (EventRow r = 0; r < store.event_count(); ++r) {
        const auto& e = store.event(r);
        if (!first(e) || !hop(e)) continue;
        path.assign(1, r);
        grow();
    }
}

}  // namespace

bool entity_matches(const EntityFilter& f, const SystemEntity& e) {
    if (f.kind && e.kind() != *f.kind) return false;
    if (f.uids && std::find(f.uids->begin(), f.uids->end(), e.uid) == f.uids->end()) return false;
    return evaluate(f.predicate, e);
}

std::vector<EventRow> scan(const StoreSnapshot& store, const EventFilter& f) {
    std::vector<EventRow> out;
    for (EventRow r = 0; r < store.event_count(); ++r) {
        const auto& e = store.event(r);
        if (!f.ops.contains(e.operation) || !in_range(f.window, e)) continue;
        if (!entity_matches(f.subject, store.entity(e.subject)) || !entity_matches(f.object, store.entity(e.object))) continue;
        if (!evaluate(f.eventPredicate, e)) continue;
        out.push_back(r);
    }
    return out;
}

std::vector<EventPath> paths(const StoreSnapshot& store, const PathQuery& q, int pathCap) {
    EntityFilter source = q.source;
    source.kind = EntityKind::Process;
    std::vector<EventPath> out;
    extend_paths(
        store, rows_by_subject(store), q.minLength, q.maxLength.value_or(pathCap),
        [&](const SystemEvent& e) { return entity_matches(source, store.entity(e.subject)); },
        [&](const SystemEvent& e) { return in_range(q.window, e); },
        [&](const EventPath& p) {
            const auto& e = store.event(p.back());
            return q.finalOps.contains(e.operation) && entity_matches(q.target, store.entity(e.object)) &&
                   evaluate(q.finalEventPredicate, e);
        },
        out);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<SystemEvent> reduce_fixpoint(const std::vector<SystemEvent>& events, Micros threshold, std::uint64_t seed) {
    struct Item {
        std::size_t position;
        SystemEvent event;
    };
    std::map<std::tuple<EntityUid, EntityUid, OperationType>, std::vector<Item>> groups;
    for (std::size_t i = 0; i < events.size(); ++i)
        groups[{events[i].subject, events[i].object, events[i].operation}].push_back({i, events[i]});

    std::mt19937_64 rng(seed);
    while (true) {
        std::vector<std::pair<std::vector<Item>*, std::size_t>> candidates;
        for (auto& [key, items] : groups)
            for (std::size_t i = 0; i + 1 < items.size(); ++i) {
                const Micros gap = items[i + 1].event.startTime - items[i].event.endTime;
                if (gap >= 0 && gap <= threshold) candidates.emplace_back(&items, i);
            }
        if (candidates.empty()) break;
        auto [items, i] = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
        auto& a = (*items)[i].event;
        const auto& b = (*items)[i + 1].event;
        a.endTime = b.endTime;
        a.dataAmount += b.dataAmount;
        items->erase(items->begin() + static_cast<std::ptrdiff_t>(i) + 1);
    }
    std::vector<Item> all;
    for (auto& [key, items] : groups) all.insert(all.end(), items.begin(), items.end());
    std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.position < b.position; });
    std::vector<SystemEvent> out;
    for (auto& it : all) out.push_back(it.event);
    return out;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
    std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j)
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
    return d[a.size()][b.size()];
}

// ----------------------------------------------------------------------------
// Query evaluation
// ----------------------------------------------------------------------------

namespace {

bool value_test(const AttrAtom& a, const Value& v) {
    switch (a.kind) {
        case AttrAtom::Kind::Bare:
            return compare_values(v, CompareOp::Eq, a.value);
        case AttrAtom::Kind::Compare:
            return compare_values(v, a.op, a.value);
        case AttrAtom::Kind::InSet: {
            bool any = false;
            for (const auto& x : a.values) any = any || compare_values(v, CompareOp::Eq, x);
            return any != a.negated;
        }
    }
    return false;
}

std::string atom_attribute(const AttrAtom& a) { return a.attr.member ? *a.attr.member : a.attr.head; }

bool entity_atom(const AttrAtom& a, const SystemEntity& e) {
    const auto attr = a.kind == AttrAtom::Kind::Bare ? std::string(default_attribute(e.kind())) : atom_attribute(a);
    std::vector<Value> forms;
    if (const auto* f = e.file(); f && attr == "name") {
        forms = {f->name, f->path};
    } else if (auto v = e.attribute(attr)) {
        forms = {*v};
    } else {
        return false;
    }
    const bool negative = (a.kind == AttrAtom::Kind::Compare && a.op == CompareOp::Ne) ||
                          (a.kind == AttrAtom::Kind::InSet && a.negated);
    auto test = [&](const Value& v) { return value_test(a, v); };
    return negative ? std::all_of(forms.begin(), forms.end(), test) : std::any_of(forms.begin(), forms.end(), test);
}

bool event_atom(const AttrAtom& a, const SystemEvent& e) {
    auto v = event_attribute(e, atom_attribute(a));
    return v && value_test(a, *v);
}

bool op_matches(const OpExpr& ops, OperationType op) {
    return ops.evaluate([op](OpKeyword k) {
        if (k == OpKeyword::Open) return op == OperationType::Read || op == OperationType::Write;
        return keyword(k) == to_string(op);
    });
}

bool window_holds(const TimeWindow& w, const SystemEvent& e, Micros latest) {
    switch (w.kind) {
        case TimeWindow::Kind::FromTo: return e.startTime >= w.from && e.startTime <= w.to;
        case TimeWindow::Kind::At: return e.startTime <= w.from && w.from <= e.endTime;
        case TimeWindow::Kind::Before: return e.startTime < w.from;
        case TimeWindow::Kind::After: return e.startTime > w.from;
        case TimeWindow::Kind::Last: return e.startTime >= latest - w.amount * unit_micros(w.unit);
    }
    return false;
}

struct Candidate {
    EventPath path;
    EntityUid subject{}, object{};
    Micros start = 0, end = 0;
};

/// Everything the evaluator needs, resolved once from the AST.
struct Compiled {
    std::map<std::string, EntityType> types;
    std::map<std::string, std::size_t> patternIds;
    std::map<std::string, std::vector<AttrExpr>> entityConstraints;
    std::vector<std::vector<AttrExpr>> eventConstraints;  // per pattern
    std::vector<std::vector<TimeWindow>> windows;          // per pattern
    Micros latest = 0;

    Compiled(const QueryAst& ast, const StoreSnapshot& store) {
        for (const auto& e : store.events()) latest = std::max(latest, e.endTime);
        for (std::size_t i = 0; i < ast.patterns.size(); ++i) {
            const auto& p = ast.patterns[i];
            for (const auto* d : {&p.subject, &p.object}) {
                types[d->id] = d->type;
                if (d->filter) entityConstraints[d->id].push_back(*d->filter);
            }
            if (p.id) patternIds[*p.id] = i;
        }
        eventConstraints.resize(ast.patterns.size());
        windows.resize(ast.patterns.size());
        for (std::size_t i = 0; i < ast.patterns.size(); ++i) {
            if (ast.patterns[i].idFilter) eventConstraints[i].push_back(*ast.patterns[i].idFilter);
            if (ast.patterns[i].window) windows[i].push_back(*ast.patterns[i].window);
        }
        for (const auto& g : ast.globalFilters) {
            if (const auto* w = std::get_if<TimeWindow>(&g)) {
                for (auto& ws : windows) ws.push_back(*w);
                continue;
            }
            const auto& expr = std::get<AttrExpr>(g);
            std::optional<std::string> head;
            std::set<std::string> names;
            expr.for_each_leaf([&](const AttrAtom& a) {
                if (a.attr.member) head = a.attr.head;
                names.insert(atom_attribute(a));
            });
            if (head) {
                if (types.count(*head)) {
                    entityConstraints[*head].push_back(expr);
                } else {
                    eventConstraints[patternIds.at(*head)].push_back(expr);
                }
                continue;
            }
            if (std::all_of(names.begin(), names.end(), [](const std::string& n) { return is_event_attribute(n); })) {
                for (auto& ec : eventConstraints) ec.push_back(expr);
                continue;
            }
            for (const auto& [id, type] : types)
                if (std::all_of(names.begin(), names.end(), [&](const std::string& n) { return has_attribute(to_kind(type), n); }))
                    entityConstraints[id].push_back(expr);
        }
    }

    bool entity_ok(const std::string& id, const SystemEntity& e) const {
        if (e.kind() != to_kind(types.at(id))) return false;
        auto it = entityConstraints.find(id);
        if (it == entityConstraints.end()) return true;
        for (const auto& c : it->second)
            if (!c.evaluate([&](const AttrAtom& a) { return entity_atom(a, e); })) return false;
        return true;
    }

    bool event_ok(std::size_t pattern, const SystemEvent& e) const {
        for (const auto& c : eventConstraints[pattern])
            if (!c.evaluate([&](const AttrAtom& a) { return event_atom(a, e); })) return false;
        return true;
    }

    bool windows_ok(std::size_t pattern, const SystemEvent& e) const {
        for (const auto& w : windows[pattern])
            if (!window_holds(w, e, latest)) return false;
        return true;
    }
};

bool temporal_ok(const TemporalRel& t, const Candidate& l, const Candidate& r) {
    auto bounded = [&](Micros diff) {
        if (!t.bound) return true;
        const auto u = unit_micros(t.bound->unit);
        return t.bound->low * u <= diff && diff <= t.bound->high * u;
    };
    switch (t.kind) {
        case TemporalRel::Kind::Before: return l.end < r.start && bounded(r.start - l.end);
        case TemporalRel::Kind::After: return r.end < l.start && bounded(l.start - r.end);
        case TemporalRel::Kind::Within: return t.bound && bounded(l.start > r.start ? l.start - r.start : r.start - l.start);
    }
    return false;
}

bool compare_related(const Value& a, CompareOp op, const Value& b) {
    int c = 0;
    if (std::holds_alternative<std::int64_t>(a) && std::holds_alternative<std::int64_t>(b)) {
        const auto x = std::get<std::int64_t>(a), y = std::get<std::int64_t>(b);
        c = (x > y) - (x < y);
    } else {
        const auto x = value_to_string(a), y = value_to_string(b);
        c = (x > y) - (x < y);
    }
    switch (op) {
        case CompareOp::Eq: return c == 0;
        case CompareOp::Ne: return c != 0;
        case CompareOp::Lt: return c < 0;
        case CompareOp::Le: return c <= 0;
        case CompareOp::Gt: return c > 0;
        case CompareOp::Ge: return c >= 0;
    }
    return false;
}

std::optional<Value> lookup(const AttrName& a, const Compiled& c, const StoreSnapshot& store,
                            const std::map<std::string, EntityUid>& nodes, const std::vector<const Candidate*>& chosen) {
    if (c.types.count(a.head)) {
        const auto& e = store.entity(nodes.at(a.head));
        return e.attribute(a.member ? *a.member : std::string(default_attribute(e.kind())));
    }
    return event_attribute(store.event(chosen[c.patternIds.at(a.head)]->path.back()), *a.member);
}

bool relations_ok(const QueryAst& ast, const Compiled& c, const StoreSnapshot& store,
                  const std::map<std::string, EntityUid>& nodes, const std::vector<const Candidate*>& chosen) {
    for (const auto& rel : ast.relations) {
        if (const auto* t = std::get_if<TemporalRel>(&rel)) {
            if (!temporal_ok(*t, *chosen[c.patternIds.at(t->left)], *chosen[c.patternIds.at(t->right)])) return false;
            continue;
        }
        const auto& a = std::get<AttributeRel>(rel);
        auto l = lookup(a.left, c, store, nodes, chosen), r = lookup(a.right, c, store, nodes, chosen);
        if (!l || !r || !compare_related(*l, a.op, *r)) return false;
    }
    return true;
}

Candidate candidate_of(const StoreSnapshot& store, EventPath path) {
    const auto& first = store.event(path.front());
    const auto& last = store.event(path.back());
    return {std::move(path), first.subject, last.object, first.startTime, last.endTime};
}

}  // namespace

Result evaluate(const QueryAst& ast, const StoreSnapshot& store, int pathCap) {
    const Compiled c(ast, store);
    Result result;
    const auto bySubject = rows_by_subject(store);

    std::vector<std::vector<Candidate>> candidates(ast.patterns.size());
    for (std::size_t i = 0; i < ast.patterns.size(); ++i) {
        const auto& p = ast.patterns[i];
        result.eventsExamined += store.event_count();
        auto endpoints_ok = [&](const SystemEvent& first, const SystemEvent& last) {
            return c.entity_ok(p.subject.id, store.entity(first.subject)) && c.entity_ok(p.object.id, store.entity(last.object));
        };
        if (const auto* ops = std::get_if<OpExpr>(&p.connector)) {
            for (EventRow r = 0; r < store.event_count(); ++r) {
                const auto& e = store.event(r);
                if (op_matches(*ops, e.operation) && c.windows_ok(i, e) && c.event_ok(i, e) && endpoints_ok(e, e))
                    candidates[i].push_back(candidate_of(store, {r}));
            }
            continue;
        }
        const auto& spec = std::get<PathSpec>(p.connector);
        std::vector<EventPath> found;
        extend_paths(
            store, bySubject, spec.effective_min(), std::min(spec.effective_max().value_or(pathCap), pathCap),
            [&](const SystemEvent& e) { return c.entity_ok(p.subject.id, store.entity(e.subject)); },
            [&](const SystemEvent& e) { return c.windows_ok(i, e); },
            [&](const EventPath& path) {
                const auto& last = store.event(path.back());
                return (!spec.finalOp || op_matches(*spec.finalOp, last.operation)) && c.event_ok(i, last) &&
                       endpoints_ok(store.event(path.front()), last);
            },
            found);
        for (auto& path : found) candidates[i].push_back(candidate_of(store, std::move(path)));
    }

    std::map<std::string, EntityUid> nodes;
    std::vector<const Candidate*> chosen(ast.patterns.size());
    std::function<void(std::size_t)> loop = [&](std::size_t i) {
        if (i == ast.patterns.size()) {
            if (!relations_ok(ast, c, store, nodes, chosen)) return;
            Row row;
            for (const auto* cand : chosen) row.patterns.push_back(cand->path);
            for (const auto& item : ast.returns.items)
                row.projected.push_back(lookup(item, c, store, nodes, chosen).value_or(Value{}));
            result.rows.push_back(std::move(row));
            return;
        }
        const auto& p = ast.patterns[i];
        for (const auto& cand : candidates[i]) {
            const auto saved = nodes;
            auto bind = [&](const std::string& id, EntityUid uid) {
                auto [it, fresh] = nodes.emplace(id, uid);
                return fresh || it->second == uid;
            };
            if (bind(p.subject.id, cand.subject) && bind(p.object.id, cand.object)) {
                chosen[i] = &cand;
                loop(i + 1);
            }
            nodes = saved;
        }
    };
    loop(0);

    std::sort(result.rows.begin(), result.rows.end());
    if (ast.returns.distinct) {
        std::set<std::vector<Value>> seen;
        std::erase_if(result.rows, [&](const Row& r) { return !seen.insert(r.projected).second; });
    }
    return result;
}

// ----------------------------------------------------------------------------
// Fuzzy enumeration
// ----------------------------------------------------------------------------

namespace {

double similarity(std::string_view query, std::string_view candidate) {
    if (wildcard_match(query, candidate)) return 1.0;
    std::string stripped;
    for (char ch : query)
        if (ch != '%') stripped.push_back(ch);
    const auto longest = std::max(stripped.size(), candidate.size());
    if (longest == 0) return 1.0;
    return 1.0 - static_cast<double>(levenshtein(stripped, candidate)) / static_cast<double>(longest);
}

std::optional<std::string> ioc_of(const QueryAst& ast, const std::string& id) {
    for (const auto& p : ast.patterns)
        for (const auto* d : {&p.subject, &p.object}) {
            if (d->id != id || !d->filter) continue;
            const auto attr = default_attribute(to_kind(d->type));
            std::vector<std::string> hits;
            d->filter->for_each_leaf([&](const AttrAtom& a) {
                const auto* s = std::get_if<std::string>(&a.value);
                if (!s) return;
                const bool bare = a.kind == AttrAtom::Kind::Bare;
                const bool eq = a.kind == AttrAtom::Kind::Compare && a.op == CompareOp::Eq && !a.attr.member && a.attr.head == attr;
                if (bare || eq) hits.push_back(*s);
            });
            if (!hits.empty()) return hits.front();
        }
    return std::nullopt;
}

}  // namespace

std::vector<Alignment> fuzzy_enumerate(const QueryAst& ast, const StoreSnapshot& store, double nodeThreshold,
                                       double scoreThreshold, int pathCap) {
    const Compiled c(ast, store);
    const auto bySubject = rows_by_subject(store);

    std::map<std::string, std::vector<EntityUid>> pool;
    for (const auto& [id, type] : c.types) {
        const auto ioc = ioc_of(ast, id);
        for (const auto& e : store.entities()) {
            if (e.kind() != to_kind(type)) continue;
            double sim = 1.0;
            if (ioc) {
                if (const auto* f = e.file()) {
                    sim = std::max(similarity(*ioc, f->name), similarity(*ioc, f->path));
                } else {
                    sim = similarity(*ioc, value_to_string(*e.attribute(default_attribute(e.kind()))));
                }
            }
            if (sim + 1e-12 >= nodeThreshold) pool[id].push_back(e.uid);
        }
    }

    auto flows_between = [&](std::size_t i, EntityUid s, EntityUid o) {
        const auto& p = ast.patterns[i];
        int lo = 1, hi = pathCap;
        std::optional<OpExpr> ops;
        if (const auto* e = std::get_if<OpExpr>(&p.connector)) {
            ops = *e;
        } else {
            const auto& spec = std::get<PathSpec>(p.connector);
            lo = spec.effective_min();
            hi = std::min(spec.effective_max().value_or(pathCap), pathCap);
            ops = spec.finalOp;
        }
        std::vector<EventPath> out;
        extend_paths(
            store, bySubject, lo, hi, [&](const SystemEvent& e) { return e.subject == s; },
            [&](const SystemEvent& e) { return c.windows_ok(i, e); },
            [&](const EventPath& path) {
                const auto& last = store.event(path.back());
                return last.object == o && (!ops || op_matches(*ops, last.operation)) && c.event_ok(i, last);
            },
            out);
        return out;
    };

    std::vector<Alignment> out;
    std::vector<std::string> ids;
    for (const auto& [id, type] : c.types) ids.push_back(id);
    std::map<std::string, EntityUid> nodes;
    std::set<EntityUid> used;

    std::function<void(std::size_t)> assign = [&](std::size_t k) {
        if (k < ids.size()) {
            for (auto uid : pool[ids[k]]) {
                if (used.count(uid)) continue;
                nodes[ids[k]] = uid;
                used.insert(uid);
                assign(k + 1);
                used.erase(uid);
                nodes.erase(ids[k]);
            }
            return;
        }
        std::vector<std::vector<Candidate>> flows(ast.patterns.size());
        for (std::size_t i = 0; i < ast.patterns.size(); ++i) {
            const auto& p = ast.patterns[i];
            for (auto& path : flows_between(i, nodes.at(p.subject.id), nodes.at(p.object.id)))
                flows[i].push_back(candidate_of(store, std::move(path)));
            if (flows[i].empty()) return;
        }
        std::vector<const Candidate*> chosen(ast.patterns.size());
        std::function<void(std::size_t)> combine = [&](std::size_t i) {
            if (i == ast.patterns.size()) {
                if (!relations_ok(ast, c, store, nodes, chosen)) return;
                double total = 0;
                for (std::size_t j = 0; j < chosen.size(); ++j) {
                    const auto seed = nodes.at(ast.patterns[j].subject.id);
                    std::set<EntityUid> others;
                    for (std::size_t h = 1; h < chosen[j]->path.size(); ++h) {
                        const auto s = store.event(chosen[j]->path[h]).subject;
                        if (s != seed) others.insert(s);
                    }
                    total += 1.0 / static_cast<double>(1 + others.size());
                }
                const double score = total / static_cast<double>(chosen.size());
                if (score + 1e-12 < scoreThreshold) return;
                Alignment a;
                a.nodes = nodes;
                for (const auto* f : chosen) a.flows.push_back(f->path);
                a.score = score;
                out.push_back(std::move(a));
                return;
            }
            for (const auto& f : flows[i]) {
                chosen[i] = &f;
                combine(i + 1);
            }
        };
        combine(0);
    };
    assign(0);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace tbhunt::oracle
