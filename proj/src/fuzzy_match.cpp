#include "tbhunt/fuzzy_match.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "tbhunt/query_planner.hpp"
#include "tbhunt/tbql/tbql.hpp"

namespace tbhunt {

using namespace tbql;

namespace {

constexpr double kScoreEpsilon = 1e-12;

std::string strip_wildcards(std::string_view s) {
    std::string out;
    for (char c : s)
        if (c != '%') out.push_back(c);
    return out;
}

struct BudgetSpent {};

}  // namespace

std::size_t levenshtein(std::string_view a, std::string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const auto up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

double ioc_similarity(std::string_view query, std::string_view candidate) {
    if (wildcard_match(query, candidate)) return 1.0;
    const auto q = strip_wildcards(query);
    const auto longest = std::max(q.size(), candidate.size());
    if (longest == 0) return 1.0;
    return 1.0 - static_cast<double>(levenshtein(q, candidate)) / static_cast<double>(longest);
}

double entity_similarity(const SystemEntity& entity, std::string_view ioc) {
    if (const auto* f = entity.file()) return std::max(ioc_similarity(ioc, f->name), ioc_similarity(ioc, f->path));
    const auto v = entity.attribute(default_attribute(entity.kind()));
    return v ? ioc_similarity(ioc, value_to_string(*v)) : 0.0;
}

std::optional<std::string> query_ioc(const QueryAst& ast, const std::string& id) {
    for (const auto& p : ast.patterns) {
        for (const auto* d : {&p.subject, &p.object}) {
            if (d->id != id || !d->filter) continue;
            const auto attr = default_attribute(to_kind(d->type));
            std::optional<std::string> found;
            d->filter->for_each_leaf([&](const AttrAtom& a) {
                if (found) return;
                const auto* s = std::get_if<std::string>(&a.value);
                if (!s) return;
                if (a.kind == AttrAtom::Kind::Bare ||
                    (a.kind == AttrAtom::Kind::Compare && a.op == CompareOp::Eq && !a.attr.member && a.attr.head == attr))
                    found = *s;
            });
            if (found) return found;
        }
    }
    return std::nullopt;
}

std::map<std::string, std::vector<NodeCandidate>> align_nodes(const QueryAst& ast, const StoreSnapshot& store,
                                                              double nodeThreshold) {
    std::map<std::string, std::vector<NodeCandidate>> out;
    for (const auto& [id, type] : entity_types(ast)) {
        const auto kind = to_kind(type);
        const auto ioc = query_ioc(ast, id);
        auto& list = out[id];
        for (const auto& e : store.entities()) {
            if (e.kind() != kind) continue;
            const double sim = ioc ? entity_similarity(e, *ioc) : 1.0;
            if (sim + kScoreEpsilon >= nodeThreshold) list.push_back({e.uid, sim});
        }
        std::sort(list.begin(), list.end(), [](const NodeCandidate& a, const NodeCandidate& b) {
            return a.similarity != b.similarity ? a.similarity > b.similarity : a.uid < b.uid;
        });
    }
    return out;
}

int flow_influence(const StoreSnapshot& store, const EventPath& path, EntityUid seed) {
    std::set<EntityUid> actors;
    for (std::size_t k = 1; k < path.size(); ++k) {
        const auto s = store.event(path[k]).subject;
        if (s != seed) actors.insert(s);
    }
    return 1 + static_cast<int>(actors.size());
}

namespace {

class Search {
public:
    Search(const QueryAst& ast, const StoreSnapshot& store, const FuzzyOptions& options)
        : ast_(desugar(ast)), store_(store), options_(options) {
        PlannerOptions po;
        po.pathCap = options.pathCap;
        plan_ = build_plan(ast_, po);
        candidates_ = align_nodes(ast_, store_, options.nodeThreshold);
        for (std::size_t i = 0; i < plan_.entityIds.size(); ++i) slot_[plan_.entityIds[i]] = i;
        for (const auto& a : plan_.returns.items) result_.columns.push_back(a.text());
        for (const auto& [id, list] : candidates_)
            if (list.empty()) result_.unmatchedEntities.push_back(id);

        order_ = plan_.entityIds;
        std::stable_sort(order_.begin(), order_.end(), [&](const std::string& a, const std::string& b) {
            return candidates_.at(a).size() < candidates_.at(b).size();
        });
        assigned_.assign(plan_.entityIds.size(), std::nullopt);
    }

    FuzzyResult run() {
        if (result_.unmatchedEntities.empty()) {
            try {
                assign(0);
            } catch (const BudgetSpent&) {
                result_.budgetExhausted = true;
            }
        }
        auto& as = result_.alignments;
        std::sort(as.begin(), as.end(), [](const GraphAlignment& a, const GraphAlignment& b) {
            if (a.score != b.score) return a.score > b.score;
            std::vector<EntityUid> ua, ub;
            for (const auto& [id, u] : a.nodeMap) ua.push_back(u);
            for (const auto& [id, u] : b.nodeMap) ub.push_back(u);
            if (ua != ub) return ua < ub;
            std::vector<EventPath> pa, pb;
            for (const auto& f : a.flows) pa.push_back(f.path);
            for (const auto& f : b.flows) pb.push_back(f.path);
            return pa < pb;
        });
        result_.expansions = spent_;
        return std::move(result_);
    }

private:
    void spend(std::uint64_t n = 1) {
        spent_ += n;
        if (options_.budget && spent_ > options_.budget) throw BudgetSpent{};
    }

    const std::vector<Flow>& flows_for(std::size_t pi, EntityUid s, EntityUid o) {
        auto key = std::make_tuple(pi, s, o);
        if (auto it = flowCache_.find(key); it != flowCache_.end()) return it->second;
        const auto& pp = plan_.patterns[pi];
        PathQuery q;
        q.source.kind = EntityKind::Process;
        q.source.uids = std::vector<EntityUid>{s};
        q.target.uids = std::vector<EntityUid>{o};
        q.minLength = pp.isPath ? pp.minLength : 1;
        q.maxLength = pp.isPath ? pp.maxLength.value_or(options_.pathCap) : options_.pathCap;
        q.maxLength = std::min(*q.maxLength, options_.pathCap);
        q.finalOps = pp.filter.ops;
        for (const auto& w : pp.windows) q.window.intersect(resolve_window(w, store_.latest_time()));
        q.finalEventPredicate = pp.filter.eventPredicate;
        std::vector<Flow> flows;
        if (q.minLength <= *q.maxLength) {
            ScanStats stats;
            TraversalLimits limits{options_.pathCap, options_.budget ? options_.budget - std::min(spent_, options_.budget) + 1 : 0};
            std::vector<EventPath> paths;
            try {
                paths = store_.traverse_paths(q, limits, &stats);
            } catch (const BudgetExceeded&) {
                spend(stats.pathExpansions);
                throw BudgetSpent{};
            }
            spend(stats.pathExpansions);
            for (auto& p : paths) {
                const int c = flow_influence(store_, p, s);
                flows.push_back({pi, std::move(p), c});
            }
        }
        return flowCache_.emplace(key, std::move(flows)).first->second;
    }

    bool pattern_ready(std::size_t pi) const {
        const auto& pp = plan_.patterns[pi];
        return assigned_[slot_.at(pp.subjectId)] && assigned_[slot_.at(pp.objectId)];
    }

    void assign(std::size_t depth) {
        if (depth == order_.size()) {
            choose_flows();
            return;
        }
        const auto& id = order_[depth];
        const auto s = slot_.at(id);
        for (const auto& cand : candidates_.at(id)) {
            if (used_.count(cand.uid)) continue;
            spend();
            assigned_[s] = cand.uid;
            used_.insert(cand.uid);
            similarity_ += cand.similarity;
            bool viable = true;
            for (std::size_t pi = 0; pi < plan_.patterns.size() && viable; ++pi) {
                const auto& pp = plan_.patterns[pi];
                if ((pp.subjectId != id && pp.objectId != id) || !pattern_ready(pi)) continue;
                viable = !flows_for(pi, *assigned_[slot_.at(pp.subjectId)], *assigned_[slot_.at(pp.objectId)]).empty();
            }
            if (viable) assign(depth + 1);
            similarity_ -= cand.similarity;
            used_.erase(cand.uid);
            assigned_[s].reset();
        }
    }

    PatternMatch as_match(const Flow& f) const {
        const auto& first = store_.event(f.path.front());
        const auto& last = store_.event(f.path.back());
        return {f.path, first.subject, last.object, first.startTime, last.endTime};
    }

    std::optional<Value> attribute_of(const AttrName& a) const {
        if (auto it = slot_.find(a.head); it != slot_.end()) {
            const auto& e = store_.entity(*assigned_[it->second]);
            return e.attribute(a.member ? *a.member : std::string(default_attribute(e.kind())));
        }
        const auto pi = plan_.patternIds.at(a.head);
        return event_attribute(store_.event(chosen_[pi]->path.back()), *a.member);
    }

    /// Relations whose patterns are all chosen among the first `k` patterns
    /// (in index order) and that involve pattern k-1.
    bool relations_hold(std::size_t k) const {
        for (const auto& rel : plan_.relations) {
            std::vector<std::size_t> pats;
            if (const auto* t = std::get_if<TemporalRel>(&rel)) {
                pats = {plan_.patternIds.at(t->left), plan_.patternIds.at(t->right)};
            } else {
                const auto& a = std::get<AttributeRel>(rel);
                for (const auto* n : {&a.left, &a.right})
                    if (auto it = plan_.patternIds.find(n->head); it != plan_.patternIds.end()) pats.push_back(it->second);
            }
            const auto last = pats.empty() ? 0 : *std::max_element(pats.begin(), pats.end());
            if (pats.empty() ? k != plan_.patterns.size() : last + 1 != k) continue;
            bool ok = true;
            if (const auto* t = std::get_if<TemporalRel>(&rel)) {
                ok = temporal_holds(*t, as_match(*chosen_[pats[0]]), as_match(*chosen_[pats[1]]));
            } else {
                const auto& a = std::get<AttributeRel>(rel);
                auto lv = attribute_of(a.left), rv = attribute_of(a.right);
                ok = lv && rv && relation_compare(*lv, a.op, *rv);
            }
            if (!ok) return false;
        }
        return true;
    }

    void choose_flows() {
        chosen_.assign(plan_.patterns.size(), nullptr);
        pick(0, 0.0);
    }

    void pick(std::size_t k, double sum) {
        const auto n = plan_.patterns.size();
        if (k == n) {
            record(sum / static_cast<double>(n));
            return;
        }
        const auto& pp = plan_.patterns[k];
        const auto& flows =
            flows_for(k, *assigned_[slot_.at(pp.subjectId)], *assigned_[slot_.at(pp.objectId)]);
        for (const auto& f : flows) {
            spend();
            const double next = sum + 1.0 / f.influence;
            const double best = (next + static_cast<double>(n - k - 1)) / static_cast<double>(n);
            if (best + kScoreEpsilon < options_.scoreThreshold) continue;
            chosen_[k] = &f;
            if (relations_hold(k + 1)) pick(k + 1, next);
            chosen_[k] = nullptr;
        }
    }

    void record(double score) {
        if (score + kScoreEpsilon < options_.scoreThreshold) return;
        GraphAlignment a;
        for (std::size_t i = 0; i < plan_.entityIds.size(); ++i) a.nodeMap.emplace_back(plan_.entityIds[i], *assigned_[i]);
        for (const auto* f : chosen_) a.flows.push_back(*f);
        a.score = score;
        a.similarity = similarity_;
        for (const auto& item : plan_.returns.items) a.projected.push_back(attribute_of(item).value_or(Value{}));
        result_.alignments.push_back(std::move(a));
    }

    QueryAst ast_;
    const StoreSnapshot& store_;
    FuzzyOptions options_;
    ExecutionPlan plan_;
    std::map<std::string, std::vector<NodeCandidate>> candidates_;
    std::map<std::string, std::size_t> slot_;
    std::vector<std::string> order_;
    std::vector<std::optional<EntityUid>> assigned_;
    std::set<EntityUid> used_;
    double similarity_ = 0;
    std::vector<const Flow*> chosen_;
    std::map<std::tuple<std::size_t, EntityUid, EntityUid>, std::vector<Flow>> flowCache_;
    std::uint64_t spent_ = 0;
    FuzzyResult result_;
};

}  // namespace

FuzzyResult search_alignments(const QueryAst& ast, const StoreSnapshot& store, const FuzzyOptions& options) {
    return Search(ast, store, options).run();
}

std::string alignment_report_json(const FuzzyResult& result, const StoreSnapshot& store) {
    using nlohmann::json;
    json doc;
    doc["budgetExhausted"] = result.budgetExhausted;
    doc["expansions"] = result.expansions;
    doc["unmatchedEntities"] = result.unmatchedEntities;
    auto& list = doc["alignments"] = json::array();
    for (const auto& a : result.alignments) {
        json nodes = json::object();
        for (const auto& [id, uid] : a.nodeMap) nodes[id] = to_underlying(uid);
        json flows = json::array();
        for (const auto& f : a.flows) {
            json events = json::array();
            for (auto r : f.path) events.push_back(to_underlying(store.event(r).id));
            flows.push_back({{"pattern", f.patternIndex}, {"events", events}, {"influence", f.influence}});
        }
        list.push_back({{"nodeMap", nodes}, {"flows", flows}, {"score", a.score}, {"similarity", a.similarity}});
    }
    return doc.dump();
}

}  // namespace tbhunt
