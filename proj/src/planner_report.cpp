#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "tbhunt/query_planner.hpp"
#include "tbhunt/tbql/tbql.hpp"

namespace tbhunt {

using namespace tbql;

// ----------------------------------------------------------------------------
// Explain
// ----------------------------------------------------------------------------

namespace {

std::string fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

}  // namespace

std::string explain_text(const ExecutionPlan& plan, const ExecutionStats& stats) {
    std::ostringstream out;
    out << "schedule:\n";
    for (std::size_t step = 0; step < plan.schedule.size(); ++step) {
        const auto& pp = plan.patterns[plan.schedule[step]];
        out << "  " << step + 1 << ". " << pp.label << "  score=" << pp.pruningScore << (pp.isPath ? "  path" : "");
        if (!pp.dependencies.empty()) {
            out << "  depends-on=";
            for (std::size_t i = 0; i < pp.dependencies.size(); ++i)
                out << (i ? "," : "") << plan.patterns[pp.dependencies[i].first].label << "(" << pp.dependencies[i].second
                    << ")";
        }
        out << "\n";
    }
    out << "execution:\n";
    for (const auto& st : stats.patterns) {
        const auto& pp = plan.patterns[st.patternIndex];
        out << "  " << pp.label << ": access=" << st.accessPath << " events=" << st.eventsExamined
            << " entities=" << st.entitiesExamined;
        if (pp.isPath) out << " expansions=" << st.pathExpansions;
        out << " matches=" << st.matches << " time=" << fixed(st.millis) << "ms";
        for (const auto& [id, n] : st.pushedFilters) out << " pushed " << id << "(" << n << ")";
        out << "\n";
    }
    out << "join: rows=" << stats.joinRows << " time=" << fixed(stats.joinMillis) << "ms\n";
    out << "total: events=" << stats.eventsExamined << " time=" << fixed(stats.totalMillis) << "ms\n";
    return out.str();
}

std::string explain_json(const ExecutionPlan& plan, const ExecutionStats& stats) {
    nlohmann::json doc;
    auto& schedule = doc["schedule"] = nlohmann::json::array();
    for (auto pi : plan.schedule) {
        const auto& pp = plan.patterns[pi];
        nlohmann::json deps = nlohmann::json::array();
        for (const auto& [other, id] : pp.dependencies) deps.push_back({{"pattern", plan.patterns[other].label}, {"entity", id}});
        schedule.push_back({{"pattern", pp.label}, {"score", pp.pruningScore}, {"path", pp.isPath}, {"dependencies", deps}});
    }
    auto& exec = doc["execution"] = nlohmann::json::array();
    for (const auto& st : stats.patterns) {
        nlohmann::json pushed = nlohmann::json::object();
        for (const auto& [id, n] : st.pushedFilters) pushed[id] = n;
        exec.push_back({{"pattern", plan.patterns[st.patternIndex].label},
                        {"access", st.accessPath},
                        {"eventsExamined", st.eventsExamined},
                        {"entitiesExamined", st.entitiesExamined},
                        {"pathExpansions", st.pathExpansions},
                        {"matches", st.matches},
                        {"pushedFilters", pushed},
                        {"millis", st.millis}});
    }
    doc["join"] = {{"rows", stats.joinRows}, {"millis", stats.joinMillis}};
    doc["total"] = {{"eventsExamined", stats.eventsExamined}, {"millis", stats.totalMillis}};
    return doc.dump();
}

// ----------------------------------------------------------------------------
// Baseline query text
// ----------------------------------------------------------------------------

namespace {

std::string sql_string(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out.push_back('\'');
        out.push_back(c);
    }
    return out + "'";
}

std::string sql_literal(const Value& v) {
    if (const auto* n = std::get_if<std::int64_t>(&v)) return std::to_string(*n);
    return sql_string(std::get<std::string>(v));
}

std::string_view sql_op(CompareOp op) {
    switch (op) {
        case CompareOp::Eq: return "=";
        case CompareOp::Ne: return "<>";
        default: return to_string(op);
    }
}

std::string_view table_of(EntityType t) {
    switch (t) {
        case EntityType::File: return "file_entity";
        case EntityType::Proc: return "process_entity";
        case EntityType::Ip: return "network_entity";
    }
    return "?";
}

std::string_view label_of(EntityType t) {
    switch (t) {
        case EntityType::File: return "File";
        case EntityType::Proc: return "Process";
        case EntityType::Ip: return "Network";
    }
    return "?";
}

std::string event_column(const std::string& attr) {
    if (attr == "starttime") return "start_time";
    if (attr == "endtime") return "end_time";
    if (attr == "failurecode") return "failure_code";
    return attr;
}

/// Renders one atom in either dialect. `column` maps an attribute to the
/// qualified column / property reference.
template <class Column>
std::string render_atom(const AttrAtom& a, bool cypher, Column&& column) {
    const auto col = column(a.attr);
    if (a.kind == AttrAtom::Kind::InSet) {
        std::string list;
        for (std::size_t i = 0; i < a.values.size(); ++i) list += (i ? ", " : "") + sql_literal(a.values[i]);
        if (cypher) return (a.negated ? "NOT " : "") + col + " IN [" + list + "]";
        return col + (a.negated ? " NOT IN (" : " IN (") + list + ")";
    }
    const auto* s = std::get_if<std::string>(&a.value);
    if (s && has_wildcard(*s) && (a.op == CompareOp::Eq || a.op == CompareOp::Ne)) {
        if (cypher) {
            std::string regex;
            for (char c : *s) {
                if (c == '%') {
                    regex += ".*";
                } else {
                    if (std::string_view(".^$*+?()[]{}|\\").find(c) != std::string_view::npos) regex += "\\\\";
                    regex += c;
                }
            }
            return (a.op == CompareOp::Ne ? "NOT " : "") + col + " =~ " + sql_string(regex);
        }
        return col + (a.op == CompareOp::Ne ? " NOT LIKE " : " LIKE ") + sql_string(*s);
    }
    return col + " " + std::string(cypher ? (a.op == CompareOp::Ne ? "<>" : to_string(a.op)) : sql_op(a.op)) + " " +
           sql_literal(a.value);
}

template <class Column>
std::string render_expr(const AttrExpr& e, bool cypher, Column&& column) {
    using E = AttrExpr;
    switch (e.kind) {
        case E::Kind::Atom:
            return render_atom(e.leaf, cypher, column);
        case E::Kind::Not:
            return "NOT (" + render_expr(e.children.front(), cypher, column) + ")";
        case E::Kind::And:
        case E::Kind::Or: {
            std::string out = "(";
            for (std::size_t i = 0; i < e.children.size(); ++i) {
                if (i) out += e.kind == E::Kind::And ? " AND " : " OR ";
                out += render_expr(e.children[i], cypher, column);
            }
            return out + ")";
        }
    }
    return {};
}

std::string render_ops(const OpExpr& e, const std::string& column) {
    using E = OpExpr;
    switch (e.kind) {
        case E::Kind::Atom:
            if (e.leaf == OpKeyword::Open) return "(" + column + " = 'read' OR " + column + " = 'write')";
            return column + " = '" + std::string(keyword(e.leaf)) + "'";
        case E::Kind::Not:
            return "NOT (" + render_ops(e.children.front(), column) + ")";
        case E::Kind::And:
        case E::Kind::Or: {
            std::string out = "(";
            for (std::size_t i = 0; i < e.children.size(); ++i) {
                if (i) out += e.kind == E::Kind::And ? " AND " : " OR ";
                out += render_ops(e.children[i], column);
            }
            return out + ")";
        }
    }
    return {};
}

std::string render_temporal(const TemporalRel& t, const std::string& lStart, const std::string& lEnd,
                            const std::string& rStart, const std::string& rEnd) {
    auto between = [&](const std::string& diff) {
        const auto unit = unit_micros(t.bound->unit);
        return diff + " BETWEEN " + std::to_string(t.bound->low * unit) + " AND " + std::to_string(t.bound->high * unit);
    };
    auto bound = [&](const std::string& diff) { return t.bound ? " AND " + between(diff) : std::string(); };
    switch (t.kind) {
        case TemporalRel::Kind::Before:
            return lEnd + " < " + rStart + bound(rStart + " - " + lEnd);
        case TemporalRel::Kind::After:
            return rEnd + " < " + lStart + bound(lStart + " - " + rEnd);
        case TemporalRel::Kind::Within:
            return between("abs(" + lStart + " - " + rStart + ")");
    }
    return {};
}

std::vector<std::string> window_conditions(const TimeWindow& w, const std::string& start, const std::string& end) {
    switch (w.kind) {
        case TimeWindow::Kind::FromTo:
            return {start + " >= " + std::to_string(w.from), start + " <= " + std::to_string(w.to)};
        case TimeWindow::Kind::At:
            return {start + " <= " + std::to_string(w.from), end + " >= " + std::to_string(w.from)};
        case TimeWindow::Kind::Before:
            return {start + " < " + std::to_string(w.from)};
        case TimeWindow::Kind::After:
            return {start + " > " + std::to_string(w.from)};
        case TimeWindow::Kind::Last:
            return {start + " >= (SELECT max(end_time) FROM event) - " +
                    std::to_string(w.amount * unit_micros(w.unit))};
    }
    return {};
}

std::string join_with(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
    return out;
}

}  // namespace

BaselineQueries emit_baseline_query_text(const QueryAst& input) {
    const QueryAst ast = desugar(input);
    BaselineQueries out;

    std::vector<std::string> patternAlias;
    for (std::size_t i = 0; i < ast.patterns.size(); ++i)
        patternAlias.push_back(ast.patterns[i].id ? *ast.patterns[i].id : "e" + std::to_string(i + 1));
    auto pattern_of = [&](const std::string& id) {
        for (std::size_t i = 0; i < ast.patterns.size(); ++i)
            if (ast.patterns[i].id == id) return i;
        return std::size_t{0};
    };
    const bool hasPaths = std::any_of(ast.patterns.begin(), ast.patterns.end(), [](const Pattern& p) { return p.is_path(); });

    // -- tabular dialect -------------------------------------------------------
    if (hasPaths) {
        out.notices.emplace_back("path patterns have no tabular rendering; emitted graph dialect only");
    } else {
        std::vector<std::string> from, where;
        // First alias under which each entity id appears.
        std::map<std::string, std::string> firstAlias;
        for (std::size_t i = 0; i < ast.patterns.size(); ++i) {
            const auto& p = ast.patterns[i];
            const auto& ev = patternAlias[i];
            from.push_back("event AS " + ev);
            for (const auto& [decl, role] : {std::pair{&p.subject, "subject_id"}, std::pair{&p.object, "object_id"}}) {
                const auto alias = decl->id + "_" + ev;
                from.push_back(std::string(table_of(decl->type)) + " AS " + alias);
                where.push_back(ev + "." + role + " = " + alias + ".id");
                if (decl->filter)
                    where.push_back(render_expr(*decl->filter, false, [&](const AttrName& a) { return alias + "." + a.head; }));
                auto [it, first] = firstAlias.emplace(decl->id, alias);
                if (!first) where.push_back(it->second + ".id = " + alias + ".id");
            }
            where.push_back(render_ops(std::get<OpExpr>(p.connector), ev + ".optype"));
            if (p.idFilter)
                where.push_back(render_expr(*p.idFilter, false,
                                            [&](const AttrName& a) { return ev + "." + event_column(a.head); }));
            if (p.window)
                for (auto& c : window_conditions(*p.window, ev + ".start_time", ev + ".end_time")) where.push_back(c);
            for (const auto& g : ast.globalFilters) {
                if (const auto* w = std::get_if<TimeWindow>(&g))
                    for (auto& c : window_conditions(*w, ev + ".start_time", ev + ".end_time")) where.push_back(c);
            }
        }
        for (const auto& g : ast.globalFilters) {
            const auto* e = std::get_if<AttrExpr>(&g);
            if (!e) continue;
            where.push_back(render_expr(*e, false, [&](const AttrName& a) {
                if (a.member) {
                    auto it = firstAlias.find(a.head);
                    return (it != firstAlias.end() ? it->second : a.head) + "." + event_column(*a.member);
                }
                return a.head;
            }));
        }
        for (const auto& rel : ast.relations) {
            if (const auto* t = std::get_if<TemporalRel>(&rel)) {
                const auto& l = patternAlias[pattern_of(t->left)];
                const auto& r = patternAlias[pattern_of(t->right)];
                where.push_back(render_temporal(*t, l + ".start_time", l + ".end_time", r + ".start_time", r + ".end_time"));
            } else {
                const auto& a = std::get<AttributeRel>(rel);
                auto col = [&](const AttrName& n) {
                    auto it = firstAlias.find(n.head);
                    return (it != firstAlias.end() ? it->second : n.head) + "." + event_column(*n.member);
                };
                where.push_back(col(a.left) + " " + std::string(sql_op(a.op)) + " " + col(a.right));
            }
        }
        std::vector<std::string> select;
        for (const auto& item : ast.returns.items) {
            auto it = firstAlias.find(item.head);
            const auto alias = it != firstAlias.end() ? it->second : item.head;
            select.push_back(alias + "." + event_column(item.member.value_or("")) + " AS " + item.head + "_" +
                             item.member.value_or(""));
        }
        out.tabular = "SELECT " + std::string(ast.returns.distinct ? "DISTINCT " : "") + join_with(select, ", ") +
                      "\nFROM " + join_with(from, ", ") + "\nWHERE " + join_with(where, "\n  AND ") + ";\n";
    }

    // -- graph dialect ---------------------------------------------------------
    // Each pattern binds its own node variables, like the tabular aliases;
    // shared entity ids are joined on `id`.
    std::vector<std::string> match, where;
    std::map<std::string, std::string> firstNode;
    auto node = [&](const EntityDecl& d, const std::string& ev) {
        const auto alias = d.id + "_" + ev;
        auto [it, first] = firstNode.emplace(d.id, alias);
        if (!first) where.push_back(it->second + ".id = " + alias + ".id");
        if (d.filter)
            where.push_back(render_expr(*d.filter, true, [&](const AttrName& a) { return alias + "." + a.head; }));
        return "(" + alias + ":" + std::string(label_of(d.type)) + ")";
    };
    auto node_ref = [&](const std::string& id) {
        auto it = firstNode.find(id);
        return it != firstNode.end() ? it->second : id;
    };
    std::vector<std::string> startExpr(ast.patterns.size()), endExpr(ast.patterns.size());
    for (std::size_t i = 0; i < ast.patterns.size(); ++i) {
        const auto& p = ast.patterns[i];
        const auto& ev = patternAlias[i];
        std::string evRef = ev;
        const auto subject = node(p.subject, ev);
        const auto object = node(p.object, ev);
        if (const auto* ops = std::get_if<OpExpr>(&p.connector)) {
            match.push_back(subject + "-[" + ev + ":EVENT]->" + object);
            where.push_back(render_ops(*ops, ev + ".optype"));
            startExpr[i] = ev + ".start_time";
            endExpr[i] = ev + ".end_time";
        } else {
            const auto& path = std::get<PathSpec>(p.connector);
            const auto lo = path.effective_min();
            const auto hi = path.effective_max();
            const auto rels = "relationships(" + ev + ")";
            match.push_back(ev + " = " + subject + "-[:EVENT*" + std::to_string(lo) + ".." +
                            (hi ? std::to_string(*hi) : std::string()) + "]->" + object);
            where.push_back("all(k IN range(0, size(" + rels + ") - 2) WHERE " + rels + "[k].start_time <= " + rels +
                            "[k + 1].start_time)");
            evRef = "last(" + rels + ")";
            if (path.finalOp) where.push_back(render_ops(*path.finalOp, evRef + ".optype"));
            startExpr[i] = "head(" + rels + ").start_time";
            endExpr[i] = evRef + ".end_time";
        }
        if (p.idFilter)
            where.push_back(render_expr(*p.idFilter, true, [&](const AttrName& a) { return evRef + "." + event_column(a.head); }));
        auto windows = std::vector<TimeWindow>{};
        for (const auto& g : ast.globalFilters)
            if (const auto* w = std::get_if<TimeWindow>(&g)) windows.push_back(*w);
        if (p.window) windows.push_back(*p.window);
        for (const auto& w : windows)
            for (auto& c : window_conditions(w, startExpr[i], endExpr[i]))
                where.push_back(w.kind == TimeWindow::Kind::Last
                                    ? startExpr[i] + " >= $latest - " + std::to_string(w.amount * unit_micros(w.unit))
                                    : c);
    }
    for (const auto& g : ast.globalFilters) {
        const auto* e = std::get_if<AttrExpr>(&g);
        if (!e) continue;
        where.push_back(render_expr(*e, true, [&](const AttrName& a) {
            return a.member ? node_ref(a.head) + "." + event_column(*a.member) : a.head;
        }));
    }
    for (const auto& rel : ast.relations) {
        if (const auto* t = std::get_if<TemporalRel>(&rel)) {
            const auto l = pattern_of(t->left), r = pattern_of(t->right);
            where.push_back(render_temporal(*t, startExpr[l], endExpr[l], startExpr[r], endExpr[r]));
        } else {
            const auto& a = std::get<AttributeRel>(rel);
            where.push_back(node_ref(a.left.head) + "." + event_column(*a.left.member) + " " +
                            std::string(a.op == CompareOp::Ne ? "<>" : to_string(a.op)) + " " + node_ref(a.right.head) +
                            "." + event_column(*a.right.member));
        }
    }
    std::vector<std::string> ret;
    for (const auto& item : ast.returns.items)
        ret.push_back(node_ref(item.head) + "." + event_column(item.member.value_or("")));
    out.graph = "MATCH " + join_with(match, ", ") + (where.empty() ? "" : "\nWHERE " + join_with(where, "\n  AND ")) +
                "\nRETURN " + (ast.returns.distinct ? "DISTINCT " : "") + join_with(ret, ", ") + ";\n";
    return out;
}

}  // namespace tbhunt
