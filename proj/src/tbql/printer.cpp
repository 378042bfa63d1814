#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>

#include "tbhunt/tbql/tbql.hpp"

namespace tbhunt::tbql {

EntityKind to_kind(EntityType t) {
    switch (t) {
        case EntityType::File: return EntityKind::File;
        case EntityType::Proc: return EntityKind::Process;
        case EntityType::Ip: return EntityKind::NetworkConnection;
    }
    throw ContractViolation("invalid entity type");
}

std::string_view keyword(EntityType t) {
    switch (t) {
        case EntityType::File: return "file";
        case EntityType::Proc: return "proc";
        case EntityType::Ip: return "ip";
    }
    return "?";
}

std::string_view keyword(OpKeyword op) {
    switch (op) {
        case OpKeyword::Read: return "read";
        case OpKeyword::Write: return "write";
        case OpKeyword::Execute: return "execute";
        case OpKeyword::Start: return "start";
        case OpKeyword::End: return "end";
        case OpKeyword::Rename: return "rename";
        case OpKeyword::Open: return "open";
    }
    return "?";
}

std::string_view keyword(TimeUnit u) {
    switch (u) {
        case TimeUnit::Sec: return "sec";
        case TimeUnit::Min: return "min";
        case TimeUnit::Hour: return "hour";
        case TimeUnit::Day: return "day";
    }
    return "?";
}

Micros unit_micros(TimeUnit u) {
    switch (u) {
        case TimeUnit::Sec: return kMicrosPerSecond;
        case TimeUnit::Min: return 60 * kMicrosPerSecond;
        case TimeUnit::Hour: return 3600 * kMicrosPerSecond;
        case TimeUnit::Day: return 86400 * kMicrosPerSecond;
    }
    return kMicrosPerSecond;
}

AttrAtom AttrAtom::compare(AttrName a, CompareOp op, Value v) {
    AttrAtom atom;
    atom.kind = Kind::Compare;
    atom.attr = std::move(a);
    atom.op = op;
    atom.value = std::move(v);
    return atom;
}

AttrAtom AttrAtom::bare(Value v) {
    AttrAtom atom;
    atom.kind = Kind::Bare;
    atom.value = std::move(v);
    return atom;
}

AttrAtom AttrAtom::in_set(AttrName a, std::vector<Value> vs, bool negated) {
    AttrAtom atom;
    atom.kind = Kind::InSet;
    atom.attr = std::move(a);
    atom.values = std::move(vs);
    atom.negated = negated;
    return atom;
}

// ----------------------------------------------------------------------------
// Datetimes
// ----------------------------------------------------------------------------

std::optional<Micros> parse_datetime(std::string_view s) {
    using namespace std::chrono;
    auto num = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
        if (pos + len > s.size()) return std::nullopt;
        int v = 0;
        for (std::size_t i = pos; i < pos + len; ++i) {
            if (!std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
            v = v * 10 + (s[i] - '0');
        }
        return v;
    };
    if (s.size() < 19 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' || s[16] != ':')
        return std::nullopt;
    auto y = num(0, 4), mo = num(5, 2), d = num(8, 2), h = num(11, 2), mi = num(14, 2), se = num(17, 2);
    if (!y || !mo || !d || !h || !mi || !se) return std::nullopt;
    year_month_day ymd{year{*y}, month{static_cast<unsigned>(*mo)}, day{static_cast<unsigned>(*d)}};
    if (!ymd.ok() || *h > 23 || *mi > 59 || *se > 59) return std::nullopt;
    Micros frac = 0;
    if (s.size() > 19) {
        if (s[19] != '.' || s.size() == 20 || s.size() > 26) return std::nullopt;
        auto digits = s.size() - 20;
        auto f = num(20, digits);
        if (!f) return std::nullopt;
        frac = *f;
        for (auto i = digits; i < 6; ++i) frac *= 10;
    }
    auto days = sys_days(ymd).time_since_epoch().count();
    return ((static_cast<Micros>(days) * 24 + *h) * 60 + *mi) * 60 * kMicrosPerSecond + *se * kMicrosPerSecond +
           frac;
}

std::string format_datetime(Micros t) {
    using namespace std::chrono;
    const Micros perDay = 86400 * kMicrosPerSecond;
    auto dayCount = t / perDay;
    auto rem = t % perDay;
    if (rem < 0) {
        rem += perDay;
        --dayCount;
    }
    year_month_day ymd{sys_days{days{dayCount}}};
    const auto secs = rem / kMicrosPerSecond;
    const auto frac = rem % kMicrosPerSecond;
    char buf[48];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lld", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long long>(secs / 3600), static_cast<long long>(secs / 60 % 60),
                  static_cast<long long>(secs % 60));
    std::string out = buf;
    if (frac != 0) {
        std::snprintf(buf, sizeof buf, ".%06lld", static_cast<long long>(frac));
        out += buf;
    }
    return out;
}

// ----------------------------------------------------------------------------
// Printing
// ----------------------------------------------------------------------------

std::string print_literal(const Value& v) {
    if (const auto* n = std::get_if<std::int64_t>(&v)) return std::to_string(*n);
    std::string out = "\"";
    for (char c : std::get<std::string>(v)) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

namespace {

template <class Leaf, class LeafPrinter>
std::string print_tree(const BoolExpr<Leaf>& e, LeafPrinter&& leaf) {
    using E = BoolExpr<Leaf>;
    switch (e.kind) {
        case E::Kind::Atom:
            return leaf(e.leaf);
        case E::Kind::Not: {
            const auto& c = e.children.front();
            auto inner = print_tree(c, leaf);
            if (c.kind == E::Kind::And || c.kind == E::Kind::Or) inner = "(" + inner + ")";
            return "!" + inner;
        }
        case E::Kind::And:
        case E::Kind::Or: {
            const bool isAnd = e.kind == E::Kind::And;
            std::string out;
            for (std::size_t i = 0; i < e.children.size(); ++i) {
                const auto& c = e.children[i];
                auto part = print_tree(c, leaf);
                if (isAnd && c.kind == E::Kind::Or) part = "(" + part + ")";
                if (c.kind == e.kind) part = "(" + part + ")";
                if (i) out += isAnd ? " && " : " || ";
                out += part;
            }
            return out;
        }
    }
    return {};
}

std::string print_atom(const AttrAtom& a) {
    switch (a.kind) {
        case AttrAtom::Kind::Bare:
            return print_literal(a.value);
        case AttrAtom::Kind::Compare:
            return a.attr.text() + " " + std::string(to_string(a.op)) + " " + print_literal(a.value);
        case AttrAtom::Kind::InSet: {
            std::string out = a.attr.text() + (a.negated ? " not in (" : " in (");
            for (std::size_t i = 0; i < a.values.size(); ++i) {
                if (i) out += ", ";
                out += print_literal(a.values[i]);
            }
            return out + ")";
        }
    }
    return {};
}

std::string print_entity(const EntityDecl& d) {
    std::string out = std::string(keyword(d.type)) + " " + d.id;
    if (d.filter) out += "[" + print_attr_expr(*d.filter) + "]";
    return out;
}

std::string print_path(const PathSpec& p) {
    std::string out = p.arrow == PathArrow::Arrow ? "->" : "~>";
    if (p.minLength || p.maxLength) {
        out += "(";
        if (p.minLength && p.maxLength && *p.minLength == *p.maxLength) {
            out += std::to_string(*p.minLength);
        } else {
            if (p.minLength) out += std::to_string(*p.minLength);
            out += "~";
            if (p.maxLength) out += std::to_string(*p.maxLength);
        }
        out += ")";
    }
    if (p.finalOp) out += "[" + print_op_expr(*p.finalOp) + "]";
    return out;
}

std::string print_pattern(const Pattern& p) {
    std::string out = print_entity(p.subject) + " ";
    if (const auto* ops = std::get_if<OpExpr>(&p.connector))
        out += print_op_expr(*ops);
    else
        out += print_path(std::get<PathSpec>(p.connector));
    out += " " + print_entity(p.object);
    if (p.id) {
        out += " as " + *p.id;
        if (p.idFilter) out += "[" + print_attr_expr(*p.idFilter) + "]";
    }
    if (p.window) out += " " + print_window(*p.window);
    return out;
}

std::string print_relation(const RelClause& r) {
    if (const auto* t = std::get_if<TemporalRel>(&r)) {
        std::string out = t->left;
        switch (t->kind) {
            case TemporalRel::Kind::Before: out += " before"; break;
            case TemporalRel::Kind::After: out += " after"; break;
            case TemporalRel::Kind::Within: out += " within"; break;
        }
        if (t->bound)
            out += "[" + std::to_string(t->bound->low) + "-" + std::to_string(t->bound->high) + " " +
                   std::string(keyword(t->bound->unit)) + "]";
        return out + " " + t->right;
    }
    const auto& a = std::get<AttributeRel>(r);
    return a.left.text() + " " + std::string(to_string(a.op)) + " " + a.right.text();
}

}  // namespace

std::string print_attr_expr(const AttrExpr& e) { return print_tree(e, print_atom); }

std::string print_op_expr(const OpExpr& e) {
    return print_tree(e, [](OpKeyword op) { return std::string(keyword(op)); });
}

std::string print_window(const TimeWindow& w) {
    switch (w.kind) {
        case TimeWindow::Kind::FromTo: return "from " + format_datetime(w.from) + " to " + format_datetime(w.to);
        case TimeWindow::Kind::At: return "at " + format_datetime(w.from);
        case TimeWindow::Kind::Before: return "before " + format_datetime(w.from);
        case TimeWindow::Kind::After: return "after " + format_datetime(w.from);
        case TimeWindow::Kind::Last: return "last " + std::to_string(w.amount) + " " + std::string(keyword(w.unit));
    }
    return {};
}

std::string pretty_print(const QueryAst& ast) {
    std::string out;
    for (const auto& g : ast.globalFilters) {
        if (const auto* w = std::get_if<TimeWindow>(&g))
            out += print_window(*w);
        else
            out += print_attr_expr(std::get<AttrExpr>(g));
        out += "\n";
    }
    for (const auto& p : ast.patterns) out += print_pattern(p) + "\n";
    if (!ast.relations.empty()) {
        out += "with ";
        for (std::size_t i = 0; i < ast.relations.size(); ++i) {
            if (i) out += ", ";
            out += print_relation(ast.relations[i]);
        }
        out += "\n";
    }
    out += "return ";
    if (ast.returns.distinct) out += "distinct ";
    for (std::size_t i = 0; i < ast.returns.items.size(); ++i) {
        if (i) out += ", ";
        out += ast.returns.items[i].text();
    }
    return out + "\n";
}

// ----------------------------------------------------------------------------
// Desugaring
// ----------------------------------------------------------------------------

namespace {

void desugar_entity(EntityDecl& d) {
    if (!d.filter) return;
    const auto attr = std::string(default_attribute(to_kind(d.type)));
    d.filter->for_each_leaf_mut([&](AttrAtom& a) {
        if (a.kind == AttrAtom::Kind::Bare) a = AttrAtom::compare(AttrName{attr, std::nullopt}, CompareOp::Eq, a.value);
    });
}

}  // namespace

QueryAst desugar(QueryAst ast) {
    for (auto& p : ast.patterns) {
        desugar_entity(p.subject);
        desugar_entity(p.object);
    }
    const auto types = entity_types(ast);
    for (auto& item : ast.returns.items) {
        if (item.member) continue;
        if (auto it = types.find(item.head); it != types.end())
            item.member = std::string(default_attribute(to_kind(it->second)));
    }
    validate(ast);
    return ast;
}

// ----------------------------------------------------------------------------
// Conciseness metrics
// ----------------------------------------------------------------------------

namespace {

/// Calls `fn(c, inString)` for each character outside `#` comments.
template <class Fn>
void scan_query(std::string_view text, Fn&& fn) {
    bool inString = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (!inString && c == '#') {
            while (i < text.size() && text[i] != '\n') ++i;
            fn('\n', false);
            continue;
        }
        if (inString && c == '\\' && i + 1 < text.size()) {
            fn(c, true);
            fn(text[++i], true);
            continue;
        }
        if (c == '"') inString = !inString;
        fn(c, inString);
    }
}

}  // namespace

std::size_t count_query_chars(std::string_view text) {
    std::size_t n = 0;
    scan_query(text, [&](char c, bool inString) {
        if (inString || !std::isspace(static_cast<unsigned char>(c))) ++n;
    });
    return n;
}

std::size_t count_query_words(std::string_view text) {
    std::size_t n = 0;
    bool inWord = false;
    scan_query(text, [&](char c, bool inString) {
        const bool space = !inString && std::isspace(static_cast<unsigned char>(c));
        if (!space && !inWord) ++n;
        inWord = !space;
    });
    return n;
}

}  // namespace tbhunt::tbql
