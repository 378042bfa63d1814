#include "tbhunt/predicate.hpp"

#include <charconv>
#include <optional>

namespace tbhunt {

std::string_view to_string(CompareOp op) {
    switch (op) {
        case CompareOp::Eq: return "=";
        case CompareOp::Ne: return "!=";
        case CompareOp::Lt: return "<";
        case CompareOp::Le: return "<=";
        case CompareOp::Gt: return ">";
        case CompareOp::Ge: return ">=";
    }
    return "?";
}

bool has_wildcard(std::string_view pattern) { return pattern.find('%') != std::string_view::npos; }

bool wildcard_match(std::string_view pattern, std::string_view text) {
    std::size_t p = 0, t = 0;
    std::size_t star = std::string_view::npos, mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && pattern[p] != '%' && pattern[p] == text[t]) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '%') {
            star = p++;
            mark = t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '%') ++p;
    return p == pattern.size();
}

namespace {

std::optional<std::int64_t> as_integer(const Value& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
    const auto& s = std::get<std::string>(v);
    std::int64_t out = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return out;
}

bool equals(const Value& stored, const Value& literal) {
    if (const auto* lit = std::get_if<std::string>(&literal)) {
        if (const auto* s = std::get_if<std::string>(&stored)) return wildcard_match(*lit, *s);
        return wildcard_match(*lit, std::to_string(std::get<std::int64_t>(stored)));
    }
    const auto litInt = std::get<std::int64_t>(literal);
    if (const auto* i = std::get_if<std::int64_t>(&stored)) return *i == litInt;
    return std::get<std::string>(stored) == std::to_string(litInt);
}

template <class T>
bool ordered(const T& a, CompareOp op, const T& b) {
    switch (op) {
        case CompareOp::Lt: return a < b;
        case CompareOp::Le: return a <= b;
        case CompareOp::Gt: return a > b;
        case CompareOp::Ge: return a >= b;
        default: return false;
    }
}

}  // namespace

bool compare_values(const Value& stored, CompareOp op, const Value& literal) {
    if (op == CompareOp::Eq) return equals(stored, literal);
    if (op == CompareOp::Ne) return !equals(stored, literal);
    auto a = as_integer(stored);
    auto b = as_integer(literal);
    if (a && b) return ordered(*a, op, *b);
    return ordered(value_to_string(stored), op, value_to_string(literal));
}

PredicateAtom compare_atom(std::string attribute, CompareOp op, Value value) {
    PredicateAtom a;
    a.kind = PredicateAtom::Kind::Compare;
    a.attribute = std::move(attribute);
    a.op = op;
    a.value = std::move(value);
    return a;
}

namespace {

bool atom_on_value(const PredicateAtom& atom, const Value& stored) {
    if (atom.kind == PredicateAtom::Kind::Compare) return compare_values(stored, atom.op, atom.value);
    bool found = false;
    for (const auto& v : atom.values) {
        if (equals(stored, v)) {
            found = true;
            break;
        }
    }
    return found != atom.negated;
}

bool atom_on_entity(const PredicateAtom& atom, const SystemEntity& entity) {
    if (const auto* f = entity.file(); f && atom.attribute == "name") {
        // Positive tests succeed if either form matches; negative tests
        // (!=, not in) require both forms to pass.
        const bool negative = (atom.kind == PredicateAtom::Kind::Compare && atom.op == CompareOp::Ne) ||
                              (atom.kind == PredicateAtom::Kind::InSet && atom.negated);
        const bool onName = atom_on_value(atom, Value{f->name});
        const bool onPath = atom_on_value(atom, Value{f->path});
        return negative ? (onName && onPath) : (onName || onPath);
    }
    auto v = entity.attribute(atom.attribute);
    if (!v) return false;
    return atom_on_value(atom, *v);
}

}  // namespace

bool evaluate(const Predicate& p, const SystemEntity& entity) {
    return p.evaluate([&](const PredicateAtom& a) { return atom_on_entity(a, entity); });
}

bool evaluate(const Predicate& p, const SystemEvent& event) {
    return p.evaluate([&](const PredicateAtom& a) {
        auto v = event_attribute(event, a.attribute);
        if (!v) return false;
        return atom_on_value(a, *v);
    });
}

namespace {

std::string literal_text(const Value& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    return "\"" + std::get<std::string>(v) + "\"";
}

void print(const Predicate& p, std::string& out) {
    switch (p.kind) {
        case Predicate::Kind::Atom: {
            const auto& a = p.leaf;
            if (a.kind == PredicateAtom::Kind::Compare) {
                out += a.attribute + " " + std::string(to_string(a.op)) + " " + literal_text(a.value);
            } else {
                out += a.attribute + (a.negated ? " not in (" : " in (");
                for (std::size_t i = 0; i < a.values.size(); ++i) {
                    if (i) out += ", ";
                    out += literal_text(a.values[i]);
                }
                out += ")";
            }
            return;
        }
        case Predicate::Kind::Not:
            out += "!(";
            print(p.children.front(), out);
            out += ")";
            return;
        case Predicate::Kind::And:
        case Predicate::Kind::Or: {
            if (p.children.empty()) {
                out += p.kind == Predicate::Kind::And ? "true" : "false";
                return;
            }
            out += "(";
            for (std::size_t i = 0; i < p.children.size(); ++i) {
                if (i) out += p.kind == Predicate::Kind::And ? " && " : " || ";
                print(p.children[i], out);
            }
            out += ")";
            return;
        }
    }
}

}  // namespace

std::string to_string(const Predicate& p) {
    std::string out;
    print(p, out);
    return out;
}

}  // namespace tbhunt
