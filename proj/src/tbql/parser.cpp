#include <algorithm>
#include <map>

#include "lexer.hpp"
#include "tbhunt/tbql/tbql.hpp"

namespace tbhunt::tbql {

SyntaxError::SyntaxError(std::size_t line, std::size_t column, std::set<std::string> expected, std::string found)
    : ValidationError([&] {
          std::string msg = "syntax error at line " + std::to_string(line) + ", column " + std::to_string(column) +
                            ": expected ";
          if (expected.size() > 1) msg += "one of ";
          bool first = true;
          for (const auto& e : expected) {
              if (!first) msg += ", ";
              msg += e;
              first = false;
          }
          msg += "; found " + found;
          return msg;
      }()),
      line_(line),
      column_(column),
      expected_(std::move(expected)),
      found_(std::move(found)) {}

namespace {

using detail::Tok;
using detail::Token;

class Parser {
public:
    explicit Parser(std::string_view text) : tokens_(detail::tokenize(text)) {}

    QueryAst query() {
        QueryAst ast;
        while (!at_pattern_start()) {
            if (at_window_start()) {
                ast.globalFilters.emplace_back(window());
            } else if (at_attr_start()) {
                ast.globalFilters.emplace_back(attr_expr());
            } else {
                fail({"'file'", "'proc'", "'ip'", "global filter"});
            }
        }
        while (at_pattern_start()) {
            ast.patterns.push_back(pattern());
            accept(Tok::Semicolon);
        }
        if (at_keyword("with")) {
            next();
            ast.relations.push_back(relation());
            while (accept(Tok::Comma)) ast.relations.push_back(relation());
        }
        if (!at_keyword("return")) {
            if (ast.relations.empty())
                fail({"'file'", "'proc'", "'ip'", "'with'", "'return'"});
            else
                fail({"','", "'return'"});
        }
        next();
        ast.returns.distinct = accept_keyword("distinct");
        ast.returns.items.push_back(attr_name("return attribute"));
        while (accept(Tok::Comma)) ast.returns.items.push_back(attr_name("return attribute"));
        accept(Tok::Semicolon);
        expect(Tok::End);
        return ast;
    }

    TimeWindow single_window() {
        if (!at_window_start()) fail({"'from'", "'at'", "'before'", "'after'", "'last'"});
        auto w = window();
        expect(Tok::End);
        return w;
    }

    AttrExpr single_attr_expr() {
        auto e = attr_expr();
        expect(Tok::End);
        return e;
    }

private:
    // -- token helpers -------------------------------------------------------

    const Token& peek(std::size_t k = 0) const { return tokens_[std::min(pos_ + k, tokens_.size() - 1)]; }
    const Token& next() { return tokens_[std::min(pos_++, tokens_.size() - 1)]; }

    bool at(Tok k) const { return peek().kind == k; }
    bool at_keyword(std::string_view kw, std::size_t k = 0) const {
        return peek(k).kind == Tok::Keyword && peek(k).text == kw;
    }
    bool accept(Tok k) {
        if (!at(k)) return false;
        next();
        return true;
    }
    bool accept_keyword(std::string_view kw) {
        if (!at_keyword(kw)) return false;
        next();
        return true;
    }

    [[noreturn]] void fail(std::set<std::string> expected) const {
        const auto& t = peek();
        std::string found = t.kind == Tok::End ? "end of input" : "'" + t.text + "'";
        if (t.kind == Tok::String) found = "string \"" + t.text + "\"";
        throw SyntaxError(t.line, t.column, std::move(expected), std::move(found));
    }

    const Token& expect(Tok k) {
        if (!at(k)) fail({detail::describe(k)});
        return next();
    }
    void expect_keyword(std::string_view kw) {
        if (!at_keyword(kw)) fail({"'" + std::string(kw) + "'"});
        next();
    }
    std::string identifier(const std::string& what) {
        if (!at(Tok::Ident)) fail({what});
        return next().text;
    }

    bool at_pattern_start() const { return at_keyword("file") || at_keyword("proc") || at_keyword("ip"); }
    bool at_window_start() const {
        return at_keyword("from") || at_keyword("at") || at_keyword("before") || at_keyword("after") ||
               at_keyword("last");
    }
    bool at_attr_start() const {
        return at(Tok::Ident) || at(Tok::String) || at(Tok::Int) || at(Tok::Minus) || at(Tok::Bang) ||
               at(Tok::LParen);
    }

    // -- entities and patterns ----------------------------------------------

    EntityType entity_type() {
        if (accept_keyword("file")) return EntityType::File;
        if (accept_keyword("proc")) return EntityType::Proc;
        if (accept_keyword("ip")) return EntityType::Ip;
        fail({"'file'", "'proc'", "'ip'"});
    }

    EntityDecl entity() {
        EntityDecl d;
        d.type = entity_type();
        d.id = identifier("entity id");
        if (accept(Tok::LBracket)) {
            d.filter = attr_expr();
            expect(Tok::RBracket);
        }
        return d;
    }

    Pattern pattern() {
        Pattern p;
        p.subject = entity();
        if (at(Tok::TildeArrow) || at(Tok::Arrow)) {
            p.connector = path_spec();
        } else {
            p.connector = op_expr();
        }
        p.object = entity();
        if (accept_keyword("as")) {
            p.id = identifier("pattern id");
            if (accept(Tok::LBracket)) {
                p.idFilter = attr_expr();
                expect(Tok::RBracket);
            }
        }
        if (at_window_start()) p.window = window();
        return p;
    }

    PathSpec path_spec() {
        PathSpec s;
        const Token& arrow = next();
        s.arrow = arrow.kind == Tok::Arrow ? PathArrow::Arrow : PathArrow::Tilde;
        if (at(Tok::LParen)) {
            const auto& open = next();
            if (s.arrow == PathArrow::Arrow)
                throw SyntaxError(open.line, open.column, {"'['", "entity type"},
                                  "'(' ('->' denotes a single hop; use '~>' for a length range)");
            std::optional<int> lo, hi;
            bool tilde = false;
            if (at(Tok::Int)) lo = static_cast<int>(next().number);
            if (accept(Tok::Tilde)) tilde = true;
            if (at(Tok::Int)) {
                if (!tilde && lo) fail({"'~'", "')'"});
                hi = static_cast<int>(next().number);
            }
            expect(Tok::RParen);
            if (lo && !tilde && !hi) hi = lo;
            s.minLength = lo;
            s.maxLength = hi;
        }
        if (accept(Tok::LBracket)) {
            s.finalOp = op_expr();
            expect(Tok::RBracket);
        }
        return s;
    }

    // -- operation expressions ----------------------------------------------

    OpExpr op_expr() {
        std::vector<OpExpr> parts{op_and()};
        while (accept(Tok::OrOr)) parts.push_back(op_and());
        return OpExpr::any_of(std::move(parts));
    }
    OpExpr op_and() {
        std::vector<OpExpr> parts{op_unary()};
        while (accept(Tok::AndAnd)) parts.push_back(op_unary());
        return OpExpr::all_of(std::move(parts));
    }
    OpExpr op_unary() {
        if (accept(Tok::Bang)) return OpExpr::negate(op_unary());
        if (accept(Tok::LParen)) {
            auto e = op_expr();
            expect(Tok::RParen);
            return e;
        }
        static const std::pair<std::string_view, OpKeyword> ops[] = {
            {"read", OpKeyword::Read},   {"write", OpKeyword::Write}, {"execute", OpKeyword::Execute},
            {"start", OpKeyword::Start}, {"end", OpKeyword::End},     {"rename", OpKeyword::Rename},
            {"open", OpKeyword::Open}};
        if (at(Tok::Keyword)) {
            for (const auto& [kw, op] : ops) {
                if (peek().text == kw) {
                    next();
                    return OpExpr::make_leaf(op);
                }
            }
        }
        fail({"operation", "'!'", "'('", "'~>'", "'->'"});
    }

    // -- attribute expressions ----------------------------------------------

    AttrExpr attr_expr() {
        std::vector<AttrExpr> parts{attr_and()};
        while (accept(Tok::OrOr)) parts.push_back(attr_and());
        return AttrExpr::any_of(std::move(parts));
    }
    AttrExpr attr_and() {
        std::vector<AttrExpr> parts{attr_unary()};
        while (accept(Tok::AndAnd)) parts.push_back(attr_unary());
        return AttrExpr::all_of(std::move(parts));
    }
    AttrExpr attr_unary() {
        if (accept(Tok::Bang)) return AttrExpr::negate(attr_unary());
        if (accept(Tok::LParen)) {
            auto e = attr_expr();
            expect(Tok::RParen);
            return e;
        }
        if (at(Tok::String) || at(Tok::Int) || at(Tok::Minus)) return AttrExpr::make_leaf(AttrAtom::bare(literal()));
        if (at(Tok::Ident)) {
            auto name = attr_name("attribute");
            if (auto op = compare_op()) return AttrExpr::make_leaf(AttrAtom::compare(std::move(name), *op, literal()));
            bool negated = accept_keyword("not");
            if (!accept_keyword("in")) {
                if (negated) fail({"'in'"});
                fail({"'='", "'!='", "'<'", "'<='", "'>'", "'>='", "'in'", "'not'"});
            }
            return AttrExpr::make_leaf(AttrAtom::in_set(std::move(name), value_set(), negated));
        }
        fail({"attribute", "string", "integer", "'!'", "'('"});
    }

    std::optional<CompareOp> compare_op() {
        switch (peek().kind) {
            case Tok::Eq: next(); return CompareOp::Eq;
            case Tok::Ne: next(); return CompareOp::Ne;
            case Tok::Lt: next(); return CompareOp::Lt;
            case Tok::Le: next(); return CompareOp::Le;
            case Tok::Gt: next(); return CompareOp::Gt;
            case Tok::Ge: next(); return CompareOp::Ge;
            default: return std::nullopt;
        }
    }

    Value literal() {
        if (at(Tok::String)) return next().text;
        bool negative = accept(Tok::Minus);
        if (at(Tok::Int)) {
            auto n = next().number;
            return negative ? -n : n;
        }
        fail({"string", "integer"});
    }

    std::vector<Value> value_set() {
        expect(Tok::LParen);
        std::vector<Value> out{literal()};
        while (accept(Tok::Comma)) out.push_back(literal());
        expect(Tok::RParen);
        return out;
    }

    AttrName attr_name(const std::string& what) {
        AttrName a;
        a.head = identifier(what);
        if (accept(Tok::Dot)) a.member = identifier("attribute name");
        return a;
    }

    // -- windows and relations ----------------------------------------------

    Micros datetime() { return expect(Tok::DateTime).instant; }

    TimeUnit time_unit() {
        if (accept_keyword("sec")) return TimeUnit::Sec;
        if (accept_keyword("min")) return TimeUnit::Min;
        if (accept_keyword("hour")) return TimeUnit::Hour;
        if (accept_keyword("day")) return TimeUnit::Day;
        fail({"'sec'", "'min'", "'hour'", "'day'"});
    }

    TimeWindow window() {
        TimeWindow w;
        if (accept_keyword("from")) {
            w.kind = TimeWindow::Kind::FromTo;
            w.from = datetime();
            expect_keyword("to");
            w.to = datetime();
        } else if (accept_keyword("at")) {
            w.kind = TimeWindow::Kind::At;
            w.from = datetime();
        } else if (accept_keyword("before")) {
            w.kind = TimeWindow::Kind::Before;
            w.from = datetime();
        } else if (accept_keyword("after")) {
            w.kind = TimeWindow::Kind::After;
            w.from = datetime();
        } else {
            expect_keyword("last");
            w.kind = TimeWindow::Kind::Last;
            w.amount = expect(Tok::Int).number;
            w.unit = time_unit();
        }
        return w;
    }

    RelClause relation() {
        if (at(Tok::Ident) &&
            (at_keyword("before", 1) || at_keyword("after", 1) || at_keyword("within", 1))) {
            TemporalRel r;
            r.left = next().text;
            const auto kw = next().text;
            r.kind = kw == "before"  ? TemporalRel::Kind::Before
                     : kw == "after" ? TemporalRel::Kind::After
                                     : TemporalRel::Kind::Within;
            if (accept(Tok::LBracket)) {
                TemporalBound b;
                b.low = expect(Tok::Int).number;
                expect(Tok::Minus);
                b.high = expect(Tok::Int).number;
                b.unit = time_unit();
                expect(Tok::RBracket);
                r.bound = b;
            }
            r.right = identifier("pattern id");
            return r;
        }
        AttributeRel r;
        r.left = attr_name("pattern id or attribute");
        auto op = compare_op();
        if (!op) fail({"'before'", "'after'", "'within'", "'='", "'!='", "'<'", "'<='", "'>'", "'>='"});
        r.op = *op;
        r.right = attr_name("attribute");
        return r;
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
};

}  // namespace

QueryAst parse_unchecked(std::string_view text) { return Parser(text).query(); }

QueryAst parse(std::string_view text) {
    auto ast = parse_unchecked(text);
    validate(ast);
    return ast;
}

TimeWindow parse_window(std::string_view text) { return Parser(text).single_window(); }

AttrExpr parse_attr_expr(std::string_view text) { return Parser(text).single_attr_expr(); }

// ----------------------------------------------------------------------------
// Validation
// ----------------------------------------------------------------------------

std::map<std::string, EntityType> entity_types(const QueryAst& ast) {
    std::map<std::string, EntityType> out;
    for (const auto& p : ast.patterns) {
        out.emplace(p.subject.id, p.subject.type);
        out.emplace(p.object.id, p.object.type);
    }
    return out;
}

namespace {

void check_entity_filter(const EntityDecl& d) {
    if (!d.filter) return;
    const auto kind = to_kind(d.type);
    d.filter->for_each_leaf([&](const AttrAtom& a) {
        if (a.kind == AttrAtom::Kind::Bare) return;
        if (a.attr.member)
            throw SemanticError("attribute '" + a.attr.text() + "' inside entity '" + d.id +
                                "' must be a plain attribute name");
        if (!has_attribute(kind, a.attr.head))
            throw SemanticError("entity '" + d.id + "' of type " + std::string(keyword(d.type)) +
                                " has no attribute '" + a.attr.head + "'");
    });
}

}  // namespace

void validate(QueryAst& ast) {
    if (ast.patterns.empty()) throw SemanticError("query declares no patterns");
    if (ast.returns.items.empty()) throw SemanticError("return clause lists no attributes");

    std::map<std::string, EntityType> types;
    std::map<std::string, std::vector<std::size_t>> uses;
    auto declare = [&](const EntityDecl& d, std::size_t patternIndex) {
        auto [it, inserted] = types.emplace(d.id, d.type);
        if (!inserted && it->second != d.type)
            throw SemanticError("entity '" + d.id + "' redeclared as " + std::string(keyword(d.type)) + " (was " +
                                std::string(keyword(it->second)) + ")");
        auto& u = uses[d.id];
        if (u.empty() || u.back() != patternIndex) u.push_back(patternIndex);
        check_entity_filter(d);
    };

    std::map<std::string, std::size_t> patternIds;
    for (std::size_t i = 0; i < ast.patterns.size(); ++i) {
        const auto& p = ast.patterns[i];
        if (p.subject.type != EntityType::Proc)
            throw SemanticError("pattern " + std::to_string(i + 1) + ": subject '" + p.subject.id +
                                "' must be a proc entity");
        declare(p.subject, i);
        declare(p.object, i);
        if (p.id && !patternIds.emplace(*p.id, i).second) throw SemanticError("duplicate pattern id '" + *p.id + "'");
        if (p.idFilter) {
            p.idFilter->for_each_leaf([&](const AttrAtom& a) {
                if (a.kind == AttrAtom::Kind::Bare)
                    throw SemanticError("pattern '" + *p.id + "' filter needs explicit event attributes");
                if (a.attr.member || !is_event_attribute(a.attr.head))
                    throw SemanticError("'" + a.attr.text() + "' is not an event attribute");
            });
        }
        if (const auto* path = std::get_if<PathSpec>(&p.connector)) {
            if (path->arrow == PathArrow::Arrow && (path->minLength || path->maxLength))
                throw SemanticError("'->' paths have length 1 and take no range");
            if (path->minLength && *path->minLength < 1) throw SemanticError("path minimum length must be >= 1");
            if (path->maxLength && *path->maxLength < 1) throw SemanticError("path maximum length must be >= 1");
            if (path->minLength && path->maxLength && *path->minLength > *path->maxLength)
                throw SemanticError("path minimum length exceeds maximum length");
        }
        if (p.window && p.window->kind == TimeWindow::Kind::FromTo && p.window->from > p.window->to)
            throw SemanticError("time window starts after it ends");
    }
    for (const auto& [id, idx] : patternIds)
        if (types.count(id)) throw SemanticError("pattern id '" + id + "' is also used as an entity id");

    auto check_qualified = [&](const AttrName& a, const char* where) {
        if (auto t = types.find(a.head); t != types.end()) {
            if (a.member && !has_attribute(to_kind(t->second), *a.member))
                throw SemanticError(std::string(where) + ": entity '" + a.head + "' has no attribute '" + *a.member + "'");
            return;
        }
        if (patternIds.count(a.head)) {
            if (!a.member) throw SemanticError(std::string(where) + ": pattern '" + a.head + "' needs an event attribute");
            if (!is_event_attribute(*a.member))
                throw SemanticError(std::string(where) + ": '" + *a.member + "' is not an event attribute");
            return;
        }
        throw SemanticError(std::string(where) + ": undeclared id '" + a.head + "'");
    };

    for (const auto& g : ast.globalFilters) {
        if (const auto* w = std::get_if<TimeWindow>(&g)) {
            if (w->kind == TimeWindow::Kind::FromTo && w->from > w->to)
                throw SemanticError("time window starts after it ends");
            continue;
        }
        std::get<AttrExpr>(g).for_each_leaf([&](const AttrAtom& a) {
            if (a.kind == AttrAtom::Kind::Bare)
                throw SemanticError("global filters need explicit attribute names");
            if (a.attr.member) {
                check_qualified(a.attr, "global filter");
                return;
            }
            const auto& name = a.attr.head;
            if (!has_attribute(EntityKind::File, name) && !has_attribute(EntityKind::Process, name) &&
                !has_attribute(EntityKind::NetworkConnection, name) && !is_event_attribute(name))
                throw SemanticError("global filter: unknown attribute '" + name + "'");
        });
    }

    for (const auto& rel : ast.relations) {
        if (const auto* t = std::get_if<TemporalRel>(&rel)) {
            for (const auto* id : {&t->left, &t->right})
                if (!patternIds.count(*id)) throw SemanticError("relation references undeclared pattern id '" + *id + "'");
            if (t->bound && t->bound->low > t->bound->high)
                throw SemanticError("temporal bound lower limit exceeds upper limit");
            if (t->kind == TemporalRel::Kind::Within && !t->bound)
                throw SemanticError("'within' requires a bound such as [0-5 min]");
        } else {
            const auto& a = std::get<AttributeRel>(rel);
            if (!a.left.member || !a.right.member)
                throw SemanticError("attribute relations compare qualified attributes such as p1.pid");
            check_qualified(a.left, "relation");
            check_qualified(a.right, "relation");
        }
    }

    for (const auto& item : ast.returns.items) check_qualified(item, "return");

    ast.sharedEntities.clear();
    for (const auto& [id, pats] : uses)
        if (pats.size() > 1) ast.sharedEntities.push_back({id, pats});
}

}  // namespace tbhunt::tbql
