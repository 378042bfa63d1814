#include "lexer.hpp"

#include <array>
#include <cctype>
#include <charconv>

#include "tbhunt/tbql/tbql.hpp"

namespace tbhunt::tbql::detail {

namespace {

constexpr std::array<std::string_view, 27> kKeywords{
    "file",  "proc",  "ip",     "as",      "from", "to",     "at",   "before", "after", "last",
    "with",  "within", "return", "distinct", "in",  "not",    "read", "write",  "start", "execute",
    "end",   "rename", "open",   "sec",     "min",  "hour",   "day"};

bool digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

/// Length of a datetime literal starting at `s`, or 0.
std::size_t datetime_length(std::string_view s) {
    // YYYY-MM-DDTHH:MM:SS
    static constexpr std::string_view shape = "dddd-dd-ddTdd:dd:dd";
    if (s.size() < shape.size()) return 0;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == 'd') {
            if (!digit(s[i])) return 0;
        } else if (s[i] != shape[i]) {
            return 0;
        }
    }
    std::size_t n = shape.size();
    if (n < s.size() && s[n] == '.') {
        std::size_t k = n + 1;
        while (k < s.size() && digit(s[k]) && k - n <= 6) ++k;
        if (k > n + 1) n = k;
    }
    return n;
}

}  // namespace

bool is_keyword(std::string_view word) {
    for (auto k : kKeywords)
        if (k == word) return true;
    return false;
}

std::string describe(Tok kind) {
    switch (kind) {
        case Tok::Ident: return "identifier";
        case Tok::Keyword: return "keyword";
        case Tok::String: return "string";
        case Tok::Int: return "integer";
        case Tok::DateTime: return "datetime";
        case Tok::LBracket: return "'['";
        case Tok::RBracket: return "']'";
        case Tok::LParen: return "'('";
        case Tok::RParen: return "')'";
        case Tok::Comma: return "','";
        case Tok::Dot: return "'.'";
        case Tok::Semicolon: return "';'";
        case Tok::Eq: return "'='";
        case Tok::Ne: return "'!='";
        case Tok::Lt: return "'<'";
        case Tok::Le: return "'<='";
        case Tok::Gt: return "'>'";
        case Tok::Ge: return "'>='";
        case Tok::Bang: return "'!'";
        case Tok::AndAnd: return "'&&'";
        case Tok::OrOr: return "'||'";
        case Tok::TildeArrow: return "'~>'";
        case Tok::Arrow: return "'->'";
        case Tok::Tilde: return "'~'";
        case Tok::Minus: return "'-'";
        case Tok::End: return "end of input";
    }
    return "?";
}

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    std::size_t i = 0, line = 1, col = 1;
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n && i < text.size(); ++k, ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
    };
    auto fail = [&](std::string expected, std::string found) -> SyntaxError {
        return SyntaxError(line, col, {std::move(expected)}, std::move(found));
    };

    while (i < text.size()) {
        const char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            advance(1);
            continue;
        }
        if (c == '#') {
            while (i < text.size() && text[i] != '\n') advance(1);
            continue;
        }
        Token t;
        t.line = line;
        t.column = col;
        auto rest = text.substr(i);
        auto punct = [&](Tok k, std::size_t n) {
            t.kind = k;
            t.text = std::string(rest.substr(0, n));
            advance(n);
        };
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t n = 1;
            while (n < rest.size() && (std::isalnum(static_cast<unsigned char>(rest[n])) || rest[n] == '_')) ++n;
            t.text = std::string(rest.substr(0, n));
            t.kind = is_keyword(t.text) ? Tok::Keyword : Tok::Ident;
            advance(n);
        } else if (digit(c)) {
            if (auto n = datetime_length(rest)) {
                t.kind = Tok::DateTime;
                t.text = std::string(rest.substr(0, n));
                auto parsed = parse_datetime(t.text);
                if (!parsed) throw fail("valid datetime", t.text);
                t.instant = *parsed;
                advance(n);
            } else {
                std::size_t len = 1;
                while (len < rest.size() && digit(rest[len])) ++len;
                t.kind = Tok::Int;
                t.text = std::string(rest.substr(0, len));
                auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + len, t.number);
                if (ec != std::errc{}) throw fail("integer in range", t.text);
                advance(len);
            }
        } else if (c == '"') {
            std::size_t k = 1;
            std::string value;
            bool closed = false;
            while (k < rest.size()) {
                if (rest[k] == '\\' && k + 1 < rest.size() && (rest[k + 1] == '"' || rest[k + 1] == '\\')) {
                    value.push_back(rest[k + 1]);
                    k += 2;
                } else if (rest[k] == '"') {
                    closed = true;
                    ++k;
                    break;
                } else if (rest[k] == '\n') {
                    break;
                } else {
                    value.push_back(rest[k++]);
                }
            }
            if (!closed) throw fail("closing '\"'", "unterminated string");
            t.kind = Tok::String;
            t.text = std::move(value);
            advance(k);
        } else if (rest.starts_with("~>")) {
            punct(Tok::TildeArrow, 2);
        } else if (rest.starts_with("->")) {
            punct(Tok::Arrow, 2);
        } else if (rest.starts_with("&&")) {
            punct(Tok::AndAnd, 2);
        } else if (rest.starts_with("||")) {
            punct(Tok::OrOr, 2);
        } else if (rest.starts_with("!=")) {
            punct(Tok::Ne, 2);
        } else if (rest.starts_with("<=")) {
            punct(Tok::Le, 2);
        } else if (rest.starts_with(">=")) {
            punct(Tok::Ge, 2);
        } else {
            switch (c) {
                case '[': punct(Tok::LBracket, 1); break;
                case ']': punct(Tok::RBracket, 1); break;
                case '(': punct(Tok::LParen, 1); break;
                case ')': punct(Tok::RParen, 1); break;
                case ',': punct(Tok::Comma, 1); break;
                case '.': punct(Tok::Dot, 1); break;
                case ';': punct(Tok::Semicolon, 1); break;
                case '=': punct(Tok::Eq, 1); break;
                case '<': punct(Tok::Lt, 1); break;
                case '>': punct(Tok::Gt, 1); break;
                case '!': punct(Tok::Bang, 1); break;
                case '~': punct(Tok::Tilde, 1); break;
                case '-': punct(Tok::Minus, 1); break;
                default: throw fail("token", std::string(1, c));
            }
        }
        out.push_back(std::move(t));
    }
    Token end;
    end.kind = Tok::End;
    end.line = line;
    end.column = col;
    out.push_back(end);
    return out;
}

}  // namespace tbhunt::tbql::detail
