#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tbhunt/audit_model.hpp"

namespace tbhunt::tbql::detail {

enum class Tok {
    Ident,
    Keyword,
    String,
    Int,
    DateTime,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Dot,
    Semicolon,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Bang,
    AndAnd,
    OrOr,
    TildeArrow,
    Arrow,
    Tilde,
    Minus,
    End,
};

struct Token {
    Tok kind = Tok::End;
    std::string text;       // identifier/keyword/string payload (unescaped)
    std::int64_t number = 0;
    Micros instant = 0;
    std::size_t line = 1;
    std::size_t column = 1;
};

std::string describe(Tok kind);
bool is_keyword(std::string_view word);

/// Splits TBQL text into tokens, skipping whitespace and `#` comments.
/// Throws SyntaxError on unterminated strings or stray characters.
std::vector<Token> tokenize(std::string_view text);

}  // namespace tbhunt::tbql::detail
