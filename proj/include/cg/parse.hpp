#pragma once

#include <string>

#include "cg/expr.hpp"

namespace cg {

enum class ParseCode { syntax, unknown_symbol, arity, structure };

struct ParseError : std::runtime_error {
  ParseError(ParseCode c, int line, int col, const std::string& msg);
  ParseCode code;
  int line;
  int col;
};

const char* parse_code_name(ParseCode c);

// expr   := term (('+'|'-') term)*
// term   := [rational] factor ('*' factor)*
// factor := NAME '[' index+ ']' | 'D(' index ',' factor ')' | NAME | rational | '(' expr ')'
// index  := ('^'|'_') IDENT
// `sqrtg`/`isqrtg` are powers of sqrt(det g), `dim` is the dimension symbol,
// `ginv` and `delta` are the metric with raised or mixed slots.
// Lines starting with "//" are comments.
Expr parse(const std::string& src);

}  // namespace cg
