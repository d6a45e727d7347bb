#include "cg/parse.hpp"

#include <cctype>

#include "cg/calculus.hpp"

namespace cg {

ParseError::ParseError(ParseCode c, int l, int co, const std::string& msg)
    : std::runtime_error(std::string(parse_code_name(c)) + " at " + std::to_string(l) + ":" + std::to_string(co) +
                         ": " + msg),
      code(c),
      line(l),
      col(co) {}

const char* parse_code_name(ParseCode c) {
  switch (c) {
    case ParseCode::syntax: return "E_SYNTAX";
    case ParseCode::unknown_symbol: return "E_UNKNOWN_SYMBOL";
    case ParseCode::arity: return "E_ARITY";
    case ParseCode::structure: return "E_STRUCTURE";
  }
  return "E_UNKNOWN";
}

namespace {

class Parser {
 public:
  explicit Parser(const std::string& s) : src_(s) {}

  Expr run() {
    skip();
    if (at_end()) return {};
    Expr e = expr();
    skip();
    if (!at_end()) fail(ParseCode::syntax, std::string("unexpected '") + peek() + "'");
    for (const auto& t : e.terms) {
      try {
        validate(t);
      } catch (const StructureError& err) {
        fail(ParseCode::structure, err.what());
      }
    }
    try {
      free_signature(e);
    } catch (const StructureError& err) {
      fail(ParseCode::structure, err.what());
    }
    return e;
  }

 private:
  const std::string& src_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;

  [[noreturn]] void fail(ParseCode c, const std::string& msg) { throw ParseError(c, line_, col_, msg); }
  bool at_end() const { return pos_ >= src_.size(); }
  char peek() const { return at_end() ? '\0' : src_[pos_]; }
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }
  void skip() {
    for (;;) {
      while (!at_end() && std::isspace(static_cast<unsigned char>(peek()))) advance();
      if (src_.compare(pos_, 2, "//") == 0) {
        while (!at_end() && peek() != '\n') advance();
        continue;
      }
      return;
    }
  }
  bool accept(char c) {
    skip();
    if (peek() == c) {
      advance();
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) fail(ParseCode::syntax, std::string("expected '") + c + "'");
  }
  static bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '#' || c == '~'; }

  std::string ident() {
    skip();
    std::size_t b = pos_;
    while (!at_end() && ident_char(peek())) advance();
    if (b == pos_) fail(ParseCode::syntax, "expected identifier");
    return src_.substr(b, pos_ - b);
  }

  Rational number() {
    skip();
    std::size_t b = pos_;
    while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) advance();
    std::string num = src_.substr(b, pos_ - b);
    std::int64_t den = 1;
    if (peek() == '/') {
      advance();
      std::size_t c = pos_;
      while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) advance();
      if (c == pos_) fail(ParseCode::syntax, "expected denominator");
      den = std::stoll(src_.substr(c, pos_ - c));
      if (den == 0) fail(ParseCode::syntax, "zero denominator");
    }
    return Rational(std::stoll(num), den);
  }

  Index index() {
    skip();
    char v = peek();
    if (v != '^' && v != '_') fail(ParseCode::syntax, "expected index ('^' or '_')");
    advance();
    if (!ident_char(peek())) fail(ParseCode::syntax, "expected index label");
    std::size_t b = pos_;
    while (!at_end() && ident_char(peek())) advance();
    return Index{label(src_.substr(b, pos_ - b)), v == '^'};
  }

  Expr expr() {
    Expr e;
    bool neg = accept('-');
    if (!neg) accept('+');
    Expr t = term();
    e += neg ? -t : t;
    for (;;) {
      if (accept('+')) {
        e += term();
      } else if (accept('-')) {
        e -= term();
      } else {
        return e;
      }
    }
  }

  Expr term() {
    Expr e = factor();
    while (accept('*')) e = e * factor();
    return e;
  }

  Expr factor() {
    skip();
    char c = peek();
    if (std::isdigit(static_cast<unsigned char>(c))) return Expr::scalar(number());
    if (c == '(') {
      advance();
      Expr e = expr();
      expect(')');
      return e;
    }
    if (!ident_char(c)) fail(ParseCode::syntax, std::string("unexpected '") + (c ? std::string(1, c) : "end of input") + "'");
    int l0 = line_, c0 = col_;
    std::string name = ident();
    if (name == "D" && accept('(')) {
      Index i = index();
      expect(',');
      Expr inner = factor();
      expect(')');
      return nabla(i, inner);
    }
    std::vector<Index> slots;
    if (accept('[')) {
      skip();
      while (peek() != ']') {
        if (at_end()) fail(ParseCode::syntax, "unterminated index list");
        slots.push_back(index());
        skip();
      }
      advance();
      if (slots.empty()) fail(ParseCode::syntax, "empty index list");
    }
    auto bare = [&](int wpow, int dimpow) {
      if (!slots.empty()) throw ParseError(ParseCode::arity, l0, c0, "'" + name + "' takes no indices");
      return ex(Rational(1), {}, wpow, dimpow);
    };
    if (name == "sqrtg") return bare(1, 0);
    if (name == "isqrtg") return bare(-1, 0);
    if (name == "dim") return bare(0, 1);
    if (name == "idim") return bare(0, -1);
    std::string lookup = (name == "ginv" || name == "delta") ? "g" : name;
    int id = Registry::instance().find(lookup);
    if (id < 0) throw ParseError(ParseCode::unknown_symbol, l0, c0, "unknown symbol '" + name + "'");
    if (static_cast<int>(slots.size()) != sym(id).nslots)
      throw ParseError(ParseCode::arity, l0, c0,
                       "'" + name + "' expects " + std::to_string(sym(id).nslots) + " indices, got " +
                           std::to_string(slots.size()));
    return ex({Factor{id, {}, slots}});
  }
};

}  // namespace

Expr parse(const std::string& src) { return Parser(src).run(); }

}  // namespace cg
