#pragma once

#include <string>

#include "json.hpp"
#include "cg/expr.hpp"

namespace cg {

enum class Format { text, latex, json };

// Text output is valid parser input; canonical dummies print as #0, #1, ...
std::string render_text(const Expr& e);
std::string render_term_text(const Term& t);
std::string render_latex(const Expr& e);
nlohmann::json to_json(const Expr& e);
Expr from_json(const nlohmann::json& j);
std::string render(const Expr& e, Format f);

}  // namespace cg
