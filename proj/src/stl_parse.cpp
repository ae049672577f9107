#include "fedstl/error.hpp"
#include "fedstl/stl.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>

namespace fedstl {

namespace {

// Recursive-descent parser. Precedence, loosest first:
//   ->  (right assoc)   |   &   U[lo,hi]   unary (! G F)   primary
class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Formula parse_all() {
    Formula f = parse_implies();
    skip_ws();
    if (pos_ != text_.size()) fail_unexpected();
    return f;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }
  [[noreturn]] void fail_at(const std::string& msg, std::size_t at) const {
    throw ParseError(msg, at);
  }
  [[noreturn]] void fail_unexpected() const {
    if (pos_ >= text_.size()) fail("unexpected end of input");
    fail(std::string("unexpected '") + text_[pos_] + "'");
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool peek(std::string_view tok) {
    skip_ws();
    return text_.substr(pos_, tok.size()) == tok;
  }

  bool accept(std::string_view tok) {
    if (!peek(tok)) return false;
    pos_ += tok.size();
    return true;
  }

  void expect(std::string_view tok) {
    if (!accept(tok)) {
      skip_ws();
      fail("expected '" + std::string(tok) + "'");
    }
  }

  static bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
  }
  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  }

  // Identifier at the cursor without consuming it.
  std::string_view peek_ident() {
    skip_ws();
    std::size_t end = pos_;
    if (end < text_.size() && ident_start(text_[end])) {
      while (end < text_.size() && ident_char(text_[end])) ++end;
    }
    return text_.substr(pos_, end - pos_);
  }

  // True when `name` sits at the cursor as an operator keyword, i.e. is
  // followed by '['.
  bool at_operator(std::string_view name) {
    auto id = peek_ident();
    if (id != name) return false;
    std::size_t p = pos_ + id.size();
    while (p < text_.size() && std::isspace(static_cast<unsigned char>(text_[p]))) ++p;
    return p < text_.size() && text_[p] == '[';
  }

  Interval parse_interval() {
    expect("[");
    int lo = parse_int();
    expect(",");
    int hi = parse_int();
    expect("]");
    if (hi < lo) fail("interval upper bound below lower bound");
    return {lo, hi};
  }

  int parse_int() {
    skip_ws();
    int v = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), v);
    if (ec != std::errc() || v < 0) fail("expected a non-negative integer step");
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return v;
  }

  std::optional<double> try_number() {
    skip_ws();
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    if (first != last && *first == '+') ++first;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, v, std::chars_format::general);
    if (ec != std::errc() || !std::isfinite(v)) return std::nullopt;
    // from_chars accepts "inf"/"nan"; thresholds must be finite literals.
    if (!std::isdigit(static_cast<unsigned char>(*first)) && *first != '.' && *first != '-') {
      return std::nullopt;
    }
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return v;
  }

  double parse_number() {
    if (auto v = try_number()) return *v;
    fail("expected a number");
  }

  Formula parse_implies() {
    Formula lhs = parse_or();
    if (accept("->")) {
      Formula rhs = parse_implies();
      return Formula::implication(lhs, rhs);
    }
    return lhs;
  }

  Formula parse_or() {
    Formula acc = parse_and();
    while (true) {
      if (peek("||")) fail("unknown operator '||'");
      if (!accept("|")) break;
      acc = Formula::disjunction(acc, parse_and());
    }
    return acc;
  }

  Formula parse_and() {
    Formula acc = parse_until();
    while (true) {
      if (peek("&&")) fail("unknown operator '&&'");
      if (!accept("&")) break;
      acc = Formula::conjunction(acc, parse_until());
    }
    return acc;
  }

  Formula parse_until() {
    Formula acc = parse_unary();
    while (at_operator("U")) {
      pos_ += 1;
      Interval w = parse_interval();
      Formula rhs = parse_unary();
      acc = Formula::until(w.lo, w.hi, acc, rhs);
    }
    return acc;
  }

  Formula parse_unary() {
    skip_ws();
    if (accept("!")) return Formula::negation(parse_unary());
    if (at_operator("G")) {
      pos_ += 1;
      Interval w = parse_interval();
      return Formula::always(w.lo, w.hi, parse_unary());
    }
    if (at_operator("F")) {
      pos_ += 1;
      Interval w = parse_interval();
      return Formula::eventually(w.lo, w.hi, parse_unary());
    }
    auto id = peek_ident();
    if (!id.empty() && at_operator(id)) {
      fail("unknown operator '" + std::string(id) + "'");
    }
    return parse_primary();
  }

  Formula parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    auto id = peek_ident();
    if (id == "true") {
      std::size_t after = pos_ + id.size();
      pos_ = after;
      return Formula::truth();
    }
    if (text_[pos_] == '(') {
      // Either a parenthesised linear expression `(x1 - x2) > c` or a
      // parenthesised formula.
      const std::size_t saved = pos_;
      try {
        return parse_atom();
      } catch (const ParseError&) {
        pos_ = saved;
      }
      expect("(");
      Formula inner = parse_implies();
      expect(")");
      return inner;
    }
    return parse_atom();
  }

  // linexpr := term (('+'|'-') term)* ; term := [number ['*']] ident | number
  void parse_linexpr(std::vector<LinTerm>& terms, double& constant) {
    bool first = true;
    while (true) {
      double sign = 1.0;
      skip_ws();
      if (accept("+")) {
        sign = 1.0;
      } else if (peek("-") && !peek("->")) {
        ++pos_;
        sign = -1.0;
      } else if (!first) {
        break;
      }
      first = false;
      skip_ws();
      std::optional<double> coeff;
      if (pos_ < text_.size() && !ident_start(text_[pos_])) {
        coeff = try_number();
        if (!coeff) fail("expected a variable or coefficient");
        accept("*");
      }
      auto id = peek_ident();
      if (id.empty() || id == "true") {
        if (!coeff) fail("expected a variable");
        constant += sign * *coeff;
        continue;
      }
      pos_ += id.size();
      double c = sign * coeff.value_or(1.0);
      bool merged = false;
      for (auto& t : terms) {
        if (t.var == id) {
          t.coeff += c;
          merged = true;
        }
      }
      if (!merged) terms.push_back({std::string(id), c});
    }
  }

  Cmp parse_cmp() {
    skip_ws();
    if (accept(">=")) return Cmp::Ge;
    if (accept("<=")) return Cmp::Le;
    if (peek("==") || peek("=") || peek("!=") || peek("=>") || peek("<>")) {
      fail("unknown operator '" + std::string(text_.substr(pos_, 2)) + "'");
    }
    if (accept(">")) return Cmp::Gt;
    if (accept("<")) return Cmp::Lt;
    fail("expected a comparison (>=, >, <=, <)");
  }

  Formula parse_atom() {
    std::vector<LinTerm> terms;
    double constant = 0.0;
    const std::size_t start = (skip_ws(), pos_);
    if (accept("(")) {
      parse_linexpr(terms, constant);
      expect(")");
    } else {
      parse_linexpr(terms, constant);
    }
    if (terms.empty()) fail_at("atom has no variable", start);
    Cmp cmp = parse_cmp();
    double threshold = parse_number() - constant;
    if (terms.size() == 1 && terms[0].coeff == 1.0) {
      return Formula::atom(terms[0].var, cmp, threshold);
    }
    return Formula::lin_atom(std::move(terms), cmp, threshold);
  }
};

}  // namespace

Formula parse(std::string_view text) {
  Parser p(text);
  try {
    return p.parse_all();
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    // Structural violations raised by the Formula factories.
    throw ParseError(e.what(), 0);
  }
}

}  // namespace fedstl
