#include "attractor/fieldlang.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>

namespace attractor {

using detail::Node;
using detail::Op;

// Recursive descent over
//   expr  := term (('+'|'-') term)*
//   term  := unary (('*'|'/') unary)*
//   unary := '-' unary | '+' unary | power
//   power := primary ('^' unary)?
//   primary := number | 't' | 'x'k | param | func '(' expr ')' | '(' expr ')'
class Parser {
 public:
  Parser(std::string_view src, std::size_t offset, FieldAst& ast)
      : src_(src), offset_(offset), ast_(ast) {}

  int parse_component() {
    skip_ws();
    if (pos_ >= src_.size()) fail("empty expression");
    const int root = expr();
    skip_ws();
    if (pos_ < src_.size()) fail(std::string("unexpected '") + src_[pos_] + "'");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, offset_ + pos_); }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  int push(Node n) {
    ast_.nodes_.push_back(n);
    return static_cast<int>(ast_.nodes_.size()) - 1;
  }

  int binary(Op op, int l, int r) { return push(Node{op, 0.0, 0, l, r}); }

  int expr() {
    int lhs = term();
    for (;;) {
      if (accept('+')) lhs = binary(Op::Add, lhs, term());
      else if (accept('-')) lhs = binary(Op::Sub, lhs, term());
      else return lhs;
    }
  }

  int term() {
    int lhs = unary();
    for (;;) {
      if (accept('*')) lhs = binary(Op::Mul, lhs, unary());
      else if (accept('/')) lhs = binary(Op::Div, lhs, unary());
      else return lhs;
    }
  }

  int unary() {
    if (accept('-')) return push(Node{Op::Neg, 0.0, 0, unary(), -1});
    if (accept('+')) return unary();
    return power();
  }

  int power() {
    const int base = primary();
    if (accept('^')) return binary(Op::Pow, base, unary());
    return base;
  }

  int primary() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of expression");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      const int inner = expr();
      if (!accept(')')) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail(std::string("unexpected '") + c + "'");
  }

  int number() {
    const std::size_t start = pos_;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(src_.data() + pos_, src_.data() + src_.size(), v,
                                     std::chars_format::general);
    if (ec != std::errc()) fail("malformed number");
    pos_ = static_cast<std::size_t>(ptr - src_.data());
    if (pos_ < src_.size() && (std::isalpha(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
      pos_ = start;
      fail("malformed number");
    }
    return push(Node{Op::Const, v});
  }

  int identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    const std::string name(src_.substr(start, pos_ - start));

    static constexpr std::pair<const char*, Op> kFuncs[] = {
        {"sin", Op::Sin}, {"cos", Op::Cos}, {"tanh", Op::Tanh}, {"exp", Op::Exp}, {"abs", Op::Abs}};
    for (const auto& [fname, op] : kFuncs) {
      if (name == fname) {
        if (!accept('(')) fail("expected '(' after " + name);
        const int arg = expr();
        if (!accept(')')) fail("expected ')'");
        return push(Node{op, 0.0, 0, arg, -1});
      }
    }

    const auto& params = ast_.params_;
    if (auto it = std::find(params.begin(), params.end(), name); it != params.end())
      return push(Node{Op::Param, 0.0, static_cast<int>(it - params.begin())});

    if (name == "t") {
      ast_.uses_time_ = true;
      return push(Node{Op::Time});
    }
    if (name.size() > 1 && name[0] == 'x' &&
        std::all_of(name.begin() + 1, name.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
      const long k = std::strtol(name.c_str() + 1, nullptr, 10);
      if (k < 1 || k > ast_.dim_) {
        pos_ = start;
        fail("variable " + name + " exceeds dimension " + std::to_string(ast_.dim_));
      }
      return push(Node{Op::State, 0.0, static_cast<int>(k - 1)});
    }
    pos_ = start;
    fail("unknown identifier '" + name + "'");
  }

  std::string_view src_;
  std::size_t offset_;
  std::size_t pos_ = 0;
  FieldAst& ast_;
};

FieldAst FieldAst::parse(std::string_view source, int dim, const std::vector<std::string>& parameters) {
  if (dim < 1) throw std::invalid_argument("dimension must be positive");
  FieldAst ast;
  ast.dim_ = dim;
  ast.source_ = std::string(source);
  ast.params_ = parameters;

  std::vector<std::pair<std::size_t, std::string_view>> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= source.size(); ++i) {
    if (i == source.size() || source[i] == ';') {
      parts.emplace_back(start, source.substr(start, i - start));
      start = i + 1;
    }
  }
  // Parse first so a bad token is reported before a count mismatch.
  for (const auto& [offset, text] : parts) {
    Parser p(text, offset, ast);
    ast.roots_.push_back(p.parse_component());
  }
  if (static_cast<int>(parts.size()) != dim)
    throw ParseError("expected " + std::to_string(dim) + " expressions, found " +
                         std::to_string(parts.size()),
                     source.size());
  ast.compile();
  return ast;
}

bool FieldAst::uses_parameter(std::string_view name) const {
  const auto it = std::find(params_.begin(), params_.end(), name);
  if (it == params_.end()) return false;
  const int idx = static_cast<int>(it - params_.begin());
  return std::any_of(nodes_.begin(), nodes_.end(),
                     [idx](const Node& n) { return n.op == Op::Param && n.index == idx; });
}

FieldAst FieldAst::bind(std::string_view name, double value) const {
  const auto it = std::find(params_.begin(), params_.end(), name);
  if (it == params_.end()) return *this;
  const int idx = static_cast<int>(it - params_.begin());
  FieldAst out = *this;
  out.params_.erase(out.params_.begin() + idx);
  for (auto& n : out.nodes_) {
    if (n.op != Op::Param) continue;
    if (n.index == idx) {
      n.op = Op::Const;
      n.value = value;
      n.index = 0;
    } else if (n.index > idx) {
      --n.index;
    }
  }
  out.compile();
  return out;
}

void FieldAst::compile() {
  programs_.clear();
  max_stack_ = 1;
  for (int root : roots_) {
    std::vector<detail::Instr> prog;
    std::size_t depth = 0;
    auto emit = [&](auto&& self, int id) -> void {
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      switch (n.op) {
        case Op::Const: case Op::Time: case Op::State: case Op::Param:
          prog.push_back({n.op, n.value, n.index});
          max_stack_ = std::max(max_stack_, ++depth);
          return;
        case Op::Pow: {
          const Node& e = nodes_[static_cast<std::size_t>(n.rhs)];
          if (e.op == Op::Const && e.value == std::floor(e.value) && std::abs(e.value) <= 64) {
            self(self, n.lhs);
            prog.push_back({Op::IntPow, e.value, 0});
            return;
          }
          [[fallthrough]];
        }
        case Op::Add: case Op::Sub: case Op::Mul: case Op::Div:
          self(self, n.lhs);
          self(self, n.rhs);
          prog.push_back({n.op, 0.0, 0});
          --depth;
          return;
        default:
          self(self, n.lhs);
          prog.push_back({n.op, 0.0, 0});
          return;
      }
    };
    emit(emit, root);
    programs_.push_back(std::move(prog));
  }
}

std::string FieldAst::print(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  switch (n.op) {
    case Op::Const: {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", n.value);
      return n.value < 0 || std::signbit(n.value) ? "(" + std::string(buf) + ")" : std::string(buf);
    }
    case Op::Time: return "t";
    case Op::State: return "x" + std::to_string(n.index + 1);
    case Op::Param: return params_[static_cast<std::size_t>(n.index)];
    case Op::Neg: return "(-" + print(n.lhs) + ")";
    case Op::Add: return "(" + print(n.lhs) + " + " + print(n.rhs) + ")";
    case Op::Sub: return "(" + print(n.lhs) + " - " + print(n.rhs) + ")";
    case Op::Mul: return "(" + print(n.lhs) + " * " + print(n.rhs) + ")";
    case Op::Div: return "(" + print(n.lhs) + " / " + print(n.rhs) + ")";
    case Op::Pow: case Op::IntPow: return "(" + print(n.lhs) + " ^ " + print(n.rhs) + ")";
    case Op::Sin: return "sin(" + print(n.lhs) + ")";
    case Op::Cos: return "cos(" + print(n.lhs) + ")";
    case Op::Tanh: return "tanh(" + print(n.lhs) + ")";
    case Op::Exp: return "exp(" + print(n.lhs) + ")";
    case Op::Abs: return "abs(" + print(n.lhs) + ")";
  }
  return {};
}

std::string FieldAst::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < roots_.size(); ++i) {
    if (i) out += "; ";
    out += print(roots_[i]);
  }
  return out;
}

}  // namespace attractor
