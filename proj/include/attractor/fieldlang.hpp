// Vector-field expressions: a small arithmetic language over t, x1..xd and
// optional named parameters (e.g. "eps", "u1"), parsed once and evaluated as
// a flat stack program.
#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace attractor {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " at position " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class EvalError : public std::runtime_error {
 public:
  EvalError(const std::string& what, std::size_t component, bool overflow = false)
      : std::runtime_error(what + " in component " + std::to_string(component + 1)),
        component_(component), overflow_(overflow) {}
  /// Zero-based index of the expression that failed.
  std::size_t component() const noexcept { return component_; }
  /// True for a non-finite result (as opposed to a domain error).
  bool overflow() const noexcept { return overflow_; }

 private:
  std::size_t component_;
  bool overflow_;
};

namespace detail {

enum class Op : unsigned char {
  Const, Time, State, Param,
  Neg, Add, Sub, Mul, Div, Pow, IntPow,
  Sin, Cos, Tanh, Exp, Abs,
};

struct Node {
  Op op;
  double value = 0.0;  // Const literal, IntPow exponent
  int index = 0;       // State / Param index
  int lhs = -1;
  int rhs = -1;
};

struct Instr {
  Op op;
  double value;
  int index;
};

}  // namespace detail

/// A parsed d-dimensional field. Immutable; evaluation is pure.
class FieldAst {
 public:
  /// Parses `source` (";"-separated, one expression per component).
  /// `parameters` lists extra symbols the expressions may reference.
  static FieldAst parse(std::string_view source, int dim,
                        const std::vector<std::string>& parameters = {});

  int dim() const noexcept { return dim_; }
  bool uses_time() const noexcept { return uses_time_; }
  bool uses_parameter(std::string_view name) const;
  const std::vector<std::string>& parameters() const noexcept { return params_; }
  const std::string& source() const noexcept { return source_; }

  /// Substitutes a constant for the named parameter and drops it from the
  /// parameter list. Unknown names are a no-op.
  FieldAst bind(std::string_view name, double value) const;

  /// Fully parenthesised text that parses back to the same function.
  std::string to_string() const;

  template <typename Scalar>
  void eval_into(Scalar t, const Scalar* x, Scalar* out, const Scalar* params = nullptr) const;

  template <typename Derived>
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> eval(
      typename Derived::Scalar t, const Eigen::MatrixBase<Derived>& x) const {
    using Scalar = typename Derived::Scalar;
    check_dim(x.size());
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> xs = x;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(dim_);
    eval_into<Scalar>(t, xs.data(), out.data());
    return out;
  }

  template <typename Derived, typename DerivedP>
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> eval(
      typename Derived::Scalar t, const Eigen::MatrixBase<Derived>& x,
      const Eigen::MatrixBase<DerivedP>& params) const {
    using Scalar = typename Derived::Scalar;
    check_dim(x.size());
    if (static_cast<std::size_t>(params.size()) != params_.size())
      throw std::invalid_argument("parameter vector has wrong length");
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> xs = x;
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> ps = params.template cast<Scalar>();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(dim_);
    eval_into<Scalar>(t, xs.data(), out.data(), ps.data());
    return out;
  }

 private:
  void check_dim(Eigen::Index n) const {
    if (n != dim_) throw std::invalid_argument("state vector has wrong length");
  }
  void compile();
  std::string print(int node) const;

  int dim_ = 0;
  bool uses_time_ = false;
  std::string source_;
  std::vector<std::string> params_;
  std::vector<detail::Node> nodes_;
  std::vector<int> roots_;
  std::vector<std::vector<detail::Instr>> programs_;
  std::size_t max_stack_ = 0;

  friend class Parser;
};

template <typename Scalar>
void FieldAst::eval_into(Scalar t, const Scalar* x, Scalar* out, const Scalar* params) const {
  using detail::Op;
  using std::abs, std::cos, std::exp, std::floor, std::pow, std::sin, std::tanh, std::isfinite;

  constexpr std::size_t kInline = 32;
  std::array<Scalar, kInline> small{};
  std::vector<Scalar> large;
  Scalar* stack = small.data();
  if (max_stack_ > kInline) {
    large.resize(max_stack_);
    stack = large.data();
  }

  for (std::size_t c = 0; c < programs_.size(); ++c) {
    std::size_t sp = 0;
    for (const auto& ins : programs_[c]) {
      switch (ins.op) {
        case Op::Const: stack[sp++] = Scalar(ins.value); break;
        case Op::Time: stack[sp++] = t; break;
        case Op::State: stack[sp++] = x[ins.index]; break;
        case Op::Param: stack[sp++] = params[ins.index]; break;
        case Op::Neg: stack[sp - 1] = -stack[sp - 1]; break;
        case Op::Add: --sp; stack[sp - 1] += stack[sp]; break;
        case Op::Sub: --sp; stack[sp - 1] -= stack[sp]; break;
        case Op::Mul: --sp; stack[sp - 1] *= stack[sp]; break;
        case Op::Div:
          --sp;
          if (stack[sp] == Scalar(0)) throw EvalError("division by zero", c);
          stack[sp - 1] /= stack[sp];
          break;
        case Op::Pow: {
          --sp;
          const Scalar base = stack[sp - 1];
          const Scalar e = stack[sp];
          if (base < Scalar(0) && floor(e) != e)
            throw EvalError("negative base with non-integer exponent", c);
          stack[sp - 1] = pow(base, e);
          break;
        }
        case Op::IntPow: {
          const Scalar base = stack[sp - 1];
          long n = static_cast<long>(ins.value);
          const bool invert = n < 0;
          if (invert) n = -n;
          Scalar acc(1), b = base;
          while (n > 0) {
            if (n & 1) acc *= b;
            b *= b;
            n >>= 1;
          }
          if (invert) {
            if (acc == Scalar(0)) throw EvalError("division by zero", c);
            acc = Scalar(1) / acc;
          }
          stack[sp - 1] = acc;
          break;
        }
        case Op::Sin: stack[sp - 1] = sin(stack[sp - 1]); break;
        case Op::Cos: stack[sp - 1] = cos(stack[sp - 1]); break;
        case Op::Tanh: stack[sp - 1] = tanh(stack[sp - 1]); break;
        case Op::Exp: stack[sp - 1] = exp(stack[sp - 1]); break;
        case Op::Abs: stack[sp - 1] = abs(stack[sp - 1]); break;
      }
    }
    if (!isfinite(stack[0])) throw EvalError("non-finite result", c, true);
    out[c] = stack[0];
  }
}

}  // namespace attractor
