// Fixed-step numerical flows: the autonomous flow of f0(x) and the
// skew-product flow (s, x) -> (s + t, x phi^s t) of a time-dependent field.
#pragma once

#include "attractor/fieldlang.hpp"

#include <Eigen/Core>

#include <cmath>
#include <concepts>
#include <optional>
#include <vector>

namespace attractor {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct FlowConfig {
  double step = 1e-3;
  /// Trajectories with sup-norm above this bound count as escaped.
  double blowup_bound = 1e6;
};

/// Number of integrator steps for a requested time (rounded to the mesh).
long mesh_steps(double t, const FlowConfig& cfg);
double round_to_mesh(double t, const FlowConfig& cfg);
bool is_mesh_multiple(double t, const FlowConfig& cfg);

struct SkewState {
  double s = 0.0;
  Eigen::VectorXd x;
};

struct FlowResult {
  SkewState endpoint;
  bool escaped = false;
  std::optional<double> escape_time;
};

struct Trajectory {
  std::vector<SkewState> states;  // increasing base time
  bool escaped = false;  // truncated; escape_time is the elapsed time magnitude
  std::optional<double> escape_time;
};

template <typename F, typename Scalar>
concept VectorField = requires(F& f, Scalar t, const Vec<Scalar>& x, Vec<Scalar>& out) {
  f(t, x, out);
};

/// Evaluates a FieldAst through the VectorField interface.
struct AstField {
  const FieldAst* ast;
  template <typename Scalar>
  void operator()(Scalar t, const Vec<Scalar>& x, Vec<Scalar>& out) const {
    ast->eval_into<Scalar>(t, x.data(), out.data());
  }
};

/// Classical fourth-order Runge-Kutta step with preallocated stages. A field
/// exposing begin_step(t, h) is told which step is about to be taken.
template <typename Scalar = double>
class Rk4 {
 public:
  explicit Rk4(Eigen::Index dim) : k1_(dim), k2_(dim), k3_(dim), k4_(dim), tmp_(dim) {}

  template <typename Field>
    requires VectorField<Field, Scalar>
  void step(Field& f, Scalar t, Scalar h, Vec<Scalar>& x) {
    if constexpr (requires { f.begin_step(t, h); }) f.begin_step(t, h);
    const Scalar half = h / Scalar(2);
    f(t, x, k1_);
    tmp_.noalias() = x + half * k1_;
    f(t + half, tmp_, k2_);
    tmp_.noalias() = x + half * k2_;
    f(t + half, tmp_, k3_);
    tmp_.noalias() = x + h * k3_;
    f(t + h, tmp_, k4_);
    x += (h / Scalar(6)) * (k1_ + Scalar(2) * k2_ + Scalar(2) * k3_ + k4_);
  }

 private:
  Vec<Scalar> k1_, k2_, k3_, k4_, tmp_;
};

struct IntegrationStatus {
  long steps = 0;  // steps completed
  bool escaped = false;
  bool stopped = false;  // observer asked to stop
};

template <typename Scalar>
bool escaped_bound(const Vec<Scalar>& x, Scalar bound) {
  using std::isfinite;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (!isfinite(x[i]) || std::abs(x[i]) > bound) return true;
  return false;
}

/// Takes `n` steps of signed size `h` from base time `s`. Mesh times are
/// s + k*h (never accumulated). Overflow inside a step counts as escape. After each step observer(k, t_k, x) is called;
/// returning false stops the integration.
template <typename Scalar, typename Field, typename Observer>
IntegrationStatus integrate(Field& f, Scalar s, Vec<Scalar>& x, long n, Scalar h, Scalar bound,
                            Observer&& observer) {
  Rk4<Scalar> rk(x.size());
  IntegrationStatus st;
  for (long k = 0; k < n; ++k) {
    try {
      rk.step(f, s + Scalar(k) * h, h, x);
    } catch (const EvalError& e) {
      // A stage overflowing inside one step is blow-up, not a field error.
      if (!e.overflow()) throw;
      st.steps = k + 1;
      st.escaped = true;
      return st;
    }
    st.steps = k + 1;
    if (escaped_bound(x, bound)) {
      st.escaped = true;
      return st;
    }
    if (!observer(k + 1, s + Scalar(k + 1) * h, x)) {
      st.stopped = true;
      return st;
    }
  }
  return st;
}

template <typename Scalar, typename Field>
IntegrationStatus integrate(Field& f, Scalar s, Vec<Scalar>& x, long n, Scalar h, Scalar bound) {
  return integrate(f, s, x, n, h, bound, [](long, Scalar, const Vec<Scalar>&) { return true; });
}

/// Flows a state for signed time t under any VectorField.
template <typename Field>
  requires VectorField<Field, double>
FlowResult flow(Field& f, const SkewState& state, double t, const FlowConfig& cfg) {
  const long n = mesh_steps(t, cfg);
  const double h = t < 0 ? -cfg.step : cfg.step;
  FlowResult r;
  r.endpoint.x = state.x;
  const auto st = integrate<double>(f, state.s, r.endpoint.x, n, h, cfg.blowup_bound);
  if (st.escaped) {
    r.escaped = true;
    r.escape_time = static_cast<double>(st.steps) * cfg.step;
    r.endpoint.s = state.s + static_cast<double>(st.steps) * h;
  } else {
    r.endpoint.s = state.s + static_cast<double>(n) * h;
  }
  return r;
}

template <typename Field>
  requires VectorField<Field, double>
Trajectory trajectory(Field& f, const SkewState& state, double t0, double t1, const FlowConfig& cfg) {
  Trajectory out;
  std::vector<SkewState> back;
  {
    Eigen::VectorXd x = state.x;
    const long n = mesh_steps(t0, cfg);
    const auto st = integrate<double>(f, state.s, x, n, -cfg.step, cfg.blowup_bound,
                                      [&](long, double t, const Eigen::VectorXd& y) {
                                        back.push_back({t, y});
                                        return true;
                                      });
    if (st.escaped) {
      out.escaped = true;
      out.escape_time = static_cast<double>(st.steps) * cfg.step;
    }
  }
  out.states.assign(back.rbegin(), back.rend());
  out.states.push_back(state);
  Eigen::VectorXd x = state.x;
  const long n = mesh_steps(t1, cfg);
  const auto st = integrate<double>(f, state.s, x, n, cfg.step, cfg.blowup_bound,
                                    [&](long, double t, const Eigen::VectorXd& y) {
                                      out.states.push_back({t, y});
                                      return true;
                                    });
  if (st.escaped && !out.escaped) {
    out.escaped = true;
    out.escape_time = static_cast<double>(st.steps) * cfg.step;
  }
  return out;
}

/// x pi_0 t for an autonomous field (negative t runs the flow backwards).
FlowResult flow_auto(const FieldAst& f0, const Eigen::VectorXd& x, double t, const FlowConfig& cfg);

/// (s, x) pi t for the skew-product flow of a time-dependent field.
FlowResult flow_skew(const FieldAst& fn, const SkewState& state, double t, const FlowConfig& cfg);

/// States on every mesh time of [t0, t1] (t0 <= 0 <= t1, offsets from state.s).
Trajectory trajectory(const FieldAst& f, const SkewState& state, double t0, double t1,
                      const FlowConfig& cfg);

}  // namespace attractor
