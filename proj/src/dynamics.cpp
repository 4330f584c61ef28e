#include "attractor/dynamics.hpp"

#include <stdexcept>

namespace attractor {

namespace {
void check_config(const FlowConfig& cfg) {
  if (!(cfg.step > 0.0)) throw std::invalid_argument("flow step must be positive");
  if (!(cfg.blowup_bound > 0.0)) throw std::invalid_argument("blowup bound must be positive");
}
}  // namespace

long mesh_steps(double t, const FlowConfig& cfg) {
  check_config(cfg);
  return std::lround(std::abs(t) / cfg.step);
}

double round_to_mesh(double t, const FlowConfig& cfg) {
  const double n = static_cast<double>(mesh_steps(t, cfg));
  return t < 0 ? -n * cfg.step : n * cfg.step;
}

bool is_mesh_multiple(double t, const FlowConfig& cfg) {
  return std::abs(round_to_mesh(t, cfg) - t) <= 1e-9 * std::max(1.0, std::abs(t));
}

FlowResult flow_auto(const FieldAst& f0, const Eigen::VectorXd& x, double t, const FlowConfig& cfg) {
  if (f0.uses_time()) throw std::invalid_argument("flow_auto requires an autonomous field");
  return flow_skew(f0, SkewState{0.0, x}, t, cfg);
}

FlowResult flow_skew(const FieldAst& fn, const SkewState& state, double t, const FlowConfig& cfg) {
  if (state.x.size() != fn.dim()) throw std::invalid_argument("state has wrong dimension");
  AstField f{&fn};
  return flow(f, state, t, cfg);
}

Trajectory trajectory(const FieldAst& f, const SkewState& state, double t0, double t1,
                      const FlowConfig& cfg) {
  if (t0 > 0 || t1 < 0) throw std::invalid_argument("trajectory window must contain 0");
  if (state.x.size() != f.dim()) throw std::invalid_argument("state has wrong dimension");
  AstField af{&f};
  return trajectory(af, state, t0, t1, cfg);
}

}  // namespace attractor
