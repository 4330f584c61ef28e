// Isolating neighbourhoods on box sets: the sets G^T(N) and Gamma^T(N),
// combinatorial maximal invariant sets, stable blocks cut out by the
// Lyapunov-type function g-, the margin delta, and pullback slices A(t).
#pragma once

#include "attractor/boxgrid.hpp"
#include "attractor/dynamics.hpp"
#include "attractor/fieldlang.hpp"
#include "attractor/parallel.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace attractor {

class ConleyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// G^T(N) together with its exit part Gamma^T(N).
struct IsolationSets {
  BoxSet gt;
  BoxSet gamma;
};

/// One pass computing both sets. A box is kept in G^T when every
/// cell-centred sample stays inside dilate(N, one diagonal) on the whole mesh
/// of [-T, T]; it is in Gamma^T when some forward sample on [0, T] visits a box
/// outside interior(N). With skew = true the samples start at base time
/// `base_time` and only the state component is tested.
IsolationSets compute_isolation(const BoxSet& n, const FieldAst& field, bool skew, double t_horizon,
                                const FlowConfig& cfg, int samples_per_box = 2,
                                double base_time = 0.0);

BoxSet compute_GT(const BoxSet& n, const FieldAst& field, bool skew, double t_horizon,
                  const FlowConfig& cfg, int samples_per_box = 2, double base_time = 0.0);

BoxSet compute_GammaT(const BoxSet& n, const FieldAst& field, bool skew, double t_horizon,
                      const FlowConfig& cfg, int samples_per_box = 2, double base_time = 0.0);

/// Box image under the time-tau map started at base time s: the boxes hit by
/// the flowed Closed-layout samples (corners and centre for samples = 3).
/// Samples that escape or leave the grid are dropped.
template <typename Field>
  requires VectorField<Field, double>
BoxSet push_forward(const BoxSet& set, const Field& field, double s, double tau,
                    const FlowConfig& cfg, int samples_per_box = 3) {
  const Grid& g = set.grid();
  const std::vector<std::size_t> members = set.indices();
  std::vector<std::vector<std::size_t>> hits(members.size());
  const long n = mesh_steps(tau, cfg);
  parallel_for(members.size(), [&](std::size_t j) {
    Field f = field;
    for (auto& p : box_samples(g, members[j], samples_per_box, SampleLayout::Closed)) {
      const auto st = integrate<double>(f, s, p, n, cfg.step, cfg.blowup_bound);
      if (st.escaped) continue;
      if (const auto idx = g.locate(p)) hits[j].push_back(*idx);
    }
  });
  BoxSet out(set.grid_ptr());
  for (const auto& h : hits)
    for (auto i : h) out.insert(i);
  return out;
}

struct InvariantSetResult {
  BoxSet set;
  int iterations = 0;
  bool converged = false;
};

/// Iterates S <- S & image(S) & preimage(S) under the time-tau box map until
/// a fixpoint or max_iters. Requires an autonomous field.
InvariantSetResult invariant_set(const BoxSet& n, const FieldAst& field, double tau,
                                 const FlowConfig& cfg, int max_iters = 200,
                                 int samples_per_box = 3);

struct GMinusParams {
  double alpha_scale = 1.0;   // alpha(t) = 2 - 1/(1 + a t)
  double horizon_cap = 100.0; // hard stop for orbits that never settle
};

/// g-(x) = sup_t alpha(t) F(x pi_0 t), F(y) = min{1, dist(y, K)}, with K the
/// union of the attractor boxes.
class GMinusEvaluator {
 public:
  GMinusEvaluator(FieldAst f0, BoxSet attractor, GMinusParams params, FlowConfig cfg);

  double alpha(double t) const { return 2.0 - 1.0 / (1.0 + params_.alpha_scale * t); }
  /// min{1, dist(y, K)}.
  double distance_term(const Eigen::VectorXd& y) const;
  /// Throws ConleyError if the orbit escapes before the sup is settled.
  double operator()(const Eigen::VectorXd& x) const;

  const BoxSet& attractor() const noexcept { return attractor_; }
  const GMinusParams& params() const noexcept { return params_; }
  const FlowConfig& flow_config() const noexcept { return cfg_; }
  const FieldAst& field() const noexcept { return f0_; }

 private:
  FieldAst f0_;
  BoxSet attractor_;
  GMinusParams params_;
  FlowConfig cfg_;
  std::vector<std::size_t> nearest_;  // nearest attractor box per grid box
};

inline double g_minus(const GMinusEvaluator& ev, const Eigen::VectorXd& x) { return ev(x); }

struct BlockValidation {
  bool attractor_nonempty = false;
  bool attractor_in_interior = false;
  bool forward_invariant = false;
  bool inside_neighborhood = false;  // block avoids the boundary of the ambient set
  bool touches_domain_edge = false;
  bool ok() const { return attractor_nonempty && attractor_in_interior && forward_invariant && inside_neighborhood; }
};

struct StableBlock {
  BoxSet block;
  double level = 0.0;  // epsilon of B_eps, or max g- over an adopted block
  std::vector<std::pair<std::size_t, double>> g_values;
  BoxSet attractor;
  BlockValidation validation;
};

struct BlockParams {
  GMinusParams g;
  double tau = 1.0;           // time of the box map used for the invariant set
  int max_iters = 200;
  int image_samples = 3;
};

/// B_eps = {g- <= eps} inside Ntilde. Throws ConleyError when the invariant
/// set is empty or not interior, when eps is outside (0, 1/2), or when the
/// block fails validation.
StableBlock build_stable_block(const BoxSet& ntilde, const FieldAst& f0, double epsilon,
                               const BlockParams& params, const FlowConfig& cfg);

/// Takes an explicit box set as the block (its invariant set as attractor)
/// and validates it the same way.
StableBlock adopt_block(const BoxSet& block, const FieldAst& f0, const BlockParams& params,
                        const FlowConfig& cfg);

BlockValidation validate_block(const BoxSet& block, const BoxSet& attractor, const BoxSet* ambient,
                               const FieldAst& f0, const FlowConfig& cfg);

/// Largest delta (bisection, 1% relative) with dilate(G^{2T}, delta) in G^T
/// and dilate(G^T, delta) in the block, minus one box diagonal.
double compute_delta(const StableBlock& b, const FieldAst& f0, double t_horizon,
                     const FlowConfig& cfg, int samples_per_box = 2);

/// Largest r (bisection, 1% relative, capped at `upper`) with dilate(inner, r)
/// contained in outer; 0 when even dilate(inner, 0) is not contained.
double containment_margin(const BoxSet& inner, const BoxSet& outer, double upper);

struct SliceFamily {
  std::vector<double> times;
  std::vector<BoxSet> slices;
  std::vector<bool> degenerate;
  std::vector<int> pushes;  // push-forward rounds used per slice

  bool all_nonempty() const;
  BoxSet union_nonempty(const GridPtr& grid) const;
};

struct PullbackOptions {
  double tau = 1.0;
  int gt_samples = 2;
  int image_samples = 3;
};

/// A(t) ~ G_n(t - depth) pushed forward to base time t in tau increments,
/// intersected with the block after each push.
SliceFamily pullback_slices(const FieldAst& fn, const StableBlock& b, double t_horizon,
                            const std::vector<double>& times, double depth, const FlowConfig& cfg,
                            const PullbackOptions& opts = {});

/// CSV with columns t, i1..id, c1..cd.
void write_slices_csv(std::ostream& os, const SliceFamily& family);

}  // namespace attractor
