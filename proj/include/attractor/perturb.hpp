// Perturbation families f_n = f0 + small time-dependent terms: field gaps,
// trajectory deviations, the finite-horizon persistence verdict, the
// semicontinuity curve, and the base-time uniformity diagnostic.
#pragma once

#include "attractor/conley.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace attractor {

class PerturbationFamily {
 public:
  /// `fn_template` may reference t, x1..xd and the amplitude symbol eps.
  /// `period` <= 0 marks non-periodic forcing. Throws std::invalid_argument
  /// when eps = 0 does not reproduce f0 on random samples.
  PerturbationFamily(FieldAst f0, FieldAst fn_template, std::vector<double> eps_values,
                     double period = 2.0 * M_PI);

  static PerturbationFamily parse(const std::string& f0, const std::string& fn_template, int dim,
                                  std::vector<double> eps_values, double period = 2.0 * M_PI);

  FieldAst field_for(double eps) const { return fn_template_.bind("eps", eps); }

  const FieldAst& f0() const noexcept { return f0_; }
  const FieldAst& fn_template() const noexcept { return fn_template_; }
  const std::vector<double>& eps_values() const noexcept { return eps_values_; }
  double period() const noexcept { return period_; }
  bool periodic() const noexcept { return period_ > 0; }

 private:
  FieldAst f0_, fn_template_;
  std::vector<double> eps_values_;
  double period_;
};

/// Base times probing the skew objects: `count` equally spaced points of one
/// period for periodic forcing, otherwise 16 golden-ratio points of [0, t_max].
std::vector<double> base_times(const PerturbationFamily& fam, int count, double t_max);

/// max over region centres and t_samples times in [0, 20 pi] of |fn - f0|_2.
double field_sup_gap(const PerturbationFamily& fam, double eps, const BoxSet& region, int t_samples);

struct DeviationSampling {
  int base_times = 8;
  int max_points = 64;   // block centres, evenly subsampled
  double t_max = 20.0 * M_PI;
};

/// max over sampled (s, x) of max_{|t| <= T} |P2((s,x) pi_n t) - x pi_0 t| on
/// a shared step mesh. Each time direction is cut off once x pi_0 t leaves the
/// grid rectangle; a perturbed escape inside that window gives +inf.
double trajectory_deviation(const PerturbationFamily& fam, double eps, const StableBlock& b,
                            double t_horizon, const FlowConfig& cfg, const DeviationSampling& ds = {});

struct VerdictOptions {
  DeviationSampling deviation;
  int slice_times = 16;
  double depth = 20.0;
  PullbackOptions pullback;
  int gt_samples = 2;
  /// Reuse a known delta instead of recomputing it (it depends only on f0).
  std::optional<double> delta;
};

struct TheoremFiniteVerdict {
  double eps = 0.0;
  double T = 0.0;
  double delta = 0.0;
  double deviation = 0.0;
  bool hypothesis_met = false;  // deviation < delta / 3
  bool gamma_empty = false;
  bool slices_nonempty = false;
  double margin_eps = 0.0;
  bool implication_holds = false;  // hypothesis_met implies both conclusions
  SliceFamily slices;
};

TheoremFiniteVerdict check_theorem_finite(const PerturbationFamily& fam, double eps,
                                          const StableBlock& b, double t_horizon,
                                          const FlowConfig& cfg, const VerdictOptions& opts = {});

struct CurvePoint {
  double eps = 0.0;
  std::optional<double> semidist;  // missing when some slice degenerated
};

/// semidist(union of pullback slices over one period, attractor) per eps.
std::vector<CurvePoint> semicontinuity_curve(const PerturbationFamily& fam, const StableBlock& b,
                                             double t_horizon, const FlowConfig& cfg,
                                             const VerdictOptions& opts = {});

/// Nonincreasing within `slack`, ignoring missing points.
bool curve_nonincreasing(const std::vector<CurvePoint>& curve, double slack);

struct SsingReport {
  std::vector<double> shifts;
  std::vector<double> per_shift;  // max over points and t in [0, t_max]
  double max = 0.0;
  double spread = 0.0;            // max - min over shifts
};

SsingReport ssing_diagnostic(const PerturbationFamily& fam, double eps, const StableBlock& b,
                             const FlowConfig& cfg, const std::vector<double>& shifts, double t_max,
                             int n_points = 16, std::uint64_t seed = 1);

}  // namespace attractor
