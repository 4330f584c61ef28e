#include "attractor/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace attractor {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lockstep integration of f0 and fn from the same x; returns the largest gap
// over the mesh of [-back, fwd] (offsets from base time s). Each direction
// stops once the unperturbed orbit leaves the grid rectangle.
double lockstep_gap(const FieldAst& f0, const FieldAst& fn, double s, const Eigen::VectorXd& x,
                    double back, double fwd, const FlowConfig& cfg, const Grid& region) {
  AstField a{&f0}, b{&fn};
  Rk4<double> ra(x.size()), rb(x.size());
  double worst = 0.0;
  for (int dir : {-1, 1}) {
    const long n = mesh_steps(dir < 0 ? back : fwd, cfg);
    const double h = dir * cfg.step;
    Eigen::VectorXd ya = x, yb = x;
    for (long k = 0; k < n; ++k) {
      // f0 is autonomous, so feeding it the skew time changes nothing.
      try {
        ra.step(a, s + static_cast<double>(k) * h, h, ya);
        rb.step(b, s + static_cast<double>(k) * h, h, yb);
      } catch (const EvalError& e) {
        if (!e.overflow()) throw;
        if (region.locate(ya)) return kInf;
        break;
      }
      if (escaped_bound(yb, cfg.blowup_bound)) return kInf;
      if (escaped_bound(ya, cfg.blowup_bound) || !region.locate(ya)) break;
      worst = std::max(worst, (ya - yb).norm());
    }
  }
  return worst;
}

std::vector<Eigen::VectorXd> block_points(const BoxSet& block, int max_points) {
  const std::vector<std::size_t> idx = block.indices();
  const std::size_t stride =
      std::max<std::size_t>(1, (idx.size() + max_points - 1) / std::max(1, max_points));
  std::vector<Eigen::VectorXd> pts;
  for (std::size_t j = 0; j < idx.size(); j += stride) pts.push_back(block.grid().center(idx[j]));
  return pts;
}

}  // namespace

PerturbationFamily::PerturbationFamily(FieldAst f0, FieldAst fn_template, std::vector<double> eps_values,
                                       double period)
    : f0_(std::move(f0)), fn_template_(std::move(fn_template)), eps_values_(std::move(eps_values)),
      period_(period) {
  if (f0_.uses_time()) throw std::invalid_argument("f0 must be autonomous");
  if (f0_.dim() != fn_template_.dim()) throw std::invalid_argument("f0 and fn differ in dimension");
  for (const auto& p : fn_template_.parameters())
    if (p != "eps") throw std::invalid_argument("unexpected symbol in fn template: " + p);
  for (std::size_t i = 0; i < eps_values_.size(); ++i) {
    if (!(eps_values_[i] >= 0)) throw std::invalid_argument("eps values must be nonnegative");
    if (i > 0 && eps_values_[i] >= eps_values_[i - 1])
      throw std::invalid_argument("eps values must be decreasing");
  }

  const FieldAst zero = field_for(0.0);
  std::mt19937_64 rng(0x5eedf00dULL);
  std::uniform_real_distribution<double> ux(-2.0, 2.0), ut(-20.0, 20.0);
  Eigen::VectorXd x(f0_.dim());
  for (int k = 0; k < 100; ++k) {
    for (int i = 0; i < x.size(); ++i) x[i] = ux(rng);
    const double t = ut(rng);
    const Eigen::VectorXd a = f0_.eval(t, x), b = zero.eval(t, x);
    if ((a - b).norm() > 1e-12 * (1.0 + a.norm()))
      throw std::invalid_argument("fn template with eps = 0 does not reduce to f0");
  }
}

PerturbationFamily PerturbationFamily::parse(const std::string& f0, const std::string& fn_template,
                                             int dim, std::vector<double> eps_values, double period) {
  return PerturbationFamily(FieldAst::parse(f0, dim), FieldAst::parse(fn_template, dim, {"eps"}),
                            std::move(eps_values), period);
}

std::vector<double> base_times(const PerturbationFamily& fam, int count, double t_max) {
  std::vector<double> out;
  if (fam.periodic()) {
    for (int j = 0; j < count; ++j) out.push_back(fam.period() * j / count);
    return out;
  }
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int j = 0; j < 16; ++j) out.push_back(t_max * std::fmod(0.5 + j * phi, 1.0));
  return out;
}

double field_sup_gap(const PerturbationFamily& fam, double eps, const BoxSet& region, int t_samples) {
  if (t_samples < 2) throw std::invalid_argument("need at least two time samples");
  const FieldAst fn = fam.field_for(eps);
  double worst = 0.0;
  region.for_each([&](std::size_t i) {
    const Eigen::VectorXd x = region.grid().center(i);
    const Eigen::VectorXd base = fam.f0().eval(0.0, x);
    for (int j = 0; j < t_samples; ++j) {
      const double t = 20.0 * M_PI * j / (t_samples - 1);
      worst = std::max(worst, (fn.eval(t, x) - base).norm());
    }
  });
  return worst;
}

double trajectory_deviation(const PerturbationFamily& fam, double eps, const StableBlock& b,
                            double t_horizon, const FlowConfig& cfg, const DeviationSampling& ds) {
  const FieldAst fn = fam.field_for(eps);
  const std::vector<double> ss = base_times(fam, ds.base_times, ds.t_max);
  const std::vector<Eigen::VectorXd> pts = block_points(b.block, ds.max_points);
  std::vector<double> worst(ss.size() * pts.size(), 0.0);
  parallel_for(worst.size(), [&](std::size_t j) {
    worst[j] = lockstep_gap(fam.f0(), fn, ss[j / pts.size()], pts[j % pts.size()], t_horizon,
                            t_horizon, cfg, b.block.grid());
  });
  return worst.empty() ? 0.0 : *std::max_element(worst.begin(), worst.end());
}

TheoremFiniteVerdict check_theorem_finite(const PerturbationFamily& fam, double eps,
                                          const StableBlock& b, double t_horizon,
                                          const FlowConfig& cfg, const VerdictOptions& opts) {
  TheoremFiniteVerdict v;
  v.eps = eps;
  v.T = t_horizon;
  v.delta = opts.delta ? *opts.delta : compute_delta(b, fam.f0(), t_horizon, cfg, opts.gt_samples);
  v.deviation = trajectory_deviation(fam, eps, b, t_horizon, cfg, opts.deviation);
  v.hypothesis_met = v.deviation < v.delta / 3.0;

  const FieldAst fn = fam.field_for(eps);
  const std::vector<double> times = base_times(fam, opts.slice_times, opts.deviation.t_max);
  std::vector<BoxSet> gts;
  v.gamma_empty = true;
  for (double s : times) {
    auto iso = compute_isolation(b.block, fn, true, t_horizon, cfg, opts.gt_samples, s);
    v.gamma_empty = v.gamma_empty && iso.gamma.empty();
    gts.push_back(std::move(iso.gt));
  }

  v.slices = pullback_slices(fn, b, t_horizon, times, opts.depth, cfg, opts.pullback);
  v.slices_nonempty = v.slices.all_nonempty();

  const Grid& g = b.block.grid();
  const double upper = (g.hi() - g.lo()).norm();
  v.margin_eps = v.slices_nonempty ? upper : 0.0;
  for (std::size_t k = 0; k < times.size() && v.slices_nonempty; ++k)
    v.margin_eps = std::min(v.margin_eps, containment_margin(v.slices.slices[k], gts[k], upper));

  v.implication_holds = !v.hypothesis_met || (v.gamma_empty && v.slices_nonempty);
  return v;
}

std::vector<CurvePoint> semicontinuity_curve(const PerturbationFamily& fam, const StableBlock& b,
                                             double t_horizon, const FlowConfig& cfg,
                                             const VerdictOptions& opts) {
  const std::vector<double> times = base_times(fam, opts.slice_times, opts.deviation.t_max);
  std::vector<CurvePoint> curve;
  for (double eps : fam.eps_values()) {
    const FieldAst fn = fam.field_for(eps);
    const SliceFamily sf = pullback_slices(fn, b, t_horizon, times, opts.depth, cfg, opts.pullback);
    CurvePoint p{eps, std::nullopt};
    if (sf.all_nonempty()) p.semidist = semidist(sf.union_nonempty(b.block.grid_ptr()), b.attractor);
    curve.push_back(p);
  }
  return curve;
}

bool curve_nonincreasing(const std::vector<CurvePoint>& curve, double slack) {
  std::optional<double> prev;
  for (const auto& p : curve) {
    if (!p.semidist) continue;
    if (prev && *p.semidist > *prev + slack) return false;
    prev = p.semidist;
  }
  return true;
}

SsingReport ssing_diagnostic(const PerturbationFamily& fam, double eps, const StableBlock& b,
                             const FlowConfig& cfg, const std::vector<double>& shifts, double t_max,
                             int n_points, std::uint64_t seed) {
  if (n_points < 1) throw std::invalid_argument("need at least one sample point");
  const FieldAst fn = fam.field_for(eps);
  const Grid& g = b.block.grid();
  const std::vector<std::size_t> idx = b.block.indices();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Eigen::VectorXd> pts;
  for (int k = 0; k < n_points; ++k) {
    Eigen::VectorXd p = g.box_lo(idx[pick(rng)]);
    for (int i = 0; i < g.dim(); ++i) p[i] += unit(rng) * g.width()[i];
    pts.push_back(std::move(p));
  }

  SsingReport r;
  r.shifts = shifts;
  r.per_shift.assign(shifts.size(), 0.0);
  std::vector<double> cell(shifts.size() * pts.size(), 0.0);
  parallel_for(cell.size(), [&](std::size_t j) {
    cell[j] = lockstep_gap(fam.f0(), fn, shifts[j / pts.size()], pts[j % pts.size()], 0.0, t_max, cfg, g);
  });
  for (std::size_t j = 0; j < cell.size(); ++j)
    r.per_shift[j / pts.size()] = std::max(r.per_shift[j / pts.size()], cell[j]);
  if (!r.per_shift.empty()) {
    const auto [lo, hi] = std::minmax_element(r.per_shift.begin(), r.per_shift.end());
    r.max = *hi;
    r.spread = *hi - *lo;
  }
  return r;
}

}  // namespace attractor
