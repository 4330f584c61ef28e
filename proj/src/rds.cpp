#include "attractor/rds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace attractor {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Lockstep gap between f0 and a noisy field from base time 0 over [-T, T],
// each direction cut off once the unperturbed orbit leaves the grid.
double noisy_gap(const FieldAst& f0, const NoisePath& path, const Eigen::VectorXd& x, double t_horizon,
                 const FlowConfig& cfg, const Grid& region) {
  AstField a{&f0};
  NoisyField b(f0, path);
  Rk4<double> ra(x.size()), rb(x.size());
  const long n = mesh_steps(t_horizon, cfg);
  double worst = 0.0;
  for (int dir : {-1, 1}) {
    const double h = dir * cfg.step;
    Eigen::VectorXd ya = x, yb = x;
    for (long k = 0; k < n; ++k) {
      try {
        ra.step(a, static_cast<double>(k) * h, h, ya);
        rb.step(b, static_cast<double>(k) * h, h, yb);
      } catch (const EvalError& e) {
        if (!e.overflow()) throw;
        if (region.locate(ya)) return std::numeric_limits<double>::infinity();
        break;
      }
      if (escaped_bound(yb, cfg.blowup_bound)) return std::numeric_limits<double>::infinity();
      if (escaped_bound(ya, cfg.blowup_bound) || !region.locate(ya)) break;
      worst = std::max(worst, (ya - yb).norm());
    }
  }
  return worst;
}

}  // namespace

NoiseSpec NoiseSpec::make(NoiseKind kind, double rho, double mesh, int m, const std::string& coupling,
                          int dim) {
  std::vector<std::string> us;
  for (int j = 1; j <= m; ++j) us.push_back("u" + std::to_string(j));
  NoiseSpec s{kind, rho, mesh, m, FieldAst::parse(coupling, dim, us)};
  if (s.coupling.uses_time()) throw std::invalid_argument("coupling must not reference t");
  return s;
}

NoisePath::NoisePath(NoiseSpec spec, std::uint64_t seed, double t_max, long cell_offset)
    : spec_(std::move(spec)), seed_(seed), t_max_(t_max), offset_(cell_offset) {
  if (!(spec_.rho >= 0)) throw std::invalid_argument("rho must be nonnegative");
  if (!(spec_.mesh > 0)) throw std::invalid_argument("noise mesh must be positive");
  if (spec_.m < 1) throw std::invalid_argument("forcing dimension must be positive");
  if (!(t_max >= 0)) throw std::invalid_argument("path range must be nonnegative");
  if (spec_.coupling.uses_time()) throw std::invalid_argument("coupling must not reference t");
  if (static_cast<int>(spec_.coupling.parameters().size()) != spec_.m)
    throw std::invalid_argument("coupling must declare exactly u1..um");

  first_ = static_cast<long>(std::floor(-t_max / spec_.mesh)) - 1;
  const long last = static_cast<long>(std::ceil(t_max / spec_.mesh)) + 1;
  values_.assign(static_cast<std::size_t>((last - first_ + 1) * spec_.m), 0.0);
  if (spec_.rho == 0.0) return;
  std::uniform_real_distribution<double> dist(-spec_.rho, spec_.rho);
  for (long c = first_; c <= last; ++c) {
    // One generator per cell keyed by (seed, cell): overlapping ranges agree.
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(c + offset_))));
    for (int j = 0; j < spec_.m; ++j)
      values_[static_cast<std::size_t>((c - first_) * spec_.m + j)] = dist(rng);
  }
}

long NoisePath::cell_of(double t) const { return static_cast<long>(std::floor(t / spec_.mesh)); }

const double* NoisePath::cell_value(long c) const {
  if (c < first_ || c >= first_ + cells())
    throw std::out_of_range("noise path queried outside its time range");
  return values_.data() + (c - first_) * spec_.m;
}

Eigen::VectorXd NoisePath::operator()(double t) const {
  const long c = cell_of(t);
  Eigen::Map<const Eigen::VectorXd> a(cell_value(c), spec_.m);
  if (spec_.kind == NoiseKind::PiecewiseConstant) return a;
  Eigen::Map<const Eigen::VectorXd> b(cell_value(c + 1), spec_.m);
  const double w = t / spec_.mesh - static_cast<double>(c);
  return (1.0 - w) * a + w * b;
}

NoisePath NoisePath::shifted(long cells) const { return NoisePath(spec_, seed_, t_max_, offset_ + cells); }

NoisePath sample_path(const NoiseSpec& spec, std::uint64_t seed, double t_max) {
  return NoisePath(spec, seed, t_max);
}

NoisyField::NoisyField(const FieldAst& f0, const NoisePath& path)
    : f0_(&f0), path_(&path), u_(path.spec().m), tmp_(f0.dim()) {
  if (f0.uses_time()) throw std::invalid_argument("f0 must be autonomous");
  if (path.spec().coupling.dim() != f0.dim()) throw std::invalid_argument("coupling dimension mismatch");
}

void NoisyField::begin_step(double t, double h) {
  if (path_->spec().kind != NoiseKind::PiecewiseConstant) return;
  u_ = Eigen::Map<const Eigen::VectorXd>(path_->cell_value(path_->cell_of(t + 0.5 * h)), u_.size());
  frozen_ = true;
}

void NoisyField::operator()(double t, const Eigen::VectorXd& x, Eigen::VectorXd& out) {
  if (!frozen_) u_ = (*path_)(t);
  f0_->eval_into<double>(t, x.data(), out.data());
  path_->spec().coupling.eval_into<double>(t, x.data(), tmp_.data(), u_.data());
  out += tmp_;
}

BoxSet pullback_slice_D(const FieldAst& f0, const NoisePath& path, const StableBlock& b, double t_horizon,
                        const FlowConfig& cfg, double base_time, const DOptions& opts) {
  if (!(opts.depth_spacing > 0)) throw std::invalid_argument("depth spacing must be positive");
  if (!is_mesh_multiple(path.spec().mesh, cfg))
    throw std::invalid_argument("noise mesh must be a multiple of the integration step");
  const double T = round_to_mesh(t_horizon, cfg);
  if (std::abs(base_time) + T > path.t_max() + 1e-9)
    throw std::invalid_argument("horizon exceeds the noise path range");

  const NoisyField field(f0, path);
  BoxSet d = b.block;
  for (int k = 1; !d.empty(); ++k) {
    const double depth = std::min(T, round_to_mesh(k * opts.depth_spacing, cfg));
    d &= push_forward(b.block, field, base_time - depth, depth, cfg, opts.samples);
    if (depth >= T) break;
  }
  if (d.empty() || T == 0.0) return d;

  const Grid& g = d.grid();
  const BoxSet near = dilate(b.block, g.diagonal());
  const std::vector<std::size_t> members = d.indices();
  std::vector<char> keep(members.size(), 0);
  const long n = mesh_steps(T, cfg);
  parallel_for(members.size(), [&](std::size_t j) {
    NoisyField f = field;
    for (auto& p : box_samples(g, members[j], opts.samples, SampleLayout::Closed)) {
      const auto st = integrate<double>(f, base_time, p, n, cfg.step, cfg.blowup_bound,
                                        [&](long, double, const Eigen::VectorXd& y) {
                                          return near.contains_point(y);
                                        });
      if (!st.escaped && !st.stopped) {
        keep[j] = 1;
        return;
      }
    }
  });
  BoxSet out(d.grid_ptr());
  for (std::size_t j = 0; j < members.size(); ++j)
    if (keep[j]) out.insert(members[j]);
  return out;
}

PersistenceReport persistence_stats(const FieldAst& f0, const NoiseSpec& spec, const StableBlock& b,
                                    double t_horizon, const FlowConfig& cfg, int n_paths,
                                    std::uint64_t seed0, const DOptions& opts) {
  if (n_paths < 1) throw std::invalid_argument("need at least one path");
  PersistenceReport r;
  r.per_path.resize(static_cast<std::size_t>(n_paths));
  const double range = round_to_mesh(t_horizon, cfg) + spec.mesh;
  parallel_for(r.per_path.size(), [&](std::size_t j) {
    PathRecord& rec = r.per_path[j];
    rec.seed = seed0 + j;
    const NoisePath path = sample_path(spec, rec.seed, range);
    const BoxSet d = pullback_slice_D(f0, path, b, t_horizon, cfg, 0.0, opts);
    rec.nonempty = !d.empty();
    rec.contained = d.subset_of(b.block);
    if (rec.nonempty) rec.semidist = semidist(d, b.attractor);
  });
  std::size_t ne = 0, ct = 0;
  for (const auto& rec : r.per_path) {
    ne += rec.nonempty;
    ct += rec.contained && rec.nonempty;
    if (rec.semidist) r.max_semidist = std::max(r.max_semidist.value_or(0.0), *rec.semidist);
  }
  r.fraction_nonempty = static_cast<double>(ne) / n_paths;
  r.fraction_contained = static_cast<double>(ct) / n_paths;
  return r;
}

double noise_deviation(const FieldAst& f0, const NoiseSpec& spec, const StableBlock& b, double t_horizon,
                       const FlowConfig& cfg, int n_paths, std::uint64_t seed0, int max_points) {
  const std::vector<std::size_t> idx = b.block.indices();
  const std::size_t stride =
      std::max<std::size_t>(1, (idx.size() + max_points - 1) / std::max(1, max_points));
  std::vector<Eigen::VectorXd> pts;
  for (std::size_t j = 0; j < idx.size(); j += stride) pts.push_back(b.block.grid().center(idx[j]));
  const double range = round_to_mesh(t_horizon, cfg) + spec.mesh;
  std::vector<NoisePath> paths;
  for (int p = 0; p < n_paths; ++p) paths.push_back(sample_path(spec, seed0 + p, range));
  std::vector<double> gap(paths.size() * pts.size(), 0.0);
  parallel_for(gap.size(), [&](std::size_t j) {
    gap[j] = noisy_gap(f0, paths[j / pts.size()], pts[j % pts.size()], t_horizon, cfg, b.block.grid());
  });
  return gap.empty() ? 0.0 : *std::max_element(gap.begin(), gap.end());
}

double bisect_rho(const FieldAst& f0, NoiseSpec spec, const StableBlock& b, double t_horizon,
                  double bound, double rho_max, const FlowConfig& cfg, int n_paths,
                  std::uint64_t seed0) {
  auto dev = [&](double rho) {
    spec.rho = rho;
    return noise_deviation(f0, spec, b, t_horizon, cfg, n_paths, seed0);
  };
  if (dev(rho_max) < bound) return rho_max;
  double lo = 0.0, hi = rho_max;
  for (int it = 0; it < 60 && hi - lo > 0.01 * lo; ++it) {
    const double mid = 0.5 * (lo + hi);
    (dev(mid) < bound ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace attractor
