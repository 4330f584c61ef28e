// Bounded-noise random forcing on top of an autonomous field: reproducible
// two-sided noise paths, per-realization pullback sets D, and Monte-Carlo
// persistence statistics.
#pragma once

#include "attractor/conley.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace attractor {

enum class NoiseKind { PiecewiseConstant, Smoothed };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::PiecewiseConstant;
  double rho = 0.0;    // sup-norm bound of every component
  double mesh = 0.05;  // cell length (piecewise constant) or knot spacing
  int m = 1;           // forcing dimension
  /// d components over x1..xd and parameters u1..um; added to f0. Must not
  /// reference t (time enters only through the path).
  FieldAst coupling;

  static NoiseSpec make(NoiseKind kind, double rho, double mesh, int m, const std::string& coupling,
                        int dim);
};

class NoisePath {
 public:
  /// Cells cover [-t_max, t_max]; cell c spans [c mesh, (c+1) mesh).
  NoisePath(NoiseSpec spec, std::uint64_t seed, double t_max, long cell_offset = 0);

  /// Value at time t. For piecewise-constant paths this is the value of the
  /// cell containing t.
  Eigen::VectorXd operator()(double t) const;
  /// Value of global cell c (shift included).
  const double* cell_value(long c) const;
  long cell_of(double t) const;

  /// The path t -> xi(t + k mesh), regenerated from the same seed.
  NoisePath shifted(long cells) const;

  const NoiseSpec& spec() const noexcept { return spec_; }
  std::uint64_t seed() const noexcept { return seed_; }
  double t_max() const noexcept { return t_max_; }
  long first_cell() const noexcept { return first_; }
  long cells() const noexcept { return static_cast<long>(values_.size()) / spec_.m; }

 private:
  NoiseSpec spec_;
  std::uint64_t seed_;
  double t_max_;
  long offset_;
  long first_;
  std::vector<double> values_;
};

NoisePath sample_path(const NoiseSpec& spec, std::uint64_t seed, double t_max);

/// Vector field f0(x) + coupling(x, xi(t)). Piecewise-constant noise is
/// frozen per integrator step at the cell of the step midpoint, so the
/// integrator never straddles a switch when mesh is a multiple of the step.
class NoisyField {
 public:
  NoisyField(const FieldAst& f0, const NoisePath& path);

  void begin_step(double t, double h);
  void operator()(double t, const Eigen::VectorXd& x, Eigen::VectorXd& out);

 private:
  const FieldAst* f0_;
  const NoisePath* path_;
  Eigen::VectorXd u_, tmp_;
  bool frozen_ = false;
};

struct DOptions {
  double depth_spacing = 2.0;  // pullback depths tau, 2 tau, ..., T
  int samples = 3;             // Closed-layout samples per box
};

/// D ~ (intersection over depths of B pushed from base - depth to base)
///     & (boxes with a sample whose forward orbit over [0, T] stays near B).
BoxSet pullback_slice_D(const FieldAst& f0, const NoisePath& path, const StableBlock& b, double t_horizon,
                        const FlowConfig& cfg, double base_time = 0.0, const DOptions& opts = {});

struct PathRecord {
  std::uint64_t seed = 0;
  bool nonempty = false;
  bool contained = false;
  std::optional<double> semidist;
};

struct PersistenceReport {
  double fraction_nonempty = 0.0;
  double fraction_contained = 0.0;
  std::optional<double> max_semidist;
  std::vector<PathRecord> per_path;
};

PersistenceReport persistence_stats(const FieldAst& f0, const NoiseSpec& spec, const StableBlock& b,
                                    double t_horizon, const FlowConfig& cfg, int n_paths,
                                    std::uint64_t seed0, const DOptions& opts = {});

/// max over paths, block centres and |t| <= T of the gap between noisy and
/// unperturbed trajectories started together at base time 0, with the same
/// grid-exit cutoff as trajectory_deviation.
double noise_deviation(const FieldAst& f0, const NoiseSpec& spec, const StableBlock& b, double t_horizon,
                       const FlowConfig& cfg, int n_paths, std::uint64_t seed0, int max_points = 32);

/// Largest rho in (0, rho_max] (bisection, 1% relative) whose noise deviation
/// stays below `bound`. Uses the fact that paths scale linearly in rho.
double bisect_rho(const FieldAst& f0, NoiseSpec spec, const StableBlock& b, double t_horizon,
                  double bound, double rho_max, const FlowConfig& cfg, int n_paths,
                  std::uint64_t seed0);

}  // namespace attractor
