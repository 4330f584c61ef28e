#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "attractor/rds.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace attractor;

namespace {
const FlowConfig cfg{0.01, 1e6};
NoiseSpec additive(double rho, NoiseKind kind = NoiseKind::PiecewiseConstant) {
  return NoiseSpec::make(kind, rho, 0.05, 1, "u1", 1);
}
}  // namespace

TEST_CASE("noise paths") {
  const NoisePath a = sample_path(additive(0.3), 42, 10.0);
  const NoisePath b = sample_path(additive(0.3), 42, 10.0);
  const NoisePath wide = sample_path(additive(0.3), 42, 20.0);
  const NoisePath other = sample_path(additive(0.3), 43, 10.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ut(-10.0, 10.0);
  double sup = 0.0;
  bool differs = false;
  for (int k = 0; k < 10000; ++k) {
    const double t = ut(rng);
    const double v = a(t)[0];
    CHECK(v == b(t)[0]);
    CHECK(v == wide(t)[0]);
    differs = differs || v != other(t)[0];
    sup = std::max(sup, std::abs(v));
  }
  CHECK(sup <= 0.3);
  CHECK(differs);
  CHECK(sample_path(additive(0.0), 42, 5.0)(1.234)[0] == 0.0);
  CHECK_THROWS_AS(a(25.0), std::out_of_range);

  const NoisePath sm = sample_path(additive(0.3, NoiseKind::Smoothed), 42, 10.0);
  CHECK(sm(0.05)[0] == doctest::Approx(a(0.05)[0]));
  CHECK(sm(0.075)[0] == doctest::Approx(0.5 * (a(0.05)[0] + a(0.1)[0])));
  for (int k = 0; k < 1000; ++k) CHECK(std::abs(sm(ut(rng))[0]) <= 0.3);

  const NoisePath sh = a.shifted(3);
  for (double t : {-2.0, 0.01, 4.321}) CHECK(sh(t)[0] == a(t + 0.15)[0]);

  CHECK_THROWS_AS(NoiseSpec::make(NoiseKind::PiecewiseConstant, 0.1, 0.05, 1, "u1*sin(t)", 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(NoiseSpec::make(NoiseKind::PiecewiseConstant, 0.1, 0.05, 1, "u2", 1), ParseError);
}

TEST_CASE("cocycle property on the mesh") {
  const FieldAst f0 = FieldAst::parse("x1 - x1^3", 1);
  const NoisePath p = sample_path(additive(0.2), 7, 10.0);
  NoisyField f(f0, p);
  Eigen::VectorXd whole = Eigen::VectorXd::Constant(1, 0.4), parts = whole;
  integrate<double>(f, 0.0, whole, mesh_steps(3.0, cfg), cfg.step, cfg.blowup_bound);
  integrate<double>(f, 0.0, parts, mesh_steps(1.25, cfg), cfg.step, cfg.blowup_bound);
  integrate<double>(f, 1.25, parts, mesh_steps(1.75, cfg), cfg.step, cfg.blowup_bound);
  CHECK(whole[0] == parts[0]);
}

TEST_CASE("pullback set D") {
  const auto g = oracle::line(-1, 1, 256);
  const double h = g->width()[0];
  const FieldAst f0 = FieldAst::parse("-x1", 1);
  const StableBlock b = adopt_block(BoxSet::full(g), f0, {}, cfg);

  const BoxSet quiet = pullback_slice_D(f0, sample_path(additive(0.0), 1, 6.0), b, 5.0, cfg);
  CHECK(quiet.count() >= 1);
  CHECK(quiet.count() <= 2);
  CHECK(quiet.subset_of(oracle::interval(g, -std::exp(-5.0), std::exp(-5.0))));

  const NoisePath p = sample_path(additive(0.1), 11, 12.0);
  const BoxSet d10 = pullback_slice_D(f0, p, b, 10.0, cfg);
  REQUIRE_FALSE(d10.empty());
  CHECK(d10.subset_of(oracle::interval(g, -0.1 - 2 * h, 0.1 + 2 * h)));

  const BoxSet d4 = pullback_slice_D(f0, p, b, 4.0, cfg);
  const BoxSet d8 = pullback_slice_D(f0, p, b, 8.0, cfg);
  CHECK(d8.subset_of(d4));
  CHECK(d10.subset_of(d8));

  // Shifting the realization by one cell equals moving the base time.
  const BoxSet at_cell = pullback_slice_D(f0, p, b, 4.0, cfg, 0.05);
  const BoxSet shifted = pullback_slice_D(f0, p.shifted(1), b, 4.0, cfg, 0.0);
  CHECK(at_cell == shifted);

  CHECK_THROWS_AS(pullback_slice_D(f0, p, b, 20.0, cfg), std::invalid_argument);
}

TEST_CASE("persistence statistics") {
  const auto g = oracle::line(-1, 1, 128);
  const double h = g->width()[0];
  const FieldAst f0 = FieldAst::parse("-x1", 1);
  const StableBlock b = adopt_block(BoxSet::full(g), f0, {}, cfg);

  const PersistenceReport quiet = persistence_stats(f0, additive(0.0), b, 4.0, cfg, 3, 5);
  CHECK(quiet.fraction_nonempty == 1.0);
  CHECK(*quiet.max_semidist <= g->diagonal());

  const PersistenceReport noisy = persistence_stats(f0, additive(0.1), b, 6.0, cfg, 8, 100);
  CHECK(noisy.fraction_nonempty == 1.0);
  CHECK(noisy.fraction_contained == 1.0);
  CHECK(*noisy.max_semidist <= 0.1 + 2 * h);
  REQUIRE(noisy.per_path.size() == 8);
  CHECK(noisy.per_path[3].seed == 103);
}

TEST_CASE("rho bisection") {
  const auto g = oracle::line(0.5, 1.5, 64);
  const FieldAst f0 = FieldAst::parse("x1 - x1^3", 1);
  const StableBlock b = build_stable_block(BoxSet::full(g), f0, 0.2, {}, cfg);
  const double rho = bisect_rho(f0, additive(0.0), b, 1.0, 0.02, 1.0, cfg, 4, 1);
  CHECK(rho > 0.0);
  CHECK(rho < 1.0);
  NoiseSpec s = additive(rho);
  CHECK(noise_deviation(f0, s, b, 1.0, cfg, 4, 1) < 0.02);
  s.rho = 1.05 * rho;
  CHECK(noise_deviation(f0, s, b, 1.0, cfg, 4, 1) >= 0.02);
}
