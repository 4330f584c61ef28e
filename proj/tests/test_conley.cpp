#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "attractor/conley.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace attractor;

namespace {
const FlowConfig cfg{0.01, 1e6};
const FieldAst linear = FieldAst::parse("-x1", 1);
const FieldAst growth = FieldAst::parse("x1", 1);
const FieldAst pitch = FieldAst::parse("x1 - x1^3", 1);
const FieldAst hopf = FieldAst::parse("x1*(1-x1^2-x2^2)-x2; x2*(1-x1^2-x2^2)+x1", 2);
Eigen::VectorXd at(double v) { return Eigen::VectorXd::Constant(1, v); }
}  // namespace

TEST_CASE("G^T of the linear field") {
  const auto g = oracle::line(-1, 1, 256);
  const double h = g->width()[0];
  const BoxSet n = BoxSet::full(g);
  const double r = std::exp(-1.0);
  CHECK(oracle::hausdorff_to_interval(compute_GT(n, linear, false, 1.0, cfg), -r, r) <= 2 * h);
  CHECK(oracle::hausdorff_to_interval(compute_GT(n, growth, false, 1.0, cfg), -r, r) <= 2 * h);
  CHECK(compute_GT(n, linear, false, 0.0, cfg) == n);
  CHECK_THROWS_AS(compute_GT(n, FieldAst::parse("sin(t)", 1), false, 1.0, cfg), std::invalid_argument);
  CHECK_THROWS_AS(compute_GT(BoxSet(g), linear, false, 1.0, cfg), ConleyError);
}

TEST_CASE("Gamma^T") {
  const auto g = oracle::line(-1, 1, 256);
  const double h = g->width()[0];
  const BoxSet n = BoxSet::full(g);
  for (double T : {0.5, 1.0, 2.0}) CHECK(compute_GammaT(n, linear, false, T, cfg).empty());

  const BoxSet gam = compute_GammaT(n, growth, false, 1.0, cfg);
  REQUIRE_FALSE(gam.empty());
  gam.for_each([&](std::size_t i) {
    CHECK(std::abs(std::abs(g->center(i)[0]) - std::exp(-1.0)) <= 2 * h);
  });

  const auto sq = oracle::square(0, 1, 16);
  const BoxSet blob = oracle::annulus(sq, 0.3, 0.8);
  const FieldAst zero = FieldAst::parse("0; 0", 2);
  CHECK(compute_GammaT(blob, zero, false, 1.0, cfg) == boundary(blob));
  CHECK(compute_GT(blob, zero, false, 1.0, cfg) == blob);
}

TEST_CASE("Gamma^T of the linear field in skew form matches the autonomous one") {
  const auto g = oracle::line(-1, 1, 64);
  const BoxSet n = BoxSet::full(g);
  const auto a = compute_isolation(n, linear, false, 1.0, cfg);
  const auto b = compute_isolation(n, linear, true, 1.0, cfg, 2, 17.5);
  CHECK(a.gt == b.gt);
  CHECK(a.gamma == b.gamma);
}

TEST_CASE("invariant sets") {
  const auto g = oracle::line(-1, 1, 256);
  const auto k = invariant_set(BoxSet::full(g), linear, 1.0, cfg);
  CHECK(k.converged);
  CHECK(k.set.count() <= 2);
  CHECK(k.set.contains(*g->locate(at(0.0))));
  k.set.for_each([&](std::size_t i) { CHECK(std::abs(g->center(i)[0]) <= g->width()[0]); });

  const auto small = oracle::line(-1, 1, 16);
  const BoxSet some = BoxSet::from_indices(small, {3, 4, 5, 9, 12});
  CHECK(invariant_set(some, FieldAst::parse("0", 1), 1.0, cfg).set == some);

  const auto pg = oracle::line(0.5, 1.5, 128);
  const auto pk = invariant_set(BoxSet::full(pg), pitch, 1.0, cfg);
  CHECK(pk.set.count() >= 1);
  CHECK(pk.set.count() <= 2);
  CHECK(pk.set.contains(*pg->locate(at(1.0))));
}

TEST_CASE("g minus on the linear field") {
  const auto g = oracle::line(-1, 1, 256);
  const double h = g->width()[0];
  const auto k = invariant_set(BoxSet::full(g), linear, 1.0, cfg).set;
  const GMinusEvaluator ev(linear, k, {}, cfg);
  k.for_each([&](std::size_t i) { CHECK(ev(g->center(i)) == 0.0); });

  // Brute force: sup of alpha(t) |x| e^{-t} sits at t = 0.
  CHECK(oracle::g_minus_brute([](double t) { return oracle::linear(1.0, t); }) == doctest::Approx(1.0));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0), us(0.01, 2.0);
  for (int j = 0; j < 50; ++j) {
    const double x = u(rng);
    const double want = oracle::g_minus_brute([&](double t) { return std::abs(oracle::linear(x, t)); });
    CHECK(std::abs(ev(at(x)) - want) <= 2 * h);
  }
  CHECK(ev.alpha(0.0) == 1.0);
  CHECK(ev.alpha(1.0) == doctest::Approx(1.5));
  CHECK(ev.alpha(1e9) < 2.0);
}

TEST_CASE("g minus decreases along orbits") {
  const auto sq = oracle::square(-2, 2, 64);
  const BoxSet nt = oracle::annulus(sq, 0.5, 1.5);
  const auto k = invariant_set(nt, hopf, 1.0, cfg).set;
  const GMinusEvaluator ev(hopf, k, {}, cfg);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ur(0.6, 1.4), uth(0, 2 * M_PI), us(0.01, 2.0);
  // Lipschitz slack: F is 1-Lipschitz and alpha < 2, so one diagonal times 2.
  const double slack = 2 * sq->diagonal();
  for (int j = 0; j < 100; ++j) {
    const double r = ur(rng), th = uth(rng);
    Eigen::VectorXd x(2);
    x << r * std::cos(th), r * std::sin(th);
    const double s = round_to_mesh(us(rng), cfg);
    const Eigen::VectorXd y = flow_auto(hopf, x, s, cfg).endpoint.x;
    CHECK(ev(y) <= ev(x) + slack);
  }
}

TEST_CASE("g minus reports escaping orbits") {
  const auto g = oracle::line(-1, 1, 32);
  const auto k = BoxSet::from_indices(g, {15, 16});
  const GMinusEvaluator ev(growth, k, {}, cfg);
  CHECK_THROWS_AS(ev(at(0.5)), ConleyError);
  CHECK_THROWS_AS(GMinusEvaluator(linear, BoxSet(g), {}, cfg), ConleyError);
}

TEST_CASE("stable block of the linear field") {
  const auto g = oracle::line(-1, 1, 256);
  const double h = g->width()[0];
  const StableBlock b = build_stable_block(BoxSet::full(g), linear, 0.25, {}, cfg);
  CHECK(oracle::hausdorff_to_interval(b.block, -0.25, 0.25) <= 2 * h);
  CHECK(b.validation.ok());
  CHECK(b.attractor.subset_of(interior(b.block)));
  for (const auto& [i, v] : b.g_values) CHECK(v <= 0.25);
  CHECK_THROWS_AS(build_stable_block(BoxSet::full(g), linear, 0.5, {}, cfg), ConleyError);
  CHECK_THROWS_AS(build_stable_block(BoxSet::full(g), linear, 0.0, {}, cfg), ConleyError);
}

TEST_CASE("stable block of the pitchfork") {
  const auto g = oracle::line(0.5, 1.5, 128);
  const double h = g->width()[0];
  const StableBlock b = build_stable_block(BoxSet::full(g), pitch, 0.2, {}, cfg);
  CHECK(b.block.contains(*g->locate(at(1.0))));
  CHECK(b.validation.forward_invariant);
  // Brute-force g- along the closed-form orbit, distance to the point 1.
  auto g_ref = [](double x) {
    return oracle::g_minus_brute([&](double t) { return std::abs(oracle::pitchfork(x, t) - 1.0); });
  };
  b.block.for_each([&](std::size_t i) { CHECK(g_ref(g->center(i)[0]) <= 0.2 + 2 * h); });
  for (std::size_t i = 0; i < g->size(); ++i)
    if (!b.block.contains(i)) CHECK(g_ref(g->center(i)[0]) >= 0.2 - 2 * h);
}

TEST_CASE("stable block of the Hopf annulus") {
  const auto sq = oracle::square(-2, 2, 64);
  const double d = sq->diagonal();
  const BoxSet nt = oracle::annulus(sq, 0.5, 1.5);
  const StableBlock b = build_stable_block(nt, hopf, 0.2, {}, cfg);
  CHECK(b.validation.ok());
  CHECK(oracle::annulus(sq, 1.0, 1.0).subset_of(b.block));
  // Radial brute force for the extent of the sublevel set.
  auto g_ref = [](double r) {
    return oracle::g_minus_brute([&](double t) { return std::abs(oracle::hopf_radius(r, t) - 1.0); });
  };
  b.block.for_each([&](std::size_t i) { CHECK(g_ref(sq->center(i).norm()) <= 0.2 + 2 * d); });
  CHECK_FALSE(b.block.contains(*sq->locate(Eigen::Vector2d(0.0, 0.0))));
}

TEST_CASE("adopted block") {
  const auto g = oracle::line(-1, 1, 64);
  const StableBlock b = adopt_block(BoxSet::full(g), linear, {}, cfg);
  CHECK(b.block == BoxSet::full(g));
  CHECK(b.validation.ok());
  CHECK(b.validation.touches_domain_edge);
  CHECK(b.level == doctest::Approx(1.0).epsilon(0.05));
  CHECK_THROWS_AS(adopt_block(BoxSet::full(g), FieldAst::parse("1", 1), {}, cfg), ConleyError);
}

TEST_CASE("delta margin") {
  const auto g = oracle::line(-1, 1, 256);
  const StableBlock b = adopt_block(BoxSet::full(g), linear, {}, cfg);
  const double closed1 = std::exp(-1.0) - std::exp(-2.0);
  const double d1 = compute_delta(b, linear, 1.0, cfg);
  CHECK(std::abs(d1 - closed1) <= 0.1 * closed1);
  const double d05 = compute_delta(b, linear, 0.5, cfg);
  CHECK(std::exp(-0.5) - std::exp(-1.0) >= closed1);
  CHECK(d05 >= d1);
  CHECK_THROWS_WITH_AS(compute_delta(b, linear, 6.0, cfg), doctest::Contains("too coarse"), ConleyError);
  CHECK_THROWS_AS(compute_delta(b, growth, 1.0, cfg), ConleyError);
}

TEST_CASE("containment margin") {
  const auto g = oracle::line(0, 1, 100);
  const BoxSet inner = oracle::interval(g, 0.4, 0.6);
  const BoxSet outer = oracle::interval(g, 0.2, 0.8);
  const double m = containment_margin(inner, outer, 1.0);
  CHECK(m == doctest::Approx(0.2).epsilon(0.1));
  CHECK(containment_margin(outer, inner, 1.0) == 0.0);
}

TEST_CASE("pullback slices") {
  const auto g = oracle::line(-1, 1, 256);
  const double h = g->width()[0];
  const StableBlock b = adopt_block(BoxSet::full(g), linear, {}, cfg);
  const FieldAst fn = FieldAst::parse("-x1+0.2*sin(t)", 1);
  const SliceFamily fam = pullback_slices(fn, b, 1.0, {0.0, 1.0, 2.5}, 20.0, cfg);
  REQUIRE(fam.all_nonempty());
  for (std::size_t k = 0; k < fam.times.size(); ++k) {
    const double want = oracle::forced_linear_pullback(0.2, fam.times[k]);
    CHECK(fam.slices[k].subset_of(b.block));
    fam.slices[k].for_each([&](std::size_t i) { CHECK(std::abs(g->center(i)[0] - want) <= 2 * h); });
  }

  const SliceFamily auto_fam = pullback_slices(linear, b, 1.0, {0.0, 3.0}, 20.0, cfg);
  for (const auto& s : auto_fam.slices) CHECK(s == b.attractor);

  // Doubling the depth moves no slice by more than one box layer.
  const SliceFamily deep = pullback_slices(fn, b, 1.0, {0.0, 1.0, 2.5}, 40.0, cfg);
  for (std::size_t k = 0; k < deep.slices.size(); ++k) {
    CHECK(deep.slices[k].subset_of(dilate(fam.slices[k], g->diagonal())));
    CHECK(fam.slices[k].subset_of(dilate(deep.slices[k], g->diagonal())));
  }

  const SliceFamily wild = pullback_slices(FieldAst::parse("-x1+3*sin(t)", 1), b, 1.0, {0.0, 1.5}, 20.0, cfg);
  CHECK_FALSE(wild.all_nonempty());

  std::stringstream ss;
  write_slices_csv(ss, fam);
  CHECK(ss.str().rfind("t,i1,c1\n", 0) == 0);
}

TEST_CASE("G^T shrinks as the horizon grows") {
  struct Case {
    const FieldAst* f;
    BoxSet n;
  };
  const auto g1 = oracle::line(-1, 1, 128);
  const auto gp = oracle::line(0.5, 1.5, 128);
  const auto sq = oracle::square(-2, 2, 48);
  const Case cases[] = {{&linear, BoxSet::full(g1)}, {&pitch, BoxSet::full(gp)},
                        {&hopf, oracle::annulus(sq, 0.5, 1.5)}};
  const std::pair<double, double> pairs[] = {{0.5, 0.25}, {1.0, 0.5}, {2.0, 1.0}};
  for (const auto& c : cases) {
    for (const auto& [t1, t2] : pairs) {
      CHECK(compute_GT(c.n, *c.f, false, t1, cfg).subset_of(compute_GT(c.n, *c.f, false, t2, cfg)));
    }
  }
}
