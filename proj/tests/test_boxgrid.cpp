#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "attractor/boxgrid.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace attractor;

namespace {
GridPtr line(double lo, double hi, int res) {
  return make_grid(Eigen::VectorXd::Constant(1, lo), Eigen::VectorXd::Constant(1, hi),
                   Eigen::VectorXi::Constant(1, res));
}
GridPtr square(double lo, double hi, int res) {
  return make_grid(Eigen::VectorXd::Constant(2, lo), Eigen::VectorXd::Constant(2, hi),
                   Eigen::VectorXi::Constant(2, res));
}
GridPtr oracle_line2() { return line(0, 1, 2); }
BoxSet random_set(const GridPtr& g, std::mt19937_64& rng, double p) {
  std::bernoulli_distribution coin(p);
  BoxSet s(g);
  for (std::size_t i = 0; i < g->size(); ++i)
    if (coin(rng)) s.insert(i);
  return s;
}
}  // namespace

TEST_CASE("grid geometry") {
  const auto g = square(-2, 2, 4);
  CHECK(g->size() == 16);
  CHECK(g->width()[0] == 1.0);
  CHECK(g->diagonal() == doctest::Approx(std::sqrt(2.0)));
  const std::size_t i = g->linear_index(Eigen::Vector2i(1, 2));
  CHECK(i == 9);
  CHECK(g->multi_index(i) == Eigen::Vector2i(1, 2));
  CHECK(g->center(i).isApprox(Eigen::Vector2d(-0.5, 0.5)));
  CHECK(*g->locate(Eigen::Vector2d(-0.5, 0.5)) == i);
  CHECK(*g->locate(Eigen::Vector2d(2.0, 2.0)) == 15);
  CHECK_FALSE(g->locate(Eigen::Vector2d(2.01, 0.0)).has_value());
  CHECK(g->touches_edge(0));
  CHECK_FALSE(g->touches_edge(g->linear_index(Eigen::Vector2i(1, 1))));
  CHECK_THROWS(make_grid(Eigen::VectorXd::Constant(1, 1), Eigen::VectorXd::Constant(1, 0),
                         Eigen::VectorXi::Constant(1, 4)));
  CHECK_THROWS(square(0, 1, 1 << 14));
}

TEST_CASE("cover") {
  const auto g = line(-1, 1, 8);
  CHECK(cover(g, [](const Eigen::VectorXd&) { return true; }, 2) == BoxSet::full(g));
  const BoxSet half = cover(g, [](const Eigen::VectorXd& x) { return std::abs(x[0]) <= 0.5; }, 3);
  for (std::size_t k = 2; k <= 5; ++k) CHECK(half.contains(k));
  // Boxes 1 and 6 touch +-0.5 with a corner sample.
  CHECK(half.contains(1));
  CHECK(half.contains(6));
  CHECK(half.count() == 6);

  // Disk area against a Monte-Carlo estimate of the covered region's target.
  const auto sq = square(-2, 2, 64);
  const BoxSet disk = cover(sq, [](const Eigen::VectorXd& x) { return x.squaredNorm() <= 1.0; }, 3);
  const double box_area = sq->width().prod();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  int hits = 0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) hits += (std::hypot(u(rng), u(rng)) <= 1.0);
  const double mc = 16.0 * hits / n;
  CHECK(std::abs(disk.count() * box_area - mc) / mc < 0.10);
}

TEST_CASE("dilate") {
  const auto g = line(0, 1, 20);
  const double h = g->width()[0];
  BoxSet one(g);
  one.insert(10);
  CHECK(dilate(one, 0.0) == one);
  const BoxSet five = dilate(one, 1.5 * h);
  CHECK(five.count() == 5);
  for (std::size_t k = 8; k <= 12; ++k) CHECK(five.contains(k));

  std::mt19937_64 rng(11);
  const auto sq = square(0, 1, 24);
  for (int rep = 0; rep < 20; ++rep) {
    const BoxSet a = random_set(sq, rng, 0.05);
    const BoxSet b = a | random_set(sq, rng, 0.05);
    const double d = 0.1 * rep / 20.0;
    CHECK(dilate(a, d).subset_of(dilate(b, d)));
    CHECK(dilate(a, 0.0) == a);
    // Composition: eroding one layer absorbs the lattice slack.
    const double s = 0.07;
    CHECK(interior(dilate(a, d + s)).subset_of(dilate(dilate(a, d), s)) );
  }
}

TEST_CASE("interior and boundary") {
  const auto g = line(-1, 1, 8);
  // Edge boxes are always boundary.
  CHECK(interior(BoxSet::full(g)) == BoxSet::from_indices(g, {1, 2, 3, 4, 5, 6}));
  CHECK(interior(BoxSet::full(oracle_line2())).empty());
  const BoxSet s = BoxSet::from_indices(g, {2, 3, 4, 5});
  CHECK(interior(s) == BoxSet::from_indices(g, {3, 4}));
  CHECK(boundary(s) == BoxSet::from_indices(g, {2, 5}));

  std::mt19937_64 rng(5);
  const auto sq = square(0, 1, 16);
  for (int rep = 0; rep < 10; ++rep) {
    const BoxSet r = random_set(sq, rng, 0.7);
    CHECK(interior(r).subset_of(r));
    CHECK((boundary(r) | interior(r)) == r);
    CHECK((boundary(r) & interior(r)).empty());
  }

  // A set away from the edge sits inside the interior of its 2-diagonal dilation.
  BoxSet blob(sq);
  for (int i = 5; i <= 9; ++i)
    for (int j = 6; j <= 8; ++j) blob.insert(sq->linear_index(Eigen::Vector2i(i, j)));
  CHECK(blob.subset_of(interior(dilate(blob, 2 * sq->diagonal()))));
}

TEST_CASE("set algebra") {
  std::mt19937_64 rng(9);
  const auto sq = square(0, 1, 13);
  for (int rep = 0; rep < 10; ++rep) {
    const BoxSet a = random_set(sq, rng, 0.4), b = random_set(sq, rng, 0.4);
    CHECK((a | b).complement() == (a.complement() & b.complement()));
    CHECK((a & b).complement() == (a.complement() | b.complement()));
    CHECK((a - b) == (a & b.complement()));
    CHECK((a | b).count() + (a & b).count() == a.count() + b.count());
  }
  CHECK(BoxSet::full(sq).complement().empty());
  CHECK(BoxSet::full(sq).count() == 169);
  CHECK(BoxSet::full(sq) == BoxSet::full(square(0, 1, 13)));
  CHECK_THROWS(BoxSet::full(sq) | BoxSet::full(square(0, 1, 12)));
}

TEST_CASE("semidist") {
  const auto g = line(-0.25, 1.25, 6);  // centres -0.125, 0.125, ..., 1.125
  const BoxSet a = BoxSet::from_indices(g, {1});
  const BoxSet b = BoxSet::from_indices(g, {3, 5});
  CHECK(semidist(a, a) == 0.0);
  CHECK(semidist(a, b) == doctest::Approx(0.5));
  CHECK(semidist(b, a) == doctest::Approx(1.0));
  CHECK(hausdorff(a, b) == doctest::Approx(1.0));
  CHECK(semidist(BoxSet::from_indices(g, {0}), BoxSet::from_indices(g, {4})) == doctest::Approx(1.0));
  CHECK_THROWS(semidist(a, BoxSet(g)));
}

TEST_CASE("csv round trip") {
  std::mt19937_64 rng(1);
  const auto sq = square(-1, 1, 10);
  const BoxSet a = random_set(sq, rng, 0.3);
  std::stringstream ss;
  write_csv(ss, a);
  const std::string text = ss.str();
  CHECK(text.rfind("i1,i2,c1,c2\n", 0) == 0);
  CHECK(read_csv(ss, sq) == a);
}

TEST_CASE("samples") {
  const auto g = line(0, 1, 4);
  const auto closed = box_samples(*g, 1, 3, SampleLayout::Closed);
  REQUIRE(closed.size() == 3);
  CHECK(closed[0][0] == 0.25);
  CHECK(closed[1][0] == 0.375);
  CHECK(closed[2][0] == 0.5);
  const auto cc = box_samples(*g, 1, 2, SampleLayout::CellCentered);
  REQUIRE(cc.size() == 2);
  CHECK(cc[0][0] == doctest::Approx(0.3125));
  CHECK(cc[1][0] == doctest::Approx(0.4375));
  CHECK(box_samples(*square(0, 1, 4), 0, 3, SampleLayout::Closed).size() == 9);
}
