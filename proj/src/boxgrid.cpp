#include "attractor/boxgrid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace attractor {

Grid::Grid(Eigen::VectorXd lo, Eigen::VectorXd hi, Eigen::VectorXi res)
    : lo_(std::move(lo)), hi_(std::move(hi)), res_(std::move(res)) {
  const auto d = lo_.size();
  if (d == 0 || hi_.size() != d || res_.size() != d)
    throw std::invalid_argument("grid corners and resolution must share a positive dimension");
  width_.resize(d);
  stride_.resize(static_cast<std::size_t>(d));
  std::size_t total = 1;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(lo_[i] < hi_[i])) throw std::invalid_argument("grid requires lo < hi componentwise");
    if (res_[i] < 1) throw std::invalid_argument("grid resolution must be positive");
    width_[i] = (hi_[i] - lo_[i]) / res_[i];
    stride_[static_cast<std::size_t>(i)] = total;
    total *= static_cast<std::size_t>(res_[i]);
    if (total > kMaxBoxes) throw std::invalid_argument("grid exceeds 2^26 boxes");
  }
  size_ = total;
  diagonal_ = width_.norm();
}

GridPtr make_grid(Eigen::VectorXd lo, Eigen::VectorXd hi, Eigen::VectorXi res) {
  return std::make_shared<const Grid>(std::move(lo), std::move(hi), std::move(res));
}

Eigen::VectorXi Grid::multi_index(std::size_t index) const {
  Eigen::VectorXi k(dim());
  for (int i = 0; i < dim(); ++i) {
    k[i] = static_cast<int>(index % static_cast<std::size_t>(res_[i]));
    index /= static_cast<std::size_t>(res_[i]);
  }
  return k;
}

std::size_t Grid::linear_index(const Eigen::VectorXi& k) const {
  std::size_t idx = 0;
  for (int i = 0; i < dim(); ++i) idx += static_cast<std::size_t>(k[i]) * stride_[static_cast<std::size_t>(i)];
  return idx;
}

Eigen::VectorXd Grid::box_lo(std::size_t index) const {
  const Eigen::VectorXi k = multi_index(index);
  return lo_ + k.cast<double>().cwiseProduct(width_);
}

Eigen::VectorXd Grid::center(std::size_t index) const {
  const Eigen::VectorXi k = multi_index(index);
  return lo_ + (k.cast<double>().array() + 0.5).matrix().cwiseProduct(width_);
}

bool Grid::touches_edge(std::size_t index) const {
  for (int i = 0; i < dim(); ++i) {
    const auto k = static_cast<int>(index % static_cast<std::size_t>(res_[i]));
    if (k == 0 || k == res_[i] - 1) return true;
    index /= static_cast<std::size_t>(res_[i]);
  }
  return false;
}

std::optional<std::size_t> Grid::locate(const Eigen::VectorXd& p) const {
  std::size_t idx = 0;
  for (int i = 0; i < dim(); ++i) {
    if (!(p[i] >= lo_[i] && p[i] <= hi_[i])) return std::nullopt;
    auto k = static_cast<long>(std::floor((p[i] - lo_[i]) / width_[i]));
    k = std::clamp<long>(k, 0, res_[i] - 1);
    idx += static_cast<std::size_t>(k) * stride_[static_cast<std::size_t>(i)];
  }
  return idx;
}

bool Grid::operator==(const Grid& o) const {
  return lo_ == o.lo_ && hi_ == o.hi_ && res_ == o.res_;
}

std::vector<Eigen::VectorXd> box_samples(const Grid& grid, std::size_t index, int s,
                                         SampleLayout layout) {
  if (s < 1) throw std::invalid_argument("samples_per_box must be positive");
  const int d = grid.dim();
  const Eigen::VectorXd lo = grid.box_lo(index);
  std::vector<double> offsets(static_cast<std::size_t>(s));
  for (int j = 0; j < s; ++j) {
    if (layout == SampleLayout::CellCentered) offsets[static_cast<std::size_t>(j)] = (j + 0.5) / s;
    else offsets[static_cast<std::size_t>(j)] = s == 1 ? 0.5 : static_cast<double>(j) / (s - 1);
  }
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(s);
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(total);
  for (std::size_t n = 0; n < total; ++n) {
    Eigen::VectorXd p(d);
    std::size_t r = n;
    for (int i = 0; i < d; ++i) {
      p[i] = lo[i] + offsets[r % static_cast<std::size_t>(s)] * grid.width()[i];
      r /= static_cast<std::size_t>(s);
    }
    pts.push_back(std::move(p));
  }
  return pts;
}

// ---------------------------------------------------------------------------

BoxSet::BoxSet(GridPtr grid) : grid_(std::move(grid)) {
  if (!grid_) throw std::invalid_argument("box set requires a grid");
  bits_.assign((grid_->size() + 63) / 64, 0);
}

BoxSet BoxSet::full(GridPtr grid) {
  BoxSet s(std::move(grid));
  std::fill(s.bits_.begin(), s.bits_.end(), ~std::uint64_t{0});
  s.trim();
  return s;
}

BoxSet BoxSet::from_indices(GridPtr grid, const std::vector<std::size_t>& indices) {
  BoxSet s(std::move(grid));
  for (auto i : indices) {
    if (i >= s.grid().size()) throw std::out_of_range("box index outside grid");
    s.insert(i);
  }
  return s;
}

void BoxSet::trim() noexcept {
  const std::size_t rem = grid_->size() % 64;
  if (rem && !bits_.empty()) bits_.back() &= (std::uint64_t{1} << rem) - 1;
}

bool BoxSet::contains_point(const Eigen::VectorXd& p) const {
  const auto idx = grid_->locate(p);
  return idx && contains(*idx);
}

std::size_t BoxSet::count() const noexcept {
  std::size_t n = 0;
  for (auto w : bits_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

bool BoxSet::empty() const noexcept {
  return std::all_of(bits_.begin(), bits_.end(), [](std::uint64_t w) { return w == 0; });
}

std::vector<std::size_t> BoxSet::indices() const {
  std::vector<std::size_t> out;
  out.reserve(count());
  for_each([&](std::size_t i) { out.push_back(i); });
  return out;
}

void BoxSet::check_same_grid(const BoxSet& o) const {
  if (grid_ != o.grid_ && !(*grid_ == *o.grid_))
    throw std::invalid_argument("box sets live on different grids");
}

BoxSet& BoxSet::operator|=(const BoxSet& o) {
  check_same_grid(o);
  for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] |= o.bits_[i];
  return *this;
}

BoxSet& BoxSet::operator&=(const BoxSet& o) {
  check_same_grid(o);
  for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] &= o.bits_[i];
  return *this;
}

BoxSet& BoxSet::operator-=(const BoxSet& o) {
  check_same_grid(o);
  for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] &= ~o.bits_[i];
  return *this;
}

BoxSet BoxSet::complement() const {
  BoxSet c(grid_);
  for (std::size_t i = 0; i < bits_.size(); ++i) c.bits_[i] = ~bits_[i];
  c.trim();
  return c;
}

bool BoxSet::subset_of(const BoxSet& o) const {
  check_same_grid(o);
  for (std::size_t i = 0; i < bits_.size(); ++i)
    if (bits_[i] & ~o.bits_[i]) return false;
  return true;
}

bool BoxSet::operator==(const BoxSet& o) const {
  check_same_grid(o);
  return bits_ == o.bits_;
}

bool BoxSet::touches_domain_edge() const {
  bool touches = false;
  for_each([&](std::size_t i) { touches = touches || grid_->touches_edge(i); });
  return touches;
}

// ---------------------------------------------------------------------------

BoxSet cover(const GridPtr& grid, const std::function<bool(const Eigen::VectorXd&)>& predicate,
             int samples_per_box) {
  BoxSet out(grid);
  for (std::size_t i = 0; i < grid->size(); ++i) {
    for (const auto& p : box_samples(*grid, i, samples_per_box, SampleLayout::Closed)) {
      if (predicate(p)) {
        out.insert(i);
        break;
      }
    }
  }
  return out;
}

namespace {

// Index offsets whose centre distance is within radius.
std::vector<Eigen::VectorXi> ball_stencil(const Grid& g, double radius) {
  const int d = g.dim();
  Eigen::VectorXi reach(d);
  for (int i = 0; i < d; ++i) reach[i] = static_cast<int>(std::floor(radius / g.width()[i] + 1e-9));
  const double r2 = radius * radius * (1.0 + 1e-12);
  std::vector<Eigen::VectorXi> out;
  Eigen::VectorXi o = -reach;
  for (;;) {
    double dist2 = 0.0;
    for (int i = 0; i < d; ++i) {
      const double c = o[i] * g.width()[i];
      dist2 += c * c;
    }
    if (dist2 <= r2) out.push_back(o);
    int i = 0;
    while (i < d && o[i] == reach[i]) {
      o[i] = -reach[i];
      ++i;
    }
    if (i == d) break;
    ++o[i];
  }
  return out;
}

// True if every in-grid face neighbour of the box is a member.
bool face_enclosed(const BoxSet& s, const Eigen::VectorXi& k) {
  const Grid& g = s.grid();
  for (int i = 0; i < g.dim(); ++i) {
    for (int sgn : {-1, 1}) {
      Eigen::VectorXi n = k;
      n[i] += sgn;
      if (n[i] < 0 || n[i] >= g.res()[i]) continue;
      if (!s.contains(g.linear_index(n))) return false;
    }
  }
  return true;
}

}  // namespace

BoxSet dilate(const BoxSet& s, double delta) {
  if (!(delta >= 0.0)) throw std::invalid_argument("dilation radius must be nonnegative");
  const Grid& g = s.grid();
  const auto stencil = ball_stencil(g, delta + 0.5 * g.diagonal());
  BoxSet out = s;
  s.for_each([&](std::size_t idx) {
    const Eigen::VectorXi k = g.multi_index(idx);
    // A member whose face neighbours are all members contributes nothing new:
    // any centre within the radius of it is within the radius of a neighbour.
    if (face_enclosed(s, k)) return;
    for (const auto& o : stencil) {
      bool inside = true;
      for (int i = 0; i < g.dim() && inside; ++i) {
        const int ki = k[i] + o[i];
        inside = ki >= 0 && ki < g.res()[i];
      }
      if (inside) out.insert(g.linear_index(k + o));
    }
  });
  return out;
}

BoxSet interior(const BoxSet& s) {
  const Grid& g = s.grid();
  const int d = g.dim();
  BoxSet out(s.grid_ptr());
  s.for_each([&](std::size_t idx) {
    if (g.touches_edge(idx)) return;
    const Eigen::VectorXi k = g.multi_index(idx);
    Eigen::VectorXi o = Eigen::VectorXi::Constant(d, -1);
    for (;;) {
      if (!s.contains(g.linear_index(k + o))) return;
      int i = 0;
      while (i < d && o[i] == 1) {
        o[i] = -1;
        ++i;
      }
      if (i == d) break;
      ++o[i];
    }
    out.insert(idx);
  });
  return out;
}

BoxSet boundary(const BoxSet& s) { return s - interior(s); }

double semidist(const BoxSet& a, const BoxSet& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("semidist of an empty box set");
  const Grid& g = a.grid();
  std::vector<Eigen::VectorXd> targets;
  b.for_each([&](std::size_t i) { targets.push_back(g.center(i)); });
  double worst = 0.0;
  a.for_each([&](std::size_t i) {
    if (b.contains(i)) return;
    const Eigen::VectorXd c = g.center(i);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : targets) {
      best = std::min(best, (c - t).squaredNorm());
      if (best <= worst) return;  // cannot raise the maximum
    }
    worst = std::max(worst, best);
  });
  return std::sqrt(worst);
}

double hausdorff(const BoxSet& a, const BoxSet& b) { return std::max(semidist(a, b), semidist(b, a)); }

void write_csv(std::ostream& os, const BoxSet& s) {
  const Grid& g = s.grid();
  for (int i = 0; i < g.dim(); ++i) os << (i ? "," : "") << "i" << i + 1;
  for (int i = 0; i < g.dim(); ++i) os << ",c" << i + 1;
  os << '\n';
  char buf[40];
  s.for_each([&](std::size_t idx) {
    const Eigen::VectorXi k = g.multi_index(idx);
    const Eigen::VectorXd c = g.center(idx);
    for (int i = 0; i < g.dim(); ++i) os << (i ? "," : "") << k[i];
    for (int i = 0; i < g.dim(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", c[i]);
      os << ',' << buf;
    }
    os << '\n';
  });
}

BoxSet read_csv(std::istream& is, const GridPtr& grid) {
  BoxSet out(grid);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty box set csv");
  const int d = grid->dim();
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    Eigen::VectorXi k(d);
    std::string cell;
    for (int i = 0; i < d; ++i) {
      if (!std::getline(row, cell, ',')) throw std::runtime_error("short box set csv row");
      k[i] = std::stoi(cell);
      if (k[i] < 0 || k[i] >= grid->res()[i]) throw std::runtime_error("box index outside grid");
    }
    out.insert(grid->linear_index(k));
  }
  return out;
}

}  // namespace attractor
