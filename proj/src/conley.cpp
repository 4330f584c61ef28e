#include "attractor/conley.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>

namespace attractor {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

// Calls fn(neighbour index) for every in-grid box of the 3^d block around k.
template <typename Fn>
void for_each_neighbor(const Grid& g, const Eigen::VectorXi& k, Fn&& fn) {
  const int d = g.dim();
  Eigen::VectorXi o = Eigen::VectorXi::Constant(d, -1);
  for (;;) {
    bool inside = true;
    for (int i = 0; i < d && inside; ++i) {
      const int ki = k[i] + o[i];
      inside = ki >= 0 && ki < g.res()[i];
    }
    if (inside) fn(g.linear_index(k + o));
    int i = 0;
    while (i < d && o[i] == 1) {
      o[i] = -1;
      ++i;
    }
    if (i == d) return;
    ++o[i];
  }
}

Eigen::VectorXi clamped_index(const Grid& g, const Eigen::VectorXd& p) {
  Eigen::VectorXi k(g.dim());
  for (int i = 0; i < g.dim(); ++i) {
    const double r = std::floor((p[i] - g.lo()[i]) / g.width()[i]);
    k[i] = static_cast<int>(std::clamp(r, 0.0, static_cast<double>(g.res()[i] - 1)));
  }
  return k;
}

double point_box_distance(const Grid& g, const Eigen::VectorXd& p, std::size_t box) {
  const Eigen::VectorXd lo = g.box_lo(box);
  double d2 = 0.0;
  for (int i = 0; i < g.dim(); ++i) {
    const double hi = lo[i] + g.width()[i];
    const double gap = std::max({0.0, lo[i] - p[i], p[i] - hi});
    d2 += gap * gap;
  }
  return std::sqrt(d2);
}

std::vector<std::size_t> box_image(const Grid& g, std::size_t box, const FieldAst& field, double s,
                                   double tau, const FlowConfig& cfg, int samples) {
  AstField f{&field};
  const long n = mesh_steps(tau, cfg);
  std::vector<std::size_t> out;
  for (auto& p : box_samples(g, box, samples, SampleLayout::Closed)) {
    const auto st = integrate<double>(f, s, p, n, cfg.step, cfg.blowup_bound);
    if (st.escaped) continue;
    if (const auto idx = g.locate(p)) out.push_back(*idx);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

IsolationSets compute_isolation(const BoxSet& n, const FieldAst& field, bool skew, double t_horizon,
                                const FlowConfig& cfg, int samples_per_box, double base_time) {
  if (!skew && field.uses_time())
    throw std::invalid_argument("autonomous G^T requested for a time-dependent field");
  if (n.empty()) throw ConleyError("G^T of an empty set");
  if (t_horizon < 0) throw std::invalid_argument("horizon must be nonnegative");
  const Grid& g = n.grid();
  const BoxSet allowed = dilate(n, g.diagonal());
  const BoxSet inner = interior(n);
  const long steps = mesh_steps(t_horizon, cfg);
  const std::vector<std::size_t> members = n.indices();
  std::vector<char> keep(members.size(), 0), touch(members.size(), 0);

  parallel_for(members.size(), [&](std::size_t j) {
    AstField f{&field};
    bool touched = false;
    for (const auto& p : box_samples(g, members[j], samples_per_box, SampleLayout::CellCentered)) {
      Eigen::VectorXd x = p;
      auto stay = [&](long, double, const Eigen::VectorXd& y) {
        const auto idx = g.locate(y);
        return idx && allowed.contains(*idx);
      };
      auto st = integrate<double>(f, base_time, x, steps, -cfg.step, cfg.blowup_bound, stay);
      if (st.escaped || st.stopped) return;

      x = p;
      if (const auto idx = g.locate(p); !idx || !inner.contains(*idx)) touched = true;
      st = integrate<double>(f, base_time, x, steps, cfg.step, cfg.blowup_bound,
                             [&](long, double, const Eigen::VectorXd& y) {
                               const auto idx = g.locate(y);
                               if (!idx || !allowed.contains(*idx)) return false;
                               if (!inner.contains(*idx)) touched = true;
                               return true;
                             });
      if (st.escaped || st.stopped) return;
    }
    keep[j] = 1;
    touch[j] = touched ? 1 : 0;
  });

  IsolationSets out{BoxSet(n.grid_ptr()), BoxSet(n.grid_ptr())};
  for (std::size_t j = 0; j < members.size(); ++j) {
    if (keep[j]) out.gt.insert(members[j]);
    if (keep[j] && touch[j]) out.gamma.insert(members[j]);
  }
  return out;
}

BoxSet compute_GT(const BoxSet& n, const FieldAst& field, bool skew, double t_horizon,
                  const FlowConfig& cfg, int samples_per_box, double base_time) {
  return compute_isolation(n, field, skew, t_horizon, cfg, samples_per_box, base_time).gt;
}

BoxSet compute_GammaT(const BoxSet& n, const FieldAst& field, bool skew, double t_horizon,
                      const FlowConfig& cfg, int samples_per_box, double base_time) {
  return compute_isolation(n, field, skew, t_horizon, cfg, samples_per_box, base_time).gamma;
}

// ---------------------------------------------------------------------------

InvariantSetResult invariant_set(const BoxSet& n, const FieldAst& field, double tau,
                                 const FlowConfig& cfg, int max_iters, int samples_per_box) {
  if (field.uses_time()) throw std::invalid_argument("invariant_set requires an autonomous field");
  const Grid& g = n.grid();
  const std::vector<std::size_t> members = n.indices();
  std::vector<std::vector<std::size_t>> images(members.size());
  parallel_for(members.size(), [&](std::size_t j) {
    images[j] = box_image(g, members[j], field, 0.0, tau, cfg, samples_per_box);
  });

  InvariantSetResult r{n, 0, false};
  while (r.iterations < max_iters) {
    BoxSet image(n.grid_ptr()), pre(n.grid_ptr());
    for (std::size_t j = 0; j < members.size(); ++j) {
      if (!r.set.contains(members[j])) continue;
      bool lands = false;
      for (auto i : images[j]) {
        image.insert(i);
        lands = lands || r.set.contains(i);
      }
      if (lands) pre.insert(members[j]);
    }
    BoxSet next = r.set & image & pre;
    ++r.iterations;
    if (next == r.set) {
      r.converged = true;
      break;
    }
    r.set = std::move(next);
  }
  return r;
}

// ---------------------------------------------------------------------------

GMinusEvaluator::GMinusEvaluator(FieldAst f0, BoxSet attractor, GMinusParams params, FlowConfig cfg)
    : f0_(std::move(f0)), attractor_(std::move(attractor)), params_(params), cfg_(cfg) {
  if (f0_.uses_time()) throw std::invalid_argument("g- requires an autonomous field");
  if (attractor_.empty()) throw ConleyError("g- needs a nonempty attractor");
  if (!(params_.alpha_scale > 0) || !(params_.horizon_cap > 0))
    throw std::invalid_argument("alpha scale and horizon cap must be positive");

  // Nearest attractor box per grid box by relaxation over 3^d neighbourhoods.
  const Grid& g = attractor_.grid();
  nearest_.assign(g.size(), kNone);
  std::vector<double> best(g.size(), std::numeric_limits<double>::infinity());
  std::deque<std::size_t> queue;
  attractor_.for_each([&](std::size_t i) {
    nearest_[i] = i;
    best[i] = 0.0;
    queue.push_back(i);
  });
  while (!queue.empty()) {
    const std::size_t b = queue.front();
    queue.pop_front();
    const std::size_t seed = nearest_[b];
    const Eigen::VectorXd sc = g.center(seed);
    for_each_neighbor(g, g.multi_index(b), [&](std::size_t nb) {
      const double d2 = (g.center(nb) - sc).squaredNorm();
      if (d2 < best[nb]) {
        best[nb] = d2;
        nearest_[nb] = seed;
        queue.push_back(nb);
      }
    });
  }
}

double GMinusEvaluator::distance_term(const Eigen::VectorXd& y) const {
  const Grid& g = attractor_.grid();
  double d = std::numeric_limits<double>::infinity();
  for_each_neighbor(g, clamped_index(g, y), [&](std::size_t nb) {
    d = std::min(d, point_box_distance(g, y, nearest_[nb]));
  });
  return std::min(1.0, d);
}

double GMinusEvaluator::operator()(const Eigen::VectorXd& x) const {
  AstField f{&f0_};
  double running = distance_term(x);
  Eigen::VectorXd y = x;
  const long cap = mesh_steps(params_.horizon_cap, cfg_);
  const auto st = integrate<double>(f, 0.0, y, cap, cfg_.step, cfg_.blowup_bound,
                                    [&](long, double t, const Eigen::VectorXd& p) {
                                      const double fy = distance_term(p);
                                      running = std::max(running, alpha(t) * fy);
                                      // alpha < 2, so later terms cannot exceed 2 F.
                                      return !(2.0 * fy < running);
                                    });
  if (st.escaped) throw ConleyError("orbit escaped before g- settled");
  return running;
}

// ---------------------------------------------------------------------------

BlockValidation validate_block(const BoxSet& block, const BoxSet& attractor, const BoxSet* ambient,
                               const FieldAst& f0, const FlowConfig& cfg) {
  BlockValidation v;
  v.attractor_nonempty = !attractor.empty();
  v.attractor_in_interior = v.attractor_nonempty && attractor.subset_of(interior(block));
  v.inside_neighborhood = !ambient || (block & boundary(*ambient)).empty();
  v.touches_domain_edge = block.touches_domain_edge();

  const Grid& g = block.grid();
  const BoxSet slack = dilate(block, g.diagonal());
  const std::vector<std::size_t> edge = boundary(block).indices();
  std::vector<char> ok(edge.size(), 0);
  parallel_for(edge.size(), [&](std::size_t j) {
    const auto r = flow_skew(f0, SkewState{0.0, g.center(edge[j])}, cfg.step, cfg);
    ok[j] = !r.escaped && slack.contains_point(r.endpoint.x);
  });
  v.forward_invariant = std::all_of(ok.begin(), ok.end(), [](char c) { return c != 0; });
  return v;
}

namespace {

std::vector<double> g_on_centers(const GMinusEvaluator& ev, const std::vector<std::size_t>& boxes) {
  const Grid& g = ev.attractor().grid();
  std::vector<double> out(boxes.size());
  parallel_for(boxes.size(), [&](std::size_t j) {
    try {
      out[j] = ev(g.center(boxes[j]));
    } catch (const ConleyError&) {
      out[j] = std::numeric_limits<double>::infinity();
    }
  });
  return out;
}

std::string describe_failure(const BlockValidation& v) {
  std::string why;
  if (!v.attractor_nonempty) why += " attractor empty;";
  if (!v.attractor_in_interior) why += " attractor not in block interior;";
  if (!v.forward_invariant) why += " boundary boxes not forward invariant;";
  if (!v.inside_neighborhood) why += " block touches the boundary of the ambient set (epsilon too large);";
  return why;
}

}  // namespace

StableBlock build_stable_block(const BoxSet& ntilde, const FieldAst& f0, double epsilon,
                               const BlockParams& params, const FlowConfig& cfg) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw ConleyError("epsilon must lie in (0, 1/2)");
  const auto inv = invariant_set(ntilde, f0, params.tau, cfg, params.max_iters, params.image_samples);
  if (inv.set.empty()) throw ConleyError("maximal invariant set in Ntilde is empty");
  if (!inv.set.subset_of(interior(ntilde)))
    throw ConleyError("maximal invariant set touches the boundary of Ntilde: not isolating");

  const GMinusEvaluator ev(f0, inv.set, params.g, cfg);
  const std::vector<std::size_t> boxes = ntilde.indices();
  const std::vector<double> gv = g_on_centers(ev, boxes);

  StableBlock b{BoxSet(ntilde.grid_ptr()), epsilon, {}, inv.set, {}};
  for (std::size_t j = 0; j < boxes.size(); ++j) {
    if (gv[j] <= epsilon) {
      b.block.insert(boxes[j]);
      b.g_values.emplace_back(boxes[j], gv[j]);
    }
  }
  b.validation = validate_block(b.block, b.attractor, &ntilde, f0, cfg);
  if (!b.validation.ok())
    throw ConleyError("stable block validation failed:" + describe_failure(b.validation) +
                      " try a smaller epsilon or a finer grid");
  return b;
}

StableBlock adopt_block(const BoxSet& block, const FieldAst& f0, const BlockParams& params,
                        const FlowConfig& cfg) {
  const auto inv = invariant_set(block, f0, params.tau, cfg, params.max_iters, params.image_samples);
  if (inv.set.empty()) throw ConleyError("maximal invariant set in the block is empty");
  const GMinusEvaluator ev(f0, inv.set, params.g, cfg);
  const std::vector<std::size_t> boxes = block.indices();
  const std::vector<double> gv = g_on_centers(ev, boxes);

  StableBlock b{block, 0.0, {}, inv.set, {}};
  for (std::size_t j = 0; j < boxes.size(); ++j) {
    b.g_values.emplace_back(boxes[j], gv[j]);
    if (std::isfinite(gv[j])) b.level = std::max(b.level, gv[j]);
  }
  b.validation = validate_block(b.block, b.attractor, nullptr, f0, cfg);
  if (!b.validation.ok())
    throw ConleyError("block validation failed:" + describe_failure(b.validation));
  return b;
}

// ---------------------------------------------------------------------------

double containment_margin(const BoxSet& inner, const BoxSet& outer, double upper) {
  auto fits = [&](double r) { return dilate(inner, r).subset_of(outer); };
  if (inner.empty()) return upper;
  if (!fits(0.0)) return 0.0;
  if (fits(upper)) return upper;
  double lo = 0.0, hi = upper;
  for (int it = 0; it < 64 && hi - lo > 0.01 * lo; ++it) {
    const double mid = 0.5 * (lo + hi);
    (fits(mid) ? lo : hi) = mid;
  }
  return lo;
}

double compute_delta(const StableBlock& b, const FieldAst& f0, double t_horizon,
                     const FlowConfig& cfg, int samples_per_box) {
  const auto iso = compute_isolation(b.block, f0, false, t_horizon, cfg, samples_per_box);
  if (!iso.gamma.empty()) throw ConleyError("Gamma^T is not empty at this horizon");
  if (iso.gt.empty()) throw ConleyError("grid too coarse for this horizon: G^T is empty");
  const BoxSet g2 = compute_GT(b.block, f0, false, 2.0 * t_horizon, cfg, samples_per_box);
  const Grid& g = b.block.grid();
  const double upper = (g.hi() - g.lo()).norm();
  const double delta = std::min(containment_margin(g2, iso.gt, upper),
                                containment_margin(iso.gt, b.block, upper));
  if (delta <= g.diagonal()) throw ConleyError("grid too coarse for this horizon");
  return delta - g.diagonal();
}

// ---------------------------------------------------------------------------

bool SliceFamily::all_nonempty() const {
  return !slices.empty() && std::none_of(degenerate.begin(), degenerate.end(), [](bool d) { return d; });
}

BoxSet SliceFamily::union_nonempty(const GridPtr& grid) const {
  BoxSet u(grid);
  for (const auto& s : slices) u |= s;
  return u;
}

SliceFamily pullback_slices(const FieldAst& fn, const StableBlock& b, double t_horizon,
                            const std::vector<double>& times, double depth, const FlowConfig& cfg,
                            const PullbackOptions& opts) {
  if (!(opts.tau > 0)) throw std::invalid_argument("push increment must be positive");
  if (depth < 0) throw std::invalid_argument("pullback depth must be nonnegative");
  const double d = round_to_mesh(depth, cfg);
  const AstField field{&fn};
  SliceFamily fam;
  for (double t : times) {
    const double s0 = t - d;
    BoxSet set = compute_GT(b.block, fn, true, t_horizon, cfg, opts.gt_samples, s0);
    int rounds = 0;
    double done = 0.0;
    while (done < d - 0.5 * cfg.step && !set.empty()) {
      const double span = std::min(opts.tau, d - done);
      BoxSet next = push_forward(set, field, s0 + done, span, cfg, opts.image_samples) & b.block;
      ++rounds;
      done = std::min(d, static_cast<double>(rounds) * opts.tau);
      const bool settled = !fn.uses_time() && next == set;
      set = std::move(next);
      if (settled) break;
    }
    fam.times.push_back(t);
    fam.degenerate.push_back(set.empty());
    fam.slices.push_back(std::move(set));
    fam.pushes.push_back(rounds);
  }
  return fam;
}

void write_slices_csv(std::ostream& os, const SliceFamily& family) {
  if (family.slices.empty()) {
    os << "t\n";
    return;
  }
  const Grid& g = family.slices.front().grid();
  os << "t";
  for (int i = 0; i < g.dim(); ++i) os << ",i" << i + 1;
  for (int i = 0; i < g.dim(); ++i) os << ",c" << i + 1;
  os << '\n';
  char buf[40];
  for (std::size_t k = 0; k < family.slices.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", family.times[k]);
    const std::string t = buf;
    family.slices[k].for_each([&](std::size_t idx) {
      const Eigen::VectorXi kk = g.multi_index(idx);
      const Eigen::VectorXd c = g.center(idx);
      os << t;
      for (int i = 0; i < g.dim(); ++i) os << ',' << kk[i];
      for (int i = 0; i < g.dim(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", c[i]);
        os << ',' << buf;
      }
      os << '\n';
    });
  }
}

}  // namespace attractor
