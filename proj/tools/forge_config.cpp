#include "forge_config.hpp"

#include "attractor/perturb.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace forge {

using nlohmann::json;

namespace {

const json* find(const json& root, const std::string& dotted) {
  const json* cur = &root;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!cur->is_object() || !cur->contains(part)) return nullptr;
    cur = &(*cur)[part];
  }
  return cur;
}

template <typename T>
T get(const json& root, const std::string& key) {
  const json* v = find(root, key);
  if (!v) throw ConfigError(key, "missing");
  try {
    return v->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(key, std::string("wrong type (") + e.what() + ")");
  }
}

template <typename T>
T get(const json& root, const std::string& key, T fallback) {
  return find(root, key) ? get<T>(root, key) : fallback;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double rounded_horizon(double T, const attractor::FlowConfig& flow, const std::string& key,
                       std::vector<std::string>& warnings) {
  if (!(T >= 0)) throw ConfigError(key, "must be nonnegative");
  const double r = attractor::round_to_mesh(T, flow);
  if (!attractor::is_mesh_multiple(T, flow))
    warnings.push_back(key + "=" + fmt(T) + " is not a multiple of flow.step; rounded to " + fmt(r));
  return r;
}

// Parse an expression now so errors carry the key; the stages reparse.
void check_expr(const std::string& key, const std::string& src, int dim,
                const std::vector<std::string>& params = {}) {
  try {
    (void)attractor::FieldAst::parse(src, dim, params);
  } catch (const attractor::ParseError& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  ExperimentConfig c;
  c.raw = j;
  c.name = get<std::string>(j, "name", "experiment");
  c.dim = get<int>(j, "field.dim", 1);
  if (c.dim < 1) throw ConfigError("field.dim", "must be positive");

  c.f0 = get<std::string>(j, "field.f0");
  check_expr("field.f0", c.f0, c.dim);
  if (attractor::FieldAst::parse(c.f0, c.dim).uses_time())
    throw ConfigError("field.f0", "the unperturbed field must not reference t");
  c.fn = get<std::string>(j, "field.fn", c.f0);
  check_expr("field.fn", c.fn, c.dim, {"eps"});

  const auto lo = get<std::vector<double>>(j, "grid.lo");
  const auto hi = get<std::vector<double>>(j, "grid.hi");
  const auto res = get<std::vector<int>>(j, "grid.res");
  if (static_cast<int>(lo.size()) != c.dim) throw ConfigError("grid.lo", "needs field.dim entries");
  if (static_cast<int>(hi.size()) != c.dim) throw ConfigError("grid.hi", "needs field.dim entries");
  if (static_cast<int>(res.size()) != c.dim) throw ConfigError("grid.res", "needs field.dim entries");
  c.lo = Eigen::Map<const Eigen::VectorXd>(lo.data(), c.dim);
  c.hi = Eigen::Map<const Eigen::VectorXd>(hi.data(), c.dim);
  c.res = Eigen::Map<const Eigen::VectorXi>(res.data(), c.dim);
  for (int i = 0; i < c.dim; ++i) {
    if (!(hi[i] > lo[i])) throw ConfigError("grid.hi", "must exceed grid.lo in every axis");
    if (res[i] < 1) throw ConfigError("grid.res", "must be positive");
  }

  c.flow.step = get<double>(j, "flow.step", 0.01);
  c.flow.blowup_bound = get<double>(j, "flow.blowup_bound", 1e6);
  if (!(c.flow.step > 0)) throw ConfigError("flow.step", "must be positive");
  if (!(c.flow.blowup_bound > std::max(c.lo.cwiseAbs().maxCoeff(), c.hi.cwiseAbs().maxCoeff())))
    throw ConfigError("flow.blowup_bound", "grid must lie within the blow-up bound");

  auto& b = c.block;
  if (const json* nt = find(j, "block.ntilde"); nt && nt->is_array()) {
    b.ntilde = "boxes";
    try {
      b.boxes = nt->get<std::vector<std::vector<int>>>();
    } catch (const json::exception&) {
      throw ConfigError("block.ntilde", "box list must be an array of integer multi-indices");
    }
    for (const auto& k : b.boxes) {
      if (static_cast<int>(k.size()) != c.dim) throw ConfigError("block.ntilde", "multi-index of wrong length");
      for (int i = 0; i < c.dim; ++i)
        if (k[i] < 0 || k[i] >= res[i]) throw ConfigError("block.ntilde", "multi-index outside the grid");
    }
  } else {
    b.ntilde = get<std::string>(j, "block.ntilde", "full");
    if (b.ntilde != "full") {
      try {
        (void)parse_predicate(b.ntilde, c.dim);
      } catch (const attractor::ParseError& e) {
        throw ConfigError("block.ntilde", e.what());
      }
    }
  }
  b.mode = get<std::string>(j, "block.mode", "sublevel");
  if (b.mode != "sublevel" && b.mode != "adopt") throw ConfigError("block.mode", "expected sublevel or adopt");
  b.epsilon = get<double>(j, "block.epsilon", 0.25);
  if (b.mode == "sublevel" && !(b.epsilon > 0 && b.epsilon < 0.5))
    throw ConfigError("block.epsilon", "must lie in (0, 1/2)");
  b.alpha_scale = get<double>(j, "block.alpha_scale", 1.0);
  if (!(b.alpha_scale > 0)) throw ConfigError("block.alpha_scale", "must be positive");
  b.horizon_cap = get<double>(j, "block.horizon_cap", 100.0);
  b.tau = get<double>(j, "block.tau", 1.0);
  b.max_iters = get<int>(j, "block.max_iters", 200);
  b.image_samples = get<int>(j, "block.image_samples", 3);

  c.T = rounded_horizon(get<double>(j, "horizons.T", 1.0), c.flow, "horizons.T", c.warnings);
  const auto tl = get<std::vector<double>>(j, "horizons.T_list", std::vector<double>{});
  for (std::size_t i = 0; i < tl.size(); ++i)
    c.T_list.push_back(rounded_horizon(tl[i], c.flow, "horizons.T_list[" + std::to_string(i) + "]", c.warnings));
  if (c.T_list.empty()) c.T_list.push_back(c.T);

  auto& p = c.perturbation;
  p.eps_values = get<std::vector<double>>(j, "perturbation.eps_values", std::vector<double>{});
  p.period = get<double>(j, "perturbation.period", 2.0 * M_PI);
  p.shifts = get<std::vector<double>>(j, "perturbation.shifts", std::vector<double>{});
  p.shift_t_max = get<double>(j, "perturbation.shift_t_max", 10.0);
  p.depth = get<double>(j, "perturbation.depth", 20.0);
  p.slice_times = get<int>(j, "perturbation.slice_times", 16);
  p.base_times = get<int>(j, "perturbation.base_times", 8);
  p.max_points = get<int>(j, "perturbation.max_points", 64);
  if (p.slice_times < 1) throw ConfigError("perturbation.slice_times", "must be positive");
  if (!(p.depth > 0)) throw ConfigError("perturbation.depth", "must be positive");
  for (std::size_t i = 0; i < p.eps_values.size(); ++i)
    if (!(p.eps_values[i] >= 0)) throw ConfigError("perturbation.eps_values", "must be nonnegative");
  if (!p.eps_values.empty()) {
    try {
      (void)attractor::PerturbationFamily::parse(c.f0, c.fn, c.dim, p.eps_values, p.period);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("field.fn", e.what());
    }
  }

  if (find(j, "rds")) {
    auto& r = c.rds;
    r.enabled = get<bool>(j, "rds.enabled", true);
    const std::string kind = get<std::string>(j, "rds.kind", "piecewise_constant");
    if (kind == "piecewise_constant") r.kind = attractor::NoiseKind::PiecewiseConstant;
    else if (kind == "smoothed") r.kind = attractor::NoiseKind::Smoothed;
    else throw ConfigError("rds.kind", "expected piecewise_constant or smoothed");
    r.rho = get<double>(j, "rds.rho");
    if (!(r.rho >= 0)) throw ConfigError("rds.rho", "must be nonnegative");
    r.mesh = get<double>(j, "rds.mesh", 0.05);
    if (!(r.mesh > 0) || !attractor::is_mesh_multiple(r.mesh, c.flow))
      throw ConfigError("rds.mesh", "must be a positive multiple of flow.step");
    r.m = get<int>(j, "rds.m", 1);
    if (r.m < 1) throw ConfigError("rds.m", "must be positive");
    std::string def;
    for (int i = 1; i <= c.dim; ++i) def += (i > 1 ? "; " : "") + std::string(i <= r.m ? "u" + std::to_string(i) : "0");
    r.coupling = get<std::string>(j, "rds.coupling", def);
    std::vector<std::string> us;
    for (int i = 1; i <= r.m; ++i) us.push_back("u" + std::to_string(i));
    check_expr("rds.coupling", r.coupling, c.dim, us);
    try {
      (void)attractor::NoiseSpec::make(r.kind, r.rho, r.mesh, r.m, r.coupling, c.dim);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("rds.coupling", e.what());
    }
    r.n_paths = get<int>(j, "rds.n_paths", 10);
    if (r.n_paths < 1) throw ConfigError("rds.n_paths", "must be positive");
    r.seed0 = get<std::uint64_t>(j, "rds.seed0", 1);
    r.T = rounded_horizon(get<double>(j, "rds.T", 5.0), c.flow, "rds.T", c.warnings);
    r.depth_spacing = get<double>(j, "rds.depth_spacing", 2.0);
    if (!(r.depth_spacing > 0)) throw ConfigError("rds.depth_spacing", "must be positive");
  }

  c.out_dir = get<std::string>(j, "output.directory", "out/" + c.name);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

void override_horizon(ExperimentConfig& cfg, double T) {
  cfg.T = rounded_horizon(T, cfg.flow, "--T", cfg.warnings);
  cfg.T_list = {cfg.T};
}

attractor::FieldAst parse_predicate(const std::string& src, int dim) {
  std::string padded = src;
  for (int i = 1; i < dim; ++i) padded += "; 0";
  return attractor::FieldAst::parse(padded, dim);
}

std::string content_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace forge
