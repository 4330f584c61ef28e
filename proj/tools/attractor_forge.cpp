// Config-driven runner: gset | block | verdict | curve | rds | all.
#include "forge_config.hpp"

#include "attractor/conley.hpp"
#include "attractor/perturb.hpp"
#include "attractor/rds.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace attractor;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr const char* kSchema = "attractor-forge/report/v1";

/// A stage could not complete; `code` is the process exit status.
struct StageFailure {
  std::string stage;
  std::string message;
  int code;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

json num_or_null(std::optional<double> v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

json num_or_null(double v) { return num_or_null(std::optional<double>(v)); }

struct Run {
  forge::ExperimentConfig cfg;
  fs::path out;
  bool recompute = false;
  std::string command;
  GridPtr grid;
  std::optional<StableBlock> block;
  std::optional<double> delta;
  json report;

  void warn(const std::string& stage, const std::string& msg) {
    report["warnings"].push_back(stage + ": " + msg);
    std::cerr << "warning [" << stage << "]: " << msg << "\n";
  }

  FieldAst f0() const { return FieldAst::parse(cfg.f0, cfg.dim); }

  BoxSet ntilde() const {
    const auto& b = cfg.block;
    if (b.ntilde == "full") return BoxSet::full(grid);
    if (b.ntilde == "boxes") {
      BoxSet s(grid);
      for (const auto& k : b.boxes)
        s.insert(grid->linear_index(Eigen::Map<const Eigen::VectorXi>(k.data(), cfg.dim)));
      return s;
    }
    const FieldAst p = forge::parse_predicate(b.ntilde, cfg.dim);
    return cover(grid, [&](const Eigen::VectorXd& x) { return p.eval(0.0, x)(0) >= 0.0; }, 3);
  }

  void write_set(const std::string& name, const BoxSet& s) const {
    std::ofstream os(out / name);
    write_csv(os, s);
  }

  json block_key() const {
    const auto& b = cfg.block;
    return json{{"version", kVersion},
                {"f0", cfg.f0},
                {"dim", cfg.dim},
                {"grid", cfg.raw.at("grid")},
                {"flow", {{"step", cfg.flow.step}, {"blowup_bound", cfg.flow.blowup_bound}}},
                {"block",
                 {{"ntilde", b.ntilde}, {"boxes", b.boxes}, {"mode", b.mode}, {"epsilon", b.epsilon},
                  {"alpha_scale", b.alpha_scale}, {"horizon_cap", b.horizon_cap}, {"tau", b.tau},
                  {"max_iters", b.max_iters}, {"image_samples", b.image_samples}}},
                {"T", cfg.T}};
  }
};

json grid_json(const Grid& g) {
  std::vector<double> lo(g.lo().data(), g.lo().data() + g.dim());
  std::vector<double> hi(g.hi().data(), g.hi().data() + g.dim());
  std::vector<int> res(g.res().data(), g.res().data() + g.dim());
  return {{"lo", lo}, {"hi", hi}, {"res", res}, {"diagonal", g.diagonal()}};
}

void stage_gset(Run& r) {
  const FieldAst f0 = r.f0();
  const BoxSet n = r.ntilde();
  json sets = json::array();
  for (double T : r.cfg.T_list) {
    const IsolationSets iso = compute_isolation(n, f0, false, T, r.cfg.flow);
    const std::string gname = "gset_T" + fmt(T) + ".csv", xname = "gamma_T" + fmt(T) + ".csv";
    r.write_set(gname, iso.gt);
    r.write_set(xname, iso.gamma);
    if (iso.gt.touches_domain_edge()) r.warn("gset", "G^T at T=" + fmt(T) + " touches the domain edge");
    sets.push_back({{"T", T},
                    {"gt_count", iso.gt.count()},
                    {"gamma_count", iso.gamma.count()},
                    {"gamma_empty", iso.gamma.empty()},
                    {"gt_in_interior", iso.gt.subset_of(interior(n))},
                    {"gt_csv", gname},
                    {"gamma_csv", xname}});
  }
  r.report["gset"] = {{"ntilde_count", n.count()}, {"sets", sets}};
}

json validation_json(const BlockValidation& v) {
  return {{"attractor_nonempty", v.attractor_nonempty},
          {"attractor_in_interior", v.attractor_in_interior},
          {"forward_invariant", v.forward_invariant},
          {"inside_neighborhood", v.inside_neighborhood},
          {"touches_domain_edge", v.touches_domain_edge},
          {"ok", v.ok()}};
}

json block_descriptor(const Run& r, const std::string& key, bool cached) {
  const StableBlock& b = *r.block;
  const Grid& g = *r.grid;
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(g.dim(), INFINITY), hi = -lo;
  b.block.for_each([&](std::size_t i) {
    lo = lo.cwiseMin(g.box_lo(i));
    hi = hi.cwiseMax(g.box_lo(i) + g.width());
  });
  return {{"key", key},
          {"cached", cached},
          {"mode", r.cfg.block.mode},
          {"level", b.level},
          {"count", b.block.count()},
          {"attractor_count", b.attractor.count()},
          {"bounding_box", {{"lo", std::vector<double>(lo.data(), lo.data() + lo.size())},
                            {"hi", std::vector<double>(hi.data(), hi.data() + hi.size())}}},
          {"T", r.cfg.T},
          {"delta", num_or_null(r.delta)},
          {"validation", validation_json(b.validation)},
          {"block_csv", "block.csv"},
          {"attractor_csv", "attractor.csv"}};
}

void compute_block(Run& r, const std::string& key) {
  const FieldAst f0 = r.f0();
  BlockParams params;
  params.g = {r.cfg.block.alpha_scale, r.cfg.block.horizon_cap};
  params.tau = r.cfg.block.tau;
  params.max_iters = r.cfg.block.max_iters;
  params.image_samples = r.cfg.block.image_samples;
  try {
    r.block = r.cfg.block.mode == "adopt" ? adopt_block(r.ntilde(), f0, params, r.cfg.flow)
                                          : build_stable_block(r.ntilde(), f0, r.cfg.block.epsilon, params, r.cfg.flow);
  } catch (const ConleyError& e) {
    throw StageFailure{"block", std::string(e.what()) + " (config key 'block')", 2};
  }
  try {
    r.delta = compute_delta(*r.block, f0, r.cfg.T, r.cfg.flow);
  } catch (const ConleyError& e) {
    r.delta.reset();
    r.warn("block", std::string("delta unavailable at T=") + fmt(r.cfg.T) + ": " + e.what());
  }
  if (r.block->validation.touches_domain_edge) r.warn("block", "block touches the domain edge");

  r.write_set("block.csv", r.block->block);
  r.write_set("attractor.csv", r.block->attractor);
  json cache = block_descriptor(r, key, false);
  json gv = json::array();
  for (const auto& [i, g] : r.block->g_values) gv.push_back({i, num_or_null(g)});
  cache["g_values"] = gv;
  std::ofstream(r.out / "block.json") << cache.dump(1) << "\n";
  r.report["block"] = block_descriptor(r, key, false);
}

bool load_block(Run& r, const std::string& key) {
  std::ifstream in(r.out / "block.json");
  if (!in) return false;
  json c;
  try {
    c = json::parse(in);
  } catch (const json::exception&) {
    return false;
  }
  if (c.value("key", "") != key) {
    std::cerr << "block cache stale (have " << c.value("key", "?") << ", need " << key << ")\n";
    return false;
  }
  std::ifstream bin(r.out / "block.csv"), ain(r.out / "attractor.csv");
  if (!bin || !ain) return false;
  StableBlock b{read_csv(bin, r.grid), c.at("level").get<double>(), {}, read_csv(ain, r.grid), {}};
  for (const auto& e : c.at("g_values"))
    b.g_values.emplace_back(e.at(0).get<std::size_t>(), e.at(1).is_null() ? INFINITY : e.at(1).get<double>());
  const json& v = c.at("validation");
  b.validation = {v.at("attractor_nonempty").get<bool>(), v.at("attractor_in_interior").get<bool>(),
                  v.at("forward_invariant").get<bool>(), v.at("inside_neighborhood").get<bool>(),
                  v.at("touches_domain_edge").get<bool>()};
  r.block = std::move(b);
  if (!c.at("delta").is_null()) r.delta = c.at("delta").get<double>();
  std::cerr << "block cache hit (key " << key << ")\n";
  r.report["block"] = block_descriptor(r, key, true);
  return true;
}

void stage_block(Run& r, bool force) {
  const std::string key = forge::content_hash(r.block_key());
  if (!force && load_block(r, key)) return;
  if (!force && !r.recompute)
    throw StageFailure{r.command, "missing or stale upstream artifact 'block' in " + r.out.string() +
                                      " (run `block` first or pass --recompute)", 2};
  compute_block(r, key);
}

PerturbationFamily family(const Run& r, const char* stage) {
  if (r.cfg.perturbation.eps_values.empty())
    throw StageFailure{stage, "config key 'perturbation.eps_values': required by this stage", 1};
  return PerturbationFamily::parse(r.cfg.f0, r.cfg.fn, r.cfg.dim, r.cfg.perturbation.eps_values,
                                   r.cfg.perturbation.period);
}

VerdictOptions verdict_options(const Run& r) {
  VerdictOptions o;
  o.deviation.base_times = r.cfg.perturbation.base_times;
  o.deviation.max_points = r.cfg.perturbation.max_points;
  o.slice_times = r.cfg.perturbation.slice_times;
  o.depth = r.cfg.perturbation.depth;
  o.pullback.tau = r.cfg.block.tau;
  o.pullback.image_samples = r.cfg.block.image_samples;
  o.delta = r.delta;
  return o;
}

void stage_verdict(Run& r) {
  const PerturbationFamily fam = family(r, "verdict");
  if (!r.delta)
    throw StageFailure{"verdict", "delta is unavailable for this block (config key 'horizons.T')", 2};
  const VerdictOptions opts = verdict_options(r);
  json verdicts = json::array();
  bool all_hold = true;
  for (double eps : fam.eps_values()) {
    const TheoremFiniteVerdict v = check_theorem_finite(fam, eps, *r.block, r.cfg.T, r.cfg.flow, opts);
    const std::string csv = "slices_eps" + fmt(eps) + ".csv";
    {
      std::ofstream os(r.out / csv);
      write_slices_csv(os, v.slices);
    }
    json degenerate = json::array();
    for (std::size_t k = 0; k < v.slices.times.size(); ++k)
      if (v.slices.degenerate[k]) degenerate.push_back(v.slices.times[k]);
    if (!degenerate.empty())
      r.warn("verdict", "eps=" + fmt(eps) + ": " + std::to_string(degenerate.size()) + " degenerate slices");
    all_hold = all_hold && v.implication_holds;
    verdicts.push_back({{"eps", eps},
                        {"T", v.T},
                        {"delta", v.delta},
                        {"field_gap", field_sup_gap(fam, eps, r.block->block, 64)},
                        {"deviation", num_or_null(v.deviation)},
                        {"hypothesis_met", v.hypothesis_met},
                        {"gamma_empty", v.gamma_empty},
                        {"slices_nonempty", v.slices_nonempty},
                        {"margin_eps", v.margin_eps},
                        {"implication_holds", v.implication_holds},
                        {"degenerate_times", degenerate},
                        {"slices_csv", csv}});
  }
  json ssing = json::array();
  if (!r.cfg.perturbation.shifts.empty())
    for (double eps : fam.eps_values()) {
      const SsingReport s = ssing_diagnostic(fam, eps, *r.block, r.cfg.flow, r.cfg.perturbation.shifts,
                                             r.cfg.perturbation.shift_t_max);
      json per = json::array();
      for (double d : s.per_shift) per.push_back(num_or_null(d));
      ssing.push_back({{"eps", eps}, {"shifts", s.shifts}, {"per_shift", per},
                       {"max", num_or_null(s.max)}, {"spread", num_or_null(s.spread)}});
    }
  r.report["verdict"] = {{"entries", verdicts}, {"ssing", ssing}, {"all_implications_hold", all_hold}};
  if (!all_hold)
    throw StageFailure{"verdict", "hypothesis met but a conclusion failed (config key 'perturbation.eps_values')", 2};
}

void stage_curve(Run& r) {
  const PerturbationFamily fam = family(r, "curve");
  const auto curve = semicontinuity_curve(fam, *r.block, r.cfg.T, r.cfg.flow, verdict_options(r));
  std::ofstream os(r.out / "curve.csv");
  os << "eps,semidist\n";
  json pts = json::array();
  for (const auto& p : curve) {
    os << fmt(p.eps) << "," << (p.semidist ? fmt(*p.semidist) : "") << "\n";
    pts.push_back({{"eps", p.eps}, {"semidist", num_or_null(p.semidist)}});
    if (!p.semidist) r.warn("curve", "eps=" + fmt(p.eps) + ": degenerate slices, point omitted");
  }
  const double slack = r.grid->diagonal();
  r.report["curve"] = {{"points", pts}, {"nonincreasing", curve_nonincreasing(curve, slack)},
                       {"slack", slack}, {"csv", "curve.csv"}};
}

void stage_rds(Run& r) {
  const auto& c = r.cfg.rds;
  if (!c.enabled) throw StageFailure{"rds", "config key 'rds': section missing or disabled", 1};
  const NoiseSpec spec = NoiseSpec::make(c.kind, c.rho, c.mesh, c.m, c.coupling, r.cfg.dim);
  const PersistenceReport rep =
      persistence_stats(r.f0(), spec, *r.block, c.T, r.cfg.flow, c.n_paths, c.seed0, {c.depth_spacing, 3});
  std::ofstream os(r.out / "rds_paths.csv");
  os << "seed,nonempty,contained,semidist\n";
  for (const auto& p : rep.per_path)
    os << p.seed << "," << p.nonempty << "," << p.contained << "," << (p.semidist ? fmt(*p.semidist) : "") << "\n";
  r.report["rds"] = {{"rho", c.rho},
                     {"mesh", c.mesh},
                     {"T", c.T},
                     {"n_paths", c.n_paths},
                     {"seed0", c.seed0},
                     {"fraction_nonempty", rep.fraction_nonempty},
                     {"fraction_contained", rep.fraction_contained},
                     {"max_semidist", num_or_null(rep.max_semidist)},
                     {"csv", "rds_paths.csv"}};
}

template <typename Fn>
void timed(Run& r, const char* name, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  r.report["timing"][name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_report(const Run& r) {
  std::ofstream(r.out / "report.json") << r.report.dump(2) << "\n";
}

struct Options {
  std::string config;
  std::string out;
  unsigned jobs = 0;
  std::optional<std::uint64_t> seed;
  std::optional<double> T;
  bool recompute = false;
};

int execute(const std::string& command, const Options& o) {
  Run r;
  r.command = command;
  try {
    r.cfg = forge::load_config(o.config);
    if (o.T) forge::override_horizon(r.cfg, *o.T);
    if (o.seed) r.cfg.rds.seed0 = *o.seed;
    r.grid = make_grid(r.cfg.lo, r.cfg.hi, r.cfg.res);
  } catch (const forge::ConfigError& e) {
    std::cerr << "error [config]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error [config]: config key 'grid': " << e.what() << "\n";
    return 1;
  }
  r.out = o.out.empty() ? fs::path(r.cfg.out_dir) : fs::path(o.out);
  r.recompute = o.recompute;
  fs::create_directories(r.out);

  unsigned jobs = o.jobs;
  if (jobs == 0)
    if (const char* env = std::getenv("ATTRACTOR_FORGE_JOBS")) jobs = static_cast<unsigned>(std::strtoul(env, nullptr, 10));
  set_max_jobs(jobs);

  r.report = {{"schema", kSchema},
              {"version", kVersion},
              {"command", command},
              {"config", r.cfg.raw},
              {"grid", grid_json(*r.grid)},
              {"warnings", json::array()},
              {"timing", json::object()}};
  for (const auto& w : r.cfg.warnings) r.warn("config", w);

  const char* stage = command.c_str();
  int code = 0;
  try {
    if (command == "gset" || command == "all") {
      stage = "gset";
      timed(r, "gset", [&] { stage_gset(r); });
    }
    if (command != "gset") {
      stage = "block";
      timed(r, "block", [&] { stage_block(r, command == "block" || command == "all"); });
    }
    if (command == "verdict" || command == "all") {
      stage = "verdict";
      timed(r, "verdict", [&] { stage_verdict(r); });
    }
    if (command == "curve" || command == "all") {
      stage = "curve";
      timed(r, "curve", [&] { stage_curve(r); });
    }
    if (command == "rds" || (command == "all" && r.cfg.rds.enabled)) {
      stage = "rds";
      timed(r, "rds", [&] { stage_rds(r); });
    }
  } catch (const StageFailure& f) {
    std::cerr << "error [" << f.stage << "]: " << f.message << "\n";
    code = f.code;
  } catch (const ParseError& e) {
    std::cerr << "error [" << stage << "]: expression: " << e.what() << "\n";
    code = 1;
  } catch (const std::exception& e) {
    std::cerr << "error [" << stage << "]: " << e.what() << "\n";
    code = 2;
  }
  r.report["status"] = code == 0 ? "ok" : "failed";
  write_report(r);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attractor persistence experiments on box grids"};
  app.require_subcommand(1);
  Options o;
  std::string command;
  const char* descriptions[][2] = {
      {"gset", "G^T and Gamma^T of the neighbourhood for each horizon"},
      {"block", "stable block, its attractor and the margin delta"},
      {"verdict", "finite-horizon persistence verdict per eps"},
      {"curve", "semicontinuity curve over eps"},
      {"rds", "bounded-noise persistence statistics"},
      {"all", "every stage in order"},
  };
  for (auto& d : descriptions) {
    CLI::App* sub = app.add_subcommand(d[0], d[1]);
    sub->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory (overrides output.directory)");
    sub->add_option("--jobs", o.jobs, "worker cap (default: ATTRACTOR_FORGE_JOBS or all cores)");
    sub->add_option("--seed", o.seed, "overrides rds.seed0");
    sub->add_option("--T", o.T, "overrides horizons.T and horizons.T_list");
    sub->add_flag("--recompute", o.recompute, "recompute missing or stale upstream artifacts");
    sub->callback([&command, sub] { command = sub->get_name(); });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  return execute(command, o);
}
