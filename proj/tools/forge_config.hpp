// Experiment configuration for the command-line runner.
#pragma once

#include "attractor/dynamics.hpp"
#include "attractor/rds.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace forge {

/// Bad or inconsistent configuration; `key` is the dotted config path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error("config key '" + key + "': " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct BlockConfig {
  std::string ntilde = "full";                 // "full", a predicate p(x) >= 0, or "boxes"
  std::vector<std::vector<int>> boxes;         // multi-indices when ntilde == "boxes"
  std::string mode = "sublevel";               // "sublevel" (g- <= epsilon) or "adopt"
  double epsilon = 0.25;
  double alpha_scale = 1.0;
  double horizon_cap = 100.0;
  double tau = 1.0;
  int max_iters = 200;
  int image_samples = 3;
};

struct PerturbationConfig {
  std::vector<double> eps_values;
  double period = 0.0;
  std::vector<double> shifts;
  double shift_t_max = 10.0;
  double depth = 20.0;
  int slice_times = 16;
  int base_times = 8;
  int max_points = 64;
};

struct RdsConfig {
  bool enabled = false;
  attractor::NoiseKind kind = attractor::NoiseKind::PiecewiseConstant;
  double rho = 0.0;
  double mesh = 0.05;
  int m = 1;
  std::string coupling;
  int n_paths = 10;
  std::uint64_t seed0 = 1;
  double T = 5.0;
  double depth_spacing = 2.0;
};

struct ExperimentConfig {
  nlohmann::json raw;
  std::string name;
  int dim = 1;
  std::string f0, fn;
  Eigen::VectorXd lo, hi;
  Eigen::VectorXi res;
  attractor::FlowConfig flow{0.01, 1e6};
  BlockConfig block;
  double T = 1.0;
  std::vector<double> T_list;
  PerturbationConfig perturbation;
  RdsConfig rds;
  std::string out_dir = "out";
  std::vector<std::string> warnings;
};

/// Parses and validates; horizons not on the step mesh are rounded and a
/// warning is recorded.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const nlohmann::json& j);

/// Applies a --T override (also replaces T_list) with the same rounding rule.
void override_horizon(ExperimentConfig& cfg, double T);

/// Parses a scalar predicate over x1..xd. FieldAst wants d components, so
/// the text is padded with zero components; error positions stay valid.
attractor::FieldAst parse_predicate(const std::string& src, int dim);

/// FNV-1a over a canonical JSON dump, as 16 hex digits.
std::string content_hash(const nlohmann::json& j);

}  // namespace forge
