#pragma once

// Run configuration for the command-line entry points.
//
// Files are JSON objects whose first key is "schema": "proxprior-config/1".
// Every field has a default, so "{}" plus the schema line is a valid file.
// Unknown keys are rejected so that typos do not silently fall back to
// defaults. Doubles are written with the shortest representation that reads
// back to the same value.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "proxprior/sampler.hpp"

namespace proxprior {

inline constexpr const char* kConfigSchema = "proxprior-config/1";

struct SamplerSettings {
  std::string algorithm = "nuts";
  double step_size = 0.1;
  int n_leapfrog = 10;
  int n_samples = 5000;
  int n_burnin = 2000;
  int thin = 1;
  double target_accept = 0.8;
  bool adapt_step_size = true;
  bool adapt_mass = false;
  double spsa_epsilon = 1e-7;
  int spsa_m = 20;
  std::string spsa_design = "independent";

  /// HMCConfig with the given chain seed.
  HMCConfig to_hmc(std::uint64_t seed) const;
  bool operator==(const SamplerSettings&) const = default;
};

struct CalibrateSettings {
  std::string family = "soft_threshold";  // ridge (or quadratic), soft_threshold, group_row, nuclear,
                                          // set_expansion, fused_l1, flow
  Index dim = 1;         // vector length; nodes for flow
  Index rows = 0;        // matrix kinds: rows×cols (0 means dim×1)
  Index cols = 0;
  double prior_sd = 1.0;
  Index n_mc = 10000;
  std::vector<double> grid;  // empty: log-spaced default grid
  int grid_count = 50;
  double grid_min = 1e-3;
  double a_omega = 1.0;
  double b_omega = 1.0;
  Index density_draws = 100000;
  int density_bins = 100;
  double density_quantile = 0.99;  // histogram range upper end, as a quantile of the λ draws
  double flow_ratio = 1.0;         // flow family: λ₂ = flow_ratio · λ₁
  std::vector<double> plane_a = {1.0, 1.0, 1.0};  // set_expansion family: aᵀθ = b
  double plane_b = 1.0;

  bool operator==(const CalibrateSettings&) const = default;
};

struct SampleSettings {
  std::string model = "sparse_regression";  // sparse_regression, gaussian_mean, affine_mean
  std::string data_path;                    // whitespace/comma matrix; sparse_regression: last column is y
  Index n = 50;                             // synthetic data when data_path is empty
  Index p = 5;
  std::vector<double> truth = {2.0, 0.0, 0.0, -1.5, 0.0};
  double noise_sd = 0.5;
  double sigma = 0.5;
  double prior_sd = 1.0;
  std::string lambda_policy = "fixed";  // fixed or curve
  double lambda = 1.0;
  std::string curve_path;
  double a_omega = 1.0;
  double b_omega = 1.0;
  std::vector<double> plane_a = {1.0, 1.0, 1.0};  // gaussian_mean / affine_mean: aᵀθ = b
  double plane_b = 1.0;
  double credible_level = 0.95;

  bool operator==(const SampleSettings&) const = default;
};

struct TestSettings {
  std::vector<double> plane_a = {1.0, 1.0, 1.0};
  double plane_b = 1.0;
  std::optional<double> lambda = 2.0;  // null asks for balanced_lambda
  bool balanced_lambda = false;
  Index balance_mc = 100000;
  double sigma = 3.0;
  double prior_sd = 3.0;
  Index prior_mc = 100000;
  std::string data_path;
  std::vector<double> theta0 = {-0.5, 0.3, 1.2};
  Index n = 20;
  double noise_sd = 3.0;
  int scatter_draws = 100;

  bool operator==(const TestSettings&) const = default;
};

struct FlowSettings {
  std::string data_path;  // (t, i, j, flow) rows; empty: synthetic
  Index n_nodes = 0;      // 0: inferred from the file
  Index n_times = 0;
  Index synthetic_nodes = 10;
  Index synthetic_times = 8;
  Index synthetic_factors = 2;
  double synthetic_noise_sd = 0.1;
  Index synthetic_cycle_len = 4;
  double synthetic_flow_scale = 1.0;
  Index d = 6;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda_load = 3.0;
  double beta_sd = 1.0;
  double rho_sd = 1.0;
  double sigma2_shape = 2.0;
  double sigma2_scale = 0.01;
  bool nonnegative_loadings = false;
  double count_threshold = 1e-6;
  double admm_gamma = 1.0;
  double admm_tol = 1e-8;
  int admm_max_iters = 10000;

  bool operator==(const FlowSettings&) const = default;
};

struct SummarizeSettings {
  std::vector<std::string> chain_paths;  // empty: every chain_*.csv in the output directory
  double credible_level = 0.95;

  bool operator==(const SummarizeSettings&) const = default;
};

struct RunConfig {
  std::string schema = kConfigSchema;
  std::uint64_t seed = 0;
  int chains = 1;
  int threads = 0;  // 0: PROXPRIOR_NUM_THREADS, else 1
  SamplerSettings sampler;
  CalibrateSettings calibrate;
  SampleSettings sample;
  TestSettings test;
  FlowSettings flow;
  SummarizeSettings summarize;

  unsigned thread_count() const;
  /// Throws ConfigError on out-of-range values.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Throws ConfigError on malformed JSON, a wrong schema, unknown keys or
/// wrongly typed values.
RunConfig parse_config(const std::string& text);
std::string dump_config(const RunConfig& config);

RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace proxprior
