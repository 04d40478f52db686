#pragma once

// End-to-end runs behind the command-line subcommands. Each run reads only
// its config, derives every random stream from config.seed, and writes its
// files under `out`; equal configs give byte-identical files.
//
// Stream seeds are stream_seed(config.seed, id) with the ids of
// proxprior::streams: calibration draws 1, λ draws 2, synthetic data 3,
// Bayes-factor prior Monte Carlo 4, bootstrap 5, balanced-λ search 6, and
// chain k uses 1000 + k. SPSA perturbations are seeded from each chain's
// generator once per iteration.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "proxprior/config.hpp"
#include "proxprior/inference.hpp"

namespace proxprior {

/// Numeric matrix from whitespace- or comma-separated rows; '#' starts a
/// comment. Throws InvalidInput on ragged rows or non-numeric fields.
Matrix read_matrix(std::istream& in);
void write_matrix(std::ostream& out, const Matrix& m);

/// Operator family of the calibrate section at scale 1.
ProxOperator calibration_family(const CalibrateSettings& s);

struct CalibrateResult {
  DeformationCurve curve;
  std::vector<double> lambda_draws;  // λ under ω ~ Beta(a, b)
  std::vector<std::filesystem::path> files;
};

/// Writes curve.tsv (λ, ω) and lambda_density.tsv (histogram of λ under
/// the ω prior). A λ-invariant family raises ConfigError with guidance.
CalibrateResult run_calibrate(const RunConfig& config, const std::filesystem::path& out);

struct SampleResult {
  Model model;
  std::vector<Chain> chains;
  PosteriorSummary summary;
  Diagnostics diagnostics;
  std::vector<TraceContraction> contraction;  // per chain
  std::vector<std::filesystem::path> files;
};

/// chain_<k>.csv and .meta per chain, summary.tsv, diagnostics.txt,
/// contraction.tsv, data.tsv.
SampleResult run_sample(const RunConfig& config, const std::filesystem::path& out);

struct TestResult {
  HypothesisResult hypothesis;
  Chain chain;
  double lambda = 0.0;
  double theta_in_C = 0.0;  // fraction of θ draws on the plane (within 1e-8)
  TraceContraction contraction;
  std::vector<std::filesystem::path> files;
};

/// Builds the set-expansion model for the hyperplane test, samples, and
/// writes hypothesis.txt, scatter.tsv (evenly spaced θ draws with their
/// membership), chain_<k>.csv and .meta, contraction.tsv and data.tsv.
TestResult run_test(const RunConfig& config, const std::filesystem::path& out);

struct FlowResult {
  Model model;
  std::vector<Chain> chains;
  FactorCountPosterior counts;
  FlowFactorState mode_state;  // the modal-count draw with the highest log posterior
  std::vector<std::string> warnings;
  std::vector<TraceContraction> contraction;
  std::vector<std::filesystem::path> files;
};

/// Fits the flow-factor model and writes chain files, factor_counts.tsv,
/// factor_<l>.tsv (posterior-mode factors as one-period flow tables, active
/// factors only), loadings.tsv (γ over t for every factor at the mode draw),
/// contraction.tsv and, for synthetic runs, data.tsv.
FlowResult run_flow(const RunConfig& config, const std::filesystem::path& out);

struct SummarizeResult {
  std::vector<Chain> chains;
  PosteriorSummary summary;
  Diagnostics diagnostics;
  std::vector<std::filesystem::path> files;
};

/// Reads chain CSVs and writes summary.tsv and diagnostics.txt.
SummarizeResult run_summarize(const RunConfig& config, const std::filesystem::path& out);

void write_diagnostics(std::ostream& out, const Diagnostics& d);
void write_contraction(std::ostream& out, const std::vector<TraceContraction>& c);

}  // namespace proxprior
