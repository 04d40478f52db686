#include "proxprior/runs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace proxprior {

namespace fs = std::filesystem;

namespace {

class OutputDir {
 public:
  explicit OutputDir(const fs::path& dir) : dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw InvalidInput("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  template <typename WriteFn>
  void write(const std::string& name, WriteFn&& fn) {
    const fs::path path = dir_ / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path.string());
    fn(out);
    if (!out) throw InvalidInput("write failed: " + path.string());
    files_.push_back(path);
  }

  std::vector<fs::path> files() const { return files_; }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  return in;
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), Index(v.size())); }

AffineConstraint plane_of(const std::vector<double>& a, double b) {
  if (a.empty()) throw ConfigError("config: plane coefficients are empty");
  return AffineConstraint::hyperplane(to_vector(a), b);
}

Matrix gaussian_rows(const Vector& mean, double sd, Index n, Rng& rng) {
  Matrix Y(n, mean.size());
  for (Index i = 0; i < n; ++i) Y.row(i) = (mean + sd * standard_normal(mean.size(), rng)).transpose();
  return Y;
}

void write_chain_files(OutputDir& dir, const std::vector<Chain>& chains, const HMCConfig& cfg) {
  for (std::size_t k = 0; k < chains.size(); ++k) {
    const std::string stem = "chain_" + std::to_string(k + 1);
    dir.write(stem + ".csv", [&](std::ostream& o) { write_chain_csv(o, chains[k]); });
    HMCConfig c = cfg;
    c.seed = chains[k].seed;
    dir.write(stem + ".meta", [&](std::ostream& o) { write_chain_metadata(o, chains[k], c); });
  }
}

std::vector<TraceContraction> contraction_of(const std::vector<Chain>& chains, std::uint64_t seed) {
  std::vector<TraceContraction> out;
  for (std::size_t k = 0; k < chains.size(); ++k)
    out.push_back(covariance_contraction(chains[k], 200, stream_seed(seed, streams::bootstrap) + k));
  return out;
}

Chain pooled(const std::vector<Chain>& chains) {
  Chain all = chains.front();
  for (std::size_t k = 1; k < chains.size(); ++k) {
    const Chain& c = chains[k];
    all.beta_draws.insert(all.beta_draws.end(), c.beta_draws.begin(), c.beta_draws.end());
    all.theta_draws.insert(all.theta_draws.end(), c.theta_draws.begin(), c.theta_draws.end());
    all.log_posterior.insert(all.log_posterior.end(), c.log_posterior.begin(), c.log_posterior.end());
  }
  return all;
}

// Fills the run statistics of a chain read from CSV from its .meta sidecar.
void read_metadata(const fs::path& path, Chain& chain) {
  std::ifstream in(path);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "accept_rate") chain.accept_rate = std::stod(value);
      if (key == "n_divergent") chain.n_divergent = std::stoi(value);
      if (key == "n_iterations") chain.n_iterations = std::stoi(value);
      if (key == "step_size") chain.step_size = std::stod(value);
      if (key == "seed") chain.seed = std::stoull(value);
      if (key == "lambda") {
        std::istringstream values(value);
        chain.lambda_used.clear();
        for (double l; values >> l;) chain.lambda_used.push_back(l);
      }
    } catch (const std::exception&) {
      throw InvalidInput(path.string() + ": bad value for " + key);
    }
  }
}

}  // namespace

Matrix read_matrix(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::vector<double> row;
    std::string field;
    while (fields >> field) {
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != field.size())
        throw InvalidInput("line " + std::to_string(line_no) + ": not a number: '" + field + "'");
      row.push_back(value);
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw InvalidInput("line " + std::to_string(line_no) + ": expected " + std::to_string(rows.front().size()) +
                         " columns, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidInput("matrix file has no data rows");
  Matrix m(Index(rows.size()), Index(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[std::size_t(i)][std::size_t(j)];
  return m;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  out << std::setprecision(17);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "\t" : "") << m(i, j);
    out << '\n';
  }
}

void write_diagnostics(std::ostream& out, const Diagnostics& d) {
  out << std::setprecision(17);
  out << "n_draws=" << d.n_draws << '\n';
  out << "accept_rate=" << d.accept_rate << '\n';
  out << "n_divergent=" << d.n_divergent << '\n';
  out << "min_ess=" << d.min_ess << '\n';
  out << "max_rhat=" << d.max_rhat << '\n';
  for (std::size_t j = 0; j < d.ess.size(); ++j) out << "ess_beta_" << j + 1 << '=' << d.ess[j] << '\n';
  for (std::size_t j = 0; j < d.rhat.size(); ++j) out << "rhat_beta_" << j + 1 << '=' << d.rhat[j] << '\n';
}

void write_contraction(std::ostream& out, const std::vector<TraceContraction>& c) {
  out << "chain\ttrace_theta\ttrace_beta\tse\tholds\n" << std::setprecision(17);
  for (std::size_t k = 0; k < c.size(); ++k)
    out << k + 1 << '\t' << c[k].trace_theta << '\t' << c[k].trace_beta << '\t' << c[k].se << '\t'
        << (c[k].holds ? "true" : "false") << '\n';
}

// ------------------------------------------------------------------ calibrate

ProxOperator calibration_family(const CalibrateSettings& s) {
  const Index rows = s.rows > 0 ? s.rows : s.dim;
  const Index cols = s.cols > 0 ? s.cols : 1;
  const std::string& f = s.family;
  if (f == "ridge" || f == "quadratic") return ProxOperator::ridge(s.dim, 1.0);
  if (f == "soft_threshold") return ProxOperator::soft_threshold(s.dim, 1.0);
  if (f == "group_row") return ProxOperator::group_row(rows, cols, 1.0);
  if (f == "nuclear") return ProxOperator::nuclear(rows, cols, 1.0);
  if (f == "set_expansion") return ProxOperator::set_expansion(ConvexSet::affine(plane_of(s.plane_a, s.plane_b)), 1.0);
  if (f == "fused_l1") return ProxOperator::fused_l1(first_difference_matrix(s.dim), 1.0);
  if (f == "flow") return ProxOperator::flow(s.dim, 1.0, s.flow_ratio);
  if (f == "affine_projection" || f == "identity")
    throw ConfigError("calibrate: the " + f +
                      " prox does not depend on lambda, so there is no deformation curve to compute; "
                      "use it with a fixed prox instead");
  throw ConfigError("calibrate: unknown family '" + f + "'");
}

CalibrateResult run_calibrate(const RunConfig& config, const fs::path& out) {
  config.validate();
  const CalibrateSettings& s = config.calibrate;
  const ProxOperator family = calibration_family(s);
  const PriorSampler sampler = isotropic_normal_sampler(family.dim(), s.prior_sd);
  const std::uint64_t curve_seed = stream_seed(config.seed, streams::calibration);

  CalibrateResult result;
  try {
    const std::vector<double> grid =
        s.grid.empty() ? default_lambda_grid(family, sampler, std::min<Index>(s.n_mc, 2000), curve_seed,
                                             std::size_t(s.grid_count), s.grid_min)
                       : s.grid;
    result.curve = build_curve(family, sampler, grid, s.n_mc, curve_seed, config.thread_count());
  } catch (const DegenerateOperator& e) {
    throw ConfigError(std::string("calibrate: ") + e.what() +
                      "; this family cannot be calibrated through its deformation, fix lambda instead");
  }

  Rng rng(stream_seed(config.seed, streams::lambda_draw));
  result.lambda_draws.reserve(std::size_t(s.density_draws));
  for (Index k = 0; k < s.density_draws; ++k)
    result.lambda_draws.push_back(sample_lambda(result.curve, s.a_omega, s.b_omega, rng));

  const double hi = quantile(result.lambda_draws, s.density_quantile);
  const double width = (hi > 0.0 ? hi : 1.0) / double(s.density_bins);
  std::vector<std::size_t> counts(std::size_t(s.density_bins), 0);
  for (double l : result.lambda_draws) {
    const auto b = static_cast<std::size_t>(std::floor(l / width));
    if (b < counts.size()) ++counts[b];
  }

  OutputDir dir(out);
  dir.write("curve.tsv", [&](std::ostream& o) { write_curve(o, result.curve); });
  dir.write("lambda_density.tsv", [&](std::ostream& o) {
    // Density of λ per unit length; mass above the last bin is left out.
    o << "lambda_lo\tlambda_hi\tdensity\n" << std::setprecision(17);
    for (std::size_t b = 0; b < counts.size(); ++b)
      o << width * double(b) << '\t' << width * double(b + 1) << '\t'
        << double(counts[b]) / (double(result.lambda_draws.size()) * width) << '\n';
  });
  dir.write("config.json", [&](std::ostream& o) { o << dump_config(config); });
  result.files = dir.files();
  return result;
}

// --------------------------------------------------------------------- sample

SampleResult run_sample(const RunConfig& config, const fs::path& out) {
  config.validate();
  const SampleSettings& s = config.sample;
  Rng data_rng(stream_seed(config.seed, streams::synthetic_data));
  Matrix data;
  if (!s.data_path.empty()) {
    auto in = open_input(s.data_path);
    data = read_matrix(in);
  } else if (s.model == "sparse_regression") {
    if (Index(s.truth.size()) != s.p) throw ConfigError("config: sample.truth must have sample.p entries");
    Matrix X(s.n, s.p);
    for (Index j = 0; j < s.p; ++j) X.col(j) = standard_normal(s.n, data_rng);
    data.resize(s.n, s.p + 1);
    data.leftCols(s.p) = X;
    data.col(s.p) = X * to_vector(s.truth) + s.noise_sd * standard_normal(s.n, data_rng);
  } else {
    data = gaussian_rows(to_vector(s.truth), s.noise_sd, s.n, data_rng);
  }

  SampleResult result;
  if (s.model == "sparse_regression") {
    if (data.cols() < 2) throw InvalidInput("sparse regression data needs predictor columns and a final y column");
    result.model = make_sparse_regression_model(data.leftCols(data.cols() - 1), data.col(data.cols() - 1), s.sigma,
                                                s.lambda);
  } else if (s.model == "gaussian_mean") {
    result.model = make_gaussian_mean_model(data, s.sigma, ConvexSet::affine(plane_of(s.plane_a, s.plane_b)), s.lambda,
                                            s.prior_sd);
  } else {
    result.model = make_affine_mean_model(data, plane_of(s.plane_a, s.plane_b), s.sigma, s.prior_sd);
  }

  LambdaPolicy policy = LambdaPolicy::keep();
  if (s.model != "affine_mean") {
    if (s.lambda_policy == "curve") {
      auto in = open_input(s.curve_path);
      policy = LambdaPolicy::from_curve(read_curve(in), s.a_omega, s.b_omega);
    } else {
      policy = LambdaPolicy::fixed(s.lambda);
    }
  }

  const HMCConfig hmc = config.sampler.to_hmc(0);
  result.chains = run_chains(result.model, hmc, policy, config.chains, config.seed, config.thread_count());
  result.summary = summarize(result.chains, s.credible_level);
  result.diagnostics = diagnostics(result.chains);
  result.contraction = contraction_of(result.chains, config.seed);

  OutputDir dir(out);
  dir.write("data.tsv", [&](std::ostream& o) { write_matrix(o, data); });
  write_chain_files(dir, result.chains, hmc);
  dir.write("summary.tsv", [&](std::ostream& o) { write_summary(o, result.summary); });
  dir.write("diagnostics.txt", [&](std::ostream& o) { write_diagnostics(o, result.diagnostics); });
  dir.write("contraction.tsv", [&](std::ostream& o) { write_contraction(o, result.contraction); });
  dir.write("config.json", [&](std::ostream& o) { o << dump_config(config); });
  result.files = dir.files();
  return result;
}

// ----------------------------------------------------------------------- test

TestResult run_test(const RunConfig& config, const fs::path& out) {
  config.validate();
  const TestSettings& s = config.test;
  Matrix Y;
  if (!s.data_path.empty()) {
    auto in = open_input(s.data_path);
    Y = read_matrix(in);
  } else {
    Rng rng(stream_seed(config.seed, streams::synthetic_data));
    Y = gaussian_rows(to_vector(s.theta0), s.noise_sd, s.n, rng);
  }
  if (Y.cols() != Index(s.plane_a.size()))
    throw ShapeError("test: data have " + std::to_string(Y.cols()) + " columns but the plane has " +
                     std::to_string(s.plane_a.size()) + " coefficients");

  const ConvexSet C = ConvexSet::affine(plane_of(s.plane_a, s.plane_b));
  const BetaPrior prior = BetaPrior::isotropic(Y.cols(), s.prior_sd);

  TestResult result;
  result.lambda = s.balanced_lambda
                      ? balanced_lambda(C, prior, s.balance_mc, stream_seed(config.seed, streams::balanced_lambda))
                      : *s.lambda;
  const Model model = make_gaussian_mean_model(Y, s.sigma, C, result.lambda, s.prior_sd);
  const HMCConfig hmc = config.sampler.to_hmc(0);
  const std::vector<Chain> chains =
      run_chains(model, hmc, LambdaPolicy::keep(), config.chains, config.seed, config.thread_count());
  result.chain = pooled(chains);
  result.hypothesis = bayes_factor_set_expansion(result.chain, C, result.lambda, prior, s.prior_mc,
                                                 stream_seed(config.seed, streams::bayes_factor_prior));
  std::size_t on_plane = 0;
  for (const Vector& t : result.chain.theta_draws) on_plane += C.distance(t) <= 1e-8 * std::max(1.0, t.norm());
  result.theta_in_C = double(on_plane) / double(result.chain.size());
  result.contraction = contraction_of(chains, config.seed).front();

  OutputDir dir(out);
  dir.write("data.tsv", [&](std::ostream& o) { write_matrix(o, Y); });
  write_chain_files(dir, chains, hmc);
  dir.write("hypothesis.txt", [&](std::ostream& o) {
    write_hypothesis(o, result.hypothesis);
    o << std::setprecision(17) << "theta_in_C=" << result.theta_in_C << '\n';
  });
  dir.write("scatter.tsv", [&](std::ostream& o) {
    const std::size_t n = result.chain.size();
    const std::size_t k = std::min<std::size_t>(std::size_t(s.scatter_draws), n);
    o << std::setprecision(17);
    for (Index j = 0; j < Y.cols(); ++j) o << "theta_" << j + 1 << '\t';
    o << "in_C\n";
    for (std::size_t i = 0; i < k; ++i) {
      const Vector& t = result.chain.theta_draws[i * n / k];
      for (Index j = 0; j < t.size(); ++j) o << t[j] << '\t';
      o << (C.distance(t) <= 1e-8 * std::max(1.0, t.norm()) ? 1 : 0) << '\n';
    }
  });
  dir.write("contraction.tsv", [&](std::ostream& o) { write_contraction(o, {result.contraction}); });
  dir.write("config.json", [&](std::ostream& o) { o << dump_config(config); });
  result.files = dir.files();
  return result;
}

// ----------------------------------------------------------------------- flow

FlowResult run_flow(const RunConfig& config, const fs::path& out) {
  config.validate();
  const FlowSettings& s = config.flow;
  FlowResult result;
  std::vector<Matrix> Y;
  if (!s.data_path.empty()) {
    auto in = open_input(s.data_path);
    FlowTable table = read_flow_table(in, s.n_nodes, s.n_times);
    Y = std::move(table.Y);
    result.warnings = std::move(table.warnings);
  } else {
    Rng rng(stream_seed(config.seed, streams::synthetic_data));
    Y = make_synthetic_flows(s.synthetic_nodes, s.synthetic_times, s.synthetic_factors, s.synthetic_noise_sd, rng,
                             s.synthetic_cycle_len, s.synthetic_flow_scale)
            .Y;
  }

  ADMMConfig admm;
  admm.gamma = s.admm_gamma;
  admm.tol_primal = s.admm_tol;
  admm.tol_dual = s.admm_tol;
  admm.max_iters = s.admm_max_iters;
  FlowModelOptions options;
  options.beta_sd = s.beta_sd;
  options.rho_sd = s.rho_sd;
  options.sigma2_shape = s.sigma2_shape;
  options.sigma2_scale = s.sigma2_scale;
  options.nonnegative_loadings = s.nonnegative_loadings;
  result.model = make_flow_factor_model(Y, s.d, s.lambda1, s.lambda2, s.lambda_load, admm, options);
  const FlowLayout& layout = *result.model.flow;

  const HMCConfig hmc = config.sampler.to_hmc(0);
  result.chains =
      run_chains(result.model, hmc, LambdaPolicy::keep(), config.chains, config.seed, config.thread_count());
  result.counts = factor_count_posterior(result.chains, layout, s.count_threshold);
  std::size_t idx = result.counts.mode_draw;
  const Chain* owner = &result.chains.front();
  for (const Chain& c : result.chains) {
    owner = &c;
    if (idx < c.size()) break;
    idx -= c.size();
  }
  result.mode_state = decode_flow_theta(layout, owner->theta_draws[idx]);
  result.contraction = contraction_of(result.chains, config.seed);

  OutputDir dir(out);
  if (s.data_path.empty()) dir.write("data.tsv", [&](std::ostream& o) { write_flow_table(o, Y); });
  write_chain_files(dir, result.chains, hmc);
  dir.write("factor_counts.tsv", [&](std::ostream& o) { write_factor_counts(o, result.counts); });
  for (Index l = 0; l < layout.n_factors; ++l) {
    const FlowNetwork& F = result.mode_state.factors[std::size_t(l)];
    if (result.mode_state.gamma.row(l).norm() <= s.count_threshold || F.lower.norm() <= s.count_threshold) continue;
    dir.write("factor_" + std::to_string(l + 1) + ".tsv",
              [&](std::ostream& o) { write_flow_table(o, {F.to_matrix()}); });
  }
  dir.write("loadings.tsv", [&](std::ostream& o) {
    o << "t";
    for (Index l = 0; l < layout.n_factors; ++l) o << "\tfactor_" << l + 1;
    o << '\n' << std::setprecision(17);
    for (Index t = 0; t < layout.n_times; ++t) {
      o << t + 1;
      for (Index l = 0; l < layout.n_factors; ++l) o << '\t' << result.mode_state.gamma(l, t);
      o << '\n';
    }
  });
  dir.write("contraction.tsv", [&](std::ostream& o) { write_contraction(o, result.contraction); });
  dir.write("config.json", [&](std::ostream& o) { o << dump_config(config); });
  result.files = dir.files();
  return result;
}

// ------------------------------------------------------------------ summarize

SummarizeResult run_summarize(const RunConfig& config, const fs::path& out) {
  config.validate();
  std::vector<fs::path> paths;
  for (const std::string& p : config.summarize.chain_paths) paths.emplace_back(p);
  if (paths.empty() && fs::is_directory(out)) {
    for (const auto& entry : fs::directory_iterator(out)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("chain_", 0) == 0 && entry.path().extension() == ".csv") paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
  }
  if (paths.empty()) throw ConfigError("summarize: no chain files given and no chain_*.csv in " + out.string());

  SummarizeResult result;
  for (const fs::path& p : paths) {
    auto in = open_input(p.string());
    result.chains.push_back(read_chain_csv(in));
    read_metadata(fs::path(p).replace_extension(".meta"), result.chains.back());
  }
  result.summary = summarize(result.chains, config.summarize.credible_level);
  result.diagnostics = diagnostics(result.chains);

  OutputDir dir(out);
  dir.write("summary.tsv", [&](std::ostream& o) { write_summary(o, result.summary); });
  dir.write("diagnostics.txt", [&](std::ostream& o) { write_diagnostics(o, result.diagnostics); });
  result.files = dir.files();
  return result;
}

}  // namespace proxprior
