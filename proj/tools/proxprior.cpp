// proxprior: calibrate, sample, test, flow and summarize runs driven by a
// JSON config. See README.md for the config schema and output files.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "proxprior/runs.hpp"

using namespace proxprior;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> chains;
  std::string out = "proxprior_out";
};

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("--config", opt.config_path, "JSON run config (defaults for every missing field)");
  cmd->add_option("--seed", opt.seed, "master seed; overrides the config");
  cmd->add_option("--chains", opt.chains, "number of chains; overrides the config")->check(CLI::PositiveNumber);
  cmd->add_option("--out", opt.out, "output directory")->capture_default_str();
}

RunConfig resolve(const Options& opt) {
  RunConfig config = opt.config_path.empty() ? RunConfig{} : load_config(opt.config_path);
  if (opt.seed) config.seed = *opt.seed;
  if (opt.chains) config.chains = *opt.chains;
  config.validate();
  return config;
}

void list_files(const std::vector<std::filesystem::path>& files) {
  for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
}

void report(const Diagnostics& d) {
  std::cout << "draws " << d.n_draws << ", accept " << d.accept_rate << ", divergent " << d.n_divergent
            << ", min ESS " << d.min_ess << ", max R-hat " << d.max_rhat << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proximal-prior Bayesian inference"};
  app.require_subcommand(0, 1);
  Options opt;
  bool print_config = false;

  auto* calibrate = app.add_subcommand("calibrate", "deformation curve and induced lambda prior");
  auto* sample = app.add_subcommand("sample", "posterior sampling for a regression or mean model");
  auto* test = app.add_subcommand("test", "set-expansion hypothesis test with a Bayes factor");
  auto* flow = app.add_subcommand("flow", "flow-network latent factor model");
  auto* summarize = app.add_subcommand("summarize", "summaries and diagnostics of chain files");
  for (auto* cmd : {calibrate, sample, test, flow, summarize}) add_common(cmd, opt);
  app.add_flag("--print-default-config", print_config, "print the default config and exit");

  CLI11_PARSE(app, argc, argv);
  if (print_config) {
    std::cout << dump_config(RunConfig{});
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 1;
  }

  try {
    const RunConfig config = resolve(opt);
    if (calibrate->parsed()) {
      const CalibrateResult r = run_calibrate(config, opt.out);
      std::cout << "curve knots " << r.curve.size() << ", lambda range [" << r.curve.lambdas.front() << ", "
                << r.curve.lambdas.back() << "]\n";
      list_files(r.files);
    } else if (sample->parsed()) {
      const SampleResult r = run_sample(config, opt.out);
      report(r.diagnostics);
      list_files(r.files);
    } else if (test->parsed()) {
      const TestResult r = run_test(config, opt.out);
      const HypothesisResult& h = r.hypothesis;
      std::cout << "lambda " << r.lambda << ", BF01 " << h.bf01;
      if (h.infinite) std::cout << " (no posterior draw outside C)";
      if (h.zero) std::cout << " (no posterior draw inside C)";
      std::cout << ", posterior in/out " << h.posterior_in << '/' << h.posterior_out << ", prior in " << h.prior_in
                << '\n';
      list_files(r.files);
    } else if (flow->parsed()) {
      const FlowResult r = run_flow(config, opt.out);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "factor-count mode " << r.counts.mode << ", probabilities";
      for (double p : r.counts.probabilities) std::cout << ' ' << p;
      std::cout << '\n';
      list_files(r.files);
    } else if (summarize->parsed()) {
      const SummarizeResult r = run_summarize(config, opt.out);
      report(r.diagnostics);
      list_files(r.files);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
