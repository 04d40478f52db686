#include "proxprior/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "json.hpp"
#include "proxprior/parallel.hpp"

namespace proxprior {

namespace {

using Json = nlohmann::ordered_json;

struct Writer {
  Json& obj;
  template <typename T>
  void operator()(const char* key, const T& value) {
    if constexpr (std::is_same_v<T, std::optional<double>>) {
      obj[key] = value ? Json(*value) : Json(nullptr);
    } else {
      obj[key] = value;
    }
  }
};

struct Reader {
  const Json& obj;
  std::string section;
  std::set<std::string> seen;

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("config: " + (section.empty() ? key : section + "." + key) + " " + what);
  }

  template <typename T>
  void operator()(const char* key, T& value) {
    seen.insert(key);
    auto it = obj.find(key);
    if (it == obj.end()) return;
    const Json& v = *it;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(key, "must be true or false");
      value = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(key, "must be a string");
      value = v.get<std::string>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) fail(key, "must be a number");
      value = v.get<double>();
    } else if constexpr (std::is_same_v<T, std::optional<double>>) {
      if (v.is_null()) {
        value.reset();
      } else {
        if (!v.is_number()) fail(key, "must be a number or null");
        value = v.get<double>();
      }
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(key, "must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned()) fail(key, "must be non-negative");
      }
      value = v.get<T>();
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      if (!v.is_array()) fail(key, "must be an array of numbers");
      value.clear();
      for (const Json& e : v) {
        if (!e.is_number()) fail(key, "must be an array of numbers");
        value.push_back(e.get<double>());
      }
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!v.is_array()) fail(key, "must be an array of strings");
      value.clear();
      for (const Json& e : v) {
        if (!e.is_string()) fail(key, "must be an array of strings");
        value.push_back(e.get<std::string>());
      }
    } else {
      static_assert(sizeof(T) == 0, "unsupported config field type");
    }
  }

  void finish() const {
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!seen.count(it.key())) fail(it.key(), "is not a known key");
  }
};

template <typename V>
void fields(V& v, std::conditional_t<std::is_same_v<V, Writer>, const SamplerSettings, SamplerSettings>& s) {
  v("algorithm", s.algorithm);
  v("step_size", s.step_size);
  v("n_leapfrog", s.n_leapfrog);
  v("n_samples", s.n_samples);
  v("n_burnin", s.n_burnin);
  v("thin", s.thin);
  v("target_accept", s.target_accept);
  v("adapt_step_size", s.adapt_step_size);
  v("adapt_mass", s.adapt_mass);
  v("spsa_epsilon", s.spsa_epsilon);
  v("spsa_m", s.spsa_m);
  v("spsa_design", s.spsa_design);
}

template <typename V>
void fields(V& v, std::conditional_t<std::is_same_v<V, Writer>, const CalibrateSettings, CalibrateSettings>& s) {
  v("family", s.family);
  v("dim", s.dim);
  v("rows", s.rows);
  v("cols", s.cols);
  v("prior_sd", s.prior_sd);
  v("n_mc", s.n_mc);
  v("grid", s.grid);
  v("grid_count", s.grid_count);
  v("grid_min", s.grid_min);
  v("a_omega", s.a_omega);
  v("b_omega", s.b_omega);
  v("density_draws", s.density_draws);
  v("density_bins", s.density_bins);
  v("density_quantile", s.density_quantile);
  v("flow_ratio", s.flow_ratio);
  v("plane_a", s.plane_a);
  v("plane_b", s.plane_b);
}

template <typename V>
void fields(V& v, std::conditional_t<std::is_same_v<V, Writer>, const SampleSettings, SampleSettings>& s) {
  v("model", s.model);
  v("data_path", s.data_path);
  v("n", s.n);
  v("p", s.p);
  v("truth", s.truth);
  v("noise_sd", s.noise_sd);
  v("sigma", s.sigma);
  v("prior_sd", s.prior_sd);
  v("lambda_policy", s.lambda_policy);
  v("lambda", s.lambda);
  v("curve_path", s.curve_path);
  v("a_omega", s.a_omega);
  v("b_omega", s.b_omega);
  v("plane_a", s.plane_a);
  v("plane_b", s.plane_b);
  v("credible_level", s.credible_level);
}

template <typename V>
void fields(V& v, std::conditional_t<std::is_same_v<V, Writer>, const TestSettings, TestSettings>& s) {
  v("plane_a", s.plane_a);
  v("plane_b", s.plane_b);
  v("lambda", s.lambda);
  v("balanced_lambda", s.balanced_lambda);
  v("balance_mc", s.balance_mc);
  v("sigma", s.sigma);
  v("prior_sd", s.prior_sd);
  v("prior_mc", s.prior_mc);
  v("data_path", s.data_path);
  v("theta0", s.theta0);
  v("n", s.n);
  v("noise_sd", s.noise_sd);
  v("scatter_draws", s.scatter_draws);
}

template <typename V>
void fields(V& v, std::conditional_t<std::is_same_v<V, Writer>, const FlowSettings, FlowSettings>& s) {
  v("data_path", s.data_path);
  v("n_nodes", s.n_nodes);
  v("n_times", s.n_times);
  v("synthetic_nodes", s.synthetic_nodes);
  v("synthetic_times", s.synthetic_times);
  v("synthetic_factors", s.synthetic_factors);
  v("synthetic_noise_sd", s.synthetic_noise_sd);
  v("synthetic_cycle_len", s.synthetic_cycle_len);
  v("synthetic_flow_scale", s.synthetic_flow_scale);
  v("d", s.d);
  v("lambda1", s.lambda1);
  v("lambda2", s.lambda2);
  v("lambda_load", s.lambda_load);
  v("beta_sd", s.beta_sd);
  v("rho_sd", s.rho_sd);
  v("sigma2_shape", s.sigma2_shape);
  v("sigma2_scale", s.sigma2_scale);
  v("nonnegative_loadings", s.nonnegative_loadings);
  v("count_threshold", s.count_threshold);
  v("admm_gamma", s.admm_gamma);
  v("admm_tol", s.admm_tol);
  v("admm_max_iters", s.admm_max_iters);
}

template <typename V>
void fields(V& v, std::conditional_t<std::is_same_v<V, Writer>, const SummarizeSettings, SummarizeSettings>& s) {
  v("chain_paths", s.chain_paths);
  v("credible_level", s.credible_level);
}

template <typename S>
Json write_section(const S& s) {
  Json obj = Json::object();
  Writer w{obj};
  fields(w, s);
  return obj;
}

template <typename S>
void read_section(const Json& root, const char* name, S& s) {
  auto it = root.find(name);
  if (it == root.end()) return;
  if (!it->is_object()) throw ConfigError(std::string("config: section ") + name + " must be an object");
  Reader r{*it, name, {}};
  fields(r, s);
  r.finish();
}

void check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config: " + what);
}

}  // namespace

HMCConfig SamplerSettings::to_hmc(std::uint64_t seed) const {
  HMCConfig cfg;
  cfg.algorithm = sampler_algorithm_from_string(algorithm);
  cfg.step_size = step_size;
  cfg.n_leapfrog = n_leapfrog;
  cfg.n_samples = n_samples;
  cfg.n_burnin = n_burnin;
  cfg.thin = thin;
  cfg.target_accept = target_accept;
  cfg.adapt_step_size = adapt_step_size;
  cfg.adapt_mass = adapt_mass;
  cfg.seed = seed;
  cfg.spsa.epsilon = spsa_epsilon;
  cfg.spsa.m = spsa_m;
  if (spsa_design == "independent") {
    cfg.spsa.design = SPSADesign::independent;
  } else if (spsa_design == "orthogonal") {
    cfg.spsa.design = SPSADesign::orthogonal;
  } else {
    throw ConfigError("config: sampler.spsa_design must be independent or orthogonal");
  }
  return cfg;
}

unsigned RunConfig::thread_count() const {
  return threads > 0 ? static_cast<unsigned>(threads) : default_thread_count();
}

void RunConfig::validate() const {
  check(schema == kConfigSchema, "schema must be \"" + std::string(kConfigSchema) + "\"");
  check(chains >= 1, "chains must be at least 1");
  check(threads >= 0, "threads must be non-negative");
  try {
    sampler.to_hmc(seed).validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("config: sampler: ") + e.what());
  }
  check(calibrate.dim >= 1, "calibrate.dim must be positive");
  check(calibrate.rows >= 0 && calibrate.cols >= 0, "calibrate.rows and calibrate.cols must be non-negative");
  check(calibrate.prior_sd > 0.0, "calibrate.prior_sd must be positive");
  check(calibrate.n_mc >= 1, "calibrate.n_mc must be positive");
  check(calibrate.grid_count >= 2, "calibrate.grid_count must be at least 2");
  check(calibrate.grid_min > 0.0, "calibrate.grid_min must be positive");
  check(calibrate.a_omega > 0.0 && calibrate.b_omega > 0.0, "calibrate omega Beta parameters must be positive");
  check(calibrate.density_draws >= 1 && calibrate.density_bins >= 1, "calibrate density sizes must be positive");
  check(calibrate.density_quantile > 0.0 && calibrate.density_quantile <= 1.0,
        "calibrate.density_quantile must be in (0, 1]");
  check(calibrate.flow_ratio >= 0.0, "calibrate.flow_ratio must be non-negative");
  check(sample.model == "sparse_regression" || sample.model == "gaussian_mean" || sample.model == "affine_mean",
        "sample.model must be sparse_regression, gaussian_mean or affine_mean");
  check(sample.lambda_policy == "fixed" || sample.lambda_policy == "curve",
        "sample.lambda_policy must be fixed or curve");
  check(sample.lambda_policy != "curve" || !sample.curve_path.empty(),
        "sample.lambda_policy = curve needs sample.curve_path");
  check(sample.sigma > 0.0 && sample.prior_sd > 0.0, "sample.sigma and sample.prior_sd must be positive");
  check(sample.noise_sd >= 0.0, "sample.noise_sd must be non-negative");
  check(sample.lambda >= 0.0, "sample.lambda must be non-negative");
  check(sample.credible_level > 0.0 && sample.credible_level < 1.0, "sample.credible_level must be in (0, 1)");
  check(test.lambda.has_value() || test.balanced_lambda,
        "test needs either test.lambda or test.balanced_lambda = true");
  check(!test.lambda || *test.lambda >= 0.0, "test.lambda must be non-negative");
  check(test.sigma > 0.0 && test.prior_sd > 0.0, "test.sigma and test.prior_sd must be positive");
  check(test.prior_mc >= 1 && test.balance_mc >= 1000, "test.prior_mc >= 1 and test.balance_mc >= 1000");
  check(test.plane_a.size() == test.theta0.size() || !test.data_path.empty(),
        "test.plane_a and test.theta0 must have the same length");
  check(test.scatter_draws >= 0, "test.scatter_draws must be non-negative");
  check(flow.d >= 1, "flow.d must be positive");
  check(flow.lambda1 >= 0.0 && flow.lambda2 >= 0.0 && flow.lambda_load >= 0.0, "flow lambdas must be non-negative");
  check(flow.admm_gamma > 0.0 && flow.admm_tol > 0.0 && flow.admm_max_iters >= 1, "flow ADMM settings");
  check(summarize.credible_level > 0.0 && summarize.credible_level < 1.0,
        "summarize.credible_level must be in (0, 1)");
}

RunConfig parse_config(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  RunConfig c;
  Reader r{root, "", {}};
  r("schema", c.schema);
  if (!root.contains("schema")) throw ConfigError("config: missing \"schema\": \"" + std::string(kConfigSchema) + "\"");
  if (c.schema != kConfigSchema)
    throw ConfigError("config: unsupported schema \"" + c.schema + "\", expected \"" + kConfigSchema + "\"");
  r("seed", c.seed);
  r("chains", c.chains);
  r("threads", c.threads);
  for (const char* s : {"sampler", "calibrate", "sample", "test", "flow", "summarize"}) r.seen.insert(s);
  r.finish();
  read_section(root, "sampler", c.sampler);
  read_section(root, "calibrate", c.calibrate);
  read_section(root, "sample", c.sample);
  read_section(root, "test", c.test);
  read_section(root, "flow", c.flow);
  read_section(root, "summarize", c.summarize);
  return c;
}

std::string dump_config(const RunConfig& c) {
  Json root = Json::object();
  root["schema"] = c.schema;
  root["seed"] = c.seed;
  root["chains"] = c.chains;
  root["threads"] = c.threads;
  root["sampler"] = write_section(c.sampler);
  root["calibrate"] = write_section(c.calibrate);
  root["sample"] = write_section(c.sample);
  root["test"] = write_section(c.test);
  root["flow"] = write_section(c.flow);
  root["summarize"] = write_section(c.summarize);
  return root.dump(2) + "\n";
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << dump_config(config);
}

}  // namespace proxprior
