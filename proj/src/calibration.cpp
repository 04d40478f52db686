#include "proxprior/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "proxprior/parallel.hpp"

namespace proxprior {

namespace {

void check_grid(const std::vector<double>& grid) {
  if (grid.size() < 2) throw InvalidInput("lambda grid needs at least 2 points");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] > 0.0) || !std::isfinite(grid[k])) throw InvalidInput("lambda grid points must be positive");
    if (k > 0 && !(grid[k] > grid[k - 1])) throw InvalidInput("lambda grid must be strictly increasing");
  }
}

std::vector<Vector> draw_prior(const PriorSampler& sampler, Index n_mc, std::uint64_t seed) {
  if (n_mc < 1) throw InvalidInput("n_mc must be positive");
  Rng rng(seed);
  std::vector<Vector> draws;
  draws.reserve(static_cast<std::size_t>(n_mc));
  for (Index k = 0; k < n_mc; ++k) draws.push_back(sampler(rng));
  return draws;
}

double mean_limit_distance(const ProxOperator& op, const std::vector<Vector>& draws) {
  double total = 0.0;
  for (const Vector& b : draws) total += (b - op.limit_point(b)).norm();
  const double mean = total / double(draws.size());
  if (mean < 1e-12)
    throw DegenerateOperator("deformation denominator vanishes: prox " + to_string(op.kind()) +
                             " does not move with lambda under this prior");
  return mean;
}

double mean_displacement(const ProxOperator& op, const std::vector<Vector>& draws) {
  if (op.lambda() == 0.0 && op.kind() != ProxKind::affine_projection) return 0.0;
  double total = 0.0;
  for (const Vector& b : draws) total += (b - op(b)).norm();
  return total / double(draws.size());
}

}  // namespace

PriorSampler isotropic_normal_sampler(Index p, double sd) {
  return [p, sd](Rng& rng) { return Vector(sd * standard_normal(p, rng)); };
}

void DeformationCurve::validate() const {
  check_grid(lambdas);
  if (omegas.size() != lambdas.size()) throw ShapeError("DeformationCurve: lambdas and omegas differ in length");
  for (std::size_t k = 0; k < omegas.size(); ++k) {
    if (!(omegas[k] >= 0.0 && omegas[k] <= 1.0)) throw InvalidInput("DeformationCurve: omega outside [0, 1]");
    if (k > 0 && omegas[k] < omegas[k - 1]) throw InvalidInput("DeformationCurve: omegas must be non-decreasing");
  }
}

double estimate_deformation(const ProxOperator& op, const std::vector<Vector>& draws) {
  if (draws.empty()) throw InvalidInput("estimate_deformation: no draws");
  const double denominator = mean_limit_distance(op, draws);
  return std::clamp(mean_displacement(op, draws) / denominator, 0.0, 1.0);
}

double estimate_deformation(const ProxOperator& op, const PriorSampler& sampler, Index n_mc, std::uint64_t seed) {
  return estimate_deformation(op, draw_prior(sampler, n_mc, seed));
}

std::vector<double> isotonic_regression(const std::vector<double>& values) {
  // Blocks of (sum, count); merge while the last two are out of order.
  std::vector<double> sums;
  std::vector<std::size_t> counts;
  for (double v : values) {
    sums.push_back(v);
    counts.push_back(1);
    while (sums.size() > 1) {
      const std::size_t last = sums.size() - 1;
      if (sums[last - 1] / double(counts[last - 1]) <= sums[last] / double(counts[last])) break;
      sums[last - 1] += sums[last];
      counts[last - 1] += counts[last];
      sums.pop_back();
      counts.pop_back();
    }
  }
  std::vector<double> fitted;
  fitted.reserve(values.size());
  for (std::size_t b = 0; b < sums.size(); ++b)
    fitted.insert(fitted.end(), counts[b], sums[b] / double(counts[b]));
  return fitted;
}

DeformationCurve build_curve(const ProxOperator& family, const PriorSampler& sampler,
                             const std::vector<double>& lambda_grid, Index n_mc, std::uint64_t seed,
                             unsigned threads) {
  check_grid(lambda_grid);
  const std::vector<Vector> draws = draw_prior(sampler, n_mc, seed);
  const double denominator = mean_limit_distance(family, draws);

  DeformationCurve curve;
  curve.lambdas = lambda_grid;
  curve.n_mc = n_mc;
  curve.seed = seed;
  curve.raw_omegas.assign(lambda_grid.size(), 0.0);
  parallel_for(lambda_grid.size(), threads, [&](std::size_t k) {
    const ProxOperator op = family.with_lambda(lambda_grid[k]);
    curve.raw_omegas[k] = std::clamp(mean_displacement(op, draws) / denominator, 0.0, 1.0);
  });
  curve.omegas = isotonic_regression(curve.raw_omegas);
  return curve;
}

std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi > lo) || count < 2) throw InvalidInput("log_spaced: need 0 < lo < hi and count >= 2");
  std::vector<double> grid(count);
  const double step = std::log(hi / lo) / double(count - 1);
  for (std::size_t k = 0; k < count; ++k) grid[k] = lo * std::exp(step * double(k));
  grid.back() = hi;
  return grid;
}

std::vector<double> default_lambda_grid(const ProxOperator& family, const PriorSampler& sampler, Index n_mc,
                                        std::uint64_t seed, std::size_t count, double lo, double omega_cap) {
  const std::vector<Vector> draws = draw_prior(sampler, n_mc, seed);
  double cap = 1.0;
  for (int doubling = 0; doubling < 60; ++doubling) {
    if (cap > lo && estimate_deformation(family.with_lambda(cap), draws) >= omega_cap) break;
    cap *= 2.0;
  }
  return log_spaced(lo, std::max(cap, 2.0 * lo), count);
}

double lambda_from_omega(const DeformationCurve& curve, double omega) {
  const auto& ls = curve.lambdas;
  const auto& ws = curve.omegas;
  if (ls.empty() || ws.size() != ls.size()) throw ShapeError("lambda_from_omega: malformed curve");
  if (omega <= ws.front()) return ls.front();
  if (omega > ws.back()) return ls.back();
  // First knot reaching ω; on a flat run this is its left end.
  const auto it = std::lower_bound(ws.begin(), ws.end(), omega);
  const auto k = static_cast<std::size_t>(it - ws.begin());
  if (ws[k] == omega) return ls[k];
  const double t = (omega - ws[k - 1]) / (ws[k] - ws[k - 1]);
  return ls[k - 1] + t * (ls[k] - ls[k - 1]);
}

double sample_lambda(const DeformationCurve& curve, double a_omega, double b_omega, Rng& rng) {
  if (!(a_omega > 0.0) || !(b_omega > 0.0)) throw InvalidInput("sample_lambda: Beta shapes must be positive");
  return lambda_from_omega(curve, beta_draw(a_omega, b_omega, rng));
}

void write_curve(std::ostream& out, const DeformationCurve& curve) {
  out << "lambda\tomega\n" << std::setprecision(17);
  for (std::size_t k = 0; k < curve.size(); ++k) out << curve.lambdas[k] << '\t' << curve.omegas[k] << '\n';
}

DeformationCurve read_curve(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("lambda", 0) != 0)
    throw InvalidInput("curve file: missing 'lambda\\tomega' header");
  DeformationCurve curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    double l = 0.0, w = 0.0;
    if (!(row >> l >> w)) throw InvalidInput("curve file: malformed row '" + line + "'");
    curve.lambdas.push_back(l);
    curve.omegas.push_back(w);
  }
  curve.raw_omegas = curve.omegas;
  curve.validate();
  return curve;
}

}  // namespace proxprior
