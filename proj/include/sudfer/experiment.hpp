#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "sudfer/bounds.hpp"
#include "sudfer/estimator.hpp"
#include "sudfer/gaussian.hpp"
#include "sudfer/interpolation.hpp"
#include "sudfer/smoothmax.hpp"

namespace sudfer {

inline constexpr std::string_view kVersion = "0.1.0";

enum class Experiment { Sharpness, BoundCheck, PathDiagnostics, SteinCheck };
enum class Generator { Wishart, Equicorrelated, Diagonal, Explicit };
enum class ReportFormat { Json, Csv };

inline std::string_view to_string(Experiment e) {
  switch (e) {
    case Experiment::Sharpness: return "sharpness";
    case Experiment::BoundCheck: return "bound-check";
    case Experiment::PathDiagnostics: return "path-diagnostics";
    case Experiment::SteinCheck: return "stein-check";
  }
  return "?";
}

inline std::string_view to_string(Generator g) {
  switch (g) {
    case Generator::Wishart: return "wishart";
    case Generator::Equicorrelated: return "equicorrelated";
    case Generator::Diagonal: return "diagonal";
    case Generator::Explicit: return "explicit";
  }
  return "?";
}

inline std::string_view to_string(ReportFormat f) { return f == ReportFormat::Json ? "json" : "csv"; }

inline Experiment parse_experiment(std::string_view s) {
  for (auto e : {Experiment::Sharpness, Experiment::BoundCheck, Experiment::PathDiagnostics,
                 Experiment::SteinCheck})
    if (to_string(e) == s) return e;
  throw Error(ErrorCode::ConfigError, "unknown experiment '" + std::string(s) + "'");
}

inline Generator parse_generator(std::string_view s) {
  for (auto g : {Generator::Wishart, Generator::Equicorrelated, Generator::Diagonal,
                 Generator::Explicit})
    if (to_string(g) == s) return g;
  throw Error(ErrorCode::UnknownGenerator, "unknown generator '" + std::string(s) + "'");
}

inline ReportFormat parse_format(std::string_view s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  throw Error(ErrorCode::ConfigError, "unknown report format '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Random spec families

/// (1 - rho) I + rho 1 1^T, zero mean.
inline GaussianSpec equicorrelated_spec(std::size_t n, double rho) {
  const auto size = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(size, size, rho);
  cov.diagonal().setOnes();
  return validate_spec(Eigen::VectorXd::Zero(size), std::move(cov));
}

/// Zero-mean random covariance from one of the built-in families:
///   wishart        A A^T / n, A with iid N(0,1) entries
///   equicorrelated rho ~ U[0, 1)
///   diagonal       variances ~ U[0.1, 2]
inline GaussianSpec random_spec(std::size_t n, std::uint64_t seed, Generator generator) {
  if (n < 1) throw Error(ErrorCode::DimensionMismatch, "random_spec needs n >= 1");
  const auto size = static_cast<Eigen::Index>(n);
  Engine engine(seed);
  switch (generator) {
    case Generator::Wishart: {
      Eigen::MatrixXd a(size, size);
      fill_standard_normal(a, engine);
      Eigen::MatrixXd gram = a * a.transpose() / static_cast<double>(n);
      Eigen::MatrixXd cov = (gram + gram.transpose()) / 2.0;
      return validate_spec(Eigen::VectorXd::Zero(size), std::move(cov));
    }
    case Generator::Equicorrelated: {
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      return equicorrelated_spec(n, unit(engine));
    }
    case Generator::Diagonal: {
      std::uniform_real_distribution<double> variance(0.1, 2.0);
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(size, size);
      for (Eigen::Index i = 0; i < size; ++i) cov(i, i) = variance(engine);
      return validate_spec(Eigen::VectorXd::Zero(size), std::move(cov));
    }
    case Generator::Explicit: break;
  }
  throw Error(ErrorCode::UnknownGenerator,
              "generator '" + std::string(to_string(generator)) + "' does not draw random specs");
}

// ---------------------------------------------------------------------------
// Spec <-> JSON

inline nlohmann::ordered_json spec_to_json(const GaussianSpec& spec) {
  nlohmann::ordered_json j;
  j["mean"] = std::vector<double>(spec.mean().data(), spec.mean().data() + spec.mean().size());
  auto rows = nlohmann::ordered_json::array();
  const auto& c = spec.covariance();
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(c.cols()));
    for (Eigen::Index k = 0; k < c.cols(); ++k) row[static_cast<std::size_t>(k)] = c(i, k);
    rows.push_back(row);
  }
  j["covariance"] = rows;
  return j;
}

template <class Json>
GaussianSpec spec_from_json(const Json& j) {
  try {
    if (!j.is_object() || !j.contains("mean") || !j.contains("covariance"))
      throw Error(ErrorCode::ConfigError, "spec must be an object with 'mean' and 'covariance'");
    const auto mean = j.at("mean").template get<std::vector<double>>();
    const auto rows = j.at("covariance").template get<std::vector<std::vector<double>>>();
    Eigen::VectorXd mu = Eigen::Map<const Eigen::VectorXd>(mean.data(),
                                                           static_cast<Eigen::Index>(mean.size()));
    Eigen::MatrixXd cov(static_cast<Eigen::Index>(rows.size()),
                        rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != static_cast<std::size_t>(cov.cols()))
        throw Error(ErrorCode::DimensionMismatch, "covariance rows have unequal lengths");
      for (std::size_t k = 0; k < rows[i].size(); ++k)
        cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
    return validate_spec(std::move(mu), std::move(cov));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("malformed spec: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Configuration

inline const std::vector<double>& default_grid() {
  static const std::vector<double> grid{0.1, 0.3, 0.5, 0.7, 0.9};
  return grid;
}

struct ExperimentConfig {
  Experiment experiment = Experiment::BoundCheck;
  std::vector<std::size_t> n;          // empty: per-experiment default
  std::size_t samples = 100000;
  std::uint64_t seed = 1;
  std::optional<double> beta;          // nullopt: "auto"
  std::vector<double> grid = default_grid();
  std::optional<std::size_t> trials;   // nullopt: per-experiment default
  Generator generator = Generator::Wishart;
  std::string output_path;
  ReportFormat format = ReportFormat::Json;
  std::optional<GaussianSpec> spec_x;  // used by the explicit generator
  std::optional<GaussianSpec> spec_y;
};

/// Fills per-experiment defaults and rejects inconsistent fields.
inline ExperimentConfig resolve(ExperimentConfig c) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
  const bool is_sharpness = c.experiment == Experiment::Sharpness;
  if (c.n.empty()) {
    switch (c.experiment) {
      case Experiment::Sharpness: c.n = {16, 256, 4096}; break;
      case Experiment::BoundCheck: c.n = {8}; break;
      case Experiment::PathDiagnostics: c.n = {4}; break;
      case Experiment::SteinCheck: c.n = {4}; break;
    }
    if (c.generator == Generator::Explicit && c.spec_x) c.n = {c.spec_x->dimension()};
  }
  if (!c.trials) {
    switch (c.experiment) {
      case Experiment::Sharpness: c.trials = 1; break;
      case Experiment::BoundCheck: c.trials = 100; break;
      case Experiment::PathDiagnostics: c.trials = 10; break;
      case Experiment::SteinCheck: c.trials = 20; break;
    }
  }
  if (*c.trials < 1) fail("trials must be >= 1");
  if (c.samples < 2) fail("samples must be >= 2");
  for (auto n : c.n) {
    if (n < 1) fail("every n must be >= 1");
    if (is_sharpness && n < 2) fail("sharpness needs every n >= 2");
  }
  if (is_sharpness) {
    std::sort(c.n.begin(), c.n.end());
    c.n.erase(std::unique(c.n.begin(), c.n.end()), c.n.end());
  }
  if (c.beta && (!(*c.beta > 0.0) || !std::isfinite(*c.beta))) fail("beta must be positive");
  if (c.experiment == Experiment::PathDiagnostics) {
    if (c.grid.empty()) fail("grid must be nonempty for path-diagnostics");
    for (double t : c.grid)
      if (!(t > 0.0 && t < 1.0)) fail("grid points must lie in (0, 1)");
  }
  if (c.generator == Generator::Explicit && !is_sharpness) {
    if (!c.spec_x) fail("explicit generator needs spec_x");
    const bool needs_pair = c.experiment != Experiment::SteinCheck;
    if (needs_pair && !c.spec_y) fail("explicit generator needs spec_y for this experiment");
    if (needs_pair && c.spec_x->dimension() != c.spec_y->dimension())
      fail("spec_x and spec_y differ in dimension");
    if (c.experiment == Experiment::SteinCheck &&
        c.spec_x->mean().cwiseAbs().maxCoeff() > kMeanTolerance)
      fail("stein-check needs a centered spec_x");
    c.n = {c.spec_x->dimension()};
  }
  return c;
}

inline nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["experiment"] = to_string(c.experiment);
  j["n"] = c.n;
  j["samples"] = c.samples;
  j["seed"] = c.seed;
  if (c.beta)
    j["beta"] = *c.beta;
  else
    j["beta"] = "auto";
  j["grid"] = c.grid;
  if (c.trials) j["trials"] = *c.trials;
  j["generator"] = to_string(c.generator);
  j["output"] = c.output_path;
  j["format"] = to_string(c.format);
  if (c.spec_x) j["spec_x"] = spec_to_json(*c.spec_x);
  if (c.spec_y) j["spec_y"] = spec_to_json(*c.spec_y);
  return j;
}

/// Parses a config document. Unknown keys are rejected.
template <class Json>
ExperimentConfig config_from_json(const Json& j, ExperimentConfig base = {}) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "experiment") {
        base.experiment = parse_experiment(value.template get<std::string>());
      } else if (key == "n") {
        if (value.is_array())
          base.n = value.template get<std::vector<std::size_t>>();
        else
          base.n = {value.template get<std::size_t>()};
      } else if (key == "samples") {
        base.samples = value.template get<std::size_t>();
      } else if (key == "seed") {
        base.seed = value.template get<std::uint64_t>();
      } else if (key == "beta") {
        if (value.is_string()) {
          if (value.template get<std::string>() != "auto")
            throw Error(ErrorCode::ConfigError, "beta must be a number or \"auto\"");
          base.beta.reset();
        } else {
          base.beta = value.template get<double>();
        }
      } else if (key == "grid") {
        base.grid = value.template get<std::vector<double>>();
      } else if (key == "trials") {
        base.trials = value.template get<std::size_t>();
      } else if (key == "generator") {
        base.generator = parse_generator(value.template get<std::string>());
      } else if (key == "output") {
        base.output_path = value.template get<std::string>();
      } else if (key == "format") {
        base.format = parse_format(value.template get<std::string>());
      } else if (key == "spec_x") {
        base.spec_x = spec_from_json(value);
      } else if (key == "spec_y") {
        base.spec_y = spec_from_json(value);
      } else {
        throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("malformed config: ") + e.what());
  }
  return base;
}

// ---------------------------------------------------------------------------
// Reports

using Value = std::variant<bool, std::int64_t, double, std::string>;
using Fields = std::vector<std::pair<std::string, Value>>;

struct ExperimentReport {
  nlohmann::ordered_json config;
  std::vector<Fields> records;
  Fields summary;
  std::string version{kVersion};
  double duration_seconds = 0.0;

  const Value* summary_field(std::string_view key) const {
    for (const auto& [k, v] : summary)
      if (k == key) return &v;
    return nullptr;
  }

  bool passed() const {
    const Value* v = summary_field("pass");
    return v && std::holds_alternative<bool>(*v) && std::get<bool>(*v);
  }

  friend bool operator==(const ExperimentReport&, const ExperimentReport&) = default;
};

namespace detail {

inline void put(Fields& f, std::string key, bool v) { f.emplace_back(std::move(key), v); }
inline void put(Fields& f, std::string key, double v) { f.emplace_back(std::move(key), v); }
inline void put(Fields& f, std::string key, std::string v) {
  f.emplace_back(std::move(key), std::move(v));
}
inline void put(Fields& f, std::string key, const char* v) {
  f.emplace_back(std::move(key), std::string(v));
}
template <class Int>
  requires(std::is_integral_v<Int> && !std::is_same_v<Int, bool>)
void put(Fields& f, std::string key, Int v) {
  f.emplace_back(std::move(key), static_cast<std::int64_t>(v));
}

/// Finite numbers stay numeric; +/-infinity become the strings "inf"/"-inf".
inline void put_extended(Fields& f, std::string key, double v) {
  if (std::isfinite(v))
    put(f, std::move(key), v);
  else
    put(f, std::move(key), v > 0 ? "inf" : "-inf");
}

inline void put_estimate(Fields& f, const std::string& key, const MCEstimate& e) {
  put(f, key, e.value);
  put(f, key + "_stderr", e.std_error);
}

inline const char* verdict(std::optional<bool> v) { return !v ? "n/a" : (*v ? "pass" : "fail"); }

/// (observed - allowed) / stderr, clamped to +/-1e6 (also the value used
/// when the standard error is zero).
inline double z_score(double observed, double allowed, double std_error) {
  constexpr double kCap = 1e6;
  if (std_error > 0.0) return std::clamp((observed - allowed) / std_error, -kCap, kCap);
  if (observed > allowed) return kCap;
  return observed < allowed ? -kCap : 0.0;
}

struct Tally {
  std::size_t total = 0;
  std::size_t passed = 0;
  void add(std::optional<bool> v) {
    if (!v) return;
    ++total;
    if (*v) ++passed;
  }
  double rate() const {
    return total == 0 ? 1.0 : static_cast<double>(passed) / static_cast<double>(total);
  }
};

/// Share of verdicts that must pass for a multi-test summary to pass.
inline constexpr double kSummaryPassRate = 0.99;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::pair<GaussianSpec, GaussianSpec> trial_pair(const ExperimentConfig& c, std::size_t n,
                                                        std::uint64_t trial_seed) {
  if (c.generator == Generator::Explicit) return {*c.spec_x, *c.spec_y};
  return {random_spec(n, derive_seed(trial_seed, 0), c.generator),
          random_spec(n, derive_seed(trial_seed, 1), c.generator)};
}

/// Y = X plus independent centered noise, so gamma^X <= gamma^Y entrywise.
inline std::pair<GaussianSpec, GaussianSpec> dominated_pair(const ExperimentConfig& c,
                                                            std::size_t n,
                                                            std::uint64_t trial_seed) {
  if (c.generator == Generator::Explicit) return {*c.spec_x, *c.spec_y};
  GaussianSpec x = random_spec(n, derive_seed(trial_seed, 0), c.generator);
  const GaussianSpec noise = random_spec(n, derive_seed(trial_seed, 1), c.generator);
  GaussianSpec y = validate_spec(x.mean(), x.covariance() + noise.covariance());
  return {std::move(x), std::move(y)};
}

inline double resolve_beta(const ExperimentConfig& c, const BoundCertificate& cert) {
  if (c.beta) return *c.beta;
  return std::isfinite(cert.optimal_beta) ? cert.optimal_beta : 1.0;
}

}  // namespace detail

/// X = N(0, I_n) against the point mass at 0, one record per n (ascending).
inline ExperimentReport run_sharpness(const ExperimentConfig& config) {
  using namespace detail;
  const Stopwatch clock;
  const ExperimentConfig c = resolve(config);
  ExperimentReport report;
  report.config = config_to_json(c);
  Tally tally;
  double max_z = -std::numeric_limits<double>::infinity();
  double prev_ratio = 0.0, prev_se = 0.0;
  for (std::size_t k = 0; k < c.n.size(); ++k) {
    const std::size_t n = c.n[k];
    const GaussianSpec x = standard_normal_spec(n);
    const GaussianSpec y = point_mass_spec(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)));
    const BoundCertificate cert = certify(x, y);
    const GapEstimate gap = empirical_gap(x, y, c.samples, derive_seed(c.seed, k));
    const double ratio = gap.abs_gap.value / cert.bound;
    const double ratio_se = gap.abs_gap.std_error / cert.bound;
    const double allowed = cert.bound + 3.0 * gap.abs_gap.std_error;
    const bool bound_ok = gap.abs_gap.value <= allowed;
    const std::optional<bool> monotone_ok =
        k == 0 ? std::nullopt
               : std::optional<bool>(ratio >= prev_ratio - 3.0 * std::hypot(ratio_se, prev_se));
    const double z = z_score(gap.abs_gap.value, cert.bound, gap.abs_gap.std_error);
    max_z = std::max(max_z, z);
    tally.add(bound_ok);
    tally.add(monotone_ok);

    Fields r;
    put(r, "n", n);
    put(r, "gamma", cert.gamma);
    put(r, "bound", cert.bound);
    put_estimate(r, "estimate_x", gap.x);
    put_estimate(r, "estimate_y", gap.y);
    put(r, "abs_gap", gap.abs_gap.value);
    put(r, "gap_stderr", gap.abs_gap.std_error);
    put(r, "ratio", ratio);
    put(r, "ratio_stderr", ratio_se);
    put(r, "z_score", z);
    put(r, "bound_verdict", verdict(bound_ok));
    put(r, "monotone_verdict", verdict(monotone_ok));
    report.records.push_back(std::move(r));
    prev_ratio = ratio;
    prev_se = ratio_se;
  }
  put(report.summary, "records", report.records.size());
  put(report.summary, "verdicts_total", tally.total);
  put(report.summary, "verdicts_passed", tally.passed);
  put(report.summary, "pass_rate", tally.rate());
  put(report.summary, "max_violation_z", max_z);
  put(report.summary, "pass", tally.passed == tally.total);
  report.duration_seconds = clock.seconds();
  return report;
}

/// Random equal-mean pairs: |E max X - E max Y| <= sqrt(gamma ln n) + 3 se.
inline ExperimentReport run_bound_check(const ExperimentConfig& config) {
  using namespace detail;
  const Stopwatch clock;
  const ExperimentConfig c = resolve(config);
  ExperimentReport report;
  report.config = config_to_json(c);
  Tally tally;
  double max_z = -std::numeric_limits<double>::infinity();
  for (std::size_t trial = 0; trial < *c.trials; ++trial) {
    const std::uint64_t trial_seed = derive_seed(c.seed, trial);
    const std::size_t n = c.n[trial % c.n.size()];
    const auto [x, y] = trial_pair(c, n, trial_seed);
    const BoundCertificate cert = certify(x, y);
    const GapEstimate gap = empirical_gap(x, y, c.samples, derive_seed(trial_seed, 2));
    const double z = z_score(gap.abs_gap.value, cert.bound, gap.abs_gap.std_error);
    std::optional<bool> ok;
    if (cert.theorem_applies()) {
      ok = gap.abs_gap.value <= cert.bound + 3.0 * gap.abs_gap.std_error;
      max_z = std::max(max_z, z);
    }
    tally.add(ok);

    Fields r;
    put(r, "trial", trial);
    put(r, "n", x.dimension());
    put(r, "gamma", cert.gamma);
    put(r, "bound", cert.bound);
    put_extended(r, "optimal_beta", cert.optimal_beta);
    put(r, "dominates_xy", cert.dominates_xy);
    put(r, "dominates_yx", cert.dominates_yx);
    put(r, "means_equal", cert.means_equal);
    put_estimate(r, "estimate_x", gap.x);
    put_estimate(r, "estimate_y", gap.y);
    put(r, "gap", gap.gap.value);
    put(r, "abs_gap", gap.abs_gap.value);
    put(r, "gap_stderr", gap.gap.std_error);
    put(r, "z_score", z);
    put(r, "verdict", verdict(ok));
    report.records.push_back(std::move(r));
  }
  put(report.summary, "trials", report.records.size());
  put(report.summary, "verdicts_total", tally.total);
  put(report.summary, "verdicts_passed", tally.passed);
  put(report.summary, "violations", tally.total - tally.passed);
  put(report.summary, "pass_rate", tally.rate());
  put_extended(report.summary, "max_violation_z", max_z);
  put(report.summary, "pass", tally.passed == tally.total);
  report.duration_seconds = clock.seconds();
  return report;
}

/// Dominated pairs: derivative estimates on the grid, endpoint comparison
/// phi(1) >= phi(0), and E max X <= E max Y. One record per (trial, t); the
/// trial-level columns repeat on each of its rows.
inline ExperimentReport run_path_diagnostics(const ExperimentConfig& config) {
  using namespace detail;
  const Stopwatch clock;
  const ExperimentConfig c = resolve(config);
  ExperimentReport report;
  report.config = config_to_json(c);
  Tally consistency, sign, endpoint, maxima;
  for (std::size_t trial = 0; trial < *c.trials; ++trial) {
    const std::uint64_t trial_seed = derive_seed(c.seed, trial);
    const std::size_t n = c.n[trial % c.n.size()];
    const auto [x, y] = dominated_pair(c, n, trial_seed);
    const BoundCertificate cert = certify(x, y);
    const SmoothMaxParams params(resolve_beta(c, cert));
    const PathReport path =
        path_monotonicity_report(x, y, params, c.grid, c.samples, derive_seed(trial_seed, 2));
    const bool hypothesis = cert.dominates_xy && cert.means_equal;

    const std::uint64_t endpoint_seed = derive_seed(trial_seed, 3);
    const MCEstimate phi0 = phi(x, y, params, 0.0, c.samples, endpoint_seed);
    const MCEstimate phi1 = phi(x, y, params, 1.0, c.samples, endpoint_seed);
    const std::optional<bool> endpoint_ok =
        hypothesis ? std::optional<bool>(phi1.value >= phi0.value -
                                                           3.0 * std::hypot(phi0.std_error,
                                                                            phi1.std_error))
                   : std::nullopt;
    const GapEstimate gap = empirical_gap(x, y, c.samples, derive_seed(trial_seed, 4));
    const std::optional<bool> max_ok =
        hypothesis ? std::optional<bool>(gap.gap.value <= 3.0 * gap.gap.std_error) : std::nullopt;
    endpoint.add(endpoint_ok);
    maxima.add(max_ok);

    for (std::size_t k = 0; k < path.points.size(); ++k) {
      const DerivativeEstimate& d = path.points[k];
      const std::optional<bool> sign_ok =
          hypothesis ? std::optional<bool>(!path.flags[k]) : std::nullopt;
      consistency.add(d.consistent());
      sign.add(sign_ok);

      Fields r;
      put(r, "trial", trial);
      put(r, "n", x.dimension());
      put(r, "gamma", cert.gamma);
      put(r, "beta", params.beta());
      put(r, "dominated", cert.dominates_xy);
      put(r, "t", d.t);
      put_estimate(r, "explicit", d.explicit_formula);
      put_estimate(r, "finite_difference", d.finite_difference);
      put(r, "consistency_tolerance", d.consistency_tolerance());
      put(r, "consistency_verdict", verdict(d.consistent()));
      put(r, "sign_verdict", verdict(sign_ok));
      put_estimate(r, "phi0", phi0);
      put_estimate(r, "phi1", phi1);
      put(r, "endpoint_verdict", verdict(endpoint_ok));
      put_estimate(r, "max_x", gap.x);
      put_estimate(r, "max_y", gap.y);
      put(r, "max_verdict", verdict(max_ok));
      report.records.push_back(std::move(r));
    }
  }
  const bool pass = consistency.rate() >= kSummaryPassRate && sign.rate() >= kSummaryPassRate &&
                    endpoint.rate() >= kSummaryPassRate && maxima.rate() >= kSummaryPassRate;
  put(report.summary, "records", report.records.size());
  put(report.summary, "consistency_passed", consistency.passed);
  put(report.summary, "consistency_total", consistency.total);
  put(report.summary, "sign_flags", sign.total - sign.passed);
  put(report.summary, "sign_total", sign.total);
  put(report.summary, "endpoint_failures", endpoint.total - endpoint.passed);
  put(report.summary, "max_failures", maxima.total - maxima.passed);
  put(report.summary, "verdicts_total",
      consistency.total + sign.total + endpoint.total + maxima.total);
  put(report.summary, "verdicts_passed",
      consistency.passed + sign.passed + endpoint.passed + maxima.passed);
  put(report.summary, "pass", pass);
  report.duration_seconds = clock.seconds();
  return report;
}

/// Integration-by-parts residual for every coordinate of each random
/// centered spec; beta "auto" means 1.
inline ExperimentReport run_stein_check(const ExperimentConfig& config) {
  using namespace detail;
  const Stopwatch clock;
  const ExperimentConfig c = resolve(config);
  ExperimentReport report;
  report.config = config_to_json(c);
  const SmoothMaxParams params(c.beta.value_or(1.0));
  Tally tally;
  for (std::size_t trial = 0; trial < *c.trials; ++trial) {
    const std::uint64_t trial_seed = derive_seed(c.seed, trial);
    const std::size_t n = c.n[trial % c.n.size()];
    const GaussianSpec spec = c.generator == Generator::Explicit
                                  ? *c.spec_x
                                  : random_spec(n, derive_seed(trial_seed, 0), c.generator);
    for (std::size_t i = 0; i < spec.dimension(); ++i) {
      const MCEstimate r = stein_residual(spec, params, i, c.samples, derive_seed(trial_seed, 1 + i));
      const bool ok = std::abs(r.value) <= 3.0 * r.std_error;
      tally.add(ok);
      Fields rec;
      put(rec, "trial", trial);
      put(rec, "n", spec.dimension());
      put(rec, "i", i);
      put(rec, "beta", params.beta());
      put(rec, "residual", r.value);
      put(rec, "residual_stderr", r.std_error);
      put(rec, "z_score", z_score(std::abs(r.value), 0.0, r.std_error));
      put(rec, "verdict", verdict(ok));
      report.records.push_back(std::move(rec));
    }
  }
  put(report.summary, "records", report.records.size());
  put(report.summary, "verdicts_total", tally.total);
  put(report.summary, "verdicts_passed", tally.passed);
  put(report.summary, "pass_rate", tally.rate());
  put(report.summary, "pass", tally.rate() >= kSummaryPassRate);
  report.duration_seconds = clock.seconds();
  return report;
}

inline ExperimentReport run_experiment(const ExperimentConfig& config) {
  switch (config.experiment) {
    case Experiment::Sharpness: return run_sharpness(config);
    case Experiment::BoundCheck: return run_bound_check(config);
    case Experiment::PathDiagnostics: return run_path_diagnostics(config);
    case Experiment::SteinCheck: return run_stein_check(config);
  }
  throw Error(ErrorCode::ConfigError, "unknown experiment");
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline nlohmann::ordered_json fields_to_json(const Fields& fields) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [key, value] : fields)
    std::visit([&j, &key](const auto& v) { j[key] = v; }, value);
  return j;
}

inline Fields fields_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw Error(ErrorCode::IoError, "expected a JSON object of fields");
  Fields f;
  for (const auto& [key, v] : j.items()) {
    if (v.is_boolean())
      f.emplace_back(key, v.get<bool>());
    else if (v.is_number_integer())
      f.emplace_back(key, v.get<std::int64_t>());
    else if (v.is_number_float())
      f.emplace_back(key, v.get<double>());
    else if (v.is_string())
      f.emplace_back(key, v.get<std::string>());
    else
      throw Error(ErrorCode::IoError, "unsupported value for field '" + key + "'");
  }
  return f;
}

inline std::string csv_cell(const Value& value) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<T, double>) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.17g", v);
          return buf;
        } else {
          if (v.find_first_of(",\"\n") == std::string::npos) return v;
          std::string quoted = "\"";
          for (char ch : v) {
            if (ch == '"') quoted += '"';
            quoted += ch;
          }
          return quoted + "\"";
        }
      },
      value);
}

}  // namespace detail

/// Report body without the wall-clock field; equal configs and seeds give
/// identical bodies.
inline nlohmann::ordered_json report_body(const ExperimentReport& report) {
  nlohmann::ordered_json j;
  j["config"] = report.config;
  auto records = nlohmann::ordered_json::array();
  for (const auto& r : report.records) records.push_back(detail::fields_to_json(r));
  j["records"] = std::move(records);
  j["summary"] = detail::fields_to_json(report.summary);
  j["version"] = report.version;
  return j;
}

inline nlohmann::ordered_json report_to_json(const ExperimentReport& report) {
  nlohmann::ordered_json j = report_body(report);
  j["duration_seconds"] = report.duration_seconds;
  return j;
}

inline ExperimentReport report_from_json(const nlohmann::ordered_json& j) {
  try {
    ExperimentReport r;
    r.config = j.at("config");
    for (const auto& rec : j.at("records")) r.records.push_back(detail::fields_from_json(rec));
    r.summary = detail::fields_from_json(j.at("summary"));
    r.version = j.at("version").get<std::string>();
    r.duration_seconds = j.at("duration_seconds").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("malformed report: ") + e.what());
  }
}

/// Header from the first record's keys, then one row per record in the same
/// column order. An empty report produces an empty file.
inline std::string report_to_csv(const ExperimentReport& report) {
  std::ostringstream out;
  if (report.records.empty()) return {};
  const Fields& first = report.records.front();
  for (std::size_t k = 0; k < first.size(); ++k) out << (k ? "," : "") << first[k].first;
  out << '\n';
  for (const auto& rec : report.records) {
    if (rec.size() != first.size())
      throw Error(ErrorCode::IoError, "records have differing column counts");
    for (std::size_t k = 0; k < rec.size(); ++k)
      out << (k ? "," : "") << detail::csv_cell(rec[k].second);
    out << '\n';
  }
  return out.str();
}

inline void write_report(const ExperimentReport& report, const std::string& path,
                         ReportFormat format) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  if (format == ReportFormat::Json)
    file << report_to_json(report).dump(2) << '\n';
  else
    file << report_to_csv(report);
  if (!file) throw Error(ErrorCode::IoError, "failed writing '" + path + "'");
}

inline ExperimentReport read_report(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  try {
    return report_from_json(nlohmann::ordered_json::parse(file));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("cannot parse report: ") + e.what());
  }
}

}  // namespace sudfer
