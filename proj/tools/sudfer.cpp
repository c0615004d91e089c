// sudfer: batch experiments for Gaussian expected-maximum comparison bounds.
//
//   sudfer <experiment> [--config file.json] [flags]
//
// Exit status: 0 when the report summary passes, 2 when it fails, 1 on error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sudfer/sudfer.hpp"

namespace {

template <class T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T value{};
    if (!(is >> value) || !is.eof())
      throw sudfer::Error(sudfer::ErrorCode::ConfigError,
                          std::string("cannot parse '") + item + "' in " + flag);
    out.push_back(value);
  }
  return out;
}

struct Flags {
  std::string experiment_positional;
  std::string experiment;
  std::string config_path;
  std::optional<std::string> n, grid, beta, generator, output, format;
  std::optional<std::size_t> samples, trials;
  std::optional<std::uint64_t> seed;
};

sudfer::ExperimentConfig build_config(const Flags& f) {
  using namespace sudfer;
  ExperimentConfig config;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config '" + f.config_path + "'");
    nlohmann::ordered_json doc;
    try {
      doc = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ConfigError, std::string("cannot parse config: ") + e.what());
    }
    config = config_from_json(doc);
  }
  if (!f.experiment_positional.empty()) config.experiment = parse_experiment(f.experiment_positional);
  if (!f.experiment.empty()) config.experiment = parse_experiment(f.experiment);
  if (f.n) config.n = parse_list<std::size_t>(*f.n, "--n");
  if (f.samples) config.samples = *f.samples;
  if (f.seed) config.seed = *f.seed;
  if (f.beta) {
    if (*f.beta == "auto")
      config.beta.reset();
    else
      config.beta = parse_list<double>(*f.beta, "--beta").at(0);
  }
  if (f.grid) config.grid = parse_list<double>(*f.grid, "--grid");
  if (f.trials) config.trials = *f.trials;
  if (f.generator) config.generator = parse_generator(*f.generator);
  if (f.output) config.output_path = *f.output;
  if (f.format) config.format = parse_format(*f.format);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo verification of Gaussian expected-maximum comparison bounds"};
  Flags f;
  app.add_option("name", f.experiment_positional,
                 "sharpness | bound-check | path-diagnostics | stein-check");
  app.add_option("--experiment", f.experiment, "Same as the positional argument");
  app.add_option("--config", f.config_path, "JSON config document; flags override its fields");
  app.add_option("--n", f.n, "Dimension or comma-separated list of dimensions");
  app.add_option("--samples", f.samples, "Monte Carlo samples per estimate");
  app.add_option("--seed", f.seed, "Master seed");
  app.add_option("--beta", f.beta, "Smooth-max inverse temperature, or 'auto'");
  app.add_option("--grid", f.grid, "Comma-separated interior t values");
  app.add_option("--trials", f.trials, "Number of random trials");
  app.add_option("--generator", f.generator, "wishart | equicorrelated | diagonal | explicit");
  app.add_option("--output", f.output, "Report path (stdout when omitted)");
  app.add_option("--format", f.format, "json | csv");
  CLI11_PARSE(app, argc, argv);

  try {
    if (f.experiment_positional.empty() && f.experiment.empty() && f.config_path.empty())
      throw sudfer::Error(sudfer::ErrorCode::ConfigError, "no experiment given");
    const sudfer::ExperimentConfig config = build_config(f);
    const sudfer::ExperimentReport report = sudfer::run_experiment(config);
    if (config.output_path.empty()) {
      if (config.format == sudfer::ReportFormat::Json)
        std::cout << sudfer::report_to_json(report).dump(2) << '\n';
      else
        std::cout << sudfer::report_to_csv(report);
    } else {
      sudfer::write_report(report, config.output_path, config.format);
    }
    std::cerr << sudfer::to_string(config.experiment) << ": "
              << (report.passed() ? "PASS" : "FAIL") << " ("
              << sudfer::detail::fields_to_json(report.summary).dump() << ")\n";
    return report.passed() ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
