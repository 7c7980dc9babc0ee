#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cli.hpp"

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw confactor::cli::IoError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (!in.good() && !in.eof())
    throw confactor::cli::IoError("error while reading '" + path + "'");
  return buf.str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace confactor::cli;

  CLI::App app{"confactor: consistency-factor inference experiment runner"};
  app.set_version_flag("--version", std::string(kToolVersion));
  std::string config_path;
  app.add_option("config", config_path, "JSON experiment configuration file")
      ->required();
  std::optional<std::string> seed, trials, delta, alpha, output, jobs, n_obs, stream_id;
  bool emit_plot = false, validate_only = false;
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--trials", trials, "override the trial count");
  app.add_option("--delta", delta, "override the probability content");
  app.add_option("--alpha", alpha, "override the lower tail probability");
  app.add_option("--output", output, "override the output path prefix");
  app.add_option("--jobs", jobs, "worker threads for coverage/pit (0 = machine)");
  app.add_option("--n-obs", n_obs, "override observations per trial");
  app.add_option("--stream-id", stream_id, "override the random stream id");
  app.add_flag("--emit-plot", emit_plot, "also write the SVG chart");
  app.add_flag("--validate-only", validate_only,
               "check the config and print the effective values, then exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // --help / --version exit 0, bad usage is a config error
  }

  try {
    const std::string text = read_text_file(config_path);
    Overrides overrides;
    if (seed) overrides.emplace_back("seed", *seed);
    if (trials) overrides.emplace_back("trials", *trials);
    if (delta) overrides.emplace_back("delta", *delta);
    if (alpha) overrides.emplace_back("alpha", *alpha);
    if (output) overrides.emplace_back("output", *output);
    if (jobs) overrides.emplace_back("jobs", *jobs);
    if (n_obs) overrides.emplace_back("n_obs", *n_obs);
    if (stream_id) overrides.emplace_back("stream_id", *stream_id);
    if (emit_plot) overrides.emplace_back("emit_plot", "true");

    const ExperimentConfig cfg = validate(text, overrides);
    if (validate_only) {
      std::printf("%s\n", cfg.echo.dump(2).c_str());
      return 0;
    }
    const RunManifest manifest = run_experiment(cfg);
    std::printf("%s\n", manifest.to_json().c_str());
    return 0;
  } catch (const ConfigInvalid& e) {
    for (const auto& issue : e.issues) log(LogLevel::error, "config: " + issue);
    return 2;
  } catch (const IoError& e) {
    log(LogLevel::error, std::string("io: ") + e.what());
    return 4;
  } catch (const confactor::Error& e) {
    log(LogLevel::error, classify_error(e) + ": " + e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    log(LogLevel::error, std::string("config: ") + e.what());
    return 2;
  } catch (const std::exception& e) {
    log(LogLevel::error, std::string("unexpected: ") + e.what());
    return 3;
  }
}
