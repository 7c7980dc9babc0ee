// Benchmark of the coverage experiment: the OpenMP worker-pool kernel against
// the plain-loop serial reference.  Per-trial stream derivation makes the two
// bitwise identical; the tool times both and fails if the reports disagree.

#include <chrono>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "confactor/calibration.hpp"
#include "confactor/families.hpp"
#include "confactor/posterior.hpp"

using namespace confactor;

namespace {

double run_timed(CalibrationReport (*fn)(const DirectFamily&,
                                         const ConsistencyFactor&,
                                         const TruthGenerator&,
                                         const CoverageConfig&,
                                         const RandomStream&),
                 const DirectFamily& fam, const ConsistencyFactor& factor,
                 const TruthGenerator& truth, const CoverageConfig& cfg,
                 const RandomStream& base, CalibrationReport* out) {
  const auto t0 = std::chrono::steady_clock::now();
  *out = fn(fam, factor, truth, cfg, base);
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coverage kernel benchmark: OpenMP pool vs serial reference"};
  std::string family = "normal-location";
  std::uint64_t trials = 20000;
  int threads = 0;
  std::uint64_t seed = 42;
  app.add_option("--family", family, "family label (default normal-location)");
  app.add_option("--trials", trials, "trials per run (default 20000)");
  app.add_option("--threads", threads, "pool size, 0 = machine (default 0)");
  app.add_option("--seed", seed, "stream seed (default 42)");
  CLI11_PARSE(app, argc, argv);

  const DirectFamily fam = family_by_label(family);
  const ConsistencyFactor factor =
      fam.group_label == "scaling" ? consistency_factor(FactorKind::scale)
                                   : consistency_factor(FactorKind::location);
  const TruthGenerator truth = TruthGenerator::fixed(
      fam.group_label == "scaling" ? 2.0 : 3.0);
  CoverageConfig cfg;
  cfg.trials = trials;
  cfg.threads = threads;
  const RandomStream base(seed, 1);

  std::printf("coverage benchmark: %s, %llu trials, factor %s\n",
              fam.label.c_str(), static_cast<unsigned long long>(trials),
              factor.label.c_str());

  CalibrationReport serial, parallel;
  const double serial_s =
      run_timed(&coverage_experiment_serial, fam, factor, truth, cfg, base,
                &serial);
  const double parallel_s =
      run_timed(&coverage_experiment, fam, factor, truth, cfg, base, &parallel);

  std::printf("  serial    %7.2f s   coverage %.5f\n", serial_s, serial.coverage);
  std::printf("  parallel  %7.2f s   coverage %.5f   speedup %.2fx\n",
              parallel_s, parallel.coverage, serial_s / parallel_s);

  const bool identical = serial.trials == parallel.trials &&
                         serial.covered == parallel.covered &&
                         serial.failed_trials == parallel.failed_trials &&
                         serial.coverage == parallel.coverage &&
                         serial.std_error == parallel.std_error;
  std::printf("reports identical: %s\n", identical ? "yes" : "NO");
  return identical ? 0 : 1;
}
