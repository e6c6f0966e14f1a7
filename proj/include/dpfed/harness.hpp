#pragma once

// Experiment driver behind the CLI: seed-averaged runs, parameter sweeps,
// the planner, Monte-Carlo validation of the noise-variance closed forms,
// and the centralised gradient-descent oracle.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dpfed/analysis.hpp"
#include "dpfed/config.hpp"
#include "dpfed/datasets.hpp"
#include "dpfed/federation.hpp"

namespace dpfed {

/// Exit codes of the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitDiverged = 2,
  kExitIo = 3,
};

/// A config resolved against its data: dataset, engine config, problem
/// constants and (when available) bound parameters.
struct Experiment {
  ExperimentConfig config;
  FederatedDataset dataset;
  FederationConfig federation;
  ProblemConstants constants;
  std::optional<BoundParams> bound;
  std::vector<std::string> warnings;
};

/// Builds the dataset described by the [data] section.
FederatedDataset build_dataset(const ExperimentConfig& config);

/// Resolves a config. Reuses `dataset` when given (sweeps share one).
Experiment prepare_experiment(const ExperimentConfig& config,
                              const FederatedDataset* dataset = nullptr);

struct RoundStats {
  int t = 0;
  long k = 0;
  double eta_k = 0.0;
  double mean_loss = 0.0;
  double std_loss = 0.0;
  double mean_y = 0.0;
  double std_y = 0.0;
  double bound_y = 0.0;
  int runs = 0;  // repeats that reached this round
};

struct RunSummary {
  std::vector<std::uint64_t> seeds;
  std::vector<RunResult> runs;
  std::vector<RoundStats> rounds;
  int diverged = 0;
  double mean_final_loss = 0.0;
  double std_final_loss = 0.0;
  double mean_final_y = 0.0;
};

/// Runs `repeats` repeats with seeds seed+0 ... seed+repeats-1 on up to
/// `threads` workers and aggregates them (population std over repeats).
RunSummary run_repeats(const Experiment& experiment, std::uint64_t seed, int repeats, int threads);

/// Per-run records: run_id,seed,t,k,eta_k,global_loss,y_k,bound_y_k,noise_l2
void write_rounds_csv(std::ostream& out, const RunSummary& summary);
/// Per-round statistics: t,k,eta_k,runs,mean_loss,std_loss,mean_y,std_y,bound_y_k
void write_summary_csv(std::ostream& out, const RunSummary& summary);

struct SweepPoint {
  std::string label;  // value column
  ExperimentConfig config;
  int E = 1;
  long T = 1;
  double mean_final_loss = 0.0;
  double std_final_loss = 0.0;
  double mean_final_y = 0.0;
  int diverged_runs = 0;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::T;
  std::vector<SweepPoint> points;
  std::size_t argmin = 0;  // over mean_final_loss
};

/// Expands the [sweep] grid into per-point configs, validating every point
/// before anything runs.
std::vector<SweepPoint> expand_sweep(const ExperimentConfig& config);

/// Runs every grid point with the same seed streams (seed+0 ...).
SweepResult run_sweep(const ExperimentConfig& config, int threads);

/// axis,value,mean_final_loss,std_final_loss,mean_final_y,diverged_runs
void write_sweep_csv(std::ostream& out, const SweepResult& result);

/// Exponent a of an E rule label ("1", "T^1/3", "T^1/2", "T^2/3", "T").
double e_rule_exponent(const std::string& label);

struct PlanReport {
  MechanismKind mechanism = MechanismKind::None;
  double z = 0.0;
  double rate_exponent = -1.0;
  std::string rate_verdict;
  long T = 0;
  long raw_e_star = 1;
  long e_star = 1;
  double laplace_scale = 0.0;
  double gaussian_sigma = 0.0;
  double noise_std = 0.0;
  double variance_exact = 0.0;
  double variance_doubled = 0.0;
  double c_m = 0.0;
  double omega0 = 0.0;
  double omega1 = 0.0;
  ProblemConstants constants;
  double gamma = 0.0;
  bool bound_available = false;
  std::vector<TStarPoint> bound_curve;  // k = E, 2E, ..., T
  std::optional<TStarPoint> t_star;
  std::vector<std::string> warnings;
};

PlanReport make_plan(const Experiment& experiment);
void write_plan(std::ostream& out, const PlanReport& plan);

struct ValidationReport {
  MechanismKind mechanism = MechanismKind::None;
  long draws = 0;
  double empirical = 0.0;
  double standard_error = 0.0;
  double predicted_exact = 0.0;
  double predicted_doubled = 0.0;
  VarianceMode gate_mode = VarianceMode::Exact;
  double relative_error = 0.0;  // against the gate mode
  double tolerance = 0.0;
  bool passed = false;
};

/// Monte-Carlo estimate of E||w_t^b||^2 over `draws` round-robin pool
/// aggregations at round 0, against the closed forms. Tolerance is 1% at
/// 10^6 draws or more, 5% below. Laplace is always gated on its single
/// closed form; Gaussian on the configured variance mode.
ValidationReport validate_noise(const Experiment& experiment, long draws, std::uint64_t seed);
void write_validation(std::ostream& out, const ValidationReport& report);

/// Full-batch GD on the pooled loss, clipping the pooled gradient. Returns
/// theta_0, theta_1, ..., theta_T.
std::vector<ParamVector> centralized_gd_oracle(const FederatedDataset& dataset, long T,
                                               const Schedule& schedule, const ClipSpec& clip,
                                               const ParamVector& theta_0);

/// Shortest round-trip decimal form; empty for NaN, "inf"/"-inf" for
/// infinities.
std::string format_real(double v);

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
  std::optional<int> threads;
  long draws = 1'000'000;
  bool quiet = false;
};

int cmd_run(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_sweep(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_plan(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_validate(const CommandOptions& options, std::ostream& out, std::ostream& err);

}  // namespace dpfed
