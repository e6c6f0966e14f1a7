#pragma once

// Experiment description files: INI-style sections [federation],
// [schedule], [dp], [data], [output], plus [sweep] in sweep files. Every
// key has a default; unknown sections or keys are rejected.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dpfed/core_math.hpp"
#include "dpfed/dp_mechanisms.hpp"
#include "dpfed/federation.hpp"

namespace dpfed {

struct FederationSection {
  int clients = 100;
  int pool = 10;
  int local_iterations = 1;
  long total_iterations = 100;
  std::uint64_t seed = 1;
  int repeats = 20;
  int threads = 1;
  /// Empty: zeros. One value: every coordinate. Otherwise one per coordinate.
  std::vector<double> theta0;
};

struct ScheduleSection {
  ScheduleKind kind = ScheduleKind::Theorem;
  double eta = 0.01;
  // Overrides for derived problem constants.
  std::optional<double> mu;
  std::optional<double> lambda;
  std::optional<double> g_bound;
  std::optional<double> gamma_noniid;
};

struct DpSection {
  MechanismKind mechanism = MechanismKind::None;
  double epsilon = std::numeric_limits<double>::infinity();
  double delta = 1e-4;
  double c2 = 1.0;
  std::optional<double> xi1;  // default: clip threshold (2x in strict mode)
  std::optional<double> xi2;  // default: clip threshold
  bool strict_sensitivity = false;
  double clip_threshold = 150.0;  // "inf" disables clipping
  NormKind clip_norm = NormKind::L1;
  VarianceMode variance_mode = VarianceMode::Exact;
};

enum class DataSource { Synthetic, Csv };
enum class PartitionKind { Sorted, Random };

struct DataSection {
  DataSource source = DataSource::Synthetic;
  // synthetic
  int samples_per_client = 20;
  int features = 5;
  double heterogeneity = 0.5;
  double noise_std = 0.1;
  std::uint64_t seed = 7;
  // csv
  std::string path;
  std::string target_column;
  std::vector<std::string> feature_columns;
  std::string sort_column;  // empty: sort by the target
  PartitionKind partition = PartitionKind::Sorted;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;

  bool bias = true;
};

struct OutputSection {
  std::string dir = "out";
  std::string rounds_file = "rounds.csv";
  std::string summary_file = "summary.csv";
  std::string sweep_file = "sweep.csv";
  std::string plan_file = "plan.txt";
};

enum class SweepAxis { T, E, Epsilon, ERule };

std::string to_string(SweepAxis axis);

struct SweepSection {
  SweepAxis axis = SweepAxis::T;
  /// Numbers for T, E and epsilon ("inf" allowed for epsilon); rules
  /// "1", "T^1/3", "T^1/2", "T^2/3", "T" for E_rule.
  std::vector<std::string> values;
};

struct ExperimentConfig {
  FederationSection federation;
  ScheduleSection schedule;
  DpSection dp;
  DataSection data;
  OutputSection output;
  std::optional<SweepSection> sweep;
};

/// Parses a config. `allow_sweep` admits the [sweep] section. Throws
/// ConfigError naming the offending section and key.
ExperimentConfig parse_config(std::istream& in, bool allow_sweep = false);

/// Reads and parses a file; IoError if it cannot be opened.
ExperimentConfig load_config(const std::filesystem::path& path, bool allow_sweep = false);

/// Serialises every key, so that parse_config(render_config(c)) == c.
std::string render_config(const ExperimentConfig& config);

}  // namespace dpfed
