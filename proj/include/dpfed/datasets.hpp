#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dpfed/core_math.hpp"

namespace dpfed {

/// Shards for clients 0..N-1, in client order.
struct FederatedDataset {
  std::vector<ClientShard> shards;
  std::size_t n = 0;       // total samples
  double n_bar_sq = 0.0;   // (1/N) sum_l n_l^2
  int feature_dim = 0;     // d, excluding any bias column
  bool bias = true;

  int clients() const { return static_cast<int>(shards.size()); }
  int param_dim() const { return feature_dim + (bias ? 1 : 0); }
};

/// Checks client ids, recomputes n and n_bar_sq.
FederatedDataset assemble_dataset(std::vector<ClientShard> shards, int feature_dim, bool bias);

struct SynthSpec {
  int clients = 100;
  int samples_per_client = 20;
  int features = 5;
  double heterogeneity = 0.5;  // in [0, 1]
  double noise_std = 0.1;
  std::uint64_t seed = 0;
  bool bias = true;
};

/// Linear-regression clients around a shared true parameter.
///
/// theta_l = theta_true + heterogeneity * offset_l, with theta_true and
/// offset_l drawn standard normal; features are standard normal and
/// targets are x^T theta_l plus N(0, noise_std^2) observation noise. With
/// heterogeneity = 0 every client shares one generating model.
FederatedDataset synth_regression(const SynthSpec& spec);

/// Raw tabular records before partitioning (no bias column).
struct RecordSet {
  Matrix features;         // rows x d
  Eigen::VectorXd targets;  // rows
  std::vector<std::string> feature_names;

  std::size_t size() const { return static_cast<std::size_t>(targets.size()); }
};

/// Sort key selector for `sorted_partition`: feature column index, or this
/// value for the target column.
inline constexpr int kTargetSortKey = -1;

/// Stable-sorts records ascending by the key column and cuts them into N
/// contiguous groups whose sizes differ by at most one (the first
/// count mod N groups take the extra record). Group i becomes client i.
FederatedDataset sorted_partition(const RecordSet& records, int sort_key_index, int clients,
                                  bool bias = true);

/// Same grouping as `sorted_partition` but over a seeded random permutation.
FederatedDataset random_partition(const RecordSet& records, int clients, std::uint64_t seed,
                                  bool bias = true);

struct CsvSplit {
  RecordSet train;
  RecordSet holdout;
  std::size_t rejected_rows = 0;
};

/// Reads a comma-separated numeric file with a header row, drops rows with
/// missing or non-numeric cells (counted in `rejected_rows`), shuffles with
/// `seed` and splits off round(train_fraction * rows) training records.
///
/// `feature_columns` empty means every column other than the target.
/// Throws IoError when the file cannot be read and ConfigError for unknown
/// columns or a file without usable rows.
CsvSplit load_csv(const std::filesystem::path& path, const std::string& target_column,
                  const std::vector<std::string>& feature_columns, double train_fraction,
                  std::uint64_t seed);

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dpfed
