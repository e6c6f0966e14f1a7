#include "dpfed/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string_view>

#include <fmt/format.h>

#include "dpfed/rng.hpp"

namespace dpfed {

namespace {

Matrix with_bias(const Matrix& x, bool bias) {
  if (!bias) return x;
  Matrix out(x.rows(), x.cols() + 1);
  out.leftCols(x.cols()) = x;
  out.col(x.cols()).setOnes();
  return out;
}

// Cuts `order` (record indices) into `clients` near-equal contiguous groups.
FederatedDataset chunk(const RecordSet& records, const std::vector<std::size_t>& order,
                       int clients, bool bias) {
  if (clients < 1) {
    throw ConfigError("number of clients must be at least 1");
  }
  const std::size_t count = order.size();
  if (count < static_cast<std::size_t>(clients)) {
    throw ConfigError(
        fmt::format("{} records cannot fill {} clients (need at least one each)", count, clients));
  }
  const auto d = records.features.cols();
  const std::size_t base = count / static_cast<std::size_t>(clients);
  const std::size_t extra = count % static_cast<std::size_t>(clients);

  std::vector<ClientShard> shards;
  shards.reserve(static_cast<std::size_t>(clients));
  std::size_t at = 0;
  for (int c = 0; c < clients; ++c) {
    const std::size_t size = base + (static_cast<std::size_t>(c) < extra ? 1 : 0);
    Matrix x(static_cast<Eigen::Index>(size), d);
    Eigen::VectorXd y(static_cast<Eigen::Index>(size));
    for (std::size_t r = 0; r < size; ++r, ++at) {
      const auto src = static_cast<Eigen::Index>(order[at]);
      x.row(static_cast<Eigen::Index>(r)) = records.features.row(src);
      y[static_cast<Eigen::Index>(r)] = records.targets[src];
    }
    shards.push_back(make_shard(c, with_bias(x, bias), std::move(y)));
  }
  return assemble_dataset(std::move(shards), static_cast<int>(d), bias);
}

void fisher_yates(std::vector<std::size_t>& v, RandomStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(v[i - 1], v[j]);
  }
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_number(std::string_view cell, double& out) {
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  const auto* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

RecordSet take_rows(const RecordSet& all, const std::vector<std::size_t>& order, std::size_t from,
                    std::size_t to) {
  RecordSet out;
  out.feature_names = all.feature_names;
  const auto rows = static_cast<Eigen::Index>(to - from);
  out.features.resize(rows, all.features.cols());
  out.targets.resize(rows);
  for (std::size_t i = from; i < to; ++i) {
    const auto dst = static_cast<Eigen::Index>(i - from);
    const auto src = static_cast<Eigen::Index>(order[i]);
    out.features.row(dst) = all.features.row(src);
    out.targets[dst] = all.targets[src];
  }
  return out;
}

}  // namespace

FederatedDataset assemble_dataset(std::vector<ClientShard> shards, int feature_dim, bool bias) {
  FederatedDataset ds;
  ds.feature_dim = feature_dim;
  ds.bias = bias;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < shards.size(); ++i) {
    if (shards[i].client_id != static_cast<int>(i)) {
      throw ConfigError(fmt::format("shard at position {} has client id {}", i, shards[i].client_id));
    }
    if (shards[i].dim() != ds.param_dim()) {
      throw ConfigError(fmt::format("shard {} has dimension {}, expected {}", i, shards[i].dim(),
                                    ds.param_dim()));
    }
    ds.n += shards[i].size();
    const auto nl = static_cast<double>(shards[i].size());
    sum_sq += nl * nl;
  }
  if (shards.empty()) {
    throw ConfigError("dataset needs at least one client");
  }
  ds.n_bar_sq = sum_sq / static_cast<double>(shards.size());
  ds.shards = std::move(shards);
  return ds;
}

FederatedDataset synth_regression(const SynthSpec& spec) {
  if (spec.clients < 1 || spec.samples_per_client < 1 || spec.features < 1) {
    throw ConfigError("synthetic data needs clients, samples_per_client and features >= 1");
  }
  if (spec.heterogeneity < 0.0 || spec.heterogeneity > 1.0) {
    throw ConfigError(fmt::format("heterogeneity must lie in [0, 1], got {}", spec.heterogeneity));
  }
  if (spec.noise_std < 0.0) {
    throw ConfigError("noise_std must be non-negative");
  }
  const int d = spec.features;
  const int p = d + (spec.bias ? 1 : 0);

  RandomStream global(StreamTag::Synthetic, spec.seed, 0, 0);
  ParamVector theta_true(p);
  for (int i = 0; i < p; ++i) theta_true[i] = global.normal();

  std::vector<ClientShard> shards;
  shards.reserve(static_cast<std::size_t>(spec.clients));
  for (int c = 0; c < spec.clients; ++c) {
    RandomStream rng(StreamTag::Synthetic, spec.seed, 1, static_cast<std::uint64_t>(c));
    ParamVector theta_local(p);
    for (int i = 0; i < p; ++i) theta_local[i] = theta_true[i] + spec.heterogeneity * rng.normal();

    Matrix x(spec.samples_per_client, d);
    for (int r = 0; r < spec.samples_per_client; ++r) {
      for (int j = 0; j < d; ++j) x(r, j) = rng.normal();
    }
    Matrix design = with_bias(x, spec.bias);
    Eigen::VectorXd y = design * theta_local;
    if (spec.noise_std > 0.0) {
      for (int r = 0; r < spec.samples_per_client; ++r) y[r] += spec.noise_std * rng.normal();
    }
    shards.push_back(make_shard(c, std::move(design), std::move(y)));
  }
  return assemble_dataset(std::move(shards), d, spec.bias);
}

FederatedDataset sorted_partition(const RecordSet& records, int sort_key_index, int clients,
                                  bool bias) {
  const auto d = records.features.cols();
  if (sort_key_index != kTargetSortKey && (sort_key_index < 0 || sort_key_index >= d)) {
    throw ConfigError(fmt::format("sort key index {} out of range", sort_key_index));
  }
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto key = [&](std::size_t r) {
    const auto row = static_cast<Eigen::Index>(r);
    return sort_key_index == kTargetSortKey ? records.targets[row]
                                            : records.features(row, sort_key_index);
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  return chunk(records, order, clients, bias);
}

FederatedDataset random_partition(const RecordSet& records, int clients, std::uint64_t seed,
                                  bool bias) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RandomStream rng(StreamTag::Shuffle, seed, 1, 0);
  fisher_yates(order, rng);
  return chunk(records, order, clients, bias);
}

CsvSplit load_csv(const std::filesystem::path& path, const std::string& target_column,
                  const std::vector<std::string>& feature_columns, double train_fraction,
                  std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ConfigError(fmt::format("train_fraction must lie in (0, 1], got {}", train_fraction));
  }
  std::ifstream in(path);
  if (!in) {
    throw IoError(fmt::format("cannot open '{}'", path.string()));
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw IoError(fmt::format("'{}' is empty", path.string()));
  }
  if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
  std::vector<std::string> header;
  for (auto cell : split_commas(line)) header.emplace_back(cell);

  auto column_of = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw ConfigError(fmt::format("column '{}' not found in '{}'", name, path.string()));
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t target_idx = column_of(target_column);
  std::vector<std::size_t> feature_idx;
  std::vector<std::string> names;
  if (feature_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i != target_idx) {
        feature_idx.push_back(i);
        names.push_back(header[i]);
      }
    }
  } else {
    for (const auto& name : feature_columns) {
      feature_idx.push_back(column_of(name));
      names.push_back(name);
    }
  }
  if (feature_idx.empty()) {
    throw ConfigError("no feature columns selected");
  }

  std::vector<std::vector<double>> rows;
  std::size_t rejected = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    std::vector<double> row(feature_idx.size() + 1);
    bool ok = cells.size() == header.size();
    for (std::size_t j = 0; ok && j < feature_idx.size(); ++j) {
      ok = parse_number(cells[feature_idx[j]], row[j]);
    }
    if (ok) ok = parse_number(cells[target_idx], row.back());
    if (ok) {
      rows.push_back(std::move(row));
    } else {
      ++rejected;
    }
  }
  if (in.bad()) {
    throw IoError(fmt::format("read error on '{}'", path.string()));
  }
  if (rows.empty()) {
    throw ConfigError(fmt::format("'{}' has no numeric rows", path.string()));
  }

  RecordSet all;
  all.feature_names = names;
  const auto count = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(feature_idx.size());
  all.features.resize(count, d);
  all.targets.resize(count);
  for (Eigen::Index r = 0; r < count; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    for (Eigen::Index j = 0; j < d; ++j) all.features(r, j) = row[static_cast<std::size_t>(j)];
    all.targets[r] = row.back();
  }

  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RandomStream rng(StreamTag::Shuffle, seed, 0, 0);
  fisher_yates(order, rng);
  const auto train_count = std::min(
      rows.size(),
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(rows.size()))));

  CsvSplit split;
  split.train = take_rows(all, order, 0, train_count);
  split.holdout = take_rows(all, order, train_count, rows.size());
  split.rejected_rows = rejected;
  return split;
}

}  // namespace dpfed
