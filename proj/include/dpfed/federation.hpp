#pragma once

// Client-based DP-FedAvg: round-robin pools, E local full-batch clipped
// gradient steps per client, per-client noise at the end of the round, and
// weighted server aggregation.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpfed/analysis.hpp"
#include "dpfed/core_math.hpp"
#include "dpfed/datasets.hpp"
#include "dpfed/dp_mechanisms.hpp"

namespace dpfed {

/// eta_k = 2 / (mu (k + gamma))
double lr_schedule(long k, double mu, double gamma);

enum class ScheduleKind { Theorem, Constant };

struct Schedule {
  ScheduleKind kind = ScheduleKind::Theorem;
  double mu = 1.0;
  double gamma = 1.0;
  double eta = 0.01;  // constant schedule only

  static Schedule theorem(double mu, double gamma) { return {ScheduleKind::Theorem, mu, gamma, 0.0}; }
  static Schedule constant(double eta) { return {ScheduleKind::Constant, 0.0, 0.0, eta}; }

  double rate(long k) const;
  void validate() const;
};

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& text);

/// Throws ConfigError unless 1 <= b <= N and b divides N.
void validate_pool_shape(int N, int b);

/// Clients (t*b) mod N, ..., (t*b + b - 1) mod N.
std::vector<int> select_pool(int t, int N, int b);

/// Exactly E full-batch clipped gradient steps with rates eta_{tE}, ...,
/// eta_{tE+E-1}. Returns the pre-noise local parameters. Throws
/// DivergenceError if any iterate becomes non-finite or exceeds 1e12 in
/// magnitude.
ParamVector client_update(const ParamVector& theta_in, const ClientShard& shard, int t, int E,
                          const Schedule& schedule, const ClipSpec& clip);

/// Same as client_update, additionally reporting the largest L2 norm of a
/// clipped gradient taken along the way.
ParamVector client_update_traced(const ParamVector& theta_in, const ClientShard& shard, int t,
                                 int E, const Schedule& schedule, const ClipSpec& clip,
                                 double& max_gradient_norm);

struct ClientParams {
  int client_id = 0;
  ParamVector params;
  std::size_t samples = 0;
};

/// (N/b) * sum_l (n_l/n) * params_l, reduced in ascending client-id order.
ParamVector aggregate(std::span<const ClientParams> pool, int N, int b, double n);

struct FederationConfig {
  int N = 1;
  int b = 1;
  int E = 1;
  int T_g = 1;
  Schedule schedule;
  ClipSpec clip;
  MechanismSpec mechanism;
  ParamVector theta_0;
  std::uint64_t seed = 0;
  int repeats = 1;

  long total_iterations() const { return static_cast<long>(E) * T_g; }
  int rounds_per_client() const { return b * T_g / N; }

  /// Checks shape invariants (b | N, (N/b) | T_g so every client joins the
  /// same number of rounds, E, T_g >= 1) and agreement with the dataset.
  void validate(const FederatedDataset& dataset) const;
};

/// Calibration inputs for round t.
NoiseContext noise_context(const FederationConfig& config, const FederatedDataset& dataset, int t);

struct RoundRecord {
  int t = 0;
  long k = 0;          // (t+1) E
  double eta_k = 0.0;  // eta_{tE}, the largest rate of the round
  double global_loss = 0.0;
  double y_k = 0.0;        // NaN when theta* is not supplied
  double bound_y_k = 0.0;  // NaN when the bound is unavailable
  double noise_l2 = 0.0;
};

struct RunResult {
  std::vector<RoundRecord> rounds;
  bool diverged = false;
  std::string divergence_message;
};

struct ClientOutcome {
  int client_id = 0;
  ParamVector local;  // pre-noise
  ParamVector noise;
  std::size_t samples = 0;
};

/// Per-round view for instrumentation and property tests.
struct RoundTrace {
  int t = 0;
  const ParamVector& theta_in;
  std::span<const ClientOutcome> clients;
  const ParamVector& theta_out;
  const NoiseContext& context;
};

struct RunOptions {
  int threads = 1;
  std::optional<ParamVector> theta_star;
  std::optional<BoundParams> bound;
  double y0 = 0.0;
  std::function<void(const RoundTrace&)> observer;
};

/// Runs T_g global iterations with config.seed driving the DP noise. The
/// record stream is identical for every thread count. On divergence the
/// rounds completed so far are returned with `diverged` set.
RunResult run_federation(const FederationConfig& config, const FederatedDataset& dataset,
                         const RunOptions& options = {});

/// Largest clipped-gradient L2 norm seen in a noise-free run of `config`
/// with seed 0. Used as G when clipping does not bound the L2 norm.
double pilot_gradient_bound(const FederationConfig& config, const FederatedDataset& dataset);

}  // namespace dpfed
