#include "dpfed/federation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include <fmt/format.h>

#include "dpfed/rng.hpp"
#include "parallel.hpp"

namespace dpfed {

namespace {

constexpr double kDivergenceMagnitude = 1e12;

void check_bounded(const ParamVector& theta, const char* where) {
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (!std::isfinite(theta[i]) || std::abs(theta[i]) > kDivergenceMagnitude) {
      throw DivergenceError(fmt::format("{}: parameter {} = {} left the finite range", where, i,
                                        theta[i]));
    }
  }
}

}  // namespace

double lr_schedule(long k, double mu, double gamma) {
  return 2.0 / (mu * (static_cast<double>(k) + gamma));
}

double Schedule::rate(long k) const {
  return kind == ScheduleKind::Theorem ? lr_schedule(k, mu, gamma) : eta;
}

void Schedule::validate() const {
  if (kind == ScheduleKind::Theorem) {
    if (!(mu > 0.0)) throw ConfigError("theorem schedule needs mu > 0");
    if (!(gamma >= 1.0)) throw ConfigError("theorem schedule needs gamma >= 1");
  } else if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw ConfigError("constant schedule needs a finite eta > 0");
  }
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::Theorem ? "theorem" : "constant";
}

ScheduleKind parse_schedule_kind(const std::string& text) {
  if (text == "theorem") return ScheduleKind::Theorem;
  if (text == "constant") return ScheduleKind::Constant;
  throw ConfigError(fmt::format("unknown schedule '{}' (expected theorem or constant)", text));
}

void validate_pool_shape(int N, int b) {
  if (N < 1 || b < 1 || b > N) {
    throw ConfigError(fmt::format("pool size b={} must lie in [1, N={}]", b, N));
  }
  if (N % b != 0) {
    throw ConfigError(fmt::format("pool size b={} does not divide N={}", b, N));
  }
}

std::vector<int> select_pool(int t, int N, int b) {
  validate_pool_shape(N, b);
  std::vector<int> pool(static_cast<std::size_t>(b));
  const long start = static_cast<long>(t) * b;
  for (int i = 0; i < b; ++i) {
    pool[static_cast<std::size_t>(i)] = static_cast<int>((start + i) % N);
  }
  return pool;
}

ParamVector client_update_traced(const ParamVector& theta_in, const ClientShard& shard, int t,
                                 int E, const Schedule& schedule, const ClipSpec& clip,
                                 double& max_gradient_norm) {
  check_bounded(theta_in, "client input");
  ParamVector theta = theta_in;
  const long k0 = static_cast<long>(t) * E;
  for (int i = 0; i < E; ++i) {
    const ParamVector g = clip_gradient(mse_gradient(theta, shard), clip);
    max_gradient_norm = std::max(max_gradient_norm, norm(g, NormKind::L2));
    theta -= schedule.rate(k0 + i) * g;
    check_bounded(theta, "local step");
  }
  return theta;
}

ParamVector client_update(const ParamVector& theta_in, const ClientShard& shard, int t, int E,
                          const Schedule& schedule, const ClipSpec& clip) {
  double ignored = 0.0;
  return client_update_traced(theta_in, shard, t, E, schedule, clip, ignored);
}

ParamVector aggregate(std::span<const ClientParams> pool, int N, int b, double n) {
  if (pool.empty()) {
    throw ConfigError("cannot aggregate an empty pool");
  }
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t c) { return pool[a].client_id < pool[c].client_id; });

  const double scale = static_cast<double>(N) / static_cast<double>(b);
  ParamVector sum = ParamVector::Zero(pool.front().params.size());
  for (std::size_t i : order) {
    sum += (static_cast<double>(pool[i].samples) / n) * pool[i].params;
  }
  return scale * sum;
}

void FederationConfig::validate(const FederatedDataset& dataset) const {
  validate_pool_shape(N, b);
  if (E < 1 || T_g < 1) {
    throw ConfigError(fmt::format("need E >= 1 and T_g >= 1, got E={} T_g={}", E, T_g));
  }
  const int cycle = N / b;
  if (T_g % cycle != 0) {
    throw ConfigError(fmt::format(
        "T_g={} is not a multiple of the round-robin cycle N/b={}; clients would join unequal "
        "numbers of rounds",
        T_g, cycle));
  }
  if (dataset.clients() != N) {
    throw ConfigError(fmt::format("dataset has {} clients, config expects N={}", dataset.clients(), N));
  }
  if (theta_0.size() != dataset.param_dim()) {
    throw ConfigError(fmt::format("theta_0 has dimension {}, dataset expects {}", theta_0.size(),
                                  dataset.param_dim()));
  }
  if (!all_finite(theta_0)) throw ConfigError("theta_0 must be finite");
  if (clip.active() && !(clip.zeta > 0.0)) throw ConfigError("clip threshold must be positive");
  if (repeats < 1) throw ConfigError("repeats must be at least 1");
  schedule.validate();
  mechanism.validate();
}

NoiseContext noise_context(const FederationConfig& config, const FederatedDataset& dataset, int t) {
  NoiseContext ctx;
  ctx.p = dataset.param_dim();
  // The schedule never increases, so the round's first rate is its maximum.
  ctx.eta_tilde = config.schedule.rate(static_cast<long>(t) * config.E);
  ctx.E = config.E;
  ctx.T_g = config.T_g;
  ctx.T_l = config.rounds_per_client();
  ctx.b = config.b;
  ctx.N = config.N;
  ctx.n = static_cast<double>(dataset.n);
  ctx.n_bar_sq = dataset.n_bar_sq;
  return ctx;
}

RunResult run_federation(const FederationConfig& config, const FederatedDataset& dataset,
                         const RunOptions& options) {
  config.validate(dataset);
  const double n = static_cast<double>(dataset.n);

  RunResult result;
  result.rounds.reserve(static_cast<std::size_t>(config.T_g));
  ParamVector theta = config.theta_0;

  for (int t = 0; t < config.T_g; ++t) {
    const std::vector<int> pool = select_pool(t, config.N, config.b);
    const NoiseContext ctx = noise_context(config, dataset, t);
    std::vector<ClientOutcome> outcomes(pool.size());

    try {
      detail::parallel_for(static_cast<int>(pool.size()), options.threads, [&](int i) {
        const auto& shard = dataset.shards[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)])];
        ClientOutcome& out = outcomes[static_cast<std::size_t>(i)];
        out.client_id = shard.client_id;
        out.samples = shard.size();
        out.local = client_update(theta, shard, t, config.E, config.schedule, config.clip);
        RandomStream stream = noise_stream(config.seed, static_cast<std::uint64_t>(t),
                                           static_cast<std::uint64_t>(shard.client_id));
        out.noise = sample_noise(config.mechanism, ctx, stream);
      });
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.divergence_message = fmt::format("round {}: {}", t, e.what());
      break;
    }

    std::vector<ClientParams> noisy;
    std::vector<ClientParams> noise_only;
    noisy.reserve(outcomes.size());
    noise_only.reserve(outcomes.size());
    for (const auto& o : outcomes) {
      noisy.push_back({o.client_id, o.local + o.noise, o.samples});
      noise_only.push_back({o.client_id, o.noise, o.samples});
    }
    ParamVector next = aggregate(noisy, config.N, config.b, n);
    try {
      check_bounded(next, "aggregate");
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.divergence_message = fmt::format("round {}: {}", t, e.what());
      break;
    }

    if (options.observer) {
      options.observer(RoundTrace{t, theta, outcomes, next, ctx});
    }

    RoundRecord rec;
    rec.t = t;
    rec.k = static_cast<long>(t + 1) * config.E;
    rec.eta_k = ctx.eta_tilde;
    rec.global_loss = global_loss(next, dataset.shards);
    rec.y_k = options.theta_star ? (next - *options.theta_star).squaredNorm()
                                 : std::numeric_limits<double>::quiet_NaN();
    rec.bound_y_k = options.bound ? convergence_bound(rec.k, *options.bound, options.y0)
                                  : std::numeric_limits<double>::quiet_NaN();
    rec.noise_l2 = norm(aggregate(noise_only, config.N, config.b, n), NormKind::L2);
    result.rounds.push_back(rec);
    theta = std::move(next);
  }
  return result;
}

double pilot_gradient_bound(const FederationConfig& config, const FederatedDataset& dataset) {
  FederationConfig pilot = config;
  pilot.mechanism = no_mechanism();
  pilot.seed = 0;
  pilot.validate(dataset);

  double max_norm = 0.0;
  ParamVector theta = pilot.theta_0;
  const double n = static_cast<double>(dataset.n);
  try {
    for (int t = 0; t < pilot.T_g; ++t) {
      std::vector<ClientParams> locals;
      for (int id : select_pool(t, pilot.N, pilot.b)) {
        const auto& shard = dataset.shards[static_cast<std::size_t>(id)];
        locals.push_back({id,
                          client_update_traced(theta, shard, t, pilot.E, pilot.schedule,
                                               pilot.clip, max_norm),
                          shard.size()});
      }
      theta = aggregate(locals, pilot.N, pilot.b, n);
      check_bounded(theta, "pilot aggregate");
    }
  } catch (const DivergenceError&) {
    // A diverging pilot still reports the largest gradient it saw.
  }
  return max_norm;
}

}  // namespace dpfed
