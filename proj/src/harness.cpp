#include "dpfed/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "dpfed/rng.hpp"
#include "parallel.hpp"

namespace dpfed {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ParamVector initial_parameters(const std::vector<double>& spec, int p) {
  if (spec.empty()) return ParamVector::Zero(p);
  if (spec.size() == 1) return ParamVector::Constant(p, spec.front());
  if (static_cast<int>(spec.size()) != p) {
    throw ConfigError(fmt::format("[federation] theta0: expected 1 or {} values, got {}", p,
                                  spec.size()));
  }
  return Eigen::Map<const ParamVector>(spec.data(), p);
}

MechanismSpec resolve_mechanism(const DpSection& dp) {
  MechanismSpec m;
  m.kind = dp.mechanism;
  m.epsilon = dp.epsilon;
  m.delta = dp.delta;
  m.c2 = dp.c2;
  m.q = 1.0;
  const bool clipped = std::isfinite(dp.clip_threshold);
  const double scale = dp.strict_sensitivity ? 2.0 : 1.0;
  if (dp.xi1) {
    m.xi1 = *dp.xi1;
  } else if (clipped) {
    m.xi1 = scale * dp.clip_threshold;
  }
  if (dp.xi2) {
    m.xi2 = *dp.xi2;
  } else if (clipped) {
    m.xi2 = dp.clip_threshold;
  }
  if (m.kind == MechanismKind::Laplace && !(m.xi1 > 0.0)) {
    throw ConfigError("[dp] xi1: required when clipping is disabled");
  }
  if (m.kind == MechanismKind::Gaussian && !(m.xi2 > 0.0)) {
    throw ConfigError("[dp] xi2: required when clipping is disabled");
  }
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("[dp] {}", e.what()));
  }
  return m;
}

struct MeanStd {
  double mean = kNaN;
  double std = kNaN;
};

MeanStd mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {};
  // Shifted by the first value so identical repeats give a std of exactly 0.
  const double m = static_cast<double>(xs.size());
  const double shift = xs.front();
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double x : xs) {
    sum += x - shift;
    sum_sq += (x - shift) * (x - shift);
  }
  const double d = sum / m;
  return {shift + d, std::sqrt(std::max(0.0, sum_sq / m - d * d))};
}

RunSummary summarize(std::vector<std::uint64_t> seeds, std::vector<RunResult> runs) {
  RunSummary s;
  s.seeds = std::move(seeds);
  s.runs = std::move(runs);
  std::size_t longest = 0;
  for (const auto& r : s.runs) {
    longest = std::max(longest, r.rounds.size());
    if (r.diverged) ++s.diverged;
  }
  for (std::size_t t = 0; t < longest; ++t) {
    std::vector<double> losses;
    std::vector<double> ys;
    RoundStats st;
    for (const auto& r : s.runs) {
      if (r.rounds.size() <= t) continue;
      const auto& rec = r.rounds[t];
      st.t = rec.t;
      st.k = rec.k;
      st.eta_k = rec.eta_k;
      st.bound_y = rec.bound_y_k;
      losses.push_back(rec.global_loss);
      ys.push_back(rec.y_k);
    }
    const auto l = mean_std(losses);
    const auto y = mean_std(ys);
    st.mean_loss = l.mean;
    st.std_loss = l.std;
    st.mean_y = y.mean;
    st.std_y = y.std;
    st.runs = static_cast<int>(losses.size());
    s.rounds.push_back(st);
  }
  std::vector<double> final_loss;
  std::vector<double> final_y;
  for (const auto& r : s.runs) {
    if (r.diverged || r.rounds.empty()) continue;
    final_loss.push_back(r.rounds.back().global_loss);
    final_y.push_back(r.rounds.back().y_k);
  }
  const auto fl = mean_std(final_loss);
  s.mean_final_loss = fl.mean;
  s.std_final_loss = fl.std;
  s.mean_final_y = mean_std(final_y).mean;
  return s;
}

RunResult run_one(const Experiment& ex, std::uint64_t seed) {
  FederationConfig cfg = ex.federation;
  cfg.seed = seed;
  RunOptions opts;
  opts.theta_star = ex.constants.theta_star;
  opts.bound = ex.bound;
  opts.y0 = ex.constants.y0;
  return run_federation(cfg, ex.dataset, opts);
}

void apply_overrides(ExperimentConfig& config, const CommandOptions& options) {
  if (options.seed) config.federation.seed = *options.seed;
  if (options.repeats) {
    if (*options.repeats < 1) throw ConfigError("--repeats must be at least 1");
    config.federation.repeats = *options.repeats;
  }
  if (options.threads) {
    if (*options.threads < 1) throw ConfigError("--threads must be at least 1");
    config.federation.threads = *options.threads;
  }
  if (options.out_dir) config.output.dir = options.out_dir->string();
  if (config.data.source == DataSource::Csv) {
    std::filesystem::path p(config.data.path);
    if (p.is_relative()) config.data.path = (options.config.parent_path() / p).string();
  }
}

std::ofstream open_output(const std::filesystem::path& dir, const std::string& name) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", (dir / name).string()));
  return out;
}

template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitValidation;
  } catch (const IoError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitIo;
  } catch (const DivergenceError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitDiverged;
  }
}

std::string rate_verdict(double exponent) {
  if (exponent < 0.0) return fmt::format("converges to 0 at rate O(T^{})", format_real(exponent));
  if (exponent == 0.0) return "converges to O(1)";
  return fmt::format("diverges at rate O(T^{})", format_real(exponent));
}

}  // namespace

std::string format_real(double v) {
  if (std::isnan(v)) return {};
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

FederatedDataset build_dataset(const ExperimentConfig& config) {
  const auto& d = config.data;
  if (d.source == DataSource::Synthetic) {
    SynthSpec spec;
    spec.clients = config.federation.clients;
    spec.samples_per_client = d.samples_per_client;
    spec.features = d.features;
    spec.heterogeneity = d.heterogeneity;
    spec.noise_std = d.noise_std;
    spec.seed = d.seed;
    spec.bias = d.bias;
    return synth_regression(spec);
  }
  const CsvSplit split =
      load_csv(d.path, d.target_column, d.feature_columns, d.train_fraction, d.split_seed);
  if (d.partition == PartitionKind::Random) {
    return random_partition(split.train, config.federation.clients, d.split_seed, d.bias);
  }
  int key = kTargetSortKey;
  if (!d.sort_column.empty() && d.sort_column != d.target_column) {
    const auto& names = split.train.feature_names;
    const auto it = std::find(names.begin(), names.end(), d.sort_column);
    if (it == names.end()) {
      throw ConfigError(
          fmt::format("[data] sort_column: '{}' is neither the target nor a feature", d.sort_column));
    }
    key = static_cast<int>(it - names.begin());
  }
  return sorted_partition(split.train, key, config.federation.clients, d.bias);
}

Experiment prepare_experiment(const ExperimentConfig& config, const FederatedDataset* dataset) {
  Experiment ex;
  ex.config = config;
  ex.dataset = dataset ? *dataset : build_dataset(config);
  const auto& f = config.federation;
  if (ex.dataset.clients() != f.clients) {
    throw ConfigError(fmt::format("[federation] clients: {} configured but the data has {}",
                                  f.clients, ex.dataset.clients()));
  }
  if (f.total_iterations % f.local_iterations != 0) {
    throw ConfigError(fmt::format(
        "[federation] total_iterations: T={} is not a multiple of local_iterations E={}",
        f.total_iterations, f.local_iterations));
  }
  const int p = ex.dataset.param_dim();
  const int E = f.local_iterations;
  const int T_g = static_cast<int>(f.total_iterations / E);
  const ParamVector theta_0 = initial_parameters(f.theta0, p);

  const auto& sc = config.schedule;
  const HessianSpectrum spectrum = hessian_spectrum(ex.dataset.shards);
  const double mu = sc.mu.value_or(spectrum.min);
  const double lambda = sc.lambda.value_or(spectrum.max);
  const bool convex = mu > 1e-12 * std::max(1.0, lambda) && lambda >= mu;

  Schedule schedule;
  if (sc.kind == ScheduleKind::Theorem) {
    if (!convex) {
      throw ConfigError(fmt::format(
          "[schedule] kind: theorem schedule needs 0 < mu <= lambda (mu={}, lambda={}); "
          "use kind = constant or override mu",
          mu, lambda));
    }
    schedule = Schedule::theorem(mu, schedule_gamma(lambda, mu, E));
  } else {
    schedule = Schedule::constant(sc.eta);
  }

  FederationConfig& fc = ex.federation;
  fc.N = f.clients;
  fc.b = f.pool;
  fc.E = E;
  fc.T_g = T_g;
  fc.schedule = schedule;
  fc.clip = ClipSpec{config.dp.clip_threshold, config.dp.clip_norm};
  fc.mechanism = resolve_mechanism(config.dp);
  fc.theta_0 = theta_0;
  fc.seed = f.seed;
  fc.repeats = f.repeats;
  fc.validate(ex.dataset);

  std::optional<double> g = sc.g_bound;
  if (!g && !(fc.clip.active() && fc.clip.norm == NormKind::L2)) {
    g = pilot_gradient_bound(fc, ex.dataset);
  }
  ex.constants = problem_constants(ex.dataset.shards, theta_0, fc.clip, g);
  if (sc.g_bound) ex.constants.g_bound = *sc.g_bound;
  ex.constants.mu = mu;
  ex.constants.lambda = lambda;
  if (sc.gamma_noniid) ex.constants.gamma_noniid = *sc.gamma_noniid;
  ex.constants.assumptions_hold = convex;

  if (!convex) {
    ex.warnings.push_back("pooled Hessian is singular: assumptions violated, bound disabled");
  } else if (sc.kind == ScheduleKind::Theorem) {
    ex.bound = make_bound_params(ex.constants, fc.mechanism, p, E, T_g, fc.N, fc.b);
  }
  if (gaussian_budget_warning(noise_context(fc, ex.dataset, 0), fc.mechanism)) {
    ex.warnings.push_back(fmt::format(
        "epsilon={} is large relative to q^2 T_l={}; the Gaussian calibration may not apply",
        fc.mechanism.epsilon, fc.rounds_per_client()));
  }
  return ex;
}

RunSummary run_repeats(const Experiment& experiment, std::uint64_t seed, int repeats, int threads) {
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(repeats));
  for (int r = 0; r < repeats; ++r) seeds[static_cast<std::size_t>(r)] = seed + static_cast<std::uint64_t>(r);
  std::vector<RunResult> runs(seeds.size());
  detail::parallel_for(repeats, threads, [&](int r) {
    runs[static_cast<std::size_t>(r)] = run_one(experiment, seeds[static_cast<std::size_t>(r)]);
  });
  return summarize(std::move(seeds), std::move(runs));
}

void write_rounds_csv(std::ostream& out, const RunSummary& summary) {
  out << "run_id,seed,t,k,eta_k,global_loss,y_k,bound_y_k,noise_l2\n";
  for (std::size_t r = 0; r < summary.runs.size(); ++r) {
    for (const auto& rec : summary.runs[r].rounds) {
      out << r << ',' << summary.seeds[r] << ',' << rec.t << ',' << rec.k << ','
          << format_real(rec.eta_k) << ',' << format_real(rec.global_loss) << ','
          << format_real(rec.y_k) << ',' << format_real(rec.bound_y_k) << ','
          << format_real(rec.noise_l2) << '\n';
    }
  }
}

void write_summary_csv(std::ostream& out, const RunSummary& summary) {
  out << "t,k,eta_k,runs,mean_loss,std_loss,mean_y,std_y,bound_y_k\n";
  for (const auto& s : summary.rounds) {
    out << s.t << ',' << s.k << ',' << format_real(s.eta_k) << ',' << s.runs << ','
        << format_real(s.mean_loss) << ',' << format_real(s.std_loss) << ','
        << format_real(s.mean_y) << ',' << format_real(s.std_y) << ',' << format_real(s.bound_y)
        << '\n';
  }
}

double e_rule_exponent(const std::string& label) {
  if (label == "1") return 0.0;
  if (label == "T^1/3") return 1.0 / 3.0;
  if (label == "T^1/2") return 0.5;
  if (label == "T^2/3") return 2.0 / 3.0;
  if (label == "T") return 1.0;
  throw ConfigError(fmt::format(
      "[sweep] values: unknown E rule '{}' (expected 1, T^1/3, T^1/2, T^2/3 or T)", label));
}

std::vector<SweepPoint> expand_sweep(const ExperimentConfig& config) {
  if (!config.sweep) throw ConfigError("sweep file needs a [sweep] section");
  const auto& sw = *config.sweep;
  std::vector<SweepPoint> points;
  for (const auto& value : sw.values) {
    SweepPoint pt;
    pt.label = value;
    pt.config = config;
    pt.config.sweep.reset();
    auto& f = pt.config.federation;
    auto parse_int = [&](const std::string& v) {
      long out = 0;
      const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
      if (ec != std::errc() || ptr != v.data() + v.size() || out < 1) {
        throw ConfigError(fmt::format("[sweep] values: '{}' is not a positive integer", v));
      }
      return out;
    };
    switch (sw.axis) {
      case SweepAxis::T: f.total_iterations = parse_int(value); break;
      case SweepAxis::E: f.local_iterations = static_cast<int>(parse_int(value)); break;
      case SweepAxis::ERule: {
        const long T = f.total_iterations;
        f.local_iterations =
            static_cast<int>(nearest_divisor(T, rounded_power(T, e_rule_exponent(value))));
        break;
      }
      case SweepAxis::Epsilon: {
        double eps = 0.0;
        if (value == "inf") {
          eps = std::numeric_limits<double>::infinity();
        } else {
          const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), eps);
          if (ec != std::errc() || ptr != value.data() + value.size() || !(eps > 0.0)) {
            throw ConfigError(fmt::format("[sweep] values: '{}' is not a positive epsilon", value));
          }
        }
        if (std::isinf(eps)) {
          pt.config.dp.mechanism = MechanismKind::None;
        } else if (pt.config.dp.mechanism == MechanismKind::None) {
          throw ConfigError("[sweep] values: finite epsilon needs [dp] mechanism to be set");
        }
        pt.config.dp.epsilon = eps;
        break;
      }
    }
    if (f.total_iterations % f.local_iterations != 0) {
      throw ConfigError(fmt::format("[sweep] values: at '{}', E={} does not divide T={}", value,
                                    f.local_iterations, f.total_iterations));
    }
    pt.E = f.local_iterations;
    pt.T = f.total_iterations;
    points.push_back(std::move(pt));
  }
  return points;
}

SweepResult run_sweep(const ExperimentConfig& config, int threads) {
  SweepResult result;
  result.axis = config.sweep ? config.sweep->axis : SweepAxis::T;
  result.points = expand_sweep(config);

  const FederatedDataset dataset = build_dataset(config);
  std::vector<Experiment> experiments;
  experiments.reserve(result.points.size());
  for (const auto& pt : result.points) {
    try {
      experiments.push_back(prepare_experiment(pt.config, &dataset));
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("[sweep] at '{}': {}", pt.label, e.what()));
    }
  }

  const int repeats = config.federation.repeats;
  const auto seed = config.federation.seed;
  const int jobs = static_cast<int>(experiments.size()) * repeats;
  std::vector<RunResult> runs(static_cast<std::size_t>(jobs));
  detail::parallel_for(jobs, threads, [&](int j) {
    const auto& ex = experiments[static_cast<std::size_t>(j / repeats)];
    runs[static_cast<std::size_t>(j)] = run_one(ex, seed + static_cast<std::uint64_t>(j % repeats));
  });

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    std::vector<std::uint64_t> seeds;
    std::vector<RunResult> mine;
    for (int r = 0; r < repeats; ++r) {
      seeds.push_back(seed + static_cast<std::uint64_t>(r));
      mine.push_back(std::move(runs[i * static_cast<std::size_t>(repeats) + static_cast<std::size_t>(r)]));
    }
    const RunSummary s = summarize(std::move(seeds), std::move(mine));
    auto& pt = result.points[i];
    pt.mean_final_loss = s.mean_final_loss;
    pt.std_final_loss = s.std_final_loss;
    pt.mean_final_y = s.mean_final_y;
    pt.diverged_runs = s.diverged;
    if (pt.mean_final_loss < best) {
      best = pt.mean_final_loss;
      result.argmin = i;
    }
  }
  return result;
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  out << "axis,value,mean_final_loss,std_final_loss,mean_final_y,diverged_runs\n";
  for (const auto& pt : result.points) {
    out << to_string(result.axis) << ',' << pt.label << ',' << format_real(pt.mean_final_loss)
        << ',' << format_real(pt.std_final_loss) << ',' << format_real(pt.mean_final_y) << ','
        << pt.diverged_runs << '\n';
  }
}

PlanReport make_plan(const Experiment& ex) {
  const auto& fc = ex.federation;
  const auto& spec = fc.mechanism;
  const int p = ex.dataset.param_dim();

  PlanReport plan;
  plan.mechanism = spec.kind;
  plan.z = spec.kind == MechanismKind::None ? 0.0 : asymptotic_z(spec.kind);
  plan.rate_exponent = rate_exponent(plan.z);
  plan.rate_verdict = rate_verdict(plan.rate_exponent);
  plan.T = fc.total_iterations();
  plan.raw_e_star = raw_optimal_local_iterations(plan.T, plan.z);
  plan.e_star = optimal_local_iterations(plan.T, plan.z);

  const NoiseContext ctx = noise_context(fc, ex.dataset, 0);
  if (spec.kind == MechanismKind::Laplace) plan.laplace_scale = laplace_scale(ctx, spec);
  if (spec.kind == MechanismKind::Gaussian) plan.gaussian_sigma = gaussian_sigma(ctx, spec);
  plan.noise_std = noise_coordinate_std(ctx, spec);
  plan.variance_exact = noise_item_variance(spec, ctx, VarianceMode::Exact);
  plan.variance_doubled = noise_item_variance(spec, ctx, VarianceMode::Doubled);

  const BoundParams bp =
      make_bound_params(ex.constants, spec, p, fc.E, fc.T_g, fc.N, fc.b);
  plan.c_m = bp.c_m;
  plan.omega0 = bp.omega0;
  plan.omega1 = bp.omega1;
  plan.constants = ex.constants;
  plan.gamma = bp.gamma;
  plan.warnings = ex.warnings;

  if (ex.bound) {
    plan.bound_available = true;
    for (int j = 1; j <= fc.T_g; ++j) {
      const long k = static_cast<long>(j) * fc.E;
      plan.bound_curve.push_back({k, convergence_bound(k, *ex.bound, ex.constants.y0)});
    }
    std::vector<long> grid;
    for (long j = 1; j <= 4L * fc.T_g; ++j) grid.push_back(j * fc.E);
    const auto search =
        search_optimal_total_iterations(ex.constants, spec, p, fc.E, fc.N, fc.b, grid);
    plan.t_star = search.best;
  }
  return plan;
}

void write_plan(std::ostream& out, const PlanReport& plan) {
  auto kv = [&](const std::string& key, const std::string& value) {
    fmt::print(out, "{}: {}\n", key, value);
  };
  const auto& c = plan.constants;
  kv("mechanism", to_string(plan.mechanism));
  kv("mu", format_real(c.mu));
  kv("lambda", format_real(c.lambda));
  kv("g_bound", format_real(c.g_bound));
  kv("gamma_noniid", format_real(c.gamma_noniid));
  kv("f_star", format_real(c.f_star));
  kv("y0", format_real(c.y0));
  kv("assumptions", c.assumptions_hold ? "hold" : "violated");
  kv("z", format_real(plan.z));
  kv("rate_exponent", format_real(plan.rate_exponent));
  kv("rate", plan.rate_verdict);
  kv("T", std::to_string(plan.T));
  kv("E_star_raw", std::to_string(plan.raw_e_star));
  kv("E_star", std::to_string(plan.e_star));
  if (plan.mechanism != MechanismKind::None) {
    if (plan.mechanism == MechanismKind::Laplace) kv("laplace_scale", format_real(plan.laplace_scale));
    if (plan.mechanism == MechanismKind::Gaussian) kv("gaussian_sigma", format_real(plan.gaussian_sigma));
    kv("noise_coordinate_std", format_real(plan.noise_std));
    if (plan.mechanism == MechanismKind::Gaussian) {
      kv("noise_variance_exact", format_real(plan.variance_exact));
      kv("noise_variance_doubled", format_real(plan.variance_doubled));
    } else {
      kv("noise_variance", format_real(plan.variance_exact));
    }
    kv("C_M", format_real(plan.c_m));
  }
  kv("omega0", format_real(plan.omega0));
  kv("omega1", format_real(plan.omega1));
  kv("gamma", format_real(plan.gamma));
  if (plan.bound_available) {
    if (plan.t_star) {
      kv("T_star", fmt::format("{} (bound {})", plan.t_star->T, format_real(plan.t_star->bound)));
    }
    out << "bound_curve:\n";
    for (const auto& pt : plan.bound_curve) {
      fmt::print(out, "  k={} bound={}\n", pt.T, format_real(pt.bound));
    }
  } else {
    kv("bound", "unavailable (needs the theorem schedule and mu > 0)");
  }
  for (const auto& w : plan.warnings) kv("warning", w);
}

ValidationReport validate_noise(const Experiment& ex, long draws, std::uint64_t seed) {
  if (draws < 10'000) {
    throw ConfigError(fmt::format("--draws must be at least 10000, got {}", draws));
  }
  const auto& fc = ex.federation;
  const auto& spec = fc.mechanism;
  ValidationReport rep;
  rep.mechanism = spec.kind;
  rep.draws = draws;
  rep.tolerance = draws >= 1'000'000 ? 0.01 : 0.05;
  rep.gate_mode = spec.kind == MechanismKind::Gaussian ? ex.config.dp.variance_mode
                                                        : VarianceMode::Exact;
  if (spec.kind == MechanismKind::None) {
    rep.passed = true;
    return rep;
  }

  const NoiseContext ctx = noise_context(fc, ex.dataset, 0);
  rep.predicted_exact = noise_item_variance(spec, ctx, VarianceMode::Exact);
  rep.predicted_doubled = noise_item_variance(spec, ctx, VarianceMode::Doubled);

  std::vector<RandomStream> streams;
  streams.reserve(static_cast<std::size_t>(fc.N));
  for (int l = 0; l < fc.N; ++l) {
    streams.emplace_back(StreamTag::Validation, seed, static_cast<std::uint64_t>(l));
  }
  const int cycle = fc.N / fc.b;
  const double scale = static_cast<double>(fc.N) / static_cast<double>(fc.b);
  const double n = static_cast<double>(ex.dataset.n);
  double sum = 0.0;
  double sum_sq = 0.0;
  ParamVector w(ctx.p);
  ParamVector draw(ctx.p);
  for (long j = 0; j < draws; ++j) {
    const int t = static_cast<int>(j % cycle);
    w.setZero();
    for (int i = 0; i < fc.b; ++i) {
      const int l = t * fc.b + i;
      const double weight = scale * static_cast<double>(ex.dataset.shards[static_cast<std::size_t>(l)].size()) / n;
      sample_noise_into(spec, ctx, streams[static_cast<std::size_t>(l)], draw);
      w += weight * draw;
    }
    const double sq = w.squaredNorm();
    sum += sq;
    sum_sq += sq * sq;
  }
  const double d = static_cast<double>(draws);
  rep.empirical = sum / d;
  const double var = std::max(0.0, sum_sq / d - rep.empirical * rep.empirical);
  rep.standard_error = std::sqrt(var / d);
  const double predicted =
      rep.gate_mode == VarianceMode::Exact ? rep.predicted_exact : rep.predicted_doubled;
  rep.relative_error = std::abs(rep.empirical / predicted - 1.0);
  rep.passed = rep.relative_error <= rep.tolerance;
  return rep;
}

void write_validation(std::ostream& out, const ValidationReport& r) {
  auto kv = [&](const std::string& key, const std::string& value) {
    fmt::print(out, "{}: {}\n", key, value);
  };
  kv("mechanism", to_string(r.mechanism));
  kv("draws", std::to_string(r.draws));
  kv("empirical", format_real(r.empirical));
  kv("standard_error", format_real(r.standard_error));
  kv("predicted_exact", format_real(r.predicted_exact));
  kv("predicted_doubled", format_real(r.predicted_doubled));
  if (r.mechanism != MechanismKind::None) {
    kv("ratio_exact", format_real(r.empirical / r.predicted_exact));
    kv("ratio_doubled", format_real(r.empirical / r.predicted_doubled));
  }
  kv("gate_mode", to_string(r.gate_mode));
  kv("relative_error", format_real(r.relative_error));
  kv("tolerance", format_real(r.tolerance));
  kv("result", r.passed ? "PASS" : "FAIL");
}

std::vector<ParamVector> centralized_gd_oracle(const FederatedDataset& dataset, long T,
                                               const Schedule& schedule, const ClipSpec& clip,
                                               const ParamVector& theta_0) {
  Eigen::Index rows = 0;
  for (const auto& s : dataset.shards) rows += static_cast<Eigen::Index>(s.size());
  Matrix x(rows, theta_0.size());
  Eigen::VectorXd y(rows);
  Eigen::Index at = 0;
  for (const auto& s : dataset.shards) {
    x.middleRows(at, s.features.rows()) = s.features;
    y.segment(at, s.targets.size()) = s.targets;
    at += s.features.rows();
  }
  std::vector<ParamVector> path;
  path.reserve(static_cast<std::size_t>(T) + 1);
  path.push_back(theta_0);
  ParamVector theta = theta_0;
  for (long k = 0; k < T; ++k) {
    const ParamVector g = (2.0 / static_cast<double>(rows)) * (x.transpose() * (x * theta - y));
    theta -= schedule.rate(k) * clip_gradient(g, clip);
    path.push_back(theta);
  }
  return path;
}

int cmd_run(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig config = load_config(options.config);
    apply_overrides(config, options);
    const Experiment ex = prepare_experiment(config);
    if (!options.quiet) {
      for (const auto& w : ex.warnings) fmt::print(err, "warning: {}\n", w);
    }
    const auto& f = config.federation;
    const RunSummary summary = run_repeats(ex, f.seed, f.repeats, f.threads);
    const std::filesystem::path dir(config.output.dir);
    {
      auto file = open_output(dir, config.output.rounds_file);
      write_rounds_csv(file, summary);
    }
    {
      auto file = open_output(dir, config.output.summary_file);
      write_summary_csv(file, summary);
    }
    if (!options.quiet) {
      fmt::print(out, "repeats: {} (diverged {})\n", f.repeats, summary.diverged);
      fmt::print(out, "final mean loss: {}\n", format_real(summary.mean_final_loss));
      fmt::print(out, "final mean y: {}\n", format_real(summary.mean_final_y));
      fmt::print(out, "wrote {} and {}\n", (dir / config.output.rounds_file).string(),
                 (dir / config.output.summary_file).string());
    }
    return summary.diverged == f.repeats ? kExitDiverged : kExitOk;
  });
}

int cmd_sweep(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig config = load_config(options.config, /*allow_sweep=*/true);
    apply_overrides(config, options);
    const SweepResult result = run_sweep(config, config.federation.threads);
    const std::filesystem::path dir(config.output.dir);
    {
      auto file = open_output(dir, config.output.sweep_file);
      write_sweep_csv(file, result);
    }
    if (!options.quiet) {
      for (std::size_t i = 0; i < result.points.size(); ++i) {
        const auto& pt = result.points[i];
        fmt::print(out, "{}={} (T={}, E={}): mean final loss {}{}\n", to_string(result.axis),
                   pt.label, pt.T, pt.E, format_real(pt.mean_final_loss),
                   i == result.argmin ? "  <- argmin" : "");
      }
      fmt::print(out, "wrote {}\n", (dir / config.output.sweep_file).string());
    }
    bool all_diverged = true;
    for (const auto& pt : result.points) {
      if (pt.diverged_runs < config.federation.repeats) all_diverged = false;
    }
    return all_diverged ? kExitDiverged : kExitOk;
  });
}

int cmd_plan(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig config = load_config(options.config);
    apply_overrides(config, options);
    const PlanReport plan = make_plan(prepare_experiment(config));
    write_plan(out, plan);
    if (options.out_dir) {
      auto file = open_output(config.output.dir, config.output.plan_file);
      write_plan(file, plan);
    }
    return kExitOk;
  });
}

int cmd_validate(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig config = load_config(options.config);
    apply_overrides(config, options);
    const Experiment ex = prepare_experiment(config);
    const ValidationReport report = validate_noise(ex, options.draws, config.federation.seed);
    write_validation(out, report);
    return report.passed ? kExitOk : kExitValidation;
  });
}

}  // namespace dpfed
