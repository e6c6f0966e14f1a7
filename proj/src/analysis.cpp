#include "dpfed/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace dpfed {

double schedule_gamma(double lambda, double mu, int E) {
  if (!(mu > 0.0)) {
    throw ConfigError("schedule offset needs mu > 0");
  }
  return std::max(8.0 * lambda / mu, static_cast<double>(E));
}

double omega0(double lambda, double gamma_noniid, int E, double g_bound, int N, int b) {
  if (b < 1 || b > N) {
    throw ConfigError(fmt::format("pool size {} outside [1, {}]", b, N));
  }
  const double g2 = g_bound * g_bound;
  const double drift = 8.0 * (E - 1.0) * (E - 1.0) * g2;
  const double sampling =
      b == N ? 0.0 : 4.0 * E * E * g2 * (N - b) / ((N - 1.0) * static_cast<double>(b));
  return 6.0 * lambda * gamma_noniid + drift + sampling;
}

double c_mechanism(const MechanismSpec& spec, int p, int b, int N) {
  const double eps2 = spec.epsilon * spec.epsilon;
  switch (spec.kind) {
    case MechanismKind::None: return 0.0;
    case MechanismKind::Laplace:
      return 8.0 * p * b * spec.xi1 * spec.xi1 / (static_cast<double>(N) * N * eps2);
    case MechanismKind::Gaussian:
      return 8.0 * p * spec.c2 * spec.c2 * std::log(1.0 / spec.delta) * spec.xi2 * spec.xi2 /
             (static_cast<double>(N) * eps2);
  }
  return 0.0;
}

BoundParams make_bound_params(const ProblemConstants& constants, const MechanismSpec& spec, int p,
                              int E, int T_g, int N, int b) {
  BoundParams bp;
  bp.constants = constants;
  bp.E = E;
  bp.T_g = T_g;
  bp.N = N;
  bp.b = b;
  bp.omega0 = omega0(constants.lambda, constants.gamma_noniid, E, constants.g_bound, N, b);
  bp.c_m = c_mechanism(spec, p, b, N);
  bp.z = spec.kind == MechanismKind::None ? 0.0 : asymptotic_z(spec.kind);
  bp.omega1 = bp.c_m * static_cast<double>(E) * E * std::pow(static_cast<double>(T_g), bp.z);
  if (constants.assumptions_hold) {
    bp.gamma = schedule_gamma(constants.lambda, constants.mu, E);
  }
  return bp;
}

double convergence_bound(long k, const BoundParams& bp, double y0) {
  if (!bp.constants.assumptions_hold) {
    throw ConfigError("convergence bound unavailable: strong convexity does not hold (mu <= 0)");
  }
  if (k < 0) throw ConfigError("iteration index must be non-negative");
  const double mu2 = bp.constants.mu * bp.constants.mu;
  const double kg = static_cast<double>(k) + bp.gamma;
  const double t = static_cast<double>(k / bp.E);
  const double head = (4.0 / mu2 * bp.omega0 + bp.gamma * y0) / kg;
  const double noise = bp.omega1 == 0.0 ? 0.0 : 4.0 / mu2 * t / ((kg - 1.0) * (kg - 1.0)) * bp.omega1;
  return head + noise;
}

long rounded_power(long T, double exponent) {
  if (T < 1) throw ConfigError("T must be at least 1");
  const long r = std::lround(std::pow(static_cast<double>(T), exponent));
  return std::clamp(r, 1L, T);
}

long nearest_divisor(long T, long target) {
  if (T < 1) throw ConfigError("T must be at least 1");
  long best = 1;
  long best_gap = std::numeric_limits<long>::max();
  for (long d = 1; d <= T; ++d) {
    if (T % d != 0) continue;
    const long gap = std::abs(d - target);
    if (gap < best_gap) {  // ascending scan keeps the smaller one on ties
      best = d;
      best_gap = gap;
    }
  }
  return best;
}

long raw_optimal_local_iterations(long T, double z) {
  checked_asymptotic_z(z);
  return rounded_power(T, z / (z + 1.0));
}

long optimal_local_iterations(long T, double z) {
  return nearest_divisor(T, raw_optimal_local_iterations(T, z));
}

double rate_exponent(double z) {
  checked_asymptotic_z(z);
  return (z - 1.0) / (z + 1.0);
}

TStarSearch search_optimal_total_iterations(const ProblemConstants& constants,
                                            const MechanismSpec& spec, int p, int E, int N, int b,
                                            std::span<const long> grid) {
  if (grid.empty()) throw ConfigError("T* search needs a non-empty grid");
  TStarSearch out;
  out.best.bound = std::numeric_limits<double>::infinity();
  for (long T : grid) {
    if (T < E || T % E != 0) {
      throw ConfigError(fmt::format("grid value T={} is not a positive multiple of E={}", T, E));
    }
    const auto bp = make_bound_params(constants, spec, p, E, static_cast<int>(T / E), N, b);
    const TStarPoint point{T, convergence_bound(T, bp, constants.y0)};
    out.curve.push_back(point);
    if (point.bound < out.best.bound) out.best = point;
  }
  return out;
}

}  // namespace dpfed
