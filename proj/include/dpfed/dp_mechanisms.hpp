#pragma once

// Noise calibration for client-side DP in federated averaging: per-round
// sensitivities, Laplace scale, Gaussian sigma, noise sampling, and closed
// forms for the variance of the aggregated noise item.

#include <limits>
#include <span>
#include <string>

#include "dpfed/core_math.hpp"
#include "dpfed/rng.hpp"

namespace dpfed {

enum class MechanismKind { None, Laplace, Gaussian };

std::string to_string(MechanismKind kind);
MechanismKind parse_mechanism_kind(const std::string& text);

struct MechanismSpec {
  MechanismKind kind = MechanismKind::None;
  double epsilon = std::numeric_limits<double>::infinity();
  double delta = 1e-4;  // Gaussian only
  double c2 = 1.0;      // Gaussian calibration constant
  double q = 1.0;       // per-client sampling probability; full batch
  double xi1 = 0.0;     // L1 gradient sensitivity
  double xi2 = 0.0;     // L2 gradient bound

  /// Throws ConfigError when the invariants for `kind` do not hold.
  void validate() const;
};

inline MechanismSpec no_mechanism() { return MechanismSpec{}; }

/// Everything the calibration needs to know about the current round and
/// federation shape.
struct NoiseContext {
  int p = 1;               // parameter dimension
  double eta_tilde = 0.0;  // largest learning rate within the round
  int E = 1;               // local iterations per round
  int T_l = 1;             // rounds each client participates in, b*T_g/N
  int T_g = 1;             // global iterations
  int b = 1;               // pool size
  int N = 1;               // population
  double n = 1.0;          // total samples
  double n_bar_sq = 1.0;   // (1/N) sum_l n_l^2

  void validate() const;
};

/// Xi_1 = eta_tilde * E * xi1
double sensitivity_l1(const NoiseContext& ctx, double xi1);
/// Xi_2 = eta_tilde * E * xi2
double sensitivity_l2(const NoiseContext& ctx, double xi2);

/// Per-coordinate Laplace scale T_l * Xi_1 / epsilon.
double laplace_scale(const NoiseContext& ctx, const MechanismSpec& spec);

/// sigma = c2 * q * sqrt(T_l * log(1/delta)) / epsilon. The per-coordinate
/// standard deviation of the noise is sigma * Xi_2.
double gaussian_sigma(const NoiseContext& ctx, const MechanismSpec& spec);

/// Per-coordinate standard deviation of one client's noise; 0 for None.
double noise_coordinate_std(const NoiseContext& ctx, const MechanismSpec& spec);

/// p i.i.d. noise coordinates for one client; exact zeros for None.
ParamVector sample_noise(const MechanismSpec& spec, const NoiseContext& ctx, RandomStream& stream);
/// sample_noise writing into `w` (resized to p), for hot loops.
void sample_noise_into(const MechanismSpec& spec, const NoiseContext& ctx, RandomStream& stream,
                       ParamVector& w);

enum class VarianceMode { Exact, Doubled };

std::string to_string(VarianceMode mode);
VarianceMode parse_variance_mode(const std::string& text);

/// Predicted E||w_t^b||_2^2 for the aggregated noise item under
/// round-robin pools.
///
/// Laplace: 2 p b Xi_1^2 T_g^2 nbar^2 / (n^2 eps^2) in both modes.
/// Gaussian, Doubled: 2 p c2^2 N log(1/delta) Xi_2^2 T_g nbar^2 / (n^2 eps^2).
/// Gaussian, Exact: the same without the leading factor 2, which is the
/// second moment of a sum of independent N(0, (sigma Xi_2)^2) coordinates.
double noise_item_variance(const MechanismSpec& spec, const NoiseContext& ctx, VarianceMode mode);

/// First-principles E||w_t^b||_2^2 for one specific pool:
/// p * s^2 * (N / (b n))^2 * sum_{l in pool} n_l^2, where s^2 is the
/// per-coordinate variance of one client's noise.
double pool_noise_variance(const MechanismSpec& spec, const NoiseContext& ctx,
                           std::span<const std::size_t> pool_sizes);

/// Growth exponent z of the noise-item variance in T_g: 2 for Laplace,
/// 1 for Gaussian. Throws for None.
double asymptotic_z(MechanismKind kind);

/// Rejects exponents outside [0, 2] for user-declared mechanisms.
double checked_asymptotic_z(double z);

/// True when epsilon is large relative to q^2 T_l, the regime in which the
/// Gaussian calibration's side condition (with an unknown constant) is in
/// doubt. Only used to emit a warning.
bool gaussian_budget_warning(const NoiseContext& ctx, const MechanismSpec& spec);

}  // namespace dpfed
