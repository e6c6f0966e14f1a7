#pragma once

// Convergence bound for DP-FedAvg under the decaying schedule, its
// constants, and the planner rules for local iterations and T*.

#include <span>
#include <vector>

#include "dpfed/core_math.hpp"
#include "dpfed/dp_mechanisms.hpp"

namespace dpfed {

struct BoundParams {
  ProblemConstants constants;
  double omega0 = 0.0;
  double omega1 = 0.0;
  double c_m = 0.0;
  double z = 0.0;
  double gamma = 1.0;
  int E = 1;
  int T_g = 1;
  int N = 1;
  int b = 1;
};

/// gamma = max(8 lambda / mu, E), the offset of the decaying schedule.
double schedule_gamma(double lambda, double mu, int E);

/// 6 lambda Gamma + 8 (E-1)^2 G^2 + 4 E^2 G^2 (N-b) / ((N-1) b).
/// The sampling term is zero when b = N (including N = 1).
double omega0(double lambda, double gamma_noniid, int E, double g_bound, int N, int b);

/// Mechanism constant C_M: 8 p b xi1^2 / (N^2 eps^2) for Laplace,
/// 8 p c2^2 log(1/delta) xi2^2 / (N eps^2) for Gaussian, 0 for None.
double c_mechanism(const MechanismSpec& spec, int p, int b, int N);

/// Assembles omega0, omega1 = C_M E^2 T_g^z and gamma for a federation.
BoundParams make_bound_params(const ProblemConstants& constants, const MechanismSpec& spec, int p,
                              int E, int T_g, int N, int b);

/// Y_k <= (1/(k+gamma)) ((4/mu^2) omega0 + gamma Y_0)
///        + (4/mu^2) (t / (k+gamma-1)^2) omega1,   t = floor(k/E).
/// Throws ConfigError when the problem constants violate the assumptions.
double convergence_bound(long k, const BoundParams& bp, double y0);

/// round(T^a) clamped to [1, T], before divisor adjustment.
long rounded_power(long T, double exponent);

/// Divisor of T closest to target; ties go to the smaller divisor.
long nearest_divisor(long T, long target);

/// round(T^{z/(z+1)}) clamped to [1, T], before divisor adjustment.
long raw_optimal_local_iterations(long T, double z);

/// E* for a total iteration budget T, adjusted to the nearest divisor of T
/// so that T_g = T / E is an integer.
long optimal_local_iterations(long T, double z);

/// (z - 1) / (z + 1): negative converges, zero plateaus, positive diverges.
double rate_exponent(double z);

struct TStarPoint {
  long T = 0;
  double bound = 0.0;
};

struct TStarSearch {
  std::vector<TStarPoint> curve;
  TStarPoint best;
};

/// Grid search of the final-iterate bound over total iteration counts T
/// (each a multiple of E, with T_g = T / E).
TStarSearch search_optimal_total_iterations(const ProblemConstants& constants,
                                            const MechanismSpec& spec, int p, int E, int N, int b,
                                            std::span<const long> grid);

}  // namespace dpfed
