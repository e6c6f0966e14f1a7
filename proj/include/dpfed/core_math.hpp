#pragma once

// Loss, gradient, clipping and problem constants for linear regression
// under mean squared error.

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dpfed {

/// Model parameters. Dimension is fixed for the lifetime of a run.
using ParamVector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Invalid configuration or inconsistent inputs (dimension mismatch, bad
/// hyperparameter). Reported to CLI users as a validation error.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parameters left the finite range during optimisation.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NormKind { L1, L2 };

std::string to_string(NormKind kind);
NormKind parse_norm_kind(const std::string& text);

/// Gradient clipping rule g / max(1, ||g|| / zeta). An infinite threshold
/// disables clipping.
struct ClipSpec {
  double zeta = std::numeric_limits<double>::infinity();
  NormKind norm = NormKind::L2;

  bool active() const { return zeta < std::numeric_limits<double>::infinity(); }
};

/// One client's private data. The design matrix already carries the bias
/// column when the dataset was built with one, so features.cols() is the
/// parameter dimension.
struct ClientShard {
  int client_id = 0;
  Matrix features;          // n_l x p
  Eigen::VectorXd targets;  // n_l

  std::size_t size() const { return static_cast<std::size_t>(targets.size()); }
  Eigen::Index dim() const { return features.cols(); }
};

/// Builds a shard and checks its invariants (n_l >= 1, row counts agree,
/// all values finite).
ClientShard make_shard(int client_id, Matrix features, Eigen::VectorXd targets);

double norm(const ParamVector& v, NormKind kind);
bool all_finite(const ParamVector& v);

/// (1/n_l) * sum_i (x_i^T theta - y_i)^2
double mse_loss(const ParamVector& theta, const ClientShard& shard);

/// (2/n_l) * X^T (X theta - y)
ParamVector mse_gradient(const ParamVector& theta, const ClientShard& shard);

ParamVector clip_gradient(const ParamVector& g, double zeta, NormKind norm_kind);
inline ParamVector clip_gradient(const ParamVector& g, const ClipSpec& clip) {
  return clip.active() ? clip_gradient(g, clip.zeta, clip.norm) : g;
}

struct LeastSquaresSolution {
  ParamVector theta;
  double loss = 0.0;
};

/// Minimum-norm least-squares fit of a shard and its loss f_l*.
LeastSquaresSolution local_optimum(const ClientShard& shard);

/// Minimum-norm least-squares fit over the pooled data of every shard.
LeastSquaresSolution global_optimum(std::span<const ClientShard> shards);

/// Loss of theta over the pooled data: sum_l (n_l/n) f_l(theta).
double global_loss(const ParamVector& theta, std::span<const ClientShard> shards);

/// Gradient of the pooled loss, computed from the stacked design matrix.
ParamVector global_gradient(const ParamVector& theta, std::span<const ClientShard> shards);

struct ProblemConstants {
  double mu = 0.0;
  double lambda = 0.0;
  double g_bound = 0.0;
  double gamma_noniid = 0.0;
  double f_star = 0.0;
  ParamVector theta_star;
  double y0 = 0.0;
  /// False when the pooled Hessian is singular (mu <= 0). Bound
  /// computation is disabled in that case; simulation still works.
  bool assumptions_hold = true;
};

/// Extreme eigenvalues of the pooled Hessian (2/n) X^T X.
struct HessianSpectrum {
  double min = 0.0;
  double max = 0.0;
};
HessianSpectrum hessian_spectrum(std::span<const ClientShard> shards);

/// Computes mu, lambda, Gamma, f*, theta* and Y_0 for a dataset.
///
/// G is zeta under L2 clipping. Otherwise it must come from a noise-free
/// pilot run (`pilot_gradient_bound`); a ConfigError is raised if it is
/// missing.
ProblemConstants problem_constants(std::span<const ClientShard> shards,
                                   const ParamVector& theta_0,
                                   const ClipSpec& clip,
                                   std::optional<double> pilot_gradient_bound = std::nullopt);

}  // namespace dpfed
