#include "dpfed/core_math.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace dpfed {

namespace {

void require_dim(const ParamVector& theta, const ClientShard& shard) {
  if (theta.size() != shard.dim()) {
    throw ConfigError(fmt::format("parameter dimension {} does not match shard {} dimension {}",
                                  theta.size(), shard.client_id, shard.dim()));
  }
}

void require_finite(const ParamVector& v, const char* what) {
  if (!all_finite(v)) {
    throw DivergenceError(fmt::format("{} contains non-finite values", what));
  }
}

// Stacks every shard in ascending client order.
struct Pooled {
  Matrix features;
  Eigen::VectorXd targets;
};

Pooled pool(std::span<const ClientShard> shards) {
  if (shards.empty()) {
    throw ConfigError("dataset has no shards");
  }
  Eigen::Index rows = 0;
  const Eigen::Index cols = shards.front().dim();
  for (const auto& s : shards) {
    if (s.dim() != cols) {
      throw ConfigError("shards disagree on feature dimension");
    }
    rows += static_cast<Eigen::Index>(s.size());
  }
  Pooled out{Matrix(rows, cols), Eigen::VectorXd(rows)};
  Eigen::Index at = 0;
  for (const auto& s : shards) {
    const auto n = static_cast<Eigen::Index>(s.size());
    out.features.middleRows(at, n) = s.features;
    out.targets.segment(at, n) = s.targets;
    at += n;
  }
  return out;
}

double mse(const Matrix& x, const Eigen::VectorXd& y, const ParamVector& theta) {
  const Eigen::VectorXd residual = x * theta - y;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < residual.size(); ++i) {
    sum += residual[i] * residual[i];
  }
  return sum / static_cast<double>(residual.size());
}

LeastSquaresSolution solve_min_norm(const Matrix& x, const Eigen::VectorXd& y) {
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(x);
  LeastSquaresSolution out;
  out.theta = cod.solve(y);
  out.loss = mse(x, y, out.theta);
  return out;
}

}  // namespace

std::string to_string(NormKind kind) { return kind == NormKind::L1 ? "l1" : "l2"; }

NormKind parse_norm_kind(const std::string& text) {
  if (text == "l1" || text == "L1") return NormKind::L1;
  if (text == "l2" || text == "L2") return NormKind::L2;
  throw ConfigError(fmt::format("unknown norm '{}' (expected l1 or l2)", text));
}

ClientShard make_shard(int client_id, Matrix features, Eigen::VectorXd targets) {
  if (targets.size() < 1) {
    throw ConfigError(fmt::format("shard {} is empty", client_id));
  }
  if (features.rows() != targets.size()) {
    throw ConfigError(fmt::format("shard {} has {} feature rows but {} targets", client_id,
                                  features.rows(), targets.size()));
  }
  if (!features.allFinite() || !targets.allFinite()) {
    throw ConfigError(fmt::format("shard {} contains non-finite values", client_id));
  }
  return ClientShard{client_id, std::move(features), std::move(targets)};
}

double norm(const ParamVector& v, NormKind kind) {
  double acc = 0.0;
  if (kind == NormKind::L1) {
    for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::abs(v[i]);
    return acc;
  }
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += v[i] * v[i];
  return std::sqrt(acc);
}

bool all_finite(const ParamVector& v) { return v.allFinite(); }

double mse_loss(const ParamVector& theta, const ClientShard& shard) {
  require_dim(theta, shard);
  require_finite(theta, "theta");
  return mse(shard.features, shard.targets, theta);
}

ParamVector mse_gradient(const ParamVector& theta, const ClientShard& shard) {
  require_dim(theta, shard);
  require_finite(theta, "theta");
  const Eigen::VectorXd residual = shard.features * theta - shard.targets;
  return (2.0 / static_cast<double>(shard.size())) * (shard.features.transpose() * residual);
}

ParamVector clip_gradient(const ParamVector& g, double zeta, NormKind norm_kind) {
  if (!(zeta > 0.0)) {
    throw ConfigError(fmt::format("clip threshold must be positive, got {}", zeta));
  }
  const double ratio = norm(g, norm_kind) / zeta;
  if (!(ratio > 1.0)) return g;
  ParamVector out = g / ratio;
  // Rounding can leave the norm an ulp above zeta; shrink until it is not,
  // so a second clip is a no-op.
  while (norm(out, norm_kind) > zeta) {
    out *= 1.0 - std::numeric_limits<double>::epsilon();
  }
  return out;
}

LeastSquaresSolution local_optimum(const ClientShard& shard) {
  return solve_min_norm(shard.features, shard.targets);
}

LeastSquaresSolution global_optimum(std::span<const ClientShard> shards) {
  const Pooled p = pool(shards);
  return solve_min_norm(p.features, p.targets);
}

double global_loss(const ParamVector& theta, std::span<const ClientShard> shards) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : shards) {
    total += mse_loss(theta, s) * static_cast<double>(s.size());
    n += s.size();
  }
  return total / static_cast<double>(n);
}

ParamVector global_gradient(const ParamVector& theta, std::span<const ClientShard> shards) {
  const Pooled p = pool(shards);
  if (theta.size() != p.features.cols()) {
    throw ConfigError("parameter dimension does not match dataset");
  }
  const Eigen::VectorXd residual = p.features * theta - p.targets;
  return (2.0 / static_cast<double>(p.targets.size())) * (p.features.transpose() * residual);
}

HessianSpectrum hessian_spectrum(std::span<const ClientShard> shards) {
  const Pooled p = pool(shards);
  const Matrix hessian =
      (2.0 / static_cast<double>(p.targets.size())) * (p.features.transpose() * p.features);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(hessian, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("eigenvalue iteration for the pooled Hessian did not converge");
  }
  const auto& ev = solver.eigenvalues();  // ascending
  return {ev[0], ev[ev.size() - 1]};
}

ProblemConstants problem_constants(std::span<const ClientShard> shards,
                                   const ParamVector& theta_0,
                                   const ClipSpec& clip,
                                   std::optional<double> pilot_gradient_bound) {
  if (shards.empty()) {
    throw ConfigError("dataset has no shards");
  }
  if (theta_0.size() != shards.front().dim()) {
    throw ConfigError(fmt::format("theta_0 has dimension {}, dataset expects {}", theta_0.size(),
                                  shards.front().dim()));
  }

  ProblemConstants c;
  const HessianSpectrum spectrum = hessian_spectrum(shards);
  c.lambda = spectrum.max;
  c.mu = spectrum.min;
  c.assumptions_hold = c.mu > 1e-12 * std::max(1.0, c.lambda);

  const LeastSquaresSolution global = global_optimum(shards);
  c.theta_star = global.theta;
  c.f_star = global.loss;

  std::size_t n = 0;
  for (const auto& s : shards) n += s.size();
  double weighted_local = 0.0;
  for (const auto& s : shards) {
    weighted_local += static_cast<double>(s.size()) / static_cast<double>(n) * local_optimum(s).loss;
  }
  // f* minimises the weighted average, so any negative value is rounding.
  c.gamma_noniid = std::max(0.0, c.f_star - weighted_local);

  if (clip.active() && clip.norm == NormKind::L2) {
    c.g_bound = clip.zeta;
  } else if (pilot_gradient_bound) {
    c.g_bound = *pilot_gradient_bound;
  } else {
    throw ConfigError("gradient bound G needs a pilot-run estimate unless L2 clipping is active");
  }

  c.y0 = (theta_0 - c.theta_star).squaredNorm();
  return c;
}

}  // namespace dpfed
