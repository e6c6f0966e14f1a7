#include "dpfed/dp_mechanisms.hpp"

#include <cmath>

#include <fmt/format.h>

namespace dpfed {

namespace {

void require_kind(const MechanismSpec& spec, MechanismKind kind, const char* op) {
  if (spec.kind != kind) {
    throw ConfigError(fmt::format("{} requires the {} mechanism, got {}", op, to_string(kind),
                                  to_string(spec.kind)));
  }
}

double per_coordinate_variance(const NoiseContext& ctx, const MechanismSpec& spec) {
  const double s = noise_coordinate_std(ctx, spec);
  return s * s;
}

}  // namespace

std::string to_string(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::None: return "none";
    case MechanismKind::Laplace: return "laplace";
    case MechanismKind::Gaussian: return "gaussian";
  }
  return "unknown";
}

MechanismKind parse_mechanism_kind(const std::string& text) {
  if (text == "none") return MechanismKind::None;
  if (text == "laplace") return MechanismKind::Laplace;
  if (text == "gaussian") return MechanismKind::Gaussian;
  throw ConfigError(fmt::format("unknown mechanism '{}' (expected none, laplace or gaussian)", text));
}

std::string to_string(VarianceMode mode) { return mode == VarianceMode::Exact ? "exact" : "doubled"; }

VarianceMode parse_variance_mode(const std::string& text) {
  if (text == "exact") return VarianceMode::Exact;
  if (text == "doubled") return VarianceMode::Doubled;
  throw ConfigError(fmt::format("unknown variance mode '{}' (expected exact or doubled)", text));
}

void MechanismSpec::validate() const {
  const bool infinite = std::isinf(epsilon) && epsilon > 0.0;
  if ((kind == MechanismKind::None) != infinite) {
    throw ConfigError("epsilon must be infinite exactly when the mechanism is none");
  }
  if (kind == MechanismKind::None) return;
  if (!(epsilon > 0.0)) {
    throw ConfigError(fmt::format("epsilon must be positive, got {}", epsilon));
  }
  if (!(q > 0.0 && q <= 1.0)) {
    throw ConfigError(fmt::format("sampling probability q must lie in (0, 1], got {}", q));
  }
  if (kind == MechanismKind::Laplace && !(xi1 > 0.0)) {
    throw ConfigError("laplace mechanism needs xi1 > 0");
  }
  if (kind == MechanismKind::Gaussian) {
    if (!(delta > 0.0 && delta < 1.0)) {
      throw ConfigError(fmt::format("delta must lie in (0, 1), got {}", delta));
    }
    if (!(c2 > 0.0)) throw ConfigError("gaussian mechanism needs c2 > 0");
    if (!(xi2 > 0.0)) throw ConfigError("gaussian mechanism needs xi2 > 0");
  }
}

void NoiseContext::validate() const {
  if (p < 1 || E < 1 || T_g < 1 || T_l < 1 || b < 1 || N < 1 || b > N) {
    throw ConfigError("noise context needs p, E, T_g, T_l >= 1 and 1 <= b <= N");
  }
  if (!(eta_tilde > 0.0)) {
    throw ConfigError(fmt::format("eta_tilde must be positive, got {}", eta_tilde));
  }
  if (!(n > 0.0) || !(n_bar_sq > 0.0)) {
    throw ConfigError("sample counts must be positive");
  }
}

double sensitivity_l1(const NoiseContext& ctx, double xi1) { return ctx.eta_tilde * ctx.E * xi1; }

double sensitivity_l2(const NoiseContext& ctx, double xi2) { return ctx.eta_tilde * ctx.E * xi2; }

double laplace_scale(const NoiseContext& ctx, const MechanismSpec& spec) {
  require_kind(spec, MechanismKind::Laplace, "laplace_scale");
  if (!(spec.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  return ctx.T_l * sensitivity_l1(ctx, spec.xi1) / spec.epsilon;
}

double gaussian_sigma(const NoiseContext& ctx, const MechanismSpec& spec) {
  require_kind(spec, MechanismKind::Gaussian, "gaussian_sigma");
  if (!(spec.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(spec.delta > 0.0 && spec.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  return spec.c2 * spec.q * std::sqrt(ctx.T_l * std::log(1.0 / spec.delta)) / spec.epsilon;
}

double noise_coordinate_std(const NoiseContext& ctx, const MechanismSpec& spec) {
  switch (spec.kind) {
    case MechanismKind::None: return 0.0;
    case MechanismKind::Laplace: return std::sqrt(2.0) * laplace_scale(ctx, spec);
    case MechanismKind::Gaussian: return gaussian_sigma(ctx, spec) * sensitivity_l2(ctx, spec.xi2);
  }
  return 0.0;
}

void sample_noise_into(const MechanismSpec& spec, const NoiseContext& ctx, RandomStream& stream,
                       ParamVector& w) {
  w.resize(ctx.p);
  switch (spec.kind) {
    case MechanismKind::None:
      w.setZero();
      break;
    case MechanismKind::Laplace: {
      const double beta = laplace_scale(ctx, spec);
      for (int i = 0; i < ctx.p; ++i) w[i] = stream.laplace(beta);
      break;
    }
    case MechanismKind::Gaussian: {
      const double sd = gaussian_sigma(ctx, spec) * sensitivity_l2(ctx, spec.xi2);
      for (int i = 0; i < ctx.p; ++i) w[i] = sd * stream.normal();
      break;
    }
  }
}

ParamVector sample_noise(const MechanismSpec& spec, const NoiseContext& ctx, RandomStream& stream) {
  ParamVector w;
  sample_noise_into(spec, ctx, stream, w);
  return w;
}

double noise_item_variance(const MechanismSpec& spec, const NoiseContext& ctx, VarianceMode mode) {
  const double n2 = ctx.n * ctx.n;
  const double eps2 = spec.epsilon * spec.epsilon;
  switch (spec.kind) {
    case MechanismKind::None: return 0.0;
    case MechanismKind::Laplace: {
      const double xi = sensitivity_l1(ctx, spec.xi1);
      const double tg = ctx.T_g;
      return 2.0 * ctx.p * ctx.b * xi * xi * tg * tg * ctx.n_bar_sq / (n2 * eps2);
    }
    case MechanismKind::Gaussian: {
      const double xi = sensitivity_l2(ctx, spec.xi2);
      const double lead = mode == VarianceMode::Doubled ? 2.0 : 1.0;
      // q = 1 under full-batch local training; kept for generality.
      return lead * ctx.p * spec.c2 * spec.c2 * spec.q * spec.q * ctx.N *
             std::log(1.0 / spec.delta) * xi * xi * ctx.T_g * ctx.n_bar_sq / (n2 * eps2);
    }
  }
  return 0.0;
}

double pool_noise_variance(const MechanismSpec& spec, const NoiseContext& ctx,
                           std::span<const std::size_t> pool_sizes) {
  if (spec.kind == MechanismKind::None) return 0.0;
  double sum_sq = 0.0;
  for (std::size_t nl : pool_sizes) {
    sum_sq += static_cast<double>(nl) * static_cast<double>(nl);
  }
  const double scale = static_cast<double>(ctx.N) / (static_cast<double>(ctx.b) * ctx.n);
  return ctx.p * per_coordinate_variance(ctx, spec) * scale * scale * sum_sq;
}

double asymptotic_z(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::Laplace: return 2.0;
    case MechanismKind::Gaussian: return 1.0;
    case MechanismKind::None: break;
  }
  throw ConfigError("the noise-free mechanism has no asymptotic variance exponent");
}

double checked_asymptotic_z(double z) {
  if (!(z >= 0.0 && z <= 2.0)) {
    throw ConfigError(fmt::format("asymptotic exponent z must lie in [0, 2], got {}", z));
  }
  return z;
}

bool gaussian_budget_warning(const NoiseContext& ctx, const MechanismSpec& spec) {
  return spec.kind == MechanismKind::Gaussian && spec.epsilon >= spec.q * spec.q * ctx.T_l;
}

}  // namespace dpfed
