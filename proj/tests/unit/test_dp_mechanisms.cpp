#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dpfed/datasets.hpp"
#include "dpfed/dp_mechanisms.hpp"
#include "dpfed/federation.hpp"
#include "oracles.hpp"

using namespace dpfed;

namespace {

NoiseContext unit_context() {
  NoiseContext ctx;
  ctx.p = 2;
  ctx.eta_tilde = 1.0;
  ctx.E = 1;
  ctx.T_l = 1;
  ctx.T_g = 1;
  ctx.b = 1;
  ctx.N = 1;
  ctx.n = 1.0;
  ctx.n_bar_sq = 1.0;
  return ctx;
}

MechanismSpec laplace(double eps, double xi1 = 1.0) {
  MechanismSpec s;
  s.kind = MechanismKind::Laplace;
  s.epsilon = eps;
  s.xi1 = xi1;
  return s;
}

MechanismSpec gaussian(double eps, double xi2 = 1.0, double delta = 1e-4) {
  MechanismSpec s;
  s.kind = MechanismKind::Gaussian;
  s.epsilon = eps;
  s.xi2 = xi2;
  s.delta = delta;
  return s;
}

FederationConfig pilot_config(const FederatedDataset& ds, NormKind norm, int E) {
  FederationConfig c;
  c.N = ds.clients();
  c.b = 2;
  c.E = E;
  c.T_g = 12;
  c.schedule = Schedule::theorem(1.0, 8.0);
  c.clip = ClipSpec{0.5, norm};
  c.theta_0 = ParamVector::Zero(ds.param_dim());
  return c;
}

}  // namespace

TEST_CASE("sensitivities are products of rate, local steps and bound") {
  NoiseContext ctx = unit_context();
  ctx.eta_tilde = 0.1;
  ctx.E = 5;
  CHECK(sensitivity_l1(ctx, 2.0) == doctest::Approx(1.0));
  ctx.E = 1;
  CHECK(sensitivity_l1(ctx, 2.0) == doctest::Approx(0.2));
  ctx.eta_tilde = 0.01;
  ctx.E = 10;
  CHECK(sensitivity_l2(ctx, 3.0) == doctest::Approx(0.3));
  ctx.E = 20;
  CHECK(sensitivity_l2(ctx, 3.0) == doctest::Approx(0.6));
}

TEST_CASE("per-round updates stay within the accumulated sensitivity") {
  SynthSpec spec;
  spec.clients = 6;
  spec.samples_per_client = 10;
  spec.features = 3;
  spec.seed = 2;
  const auto ds = synth_regression(spec);
  for (NormKind norm : {NormKind::L1, NormKind::L2}) {
    for (int E : {1, 4}) {
      const FederationConfig c = pilot_config(ds, norm, E);
      int checked = 0;
      RunOptions opts;
      opts.observer = [&](const RoundTrace& tr) {
        for (const auto& client : tr.clients) {
          const double bound = tr.context.eta_tilde * tr.context.E * c.clip.zeta;
          CHECK(dpfed::norm(client.local - tr.theta_in, norm) <= bound * (1.0 + 1e-12));
          ++checked;
        }
      };
      run_federation(c, ds, opts);
      CHECK(checked == c.T_g * c.b);
    }
  }
}

TEST_CASE("Laplace scale") {
  NoiseContext ctx = unit_context();
  ctx.T_l = 10;
  ctx.T_g = 10;
  CHECK(laplace_scale(ctx, laplace(1.0)) == doctest::Approx(10.0));
  CHECK(laplace_scale(ctx, laplace(2.0)) == doctest::Approx(5.0));
  CHECK_THROWS_AS(laplace(0.0).validate(), ConfigError);
  CHECK_THROWS_AS(laplace(-1.0).validate(), ConfigError);
}

TEST_CASE("Laplace noise has per-coordinate variance 2 beta^2") {
  NoiseContext ctx = unit_context();
  ctx.p = 1;
  ctx.T_l = 3;
  ctx.T_g = 3;
  const auto spec = laplace(2.0);
  const double beta = laplace_scale(ctx, spec);
  const int draws = 1000000;
  RandomStream t(StreamTag::Validation, 78);
  double acc = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double x = sample_noise(spec, ctx, t)[0];
    acc += x * x;
  }
  CHECK(std::abs(acc / draws / (2.0 * beta * beta) - 1.0) < 0.01);
}

TEST_CASE("Gaussian sigma") {
  NoiseContext ctx = unit_context();
  const auto spec = gaussian(1.0, 1.0, std::exp(-1.0));
  CHECK(gaussian_sigma(ctx, spec) == doctest::Approx(1.0));
  ctx.T_l = 4;
  ctx.T_g = 4;
  CHECK(gaussian_sigma(ctx, spec) == doctest::Approx(2.0));
  CHECK_NOTHROW(gaussian(1.0, 1.0, 1e-4).validate());
  CHECK_THROWS_AS(gaussian(1.0, 1.0, 0.0).validate(), ConfigError);
  CHECK_THROWS_AS(gaussian(1.0, 1.0, 1.0).validate(), ConfigError);
  CHECK_THROWS_AS(gaussian(0.0).validate(), ConfigError);
}

TEST_CASE("no mechanism draws exact zeros") {
  NoiseContext ctx = unit_context();
  ctx.p = 5;
  RandomStream s(StreamTag::DpNoise, 1);
  const ParamVector w = sample_noise(no_mechanism(), ctx, s);
  CHECK(w.size() == 5);
  CHECK((w.array() == 0.0).all());
}

TEST_CASE("noise has zero mean") {
  NoiseContext ctx = unit_context();
  ctx.p = 1;
  const int draws = 1000000;
  for (const auto& spec : {laplace(1.0), gaussian(1.0)}) {
    RandomStream s(StreamTag::Validation, 5);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < draws; ++i) {
      const double x = sample_noise(spec, ctx, s)[0];
      sum += x;
      sum_sq += x * x;
    }
    const double se = std::sqrt(sum_sq / draws / draws);
    CHECK(std::abs(sum / draws) < 4.0 * se);
  }
}

TEST_CASE("same stream key gives the same noise") {
  NoiseContext ctx = unit_context();
  ctx.p = 4;
  for (const auto& spec : {laplace(1.0), gaussian(1.0)}) {
    auto a = noise_stream(3, 4, 5);
    auto b = noise_stream(3, 4, 5);
    CHECK((sample_noise(spec, ctx, a).array() == sample_noise(spec, ctx, b).array()).all());
  }
}

TEST_CASE("Laplace noise-item variance by direct substitution") {
  const NoiseContext ctx = unit_context();
  CHECK(noise_item_variance(laplace(1.0), ctx, VarianceMode::Exact) == doctest::Approx(4.0));
  CHECK(noise_item_variance(laplace(1.0), ctx, VarianceMode::Doubled) == doctest::Approx(4.0));
}

TEST_CASE("Laplace noise-item variance by Monte Carlo") {
  const NoiseContext ctx = unit_context();
  const auto spec = laplace(1.0);
  RandomStream s(StreamTag::Validation, 21);
  const int draws = 1000000;
  double acc = 0.0;
  for (int i = 0; i < draws; ++i) {
    // N/b = 1 and n_l/n = 1: the pool aggregate is the client's own noise.
    acc += sample_noise(spec, ctx, s).squaredNorm();
  }
  CHECK(std::abs(acc / draws / 4.0 - 1.0) < 0.01);
}

TEST_CASE("Gaussian exact mode is the variance of a sum of independent Gaussians") {
  NoiseContext ctx;
  ctx.p = 3;
  ctx.eta_tilde = 0.05;
  ctx.E = 2;
  ctx.N = 6;
  ctx.b = 2;
  ctx.T_g = 9;
  ctx.T_l = ctx.b * ctx.T_g / ctx.N;
  ctx.n = 60.0;
  ctx.n_bar_sq = 100.0;
  const auto spec = gaussian(0.7, 2.0);
  const double sd = gaussian_sigma(ctx, spec) * sensitivity_l2(ctx, spec.xi2);
  // Equal shards: every pool holds two clients of 10 samples.
  const double first_principles =
      ctx.p * sd * sd * (double(ctx.N) * ctx.N / (double(ctx.b) * ctx.b * ctx.n * ctx.n)) * (2 * 100.0);
  CHECK(noise_item_variance(spec, ctx, VarianceMode::Exact) == doctest::Approx(first_principles).epsilon(1e-12));
  const std::vector<std::size_t> pool{10, 10};
  CHECK(pool_noise_variance(spec, ctx, pool) == doctest::Approx(first_principles).epsilon(1e-12));
  CHECK(noise_item_variance(spec, ctx, VarianceMode::Doubled) ==
        doctest::Approx(2.0 * first_principles).epsilon(1e-12));
}

TEST_CASE("Laplace closed form averages the pool variance over a cycle") {
  NoiseContext ctx;
  ctx.p = 2;
  ctx.eta_tilde = 0.1;
  ctx.E = 3;
  ctx.N = 4;
  ctx.b = 2;
  ctx.T_g = 6;
  ctx.T_l = 3;
  const std::vector<std::size_t> sizes{5, 9, 12, 4};
  ctx.n = 30.0;
  ctx.n_bar_sq = (25.0 + 81.0 + 144.0 + 16.0) / 4.0;
  const auto spec = laplace(3.0, 1.5);
  const std::vector<std::size_t> pool_a{5, 9};
  const std::vector<std::size_t> pool_b{12, 4};
  const double cycle_mean = 0.5 * (pool_noise_variance(spec, ctx, pool_a) + pool_noise_variance(spec, ctx, pool_b));
  CHECK(noise_item_variance(spec, ctx, VarianceMode::Exact) == doctest::Approx(cycle_mean).epsilon(1e-12));
}

TEST_CASE("halving epsilon quadruples the predicted variance") {
  const NoiseContext ctx = unit_context();
  for (auto mode : {VarianceMode::Exact, VarianceMode::Doubled}) {
    CHECK(noise_item_variance(laplace(0.5), ctx, mode) ==
          doctest::Approx(4.0 * noise_item_variance(laplace(1.0), ctx, mode)));
    CHECK(noise_item_variance(gaussian(0.5), ctx, mode) ==
          doctest::Approx(4.0 * noise_item_variance(gaussian(1.0), ctx, mode)));
  }
  CHECK(noise_item_variance(no_mechanism(), ctx, VarianceMode::Exact) == 0.0);
}

TEST_CASE("asymptotic exponents") {
  CHECK(asymptotic_z(MechanismKind::Laplace) == 2.0);
  CHECK(asymptotic_z(MechanismKind::Gaussian) == 1.0);
  CHECK_THROWS_AS(asymptotic_z(MechanismKind::None), ConfigError);
  CHECK(checked_asymptotic_z(0.0) == 0.0);
  CHECK(checked_asymptotic_z(2.0) == 2.0);
  CHECK_THROWS_AS(checked_asymptotic_z(2.5), ConfigError);
  CHECK_THROWS_AS(checked_asymptotic_z(-0.1), ConfigError);
}

TEST_CASE("Gaussian budget warning") {
  NoiseContext ctx = unit_context();
  ctx.T_l = 10;
  CHECK_FALSE(gaussian_budget_warning(ctx, gaussian(1.0)));
  CHECK(gaussian_budget_warning(ctx, gaussian(10.0)));
  CHECK_FALSE(gaussian_budget_warning(ctx, laplace(100.0)));
}

TEST_CASE("mechanism spec consistency") {
  CHECK_NOTHROW(no_mechanism().validate());
  MechanismSpec none_with_budget = no_mechanism();
  none_with_budget.epsilon = 1.0;
  CHECK_THROWS_AS(none_with_budget.validate(), ConfigError);
  CHECK_THROWS_AS(laplace(std::numeric_limits<double>::infinity()).validate(), ConfigError);
  CHECK_THROWS_AS(laplace(1.0, 0.0).validate(), ConfigError);
  CHECK_THROWS_AS(gaussian(1.0, 0.0).validate(), ConfigError);
  CHECK(parse_mechanism_kind("laplace") == MechanismKind::Laplace);
  CHECK_THROWS_AS(parse_mechanism_kind("exponential"), ConfigError);
  CHECK(parse_variance_mode("doubled") == VarianceMode::Doubled);
  CHECK_THROWS_AS(parse_variance_mode("half"), ConfigError);
}
