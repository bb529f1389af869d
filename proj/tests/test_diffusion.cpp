#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "cellflow/diffusion.hpp"
#include "cellflow/error.hpp"
#include "oracles.hpp"

using namespace cellflow;
using namespace cellflow::diffusion;

namespace {

struct Moments {
  double mean;
  double var;
};

Moments moments(const std::vector<double>& xs) {
  double m = 0.0;
  for (double v : xs) m += v;
  m /= static_cast<double>(xs.size());
  double q = 0.0;
  for (double v : xs) q += (v - m) * (v - m);
  return {m, q / static_cast<double>(xs.size() - 1)};
}

// 3-sigma Monte-Carlo bands for the sample mean and variance of n draws.
void check_moments(const std::vector<double>& xs, double mean, double var) {
  const double n = static_cast<double>(xs.size());
  const auto got = moments(xs);
  CHECK(std::abs(got.mean - mean) < 3.0 * std::sqrt(var / n));
  CHECK(std::abs(got.var - var) < 3.0 * var * std::sqrt(2.0 / (n - 1.0)));
}

Tensor scalars(std::size_t n, double v) { return {{n}, std::vector<double>(n, v)}; }

}  // namespace

TEST_CASE("schedule kinds parse") {
  CHECK(parse_schedule_kind("cosine") == ScheduleKind::cosine);
  CHECK(parse_schedule_kind("linear-log-snr") == ScheduleKind::linear_log_snr);
  CHECK(to_string(ScheduleKind::linear_log_snr) == "linear-log-snr");
  CHECK_THROWS_AS(parse_schedule_kind("sigmoid"), InputError);
}

TEST_CASE("schedule identities") {
  for (auto kind : {ScheduleKind::cosine, ScheduleKind::linear_log_snr}) {
    for (int steps : {1, 2, 10, 100, 1000}) {
      const auto s = make_schedule(steps, kind);
      REQUIRE(s.alphas().size() == static_cast<std::size_t>(steps + 1));
      for (int t = 0; t <= steps; ++t) {
        const double a = s.alpha(t);
        const double g = s.sigma(t);
        CHECK(std::abs(a * a + g * g - 1.0) <= 1e-12);
        CHECK(a > 0.0);
        CHECK(a <= 1.0);
        CHECK(g > 0.0);
        CHECK(g < 1.0);
        CHECK(std::abs(std::log(a * a / (g * g)) - s.log_snr(t)) <= 1e-12 * std::max(1.0, std::abs(s.log_snr(t))));
        if (t > 0) CHECK(s.log_snr(t) < s.log_snr(t - 1));
      }
    }
  }
  CHECK_THROWS_AS(make_schedule(0), RangeError);
}

TEST_CASE("cosine endpoints and closed form") {
  const auto s = make_schedule(1000);
  CHECK(s.log_snr(0) == doctest::Approx(kLogSnrMax).epsilon(1e-12));
  CHECK(s.log_snr(1000) == doctest::Approx(kLogSnrMin).epsilon(1e-12));
  CHECK(s.log_snr(0) > 0.0);
  CHECK(s.log_snr(1000) < 0.0);

  // -2 log tan(a u + b) through the two caps
  const double b = std::atan(std::exp(-kLogSnrMax / 2.0));
  const double a = std::atan(std::exp(-kLogSnrMin / 2.0)) - b;
  for (int t : {0, 1, 250, 500, 999, 1000}) {
    const double u = t / 1000.0;
    const double want = -2.0 * std::log(std::tan(a * u + b));
    CHECK(s.log_snr(t) == doctest::Approx(want).epsilon(1e-12));
    CHECK(log_snr_at(u, ScheduleKind::cosine) == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK(s.log_snr(500) == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));

  const auto lin = make_schedule(4, ScheduleKind::linear_log_snr);
  CHECK(lin.log_snr(1) == doctest::Approx(10.0));
  CHECK(lin.log_snr(2) == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("conditional variance") {
  const auto s = make_schedule(10);
  const double want = (1.0 - std::exp(s.log_snr(1) - s.log_snr(0))) * s.sigma(1) * s.sigma(1);
  CHECK(cond_variance(s, 1) == doctest::Approx(want).epsilon(1e-14));
  for (int t = 1; t <= 10; ++t) {
    const double v = cond_variance(s, t);
    CHECK(v >= 0.0);
    CHECK(v <= s.sigma(t) * s.sigma(t));
    const double r = s.alpha(t) / s.alpha(t - 1);
    CHECK(std::abs(v - (s.sigma(t) * s.sigma(t) - r * r * s.sigma(t - 1) * s.sigma(t - 1))) <= 1e-10);
  }
  CHECK_THROWS_AS(cond_variance(s, 0), RangeError);
  CHECK_THROWS_AS(cond_variance(s, 11), RangeError);

  // equal neighbouring log-SNR gives zero; a huge previous log-SNR gives sigma_t^2
  const DiffusionSchedule flat(1, ScheduleKind::linear_log_snr, 1e-300, -1e-300);
  CHECK(cond_variance(flat, 1) == doctest::Approx(0.0).scale(1.0));
  const DiffusionSchedule steep(1, ScheduleKind::linear_log_snr, 700.0, 0.0);
  CHECK(cond_variance(steep, 1) == doctest::Approx(steep.sigma(1) * steep.sigma(1)));
}

TEST_CASE("forward step moments from zero") {
  const auto s = make_schedule(10);
  Rng rng(1);
  for (int t = 0; t < 10; t += 3) {
    const Latent x{t, scalars(100000, 0.0)};
    const auto y = forward_step(x, s, rng);
    CHECK(y.t == t + 1);
    check_moments(y.data.values, 0.0, cond_variance(s, t + 1));
  }
  const Latent last{10, scalars(1, 0.0)};
  CHECK_THROWS_AS(forward_step(last, s, rng), RangeError);
}

TEST_CASE("forward step is deterministic per seed") {
  const auto s = make_schedule(20);
  const Latent x{3, scalars(16, 0.4)};
  Rng a(8);
  Rng b(8);
  CHECK(forward_step(x, s, a).data.values == forward_step(x, s, b).data.values);
}

TEST_CASE("forward step with zero conditional variance only rescales") {
  const DiffusionSchedule s(1, ScheduleKind::linear_log_snr, 1e-300, -1e-300);
  Rng rng(2);
  const Latent x{0, {{3}, {0.5, -1.0, 2.0}}};
  const auto y = forward_step(x, s, rng);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(y.data.values[i] == doctest::Approx(x.data.values[i] * s.alpha(1) / s.alpha(0)));
  }
}

TEST_CASE("forward marginal") {
  const auto s = make_schedule(100);
  Rng rng(3);
  const auto x0 = scalars(50000, 0.3);
  for (int t : {1, 40, 100}) {
    const auto x = forward_marginal(x0, t, s, rng);
    CHECK(x.t == t);
    check_moments(x.data.values, s.alpha(t) * 0.3, s.sigma(t) * s.sigma(t));
  }
  const auto near = forward_marginal(scalars(10, 0.3), 0, s, rng);
  for (double v : near.data.values) CHECK(std::abs(v - 0.3) < 10.0 * s.sigma(0));
  CHECK_THROWS_AS(forward_marginal(x0, 101, s, rng), RangeError);
  CHECK_THROWS_AS(forward_marginal(x0, -1, s, rng), RangeError);
}

TEST_CASE("terminal marginal is standard normal") {
  const auto s = make_schedule(1000);
  Rng rng(4);
  std::vector<double> x0(10000);
  for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = static_cast<double>(i % 101) / 100.0;
  const auto x = forward_marginal({{x0.size()}, x0}, 1000, s, rng);
  const double d = oracle::ks_statistic(x.data.values);
  CHECK(oracle::ks_p_value(d, x0.size()) > 0.01);
}

TEST_CASE("KS oracle rejects a shifted sample") {
  Rng rng(5);
  std::vector<double> xs(10000);
  for (double& v : xs) v = rng.normal() + 0.1;
  CHECK(oracle::ks_p_value(oracle::ks_statistic(xs), xs.size()) < 0.01);
}

TEST_CASE("posterior coefficients") {
  const auto s = make_schedule(50);
  for (int t = 1; t <= 50; t += 7) {
    const auto p = posterior(s, t);
    const double e = std::exp(s.log_snr(t) - s.log_snr(t - 1));
    CHECK(p.mean_xt_coef == doctest::Approx(e * s.alpha(t - 1) / s.alpha(t)).epsilon(1e-13));
    CHECK(p.mean_x0_coef == doctest::Approx((1 - e) * s.alpha(t - 1)).epsilon(1e-13));
    CHECK(p.variance == doctest::Approx((1 - e) * s.sigma(t - 1) * s.sigma(t - 1)).epsilon(1e-13));
  }
  CHECK_THROWS_AS(posterior(s, 0), RangeError);
}

TEST_CASE("reverse step with equal log-SNR is deterministic scaling") {
  const DiffusionSchedule s(1, ScheduleKind::linear_log_snr, 1e-300, -1e-300);
  Rng rng(6);
  const Latent x{1, {{2}, {0.8, -0.2}}};
  const auto y = reverse_step(x, {{2}, {5.0, 5.0}}, s, rng);
  CHECK(y.t == 0);
  CHECK(y.data.values[0] == doctest::Approx(0.8 * s.alpha(0) / s.alpha(1)));
  CHECK(y.data.values[1] == doctest::Approx(-0.2 * s.alpha(0) / s.alpha(1)));

  CHECK_THROWS_AS(reverse_step({0, {{2}, {0, 0}}}, {{2}, {0, 0}}, s, rng), RangeError);
  CHECK_THROWS_AS(reverse_step(x, {{3}, {0, 0, 0}}, s, rng), DimensionError);
}

TEST_CASE("forward then reverse with the true x0 keeps the marginal") {
  // x_{t-1} ~ q(x_{t-1}|x0); x_t ~ q(x_t|x_{t-1}); reverse with true x0
  // must give back q(x_{t-1}|x0).
  const auto s = make_schedule(20);
  Rng rng(7);
  const double x0 = -0.6;
  const int t = 9;
  const auto prev = forward_marginal(scalars(100000, x0), t - 1, s, rng);
  const auto cur = forward_step(prev, s, rng);
  const auto back = reverse_step(cur, scalars(100000, x0), s, rng);
  check_moments(back.data.values, s.alpha(t - 1) * x0, s.sigma(t - 1) * s.sigma(t - 1));
}

TEST_CASE("constant denoiser concentrates the sampler") {
  const auto s = make_schedule(200);
  Rng rng(8);
  const ConstantDenoiser d(0.5);
  const auto x = sample(d, s, {4, 4}, rng);
  CHECK(x.shape == std::vector<std::size_t>{4, 4});
  for (double v : x.values) CHECK(std::abs(v - 0.5) < 1e-3);

  Rng a(9);
  Rng b(9);
  CHECK(sample(d, s, {8}, a).values == sample(d, s, {8}, b).values);
}

TEST_CASE("oracle denoiser posterior mean") {
  const auto s = make_schedule(100);
  const EmpiricalOracleDenoiser d({-1.0, 1.0});
  // at low noise the estimate snaps to the nearer support point
  const auto near = d.predict_x0({1, {{2}, {0.9 * s.alpha(1), -0.8 * s.alpha(1)}}}, s);
  CHECK(near.values[0] == doctest::Approx(1.0));
  CHECK(near.values[1] == doctest::Approx(-1.0));
  // exact two-point posterior mean: tanh(alpha x / sigma^2)
  const int t = 70;
  const double xt = 0.3;
  const auto mid = d.predict_x0({t, {{1}, {xt}}}, s);
  const double a = s.alpha(t);
  const double g2 = s.sigma(t) * s.sigma(t);
  CHECK(mid.values[0] == doctest::Approx(std::tanh(a * xt / g2)).epsilon(1e-12));

  const EmpiricalOracleDenoiser weighted({0.0, 1.0}, {3.0, 1.0});
  const auto w = weighted.predict_x0({100, {{1}, {0.0}}}, s);
  CHECK(w.values[0] == doctest::Approx(0.25).epsilon(1e-6));

  CHECK_THROWS_AS(EmpiricalOracleDenoiser({}), ArityError);
  CHECK_THROWS_AS(EmpiricalOracleDenoiser({1.0}, {1.0, 2.0}), DimensionError);
}

TEST_CASE("epsilon adapter") {
  const auto s = make_schedule(10);
  const EpsilonAdapter zero_eps([](const Latent& x, const DiffusionSchedule&) {
    return Tensor::zeros(x.data.shape);
  });
  const Latent x{4, {{2}, {0.5, -0.25}}};
  const auto est = zero_eps.predict_x0(x, s);
  CHECK(est.values[0] == doctest::Approx(0.5 / s.alpha(4)));

  const EpsilonAdapter unit([](const Latent& x, const DiffusionSchedule&) {
    return Tensor{x.data.shape, std::vector<double>(x.data.values.size(), 1.0)};
  });
  CHECK(unit.predict_x0(x, s).values[1] ==
        doctest::Approx((-0.25 - s.sigma(4)) / s.alpha(4)));
}

TEST_CASE("sampler reports non-finite denoiser output with its iteration") {
  const auto s = make_schedule(30);
  const EpsilonAdapter bad([](const Latent& x, const DiffusionSchedule&) {
    Tensor out = Tensor::zeros(x.data.shape);
    if (x.t == 17) out.values[0] = std::nan("");
    return out;
  });
  Rng rng(1);
  try {
    sample(bad, s, {2}, rng);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("17") != std::string::npos);
  }
}

TEST_CASE("training constants and schedule CSV") {
  const TrainingConfig c;
  CHECK(c.learning_rate == 1e-4);
  CHECK(c.adam_beta1 == 0.9);
  CHECK(c.adam_beta2 == 0.999);
  CHECK(c.loss == TrainingConfig::Loss::l1);

  const auto csv = schedule_csv(make_schedule(10));
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,alpha,sigma,lambda");
  int rows = 0;
  double prev = 1e300;
  while (std::getline(in, line)) {
    const auto last = line.rfind(',');
    const double lambda = std::stod(line.substr(last + 1));
    CHECK(lambda < prev);
    prev = lambda;
    ++rows;
  }
  CHECK(rows == 11);
}
