#include "cellflow/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "cellflow/error.hpp"

namespace cellflow::diffusion {

namespace {

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

void check_t(const DiffusionSchedule& s, int t, int lo, const char* what) {
  if (t < lo || t > s.steps()) {
    throw RangeError(std::string(what) + ": iteration " + std::to_string(t) +
                     " outside [" + std::to_string(lo) + ", " + std::to_string(s.steps()) + "]");
  }
}

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

}  // namespace

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "cosine") return ScheduleKind::cosine;
  if (name == "linear-log-snr") return ScheduleKind::linear_log_snr;
  throw InputError("unknown schedule kind '" + std::string(name) + "'");
}

std::string_view to_string(ScheduleKind kind) {
  return kind == ScheduleKind::cosine ? "cosine" : "linear-log-snr";
}

double log_snr_at(double u, ScheduleKind kind, double log_snr_max, double log_snr_min) {
  if (kind == ScheduleKind::linear_log_snr) {
    return log_snr_max + (log_snr_min - log_snr_max) * u;
  }
  const double b = std::atan(std::exp(-0.5 * log_snr_max));
  const double a = std::atan(std::exp(-0.5 * log_snr_min)) - b;
  return -2.0 * std::log(std::tan(a * u + b));
}

DiffusionSchedule::DiffusionSchedule(int steps, ScheduleKind kind, double log_snr_max,
                                     double log_snr_min)
    : steps_(steps), kind_(kind) {
  if (steps < 1) throw RangeError("schedule needs T >= 1");
  if (!(log_snr_max > log_snr_min)) throw RangeError("log-SNR caps must satisfy max > min");

  const auto n = static_cast<std::size_t>(steps) + 1;
  alpha_.resize(n);
  sigma_.resize(n);
  log_snr_.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double u = static_cast<double>(t) / steps;
    // pin the endpoints so rounding in tan/atan cannot move the caps
    const double l = t == 0 ? log_snr_max
                     : t + 1 == n ? log_snr_min
                                  : log_snr_at(u, kind, log_snr_max, log_snr_min);
    log_snr_[t] = l;
    alpha_[t] = std::sqrt(sigmoid(l));
    sigma_[t] = std::sqrt(sigmoid(-l));
  }
}

DiffusionSchedule make_schedule(int steps, ScheduleKind kind) {
  return DiffusionSchedule(steps, kind);
}

double cond_variance(const DiffusionSchedule& schedule, int t) {
  check_t(schedule, t, 1, "cond_variance");
  const double s = schedule.sigma(t);
  return -std::expm1(schedule.log_snr(t) - schedule.log_snr(t - 1)) * s * s;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor out;
  out.values.assign(element_count(shape), 0.0);
  out.shape = std::move(shape);
  return out;
}

Latent forward_step(const Latent& x_prev, const DiffusionSchedule& schedule, Rng& rng) {
  check_t(schedule, x_prev.t, 0, "forward_step");
  if (x_prev.t == schedule.steps()) throw RangeError("forward_step: already at t = T");
  const int t = x_prev.t + 1;
  const double scale = schedule.alpha(t) / schedule.alpha(t - 1);
  const double sd = std::sqrt(cond_variance(schedule, t));

  Latent out{t, x_prev.data};
  for (double& v : out.data.values) v = scale * v + sd * rng.normal();
  return out;
}

Latent forward_marginal(const Tensor& x0, int t, const DiffusionSchedule& schedule, Rng& rng) {
  check_t(schedule, t, 0, "forward_marginal");
  const double a = schedule.alpha(t);
  const double s = schedule.sigma(t);
  Latent out{t, x0};
  for (double& v : out.data.values) v = a * v + s * rng.normal();
  return out;
}

Posterior posterior(const DiffusionSchedule& schedule, int t) {
  check_t(schedule, t, 1, "posterior");
  const double dl = schedule.log_snr(t) - schedule.log_snr(t - 1);
  const double keep = std::exp(dl);
  const double mix = -std::expm1(dl);
  const double a_prev = schedule.alpha(t - 1);
  const double s_prev = schedule.sigma(t - 1);
  return {keep * a_prev / schedule.alpha(t), mix * a_prev, mix * s_prev * s_prev};
}

Latent reverse_step(const Latent& x_t, const Tensor& x0_hat, const DiffusionSchedule& schedule,
                    Rng& rng) {
  if (x_t.t == 0) throw RangeError("reverse_step: cannot step below t = 0");
  check_t(schedule, x_t.t, 1, "reverse_step");
  if (!x_t.data.same_shape(x0_hat) || x_t.data.values.size() != x0_hat.values.size()) {
    throw DimensionError("reverse_step: x0 estimate shape differs from latent");
  }
  const Posterior p = posterior(schedule, x_t.t);
  const double sd = std::sqrt(p.variance);

  Latent out{x_t.t - 1, x_t.data};
  for (std::size_t i = 0; i < out.data.values.size(); ++i) {
    const double mean = p.mean_xt_coef * x_t.data.values[i] + p.mean_x0_coef * x0_hat.values[i];
    out.data.values[i] = sd > 0.0 ? mean + sd * rng.normal() : mean;
  }
  return out;
}

Tensor ConstantDenoiser::predict_x0(const Latent& latent, const DiffusionSchedule&) const {
  Tensor out = latent.data;
  std::fill(out.values.begin(), out.values.end(), value_);
  return out;
}

EmpiricalOracleDenoiser::EmpiricalOracleDenoiser(std::vector<double> support,
                                                 std::vector<double> weights)
    : support_(std::move(support)) {
  if (support_.empty()) throw ArityError("oracle denoiser needs at least one support point");
  if (weights.empty()) weights.assign(support_.size(), 1.0);
  if (weights.size() != support_.size()) {
    throw DimensionError("oracle denoiser weights must match support size");
  }
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw RangeError("oracle weights must be positive");
  }
  for (double w : weights) log_weights_.push_back(std::log(w));
}

Tensor EmpiricalOracleDenoiser::predict_x0(const Latent& latent,
                                           const DiffusionSchedule& schedule) const {
  const double a = schedule.alpha(latent.t);
  const double s2 = schedule.sigma(latent.t) * schedule.sigma(latent.t);
  Tensor out = latent.data;
  std::vector<double> logp(support_.size());
  for (double& v : out.values) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < support_.size(); ++i) {
      const double d = v - a * support_[i];
      logp[i] = log_weights_[i] - 0.5 * d * d / s2;
      top = std::max(top, logp[i]);
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < support_.size(); ++i) {
      const double w = std::exp(logp[i] - top);
      num += w * support_[i];
      den += w;
    }
    v = num / den;
  }
  return out;
}

Tensor EpsilonAdapter::predict_x0(const Latent& latent, const DiffusionSchedule& schedule) const {
  const Tensor eps = eps_(latent, schedule);
  if (!eps.same_shape(latent.data)) {
    throw DimensionError("epsilon predictor returned a different shape");
  }
  const double a = schedule.alpha(latent.t);
  const double s = schedule.sigma(latent.t);
  Tensor out = latent.data;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = (latent.data.values[i] - s * eps.values[i]) / a;
  }
  return out;
}

Tensor sample(const Denoiser& denoiser, const DiffusionSchedule& schedule,
              std::vector<std::size_t> shape, Rng& rng) {
  Latent x{schedule.steps(), Tensor::zeros(std::move(shape))};
  for (double& v : x.data.values) v = rng.normal();

  for (int t = schedule.steps(); t >= 1; --t) {
    const Tensor x0_hat = denoiser.predict_x0(x, schedule);
    if (!x0_hat.same_shape(x.data) || x0_hat.values.size() != x.data.values.size()) {
      throw DimensionError("denoiser changed the tensor shape at iteration " + std::to_string(t));
    }
    for (double v : x0_hat.values) {
      if (!std::isfinite(v)) {
        throw NumericError("denoiser returned non-finite values at iteration " +
                           std::to_string(t));
      }
    }
    x = reverse_step(x, x0_hat, schedule, rng);
  }
  return std::move(x.data);
}

std::string schedule_csv(const DiffusionSchedule& schedule) {
  std::string out = "t,alpha,sigma,lambda\n";
  char line[128];
  for (int t = 0; t <= schedule.steps(); ++t) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g\n", t, schedule.alpha(t),
                  schedule.sigma(t), schedule.log_snr(t));
    out += line;
  }
  return out;
}

}  // namespace cellflow::diffusion
