#pragma once

// Variance-preserving Gaussian diffusion: schedule algebra, the forward
// noising kernel, the Gaussian posterior used for reverse steps, and an
// ancestral sampler driven by any x0-predicting denoiser.
//
// Notation: alpha_t and sigma_t scale data and noise at iteration t,
// log_snr_t = log(alpha_t^2 / sigma_t^2), alpha_t^2 + sigma_t^2 = 1.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cellflow/rng.hpp"

namespace cellflow::diffusion {

enum class ScheduleKind { cosine, linear_log_snr };

ScheduleKind parse_schedule_kind(std::string_view name);
std::string_view to_string(ScheduleKind kind);

inline constexpr double kLogSnrMax = 20.0;
inline constexpr double kLogSnrMin = -20.0;

class DiffusionSchedule {
 public:
  DiffusionSchedule(int steps, ScheduleKind kind, double log_snr_max = kLogSnrMax,
                    double log_snr_min = kLogSnrMin);

  int steps() const noexcept { return steps_; }
  ScheduleKind kind() const noexcept { return kind_; }

  double alpha(int t) const { return alpha_.at(static_cast<std::size_t>(t)); }
  double sigma(int t) const { return sigma_.at(static_cast<std::size_t>(t)); }
  double log_snr(int t) const { return log_snr_.at(static_cast<std::size_t>(t)); }

  std::span<const double> alphas() const noexcept { return alpha_; }
  std::span<const double> sigmas() const noexcept { return sigma_; }
  std::span<const double> log_snrs() const noexcept { return log_snr_; }

 private:
  int steps_;
  ScheduleKind kind_;
  std::vector<double> alpha_;
  std::vector<double> sigma_;
  std::vector<double> log_snr_;
};

// Cosine: log_snr(u) = -2 log tan(a u + b) with a, b chosen so the curve
// runs exactly from log_snr_max at u=0 to log_snr_min at u=1.
// Linear: log_snr interpolates linearly between the same caps.
DiffusionSchedule make_schedule(int steps, ScheduleKind kind = ScheduleKind::cosine);

// Closed-form log-SNR curve evaluated at u = t/T.
double log_snr_at(double u, ScheduleKind kind, double log_snr_max = kLogSnrMax,
                  double log_snr_min = kLogSnrMin);

// (1 - exp(log_snr_t - log_snr_{t-1})) * sigma_t^2, for 1 <= t <= T.
double cond_variance(const DiffusionSchedule& schedule, int t);

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  static Tensor zeros(std::vector<std::size_t> shape);
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

struct Latent {
  int t = 0;
  Tensor data;
};

// x_{t+1} = (alpha_{t+1}/alpha_t) x_t + sqrt(cond_variance(t+1)) eps.
Latent forward_step(const Latent& x_prev, const DiffusionSchedule& schedule, Rng& rng);

// x_t = alpha_t x0 + sigma_t eps.
Latent forward_marginal(const Tensor& x0, int t, const DiffusionSchedule& schedule, Rng& rng);

struct Posterior {
  double mean_xt_coef;   // exp(dl) * alpha_{t-1} / alpha_t
  double mean_x0_coef;   // (1 - exp(dl)) * alpha_{t-1}
  double variance;       // (1 - exp(dl)) * sigma_{t-1}^2
};

// Coefficients of q(x_{t-1} | x_t, x0) with dl = log_snr_t - log_snr_{t-1}.
Posterior posterior(const DiffusionSchedule& schedule, int t);

Latent reverse_step(const Latent& x_t, const Tensor& x0_hat, const DiffusionSchedule& schedule,
                    Rng& rng);

class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Tensor predict_x0(const Latent& latent, const DiffusionSchedule& schedule) const = 0;
};

class ConstantDenoiser final : public Denoiser {
 public:
  explicit ConstantDenoiser(double value) : value_(value) {}
  Tensor predict_x0(const Latent& latent, const DiffusionSchedule&) const override;

 private:
  double value_;
};

// Posterior mean E[x0 | x_t] when x0 is drawn elementwise from a discrete
// distribution over `support` (uniform weights unless given).
class EmpiricalOracleDenoiser final : public Denoiser {
 public:
  explicit EmpiricalOracleDenoiser(std::vector<double> support, std::vector<double> weights = {});
  Tensor predict_x0(const Latent& latent, const DiffusionSchedule& schedule) const override;

 private:
  std::vector<double> support_;
  std::vector<double> log_weights_;
};

// Wraps a noise predictor: x0_hat = (x_t - sigma_t * eps_hat) / alpha_t.
class EpsilonAdapter final : public Denoiser {
 public:
  using EpsilonFn = std::function<Tensor(const Latent&, const DiffusionSchedule&)>;
  explicit EpsilonAdapter(EpsilonFn eps) : eps_(std::move(eps)) {}
  Tensor predict_x0(const Latent& latent, const DiffusionSchedule& schedule) const override;

 private:
  EpsilonFn eps_;
};

// Draws x_T ~ N(0, I) and runs reverse_step from T down to 1.
Tensor sample(const Denoiser& denoiser, const DiffusionSchedule& schedule,
              std::vector<std::size_t> shape, Rng& rng);

// Recorded for provenance only; nothing here trains a network.
struct TrainingConfig {
  enum class Loss { l1, weighted_l2 };
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  Loss loss = Loss::l1;
};

// "t,alpha,sigma,lambda" CSV with one row per t = 0..T.
std::string schedule_csv(const DiffusionSchedule& schedule);

}  // namespace cellflow::diffusion
