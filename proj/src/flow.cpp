#include "cellflow/flow.hpp"

#include <cmath>
#include <string>

namespace cellflow::flow {

namespace {

void require_min_shape(std::size_t rows, std::size_t cols, const char* what) {
  if (rows < 3 || cols < 3) {
    throw DimensionError(std::string(what) + " requires at least 3x3 input, got " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

void FlowParams::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw RangeError("flow lambda must be a positive finite number");
  }
  if (iterations < 1) throw RangeError("flow iterations must be >= 1");
}

std::pair<RealGrid, RealGrid> sobel_gradients(const GrayFrame& frame) {
  const RealGrid& f = frame.pixels();
  const std::size_t rows = f.rows();
  const std::size_t cols = f.cols();
  require_min_shape(rows, cols, "sobel_gradients");

  RealGrid gx(rows, cols);
  RealGrid gy(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* up = f.row(r == 0 ? 0 : r - 1).data();
    const double* mid = f.row(r).data();
    const double* down = f.row(r + 1 == rows ? r : r + 1).data();
    double* ox = gx.row(r).data();
    double* oy = gy.row(r).data();
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t l = c == 0 ? 0 : c - 1;
      const std::size_t rt = c + 1 == cols ? c : c + 1;
      ox[c] = (up[rt] + 2.0 * mid[rt] + down[rt]) - (up[l] + 2.0 * mid[l] + down[l]);
      oy[c] = (down[l] + 2.0 * down[c] + down[rt]) - (up[l] + 2.0 * up[c] + up[rt]);
    }
  }
  return {std::move(gx), std::move(gy)};
}

RealGrid temporal_derivative(const GrayFrame& current, const GrayFrame& next) {
  if (!current.same_shape(next)) {
    throw DimensionError("temporal_derivative: frames differ in shape");
  }
  RealGrid out(current.height(), current.width());
  const auto a = current.pixels().values();
  const auto b = next.pixels().values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] - b[i];
  return out;
}

RealGrid local_average(const RealGrid& field) {
  const std::size_t rows = field.rows();
  const std::size_t cols = field.cols();
  require_min_shape(rows, cols, "local_average");

  RealGrid out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* up = field.row(r == 0 ? 0 : r - 1).data();
    const double* mid = field.row(r).data();
    const double* down = field.row(r + 1 == rows ? r : r + 1).data();
    double* o = out.row(r).data();
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t l = c == 0 ? 0 : c - 1;
      const std::size_t rt = c + 1 == cols ? c : c + 1;
      o[c] = 0.25 * (down[c] + up[c] + mid[rt] + mid[l]);
    }
  }
  return out;
}

GradientTriplet flow_gradients(const GrayFrame& current, const GrayFrame& next) {
  if (!current.same_shape(next)) {
    throw DimensionError("flow_gradients: frames differ in shape");
  }
  auto [gx, gy] = sobel_gradients(current);
  // convolution mirrors the kernel
  for (double& v : gx.values()) v = -v;
  for (double& v : gy.values()) v = -v;
  return {std::move(gx), std::move(gy), temporal_derivative(current, next)};
}

FlowField hs_step(const RealGrid& ubar, const RealGrid& vbar, const GradientTriplet& grads,
                  double lambda) {
  if (!ubar.same_shape(vbar) || !ubar.same_shape(grads.ix) || !ubar.same_shape(grads.iy) ||
      !ubar.same_shape(grads.it)) {
    throw DimensionError("hs_step: all grids must share one shape");
  }
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw RangeError("hs_step: lambda must be positive and finite");
  }
  if (!all_finite(ubar) || !all_finite(vbar) || !all_finite(grads.ix) ||
      !all_finite(grads.iy) || !all_finite(grads.it)) {
    throw NumericError("hs_step: non-finite input");
  }

  const double inv_lambda = 1.0 / lambda;
  FlowField out{RealGrid(ubar.rows(), ubar.cols()), RealGrid(ubar.rows(), ubar.cols())};
  const double* ub = ubar.data();
  const double* vb = vbar.data();
  const double* ix = grads.ix.data();
  const double* iy = grads.iy.data();
  const double* it = grads.it.data();
  double* u = out.u.data();
  double* v = out.v.data();
  const std::size_t n = ubar.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double ratio = (ix[i] * ub[i] + iy[i] * vb[i] + it[i]) /
                         (inv_lambda + ix[i] * ix[i] + iy[i] * iy[i]);
    u[i] = ub[i] - ratio * ix[i];
    v[i] = vb[i] - ratio * iy[i];
  }
  return out;
}

FlowField compute_flow(const GrayFrame& current, const GrayFrame& next,
                       const FlowParams& params) {
  params.validate();
  const GradientTriplet grads = flow_gradients(current, next);

  RealGrid ubar(current.height(), current.width(), 0.0);
  RealGrid vbar(current.height(), current.width(), 0.0);
  FlowField field;
  for (int k = 0; k < params.iterations; ++k) {
    field = hs_step(ubar, vbar, grads, params.lambda);
    ubar = local_average(field.u);
    vbar = local_average(field.v);
  }
  return field;
}

std::vector<FlowField> video_flow(std::span<const GrayFrame> frames, const FlowParams& params) {
  if (frames.size() < 2) {
    throw ArityError("video_flow needs at least 2 frames, got " +
                     std::to_string(frames.size()));
  }
  for (const auto& f : frames) {
    if (!f.same_shape(frames.front())) {
      throw DimensionError("video_flow: frames differ in shape");
    }
  }
  params.validate();

  std::vector<FlowField> out;
  out.reserve(frames.size() - 1);
  for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
    out.push_back(compute_flow(frames[k], frames[k + 1], params));
  }
  return out;
}

}  // namespace cellflow::flow
