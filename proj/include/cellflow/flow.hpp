#pragma once

// Horn-Schunck dense optical flow for grayscale video.
//
// Axis convention: x runs along columns (rightwards), y runs along rows
// (downwards). Velocities are in pixels per frame along those axes.
//
// Borders are handled by replicate padding everywhere (Sobel, local
// averages), so a constant image has exactly zero gradient.
//
// Sign convention. sobel_gradients() returns the derivative-style response:
// an intensity ramp increasing to the right gives positive I_x. The temporal
// term is the forward difference current - next. The update equations are
// driven by the Sobel kernels applied as a true 2-D convolution, which
// mirrors the kernels and therefore negates the derivative-style response;
// flow_gradients() assembles that triplet. With these three conventions
// combined the recovered (u, v) points along the direction of motion.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "cellflow/grid.hpp"

namespace cellflow::flow {

struct GradientTriplet {
  RealGrid ix;
  RealGrid iy;
  RealGrid it;
};

struct FlowField {
  RealGrid u;
  RealGrid v;
};

struct FlowParams {
  double lambda = 1.0;   // brightness-constancy weight; enters as 1/lambda
  int iterations = 10;

  void validate() const;
};

// 3x3 Sobel-x / Sobel-y responses, derivative convention. Requires >= 3x3.
std::pair<RealGrid, RealGrid> sobel_gradients(const GrayFrame& frame);

// current - next, elementwise.
RealGrid temporal_derivative(const GrayFrame& current, const GrayFrame& next);

// 4-neighbour mean with replicate padding. Requires >= 3x3.
RealGrid local_average(const RealGrid& field);

// Spatial terms from convolving with the Sobel kernels, temporal term from
// temporal_derivative(). This is what compute_flow feeds to hs_step.
GradientTriplet flow_gradients(const GrayFrame& current, const GrayFrame& next);

// One Horn-Schunck update:
//   U = Ubar - (Ix*Ubar + Iy*Vbar + It) / (1/lambda + Ix^2 + Iy^2) * Ix
//   V = Vbar - (Ix*Ubar + Iy*Vbar + It) / (1/lambda + Ix^2 + Iy^2) * Iy
FlowField hs_step(const RealGrid& ubar, const RealGrid& vbar, const GradientTriplet& grads,
                  double lambda);

// Starts from Ubar = Vbar = 0 and runs params.iterations Jacobi rounds.
FlowField compute_flow(const GrayFrame& current, const GrayFrame& next,
                       const FlowParams& params = {});

// One field per consecutive frame pair, in frame order.
std::vector<FlowField> video_flow(std::span<const GrayFrame> frames,
                                  const FlowParams& params = {});

}  // namespace cellflow::flow
