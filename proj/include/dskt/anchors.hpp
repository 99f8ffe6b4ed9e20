#pragma once

#include "dskt/autodiff.hpp"
#include "dskt/geometry.hpp"

namespace dskt {

// Reflection-counterpart aggregation (learnable mixer, shared across the N
// rotation channels and all positions). Y is [2N,H,W]; the mixer is the
// 2->1 linear map N(u,v) = w0*u + w1*v + b. Slot i of the output combines
// N(Y_i, Y_{i+N}) with N(Y_{i+N}, Y_i): added for the symmetric components
// (p, rho), subtracted for the sign-flipping orientation component.
Var counterpart_aggregate(Var Y, Var w0, Var w1, Var bias, bool antisymmetric);

// Orientational anchor construction: anchor alpha sums aggregated channels
// alpha and alpha + N/2 (a line at theta equals the line at theta + pi).
// Input [N,H,W] -> output [N/2,H,W], pre-activation.
Var anchor_construct_raw(Var aggregated);

// Anchored reflection outputs after their range-enforcing activations:
// p = sigmoid, rho = softplus (length, normalized by the image diagonal),
// theta = (pi/N) tanh (offset within the anchor's half-open bin).
struct AnchoredOutput {
  Var p, rho, theta;  // each [A,H,W]
  int num_anchors = 0;
  int group_n = 0;  // N; anchor alpha covers base orientation 2*pi*alpha/N
};

// Fully decoded reflection axis.
struct ReflectionAxisPrediction {
  double score = 0;
  double x = 0, y = 0;        // midpoint, image px
  double rho = 0;             // length, image px
  double theta_abs = 0;       // absolute orientation in [0, pi)
  double x_s = 0, y_s = 0, x_e = 0, y_e = 0;
  int anchor = 0;
  int cell_x = 0, cell_y = 0;
};

// Eq. 15/16 style endpoint decoding at one anchored cell. rho is in pixels;
// (x, y) are feature-grid coordinates scaled by `stride` into image pixels.
ReflectionAxisPrediction decode_anchored_axis(int alpha, int x, int y, double p, double rho,
                                              double theta, double stride, int N);

// Trainable targets for the anchored reflection branch. mask marks the
// positive cells (per anchor) where rho/theta are supervised.
struct ReflectionTargets {
  Tensor p, rho, theta, mask;  // [A,Hf,Wf]
};

// Each GT axis activates exactly one anchor (nearest base orientation, ties
// to the higher bin) at the grid cell nearest its midpoint. rho targets are
// normalized by the image diagonal. With num_anchors == 1 the single anchor
// covers all orientations and theta targets are absolute angles in [0, pi).
ReflectionTargets assign_gt_to_anchors(const std::vector<Segment>& axes, int N,
                                       int num_anchors, int Hf, int Wf, double stride,
                                       double diag);

}  // namespace dskt
