#pragma once

#include "dskt/autodiff.hpp"

namespace dskt {

struct LossWeights {
  double lambda_rho = 1.0;
  double lambda_theta = 150.0;  // orientation lives on the radian scale
  double lambda_fold = 2.0;
  double gamma_ref = 3.0;
  double gamma_rot = 3.0;
};

// Midpoint classification: weighted binary cross-entropy over all anchored
// cells, positive weight gamma_ref.
Var loss_midpoint(Var probs, const Tensor& targets, double gamma_ref);

// Length regression: SmoothL1 on cells with a positive midpoint.
Var loss_length(Var rho, const Tensor& targets, const Tensor& mask);

// Orientation regression: mean absolute offset difference on positive cells.
// No wrap is needed inside an anchor bin.
Var loss_orientation(Var theta, const Tensor& targets, const Tensor& mask);

// Fold classification: weighted multi-class cross-entropy; cells whose
// target is a true rotation center carry weight gamma_rot.
Var loss_fold(Var logits, const Tensor& classes, double gamma_rot);

struct LossParts {
  Var midpoint, length, orientation, fold;
};

// L_p + lambda_rho L_rho + lambda_theta L_theta + lambda_fold L_fold.
Var loss_total(const LossParts& parts, const LossWeights& w);

}  // namespace dskt
