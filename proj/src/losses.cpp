#include "dskt/losses.hpp"

namespace dskt {

Var loss_midpoint(Var probs, const Tensor& targets, double gamma_ref) {
  return loss_bce(probs, targets, gamma_ref);
}

Var loss_length(Var rho, const Tensor& targets, const Tensor& mask) {
  return loss_smooth_l1(rho, targets, mask);
}

Var loss_orientation(Var theta, const Tensor& targets, const Tensor& mask) {
  return loss_abs(theta, targets, mask);
}

Var loss_fold(Var logits, const Tensor& classes, double gamma_rot) {
  return loss_multiclass_ce(logits, classes, gamma_rot);
}

Var loss_total(const LossParts& parts, const LossWeights& w) {
  Var total = add(parts.midpoint, scale(parts.length, w.lambda_rho));
  total = add(total, scale(parts.orientation, w.lambda_theta));
  return add(total, scale(parts.fold, w.lambda_fold));
}

}  // namespace dskt
