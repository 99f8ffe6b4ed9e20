#pragma once

#include <vector>

#include "dskt/autodiff.hpp"
#include "dskt/group.hpp"

namespace dskt {

// Fiber-level transform: applies sigma_reg(b^l r^n) block-wise per channel at
// every spatial location. No spatial action.
Tensor fiber_transform(const GroupSpec& group, const Tensor& F, int l, int n);

// Per-channel cosine similarity of the |G|-dimensional sub-fibers of two
// fibers of length C*|G|, with eps-guarded denominators.
std::vector<double> group_similarity(const std::vector<double>& f1,
                                     const std::vector<double>& f2, int C,
                                     double eps = 1e-8);

// Reflectional matching over the neighbourhood Q_k = {-k..k}^2.
// Slot n of the output pairs the r^n-transformed fiber sampled at
// x + r^{-n}(q) with the (b r^n)-transformed fiber sampled at x + b r^n(q),
// summed over q. Off-grid sample positions use bilinear fiber interpolation
// with zero fibers outside the frame. Output layout [C*N, H, W], slot minor.
// `normalize` divides by |Q_k| for scale comparability (off by default).
Tensor reflectional_match_fwd(const GroupSpec& group, const Tensor& F, int k,
                              double eps = 1e-8, bool normalize = false);
Tensor reflectional_match_serial(const GroupSpec& group, const Tensor& F, int k,
                                 double eps = 1e-8, bool normalize = false);

// Rotational matching: slot m = 1..floor(N/2) pairs the untouched fiber at
// x + q with the r^m-transformed fiber at x + r^m(q). Output [C*floor(N/2),H,W].
Tensor rotational_match_fwd(const GroupSpec& group, const Tensor& F, int k,
                            double eps = 1e-8, bool normalize = false);
Tensor rotational_match_serial(const GroupSpec& group, const Tensor& F, int k,
                               double eps = 1e-8, bool normalize = false);

// Differentiable tape versions.
Var reflectional_match(Var F, const GroupSpec& group, int k, double eps = 1e-8,
                       bool normalize = false);
Var rotational_match(Var F, const GroupSpec& group, int k, double eps = 1e-8,
                     bool normalize = false);

// Multi-scale concatenation. For the reflection branch: [H^(k1); ..; H^(kM); F].
// For the rotation branch: [H^(k1); ..; H^(kM); Pool_G(F)].
Var multiscale_concat_ref(Var F, const GroupSpec& group, const std::vector<int>& scales,
                          double eps = 1e-8, bool normalize = false);
Var multiscale_concat_rot(Var F, const GroupSpec& group, const std::vector<int>& scales,
                          ReduceMode pool_mode, double eps = 1e-8, bool normalize = false);

}  // namespace dskt
