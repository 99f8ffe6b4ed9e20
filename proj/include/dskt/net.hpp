#pragma once

#include <string>
#include <vector>

#include "dskt/autodiff.hpp"
#include "dskt/group.hpp"
#include "dskt/optim.hpp"
#include "dskt/rng.hpp"

namespace dskt {

// ---- feature transformation law -------------------------------------------
// (g . f)(x) = sigma_reg(g) f(g^{-1} x): block-wise channel permutation
// composed with the spatial action. f is [C*|G|, S, S].
Tensor transform_feature(const GroupSpec& group, const DihedralElement& g, const Tensor& f);

// Group pooling to an invariant plane map, [C*|G|,H,W] -> [C,H,W].
Tensor pool_group_t(const GroupSpec& group, const Tensor& f, ReduceMode mode);
Var pool_group(const GroupSpec& group, Var f, ReduceMode mode);

// ---- lifting and group convolution -----------------------------------------

// Per-slot recipe for generating the transformed copy of a base kernel.
struct KernelSlot {
  std::vector<int> chan_gather;  // reading order of input-group indices, or empty
  SpatialMap spatial;            // action of g on the k x k raster
};

struct LiftPlan {
  GroupSpec group;
  int Cin = 0, Cout = 0, k = 0, stride = 1;
  std::vector<KernelSlot> slots;
};

struct GroupConvPlan {
  GroupSpec group;
  int Cin = 0, Cout = 0, k = 0, stride = 1;  // Cin/Cout are base channel counts
  std::vector<KernelSlot> slots;
};

LiftPlan make_lift_plan(const GroupSpec& group, int Cin, int Cout, int k, int stride = 1);
GroupConvPlan make_group_conv_plan(const GroupSpec& group, int Cin, int Cout, int k,
                                   int stride = 1);

// Stacks f * (g psi) over all g in canonical element order. base kernel is
// [Cout, Cin, k, k]; output [Cout*|G|, H/stride, W/stride].
Var lift(Var image, Var base_kernel, const LiftPlan& plan);
Tensor lift_fwd(const Tensor& image, const Tensor& base_kernel, const LiftPlan& plan);

// Group convolution on a lifted map. base kernel [Cout, Cin*|G|, k, k]; the
// |G| transformed copies are generated, never independently trained. Slot g
// applies the channel permutation g^{-1} and the spatial action g to the
// base kernel, then an ordinary plane convolution.
Var group_conv(Var f, Var base_kernel, const GroupConvPlan& plan);
Tensor group_conv_fwd(const Tensor& f, const Tensor& base_kernel, const GroupConvPlan& plan);

// Test hook: runs the convolution against an explicitly supplied bank of
// per-slot kernels (each [Cout, Cin*|G|, k, k]) instead of generated copies.
Tensor group_conv_with_bank(const Tensor& f, const std::vector<Tensor>& bank, int stride = 1);

// Orbit structure of a k x k raster under the symmetries of the square
// (quarter turns, axis and diagonal flips). Cells in one orbit share one
// weight; convolutions built this way commute with every grid-exact action.
// Returns the orbit id per cell (row-major) and the orbit count.
std::pair<std::vector<int>, int> d4_orbit_map(int k);

// Expands orbit-shared weights [Cout, Cin, R] into a [Cout, Cin, k, k]
// kernel (R = orbit count of k).
Var expand_orbit_kernel(Var w, int k);

// Materializes the transformed copy of the base kernel for one slot.
Tensor transformed_kernel(const Tensor& base, const KernelSlot& slot, int group_order);

// ---- backbone ---------------------------------------------------------------

struct BackboneConfig {
  GroupSpec group{8, true};
  int Cin = 3;
  int C = 8;           // base channels per group element
  int B = 4;           // residual blocks
  int lift_k = 3;
  int conv_k = 3;
  std::vector<int> strides = {2, 2};  // the two downsampling convolutions
  bool plane = false;  // non-equivariant ablation: dense plane convolutions
};

// Binds store parameters to tape leaves on first use and collects gradients
// after backward. One instance per training step.
class TapeParams {
 public:
  TapeParams(Tape& tape, ParamStore& store) : tape_(&tape), store_(&store) {}
  Var get(const std::string& name);
  // Gradients in store order; empty tensors for unused parameters.
  std::vector<Tensor> grads() const;

 private:
  Tape* tape_;
  ParamStore* store_;
  std::vector<std::pair<int, Var>> bound_;
};

// Builds/loads parameters and runs the backbone. Parameter names are stable
// so checkpoints round-trip.
class Backbone {
 public:
  explicit Backbone(const BackboneConfig& cfg);

  // Registers freshly initialized parameters for any missing entries.
  void init_params(ParamStore& store, Rng& rng) const;

  // Forward pass; image is [Cin,S,S] with S a multiple of the total stride.
  Var forward(Tape& tape, Var image, TapeParams& params) const;

  int total_stride() const;
  int out_channels() const { return cfg_.C * cfg_.group.order(); }
  const BackboneConfig& config() const { return cfg_; }

 private:
  BackboneConfig cfg_;
  LiftPlan lift_plan_;
  GroupConvPlan down1_, down2_;
  GroupConvPlan block_;
};

}  // namespace dskt
