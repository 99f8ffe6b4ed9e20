#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "dskt/group.hpp"
#include "dskt/tensor.hpp"

namespace dskt {

class Tape;

// Handle to a tensor node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode tape: an ordered record of primitive applications. Creation
// order is a topological order, so replaying backward functions in reverse
// propagates gradients to every parameter leaf. A tape is single-threaded;
// one training step owns one tape.
class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;             // allocated on demand, same shape as value
    bool requires_grad = false;
    bool grad_alloc = false;
    std::function<void(Tape&, int)> backward;  // id of this node
    const char* op = "leaf";
  };

  Var input(Tensor v);   // constant leaf
  Var param(Tensor v);   // differentiable leaf

  Var push(Tensor value, bool requires_grad, const char* op,
           std::function<void(Tape&, int)> backward);

  const Tensor& val(int id) const { return nodes_[id].value; }
  const Tensor& val(const Var& v) const { return nodes_[v.id].value; }
  Node& node(int id) { return nodes_[id]; }

  // Gradient tensor of a node, allocating zeros on first use.
  Tensor& grad(int id);
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  // Seeds d(root)/d(root) = 1 (root must be scalar) and replays the tape.
  void backward(const Var& root);

  std::size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node> nodes_;  // deque: node references stay valid as ops are pushed
};

// ---- differentiable primitives ------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// x * s and x + s where s is a scalar {1} variable (e.g. a learnable weight).
Var mul_svar(Var x, Var s);
Var add_svar(Var x, Var s);

Var relu(Var x);
Var sigmoid(Var x);
Var tanh_act(Var x);
Var softplus(Var x);

// Adds bias[c] to every spatial entry of channel c.
Var add_bias(Var x, Var bias);

// Adds bias[c] to all `group_order` slots of base channel c; the sharing
// keeps constant offsets invariant under group-channel permutations.
Var add_bias_grouped(Var x, Var bias, int group_order);

// Softmax over the channel axis of [C,H,W], per spatial position.
Var softmax_channels(Var x);

Var concat_channels(const std::vector<Var>& xs);

// out channel j = in channel idx[j]; indices may repeat.
Var gather_channels(Var x, std::vector<int> idx);

// Fully general linear gather: out.data[i] = x.data[idx[i]] with the given
// output shape; the gradient scatter-adds. Used for weight-sharing schemes.
Var gather_linear(Var x, std::vector<int> idx, std::vector<int> out_shape);

// Applies perm within each of the `blocks` channel groups (channel extent
// must equal blocks * perm.order). Gradient is the inverse permutation.
Var permute_channels(Var x, const GroupPermutation& perm, int blocks);

enum class ReduceMode { kMax, kMean };

// [C*G,H,W] -> [C,H,W], reducing over the G group slots of each channel.
// Max mode backpropagates to the argmax slot, ties to the lowest index.
Var reduce_group(Var x, int group_order, ReduceMode mode);

// Normalizes each channel block of size `block` at every position to unit
// L2 norm with an eps-guarded denominator max(||a||, eps).
Var l2_normalize_blocks(Var x, int block, double eps = 1e-8);

// Cross-correlation, zero padding (k-1)/2; stride moves the sampling grid.
Var conv2d(Var x, Var k, int stride = 1);

// Bilinear resampling of every plane at +(dy,dx), zero outside the frame.
Var shift_bilinear(Var x, double dy, double dx);

Var mean_all(Var x);  // scalar
Var sum_all(Var x);   // scalar

// ---- loss primitives (scalar outputs) -----------------------------------

// Weighted binary cross-entropy over every entry: mean of
// -gamma*t*log(p) - (1-t)*log(1-p), probabilities clamped to [1e-7, 1-1e-7].
Var loss_bce(Var probs, const Tensor& targets, double gamma);

// Masked mean of SmoothL1(pred - target), quadratic below 1, linear above;
// zero when the mask is empty.
Var loss_smooth_l1(Var pred, const Tensor& target, const Tensor& mask);

// Masked mean absolute difference; zero when the mask is empty.
Var loss_abs(Var pred, const Tensor& target, const Tensor& mask);

// Multi-class cross-entropy on logits [S,H,W] against class indices [H,W];
// positions with a nonzero target class are weighted by gamma.
Var loss_multiclass_ce(Var logits, const Tensor& classes, double gamma);

}  // namespace dskt
