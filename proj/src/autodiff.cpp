#include "dskt/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "dskt/kernels.hpp"

namespace dskt {

namespace {

void check_same_tape(const Var& a, const Var& b) {
  if (a.tape != b.tape) throw Error("variables live on different tapes");
}

constexpr double kProbClamp = 1e-7;

}  // namespace

Var Tape::input(Tensor v) { return push(std::move(v), false, "input", {}); }
Var Tape::param(Tensor v) { return push(std::move(v), true, "param", {}); }

Var Tape::push(Tensor value, bool requires_grad, const char* op,
               std::function<void(Tape&, int)> backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backward = std::move(backward);
  n.op = op;
  nodes_.push_back(std::move(n));
  Var v;
  v.tape = this;
  v.id = static_cast<int>(nodes_.size()) - 1;
  return v;
}

Tensor& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (!n.grad_alloc) {
    n.grad = Tensor(n.value.shape);
    n.grad_alloc = true;
  }
  return n.grad;
}

void Tape::backward(const Var& root) {
  if (root.tape != this) throw Error("backward: root from another tape");
  if (val(root).numel() != 1) throw ShapeError("backward: root must be a scalar");
  grad(root.id).data[0] = 1.0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.grad_alloc || !n.backward) continue;
    n.backward(*this, id);
  }
}

// ---- helpers --------------------------------------------------------------

namespace {

Var unary(Var x, const char* name, Tensor value,
          std::function<void(const Tensor& gout, const Tensor& xval, const Tensor& yval,
                             Tensor& gx)>
              bw) {
  Tape& t = *x.tape;
  const int xid = x.id;
  return t.push(std::move(value), t.requires_grad(xid), name,
                [xid, bw](Tape& t, int self) {
                  if (!t.requires_grad(xid)) return;
                  bw(t.grad(self), t.val(xid), t.val(self), t.grad(xid));
                });
}

}  // namespace

// ---- arithmetic -----------------------------------------------------------

Var add(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  if (!t.val(a).same_shape(t.val(b))) throw ShapeError("add: shape mismatch");
  Tensor out = t.val(a);
  const Tensor& bv = t.val(b);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  const int ia = a.id, ib = b.id;
  return t.push(std::move(out), t.requires_grad(ia) || t.requires_grad(ib), "add",
                [ia, ib](Tape& t, int self) {
                  const Tensor& g = t.grad(self);
                  if (t.requires_grad(ia)) {
                    Tensor& ga = t.grad(ia);
                    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
                  }
                  if (t.requires_grad(ib)) {
                    Tensor& gb = t.grad(ib);
                    for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i];
                  }
                });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  if (!t.val(a).same_shape(t.val(b))) throw ShapeError("sub: shape mismatch");
  Tensor out = t.val(a);
  const Tensor& bv = t.val(b);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
  const int ia = a.id, ib = b.id;
  return t.push(std::move(out), t.requires_grad(ia) || t.requires_grad(ib), "sub",
                [ia, ib](Tape& t, int self) {
                  const Tensor& g = t.grad(self);
                  if (t.requires_grad(ia)) {
                    Tensor& ga = t.grad(ia);
                    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
                  }
                  if (t.requires_grad(ib)) {
                    Tensor& gb = t.grad(ib);
                    for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
                  }
                });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  if (!t.val(a).same_shape(t.val(b))) throw ShapeError("mul: shape mismatch");
  Tensor out = t.val(a);
  const Tensor& bv = t.val(b);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  const int ia = a.id, ib = b.id;
  return t.push(std::move(out), t.requires_grad(ia) || t.requires_grad(ib), "mul",
                [ia, ib](Tape& t, int self) {
                  const Tensor& g = t.grad(self);
                  const Tensor& av = t.val(ia);
                  const Tensor& bv = t.val(ib);
                  if (t.requires_grad(ia)) {
                    Tensor& ga = t.grad(ia);
                    for (std::size_t i = 0; i < g.data.size(); ++i)
                      ga.data[i] += g.data[i] * bv.data[i];
                  }
                  if (t.requires_grad(ib)) {
                    Tensor& gb = t.grad(ib);
                    for (std::size_t i = 0; i < g.data.size(); ++i)
                      gb.data[i] += g.data[i] * av.data[i];
                  }
                });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  Tensor out = t.val(a);
  for (auto& v : out.data) v *= s;
  const int ia = a.id;
  return t.push(std::move(out), t.requires_grad(ia), "scale", [ia, s](Tape& t, int self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += s * g.data[i];
  });
}

Var mul_svar(Var x, Var s) {
  check_same_tape(x, s);
  Tape& t = *x.tape;
  if (t.val(s).numel() != 1) throw ShapeError("mul_svar: scalar expected");
  const double sv = t.val(s).data[0];
  Tensor out = t.val(x);
  for (auto& v : out.data) v *= sv;
  const int ix = x.id, is = s.id;
  return t.push(std::move(out), t.requires_grad(ix) || t.requires_grad(is), "mul_svar",
                [ix, is](Tape& t, int self) {
                  const Tensor& g = t.grad(self);
                  const double sv = t.val(is).data[0];
                  const Tensor& xv = t.val(ix);
                  if (t.requires_grad(ix)) {
                    Tensor& gx = t.grad(ix);
                    for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += sv * g.data[i];
                  }
                  if (t.requires_grad(is)) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < g.data.size(); ++i)
                      acc += g.data[i] * xv.data[i];
                    t.grad(is).data[0] += acc;
                  }
                });
}

Var add_svar(Var x, Var s) {
  check_same_tape(x, s);
  Tape& t = *x.tape;
  if (t.val(s).numel() != 1) throw ShapeError("add_svar: scalar expected");
  const double sv = t.val(s).data[0];
  Tensor out = t.val(x);
  for (auto& v : out.data) v += sv;
  const int ix = x.id, is = s.id;
  return t.push(std::move(out), t.requires_grad(ix) || t.requires_grad(is), "add_svar",
                [ix, is](Tape& t, int self) {
                  const Tensor& g = t.grad(self);
                  if (t.requires_grad(ix)) {
                    Tensor& gx = t.grad(ix);
                    for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
                  }
                  if (t.requires_grad(is)) {
                    double acc = 0.0;
                    for (double v : g.data) acc += v;
                    t.grad(is).data[0] += acc;
                  }
                });
}

// ---- activations ----------------------------------------------------------

Var relu(Var x) {
  Tensor out = x.tape->val(x);
  for (auto& v : out.data) v = v > 0 ? v : 0.0;
  return unary(x, "relu", std::move(out),
               [](const Tensor& g, const Tensor& xv, const Tensor&, Tensor& gx) {
                 for (std::size_t i = 0; i < g.data.size(); ++i)
                   if (xv.data[i] > 0) gx.data[i] += g.data[i];
               });
}

Var sigmoid(Var x) {
  Tensor out = x.tape->val(x);
  for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return unary(x, "sigmoid", std::move(out),
               [](const Tensor& g, const Tensor&, const Tensor& yv, Tensor& gx) {
                 for (std::size_t i = 0; i < g.data.size(); ++i)
                   gx.data[i] += g.data[i] * yv.data[i] * (1.0 - yv.data[i]);
               });
}

Var tanh_act(Var x) {
  Tensor out = x.tape->val(x);
  for (auto& v : out.data) v = std::tanh(v);
  return unary(x, "tanh", std::move(out),
               [](const Tensor& g, const Tensor&, const Tensor& yv, Tensor& gx) {
                 for (std::size_t i = 0; i < g.data.size(); ++i)
                   gx.data[i] += g.data[i] * (1.0 - yv.data[i] * yv.data[i]);
               });
}

Var softplus(Var x) {
  Tensor out = x.tape->val(x);
  for (auto& v : out.data) v = v > 30.0 ? v : std::log1p(std::exp(v));
  return unary(x, "softplus", std::move(out),
               [](const Tensor& g, const Tensor& xv, const Tensor&, Tensor& gx) {
                 for (std::size_t i = 0; i < g.data.size(); ++i)
                   gx.data[i] += g.data[i] / (1.0 + std::exp(-xv.data[i]));
               });
}

Var add_bias(Var x, Var bias) {
  check_same_tape(x, bias);
  Tape& t = *x.tape;
  const Tensor& xv = t.val(x);
  const Tensor& bv = t.val(bias);
  if (xv.ndim() != 3 || bv.numel() != xv.dim(0)) throw ShapeError("add_bias: bias must be [C]");
  Tensor out = xv;
  const int C = xv.dim(0);
  const std::size_t hw = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  for (int c = 0; c < C; ++c) {
    double* p = out.plane(c);
    for (std::size_t i = 0; i < hw; ++i) p[i] += bv.data[c];
  }
  const int ix = x.id, ib = bias.id;
  return t.push(std::move(out), t.requires_grad(ix) || t.requires_grad(ib), "add_bias",
                [ix, ib, C, hw](Tape& t, int self) {
                  const Tensor& g = t.grad(self);
                  if (t.requires_grad(ix)) {
                    Tensor& gx = t.grad(ix);
                    for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
                  }
                  if (t.requires_grad(ib)) {
                    Tensor& gb = t.grad(ib);
                    for (int c = 0; c < C; ++c) {
                      const double* p = g.data.data() + c * hw;
                      double acc = 0.0;
                      for (std::size_t i = 0; i < hw; ++i) acc += p[i];
                      gb.data[c] += acc;
                    }
                  }
                });
}

Var add_bias_grouped(Var x, Var bias, int group_order) {
  check_same_tape(x, bias);
  Tape& t = *x.tape;
  const Tensor& xv = t.val(x);
  const Tensor& bv = t.val(bias);
  if (xv.ndim() != 3 || xv.dim(0) != bv.numel() * group_order)
    throw ShapeError("add_bias_grouped: channel extent must be |bias| * group order");
  Tensor out = xv;
  const int C = static_cast<int>(bv.numel());
  const std::size_t hw = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  for (int c = 0; c < C; ++c)
    for (int g = 0; g < group_order; ++g) {
      double* p = out.plane(c * group_order + g);
      for (std::size_t i = 0; i < hw; ++i) p[i] += bv.data[c];
    }
  const int ix = x.id, ib = bias.id;
  return t.push(std::move(out), t.requires_grad(ix) || t.requires_grad(ib), "add_bias_g",
                [ix, ib, C, group_order, hw](Tape& t, int self) {
                  const Tensor& g = t.grad(self);
                  if (t.requires_grad(ix)) {
                    Tensor& gx = t.grad(ix);
                    for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
                  }
                  if (t.requires_grad(ib)) {
                    Tensor& gb = t.grad(ib);
                    for (int c = 0; c < C; ++c) {
                      double acc = 0.0;
                      for (int gg = 0; gg < group_order; ++gg) {
                        const double* p =
                            g.data.data() + static_cast<std::size_t>(c * group_order + gg) * hw;
                        for (std::size_t i = 0; i < hw; ++i) acc += p[i];
                      }
                      gb.data[c] += acc;
                    }
                  }
                });
}

Var softmax_channels(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = t.val(x);
  if (xv.ndim() != 3) throw ShapeError("softmax_channels: [C,H,W] expected");
  const int C = xv.dim(0);
  const std::size_t hw = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  Tensor out(xv.shape);
  for (std::size_t i = 0; i < hw; ++i) {
    double mx = -1e300;
    for (int c = 0; c < C; ++c) mx = std::max(mx, xv.data[c * hw + i]);
    double z = 0.0;
    for (int c = 0; c < C; ++c) z += std::exp(xv.data[c * hw + i] - mx);
    for (int c = 0; c < C; ++c) out.data[c * hw + i] = std::exp(xv.data[c * hw + i] - mx) / z;
  }
  const int ix = x.id;
  return t.push(std::move(out), t.requires_grad(ix), "softmax",
                [ix, C, hw](Tape& t, int self) {
                  if (!t.requires_grad(ix)) return;
                  const Tensor& g = t.grad(self);
                  const Tensor& y = t.val(self);
                  Tensor& gx = t.grad(ix);
                  for (std::size_t i = 0; i < hw; ++i) {
                    double dot = 0.0;
                    for (int c = 0; c < C; ++c) dot += g.data[c * hw + i] * y.data[c * hw + i];
                    for (int c = 0; c < C; ++c)
                      gx.data[c * hw + i] +=
                          y.data[c * hw + i] * (g.data[c * hw + i] - dot);
                  }
                });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  Tape& t = *xs[0].tape;
  int C = 0;
  const int H = t.val(xs[0]).dim(1), W = t.val(xs[0]).dim(2);
  bool rg = false;
  for (const Var& v : xs) {
    check_same_tape(xs[0], v);
    const Tensor& tv = t.val(v);
    if (tv.ndim() != 3 || tv.dim(1) != H || tv.dim(2) != W)
      throw ShapeError("concat_channels: spatial extents differ");
    C += tv.dim(0);
    rg = rg || t.requires_grad(v.id);
  }
  Tensor out({C, H, W});
  std::size_t off = 0;
  std::vector<int> ids;
  std::vector<std::size_t> sizes;
  for (const Var& v : xs) {
    const Tensor& tv = t.val(v);
    std::copy(tv.data.begin(), tv.data.end(), out.data.begin() + off);
    ids.push_back(v.id);
    sizes.push_back(tv.data.size());
    off += tv.data.size();
  }
  return t.push(std::move(out), rg, "concat", [ids, sizes](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t j = 0; j < ids.size(); ++j) {
      if (t.requires_grad(ids[j])) {
        Tensor& gx = t.grad(ids[j]);
        for (std::size_t i = 0; i < sizes[j]; ++i) gx.data[i] += g.data[off + i];
      }
      off += sizes[j];
    }
  });
}

Var gather_channels(Var x, std::vector<int> idx) {
  Tape& t = *x.tape;
  const Tensor& xv = t.val(x);
  if (xv.ndim() != 3) throw ShapeError("gather_channels: [C,H,W] expected");
  const int Cin = xv.dim(0);
  for (int i : idx)
    if (i < 0 || i >= Cin) throw ShapeError("gather_channels: index out of range");
  const std::size_t hw = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  Tensor out({static_cast<int>(idx.size()), xv.dim(1), xv.dim(2)});
  for (std::size_t j = 0; j < idx.size(); ++j)
    std::copy(xv.data.begin() + idx[j] * hw, xv.data.begin() + (idx[j] + 1) * hw,
              out.data.begin() + j * hw);
  const int ix = x.id;
  return t.push(std::move(out), t.requires_grad(ix), "gather_ch",
                [ix, idx, hw](Tape& t, int self) {
                  if (!t.requires_grad(ix)) return;
                  const Tensor& g = t.grad(self);
                  Tensor& gx = t.grad(ix);
                  for (std::size_t j = 0; j < idx.size(); ++j) {
                    double* dst = gx.data.data() + idx[j] * hw;
                    const double* src = g.data.data() + j * hw;
                    for (std::size_t i = 0; i < hw; ++i) dst[i] += src[i];
                  }
                });
}

Var gather_linear(Var x, std::vector<int> idx, std::vector<int> out_shape) {
  Tape& t = *x.tape;
  const Tensor& xv = t.val(x);
  if (Tensor::numel_of(out_shape) != static_cast<long long>(idx.size()))
    throw ShapeError("gather_linear: index count does not match output shape");
  for (int i : idx)
    if (i < 0 || i >= static_cast<int>(xv.data.size()))
      throw ShapeError("gather_linear: index out of range");
  Tensor out(out_shape);
  for (std::size_t i = 0; i < idx.size(); ++i) out.data[i] = xv.data[idx[i]];
  const int ix = x.id;
  return t.push(std::move(out), t.requires_grad(ix), "gather_lin",
                [ix, idx](Tape& t, int self) {
                  if (!t.requires_grad(ix)) return;
                  const Tensor& g = t.grad(self);
                  Tensor& gx = t.grad(ix);
                  for (std::size_t i = 0; i < idx.size(); ++i) gx.data[idx[i]] += g.data[i];
                });
}

Var permute_channels(Var x, const GroupPermutation& perm, int blocks) {
  Tape& t = *x.tape;
  const Tensor& xv = t.val(x);
  if (xv.dim(0) != blocks * perm.order)
    throw ShapeError("permute_channels: channel extent must equal blocks * order");
  // out[c*O + perm.map[i]] = in[c*O + i]  ==  gather with the inverse map.
  const GroupPermutation inv = perm.inverse();
  std::vector<int> idx(static_cast<std::size_t>(blocks) * perm.order);
  for (int c = 0; c < blocks; ++c)
    for (int j = 0; j < perm.order; ++j) idx[c * perm.order + j] = c * perm.order + inv.map[j];
  return gather_channels(x, std::move(idx));
}

Var reduce_group(Var x, int group_order, ReduceMode mode) {
  Tape& t = *x.tape;
  const Tensor& xv = t.val(x);
  if (xv.ndim() != 3 || group_order < 1 || xv.dim(0) % group_order != 0)
    throw ShapeError("reduce_group: channel extent not divisible by group order");
  const int C = xv.dim(0) / group_order;
  const std::size_t hw = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  Tensor out({C, xv.dim(1), xv.dim(2)});
  std::vector<int> argmax;
  if (mode == ReduceMode::kMax) argmax.assign(out.data.size(), 0);
  for (int c = 0; c < C; ++c)
    for (std::size_t i = 0; i < hw; ++i) {
      if (mode == ReduceMode::kMax) {
        double best = xv.data[(static_cast<std::size_t>(c) * group_order) * hw + i];
        int bg = 0;
        for (int g = 1; g < group_order; ++g) {
          const double v = xv.data[(static_cast<std::size_t>(c) * group_order + g) * hw + i];
          if (v > best) {
            best = v;
            bg = g;
          }
        }
        out.data[c * hw + i] = best;
        argmax[c * hw + i] = bg;
      } else {
        double s = 0.0;
        for (int g = 0; g < group_order; ++g)
          s += xv.data[(static_cast<std::size_t>(c) * group_order + g) * hw + i];
        out.data[c * hw + i] = s / group_order;
      }
    }
  const int ix = x.id;
  return t.push(std::move(out), t.requires_grad(ix), "reduce_group",
                [ix, C, hw, group_order, mode, argmax](Tape& t, int self) {
                  if (!t.requires_grad(ix)) return;
                  const Tensor& g = t.grad(self);
                  Tensor& gx = t.grad(ix);
                  for (int c = 0; c < C; ++c)
                    for (std::size_t i = 0; i < hw; ++i) {
                      if (mode == ReduceMode::kMax) {
                        gx.data[(static_cast<std::size_t>(c) * group_order + argmax[c * hw + i]) *
                                    hw +
                                i] += g.data[c * hw + i];
                      } else {
                        const double v = g.data[c * hw + i] / group_order;
                        for (int gg = 0; gg < group_order; ++gg)
                          gx.data[(static_cast<std::size_t>(c) * group_order + gg) * hw + i] += v;
                      }
                    }
                });
}

Var l2_normalize_blocks(Var x, int block, double eps) {
  Tape& t = *x.tape;
  const Tensor& xv = t.val(x);
  if (xv.ndim() != 3 || block < 1 || xv.dim(0) % block != 0)
    throw ShapeError("l2_normalize_blocks: channel extent not divisible by block");
  const int B = xv.dim(0) / block;
  const std::size_t hw = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  Tensor out(xv.shape);
  for (int b = 0; b < B; ++b)
    for (std::size_t i = 0; i < hw; ++i) {
      double n2 = 0.0;
      for (int k = 0; k < block; ++k) {
        const double v = xv.data[(static_cast<std::size_t>(b) * block + k) * hw + i];
        n2 += v * v;
      }
      const double m = std::max(std::sqrt(n2), eps);
      for (int k = 0; k < block; ++k)
        out.data[(static_cast<std::size_t>(b) * block + k) * hw + i] =
            xv.data[(static_cast<std::size_t>(b) * block + k) * hw + i] / m;
    }
  const int ix = x.id;
  return t.push(std::move(out), t.requires_grad(ix), "l2norm",
                [ix, B, hw, block, eps](Tape& t, int self) {
                  if (!t.requires_grad(ix)) return;
                  const Tensor& g = t.grad(self);
                  const Tensor& xv = t.val(ix);
                  const Tensor& y = t.val(self);
                  Tensor& gx = t.grad(ix);
                  for (int b = 0; b < B; ++b)
                    for (std::size_t i = 0; i < hw; ++i) {
                      double n2 = 0.0, dot = 0.0;
                      for (int k = 0; k < block; ++k) {
                        const std::size_t at = (static_cast<std::size_t>(b) * block + k) * hw + i;
                        n2 += xv.data[at] * xv.data[at];
                        dot += g.data[at] * y.data[at];
                      }
                      const double n = std::sqrt(n2);
                      if (n > eps) {
                        for (int k = 0; k < block; ++k) {
                          const std::size_t at =
                              (static_cast<std::size_t>(b) * block + k) * hw + i;
                          gx.data[at] += (g.data[at] - dot * y.data[at]) / n;
                        }
                      } else {
                        for (int k = 0; k < block; ++k) {
                          const std::size_t at =
                              (static_cast<std::size_t>(b) * block + k) * hw + i;
                          gx.data[at] += g.data[at] / eps;
                        }
                      }
                    }
                });
}

Var conv2d(Var x, Var k, int stride) {
  check_same_tape(x, k);
  Tape& t = *x.tape;
  Tensor out = kernels::conv2d(t.val(x), t.val(k), stride);
  const int ix = x.id, ik = k.id;
  const int H = t.val(x).dim(1), W = t.val(x).dim(2);
  const int kh = t.val(k).dim(2), kw = t.val(k).dim(3);
  return t.push(std::move(out), t.requires_grad(ix) || t.requires_grad(ik), "conv2d",
                [ix, ik, H, W, kh, kw, stride](Tape& t, int self) {
                  const Tensor& g = t.grad(self);
                  if (t.requires_grad(ix)) {
                    Tensor gi = kernels::conv2d_grad_input(g, t.val(ik), H, W, stride);
                    Tensor& gx = t.grad(ix);
                    for (std::size_t i = 0; i < gi.data.size(); ++i) gx.data[i] += gi.data[i];
                  }
                  if (t.requires_grad(ik)) {
                    Tensor gk = kernels::conv2d_grad_kernel(g, t.val(ix), kh, kw, stride);
                    Tensor& gkv = t.grad(ik);
                    for (std::size_t i = 0; i < gk.data.size(); ++i) gkv.data[i] += gk.data[i];
                  }
                });
}

Var shift_bilinear(Var x, double dy, double dx) {
  Tape& t = *x.tape;
  Tensor out = kernels::shift_bilinear(t.val(x), dy, dx);
  const int ix = x.id;
  return t.push(std::move(out), t.requires_grad(ix), "shift",
                [ix, dy, dx](Tape& t, int self) {
                  if (!t.requires_grad(ix)) return;
                  Tensor gi = kernels::shift_bilinear_adjoint(t.grad(self), dy, dx);
                  Tensor& gx = t.grad(ix);
                  for (std::size_t i = 0; i < gi.data.size(); ++i) gx.data[i] += gi.data[i];
                });
}

namespace {

Var reduce_all(Var x, bool mean) {
  Tape& t = *x.tape;
  const Tensor& xv = t.val(x);
  const double denom = mean ? static_cast<double>(xv.numel()) : 1.0;
  double acc = 0.0;
  for (double v : xv.data) acc += v;
  Tensor out({1});
  out.data[0] = acc / denom;
  const int ix = x.id;
  return t.push(std::move(out), t.requires_grad(ix), mean ? "mean" : "sum",
                [ix, denom](Tape& t, int self) {
                  if (!t.requires_grad(ix)) return;
                  const double g = t.grad(self).data[0] / denom;
                  Tensor& gx = t.grad(ix);
                  for (auto& v : gx.data) v += g;
                });
}

}  // namespace

Var mean_all(Var x) { return reduce_all(x, true); }
Var sum_all(Var x) { return reduce_all(x, false); }

// ---- losses ---------------------------------------------------------------

Var loss_bce(Var probs, const Tensor& targets, double gamma) {
  Tape& t = *probs.tape;
  const Tensor& p = t.val(probs);
  if (!p.same_shape(targets)) throw ShapeError("loss_bce: target shape mismatch");
  const double M = static_cast<double>(p.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    const double pc = std::clamp(p.data[i], kProbClamp, 1.0 - kProbClamp);
    const double tv = targets.data[i];
    acc += -gamma * tv * std::log(pc) - (1.0 - tv) * std::log(1.0 - pc);
  }
  Tensor out({1});
  out.data[0] = acc / M;
  const int ip = probs.id;
  Tensor tg = targets;
  return t.push(std::move(out), t.requires_grad(ip), "bce",
                [ip, tg, gamma, M](Tape& t, int self) {
                  if (!t.requires_grad(ip)) return;
                  const double g = t.grad(self).data[0] / M;
                  const Tensor& p = t.val(ip);
                  Tensor& gp = t.grad(ip);
                  for (std::size_t i = 0; i < p.data.size(); ++i) {
                    if (p.data[i] <= kProbClamp || p.data[i] >= 1.0 - kProbClamp) continue;
                    const double tv = tg.data[i];
                    gp.data[i] += g * (-gamma * tv / p.data[i] + (1.0 - tv) / (1.0 - p.data[i]));
                  }
                });
}

namespace {

Var masked_regression(Var pred, const Tensor& target, const Tensor& mask, bool smooth,
                      const char* name) {
  Tape& t = *pred.tape;
  const Tensor& p = t.val(pred);
  if (!p.same_shape(target) || !p.same_shape(mask))
    throw ShapeError(std::string(name) + ": shape mismatch");
  double m = 0.0;
  for (double v : mask.data) m += v;
  const double denom = m > 0 ? m : 1.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    if (mask.data[i] == 0.0) continue;
    const double d = p.data[i] - target.data[i];
    if (smooth)
      acc += std::abs(d) <= 1.0 ? 0.5 * d * d : std::abs(d) - 0.5;
    else
      acc += std::abs(d);
  }
  Tensor out({1});
  out.data[0] = acc / denom;
  const int ip = pred.id;
  Tensor tg = target, mk = mask;
  return t.push(std::move(out), t.requires_grad(ip), name,
                [ip, tg, mk, smooth, denom](Tape& t, int self) {
                  if (!t.requires_grad(ip)) return;
                  const double g = t.grad(self).data[0] / denom;
                  const Tensor& p = t.val(ip);
                  Tensor& gp = t.grad(ip);
                  for (std::size_t i = 0; i < p.data.size(); ++i) {
                    if (mk.data[i] == 0.0) continue;
                    const double d = p.data[i] - tg.data[i];
                    double dd;
                    if (smooth)
                      dd = std::abs(d) <= 1.0 ? d : (d > 0 ? 1.0 : -1.0);
                    else
                      dd = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
                    gp.data[i] += g * dd;
                  }
                });
}

}  // namespace

Var loss_smooth_l1(Var pred, const Tensor& target, const Tensor& mask) {
  return masked_regression(pred, target, mask, true, "smooth_l1");
}

Var loss_abs(Var pred, const Tensor& target, const Tensor& mask) {
  return masked_regression(pred, target, mask, false, "abs_loss");
}

Var loss_multiclass_ce(Var logits, const Tensor& classes, double gamma) {
  Tape& t = *logits.tape;
  const Tensor& z = t.val(logits);
  if (z.ndim() != 3) throw ShapeError("loss_multiclass_ce: logits must be [S,H,W]");
  const int S = z.dim(0);
  const std::size_t hw = static_cast<std::size_t>(z.dim(1)) * z.dim(2);
  if (classes.numel() != static_cast<long long>(hw))
    throw ShapeError("loss_multiclass_ce: class map size mismatch");
  for (double c : classes.data)
    if (c < 0 || c >= S || c != std::floor(c)) throw ShapeError("invalid class index");
  const double M = static_cast<double>(hw);
  double acc = 0.0;
  for (std::size_t i = 0; i < hw; ++i) {
    double mx = -1e300;
    for (int s = 0; s < S; ++s) mx = std::max(mx, z.data[s * hw + i]);
    double lse = 0.0;
    for (int s = 0; s < S; ++s) lse += std::exp(z.data[s * hw + i] - mx);
    lse = mx + std::log(lse);
    const int cls = static_cast<int>(classes.data[i]);
    const double w = cls > 0 ? gamma : 1.0;
    acc += w * (lse - z.data[cls * hw + i]);
  }
  Tensor out({1});
  out.data[0] = acc / M;
  const int iz = logits.id;
  Tensor cl = classes;
  return t.push(std::move(out), t.requires_grad(iz), "fold_ce",
                [iz, cl, gamma, S, hw, M](Tape& t, int self) {
                  if (!t.requires_grad(iz)) return;
                  const double g = t.grad(self).data[0] / M;
                  const Tensor& z = t.val(iz);
                  Tensor& gz = t.grad(iz);
                  for (std::size_t i = 0; i < hw; ++i) {
                    double mx = -1e300;
                    for (int s = 0; s < S; ++s) mx = std::max(mx, z.data[s * hw + i]);
                    double denom = 0.0;
                    for (int s = 0; s < S; ++s) denom += std::exp(z.data[s * hw + i] - mx);
                    const int cls = static_cast<int>(cl.data[i]);
                    const double w = cls > 0 ? gamma : 1.0;
                    for (int s = 0; s < S; ++s) {
                      const double ps = std::exp(z.data[s * hw + i] - mx) / denom;
                      gz.data[s * hw + i] += g * w * (ps - (s == cls ? 1.0 : 0.0));
                    }
                  }
                });
}

}  // namespace dskt
