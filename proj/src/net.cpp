#include "dskt/net.hpp"

#include <cmath>

#include "dskt/kernels.hpp"

namespace dskt {

Tensor transform_feature(const GroupSpec& group, const DihedralElement& g, const Tensor& f) {
  if (g.order != group.N) throw OrderMismatchError("transform_feature: element order mismatch");
  const int G = group.order();
  if (f.ndim() != 3 || f.dim(0) % G != 0)
    throw ShapeError("transform_feature: channel extent not divisible by |G|");
  const int C = f.dim(0) / G;
  const Tensor moved = act_on_image(g, f);
  const GroupPermutation rep = regular_representation(group, g);
  Tensor out(f.shape);
  const std::size_t hw = static_cast<std::size_t>(f.dim(1)) * f.dim(2);
  for (int c = 0; c < C; ++c)
    for (int j = 0; j < G; ++j) {
      const double* src = moved.data.data() + (static_cast<std::size_t>(c) * G + j) * hw;
      double* dst = out.data.data() + (static_cast<std::size_t>(c) * G + rep.map[j]) * hw;
      std::copy(src, src + hw, dst);
    }
  return out;
}

Tensor pool_group_t(const GroupSpec& group, const Tensor& f, ReduceMode mode) {
  Tape t;
  return t.val(reduce_group(t.input(f), group.order(), mode));
}

Var pool_group(const GroupSpec& group, Var f, ReduceMode mode) {
  return reduce_group(f, group.order(), mode);
}

LiftPlan make_lift_plan(const GroupSpec& group, int Cin, int Cout, int k, int stride) {
  LiftPlan p;
  p.group = group;
  p.Cin = Cin;
  p.Cout = Cout;
  p.k = k;
  p.stride = stride;
  for (int gi = 0; gi < group.order(); ++gi) {
    KernelSlot s;
    s.spatial = spatial_action_map(group.element_at(gi), k);
    p.slots.push_back(std::move(s));
  }
  return p;
}

GroupConvPlan make_group_conv_plan(const GroupSpec& group, int Cin, int Cout, int k,
                                   int stride) {
  GroupConvPlan p;
  p.group = group;
  p.Cin = Cin;
  p.Cout = Cout;
  p.k = k;
  p.stride = stride;
  const int G = group.order();
  for (int gi = 0; gi < G; ++gi) {
    const DihedralElement g = group.element_at(gi);
    const DihedralElement ginv = inverse(g);
    KernelSlot s;
    s.spatial = spatial_action_map(g, k);
    s.chan_gather.resize(G);
    for (int j = 0; j < G; ++j)
      s.chan_gather[j] = group.index_of(compose(ginv, group.element_at(j)));
    p.slots.push_back(std::move(s));
  }
  return p;
}

Tensor transformed_kernel(const Tensor& base, const KernelSlot& slot, int group_order) {
  // base: [Cout, Cin_eff, k, k]; gather input-group channels, then apply the
  // spatial action to each k x k plane.
  const int Cout = base.dim(0), Cin_eff = base.dim(1), k = base.dim(2);
  Tensor out({Cout, Cin_eff, k, k});
  const std::size_t kk = static_cast<std::size_t>(k) * k;
  for (int o = 0; o < Cout; ++o)
    for (int ci = 0; ci < Cin_eff; ++ci) {
      int src_ci = ci;
      if (!slot.chan_gather.empty()) {
        const int G = group_order;
        src_ci = (ci / G) * G + slot.chan_gather[ci % G];
      }
      const double* src =
          base.data.data() + (static_cast<std::size_t>(o) * Cin_eff + src_ci) * kk;
      double* dst = out.data.data() + (static_cast<std::size_t>(o) * Cin_eff + ci) * kk;
      slot.spatial.apply_plane(src, dst);
    }
  return out;
}

namespace {

// Adjoint of transformed_kernel: scatters a transformed-kernel gradient back
// onto the base kernel.
void transformed_kernel_adjoint(const Tensor& gout, const KernelSlot& slot, int group_order,
                                Tensor& gbase) {
  const int Cout = gout.dim(0), Cin_eff = gout.dim(1), k = gout.dim(2);
  const std::size_t kk = static_cast<std::size_t>(k) * k;
  for (int o = 0; o < Cout; ++o)
    for (int ci = 0; ci < Cin_eff; ++ci) {
      int src_ci = ci;
      if (!slot.chan_gather.empty()) {
        const int G = group_order;
        src_ci = (ci / G) * G + slot.chan_gather[ci % G];
      }
      const double* g = gout.data.data() + (static_cast<std::size_t>(o) * Cin_eff + ci) * kk;
      double* dst = gbase.data.data() + (static_cast<std::size_t>(o) * Cin_eff + src_ci) * kk;
      slot.spatial.apply_plane_adjoint(g, dst);
    }
}

Tensor slot_grad_out(const Tensor& gout, int Cout, int G, int gi) {
  const int Ho = gout.dim(1), Wo = gout.dim(2);
  Tensor s({Cout, Ho, Wo});
  const std::size_t hw = static_cast<std::size_t>(Ho) * Wo;
  for (int o = 0; o < Cout; ++o) {
    const double* src = gout.data.data() + (static_cast<std::size_t>(o) * G + gi) * hw;
    std::copy(src, src + hw, s.data.data() + static_cast<std::size_t>(o) * hw);
  }
  return s;
}

template <typename Plan>
Tensor generated_conv_forward(const Tensor& x, const Tensor& base, const Plan& plan) {
  const int G = plan.group.order();
  const int Cout = base.dim(0);
  Tensor out;
  for (int gi = 0; gi < G; ++gi) {
    const Tensor kg = transformed_kernel(base, plan.slots[gi], G);
    const Tensor o = kernels::conv2d(x, kg, plan.stride);
    if (gi == 0) out = Tensor({Cout * G, o.dim(1), o.dim(2)});
    const std::size_t hw = static_cast<std::size_t>(o.dim(1)) * o.dim(2);
    for (int c = 0; c < Cout; ++c)
      std::copy(o.data.begin() + c * hw, o.data.begin() + (c + 1) * hw,
                out.data.begin() + (static_cast<std::size_t>(c) * G + gi) * hw);
  }
  return out;
}

template <typename Plan>
Var generated_conv(Var x, Var base, const Plan& plan, const char* name) {
  Tape& t = *x.tape;
  const Tensor& xv = t.val(x);
  const Tensor& bv = t.val(base);
  const int G = plan.group.order();
  Tensor out = generated_conv_forward(xv, bv, plan);
  const int ix = x.id, ib = base.id;
  const int H = xv.dim(1), W = xv.dim(2);
  const Plan pl = plan;  // captured by value; plans are small
  return t.push(std::move(out), t.requires_grad(ix) || t.requires_grad(ib), name,
                [ix, ib, pl, G, H, W](Tape& t, int self) {
                  const Tensor& g = t.grad(self);
                  const Tensor& xv = t.val(ix);
                  const Tensor& bv = t.val(ib);
                  const int Cout = bv.dim(0);
                  const int k = bv.dim(2);
                  for (int gi = 0; gi < G; ++gi) {
                    const Tensor gs = slot_grad_out(g, Cout, G, gi);
                    const Tensor kg = transformed_kernel(bv, pl.slots[gi], G);
                    if (t.requires_grad(ix)) {
                      const Tensor gi_x = kernels::conv2d_grad_input(gs, kg, H, W, pl.stride);
                      Tensor& gx = t.grad(ix);
                      for (std::size_t i = 0; i < gi_x.data.size(); ++i)
                        gx.data[i] += gi_x.data[i];
                    }
                    if (t.requires_grad(ib)) {
                      const Tensor gkg = kernels::conv2d_grad_kernel(gs, xv, k, k, pl.stride);
                      transformed_kernel_adjoint(gkg, pl.slots[gi], G, t.grad(ib));
                    }
                  }
                });
}

}  // namespace

Tensor lift_fwd(const Tensor& image, const Tensor& base_kernel, const LiftPlan& plan) {
  if (image.dim(1) != image.dim(2)) throw ShapeError("lift: square input required");
  return generated_conv_forward(image, base_kernel, plan);
}

Var lift(Var image, Var base_kernel, const LiftPlan& plan) {
  if (image.tape->val(image).dim(1) != image.tape->val(image).dim(2))
    throw ShapeError("lift: square input required");
  return generated_conv(image, base_kernel, plan, "lift");
}

Tensor group_conv_fwd(const Tensor& f, const Tensor& base_kernel, const GroupConvPlan& plan) {
  if (f.dim(0) != plan.Cin * plan.group.order())
    throw OrderMismatchError("group_conv: input channels do not match plan group arithmetic");
  return generated_conv_forward(f, base_kernel, plan);
}

Var group_conv(Var f, Var base_kernel, const GroupConvPlan& plan) {
  if (f.tape->val(f).dim(0) != plan.Cin * plan.group.order())
    throw OrderMismatchError("group_conv: input channels do not match plan group arithmetic");
  return generated_conv(f, base_kernel, plan, "group_conv");
}

Tensor group_conv_with_bank(const Tensor& f, const std::vector<Tensor>& bank, int stride) {
  const int G = static_cast<int>(bank.size());
  const int Cout = bank[0].dim(0);
  Tensor out;
  for (int gi = 0; gi < G; ++gi) {
    const Tensor o = kernels::conv2d(f, bank[gi], stride);
    if (gi == 0) out = Tensor({Cout * G, o.dim(1), o.dim(2)});
    const std::size_t hw = static_cast<std::size_t>(o.dim(1)) * o.dim(2);
    for (int c = 0; c < Cout; ++c)
      std::copy(o.data.begin() + c * hw, o.data.begin() + (c + 1) * hw,
                out.data.begin() + (static_cast<std::size_t>(c) * G + gi) * hw);
  }
  return out;
}

std::pair<std::vector<int>, int> d4_orbit_map(int k) {
  GroupSpec d4{4, true};
  std::vector<int> orbit(static_cast<std::size_t>(k) * k, -1);
  int count = 0;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) {
      const int at = y * k + x;
      if (orbit[at] >= 0) continue;
      // stamp the whole orbit of (x, y) with a fresh id
      for (int gi = 0; gi < 8; ++gi) {
        const auto m = spatial_matrix(d4.element_at(gi));
        const int ux = 2 * x - (k - 1), uy = 2 * y - (k - 1);
        const int tx = (int(m[0]) * ux + int(m[1]) * uy + (k - 1)) / 2;
        const int ty = (int(m[2]) * ux + int(m[3]) * uy + (k - 1)) / 2;
        orbit[ty * k + tx] = count;
      }
      ++count;
    }
  return {orbit, count};
}

Var expand_orbit_kernel(Var w, int k) {
  Tape& t = *w.tape;
  const Tensor& wv = t.val(w);
  if (wv.ndim() != 3) throw ShapeError("expand_orbit_kernel: weights must be [Cout,Cin,R]");
  const auto [orbit, count] = d4_orbit_map(k);
  if (wv.dim(2) != count)
    throw ShapeError("expand_orbit_kernel: expected " + std::to_string(count) + " orbit weights");
  const int Cout = wv.dim(0), Cin = wv.dim(1);
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(Cout) * Cin * k * k);
  for (int o = 0; o < Cout; ++o)
    for (int i = 0; i < Cin; ++i)
      for (int u = 0; u < k * k; ++u) idx.push_back((o * Cin + i) * count + orbit[u]);
  return gather_linear(w, std::move(idx), {Cout, Cin, k, k});
}

// ---- TapeParams -------------------------------------------------------------

Var TapeParams::get(const std::string& name) {
  const int idx = store_->index_of(name);
  for (const auto& [i, v] : bound_)
    if (i == idx) return v;
  Var v = tape_->param(store_->tensor(idx));
  bound_.emplace_back(idx, v);
  return v;
}

std::vector<Tensor> TapeParams::grads() const {
  std::vector<Tensor> out(store_->size());
  for (const auto& [i, v] : bound_) {
    if (tape_->node(v.id).grad_alloc) out[i] = tape_->node(v.id).grad;
  }
  return out;
}

// ---- Backbone ---------------------------------------------------------------

Backbone::Backbone(const BackboneConfig& cfg) : cfg_(cfg) {
  if (cfg.strides.size() != 2) throw ConfigError("backbone expects exactly two stride entries");
  const GroupSpec& g = cfg_.group;
  if (!cfg_.plane) {
    lift_plan_ = make_lift_plan(g, cfg_.Cin, cfg_.C, cfg_.lift_k);
    down1_ = make_group_conv_plan(g, cfg_.C, cfg_.C, cfg_.conv_k, cfg_.strides[0]);
    down2_ = make_group_conv_plan(g, cfg_.C, cfg_.C, cfg_.conv_k, cfg_.strides[1]);
    block_ = make_group_conv_plan(g, cfg_.C, cfg_.C, cfg_.conv_k, 1);
  }
}

int Backbone::total_stride() const { return cfg_.strides[0] * cfg_.strides[1]; }

void Backbone::init_params(ParamStore& store, Rng& rng) const {
  const int G = cfg_.group.order();
  auto conv_init = [&](const std::string& name, int cout, int cin, int k) {
    if (store.has(name + ".w")) return;
    const double std = std::sqrt(2.0 / (cin * k * k));
    store.add(name + ".w", rng.tensor_normal({cout, cin, k, k}, 0.0, std));
    store.add(name + ".b", Tensor({cfg_.plane ? cout : cout}));
  };
  if (cfg_.plane) {
    const int W = cfg_.C * G;
    conv_init("bb.lift", W, cfg_.Cin, cfg_.lift_k);
    conv_init("bb.down1", W, W, cfg_.conv_k);
    conv_init("bb.down2", W, W, cfg_.conv_k);
    for (int i = 0; i < cfg_.B; ++i) conv_init("bb.block" + std::to_string(i), W, W, cfg_.conv_k);
  } else {
    conv_init("bb.lift", cfg_.C, cfg_.Cin, cfg_.lift_k);
    conv_init("bb.down1", cfg_.C, cfg_.C * G, cfg_.conv_k);
    conv_init("bb.down2", cfg_.C, cfg_.C * G, cfg_.conv_k);
    for (int i = 0; i < cfg_.B; ++i)
      conv_init("bb.block" + std::to_string(i), cfg_.C, cfg_.C * G, cfg_.conv_k);
  }
}

Var Backbone::forward(Tape& tape, Var image, TapeParams& params) const {
  const Tensor& img = tape.val(image);
  if (img.ndim() != 3 || img.dim(1) != img.dim(2))
    throw ShapeError("backbone: square [Cin,S,S] image required");
  if (img.dim(1) % total_stride() != 0)
    throw ShapeError("backbone: image side must be a multiple of " +
                     std::to_string(total_stride()));
  const int G = cfg_.group.order();

  if (cfg_.plane) {
    Var h = conv2d(image, params.get("bb.lift.w"), 1);
    h = add_bias(h, params.get("bb.lift.b"));
    h = conv2d(relu(h), params.get("bb.down1.w"), cfg_.strides[0]);
    h = add_bias(h, params.get("bb.down1.b"));
    h = conv2d(relu(h), params.get("bb.down2.w"), cfg_.strides[1]);
    h = add_bias(h, params.get("bb.down2.b"));
    for (int i = 0; i < cfg_.B; ++i) {
      const std::string n = "bb.block" + std::to_string(i);
      Var r = conv2d(relu(h), params.get(n + ".w"), 1);
      h = add(h, add_bias(r, params.get(n + ".b")));
    }
    return h;
  }

  Var h = lift(image, params.get("bb.lift.w"), lift_plan_);
  h = add_bias_grouped(h, params.get("bb.lift.b"), G);
  h = group_conv(relu(h), params.get("bb.down1.w"), down1_);
  h = add_bias_grouped(h, params.get("bb.down1.b"), G);
  h = group_conv(relu(h), params.get("bb.down2.w"), down2_);
  h = add_bias_grouped(h, params.get("bb.down2.b"), G);
  for (int i = 0; i < cfg_.B; ++i) {
    const std::string n = "bb.block" + std::to_string(i);
    Var r = group_conv(relu(h), params.get(n + ".w"), block_);
    h = add(h, add_bias_grouped(r, params.get(n + ".b"), G));
  }
  return h;
}

}  // namespace dskt
