#include "dskt/detector.hpp"

#include <cmath>

namespace dskt {

Detector::Detector(const DetectorConfig& cfg) : cfg_(cfg), bb_(cfg.backbone) {
  if (cfg_.backbone.group.N % 2 != 0)
    throw ConfigError("anchor construction requires an even group order N");
}

namespace {

// H_ref transforms under rotations with the inverse cyclic shift relative to
// the regular representation; duplicating it with negated slot index into
// both half-blocks yields a sigma_reg-structured map that group convolutions
// can consume without breaking equivariance.
std::vector<int> match_align_indices(int C, int N, int base_offset) {
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(C) * 2 * N);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < 2 * N; ++i) {
      const int j = i < N ? i : i - N;
      idx.push_back(base_offset + c * N + (N - j) % N);
    }
  return idx;
}

}  // namespace

void Detector::init_params(ParamStore& store, Rng& rng) const {
  bb_.init_params(store, rng);
  const GroupSpec& grp = cfg_.backbone.group;
  const int G = grp.order();
  const int C = cfg_.backbone.C;
  const int S = static_cast<int>(cfg_.scales.size());
  const int in_base = C * S + C;  // aligned match blocks plus the base map
  const int hidden = cfg_.head_hidden / G > 0 ? cfg_.head_hidden / G : 1;

  auto conv_init = [&](const std::string& name, int cout, int cin, int k, bool grouped) {
    if (store.has(name + ".w")) return;
    const double std = std::sqrt(2.0 / (cin * k * k));
    store.add(name + ".w", rng.tensor_normal({cout, cin, k, k}, 0.0, std));
    store.add(name + ".b", Tensor({cout}));
    (void)grouped;
  };
  conv_init("ref1", hidden, in_base * G, cfg_.head_k, true);
  conv_init("ref2", 3, hidden * G, cfg_.head_k, true);

  // Rotation-head kernels share weights over the square-symmetry orbits of
  // the k x k stencil so the branch stays exactly invariant under grid-exact
  // transforms of the input.
  const int M = grp.N / 2;
  const int rot_in = C * M * S + C;
  const int R = d4_orbit_map(cfg_.head_k).second;
  auto orbit_init = [&](const std::string& name, int cout, int cin) {
    if (store.has(name + ".w")) return;
    const double std = std::sqrt(2.0 / (cin * cfg_.head_k * cfg_.head_k));
    store.add(name + ".w", rng.tensor_normal({cout, cin, R}, 0.0, std));
    store.add(name + ".b", Tensor({cout}));
  };
  orbit_init("rot1", cfg_.head_hidden, rot_in);
  orbit_init("rot2", cfg_.num_classes(), cfg_.head_hidden);

  for (const char* k : {"p", "rho", "theta"}) {
    const std::string base = std::string("mix.") + k;
    if (!store.has(base + ".w0")) {
      store.add(base + ".w0", Tensor({1}, {1.0}));
      store.add(base + ".w1", Tensor({1}, {0.0}));
      store.add(base + ".b", Tensor({1}, {0.0}));
    }
  }
}

Detector::Outputs Detector::forward(Tape& tape, Var image, TapeParams& params) const {
  const GroupSpec& grp = cfg_.backbone.group;
  const int G = grp.order();
  const int N = grp.N;
  const int C = cfg_.backbone.C;
  const int S = static_cast<int>(cfg_.scales.size());
  const int hidden = cfg_.head_hidden / G > 0 ? cfg_.head_hidden / G : 1;

  Outputs out;
  out.F = bb_.forward(tape, image, params);

  // ---- reflection branch ----
  Var cat = multiscale_concat_ref(out.F, grp, cfg_.scales, cfg_.match_eps,
                                  cfg_.normalize_match);
  // align the C*N match blocks to the 2N-slot regular layout, keep F as is
  std::vector<int> align;
  for (int s = 0; s < S; ++s) {
    auto part = match_align_indices(C, N, s * C * N);
    align.insert(align.end(), part.begin(), part.end());
  }
  const int base_off = S * C * N;
  for (int i = 0; i < C * G; ++i) align.push_back(base_off + i);
  Var aligned = gather_channels(cat, align);

  const int in_base = C * S + C;
  const GroupConvPlan h1 = make_group_conv_plan(grp, in_base, hidden, cfg_.head_k);
  const GroupConvPlan h2 = make_group_conv_plan(grp, hidden, 3, cfg_.head_k);
  Var h = group_conv(aligned, params.get("ref1.w"), h1);
  h = relu(add_bias_grouped(h, params.get("ref1.b"), G));
  Var y = group_conv(h, params.get("ref2.w"), h2);
  y = add_bias_grouped(y, params.get("ref2.b"), G);

  auto slice = [&](int c) {
    std::vector<int> idx(G);
    for (int i = 0; i < G; ++i) idx[i] = c * G + i;
    return gather_channels(y, idx);
  };
  Var Yp = slice(0), Yrho = slice(1), Yth = slice(2);

  if (cfg_.anchors) {
    auto mix = [&](const char* k) {
      const std::string b = std::string("mix.") + k;
      return std::array<Var, 3>{params.get(b + ".w0"), params.get(b + ".w1"),
                                params.get(b + ".b")};
    };
    const auto mp = mix("p"), mr = mix("rho"), mt = mix("theta");
    Var ap = anchor_construct_raw(counterpart_aggregate(Yp, mp[0], mp[1], mp[2], false));
    Var ar = anchor_construct_raw(counterpart_aggregate(Yrho, mr[0], mr[1], mr[2], false));
    Var at = anchor_construct_raw(counterpart_aggregate(Yth, mt[0], mt[1], mt[2], true));
    out.ref.p = sigmoid(ap);
    out.ref.rho = softplus(ar);
    out.ref.theta = scale(tanh_act(at), M_PI / N);
    out.ref.num_anchors = N / 2;
    out.ref.group_n = N;
  } else {
    // pooled baseline, one catch-all anchor regressing absolute orientation
    out.ref.p = sigmoid(reduce_group(Yp, G, cfg_.pool_mode));
    out.ref.rho = softplus(reduce_group(Yrho, G, ReduceMode::kMean));
    out.ref.theta = scale(sigmoid(reduce_group(Yth, G, ReduceMode::kMean)), M_PI);
    out.ref.num_anchors = 1;
    out.ref.group_n = N;
  }

  // ---- rotation branch ----
  Var catr = multiscale_concat_rot(out.F, grp, cfg_.scales, cfg_.pool_mode, cfg_.match_eps,
                                   cfg_.normalize_match);
  Var hr = conv2d(catr, expand_orbit_kernel(params.get("rot1.w"), cfg_.head_k));
  hr = relu(add_bias(hr, params.get("rot1.b")));
  Var logits = conv2d(hr, expand_orbit_kernel(params.get("rot2.w"), cfg_.head_k));
  out.rot_logits = add_bias(logits, params.get("rot2.b"));
  return out;
}

Detector::RawMaps Detector::infer(ParamStore& store, const Tensor& image) const {
  Tape tape;
  TapeParams tp(tape, store);
  Var img = tape.input(image);
  Outputs o = forward(tape, img, tp);
  RawMaps maps;
  maps.ref_p = tape.val(o.ref.p);
  maps.ref_rho = tape.val(o.ref.rho);
  maps.ref_theta = tape.val(o.ref.theta);
  maps.rot_logits = tape.val(o.rot_logits);
  return maps;
}

Tensor make_fold_targets(const std::vector<RotationCenter>& centers,
                         const std::vector<int>& folds, int Hf, int Wf, double stride) {
  Tensor t({Hf, Wf});
  for (const auto& c : centers) {
    int idx = -1;
    for (std::size_t i = 0; i < folds.size(); ++i)
      if (folds[i] == c.fold) idx = static_cast<int>(i);
    if (idx < 0)
      throw ConfigError("fold " + std::to_string(c.fold) + " is not in the configured set");
    int cx = static_cast<int>(std::lround(c.x / stride));
    int cy = static_cast<int>(std::lround(c.y / stride));
    cx = std::min(std::max(cx, 0), Wf - 1);
    cy = std::min(std::max(cy, 0), Hf - 1);
    t.data[static_cast<std::size_t>(cy) * Wf + cx] = idx + 1;
  }
  return t;
}

DetectionResult detect_image(const Detector& det, ParamStore& store, const Tensor& image,
                             const DecodeConfig& dc) {
  const auto maps = det.infer(store, image);
  const int N = det.config().backbone.group.N;
  const double diag = std::hypot(image.dim(1), image.dim(2));
  DetectionResult res;
  auto cands = decode_reflection(maps.ref_p, maps.ref_rho, maps.ref_theta, dc.score_thresh,
                                 det.stride(), N, diag);
  res.preds.reflections =
      nms_segments(cands, dc.nms_dist_frac * diag, M_PI / (2.0 * N));
  res.preds.rotations =
      decode_rotation(maps.rot_logits, dc.score_thresh, det.stride(), det.config().folds);
  return res;
}

}  // namespace dskt
