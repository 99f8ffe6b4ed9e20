#pragma once

#include "dskt/anchors.hpp"
#include "dskt/geometry.hpp"
#include "dskt/heads.hpp"
#include "dskt/losses.hpp"
#include "dskt/matching.hpp"
#include "dskt/net.hpp"

namespace dskt {

struct DetectorConfig {
  BackboneConfig backbone;
  std::vector<int> scales = {0, 1, 2};  // neighbourhood radii k (kernel 2k+1)
  bool anchors = true;                  // orientational anchor expansion on/off
  int head_hidden = 32;                 // hidden channels (group head: per 2N slots)
  int head_k = 3;
  std::vector<int> folds = {2, 3, 4, 5, 6, 8};
  ReduceMode pool_mode = ReduceMode::kMax;
  double match_eps = 1e-8;
  bool normalize_match = false;

  int num_classes() const { return static_cast<int>(folds.size()) + 1; }
  int num_anchors() const { return anchors ? backbone.group.N / 2 : 1; }
};

// Dual-branch axis-level symmetry detector: a D_N-equivariant backbone, a
// reflection branch with reflectional matching + orientational anchors, and
// a rotation branch with invariant rotational matching.
class Detector {
 public:
  explicit Detector(const DetectorConfig& cfg);

  void init_params(ParamStore& store, Rng& rng) const;

  struct Outputs {
    Var F;            // backbone features [C*2N, Hf, Wf]
    AnchoredOutput ref;
    Var rot_logits;   // [S, Hf, Wf]
  };
  Outputs forward(Tape& tape, Var image, TapeParams& params) const;

  // Inference conveniences (own tape, no gradients).
  struct RawMaps {
    Tensor ref_p, ref_rho, ref_theta, rot_logits;
  };
  RawMaps infer(ParamStore& store, const Tensor& image) const;

  int stride() const { return bb_.total_stride(); }
  const DetectorConfig& config() const { return cfg_; }
  const Backbone& backbone() const { return bb_; }

 private:
  DetectorConfig cfg_;
  Backbone bb_;
  GroupConvPlan ref_h1_, ref_h2_;
  std::vector<int> align_idx_;  // channel gather aligning match maps to 2N slots
  int ref_in_base_ = 0;         // base channels entering the reflection head
};

// Background class map [Hf,Wf] from rotation-center annotations; class 0 is
// background, class 1+i is folds[i].
Tensor make_fold_targets(const std::vector<RotationCenter>& centers,
                         const std::vector<int>& folds, int Hf, int Wf, double stride);

// Full decoded output of one image (after NMS).
struct DetectionResult {
  PredictionSet preds;
};

struct DecodeConfig {
  double score_thresh = 0.5;
  double nms_dist_frac = 0.05;  // of the image diagonal
  // angle gate defaults to pi / (2N), tied to the anchor resolution
};

DetectionResult detect_image(const Detector& det, ParamStore& store, const Tensor& image,
                             const DecodeConfig& dc);

}  // namespace dskt
