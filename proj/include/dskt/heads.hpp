#pragma once

#include <string>
#include <vector>

#include "dskt/anchors.hpp"
#include "dskt/tensor.hpp"

namespace dskt {

struct RotationCenterPrediction {
  double x = 0, y = 0;             // image px
  std::vector<double> probs;       // softmax over S classes, background first
  int fold = 0;                    // predicted fold (vocabulary value)
  double score = 0;                // max non-background probability
  int cell_x = 0, cell_y = 0;
};

// Emits one candidate per (anchor, x, y) with p >= score_thresh, decoded via
// decode_anchored_axis; rho maps are normalized by the image diagonal and
// denormalized here. Sorted by descending score, ties by (y, x, anchor).
std::vector<ReflectionAxisPrediction> decode_reflection(const Tensor& p, const Tensor& rho,
                                                        const Tensor& theta,
                                                        double score_thresh, double stride,
                                                        int N, double diag);

// Per cell: softmax over fold logits; center score is the maximum
// non-background probability; a 3x3 local-maximum filter suppresses adjacent
// duplicates (ties keep the lexicographically first cell).
std::vector<RotationCenterPrediction> decode_rotation(const Tensor& logits,
                                                      double score_thresh, double stride,
                                                      const std::vector<int>& folds);

// Greedy NMS: keep the highest-scoring segment, suppress any remaining one
// whose midpoint is within dist_thresh AND whose orientation differs by at
// most angle_thresh (mod pi). Input must be sorted by descending score.
std::vector<ReflectionAxisPrediction> nms_segments(
    const std::vector<ReflectionAxisPrediction>& preds, double dist_thresh,
    double angle_thresh);

// Prediction file, one per image:
//   DSKT-PRED v1
//   R x_s y_s x_e y_e score
//   C x y fold score
// floats with six decimals.
struct PredictionSet {
  std::vector<ReflectionAxisPrediction> reflections;
  std::vector<RotationCenterPrediction> rotations;
};

void write_predictions(const std::string& path, const PredictionSet& preds);
PredictionSet read_predictions(const std::string& path);

}  // namespace dskt
