#include "dskt/heads.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dskt {

std::vector<ReflectionAxisPrediction> decode_reflection(const Tensor& p, const Tensor& rho,
                                                        const Tensor& theta,
                                                        double score_thresh, double stride,
                                                        int N, double diag) {
  if (!p.same_shape(rho) || !p.same_shape(theta))
    throw ShapeError("decode_reflection: component shapes differ");
  const int A = p.dim(0), H = p.dim(1), W = p.dim(2);
  std::vector<ReflectionAxisPrediction> out;
  for (int a = 0; a < A; ++a)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double score = p.at3(a, y, x);
        if (score < score_thresh) continue;
        // a single catch-all anchor regresses the absolute orientation
        const double th = theta.at3(a, y, x);
        ReflectionAxisPrediction pr =
            A == 1 ? decode_anchored_axis(0, x, y, score, rho.at3(a, y, x) * diag, 0.0, stride, 1)
                   : decode_anchored_axis(a, x, y, score, rho.at3(a, y, x) * diag, th, stride, N);
        if (A == 1) {
          // re-decode with the regressed absolute angle
          pr.theta_abs = wrap_angle_pi(th);
          const double c = std::cos(pr.theta_abs), s = std::sin(pr.theta_abs);
          pr.x_s = pr.x + 0.5 * pr.rho * c;
          pr.y_s = pr.y + 0.5 * pr.rho * s;
          pr.x_e = pr.x - 0.5 * pr.rho * c;
          pr.y_e = pr.y - 0.5 * pr.rho * s;
        }
        out.push_back(pr);
      }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.cell_y != b.cell_y) return a.cell_y < b.cell_y;
    if (a.cell_x != b.cell_x) return a.cell_x < b.cell_x;
    return a.anchor < b.anchor;
  });
  return out;
}

std::vector<RotationCenterPrediction> decode_rotation(const Tensor& logits,
                                                      double score_thresh, double stride,
                                                      const std::vector<int>& folds) {
  const int S = logits.dim(0), H = logits.dim(1), W = logits.dim(2);
  if (S != static_cast<int>(folds.size()) + 1)
    throw ShapeError("decode_rotation: logits channels must be |folds| + 1");

  // per-cell softmax and center score
  Tensor score({1, H, W});
  std::vector<std::vector<double>> probs(static_cast<std::size_t>(H) * W,
                                         std::vector<double>(S));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double mx = -1e300;
      for (int s = 0; s < S; ++s) mx = std::max(mx, logits.at3(s, y, x));
      double z = 0;
      for (int s = 0; s < S; ++s) z += std::exp(logits.at3(s, y, x) - mx);
      auto& pr = probs[static_cast<std::size_t>(y) * W + x];
      double best = 0;
      for (int s = 0; s < S; ++s) {
        pr[s] = std::exp(logits.at3(s, y, x) - mx) / z;
        if (s > 0) best = std::max(best, pr[s]);
      }
      score.at3(0, y, x) = best;
    }

  std::vector<RotationCenterPrediction> out;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double sc = score.at3(0, y, x);
      if (sc < score_thresh) continue;
      // 3x3 local maximum; equal-valued plateaus keep the first cell
      bool keep = true;
      for (int dy = -1; dy <= 1 && keep; ++dy)
        for (int dx = -1; dx <= 1 && keep; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
          const double nb = score.at3(0, ny, nx);
          if (nb > sc) keep = false;
          if (nb == sc && (ny < y || (ny == y && nx < x))) keep = false;
        }
      if (!keep) continue;
      RotationCenterPrediction pr;
      pr.cell_x = x;
      pr.cell_y = y;
      pr.x = x * stride;
      pr.y = y * stride;
      pr.probs = probs[static_cast<std::size_t>(y) * W + x];
      pr.score = sc;
      int best = 1;
      for (int s = 2; s < S; ++s)
        if (pr.probs[s] > pr.probs[best]) best = s;
      pr.fold = folds[best - 1];
      out.push_back(pr);
    }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.cell_y != b.cell_y) return a.cell_y < b.cell_y;
    return a.cell_x < b.cell_x;
  });
  return out;
}

std::vector<ReflectionAxisPrediction> nms_segments(
    const std::vector<ReflectionAxisPrediction>& preds, double dist_thresh,
    double angle_thresh) {
  std::vector<ReflectionAxisPrediction> kept;
  std::vector<char> dead(preds.size(), 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (dead[i]) continue;
    kept.push_back(preds[i]);
    for (std::size_t j = i + 1; j < preds.size(); ++j) {
      if (dead[j]) continue;
      const double d = std::hypot(preds[i].x - preds[j].x, preds[i].y - preds[j].y);
      const double da = angle_diff_pi(preds[i].theta_abs, preds[j].theta_abs);
      if (d <= dist_thresh && da <= angle_thresh) dead[j] = 1;
    }
  }
  return kept;
}

void write_predictions(const std::string& path, const PredictionSet& preds) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write predictions: " + path);
  f << "DSKT-PRED v1\n";
  char buf[256];
  for (const auto& r : preds.reflections) {
    std::snprintf(buf, sizeof buf, "R %.6f %.6f %.6f %.6f %.6f\n", r.x_s, r.y_s, r.x_e, r.y_e,
                  r.score);
    f << buf;
  }
  for (const auto& c : preds.rotations) {
    std::snprintf(buf, sizeof buf, "C %.6f %.6f %d %.6f\n", c.x, c.y, c.fold, c.score);
    f << buf;
  }
  if (!f) throw IoError("prediction write failed: " + path);
}

PredictionSet read_predictions(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read predictions: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "DSKT-PRED v1")
    throw ParseError(path + ":1: expected DSKT-PRED v1 header");
  PredictionSet out;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "R") {
      ReflectionAxisPrediction r;
      ss >> r.x_s >> r.y_s >> r.x_e >> r.y_e >> r.score;
      if (!ss) throw ParseError(path + ":" + std::to_string(lineno) + ": bad R record");
      r.x = 0.5 * (r.x_s + r.x_e);
      r.y = 0.5 * (r.y_s + r.y_e);
      r.rho = std::hypot(r.x_e - r.x_s, r.y_e - r.y_s);
      r.theta_abs = Segment{r.x_s, r.y_s, r.x_e, r.y_e}.angle();
      out.reflections.push_back(r);
    } else if (tag == "C") {
      RotationCenterPrediction c;
      ss >> c.x >> c.y >> c.fold >> c.score;
      if (!ss) throw ParseError(path + ":" + std::to_string(lineno) + ": bad C record");
      out.rotations.push_back(c);
    } else {
      throw ParseError(path + ":" + std::to_string(lineno) + ": unknown record '" + tag + "'");
    }
  }
  return out;
}

}  // namespace dskt
