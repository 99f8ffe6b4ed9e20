#include "dskt/anchors.hpp"

#include <cmath>

namespace dskt {

Var counterpart_aggregate(Var Y, Var w0, Var w1, Var bias, bool antisymmetric) {
  Tape& t = *Y.tape;
  const Tensor& yv = t.val(Y);
  if (yv.ndim() != 3 || yv.dim(0) % 2 != 0)
    throw ShapeError("counterpart_aggregate: channel extent must be 2N");
  const int N = yv.dim(0) / 2;
  std::vector<int> top(N), bot(N);
  for (int i = 0; i < N; ++i) {
    top[i] = i;
    bot[i] = i + N;
  }
  Var a = gather_channels(Y, top);
  Var b = gather_channels(Y, bot);
  // N([a;b]) = w0*a + w1*b + bias, and the swapped pairing N([b;a])
  Var m1 = add_svar(add(mul_svar(a, w0), mul_svar(b, w1)), bias);
  Var m2 = add_svar(add(mul_svar(b, w0), mul_svar(a, w1)), bias);
  return antisymmetric ? sub(m1, m2) : add(m1, m2);
}

Var anchor_construct_raw(Var aggregated) {
  Tape& t = *aggregated.tape;
  const Tensor& v = t.val(aggregated);
  if (v.ndim() != 3 || v.dim(0) % 2 != 0)
    throw ConfigError("anchor_construct: N must be even");
  const int N = v.dim(0);
  std::vector<int> lo(N / 2), hi(N / 2);
  for (int a = 0; a < N / 2; ++a) {
    lo[a] = a;
    hi[a] = a + N / 2;
  }
  return add(gather_channels(aggregated, lo), gather_channels(aggregated, hi));
}

ReflectionAxisPrediction decode_anchored_axis(int alpha, int x, int y, double p, double rho,
                                              double theta, double stride, int N) {
  ReflectionAxisPrediction out;
  out.score = p;
  out.anchor = alpha;
  out.cell_x = x;
  out.cell_y = y;
  out.x = x * stride;
  out.y = y * stride;
  out.rho = rho;
  out.theta_abs = wrap_angle_pi(2.0 * M_PI * alpha / N + theta);
  const double c = std::cos(out.theta_abs), s = std::sin(out.theta_abs);
  out.x_s = out.x + 0.5 * rho * c;
  out.y_s = out.y + 0.5 * rho * s;
  out.x_e = out.x - 0.5 * rho * c;
  out.y_e = out.y - 0.5 * rho * s;
  return out;
}

ReflectionTargets assign_gt_to_anchors(const std::vector<Segment>& axes, int N,
                                       int num_anchors, int Hf, int Wf, double stride,
                                       double diag) {
  ReflectionTargets t;
  t.p = Tensor({num_anchors, Hf, Wf});
  t.rho = Tensor({num_anchors, Hf, Wf});
  t.theta = Tensor({num_anchors, Hf, Wf});
  t.mask = Tensor({num_anchors, Hf, Wf});
  const double bin = 2.0 * M_PI / N;  // anchor spacing
  for (const Segment& s : axes) {
    const double psi = s.angle();
    int alpha = 0;
    double theta_off = psi;
    if (num_anchors > 1) {
      // nearest base orientation mod pi; the boundary +pi/N goes up
      alpha = static_cast<int>(std::floor((psi + bin / 2) / bin)) % num_anchors;
      theta_off = psi - alpha * bin;
      theta_off -= M_PI * std::round(theta_off / M_PI);
    }
    int cx = static_cast<int>(std::lround(s.mid_x() / stride));
    int cy = static_cast<int>(std::lround(s.mid_y() / stride));
    cx = std::min(std::max(cx, 0), Wf - 1);
    cy = std::min(std::max(cy, 0), Hf - 1);
    if (t.p.at3(alpha, cy, cx) != 0.0) continue;  // first annotation wins
    t.p.at3(alpha, cy, cx) = 1.0;
    t.rho.at3(alpha, cy, cx) = s.length() / diag;
    t.theta.at3(alpha, cy, cx) = theta_off;
    t.mask.at3(alpha, cy, cx) = 1.0;
  }
  return t;
}

}  // namespace dskt
