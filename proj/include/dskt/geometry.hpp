#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace dskt {

// Undirected line segment in image pixel coordinates (x right, y down).
struct Segment {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double length() const { return std::hypot(x2 - x1, y2 - y1); }
  double mid_x() const { return 0.5 * (x1 + x2); }
  double mid_y() const { return 0.5 * (y1 + y2); }
  // orientation folded into [0, pi)
  double angle() const {
    double a = std::atan2(y2 - y1, x2 - x1);
    if (a < 0) a += M_PI;
    if (a >= M_PI) a -= M_PI;
    return a;
  }
};

struct RotationCenter {
  double x = 0, y = 0;
  int fold = 2;
};

// Ground truth for one image.
struct AnnotationSet {
  std::string image_id;
  int width = 0, height = 0;
  std::vector<Segment> reflections;
  std::vector<RotationCenter> rotations;
};

inline double wrap_angle_pi(double a) {
  // fold into [0, pi)
  a = std::fmod(a, M_PI);
  if (a < 0) a += M_PI;
  return a;
}

// absolute difference of two orientations modulo pi, in [0, pi/2]
inline double angle_diff_pi(double a, double b) {
  double d = std::fabs(wrap_angle_pi(a) - wrap_angle_pi(b));
  return std::min(d, M_PI - d);
}

}  // namespace dskt
