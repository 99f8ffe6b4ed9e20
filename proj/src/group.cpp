#include "dskt/group.hpp"

#include <cmath>

namespace dskt {

namespace {

int mod(int a, int m) { return ((a % m) + m) % m; }

void check_same_order(const DihedralElement& a, const DihedralElement& b) {
  if (a.order != b.order)
    throw OrderMismatchError("dihedral elements from D_" + std::to_string(a.order) +
                             " and D_" + std::to_string(b.order));
}

}  // namespace

std::string DihedralElement::str() const {
  if (is_identity()) return "e";
  std::string s;
  if (l) s += "b";
  if (n) {
    s += "r";
    if (n != 1) s += "^" + std::to_string(n);
  }
  return s;
}

DihedralElement compose(const DihedralElement& a, const DihedralElement& b) {
  check_same_order(a, b);
  const int N = a.order;
  // b^la r^na * b^lb r^nb; push r^na through b^lb with r^n b = b r^{-n}.
  if (b.l == 0) return {a.l, mod(a.n + b.n, N), N};
  return {a.l ^ 1, mod(b.n - a.n, N), N};
}

DihedralElement inverse(const DihedralElement& g) {
  if (g.l == 0) return {0, mod(-g.n, g.order), g.order};
  return g;  // reflections are involutions: (b r^n)^2 = e
}

DihedralElement GroupSpec::element_at(int i) const {
  if (i < 0 || i >= order()) throw ShapeError("group index out of range");
  if (i < N) return DihedralElement::rotation(i, N);
  // index N+j holds r^j b = b r^{-j}
  return DihedralElement::reflection(mod(-(i - N), N), N);
}

int GroupSpec::index_of(const DihedralElement& g) const {
  if (g.order != N)
    throw OrderMismatchError("element of D_" + std::to_string(g.order) +
                             " indexed against group of order parameter " + std::to_string(N));
  if (g.l == 0) return g.n;
  if (!dihedral) throw OrderMismatchError("reflection element indexed against cyclic group");
  return N + mod(-g.n, N);
}

std::vector<DihedralElement> GroupSpec::elements() const {
  std::vector<DihedralElement> out;
  out.reserve(order());
  for (int i = 0; i < order(); ++i) out.push_back(element_at(i));
  return out;
}

GroupPermutation GroupPermutation::identity(int order) {
  GroupPermutation p;
  p.order = order;
  p.map.resize(order);
  for (int i = 0; i < order; ++i) p.map[i] = i;
  return p;
}

bool GroupPermutation::is_identity() const {
  for (int i = 0; i < order; ++i)
    if (map[i] != i) return false;
  return true;
}

GroupPermutation GroupPermutation::inverse() const {
  GroupPermutation p;
  p.order = order;
  p.map.resize(order);
  for (int i = 0; i < order; ++i) p.map[map[i]] = i;
  return p;
}

GroupPermutation GroupPermutation::then(const GroupPermutation& b) const {
  GroupPermutation p;
  p.order = order;
  p.map.resize(order);
  for (int i = 0; i < order; ++i) p.map[i] = b.map[map[i]];
  return p;
}

bool GroupPermutation::is_bijection() const {
  std::vector<char> seen(order, 0);
  for (int i = 0; i < order; ++i) {
    if (map[i] < 0 || map[i] >= order || seen[map[i]]) return false;
    seen[map[i]] = 1;
  }
  return true;
}

void GroupPermutation::apply(const double* x, double* y) const {
  for (int i = 0; i < order; ++i) y[map[i]] = x[i];
}

GroupPermutation regular_representation(const GroupSpec& spec, const DihedralElement& g) {
  if (g.l == 1 && !spec.dihedral)
    throw OrderMismatchError("regular representation of a reflection in a cyclic group");
  GroupPermutation p;
  p.order = spec.order();
  p.map.resize(p.order);
  for (int i = 0; i < p.order; ++i) p.map[i] = spec.index_of(compose(g, spec.element_at(i)));
  return p;
}

Offset2 act_on_offset(const DihedralElement& g, const Offset2& q) {
  const auto m = spatial_matrix(g);
  return {m[0] * q.dx + m[1] * q.dy, m[2] * q.dx + m[3] * q.dy};
}

std::array<double, 4> spatial_matrix(const DihedralElement& g) {
  if (grid_exact(g)) {
    // Integer matrix: quarter-turn index t, then optional y-negation.
    const int t = mod(4 * g.n / g.order, 4);
    static const int R[4][4] = {{1, 0, 0, 1}, {0, -1, 1, 0}, {-1, 0, 0, -1}, {0, 1, -1, 0}};
    std::array<double, 4> m = {double(R[t][0]), double(R[t][1]), double(R[t][2]), double(R[t][3])};
    if (g.l) {
      m[2] = -m[2];
      m[3] = -m[3];
    }
    return m;
  }
  const double a = rotation_angle(g);
  const double c = std::cos(a), s = std::sin(a);
  std::array<double, 4> m = {c, -s, s, c};
  if (g.l) {
    m[2] = -m[2];
    m[3] = -m[3];
  }
  return m;
}

bool grid_exact(const DihedralElement& g) { return (4 * g.n) % g.order == 0; }

std::vector<double> act_on_fiber(const GroupPermutation& perm, const std::vector<double>& fiber) {
  const int G = perm.order;
  if (G == 0 || fiber.size() % static_cast<std::size_t>(G) != 0)
    throw ShapeError("fiber length not divisible by group order");
  const int C = static_cast<int>(fiber.size()) / G;
  std::vector<double> out(fiber.size());
  for (int c = 0; c < C; ++c) perm.apply(fiber.data() + c * G, out.data() + c * G);
  return out;
}

void SpatialMap::apply_plane(const double* in, double* out) const {
  const int n = size * size;
  for (int d = 0; d < n; ++d) {
    double acc = 0.0;
    for (int t = 0; t < taps; ++t) {
      const int s = src[d * taps + t];
      if (s >= 0) acc += w[d * taps + t] * in[s];
    }
    out[d] = acc;
  }
}

void SpatialMap::apply_plane_adjoint(const double* gout, double* gin_accum) const {
  const int n = size * size;
  for (int d = 0; d < n; ++d) {
    const double go = gout[d];
    if (go == 0.0) continue;
    for (int t = 0; t < taps; ++t) {
      const int s = src[d * taps + t];
      if (s >= 0) gin_accum[s] += w[d * taps + t] * go;
    }
  }
}

SpatialMap spatial_action_map(const DihedralElement& g, int size) {
  SpatialMap m;
  m.size = size;
  const DihedralElement gi = inverse(g);
  if (grid_exact(g)) {
    m.taps = 1;
    m.src.assign(static_cast<std::size_t>(size) * size, -1);
    m.w.assign(static_cast<std::size_t>(size) * size, 1.0);
    const auto a = spatial_matrix(gi);
    const int A = int(a[0]), B = int(a[1]), C = int(a[2]), D = int(a[3]);
    // Doubled coordinates u = 2x - (S-1) keep everything integral.
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const int ux = 2 * x - (size - 1);
        const int uy = 2 * y - (size - 1);
        const int sx = (A * ux + B * uy + (size - 1)) / 2;
        const int sy = (C * ux + D * uy + (size - 1)) / 2;
        m.src[static_cast<std::size_t>(y) * size + x] = sy * size + sx;
      }
    }
    return m;
  }
  m.taps = 4;
  m.src.assign(static_cast<std::size_t>(size) * size * 4, -1);
  m.w.assign(static_cast<std::size_t>(size) * size * 4, 0.0);
  const auto a = spatial_matrix(gi);
  const double c = (size - 1) * 0.5;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double rx = x - c, ry = y - c;
      const double sx = a[0] * rx + a[1] * ry + c;
      const double sy = a[2] * rx + a[3] * ry + c;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      const double ww[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      const std::size_t base = (static_cast<std::size_t>(y) * size + x) * 4;
      for (int t = 0; t < 4; ++t) {
        if (xs[t] < 0 || xs[t] >= size || ys[t] < 0 || ys[t] >= size) continue;
        m.src[base + t] = ys[t] * size + xs[t];
        m.w[base + t] = ww[t];
      }
    }
  }
  return m;
}

Tensor act_on_image(const DihedralElement& g, const Tensor& img) {
  if (img.ndim() != 3 || img.dim(1) != img.dim(2))
    throw ShapeError("act_on_image expects a square [C,S,S] raster");
  const int S = img.dim(1);
  const SpatialMap map = spatial_action_map(g, S);
  Tensor out(img.shape);
  for (int ch = 0; ch < img.dim(0); ++ch) map.apply_plane(img.plane(ch), out.plane(ch));
  return out;
}

}  // namespace dskt
