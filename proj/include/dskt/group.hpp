#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "dskt/tensor.hpp"

namespace dskt {

// Element of the dihedral group D_N written as b^l r^n with the generator
// relations b^2 = e and r^n b = b r^{-n}. Pure rotations (l = 0) double as
// elements of the cyclic group C_N.
struct DihedralElement {
  int l = 0;      // reflection bit, 0 or 1
  int n = 0;      // rotation index, 0 <= n < order
  int order = 1;  // N

  static DihedralElement identity(int N) { return {0, 0, N}; }
  static DihedralElement rotation(int n, int N) { return {0, ((n % N) + N) % N, N}; }
  static DihedralElement reflection(int n, int N) { return {1, ((n % N) + N) % N, N}; }

  bool is_identity() const { return l == 0 && n == 0; }
  bool operator==(const DihedralElement& o) const {
    return l == o.l && n == o.n && order == o.order;
  }
  std::string str() const;
};

DihedralElement compose(const DihedralElement& a, const DihedralElement& b);
DihedralElement inverse(const DihedralElement& g);

// Rotation angle of the rotational part, radians.
inline double rotation_angle(const DihedralElement& g) {
  return 2.0 * M_PI * static_cast<double>(g.n) / static_cast<double>(g.order);
}

// Group descriptor: D_N (order 2N) or C_N (order N). Fixes the canonical
// channel/basis ordering used by every feature map:
//   index 0..N-1   : r^0 .. r^{N-1}
//   index N..2N-1  : r^0 b, r^1 b, .., r^{N-1} b   (dihedral only)
// The reflection block is listed as r^j b (equivalently b r^{-j}); this is
// the ordering under which left multiplication by r shifts both halves
// forward in step, which the counterpart pairing downstream relies on.
struct GroupSpec {
  int N = 1;
  bool dihedral = true;

  int order() const { return dihedral ? 2 * N : N; }

  DihedralElement element_at(int i) const;
  int index_of(const DihedralElement& g) const;
  std::vector<DihedralElement> elements() const;

  bool operator==(const GroupSpec& o) const { return N == o.N && dihedral == o.dihedral; }
};

// Permutation of {0,..,order-1}; map[i] is the destination of basis vector i.
// As a matrix there is exactly one 1 per row and column.
struct GroupPermutation {
  int order = 0;
  std::vector<int> map;

  static GroupPermutation identity(int order);
  bool is_identity() const;
  GroupPermutation inverse() const;
  // (a.then(b)): apply a first, then b; equals the matrix product B*A.
  GroupPermutation then(const GroupPermutation& b) const;
  bool is_bijection() const;

  // y[map[i]] = x[i] over one block.
  void apply(const double* x, double* y) const;

  bool operator==(const GroupPermutation& o) const {
    return order == o.order && map == o.map;
  }
};

// Regular representation of g in the canonical ordering of `spec`:
// basis vector e_{g_i} is sent to e_{g * g_i}.
GroupPermutation regular_representation(const GroupSpec& spec, const DihedralElement& g);

// Planar displacement in pixels, x right / y down.
struct Offset2 {
  double dx = 0.0;
  double dy = 0.0;
};

// Rotates q by 2*pi*n/N about the origin, then reflects across the
// horizontal axis (y -> -y) when l = 1. Orthogonal, so norms are preserved.
Offset2 act_on_offset(const DihedralElement& g, const Offset2& q);

// 2x2 matrix of the spatial action, row-major {a,b,c,d} for (x,y) ->
// (a x + b y, c x + d y).
std::array<double, 4> spatial_matrix(const DihedralElement& g);

// True iff the spatial action of g permutes square-grid pixels exactly:
// rotations by multiples of 90 degrees and axis/diagonal reflections.
bool grid_exact(const DihedralElement& g);

// Applies length-(C*order) permutation block-wise per channel: fiber is C
// consecutive blocks of `perm.order` entries.
std::vector<double> act_on_fiber(const GroupPermutation& perm, const std::vector<double>& fiber);

// Precomputed linear map realizing a spatial action on a size x size raster:
// out[dst] = sum_j w[dst][j] * in[src[dst][j]], with up to 4 taps (bilinear)
// or exactly 1 for grid-exact elements. Out-of-frame source reads are zero.
struct SpatialMap {
  int size = 0;
  int taps = 0;                  // 1 (exact) or 4 (bilinear)
  std::vector<int> src;          // [size*size*taps], -1 for zero contribution
  std::vector<double> w;         // [size*size*taps]

  void apply_plane(const double* in, double* out) const;
  // Adjoint (transpose); used by gradients of filter transforms.
  void apply_plane_adjoint(const double* gout, double* gin_accum) const;
};

// Spatial action of g on a square raster about its centre ((S-1)/2, (S-1)/2):
// out(x) = in(g^{-1} x). Exact index remap for grid-exact g, bilinear with
// zero padding otherwise.
SpatialMap spatial_action_map(const DihedralElement& g, int size);

// Applies the spatial action to every plane of a [C,S,S] tensor.
Tensor act_on_image(const DihedralElement& g, const Tensor& img);

}  // namespace dskt
