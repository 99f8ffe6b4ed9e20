#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "dskt/group.hpp"
#include "dskt/rng.hpp"

using namespace dskt;

namespace {

// Independent oracle: the faithful 2x2 orthogonal representation. Composing
// matrices and looking the product up in the element table must agree with
// the analytic compose().
DihedralElement compose_oracle(const DihedralElement& a, const DihedralElement& b) {
  const auto ma = spatial_matrix(a);
  const auto mb = spatial_matrix(b);
  const std::array<double, 4> prod = {
      ma[0] * mb[0] + ma[1] * mb[2], ma[0] * mb[1] + ma[1] * mb[3],
      ma[2] * mb[0] + ma[3] * mb[2], ma[2] * mb[1] + ma[3] * mb[3]};
  const int N = a.order;
  for (int l = 0; l < 2; ++l)
    for (int n = 0; n < N; ++n) {
      const DihedralElement g{l, n, N};
      const auto m = spatial_matrix(g);
      double d = 0;
      for (int i = 0; i < 4; ++i) d = std::max(d, std::abs(m[i] - prod[i]));
      if (d < 1e-9) return g;
    }
  FAIL("matrix product not found in group");
  return DihedralElement::identity(N);
}

}  // namespace

TEST_CASE("compose matches the generator relations") {
  // r^i r^j = r^{(i+j) mod N}
  CHECK(compose(DihedralElement::rotation(1, 4), DihedralElement::rotation(3, 4)) ==
        DihedralElement::rotation(0, 4));
  // b^2 = e
  for (int N : {1, 2, 3, 4, 8})
    CHECK(compose(DihedralElement::reflection(0, N), DihedralElement::reflection(0, N)) ==
          DihedralElement::identity(N));
  // (b r^2)(b) = r^6 in D_8
  CHECK(compose(DihedralElement::reflection(2, 8), DihedralElement::reflection(0, 8)) ==
        DihedralElement::rotation(6, 8));
}

TEST_CASE("compose agrees with the matrix oracle exhaustively") {
  for (int N : {1, 2, 3, 4, 5, 8, 12}) {
    GroupSpec spec{N, true};
    for (const auto& a : spec.elements())
      for (const auto& b : spec.elements()) CHECK(compose(a, b) == compose_oracle(a, b));
  }
}

TEST_CASE("compose rejects mismatched orders") {
  CHECK_THROWS_AS(compose(DihedralElement::rotation(1, 4), DihedralElement::rotation(1, 8)),
                  OrderMismatchError);
}

TEST_CASE("inverse") {
  CHECK(inverse(DihedralElement::rotation(1, 4)) == DihedralElement::rotation(3, 4));
  CHECK(inverse(DihedralElement::identity(5)) == DihedralElement::identity(5));
  // b r^3 is its own inverse in D_8
  CHECK(inverse(DihedralElement::reflection(3, 8)) == DihedralElement::reflection(3, 8));
  for (int N : {1, 2, 3, 4, 8}) {
    GroupSpec spec{N, true};
    for (const auto& g : spec.elements())
      CHECK(compose(g, inverse(g)) == DihedralElement::identity(N));
  }
}

TEST_CASE("regular representation basics") {
  GroupSpec d4{4, true};
  CHECK(regular_representation(d4, DihedralElement::identity(4)).is_identity());
  CHECK(regular_representation(d4, DihedralElement::identity(4)).order == 8);

  GroupSpec c4{4, false};
  const auto p = regular_representation(c4, DihedralElement::rotation(1, 4));
  CHECK(p.order == 4);
  for (int i = 0; i < 4; ++i) CHECK(p.map[i] == (i + 1) % 4);
}

TEST_CASE("regular representation is a homomorphism (exhaustive, N <= 12)") {
  for (int N = 1; N <= 12; ++N) {
    GroupSpec spec{N, true};
    const auto elems = spec.elements();
    std::vector<GroupPermutation> reps;
    for (const auto& g : elems) {
      reps.push_back(regular_representation(spec, g));
      CHECK(reps.back().is_bijection());
    }
    for (std::size_t i = 0; i < elems.size(); ++i)
      for (std::size_t j = 0; j < elems.size(); ++j) {
        // sigma(ab) applies sigma(b) first, then sigma(a)
        const auto lhs = reps[j].then(reps[i]);
        const auto rhs = regular_representation(spec, compose(elems[i], elems[j]));
        CHECK(lhs == rhs);
      }
  }
}

TEST_CASE("inverse element gives inverse permutation") {
  GroupSpec spec{8, true};
  for (const auto& g : spec.elements())
    CHECK(regular_representation(spec, inverse(g)) ==
          regular_representation(spec, g).inverse());
}

TEST_CASE("act_on_fiber") {
  GroupSpec d2{2, true};
  const auto rep = regular_representation(d2, DihedralElement::rotation(1, 2));
  const std::vector<double> fiber = {1, 2, 3, 4};
  CHECK(act_on_fiber(regular_representation(d2, DihedralElement::identity(2)), fiber) == fiber);
  CHECK(act_on_fiber(rep, fiber) == std::vector<double>({2, 1, 4, 3}));
  CHECK_THROWS_AS(act_on_fiber(rep, std::vector<double>{1, 2, 3}), ShapeError);

  // homomorphism on random fibers in D_8, two channels
  GroupSpec d8{8, true};
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> f(2 * 16);
    for (auto& v : f) v = rng.uniform(-1, 1);
    const auto g = d8.element_at(rng.uniform_int(0, 15));
    const auto h = d8.element_at(rng.uniform_int(0, 15));
    const auto lhs = act_on_fiber(regular_representation(d8, g),
                                  act_on_fiber(regular_representation(d8, h), f));
    const auto rhs = act_on_fiber(regular_representation(d8, compose(g, h)), f);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(lhs[i] == rhs[i]);
  }
}

TEST_CASE("act_on_offset") {
  const Offset2 q{1, 0};
  auto r = act_on_offset(DihedralElement::identity(8), q);
  CHECK(r.dx == doctest::Approx(1).epsilon(1e-14));
  CHECK(r.dy == doctest::Approx(0).epsilon(1e-14));

  r = act_on_offset(DihedralElement::rotation(2, 8), q);  // 90 degrees
  CHECK(r.dx == doctest::Approx(0).epsilon(1e-14));
  CHECK(r.dy == doctest::Approx(1).epsilon(1e-14));

  r = act_on_offset(DihedralElement::reflection(0, 8), Offset2{1, 1});
  CHECK(r.dx == doctest::Approx(1).epsilon(1e-14));
  CHECK(r.dy == doctest::Approx(-1).epsilon(1e-14));
}

TEST_CASE("offset action is orthogonal") {
  GroupSpec d12{12, true};
  Rng rng(3);
  for (const auto& g : d12.elements())
    for (int t = 0; t < 10; ++t) {
      const Offset2 q{rng.uniform(-5, 5), rng.uniform(-5, 5)};
      const auto r = act_on_offset(g, q);
      const double n0 = std::sqrt(q.dx * q.dx + q.dy * q.dy);
      const double n1 = std::sqrt(r.dx * r.dx + r.dy * r.dy);
      CHECK(std::abs(n0 - n1) <= 1e-12);
    }
}

TEST_CASE("offset action composes like the group") {
  GroupSpec d8{8, true};
  Rng rng(11);
  for (const auto& a : d8.elements())
    for (const auto& b : d8.elements()) {
      const Offset2 q{rng.uniform(-2, 2), rng.uniform(-2, 2)};
      const auto lhs = act_on_offset(a, act_on_offset(b, q));
      const auto rhs = act_on_offset(compose(a, b), q);
      CHECK(std::abs(lhs.dx - rhs.dx) <= 1e-12);
      CHECK(std::abs(lhs.dy - rhs.dy) <= 1e-12);
    }
}

TEST_CASE("grid_exact") {
  CHECK(grid_exact(DihedralElement::identity(8)));
  CHECK_FALSE(grid_exact(DihedralElement::rotation(1, 8)));  // 45 degrees
  CHECK(grid_exact(DihedralElement::reflection(2, 8)));
  for (int i = 0; i < 8; ++i) CHECK(grid_exact(GroupSpec{4, true}.element_at(i)));
}

TEST_CASE("act_on_image on a 2x2 raster") {
  Tensor img({1, 2, 2}, {1, 2, 3, 4});
  CHECK(max_abs_diff(act_on_image(DihedralElement::identity(4), img), img) == 0.0);

  const Tensor rot = act_on_image(DihedralElement::rotation(1, 4), img);
  // 90-degree rotation in this orientation convention
  CHECK(rot.data == std::vector<double>({3, 1, 4, 2}));

  CHECK_THROWS_AS(act_on_image(DihedralElement::identity(4), Tensor({1, 2, 3})), ShapeError);
}

TEST_CASE("grid-exact image action is a pure pixel permutation") {
  Rng rng(5);
  Tensor img = rng.tensor_uniform({2, 6, 6}, -1, 1);
  GroupSpec d4{4, true};
  for (const auto& g : d4.elements()) {
    const Tensor out = act_on_image(g, img);
    std::multiset<double> a(img.data.begin(), img.data.end());
    std::multiset<double> b(out.data.begin(), out.data.end());
    CHECK(a == b);
  }
}

TEST_CASE("image action composes on grid-exact elements") {
  Rng rng(9);
  Tensor img = rng.tensor_uniform({1, 8, 8}, -1, 1);
  const auto r2 = DihedralElement::rotation(2, 8);
  const auto r4 = DihedralElement::rotation(4, 8);
  CHECK(max_abs_diff(act_on_image(r2, act_on_image(r2, img)), act_on_image(r4, img)) == 0.0);

  GroupSpec d4{4, true};
  for (const auto& a : d4.elements())
    for (const auto& b : d4.elements())
      CHECK(max_abs_diff(act_on_image(a, act_on_image(b, img)),
                         act_on_image(compose(a, b), img)) == 0.0);
}

TEST_CASE("bilinear image action approximates the identity round trip") {
  // 45-degree rotation forward then back is not exact, but must be close on
  // the interior of a smooth raster.
  Rng rng(13);
  const int S = 33;
  Tensor img({1, S, S});
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      img.at3(0, y, x) = std::sin(0.3 * x) * std::cos(0.25 * y);
  const auto g = DihedralElement::rotation(1, 8);
  const Tensor back = act_on_image(inverse(g), act_on_image(g, img));
  double worst = 0;
  for (int y = 10; y < S - 10; ++y)
    for (int x = 10; x < S - 10; ++x) worst = std::max(worst, std::abs(back.at3(0, y, x) - img.at3(0, y, x)));
  CHECK(worst < 0.05);
}
