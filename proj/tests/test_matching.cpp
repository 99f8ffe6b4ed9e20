#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dskt/matching.hpp"
#include "dskt/net.hpp"
#include "dskt/rng.hpp"
#include "fd_check.hpp"

using namespace dskt;
using dskt_test::fd_check;

namespace {

Tensor random_map(Rng& rng, const GroupSpec& g, int C, int S) {
  return rng.tensor_uniform({C * g.order(), S, S}, -1, 1);
}

// Expected transform of a reflectional match map under g = b^l r^m:
// slot n of the transformed map holds slot (m - n) for l = 1, (n + m) for
// l = 0, evaluated at the moved position.
Tensor expected_ref_map(const GroupSpec& group, const DihedralElement& g, const Tensor& H,
                        int C) {
  const int N = group.N;
  const Tensor moved = act_on_image(g, H);
  Tensor out(H.shape);
  const std::size_t hw = static_cast<std::size_t>(H.dim(1)) * H.dim(2);
  for (int c = 0; c < C; ++c)
    for (int n = 0; n < N; ++n) {
      const int src = g.l == 0 ? (n + g.n) % N : ((g.n - n) % N + N) % N;
      std::copy(moved.plane(c * N + src), moved.plane(c * N + src) + hw,
                out.plane(c * N + n));
    }
  return out;
}

}  // namespace

TEST_CASE("fiber_transform basics") {
  GroupSpec d4{4, true};
  Rng rng(41);
  const Tensor F = random_map(rng, d4, 2, 5);
  CHECK(max_abs_diff(fiber_transform(d4, F, 0, 0), F) == 0.0);
  // applying the reflection twice is the identity (b^2 = e)
  CHECK(max_abs_diff(fiber_transform(d4, fiber_transform(d4, F, 1, 0), 1, 0), F) == 0.0);
  CHECK_THROWS_AS(fiber_transform(d4, F, 2, 0), ShapeError);
  CHECK_THROWS_AS(fiber_transform(d4, F, 0, 4), ShapeError);

  // pixel-wise oracle via act_on_fiber
  const auto rep = regular_representation(d4, DihedralElement{1, 3, 4});
  const Tensor T = fiber_transform(d4, F, 1, 3);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      std::vector<double> fib(16);
      for (int ch = 0; ch < 16; ++ch) fib[ch] = F.at3(ch, y, x);
      const auto expect = act_on_fiber(rep, fib);
      for (int ch = 0; ch < 16; ++ch) CHECK(T.at3(ch, y, x) == expect[ch]);
    }
}

TEST_CASE("group_similarity") {
  Rng rng(42);
  std::vector<double> f(2 * 8);
  for (auto& v : f) v = rng.uniform(-1, 1);
  auto self = group_similarity(f, f, 2);
  for (double v : self) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> neg(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) neg[i] = -f[i];
  auto anti = group_similarity(f, neg, 2);
  for (double v : anti) CHECK(v == doctest::Approx(-1.0).epsilon(1e-12));

  // hand-computed scalar arithmetic on a small pair
  const std::vector<double> a = {1, 2, 0, -1};
  const std::vector<double> b = {0.5, -1, 2, 1};
  const auto s = group_similarity(a, b, 1);
  const double dot = 1 * 0.5 - 2 - 1;
  const double na = std::sqrt(1 + 4 + 0 + 1), nb = std::sqrt(0.25 + 1 + 4 + 1);
  CHECK(s[0] == doctest::Approx(dot / (na * nb)).epsilon(1e-14));

  CHECK_THROWS_AS(group_similarity(a, std::vector<double>{1, 2}, 1), ShapeError);
}

TEST_CASE("single-fiber reflectional matching equivariance (N=8, C=4)") {
  // 1x1 spatial map makes the k=0 matching a pure fiber computation.
  GroupSpec d8{8, true};
  Rng rng(43);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor F = random_map(rng, d8, 4, 1);
    const Tensor H = reflectional_match_fwd(d8, F, 0);
    for (int m = 0; m < 8; ++m) {
      const Tensor Ft = fiber_transform(d8, F, 0, m);
      const Tensor Ht = reflectional_match_fwd(d8, Ft, 0);
      for (int c = 0; c < 4; ++c)
        for (int n = 0; n < 8; ++n) {
          const double expect = H.at3(c * 8 + (n + m) % 8, 0, 0);
          worst = std::max(worst, std::abs(Ht.at3(c * 8 + n, 0, 0) - expect));
        }
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("single-fiber reflection behaviour is the slot involution") {
  GroupSpec d8{8, true};
  Rng rng(44);
  const Tensor F = random_map(rng, d8, 2, 1);
  const Tensor H = reflectional_match_fwd(d8, F, 0);
  const Tensor Hb = reflectional_match_fwd(d8, fiber_transform(d8, F, 1, 0), 0);
  for (int c = 0; c < 2; ++c)
    for (int n = 0; n < 8; ++n)
      CHECK(Hb.at3(c * 8 + n, 0, 0) ==
            doctest::Approx(H.at3(c * 8 + (8 - n) % 8, 0, 0)).epsilon(1e-12));
}

TEST_CASE("spatial reflectional matching equivariance on D_4") {
  GroupSpec d4{4, true};
  Rng rng(45);
  const Tensor F = random_map(rng, d4, 2, 8);
  for (int k : {0, 1, 2}) {
    const Tensor H = reflectional_match_fwd(d4, F, k);
    for (const auto& g : d4.elements()) {
      const Tensor lhs = reflectional_match_fwd(d4, transform_feature(d4, g, F), k);
      const Tensor rhs = expected_ref_map(d4, g, H, 2);
      CAPTURE(k);
      CAPTURE(g.l);
      CAPTURE(g.n);
      CHECK(max_abs_diff(lhs, rhs) <= 1e-10);
    }
  }
}

TEST_CASE("rotational matching is invariant under all 8 D_4 transforms") {
  GroupSpec d4{4, true};
  Rng rng(46);
  const Tensor F = random_map(rng, d4, 3, 8);
  for (int k : {0, 1}) {
    const Tensor H = rotational_match_fwd(d4, F, k);
    for (const auto& g : d4.elements()) {
      const Tensor lhs = rotational_match_fwd(d4, transform_feature(d4, g, F), k);
      const Tensor rhs = act_on_image(g, H);  // slots unchanged
      CHECK(max_abs_diff(lhs, rhs) <= 1e-10);
    }
  }
}

TEST_CASE("fibers fixed by the whole group give similarity one") {
  GroupSpec d4{4, true};
  // constant within each channel block -> fixed by every permutation
  Tensor F({2 * 8, 3, 3});
  for (int c = 0; c < 2; ++c)
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 9; ++i) F.plane(c * 8 + j)[i] = 0.4 + 0.3 * c;
  const Tensor Href = reflectional_match_fwd(d4, F, 0);
  for (double v : Href.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  const Tensor Hrot = rotational_match_fwd(d4, F, 0);
  for (double v : Hrot.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rotational matching hand fiber (C=1, N=4)") {
  GroupSpec d4{4, true};
  Tensor F({8, 1, 1});
  F.data = {1, 0, 0, 0, 0, 0, 0, 0};
  const Tensor H = rotational_match_fwd(d4, F, 0);
  REQUIRE(H.dim(0) == 2);  // floor(N/2) slots
  CHECK(H.at3(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(H.at3(1, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("similarity bounds") {
  GroupSpec d8{8, true};
  Rng rng(47);
  const Tensor F = random_map(rng, d8, 2, 6);
  const Tensor H0 = reflectional_match_fwd(d8, F, 0);
  for (double v : H0.data) {
    CHECK(v >= -1.0 - 1e-12);
    CHECK(v <= 1.0 + 1e-12);
  }
  // normalized neighbourhood sums stay within the cosine range
  const Tensor H2 = reflectional_match_fwd(d8, F, 2, 1e-8, true);
  for (double v : H2.data) {
    CHECK(v >= -1.0 - 1e-12);
    CHECK(v <= 1.0 + 1e-12);
  }
  // unnormalized sums are bounded by |Q_k|
  const Tensor H2u = reflectional_match_fwd(d8, F, 2);
  for (double v : H2u.data) CHECK(std::abs(v) <= 25.0 + 1e-12);
}

TEST_CASE("OpenMP matching kernels agree with the serial reference") {
  GroupSpec d8{8, true};
  Rng rng(48);
  const Tensor F = random_map(rng, d8, 2, 7);
  for (int k : {0, 1}) {
    CHECK(max_abs_diff(reflectional_match_fwd(d8, F, k),
                       reflectional_match_serial(d8, F, k)) == 0.0);
    CHECK(max_abs_diff(rotational_match_fwd(d8, F, k),
                       rotational_match_serial(d8, F, k)) == 0.0);
  }
}

TEST_CASE("matching gradients match finite differences") {
  GroupSpec d4{4, true};
  Rng rng(49);
  for (int k : {0, 1}) {
    auto rep = fd_check(
        [&](Tape& t, const std::vector<Var>& v) {
          Var h = reflectional_match(v[0], d4, k);
          return mean_all(mul(h, h));
        },
        {random_map(rng, d4, 1, 4)});
    CAPTURE(k);
    CHECK(rep.max_rel_err <= 1e-4);

    rep = fd_check(
        [&](Tape& t, const std::vector<Var>& v) {
          Var h = rotational_match(v[0], d4, k);
          return mean_all(mul(h, h));
        },
        {random_map(rng, d4, 1, 4)});
    CHECK(rep.max_rel_err <= 1e-4);
  }
}

TEST_CASE("multiscale concat channel arithmetic") {
  GroupSpec d8{8, true};
  Rng rng(50);
  const int C = 2;
  const Tensor F = random_map(rng, d8, C, 6);
  Tape t;
  Var vF = t.input(F);
  Var cat = multiscale_concat_ref(vF, d8, {0, 1, 2});
  // C*N per scale plus C*2N for the base map
  CHECK(t.val(cat).dim(0) == C * 8 * 3 + C * 16);

  Var catr = multiscale_concat_rot(vF, d8, {0, 1, 2}, ReduceMode::kMax);
  CHECK(t.val(catr).dim(0) == C * 4 * 3 + C);

  CHECK_THROWS_AS(multiscale_concat_ref(vF, d8, {}), ConfigError);

  // degenerate zero-channel map passes through
  Tape t2;
  Var zf = t2.input(Tensor({0, 6, 6}));
  CHECK(t2.val(multiscale_concat_ref(zf, d8, {0})).dim(0) == 0);
}

TEST_CASE("multiscale concat preserves the per-part transformation laws") {
  GroupSpec d4{4, true};
  Rng rng(51);
  const int C = 1;
  const Tensor F = random_map(rng, d4, C, 6);
  const auto g = DihedralElement::rotation(1, 4);

  Tape t;
  const Tensor lhs = t.val(multiscale_concat_ref(t.input(transform_feature(d4, g, F)), d4, {0, 1}));

  // expected: each H block transformed with the match-map law, F with the
  // feature law
  const Tensor H0 = reflectional_match_fwd(d4, F, 0);
  const Tensor H1 = reflectional_match_fwd(d4, F, 1);
  const Tensor E0 = expected_ref_map(d4, g, H0, C);
  const Tensor E1 = expected_ref_map(d4, g, H1, C);
  const Tensor EF = transform_feature(d4, g, F);
  Tensor expect({lhs.dim(0), 6, 6});
  std::size_t off = 0;
  for (const Tensor* part : {&E0, &E1, &EF}) {
    std::copy(part->data.begin(), part->data.end(), expect.data.begin() + off);
    off += part->data.size();
  }
  CHECK(max_abs_diff(lhs, expect) <= 1e-10);
}
