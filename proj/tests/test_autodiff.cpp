#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dskt/autodiff.hpp"
#include "dskt/checkpoint.hpp"
#include "dskt/kernels.hpp"
#include "dskt/optim.hpp"
#include "dskt/rng.hpp"
#include "fd_check.hpp"

using namespace dskt;
using dskt_test::fd_check;

TEST_CASE("conv2d with a 1x1 identity kernel is the identity") {
  Rng rng(1);
  Tensor x = rng.tensor_uniform({2, 5, 5}, -1, 1);
  Tensor k({2, 2, 1, 1});
  k.data = {1, 0, 0, 1};
  Tape t;
  Var out = conv2d(t.input(x), t.input(k));
  CHECK(max_abs_diff(t.val(out), x) == 0.0);
}

TEST_CASE("conv2d all-ones 3x3 kernel on a one-hot input") {
  Tensor x({1, 5, 5});
  x.at3(0, 2, 2) = 1.0;
  Tensor k({1, 1, 3, 3});
  k.fill(1.0);
  Tape t;
  const Tensor& out = t.val(conv2d(t.input(x), t.input(k)));
  for (int y = 0; y < 5; ++y)
    for (int xx = 0; xx < 5; ++xx) {
      const double expect = (std::abs(y - 2) <= 1 && std::abs(xx - 2) <= 1) ? 1.0 : 0.0;
      CHECK(out.at3(0, y, xx) == expect);
    }
}

TEST_CASE("conv2d rejects channel mismatch") {
  Tape t;
  Var x = t.input(Tensor({2, 4, 4}));
  Var k = t.input(Tensor({1, 3, 3, 3}));
  CHECK_THROWS_AS(conv2d(x, k), ShapeError);
}

TEST_CASE("conv2d OpenMP kernel matches the serial reference bit-exactly") {
  Rng rng(2);
  for (int stride : {1, 2}) {
    Tensor x = rng.tensor_uniform({3, 9, 9}, -1, 1);
    Tensor k = rng.tensor_uniform({4, 3, 3, 3}, -1, 1);
    const Tensor a = kernels::conv2d(x, k, stride);
    const Tensor b = kernels::conv2d_serial(x, k, stride);
    CHECK(max_abs_diff(a, b) == 0.0);

    // The reference gradients accumulate in scatter order, so agreement is
    // up to floating-point association, not bit-exact.
    Tensor gout = rng.tensor_uniform(a.shape, -1, 1);
    CHECK(max_abs_diff(kernels::conv2d_grad_input(gout, k, 9, 9, stride),
                       kernels::conv2d_grad_input_serial(gout, k, 9, 9, stride)) <= 1e-13);
    CHECK(max_abs_diff(kernels::conv2d_grad_kernel(gout, x, 3, 3, stride),
                       kernels::conv2d_grad_kernel_serial(gout, x, 3, 3, stride)) <= 1e-13);
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(3);
  for (int stride : {1, 2}) {
    auto rep = fd_check(
        [&](Tape& t, const std::vector<Var>& v) {
          Var y = conv2d(v[0], v[1], stride);
          return mean_all(mul(y, y));
        },
        {rng.tensor_uniform({2, 5, 5}, -1, 1), rng.tensor_uniform({3, 2, 3, 3}, -1, 1)});
    CHECK(rep.max_rel_err <= 1e-4);
  }
}

TEST_CASE("conv2d is translation-equivariant on interior pixels") {
  Rng rng(4);
  Tensor x = rng.tensor_uniform({1, 8, 8}, -1, 1);
  Tensor k = rng.tensor_uniform({1, 1, 3, 3}, -1, 1);
  // shift input by one pixel down-right
  Tensor xs({1, 8, 8});
  for (int y = 1; y < 8; ++y)
    for (int xx = 1; xx < 8; ++xx) xs.at3(0, y, xx) = x.at3(0, y - 1, xx - 1);
  Tape t;
  const Tensor& a = t.val(conv2d(t.input(x), t.input(k)));
  const Tensor& b = t.val(conv2d(t.input(xs), t.input(k)));
  for (int y = 2; y < 7; ++y)
    for (int xx = 2; xx < 7; ++xx)
      CHECK(b.at3(0, y, xx) == doctest::Approx(a.at3(0, y - 1, xx - 1)).epsilon(1e-15));
}

TEST_CASE("permute_channels") {
  Rng rng(5);
  Tensor x = rng.tensor_uniform({4, 3, 3}, -1, 1);
  GroupPermutation ident = GroupPermutation::identity(2);
  GroupPermutation swap;
  swap.order = 2;
  swap.map = {1, 0};

  Tape t;
  Var vx = t.input(x);
  CHECK(max_abs_diff(t.val(permute_channels(vx, ident, 2)), x) == 0.0);

  const Tensor& sw = t.val(permute_channels(vx, swap, 2));
  for (int y = 0; y < 3; ++y)
    for (int xx = 0; xx < 3; ++xx) {
      CHECK(sw.at3(0, y, xx) == x.at3(1, y, xx));
      CHECK(sw.at3(1, y, xx) == x.at3(0, y, xx));
      CHECK(sw.at3(2, y, xx) == x.at3(3, y, xx));
    }

  // round trip is bit-exact
  GroupPermutation p;
  p.order = 4;
  p.map = {2, 0, 3, 1};
  Var once = permute_channels(t.input(x), p, 1);
  Var back = permute_channels(once, p.inverse(), 1);
  CHECK(max_abs_diff(t.val(back), x) == 0.0);

  CHECK_THROWS_AS(permute_channels(vx, p, 2), ShapeError);

  auto rep = fd_check(
      [&](Tape& tt, const std::vector<Var>& v) {
        return mean_all(mul(permute_channels(v[0], p, 1), v[1]));
      },
      {rng.tensor_uniform({4, 2, 2}, -1, 1), rng.tensor_uniform({4, 2, 2}, -1, 1)});
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("reduce_group") {
  Tensor x({4, 1, 1}, {1, 2, 3, 4});
  Tape t;
  CHECK(t.val(reduce_group(t.input(x), 4, ReduceMode::kMax)).data[0] == 4.0);
  CHECK(t.val(reduce_group(t.input(x), 4, ReduceMode::kMean)).data[0] == 2.5);
  Tensor eq({4, 1, 1}, {7, 7, 7, 7});
  CHECK(t.val(reduce_group(t.input(eq), 4, ReduceMode::kMean)).data[0] == 7.0);
  CHECK_THROWS_AS(reduce_group(t.input(x), 3, ReduceMode::kMax), ShapeError);

  Rng rng(6);
  for (ReduceMode mode : {ReduceMode::kMax, ReduceMode::kMean}) {
    auto rep = fd_check(
        [&](Tape& tt, const std::vector<Var>& v) {
          return mean_all(mul(reduce_group(v[0], 3, mode), v[1]));
        },
        {rng.tensor_uniform({6, 3, 3}, -1, 1), rng.tensor_uniform({2, 3, 3}, -1, 1)});
    CHECK(rep.max_rel_err <= 1e-4);
  }
}

TEST_CASE("pointwise suite values") {
  Tape t;
  Tensor x({1, 1, 1}, {-1.0});
  CHECK(t.val(relu(t.input(x))).data[0] == 0.0);

  Tensor u({4, 1, 1}, {0.3, 0.3, 0.3, 0.3});
  const Tensor& sm = t.val(softmax_channels(t.input(u)));
  for (double v : sm.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

  Tensor a({2, 1, 1}, {3, -2});
  const Tensor& nrm = t.val(l2_normalize_blocks(t.input(a), 2));
  const double n = std::sqrt(9.0 + 4.0);
  CHECK(nrm.data[0] == doctest::Approx(3 / n).epsilon(1e-14));
  CHECK(nrm.data[1] == doctest::Approx(-2 / n).epsilon(1e-14));

  // eps guard: zero fiber stays finite
  Tensor z({2, 1, 1}, {0, 0});
  const Tensor& nz = t.val(l2_normalize_blocks(t.input(z), 2));
  CHECK(nz.data[0] == 0.0);
}

TEST_CASE("pointwise suite gradients match finite differences") {
  Rng rng(7);
  auto scalarize = [](Tape& t, Var y, Var w) { return mean_all(mul(y, w)); };
  std::vector<std::pair<const char*, std::function<Var(Tape&, const std::vector<Var>&)>>> cases;
  cases.emplace_back("add", [&](Tape& t, const std::vector<Var>& v) {
    return scalarize(t, add(v[0], v[1]), v[2]);
  });
  cases.emplace_back("sub", [&](Tape& t, const std::vector<Var>& v) {
    return scalarize(t, sub(v[0], v[1]), v[2]);
  });
  cases.emplace_back("mul", [&](Tape& t, const std::vector<Var>& v) {
    return scalarize(t, mul(v[0], v[1]), v[2]);
  });
  cases.emplace_back("scale", [&](Tape& t, const std::vector<Var>& v) {
    return scalarize(t, scale(v[0], 1.7), v[2]);
  });
  cases.emplace_back("relu", [&](Tape& t, const std::vector<Var>& v) {
    return scalarize(t, relu(v[0]), v[2]);
  });
  cases.emplace_back("sigmoid", [&](Tape& t, const std::vector<Var>& v) {
    return scalarize(t, sigmoid(v[0]), v[2]);
  });
  cases.emplace_back("tanh", [&](Tape& t, const std::vector<Var>& v) {
    return scalarize(t, tanh_act(v[0]), v[2]);
  });
  cases.emplace_back("softplus", [&](Tape& t, const std::vector<Var>& v) {
    return scalarize(t, softplus(v[0]), v[2]);
  });
  cases.emplace_back("softmax", [&](Tape& t, const std::vector<Var>& v) {
    return scalarize(t, softmax_channels(v[0]), v[2]);
  });
  cases.emplace_back("l2norm", [&](Tape& t, const std::vector<Var>& v) {
    return scalarize(t, l2_normalize_blocks(v[0], 2), v[2]);
  });
  cases.emplace_back("concat", [&](Tape& t, const std::vector<Var>& v) {
    Var c = concat_channels({v[0], v[1]});
    return mean_all(mul(c, c));
  });
  cases.emplace_back("gather", [&](Tape& t, const std::vector<Var>& v) {
    Var g = gather_channels(v[0], {3, 0, 0, 2});
    return mean_all(mul(g, g));
  });
  cases.emplace_back("shift", [&](Tape& t, const std::vector<Var>& v) {
    return scalarize(t, shift_bilinear(v[0], 0.6, -1.3), v[2]);
  });

  for (auto& [name, build] : cases) {
    CAPTURE(name);
    auto rep = fd_check(build, {rng.tensor_uniform({4, 3, 3}, -1, 1),
                                rng.tensor_uniform({4, 3, 3}, -1, 1),
                                rng.tensor_uniform({4, 3, 3}, -1, 1)});
    CHECK(rep.max_rel_err <= 1e-4);
  }

  // bias and scalar-variable ops have their own shapes
  auto rep = fd_check(
      [&](Tape& t, const std::vector<Var>& v) {
        Var y = add_bias(v[0], v[1]);
        Var z = add_svar(mul_svar(y, v[2]), v[3]);
        return mean_all(mul(z, z));
      },
      {rng.tensor_uniform({3, 2, 2}, -1, 1), rng.tensor_uniform({3}, -1, 1),
       rng.tensor_uniform({1}, 0.5, 1.5), rng.tensor_uniform({1}, -1, 1)});
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("adamw on a scalar quadratic") {
  // f(x) = x^2 / 2, gradient x; AdamW reaches |x| < 1e-3 within 500 steps.
  Tensor x({1}, {1.0});
  Tensor m({1}), v({1});
  AdamWConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.0;
  for (int i = 1; i <= 500; ++i) {
    Tensor g({1}, {x.data[0]});
    adamw_step(x, g, m, v, i, cfg);
  }
  CHECK(std::abs(x.data[0]) < 1e-3);
}

TEST_CASE("optimizer edge behaviour") {
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  Tensor x({2}, {2.0, -3.0});
  Tensor m({2}), v({2});
  Tensor zero({2});
  Tensor before = x;
  adamw_step(x, zero, m, v, 1, cfg);
  // zero gradient: only decoupled decay moves the parameter
  CHECK(x.data[0] == doctest::Approx(before.data[0] * (1 - cfg.lr * cfg.weight_decay)));
  CHECK(x.data[1] == doctest::Approx(before.data[1] * (1 - cfg.lr * cfg.weight_decay)));

  // lr = 0: no change at all
  cfg.lr = 0.0;
  before = x;
  Tensor g({2}, {5.0, -7.0});
  adamw_step(x, g, m, v, 2, cfg);
  CHECK(x.data == before.data);

  Tensor sx({1}, {1.0});
  sgd_step(sx, Tensor({1}, {0.5}), 0.1);
  CHECK(sx.data[0] == doctest::Approx(0.95));
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(8);
  ParamStore ps;
  ps.add("alpha", rng.tensor_uniform({3, 2, 2}, -10, 10));
  ps.add("beta", rng.tensor_uniform({7}, -1, 1));
  // values with tricky bit patterns
  Tensor t({3}, {1e-300, -0.0, 1.0 / 3.0});
  ps.add("gamma", t);

  const std::string path = "test_ckpt.dskt";
  save_checkpoint(path, ps, {{"note", "unit test"}, {"group_n", "8"}});
  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.meta.at("note") == "unit test");
  CHECK(ck.meta.at("group_n") == "8");
  REQUIRE(ck.params.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(ck.params.name(i) == ps.name(i));
    REQUIRE(ck.params.tensor(i).shape == ps.tensor(i).shape);
    for (std::size_t j = 0; j < ps.tensor(i).data.size(); ++j) {
      // bit-exact comparison, including -0.0
      CHECK(std::memcmp(&ck.params.tensor(i).data[j], &ps.tensor(i).data[j], sizeof(double)) ==
            0);
    }
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint("does_not_exist.dskt"), IoError);
}

TEST_CASE("loss examples from first principles") {
  Tape t;
  // p = 1, p_hat -> 1: zero loss
  {
    Tensor p({1, 1, 1}, {1.0 - 1e-9});
    Tensor tg({1, 1, 1}, {1.0});
    CHECK(t.val(loss_bce(t.input(p), tg, 3.0)).data[0] == doctest::Approx(0.0).epsilon(1e-6));
  }
  // p = 1, p_hat = 0.5, gamma = 3: 3 ln 2
  {
    Tensor p({1, 1, 1}, {0.5});
    Tensor tg({1, 1, 1}, {1.0});
    CHECK(t.val(loss_bce(t.input(p), tg, 3.0)).data[0] ==
          doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-12));
  }
  // p = 0, p_hat = 0.5: ln 2
  {
    Tensor p({1, 1, 1}, {0.5});
    Tensor tg({1, 1, 1}, {0.0});
    CHECK(t.val(loss_bce(t.input(p), tg, 3.0)).data[0] ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  // SmoothL1 branch values
  {
    Tensor mask({3, 1, 1}, {1, 1, 1});
    Tensor pred({3, 1, 1}, {1.0, 1.5, 3.0});
    Tensor targ({3, 1, 1}, {1.0, 1.0, 1.0});
    // per-cell: 0, 0.125, 1.5 -> mean over mask
    CHECK(t.val(loss_smooth_l1(t.input(pred), targ, mask)).data[0] ==
          doctest::Approx((0.0 + 0.125 + 1.5) / 3.0).epsilon(1e-12));
  }
  // empty mask -> 0
  {
    Tensor mask({2, 1, 1}, {0, 0});
    Tensor pred({2, 1, 1}, {5, -2});
    Tensor targ({2, 1, 1}, {0, 0});
    CHECK(t.val(loss_abs(t.input(pred), targ, mask)).data[0] == 0.0);
    CHECK(t.val(loss_smooth_l1(t.input(pred), targ, mask)).data[0] == 0.0);
  }
  // multi-class: uniform logits over S=7
  {
    Tensor logits({7, 1, 2});
    Tensor cls({1, 2}, {0.0, 4.0});  // one background, one fold cell
    const double l = t.val(loss_multiclass_ce(t.input(logits), cls, 3.0)).data[0];
    CHECK(l == doctest::Approx((std::log(7.0) + 3.0 * std::log(7.0)) / 2.0).epsilon(1e-12));
  }
  // confident correct prediction: ~0
  {
    Tensor logits({3, 1, 1});
    logits.data = {30.0, 0.0, 0.0};
    Tensor cls({1, 1}, {0.0});
    CHECK(t.val(loss_multiclass_ce(t.input(logits), cls, 3.0)).data[0] ==
          doctest::Approx(0.0).epsilon(1e-6));
  }
  // invalid class index
  {
    Tensor logits({3, 1, 1});
    Tensor cls({1, 1}, {5.0});
    CHECK_THROWS_AS(loss_multiclass_ce(t.input(logits), cls, 1.0), ShapeError);
  }
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(9);
  // BCE on sigmoid outputs
  {
    Tensor tg({2, 3, 3});
    for (auto& v : tg.data) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    auto rep = fd_check(
        [&](Tape& t, const std::vector<Var>& v) {
          return loss_bce(sigmoid(v[0]), tg, 3.0);
        },
        {rng.tensor_uniform({2, 3, 3}, -1, 1)});
    CHECK(rep.max_rel_err <= 1e-4);
  }
  {
    Tensor mask({2, 3, 3});
    for (auto& v : mask.data) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    Tensor targ = rng.tensor_uniform({2, 3, 3}, -1, 1);
    auto rep = fd_check(
        [&](Tape& t, const std::vector<Var>& v) {
          return loss_smooth_l1(v[0], targ, mask);
        },
        {rng.tensor_uniform({2, 3, 3}, -3, 3)});
    CHECK(rep.max_rel_err <= 1e-4);
    // |x| is kinked at 0; random doubles stay away from it
    rep = fd_check(
        [&](Tape& t, const std::vector<Var>& v) { return loss_abs(v[0], targ, mask); },
        {rng.tensor_uniform({2, 3, 3}, -3, 3)});
    CHECK(rep.max_rel_err <= 1e-4);
  }
  {
    Tensor cls({3, 3});
    for (auto& v : cls.data) v = static_cast<double>(rng.uniform_int(0, 4));
    auto rep = fd_check(
        [&](Tape& t, const std::vector<Var>& v) {
          return loss_multiclass_ce(v[0], cls, 3.0);
        },
        {rng.tensor_uniform({5, 3, 3}, -1, 1)});
    CHECK(rep.max_rel_err <= 1e-4);
  }
}

TEST_CASE("loss_bce is permutation-invariant over cells") {
  Rng rng(10);
  Tensor p = rng.tensor_uniform({1, 2, 4}, 0.05, 0.95);
  Tensor tg({1, 2, 4});
  for (auto& v : tg.data) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  Tape t;
  const double a = t.val(loss_bce(t.input(p), tg, 3.0)).data[0];
  // reverse all cells
  Tensor p2 = p, tg2 = tg;
  std::reverse(p2.data.begin(), p2.data.end());
  std::reverse(tg2.data.begin(), tg2.data.end());
  const double b = t.val(loss_bce(t.input(p2), tg2, 3.0)).data[0];
  CHECK(a == doctest::Approx(b).epsilon(1e-15));
}
