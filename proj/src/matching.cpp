#include "dskt/matching.hpp"

#include <omp.h>

#include <cmath>

#include "dskt/net.hpp"
#include "dskt/runtime.hpp"

namespace dskt {

namespace {

// One comparison slot: channel gathers realizing the two fiber transforms and
// per-q sample offsets for both arguments.
struct MatchSlot {
  std::vector<int> ga1, ga2;          // (sigma(g) F)[j] = F[ga[j]]
  std::vector<Offset2> off1, off2;    // per element of Q_k
};

std::vector<int> sigma_gather(const GroupSpec& group, const DihedralElement& g) {
  const DihedralElement gi = inverse(g);
  std::vector<int> idx(group.order());
  for (int j = 0; j < group.order(); ++j)
    idx[j] = group.index_of(compose(gi, group.element_at(j)));
  return idx;
}

std::vector<Offset2> q_set(int k) {
  std::vector<Offset2> q;
  for (int j = -k; j <= k; ++j)
    for (int i = -k; i <= k; ++i) q.push_back({double(i), double(j)});
  return q;
}

std::vector<MatchSlot> reflect_slots(const GroupSpec& group, int k) {
  const int N = group.N;
  const auto Q = q_set(k);
  std::vector<MatchSlot> slots(N);
  for (int n = 0; n < N; ++n) {
    MatchSlot& s = slots[n];
    s.ga1 = sigma_gather(group, DihedralElement::rotation(n, N));
    s.ga2 = sigma_gather(group, DihedralElement::reflection(n, N));
    for (const auto& q : Q) {
      // first argument samples at the contragradient rotation of q; this is
      // what makes the neighbourhood sum commute with input rotations
      s.off1.push_back(act_on_offset(DihedralElement::rotation(-n, N), q));
      s.off2.push_back(act_on_offset(DihedralElement::reflection(n, N), q));
    }
  }
  return slots;
}

std::vector<MatchSlot> rotate_slots(const GroupSpec& group, int k) {
  const int N = group.N;
  const int M = N / 2;
  const auto Q = q_set(k);
  std::vector<MatchSlot> slots(M);
  for (int m = 1; m <= M; ++m) {
    MatchSlot& s = slots[m - 1];
    s.ga1 = sigma_gather(group, DihedralElement::identity(N));
    s.ga2 = sigma_gather(group, DihedralElement::rotation(m, N));
    for (const auto& q : Q) {
      s.off1.push_back(q);
      s.off2.push_back(act_on_offset(DihedralElement::rotation(m, N), q));
    }
  }
  return slots;
}

// Bilinear taps for one sample position (x+off). Up to 4 entries.
struct Taps {
  int n = 0;
  int at[4];
  double w[4];
};

inline Taps make_taps(int x, int y, const Offset2& off, int W, int H) {
  Taps t;
  const double sx = x + off.dx, sy = y + off.dy;
  const double rx = std::round(sx), ry = std::round(sy);
  if (std::abs(sx - rx) < 1e-9 && std::abs(sy - ry) < 1e-9) {
    const int ix = static_cast<int>(rx), iy = static_cast<int>(ry);
    if (ix >= 0 && ix < W && iy >= 0 && iy < H) {
      t.at[t.n] = iy * W + ix;
      t.w[t.n++] = 1.0;
    }
    return t;
  }
  const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
  const double fx = sx - x0, fy = sy - y0;
  const double ws[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int i = 0; i < 4; ++i) {
    if (xs[i] < 0 || xs[i] >= W || ys[i] < 0 || ys[i] >= H || ws[i] == 0.0) continue;
    t.at[t.n] = ys[i] * W + xs[i];
    t.w[t.n++] = ws[i];
  }
  return t;
}

void check_group_map(const GroupSpec& group, const Tensor& F) {
  if (F.ndim() != 3 || F.dim(0) % group.order() != 0)
    throw ShapeError("matching: channel extent not divisible by |G|");
}

// Shared forward: one output block of `slots.size()` maps per channel.
Tensor match_forward(const GroupSpec& group, const Tensor& F,
                     const std::vector<MatchSlot>& slots, double eps, bool normalize) {
  check_group_map(group, F);
  const int G = group.order();
  const int C = F.dim(0) / G;
  const int H = F.dim(1), W = F.dim(2);
  const int S = static_cast<int>(slots.size());
  const int NQ = static_cast<int>(slots.empty() ? 0 : slots[0].off1.size());
  const double norm = normalize && NQ > 0 ? 1.0 / NQ : 1.0;
  Tensor out({C * S, H, W});

#pragma omp parallel num_threads(worker_threads())
  {
    std::vector<double> a(G), b(G);
#pragma omp for schedule(static)
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        for (int si = 0; si < S; ++si) {
          const MatchSlot& sl = slots[si];
          for (int q = 0; q < NQ; ++q) {
            const Taps t1 = make_taps(x, y, sl.off1[q], W, H);
            const Taps t2 = make_taps(x, y, sl.off2[q], W, H);
            for (int c = 0; c < C; ++c) {
              const std::size_t cbase = static_cast<std::size_t>(c) * G;
              double dot = 0, na = 0, nb = 0;
              for (int j = 0; j < G; ++j) {
                const double* p1 = F.plane(static_cast<int>(cbase) + sl.ga1[j]);
                const double* p2 = F.plane(static_cast<int>(cbase) + sl.ga2[j]);
                double av = 0, bv = 0;
                for (int ti = 0; ti < t1.n; ++ti) av += t1.w[ti] * p1[t1.at[ti]];
                for (int ti = 0; ti < t2.n; ++ti) bv += t2.w[ti] * p2[t2.at[ti]];
                a[j] = av;
                b[j] = bv;
                dot += av * bv;
                na += av * av;
                nb += bv * bv;
              }
              const double ma = std::max(std::sqrt(na), eps);
              const double mb = std::max(std::sqrt(nb), eps);
              out.at3(c * S + si, y, x) += norm * dot / (ma * mb);
            }
          }
        }
      }
    }
  }
  return out;
}

// Backward of match_forward w.r.t. F (recomputes the forward intermediates).
Tensor match_backward(const GroupSpec& group, const Tensor& F, const Tensor& gout,
                      const std::vector<MatchSlot>& slots, double eps, bool normalize) {
  const int G = group.order();
  const int C = F.dim(0) / G;
  const int H = F.dim(1), W = F.dim(2);
  const int S = static_cast<int>(slots.size());
  const int NQ = static_cast<int>(slots.empty() ? 0 : slots[0].off1.size());
  const double norm = normalize && NQ > 0 ? 1.0 / NQ : 1.0;

  const int nthreads = worker_threads();
  std::vector<Tensor> buf(nthreads);

#pragma omp parallel num_threads(nthreads)
  {
    const int tid = omp_get_thread_num();
    buf[tid] = Tensor(F.shape);
    Tensor& gF = buf[tid];
    std::vector<double> a(G), b(G);
#pragma omp for schedule(static)
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        for (int si = 0; si < S; ++si) {
          const MatchSlot& sl = slots[si];
          for (int q = 0; q < NQ; ++q) {
            const Taps t1 = make_taps(x, y, sl.off1[q], W, H);
            const Taps t2 = make_taps(x, y, sl.off2[q], W, H);
            for (int c = 0; c < C; ++c) {
              const double go = norm * gout.at3(c * S + si, y, x);
              if (go == 0.0) continue;
              const std::size_t cbase = static_cast<std::size_t>(c) * G;
              double dot = 0, na = 0, nb = 0;
              for (int j = 0; j < G; ++j) {
                const double* p1 = F.plane(static_cast<int>(cbase) + sl.ga1[j]);
                const double* p2 = F.plane(static_cast<int>(cbase) + sl.ga2[j]);
                double av = 0, bv = 0;
                for (int ti = 0; ti < t1.n; ++ti) av += t1.w[ti] * p1[t1.at[ti]];
                for (int ti = 0; ti < t2.n; ++ti) bv += t2.w[ti] * p2[t2.at[ti]];
                a[j] = av;
                b[j] = bv;
                dot += av * bv;
                na += av * av;
                nb += bv * bv;
              }
              const double sna = std::sqrt(na), snb = std::sqrt(nb);
              const double ma = std::max(sna, eps), mb = std::max(snb, eps);
              const double inv = 1.0 / (ma * mb);
              const double s = dot * inv;
              for (int j = 0; j < G; ++j) {
                // d s / d a_j and d s / d b_j of the guarded cosine
                double da = b[j] * inv;
                double db = a[j] * inv;
                if (sna > eps) da -= s * a[j] / na;
                if (snb > eps) db -= s * b[j] / nb;
                da *= go;
                db *= go;
                double* q1 = gF.plane(static_cast<int>(cbase) + sl.ga1[j]);
                double* q2 = gF.plane(static_cast<int>(cbase) + sl.ga2[j]);
                for (int ti = 0; ti < t1.n; ++ti) q1[t1.at[ti]] += t1.w[ti] * da;
                for (int ti = 0; ti < t2.n; ++ti) q2[t2.at[ti]] += t2.w[ti] * db;
              }
            }
          }
        }
      }
    }
  }

  Tensor gF(F.shape);
  for (int t = 0; t < nthreads; ++t) {
    if (buf[t].data.empty()) continue;
    for (std::size_t i = 0; i < gF.data.size(); ++i) gF.data[i] += buf[t].data[i];
  }
  return gF;
}

// Straightforward reference: materialize the transformed maps, then sample
// with plain bilinear reads. Kept serial for testing and benchmarking.
Tensor match_reference(const GroupSpec& group, const Tensor& F,
                       const std::vector<MatchSlot>& slots, double eps, bool normalize) {
  check_group_map(group, F);
  const int G = group.order();
  const int C = F.dim(0) / G;
  const int H = F.dim(1), W = F.dim(2);
  const int S = static_cast<int>(slots.size());
  const int NQ = static_cast<int>(slots.empty() ? 0 : slots[0].off1.size());
  const double norm = normalize && NQ > 0 ? 1.0 / NQ : 1.0;
  Tensor out({C * S, H, W});

  auto sample_fiber = [&](const Tensor& M, double sx, double sy, std::vector<double>& dst) {
    std::fill(dst.begin(), dst.end(), 0.0);
    const double rx = std::round(sx), ry = std::round(sy);
    if (std::abs(sx - rx) < 1e-9 && std::abs(sy - ry) < 1e-9) {
      const int ix = static_cast<int>(rx), iy = static_cast<int>(ry);
      if (ix < 0 || ix >= W || iy < 0 || iy >= H) return;
      for (int ch = 0; ch < M.dim(0); ++ch) dst[ch] = M.at3(ch, iy, ix);
      return;
    }
    const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
    const double fx = sx - x0, fy = sy - y0;
    for (int dyy = 0; dyy < 2; ++dyy)
      for (int dxx = 0; dxx < 2; ++dxx) {
        const int xx = x0 + dxx, yy = y0 + dyy;
        if (xx < 0 || xx >= W || yy < 0 || yy >= H) continue;
        const double w = (dxx ? fx : 1 - fx) * (dyy ? fy : 1 - fy);
        for (int ch = 0; ch < M.dim(0); ++ch) dst[ch] += w * M.at3(ch, yy, xx);
      }
  };

  for (int si = 0; si < S; ++si) {
    const MatchSlot& sl = slots[si];
    // transformed maps via explicit channel gathers
    Tensor F1(F.shape), F2(F.shape);
    for (int c = 0; c < C; ++c)
      for (int j = 0; j < G; ++j) {
        std::copy(F.plane(c * G + sl.ga1[j]), F.plane(c * G + sl.ga1[j]) + H * W,
                  F1.plane(c * G + j));
        std::copy(F.plane(c * G + sl.ga2[j]), F.plane(c * G + sl.ga2[j]) + H * W,
                  F2.plane(c * G + j));
      }
    std::vector<double> fa(C * G), fb(C * G);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int q = 0; q < NQ; ++q) {
          sample_fiber(F1, x + sl.off1[q].dx, y + sl.off1[q].dy, fa);
          sample_fiber(F2, x + sl.off2[q].dx, y + sl.off2[q].dy, fb);
          const auto sim = group_similarity(fa, fb, C, eps);
          for (int c = 0; c < C; ++c) out.at3(c * S + si, y, x) += norm * sim[c];
        }
  }
  return out;
}

}  // namespace

Tensor fiber_transform(const GroupSpec& group, const Tensor& F, int l, int n) {
  if (l < 0 || l > 1 || n < 0 || n >= group.N)
    throw ShapeError("fiber_transform: invalid (l, n)");
  check_group_map(group, F);
  const int G = group.order();
  const int C = F.dim(0) / G;
  const GroupPermutation rep =
      regular_representation(group, DihedralElement{l, n, group.N});
  Tensor out(F.shape);
  const std::size_t hw = static_cast<std::size_t>(F.dim(1)) * F.dim(2);
  for (int c = 0; c < C; ++c)
    for (int j = 0; j < G; ++j)
      std::copy(F.plane(c * G + j), F.plane(c * G + j) + hw, out.plane(c * G + rep.map[j]));
  return out;
}

std::vector<double> group_similarity(const std::vector<double>& f1,
                                     const std::vector<double>& f2, int C, double eps) {
  if (f1.size() != f2.size() || C < 1 || f1.size() % C != 0)
    throw ShapeError("group_similarity: length mismatch");
  const int G = static_cast<int>(f1.size()) / C;
  std::vector<double> out(C);
  for (int c = 0; c < C; ++c) {
    double dot = 0, na = 0, nb = 0;
    for (int j = 0; j < G; ++j) {
      const double a = f1[c * G + j], b = f2[c * G + j];
      dot += a * b;
      na += a * a;
      nb += b * b;
    }
    out[c] = dot / (std::max(std::sqrt(na), eps) * std::max(std::sqrt(nb), eps));
  }
  return out;
}

Tensor reflectional_match_fwd(const GroupSpec& group, const Tensor& F, int k, double eps,
                              bool normalize) {
  return match_forward(group, F, reflect_slots(group, k), eps, normalize);
}

Tensor reflectional_match_serial(const GroupSpec& group, const Tensor& F, int k, double eps,
                                 bool normalize) {
  return match_reference(group, F, reflect_slots(group, k), eps, normalize);
}

Tensor rotational_match_fwd(const GroupSpec& group, const Tensor& F, int k, double eps,
                            bool normalize) {
  return match_forward(group, F, rotate_slots(group, k), eps, normalize);
}

Tensor rotational_match_serial(const GroupSpec& group, const Tensor& F, int k, double eps,
                               bool normalize) {
  return match_reference(group, F, rotate_slots(group, k), eps, normalize);
}

namespace {

Var match_op(Var F, const GroupSpec& group, int k, double eps, bool normalize, bool reflect,
             const char* name) {
  Tape& t = *F.tape;
  const auto slots = reflect ? reflect_slots(group, k) : rotate_slots(group, k);
  Tensor out = match_forward(group, t.val(F), slots, eps, normalize);
  const int iF = F.id;
  const GroupSpec g = group;
  return t.push(std::move(out), t.requires_grad(iF), name,
                [iF, g, k, eps, normalize, reflect](Tape& t, int self) {
                  if (!t.requires_grad(iF)) return;
                  const auto slots = reflect ? reflect_slots(g, k) : rotate_slots(g, k);
                  Tensor gF = match_backward(g, t.val(iF), t.grad(self), slots, eps, normalize);
                  Tensor& dst = t.grad(iF);
                  for (std::size_t i = 0; i < gF.data.size(); ++i) dst.data[i] += gF.data[i];
                });
}

}  // namespace

Var reflectional_match(Var F, const GroupSpec& group, int k, double eps, bool normalize) {
  return match_op(F, group, k, eps, normalize, true, "ref_match");
}

Var rotational_match(Var F, const GroupSpec& group, int k, double eps, bool normalize) {
  return match_op(F, group, k, eps, normalize, false, "rot_match");
}

Var multiscale_concat_ref(Var F, const GroupSpec& group, const std::vector<int>& scales,
                          double eps, bool normalize) {
  if (scales.empty()) throw ConfigError("multiscale_concat: scales must be non-empty");
  std::vector<Var> parts;
  for (int k : scales) parts.push_back(reflectional_match(F, group, k, eps, normalize));
  parts.push_back(F);
  return concat_channels(parts);
}

Var multiscale_concat_rot(Var F, const GroupSpec& group, const std::vector<int>& scales,
                          ReduceMode pool_mode, double eps, bool normalize) {
  if (scales.empty()) throw ConfigError("multiscale_concat: scales must be non-empty");
  std::vector<Var> parts;
  for (int k : scales) parts.push_back(rotational_match(F, group, k, eps, normalize));
  parts.push_back(pool_group(group, F, pool_mode));
  return concat_channels(parts);
}

}  // namespace dskt
