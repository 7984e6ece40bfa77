// Copyright (c) the cvpp authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cvpp/ops.h"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cvpp/gemm.h"

namespace cvpp {
namespace ops {

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr double kSigmaMin = 0.01;
constexpr double kLikelihoodMin = 0.0000152587890625;  // 2^-16
constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

void check_same(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

long long g_mac_count = 0;

// im2col scratch; single-threaded process, reused across calls.
std::vector<float>& scratch_cols() {
  static std::vector<float> buf;
  return buf;
}
std::vector<float>& scratch_dcols() {
  static std::vector<float> buf;
  return buf;
}

void im2col(const Tensor& x, int k, int s, int p, int ho, int wo, float* cols) {
  const int H = x.h, W = x.w, N = ho * wo;
  for (int ci = 0; ci < x.c; ++ci) {
    const float* xc = x.data() + static_cast<size_t>(ci) * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = cols + (static_cast<size_t>(ci * k + ky) * k + kx) * N;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - p + ky;
          float* dst = row + static_cast<size_t>(oy) * wo;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + wo, 0.f);
            continue;
          }
          const float* src = xc + static_cast<size_t>(iy) * W;
          int ox = 0;
          if (s == 1) {
            // Contiguous middle: ix = ox - p + kx.
            for (; ox < wo; ++ox) {
              const int ix = ox - p + kx;
              if (ix >= 0) break;
              dst[ox] = 0.f;
            }
            int run_end = std::min(wo, W + p - kx);
            if (run_end > ox) {
              std::memcpy(dst + ox, src + (ox - p + kx), sizeof(float) * (run_end - ox));
              ox = run_end;
            }
            for (; ox < wo; ++ox) dst[ox] = 0.f;
          } else {
            for (; ox < wo; ++ox) {
              const int ix = ox * s - p + kx;
              dst[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.f;
            }
          }
        }
      }
    }
  }
}

void col2im_add(const float* cols, int cin, int H, int W, int k, int s, int p, int ho,
                int wo, float* dx) {
  const int N = ho * wo;
  for (int ci = 0; ci < cin; ++ci) {
    float* xc = dx + static_cast<size_t>(ci) * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = cols + (static_cast<size_t>(ci * k + ky) * k + kx) * N;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - p + ky;
          if (iy < 0 || iy >= H) continue;
          const float* src = row + static_cast<size_t>(oy) * wo;
          float* dst = xc + static_cast<size_t>(iy) * W;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s - p + kx;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

struct ResizePlan {
  std::vector<int> i0, i1;
  std::vector<float> frac;
};

ResizePlan resize_axis(int n_src, int n_dst) {
  ResizePlan pl;
  pl.i0.resize(n_dst);
  pl.i1.resize(n_dst);
  pl.frac.resize(n_dst);
  const double r = static_cast<double>(n_src) / n_dst;
  for (int d = 0; d < n_dst; ++d) {
    double s = (d + 0.5) * r - 0.5;
    if (s < 0.0) s = 0.0;
    if (s > n_src - 1) s = n_src - 1;
    int lo = static_cast<int>(std::floor(s));
    pl.i0[d] = lo;
    pl.i1[d] = std::min(lo + 1, n_src - 1);
    pl.frac[d] = static_cast<float>(s - lo);
  }
  return pl;
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  check_same(av, bv, "add");
  Tensor out = av;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] += bv.v[i];
  return t.make(std::move(out), {a.id, b.id}, [a, b](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    Tensor& ga = tt.grad_ref(a.id);
    Tensor& gb = tt.grad_ref(b.id);
    for (size_t i = 0; i < g.size(); ++i) {
      ga.v[i] += g.v[i];
      gb.v[i] += g.v[i];
    }
  });
}

Var sub(Tape& t, Var a, Var b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  check_same(av, bv, "sub");
  Tensor out = av;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] -= bv.v[i];
  return t.make(std::move(out), {a.id, b.id}, [a, b](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    Tensor& ga = tt.grad_ref(a.id);
    Tensor& gb = tt.grad_ref(b.id);
    for (size_t i = 0; i < g.size(); ++i) {
      ga.v[i] += g.v[i];
      gb.v[i] -= g.v[i];
    }
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  check_same(av, bv, "mul");
  Tensor out = av;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] *= bv.v[i];
  return t.make(std::move(out), {a.id, b.id}, [a, b](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    const Tensor& av2 = tt.val(a.id);
    const Tensor& bv2 = tt.val(b.id);
    Tensor& ga = tt.grad_ref(a.id);
    Tensor& gb = tt.grad_ref(b.id);
    for (size_t i = 0; i < g.size(); ++i) {
      ga.v[i] += g.v[i] * bv2.v[i];
      gb.v[i] += g.v[i] * av2.v[i];
    }
  });
}

Var scale(Tape& t, Var a, float s) {
  Tensor out = t.val(a);
  for (float& x : out.v) x *= s;
  return t.make(std::move(out), {a.id}, [a, s](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    Tensor& ga = tt.grad_ref(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga.v[i] += s * g.v[i];
  });
}

Var add_scalar(Tape& t, Var a, float s) {
  Tensor out = t.val(a);
  for (float& x : out.v) x += s;
  return t.make(std::move(out), {a.id}, [a](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    Tensor& ga = tt.grad_ref(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i];
  });
}

Var mul_const(Tape& t, Var a, Tensor k) {
  const Tensor& av = t.val(a);
  check_same(av, k, "mul_const");
  Tensor out = av;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] *= k.v[i];
  auto kk = std::make_shared<Tensor>(std::move(k));
  return t.make(std::move(out), {a.id}, [a, kk](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    Tensor& ga = tt.grad_ref(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * kk->v[i];
  });
}

Var concat_c(Tape& t, const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_c: empty");
  int c = 0;
  const Tensor& first = t.val(xs[0]);
  for (Var x : xs) {
    const Tensor& xv = t.val(x);
    if (xv.h != first.h || xv.w != first.w)
      throw std::invalid_argument("concat_c: spatial mismatch");
    c += xv.c;
  }
  Tensor out(c, first.h, first.w);
  size_t off = 0;
  std::vector<int> parents;
  for (Var x : xs) {
    const Tensor& xv = t.val(x);
    std::memcpy(out.data() + off, xv.data(), sizeof(float) * xv.size());
    off += xv.size();
    parents.push_back(x.id);
  }
  std::vector<Var> xs_copy = xs;
  return t.make(std::move(out), parents, [xs_copy](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    size_t off2 = 0;
    for (Var x : xs_copy) {
      Tensor& gx = tt.grad_ref(x.id);
      for (size_t i = 0; i < gx.size(); ++i) gx.v[i] += g.v[off2 + i];
      off2 += gx.size();
    }
  });
}

Var slice_c(Tape& t, Var a, int c0, int n) {
  const Tensor& av = t.val(a);
  if (c0 < 0 || n <= 0 || c0 + n > av.c) throw std::invalid_argument("slice_c: range");
  Tensor out(n, av.h, av.w);
  const size_t plane = static_cast<size_t>(av.h) * av.w;
  std::memcpy(out.data(), av.data() + c0 * plane, sizeof(float) * out.size());
  return t.make(std::move(out), {a.id}, [a, c0, plane](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    Tensor& ga = tt.grad_ref(a.id);
    float* dst = ga.data() + c0 * plane;
    for (size_t i = 0; i < g.size(); ++i) dst[i] += g.v[i];
  });
}

Var conv2d(Tape& t, Var x, Var w, Var b, int k, int stride, int pad) {
  const Tensor& xv = t.val(x);
  const Tensor& wv = t.val(w);
  const Tensor& bv = t.val(b);
  const int cin = xv.c, cout = wv.c, K = cin * k * k;
  if (wv.h != K || wv.w != 1) throw std::invalid_argument("conv2d: weight shape");
  if (bv.c != cout || bv.h != 1 || bv.w != 1) throw std::invalid_argument("conv2d: bias shape");
  const int ho = (xv.h + 2 * pad - k) / stride + 1;
  const int wo = (xv.w + 2 * pad - k) / stride + 1;
  if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: output collapsed");
  const int N = ho * wo;

  g_mac_count += static_cast<long long>(cout) * K * N;

  std::vector<float>& cols = scratch_cols();
  cols.resize(static_cast<size_t>(K) * N);
  im2col(xv, k, stride, pad, ho, wo, cols.data());

  Tensor out(cout, ho, wo);
  gemm(false, false, cout, N, K, wv.data(), cols.data(), out.data(), false);
  for (int co = 0; co < cout; ++co) {
    float* o = out.data() + static_cast<size_t>(co) * N;
    const float bias = bv.v[co];
    for (int i = 0; i < N; ++i) o[i] += bias;
  }

  return t.make(std::move(out), {x.id, w.id, b.id},
                [x, w, b, k, stride, pad, ho, wo](Tape& tt, int self) {
                  const Tensor& g = tt.grad_ref(self);
                  const Tensor& xv2 = tt.val(x.id);
                  const Tensor& wv2 = tt.val(w.id);
                  const int cin2 = xv2.c, cout2 = wv2.c, K2 = cin2 * k * k;
                  const int N2 = ho * wo;

                  Tensor& gb = tt.grad_ref(b.id);
                  for (int co = 0; co < cout2; ++co) {
                    const float* gp = g.data() + static_cast<size_t>(co) * N2;
                    double s = 0.0;
                    for (int i = 0; i < N2; ++i) s += gp[i];
                    gb.v[co] += static_cast<float>(s);
                  }

                  std::vector<float>& cols2 = scratch_cols();
                  cols2.resize(static_cast<size_t>(K2) * N2);
                  im2col(xv2, k, stride, pad, ho, wo, cols2.data());
                  Tensor& gw = tt.grad_ref(w.id);
                  gemm(false, true, cout2, K2, N2, g.data(), cols2.data(), gw.data(), true);

                  std::vector<float>& dcols = scratch_dcols();
                  dcols.resize(static_cast<size_t>(K2) * N2);
                  gemm(true, false, K2, N2, cout2, wv2.data(), g.data(), dcols.data(), false);
                  Tensor& gx = tt.grad_ref(x.id);
                  col2im_add(dcols.data(), cin2, xv2.h, xv2.w, k, stride, pad, ho, wo,
                             gx.data());
                });
}

Var linear(Tape& t, Var x, Var w, Var b) {
  const Tensor& xv = t.val(x);
  const Tensor& wv = t.val(w);
  const Tensor& bv = t.val(b);
  if (xv.h != 1 || xv.w != 1 || wv.h != xv.c || bv.c != wv.c)
    throw std::invalid_argument("linear: shape");
  const int n = xv.c, m = wv.c;
  g_mac_count += static_cast<long long>(m) * n;
  Tensor out(m, 1, 1);
  for (int i = 0; i < m; ++i) {
    double s = bv.v[i];
    const float* row = wv.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) s += static_cast<double>(row[j]) * xv.v[j];
    out.v[i] = static_cast<float>(s);
  }
  return t.make(std::move(out), {x.id, w.id, b.id}, [x, w, b](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    const Tensor& xv2 = tt.val(x.id);
    const Tensor& wv2 = tt.val(w.id);
    const int n2 = xv2.c, m2 = wv2.c;
    Tensor& gx = tt.grad_ref(x.id);
    Tensor& gw = tt.grad_ref(w.id);
    Tensor& gb = tt.grad_ref(b.id);
    for (int i = 0; i < m2; ++i) {
      const float gi = g.v[i];
      gb.v[i] += gi;
      const float* row = wv2.data() + static_cast<size_t>(i) * n2;
      float* grow = gw.data() + static_cast<size_t>(i) * n2;
      for (int j = 0; j < n2; ++j) {
        grow[j] += gi * xv2.v[j];
        gx.v[j] += gi * row[j];
      }
    }
  });
}

Var leaky_relu(Tape& t, Var a, float slope) {
  Tensor out = t.val(a);
  for (float& x : out.v) x = x > 0.f ? x : slope * x;
  return t.make(std::move(out), {a.id}, [a, slope](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    const Tensor& av = tt.val(a.id);
    Tensor& ga = tt.grad_ref(a.id);
    for (size_t i = 0; i < g.size(); ++i)
      ga.v[i] += g.v[i] * (av.v[i] > 0.f ? 1.f : slope);
  });
}

Var softplus(Tape& t, Var a) {
  Tensor out = t.val(a);
  for (float& x : out.v) x = x > 20.f ? x : std::log1p(std::exp(x));
  return t.make(std::move(out), {a.id}, [a](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    const Tensor& av = tt.val(a.id);
    Tensor& ga = tt.grad_ref(a.id);
    for (size_t i = 0; i < g.size(); ++i) {
      const float sig = av.v[i] > 20.f ? 1.f : 1.f / (1.f + std::exp(-av.v[i]));
      ga.v[i] += g.v[i] * sig;
    }
  });
}

Var tanh_(Tape& t, Var a) {
  Tensor out = t.val(a);
  for (float& x : out.v) x = std::tanh(x);
  return t.make(std::move(out), {a.id}, [a](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    const Tensor& y = tt.val(self);
    Tensor& ga = tt.grad_ref(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * (1.f - y.v[i] * y.v[i]);
  });
}

Var sigmoid_(Tape& t, Var a) {
  Tensor out = t.val(a);
  for (float& x : out.v) x = 1.f / (1.f + std::exp(-x));
  return t.make(std::move(out), {a.id}, [a](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    const Tensor& y = tt.val(self);
    Tensor& ga = tt.grad_ref(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * y.v[i] * (1.f - y.v[i]);
  });
}

Var resize_bilinear(Tape& t, Var a, int h2, int w2) {
  const Tensor& av = t.val(a);
  if (h2 <= 0 || w2 <= 0) throw std::invalid_argument("resize_bilinear: size");
  ResizePlan py = resize_axis(av.h, h2);
  ResizePlan px = resize_axis(av.w, w2);
  Tensor out(av.c, h2, w2);
  for (int ci = 0; ci < av.c; ++ci) {
    const float* src = av.data() + static_cast<size_t>(ci) * av.h * av.w;
    float* dst = out.data() + static_cast<size_t>(ci) * h2 * w2;
    for (int oy = 0; oy < h2; ++oy) {
      const float wy = py.frac[oy];
      const float* r0 = src + static_cast<size_t>(py.i0[oy]) * av.w;
      const float* r1 = src + static_cast<size_t>(py.i1[oy]) * av.w;
      float* drow = dst + static_cast<size_t>(oy) * w2;
      for (int ox = 0; ox < w2; ++ox) {
        const float wx = px.frac[ox];
        const float top = (1.f - wx) * r0[px.i0[ox]] + wx * r0[px.i1[ox]];
        const float bot = (1.f - wx) * r1[px.i0[ox]] + wx * r1[px.i1[ox]];
        drow[ox] = (1.f - wy) * top + wy * bot;
      }
    }
  }
  auto spy = std::make_shared<ResizePlan>(std::move(py));
  auto spx = std::make_shared<ResizePlan>(std::move(px));
  return t.make(std::move(out), {a.id}, [a, spy, spx, h2, w2](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    const Tensor& av2 = tt.val(a.id);
    Tensor& ga = tt.grad_ref(a.id);
    for (int ci = 0; ci < av2.c; ++ci) {
      float* gsrc = ga.data() + static_cast<size_t>(ci) * av2.h * av2.w;
      const float* gdst = g.data() + static_cast<size_t>(ci) * h2 * w2;
      for (int oy = 0; oy < h2; ++oy) {
        const float wy = spy->frac[oy];
        float* g0 = gsrc + static_cast<size_t>(spy->i0[oy]) * av2.w;
        float* g1 = gsrc + static_cast<size_t>(spy->i1[oy]) * av2.w;
        const float* grow = gdst + static_cast<size_t>(oy) * w2;
        for (int ox = 0; ox < w2; ++ox) {
          const float wx = spx->frac[ox];
          const float gv = grow[ox];
          g0[spx->i0[ox]] += (1.f - wy) * (1.f - wx) * gv;
          g0[spx->i1[ox]] += (1.f - wy) * wx * gv;
          g1[spx->i0[ox]] += wy * (1.f - wx) * gv;
          g1[spx->i1[ox]] += wy * wx * gv;
        }
      }
    }
  });
}

Var warp(Tape& t, Var src, Var flow) {
  const Tensor& sv = t.val(src);
  const Tensor& fv = t.val(flow);
  if (fv.c != 2 || fv.h != sv.h || fv.w != sv.w)
    throw std::invalid_argument("warp: flow must be (2,H,W) matching src");
  const int H = sv.h, W = sv.w;
  Tensor out(sv.c, H, W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const float xs = x + fv.at(0, y, x);
      const float ys = y + fv.at(1, y, x);
      float xc = std::min(std::max(xs, 0.f), static_cast<float>(W - 1));
      float yc = std::min(std::max(ys, 0.f), static_cast<float>(H - 1));
      // NaN survives the clamp; casting it to int would index out of range.
      if (!std::isfinite(xc)) xc = 0.f;
      if (!std::isfinite(yc)) yc = 0.f;
      const int x0 = static_cast<int>(xc);
      const int y0 = static_cast<int>(yc);
      const int x1 = std::min(x0 + 1, W - 1);
      const int y1 = std::min(y0 + 1, H - 1);
      const float wx = xc - x0, wy = yc - y0;
      for (int ci = 0; ci < sv.c; ++ci) {
        const float s00 = sv.at(ci, y0, x0), s01 = sv.at(ci, y0, x1);
        const float s10 = sv.at(ci, y1, x0), s11 = sv.at(ci, y1, x1);
        // Nested lerp: exact when the four samples agree (constant fields)
        // and bitwise identity at integer sampling points.
        const float l0 = s00 + wx * (s01 - s00);
        const float l1 = s10 + wx * (s11 - s10);
        out.at(ci, y, x) = l0 + wy * (l1 - l0);
      }
    }
  }
  return t.make(std::move(out), {src.id, flow.id}, [src, flow](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    const Tensor& sv2 = tt.val(src.id);
    const Tensor& fv2 = tt.val(flow.id);
    Tensor& gs = tt.grad_ref(src.id);
    Tensor& gf = tt.grad_ref(flow.id);
    const int H = sv2.h, W = sv2.w;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const float xs = x + fv2.at(0, y, x);
        const float ys = y + fv2.at(1, y, x);
        // Inside the clamp the sampling point moves with the flow; outside
        // it is pinned to the border, so the flow gradient vanishes.
        const float dxc = (xs >= 0.f && xs <= W - 1) ? 1.f : 0.f;
        const float dyc = (ys >= 0.f && ys <= H - 1) ? 1.f : 0.f;
        float xc = std::min(std::max(xs, 0.f), static_cast<float>(W - 1));
        float yc = std::min(std::max(ys, 0.f), static_cast<float>(H - 1));
        if (!std::isfinite(xc)) xc = 0.f;
        if (!std::isfinite(yc)) yc = 0.f;
        const int x0 = static_cast<int>(xc);
        const int y0 = static_cast<int>(yc);
        const int x1 = std::min(x0 + 1, W - 1);
        const int y1 = std::min(y0 + 1, H - 1);
        const float wx = xc - x0, wy = yc - y0;
        double gfx = 0.0, gfy = 0.0;
        for (int ci = 0; ci < sv2.c; ++ci) {
          const float gv = g.at(ci, y, x);
          if (gv == 0.f) continue;
          const float s00 = sv2.at(ci, y0, x0), s01 = sv2.at(ci, y0, x1);
          const float s10 = sv2.at(ci, y1, x0), s11 = sv2.at(ci, y1, x1);
          gs.at(ci, y0, x0) += gv * (1.f - wy) * (1.f - wx);
          gs.at(ci, y0, x1) += gv * (1.f - wy) * wx;
          gs.at(ci, y1, x0) += gv * wy * (1.f - wx);
          gs.at(ci, y1, x1) += gv * wy * wx;
          gfx += static_cast<double>(gv) * ((1.f - wy) * (s01 - s00) + wy * (s11 - s10));
          gfy += static_cast<double>(gv) * ((1.f - wx) * (s10 - s00) + wx * (s11 - s01));
        }
        gf.at(0, y, x) += static_cast<float>(gfx) * dxc;
        gf.at(1, y, x) += static_cast<float>(gfy) * dyc;
      }
    }
  });
}

Var global_mean_sp(Tape& t, Var a) {
  const Tensor& av = t.val(a);
  const size_t plane = static_cast<size_t>(av.h) * av.w;
  Tensor out(av.c, 1, 1);
  for (int ci = 0; ci < av.c; ++ci) {
    double s = 0.0;
    const float* p = av.data() + ci * plane;
    for (size_t i = 0; i < plane; ++i) s += p[i];
    out.v[ci] = static_cast<float>(s / plane);
  }
  return t.make(std::move(out), {a.id}, [a, plane](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    Tensor& ga = tt.grad_ref(a.id);
    for (int ci = 0; ci < static_cast<int>(g.size()); ++ci) {
      const float gv = g.v[ci] / plane;
      float* p = ga.data() + ci * plane;
      for (size_t i = 0; i < plane; ++i) p[i] += gv;
    }
  });
}

Var mean_all(Tape& t, Var a) {
  const Tensor& av = t.val(a);
  double s = 0.0;
  for (float x : av.v) s += x;
  const size_t n = av.size();
  return t.make(Tensor::scalar(static_cast<float>(s / n)), {a.id},
                [a, n](Tape& tt, int self) {
                  const float g = tt.grad_ref(self).v[0] / n;
                  Tensor& ga = tt.grad_ref(a.id);
                  for (float& x : ga.v) x += g;
                });
}

Var sum_all(Tape& t, Var a) {
  const Tensor& av = t.val(a);
  double s = 0.0;
  for (float x : av.v) s += x;
  return t.make(Tensor::scalar(static_cast<float>(s)), {a.id}, [a](Tape& tt, int self) {
    const float g = tt.grad_ref(self).v[0];
    Tensor& ga = tt.grad_ref(a.id);
    for (float& x : ga.v) x += g;
  });
}

Var mse(Tape& t, Var a, Var b, double* out) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  check_same(av, bv, "mse");
  double s = 0.0;
  for (size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av.v[i]) - bv.v[i];
    s += d * d;
  }
  const size_t n = av.size();
  const double m = s / n;
  if (out) *out = m;
  return t.make(Tensor::scalar(static_cast<float>(m)), {a.id, b.id},
                [a, b, n](Tape& tt, int self) {
                  const float g = tt.grad_ref(self).v[0] * 2.f / n;
                  const Tensor& av2 = tt.val(a.id);
                  const Tensor& bv2 = tt.val(b.id);
                  Tensor& ga = tt.grad_ref(a.id);
                  Tensor& gb = tt.grad_ref(b.id);
                  for (size_t i = 0; i < av2.size(); ++i) {
                    const float d = g * (av2.v[i] - bv2.v[i]);
                    ga.v[i] += d;
                    gb.v[i] -= d;
                  }
                });
}

Var modulate(Tape& t, Var x, Var alpha, Var beta) {
  const Tensor& xv = t.val(x);
  const Tensor& av = t.val(alpha);
  const Tensor& bv = t.val(beta);
  if (av.c != xv.c || av.h != 1 || av.w != 1 || !av.same_shape(bv))
    throw std::invalid_argument("modulate: alpha/beta must be (C,1,1)");
  const size_t plane = static_cast<size_t>(xv.h) * xv.w;
  Tensor out(xv.c, xv.h, xv.w);
  for (int ci = 0; ci < xv.c; ++ci) {
    const float al = av.v[ci], be = bv.v[ci];
    const float* src = xv.data() + ci * plane;
    float* dst = out.data() + ci * plane;
    for (size_t i = 0; i < plane; ++i) dst[i] = al * src[i] + be;
  }
  return t.make(std::move(out), {x.id, alpha.id, beta.id},
                [x, alpha, beta, plane](Tape& tt, int self) {
                  const Tensor& g = tt.grad_ref(self);
                  const Tensor& xv2 = tt.val(x.id);
                  const Tensor& av2 = tt.val(alpha.id);
                  Tensor& gx = tt.grad_ref(x.id);
                  Tensor& ga = tt.grad_ref(alpha.id);
                  Tensor& gb = tt.grad_ref(beta.id);
                  for (int ci = 0; ci < xv2.c; ++ci) {
                    const float al = av2.v[ci];
                    const float* gp = g.data() + ci * plane;
                    const float* xp = xv2.data() + ci * plane;
                    float* gxp = gx.data() + ci * plane;
                    double sa = 0.0, sb = 0.0;
                    for (size_t i = 0; i < plane; ++i) {
                      gxp[i] += al * gp[i];
                      sa += static_cast<double>(gp[i]) * xp[i];
                      sb += gp[i];
                    }
                    ga.v[ci] += static_cast<float>(sa);
                    gb.v[ci] += static_cast<float>(sb);
                  }
                });
}

Var round_ste(Tape& t, Var a) {
  Tensor out = t.val(a);
  for (float& x : out.v) x = std::round(x);
  return t.make(std::move(out), {a.id}, [a](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    Tensor& ga = tt.grad_ref(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i];
  });
}

Var add_noise(Tape& t, Var a, Rng& rng) {
  Tensor out = t.val(a);
  for (float& x : out.v) x += rng.uniform(-0.5f, 0.5f);
  return t.make(std::move(out), {a.id}, [a](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    Tensor& ga = tt.grad_ref(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i];
  });
}

Var clamp01_ste(Tape& t, Var a) {
  Tensor out = t.val(a);
  for (float& x : out.v) x = std::min(std::max(x, 0.f), 1.f);
  return t.make(std::move(out), {a.id}, [a](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    Tensor& ga = tt.grad_ref(a.id);
    for (size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i];
  });
}

Var detach(Tape& t, Var a) { return t.leaf(t.val(a)); }

Var pad_spatial(Tape& t, Var a, int h2, int w2) {
  const Tensor& av = t.val(a);
  if (h2 < av.h || w2 < av.w) throw std::invalid_argument("pad_spatial: shrinking");
  Tensor out(av.c, h2, w2);
  for (int ci = 0; ci < av.c; ++ci)
    for (int y = 0; y < av.h; ++y)
      std::memcpy(&out.at(ci, y, 0), &av.at(ci, y, 0), sizeof(float) * av.w);
  const int h1 = av.h, w1 = av.w;
  return t.make(std::move(out), {a.id}, [a, h1, w1](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    Tensor& ga = tt.grad_ref(a.id);
    for (int ci = 0; ci < ga.c; ++ci)
      for (int y = 0; y < h1; ++y)
        for (int x = 0; x < w1; ++x) ga.at(ci, y, x) += g.at(ci, y, x);
  });
}

Var crop_spatial(Tape& t, Var a, int h2, int w2) {
  const Tensor& av = t.val(a);
  if (h2 > av.h || w2 > av.w) throw std::invalid_argument("crop_spatial: growing");
  Tensor out(av.c, h2, w2);
  for (int ci = 0; ci < av.c; ++ci)
    for (int y = 0; y < h2; ++y)
      std::memcpy(&out.at(ci, y, 0), &av.at(ci, y, 0), sizeof(float) * w2);
  return t.make(std::move(out), {a.id}, [a, h2, w2](Tape& tt, int self) {
    const Tensor& g = tt.grad_ref(self);
    Tensor& ga = tt.grad_ref(a.id);
    for (int ci = 0; ci < ga.c; ++ci)
      for (int y = 0; y < h2; ++y)
        for (int x = 0; x < w2; ++x) ga.at(ci, y, x) += g.at(ci, y, x);
  });
}

double gaussian_bin_bits(double x, double mu, double sigma) {
  const double se = std::max(sigma, kSigmaMin);
  const double a = (x - mu + 0.5) / se;
  const double b = (x - mu - 0.5) / se;
  // Phi(a) - Phi(b) written with erfc for tail precision.
  const double p = 0.5 * (std::erfc(b * kInvSqrt2) - std::erfc(a * kInvSqrt2));
  return -std::log2(std::max(p, kLikelihoodMin));
}

Var rate_gaussian(Tape& t, Var x, Var mu, Var sigma, const Tensor* mask, double* bits_out) {
  const Tensor& xv = t.val(x);
  const Tensor& mv = t.val(mu);
  const Tensor& sv = t.val(sigma);
  check_same(xv, mv, "rate_gaussian");
  check_same(xv, sv, "rate_gaussian");
  if (mask) check_same(xv, *mask, "rate_gaussian mask");
  double total = 0.0;
  for (size_t i = 0; i < xv.size(); ++i) {
    if (mask && mask->v[i] == 0.f) continue;
    total += gaussian_bin_bits(xv.v[i], mv.v[i], sv.v[i]);
  }
  if (bits_out) *bits_out = total;
  std::shared_ptr<Tensor> mk = mask ? std::make_shared<Tensor>(*mask) : nullptr;
  return t.make(Tensor::scalar(static_cast<float>(total)), {x.id, mu.id, sigma.id},
                [x, mu, sigma, mk](Tape& tt, int self) {
                  const float gout = tt.grad_ref(self).v[0];
                  const Tensor& xv2 = tt.val(x.id);
                  const Tensor& mv2 = tt.val(mu.id);
                  const Tensor& sv2 = tt.val(sigma.id);
                  Tensor& gx = tt.grad_ref(x.id);
                  Tensor& gm = tt.grad_ref(mu.id);
                  Tensor& gs = tt.grad_ref(sigma.id);
                  for (size_t i = 0; i < xv2.size(); ++i) {
                    if (mk && mk->v[i] == 0.f) continue;
                    const double se = std::max(static_cast<double>(sv2.v[i]), kSigmaMin);
                    const double a = (xv2.v[i] - mv2.v[i] + 0.5) / se;
                    const double b = (xv2.v[i] - mv2.v[i] - 0.5) / se;
                    const double p =
                        0.5 * (std::erfc(b * kInvSqrt2) - std::erfc(a * kInvSqrt2));
                    if (p <= kLikelihoodMin) continue;  // clamped: zero gradient
                    const double common = -gout / (p * kLn2);
                    const double pa = normal_pdf(a), pb = normal_pdf(b);
                    const double dpdx = (pa - pb) / se;
                    gx.v[i] += static_cast<float>(common * dpdx);
                    gm.v[i] -= static_cast<float>(common * dpdx);
                    if (sv2.v[i] > kSigmaMin) {
                      const double dpds = -(pa * a - pb * b) / se;
                      gs.v[i] += static_cast<float>(common * dpds);
                    }
                  }
                });
}

void reset_mac_count() { g_mac_count = 0; }
long long mac_count() { return g_mac_count; }

Var bits_from_prob(Tape& t, Var p, double* bits_out) {
  const Tensor& pv = t.val(p);
  double total = 0.0;
  for (float q : pv.v) total += -std::log2(std::max(static_cast<double>(q), kLikelihoodMin));
  if (bits_out) *bits_out = total;
  return t.make(Tensor::scalar(static_cast<float>(total)), {p.id}, [p](Tape& tt, int self) {
    const float gout = tt.grad_ref(self).v[0];
    const Tensor& pv2 = tt.val(p.id);
    Tensor& gp = tt.grad_ref(p.id);
    for (size_t i = 0; i < pv2.size(); ++i) {
      if (pv2.v[i] <= kLikelihoodMin) continue;  // floored: zero gradient
      gp.v[i] += static_cast<float>(-gout / (pv2.v[i] * kLn2));
    }
  });
}

}  // namespace ops
}  // namespace cvpp
