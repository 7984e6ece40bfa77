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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <vector>

#include "cvpp/metrics.h"
#include "cvpp/model.h"
#include "cvpp/nn.h"
#include "doctest.h"
#include "test_util.h"

using namespace cvpp;

namespace {

// Direct Hermite evaluation from the slopes; the reference for both the
// monotonicity sweep and the Simpson integration oracle.
double hermite_eval(const std::vector<double>& x, const std::vector<double>& y,
                    const std::vector<double>& m, double q) {
  size_t i = 0;
  while (i + 2 < x.size() && q >= x[i + 1]) ++i;
  const double h = x[i + 1] - x[i];
  const double s = (q - x[i]) / h;
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y[i] + (s3 - 2 * s2 + s) * h * m[i] +
         (-2 * s3 + 3 * s2) * y[i + 1] + (s3 - s2) * h * m[i + 1];
}

// Composite Simpson per (partial) segment. Simpson is exact for cubics, so
// this reproduces the closed-form integral up to rounding.
double simpson_integral(const std::vector<double>& x, const std::vector<double>& y, double a,
                        double b) {
  const std::vector<double> m = pchip_slopes(x, y);
  double total = 0.0;
  for (size_t i = 0; i + 1 < x.size(); ++i) {
    const double lo = std::max(a, x[i]);
    const double hi = std::min(b, x[i + 1]);
    if (hi <= lo) continue;
    const double mid = 0.5 * (lo + hi);
    total += (hi - lo) / 6.0 *
             (hermite_eval(x, y, m, lo) + 4.0 * hermite_eval(x, y, m, mid) +
              hermite_eval(x, y, m, hi));
  }
  return total;
}

RdCurve shift_bpp(const RdCurve& c, double factor) {
  RdCurve out = c;
  for (RdPoint& p : out) p.bpp *= factor;
  return out;
}

}  // namespace

TEST_CASE("psnr oracles") {
  // 1000 samples, 25 of them off by 51 at a peak of 255:
  // MSE = 25 * 51^2 / 1000 = 65.025, and 255^2 / 65.025 = 1000 exactly,
  // so PSNR = 10 * log10(1000) = 30 dB.
  Tensor orig(1, 25, 40), recon(1, 25, 40);
  for (float& v : orig.v) v = 100.f;
  recon = orig;
  for (int i = 0; i < 25; ++i) recon.v[i] = 151.f;
  CHECK(mse_rgb(orig, recon) == doctest::Approx(65.025).epsilon(1e-12));
  CHECK(std::fabs(psnr_rgb(orig, recon, 255.0) - 30.0) < 1e-9);

  // Identical frames: infinite PSNR.
  CHECK(std::isinf(psnr_rgb(orig, orig, 255.0)));
  CHECK(psnr_rgb(orig, orig, 255.0) > 0.0);

  // Worst case MSE = peak^2 gives exactly 0 dB.
  Tensor black(2, 4, 4), white(2, 4, 4);
  for (float& v : white.v) v = 255.f;
  CHECK(psnr_rgb(black, white, 255.0) == doctest::Approx(0.0).scale(1.0));

  // Monotone: smaller error, larger PSNR.
  Tensor near = orig;
  for (int i = 0; i < 25; ++i) near.v[i] = 110.f;
  CHECK(psnr_rgb(orig, near, 255.0) > psnr_rgb(orig, recon, 255.0));

  Tensor other(1, 10, 10);
  CHECK_THROWS_AS(psnr_rgb(orig, other), std::invalid_argument);
}

TEST_CASE("bpp oracles") {
  CHECK(bpp(1036800.0, 1080, 1920) == 0.5);
  CHECK(bpp(0.0, 64, 64) == 0.0);
  CHECK_THROWS_AS(bpp(1.0, 0, 64), std::invalid_argument);
  CHECK_THROWS_AS(bpp(1.0, 64, -3), std::invalid_argument);
}

TEST_CASE("pchip reproduces linear data exactly") {
  const std::vector<double> x{0, 1, 2, 4, 7};
  std::vector<double> y;
  for (double xi : x) y.push_back(2.0 * xi + 1.0);
  const std::vector<double> m = pchip_slopes(x, y);
  for (double mi : m) CHECK(mi == doctest::Approx(2.0).epsilon(1e-14));
  // Integral of 2x+1 over [0.5, 6] is (x^2 + x) evaluated there: 41.25.
  CHECK(pchip_integral(x, y, 0.5, 6.0) == doctest::Approx(41.25).epsilon(1e-12));
  CHECK(pchip_integral(x, y, 0.0, 7.0) == doctest::Approx(56.0).epsilon(1e-12));
}

TEST_CASE("pchip interpolant is monotone on monotone data") {
  // The abrupt middle jump makes an unlimited cubic spline overshoot; the
  // limited slopes must not.
  const std::vector<double> x{0, 1, 2, 3, 4};
  const std::vector<double> y{0.0, 0.1, 0.5, 2.9, 3.0};
  const std::vector<double> m = pchip_slopes(x, y);
  for (double mi : m) CHECK(mi >= 0.0);
  double prev = -1e300;
  for (int k = 0; k <= 4000; ++k) {
    const double q = 4.0 * k / 4000.0;
    const double v = hermite_eval(x, y, m, q);
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
  // Interpolation conditions hold at the knots.
  for (size_t i = 0; i < x.size(); ++i)
    CHECK(hermite_eval(x, y, m, x[i]) == doctest::Approx(y[i]).epsilon(1e-12));
}

TEST_CASE("pchip closed-form integral matches Simpson on the same cubic") {
  const std::vector<double> x{0.0, 0.7, 1.5, 3.0, 4.2, 5.0};
  const std::vector<double> y{-1.0, -0.2, 1.4, 1.5, 3.9, 4.0};
  const double full = pchip_integral(x, y, 0.0, 5.0);
  CHECK(full == doctest::Approx(simpson_integral(x, y, 0.0, 5.0)).epsilon(1e-12));
  const double part = pchip_integral(x, y, 0.3, 3.7);
  CHECK(part == doctest::Approx(simpson_integral(x, y, 0.3, 3.7)).epsilon(1e-12));
  // Additivity over a split point.
  CHECK(pchip_integral(x, y, 0.3, 2.0) + pchip_integral(x, y, 2.0, 3.7) ==
        doctest::Approx(part).epsilon(1e-12));
  CHECK_THROWS_AS(pchip_integral(x, y, -1.0, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(pchip_integral(x, y, 1.0, 9.0), std::invalid_argument);
}

TEST_CASE("bd-rate oracles") {
  const RdCurve anchor{{0.1, 30.0}, {0.2, 33.0}, {0.4, 36.0}, {0.8, 39.0}};

  CHECK(bd_rate(anchor, anchor) == 0.0);

  // Halving the rate at every quality shifts log10(bpp) by -log10(2)
  // uniformly, so the average saving is exactly 50%.
  CHECK(std::fabs(bd_rate(anchor, shift_bpp(anchor, 0.5)) - (-50.0)) < 0.1);
  CHECK(std::fabs(bd_rate(anchor, shift_bpp(anchor, 2.0)) - 100.0) < 0.2);

  // Needs four points per curve even though the curves are valid.
  const RdCurve three{{0.1, 30.0}, {0.2, 33.0}, {0.4, 36.0}};
  CHECK_THROWS_WITH(bd_rate(three, anchor), doctest::Contains("at least 4"));
  CHECK_THROWS_WITH(bd_rate(anchor, three), doctest::Contains("at least 4"));

  // Disjoint quality ranges cannot be compared.
  RdCurve high = anchor;
  for (RdPoint& p : high) p.psnr += 20.0;
  CHECK_THROWS_WITH(bd_rate(anchor, high), doctest::Contains("no psnr overlap"));

  // Swapping the roles inverts the relative saving: r_ba = -r_ab/(1+r_ab/100).
  const RdCurve test{{0.09, 30.5}, {0.19, 33.2}, {0.42, 36.8}, {0.85, 39.5}};
  const double ab = bd_rate(anchor, test);
  const double ba = bd_rate(test, anchor);
  CHECK(ba == doctest::Approx(-ab / (1.0 + ab / 100.0)).epsilon(1e-9));
}

TEST_CASE("rd curve validation") {
  CHECK_THROWS_AS(validate_rd_curve({{0.1, 30.0}}), std::invalid_argument);
  CHECK_THROWS_AS(validate_rd_curve({{0.1, 30.0}, {0.1, 33.0}}), std::invalid_argument);
  CHECK_THROWS_AS(validate_rd_curve({{0.2, 30.0}, {0.1, 33.0}}), std::invalid_argument);
  CHECK_THROWS_AS(validate_rd_curve({{0.1, 33.0}, {0.2, 30.0}}), std::invalid_argument);
  CHECK_THROWS_AS(validate_rd_curve({{0.0, 30.0}, {0.2, 33.0}}), std::invalid_argument);
  CHECK_THROWS_AS(validate_rd_curve({{0.1, 30.0}, {0.2, std::nan("")}}),
                  std::invalid_argument);
  CHECK_NOTHROW(validate_rd_curve({{0.1, 30.0}, {0.2, 33.0}}));
}

TEST_CASE("rd csv round trip") {
  const char* path = "test_metrics_rd_tmp.csv";
  const RdCurve curve{{0.1234567890123, 30.111}, {0.25, 33.0}, {0.5, 36.25}, {1.0 / 3.0, 0.0}};
  // The last point breaks monotonicity on purpose: CSV io must not validate.
  save_rd_csv(path, curve, {256, 512, 1024, 2048});
  std::vector<int> lambdas;
  RdCurve back = load_rd_csv(path, &lambdas);
  REQUIRE(back.size() == curve.size());
  for (size_t i = 0; i < curve.size(); ++i) {
    CHECK(back[i].bpp == curve[i].bpp);
    CHECK(back[i].psnr == curve[i].psnr);
  }
  CHECK(lambdas == std::vector<int>{256, 512, 1024, 2048});
  std::remove(path);

  // Headerless files parse too.
  {
    std::ofstream out(path);
    out << "256,0.5,30\n512,0.75,33\n";
  }
  RdCurve plain = load_rd_csv(path);
  REQUIRE(plain.size() == 2);
  CHECK(plain[0].bpp == 0.5);
  CHECK(plain[1].psnr == 33.0);
  std::remove(path);

  {
    std::ofstream out(path);
    out << "lambda,bpp,psnr\n256,oops,30\n";
  }
  CHECK_THROWS_WITH(load_rd_csv(path), doctest::Contains("malformed"));
  std::remove(path);

  CHECK_THROWS_AS(load_rd_csv("does_not_exist_anywhere.csv"), std::runtime_error);
  CHECK_THROWS_AS(save_rd_csv(path, curve, {1, 2}), std::invalid_argument);
  std::remove(path);
}

TEST_CASE("mac counting matches the conv arithmetic") {
  ParamStore ps;
  Rng rng(1);
  Conv2d conv(ps, "probe", 8, 16, 3, 1, false, rng);
  // 16*8*3*3 weights + 16 biases.
  CHECK(ps.count_values() == 1168);

  Tape t(false);
  Var x = t.leaf(cvpp_test::random_tensor(8, 64, 64, rng));
  ops::reset_mac_count();
  conv(t, x);
  CHECK(ops::mac_count() == static_cast<long long>(16) * 8 * 3 * 3 * 64 * 64);
  CHECK(ops::mac_count() / (64 * 64) == 1152);
}

TEST_CASE("complexity report") {
  ModelConfig cfg = ModelConfig::small();
  VideoCodecModel m(cfg, 0xC0);

  CHECK(buffer_frfm(cfg) == 15);  // 3*3 frames + 2*2 flows + 2 accumulated

  ComplexityReport r = complexity_report(m, 50, 30);
  CHECK(r.params == static_cast<int64_t>(m.param_count()));
  CHECK(r.params_m == doctest::Approx(r.params / 1e6));
  CHECK(r.buffer_frfm == 15);
  CHECK(r.height == 64);  // padded to the coding stride
  CHECK(r.width == 64);
  CHECK(r.macs_per_frame > 0);
  CHECK(r.kmacs_per_pixel > 0.0);

  // MACs are dominated by full-resolution convolutions, so the per-pixel
  // density is nearly resolution independent.
  ComplexityReport big = complexity_report(m, 128, 128);
  CHECK(std::fabs(big.kmacs_per_pixel - r.kmacs_per_pixel) / r.kmacs_per_pixel < 0.05);

  nlohmann::json j = complexity_to_json(r);
  CHECK(j["params"] == r.params);
  CHECK(j["buffer_frfm"] == 15);
  CHECK(j["kmacs_per_pixel"].get<double>() == doctest::Approx(r.kmacs_per_pixel));

  CHECK_THROWS_AS(complexity_report(m, 0, 64), std::invalid_argument);
}
