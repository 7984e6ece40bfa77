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

#include "cvpp/metrics.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "cvpp/ops.h"
#include "cvpp/pipeline.h"

namespace cvpp {

double mse_rgb(const Tensor& a, const Tensor& b) {
  if (a.c != b.c || a.h != b.h || a.w != b.w)
    throw std::invalid_argument("psnr: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    double d = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.v.size());
}

double psnr_rgb(const Tensor& orig, const Tensor& recon, double max_val) {
  double mse = mse_rgb(orig, recon);
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

double bpp(double bits, int h, int w) {
  if (h <= 0 || w <= 0) throw std::invalid_argument("bpp: zero area");
  return bits / (static_cast<double>(h) * w);
}

// ---------------------------------------------------------------------------

void validate_rd_curve(const RdCurve& c) {
  if (c.size() < 2) throw std::invalid_argument("rd curve: need at least 2 points");
  for (size_t i = 0; i < c.size(); ++i) {
    if (!(c[i].bpp > 0.0) || !std::isfinite(c[i].bpp) || !std::isfinite(c[i].psnr))
      throw std::invalid_argument("rd curve: non-finite or non-positive point");
    if (i > 0 && !(c[i].bpp > c[i - 1].bpp))
      throw std::invalid_argument("rd curve: bpp not strictly increasing");
    if (i > 0 && !(c[i].psnr > c[i - 1].psnr))
      throw std::invalid_argument("rd curve: psnr not strictly increasing");
  }
}

std::vector<double> pchip_slopes(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  if (n < 2 || y.size() != n) throw std::invalid_argument("pchip: need matched n >= 2");
  std::vector<double> h(n - 1), d(n - 1);
  for (size_t i = 0; i + 1 < n; ++i) {
    h[i] = x[i + 1] - x[i];
    if (!(h[i] > 0.0)) throw std::invalid_argument("pchip: x not strictly increasing");
    d[i] = (y[i + 1] - y[i]) / h[i];
  }
  std::vector<double> m(n);
  if (n == 2) {
    m[0] = m[1] = d[0];
    return m;
  }
  // Interior: Fritsch-Carlson weighted harmonic mean, zero across extrema.
  for (size_t i = 1; i + 1 < n; ++i) {
    if (d[i - 1] * d[i] <= 0.0) {
      m[i] = 0.0;
    } else {
      double w1 = 2.0 * h[i] + h[i - 1];
      double w2 = h[i] + 2.0 * h[i - 1];
      m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
    }
  }
  // One-sided three-point ends with the standard monotonicity clamps.
  auto endpoint = [](double h0, double h1, double d0, double d1) {
    double m0 = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (m0 * d0 <= 0.0) return 0.0;
    if (d0 * d1 < 0.0 && std::fabs(m0) > 3.0 * std::fabs(d0)) return 3.0 * d0;
    return m0;
  };
  m[0] = endpoint(h[0], h[1], d[0], d[1]);
  m[n - 1] = endpoint(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
  return m;
}

double pchip_integral(const std::vector<double>& x, const std::vector<double>& y, double a,
                      double b) {
  if (!(a <= b)) throw std::invalid_argument("pchip: inverted integration range");
  if (a < x.front() - 1e-12 || b > x.back() + 1e-12)
    throw std::invalid_argument("pchip: integration range outside the data");
  const std::vector<double> m = pchip_slopes(x, y);
  double total = 0.0;
  for (size_t i = 0; i + 1 < x.size(); ++i) {
    double lo = std::max(a, x[i]);
    double hi = std::min(b, x[i + 1]);
    if (hi <= lo) continue;
    double h = x[i + 1] - x[i];
    // Antiderivative of the cubic Hermite basis on the unit interval.
    auto F = [&](double s) {
      double s2 = s * s, s3 = s2 * s, s4 = s3 * s;
      return h * (y[i] * (s - s3 + 0.5 * s4) + h * m[i] * (0.25 * s4 - 2.0 / 3.0 * s3 + 0.5 * s2) +
                  y[i + 1] * (s3 - 0.5 * s4) + h * m[i + 1] * (0.25 * s4 - s3 / 3.0));
    };
    total += F((hi - x[i]) / h) - F((lo - x[i]) / h);
  }
  return total;
}

double bd_rate(const RdCurve& anchor, const RdCurve& test) {
  validate_rd_curve(anchor);
  validate_rd_curve(test);
  if (anchor.size() < 4 || test.size() < 4)
    throw std::invalid_argument("bd-rate: need at least 4 points per curve");
  auto split = [](const RdCurve& c, std::vector<double>& x, std::vector<double>& y) {
    for (const RdPoint& p : c) {
      x.push_back(p.psnr);
      y.push_back(std::log10(p.bpp));
    }
  };
  std::vector<double> xa, ya, xt, yt;
  split(anchor, xa, ya);
  split(test, xt, yt);
  double lo = std::max(xa.front(), xt.front());
  double hi = std::min(xa.back(), xt.back());
  if (!(hi > lo)) throw std::invalid_argument("bd-rate: no psnr overlap");
  double delta =
      (pchip_integral(xt, yt, lo, hi) - pchip_integral(xa, ya, lo, hi)) / (hi - lo);
  return 100.0 * (std::pow(10.0, delta) - 1.0);
}

RdCurve load_rd_csv(const std::string& path, std::vector<int>* lambdas) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("rd csv: cannot open " + path);
  RdCurve c;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string f0, f1, f2;
    if (!std::getline(ss, f0, ',') || !std::getline(ss, f1, ',') || !std::getline(ss, f2))
      throw std::runtime_error("rd csv: malformed line: " + line);
    if (first) {
      first = false;
      // Optional header row.
      try {
        std::stod(f1);
      } catch (const std::exception&) {
        continue;
      }
    }
    try {
      if (lambdas) lambdas->push_back(std::stoi(f0));
      c.push_back({std::stod(f1), std::stod(f2)});
    } catch (const std::exception&) {
      throw std::runtime_error("rd csv: malformed line: " + line);
    }
  }
  return c;
}

void save_rd_csv(const std::string& path, const RdCurve& c, const std::vector<int>& lambdas) {
  if (!lambdas.empty() && lambdas.size() != c.size())
    throw std::invalid_argument("rd csv: lambda count mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("rd csv: cannot write " + path);
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "lambda,bpp,psnr\n";
  for (size_t i = 0; i < c.size(); ++i) {
    out << (lambdas.empty() ? 0 : lambdas[i]) << "," << c[i].bpp << "," << c[i].psnr << "\n";
  }
}

// ---------------------------------------------------------------------------

int buffer_frfm(const ModelConfig& cfg) {
  // 3 reference frames, 2 decoded flows, 1 accumulated flow.
  return 3 * cfg.frame_ch + 2 * cfg.flow_ch + cfg.flow_ch;
}

ComplexityReport complexity_report(const VideoCodecModel& model, int h, int w) {
  if (h <= 0 || w <= 0) throw std::invalid_argument("complexity: zero area");
  int ph = (h + kCodecStride - 1) / kCodecStride * kCodecStride;
  int pw = (w + kCodecStride - 1) / kCodecStride * kCodecStride;

  ComplexityReport r;
  r.params = model.param_count();
  r.params_m = static_cast<double>(r.params) / 1e6;
  r.buffer_frfm = buffer_frfm(model.cfg);
  r.height = ph;
  r.width = pw;

  // Steady-state conditional frame (t = 3): flow estimation, extrapolated
  // motion coding, compensation, modulation, and inter coding all run.
  Tape tape(false);
  Rng rng(0x7a57e);
  auto tex = [&](int c) {
    Tensor t(c, ph, pw);
    for (float& v : t.v) v = static_cast<float>(rng.uniform(0.2, 0.8));
    return t;
  };
  Var x = tape.leaf(tex(model.cfg.frame_ch));
  FrameRefs refs;
  refs.frames = {tape.leaf(tex(model.cfg.frame_ch)), tape.leaf(tex(model.cfg.frame_ch))};
  refs.flows = {tape.leaf(tex(model.cfg.flow_ch))};
  refs.prop = tape.leaf(tex(model.cfg.flow_ch));
  CodeOptions opts;
  opts.mode = QuantMode::kRoundSte;
  opts.phase = Phase::kEval;
  opts.emit_bytes = false;

  ops::reset_mac_count();
  encode_frame(model, tape, x, 3, refs, opts);
  r.macs_per_frame = ops::mac_count();
  r.kmacs_per_pixel =
      static_cast<double>(r.macs_per_frame) / (static_cast<double>(ph) * pw) / 1000.0;
  return r;
}

nlohmann::json complexity_to_json(const ComplexityReport& r) {
  return {{"params", r.params},
          {"params_m", r.params_m},
          {"macs_per_frame", r.macs_per_frame},
          {"kmacs_per_pixel", r.kmacs_per_pixel},
          {"buffer_frfm", r.buffer_frfm},
          {"height", r.height},
          {"width", r.width}};
}

}  // namespace cvpp
