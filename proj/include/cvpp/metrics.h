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

#ifndef CVPP_METRICS_H_
#define CVPP_METRICS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "cvpp/model.h"
#include "cvpp/tensor.h"

namespace cvpp {

// MSE over all channels jointly, accumulated in double.
double mse_rgb(const Tensor& a, const Tensor& b);

// 10*log10(max_val^2 / MSE); +inf when the frames are identical.
double psnr_rgb(const Tensor& orig, const Tensor& recon, double max_val = 1.0);

// bits / (h * w); dataset aggregation averages total bits over total pixels.
double bpp(double bits, int h, int w);

// -------------------------------------------------------------------------
// Rate-distortion curves and the Bjontegaard delta rate.

struct RdPoint {
  double bpp = 0.0;
  double psnr = 0.0;
};
using RdCurve = std::vector<RdPoint>;

// Throws unless the curve has >= 2 points with strictly increasing bpp,
// strictly increasing psnr, and all values finite and positive rate.
void validate_rd_curve(const RdCurve& c);

// Monotone piecewise-cubic-Hermite slopes (Fritsch-Carlson limiter) for
// strictly increasing x. Exposed for direct testing.
std::vector<double> pchip_slopes(const std::vector<double>& x, const std::vector<double>& y);

// Exact integral of the monotone cubic interpolant over [a, b], which must
// lie within [x.front(), x.back()].
double pchip_integral(const std::vector<double>& x, const std::vector<double>& y, double a,
                      double b);

// Average bitrate difference in percent between two RD curves at equal
// quality: log10(bpp) is interpolated as a function of PSNR and integrated
// over the common PSNR range. Negative = test saves rate over the anchor.
// Requires >= 4 points per curve and overlapping PSNR ranges.
double bd_rate(const RdCurve& anchor, const RdCurve& test);

// CSV with schema "lambda,bpp,psnr" (header optional on load).
RdCurve load_rd_csv(const std::string& path, std::vector<int>* lambdas = nullptr);
void save_rd_csv(const std::string& path, const RdCurve& c, const std::vector<int>& lambdas);

// -------------------------------------------------------------------------
// Complexity accounting.

struct ComplexityReport {
  int64_t params = 0;            // exact parameter count
  double params_m = 0.0;         // the same in millions
  int64_t macs_per_frame = 0;    // measured at the declared resolution
  double kmacs_per_pixel = 0.0;  // macs_per_frame / (h*w) / 1000
  int buffer_frfm = 0;           // full-resolution 1-channel map equivalents
  int height = 0, width = 0;     // declared resolution (pre-padding)
};

// Reference-buffer capacity in full-resolution single-channel maps:
// 3 frames + 2 flows + the accumulated-flow state.
int buffer_frfm(const ModelConfig& cfg);

// Runs one full conditional frame (the steady-state t >= 3 path) at the
// declared resolution with the MAC counter armed.
ComplexityReport complexity_report(const VideoCodecModel& model, int h, int w);

nlohmann::json complexity_to_json(const ComplexityReport& r);

}  // namespace cvpp

#endif  // CVPP_METRICS_H_
