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

#ifndef CVPP_NN_H_
#define CVPP_NN_H_

#include <cstdint>
#include <string>

#include "cvpp/autodiff.h"
#include "cvpp/ops.h"

namespace cvpp {

// Convolution with odd kernel, zero padding k/2 (spatial size divides by the
// stride). zero_init makes the layer an exact no-op producer at start, which
// the coupling transforms rely on.
struct Conv2d {
  Parameter* w = nullptr;
  Parameter* b = nullptr;
  int cin = 0, cout = 0, k = 0, stride = 1;

  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, int cin_, int cout_, int k_, int stride_,
         bool zero_init, Rng& rng);

  Var operator()(Tape& t, Var x) const {
    return ops::conv2d(t, x, t.param(*w), t.param(*b), k, stride, k / 2);
  }
  int out_size(int in) const { return (in + 2 * (k / 2) - k) / stride + 1; }
  // Multiply-accumulates for one application at the given input size.
  int64_t macs(int in_h, int in_w) const {
    return static_cast<int64_t>(out_size(in_h)) * out_size(in_w) * cout * cin * k * k;
  }
  int64_t params() const { return static_cast<int64_t>(cout) * cin * k * k + cout; }
};

// Bilinear upsample by an integer factor followed by a stride-1 convolution.
struct UpConv {
  Conv2d conv;
  int factor = 2;

  UpConv() = default;
  UpConv(ParamStore& ps, const std::string& name, int cin, int cout, int k, int factor_,
         bool zero_init, Rng& rng)
      : conv(ps, name, cin, cout, k, 1, zero_init, rng), factor(factor_) {}

  Var operator()(Tape& t, Var x) const {
    const Tensor& xv = t.val(x);
    return conv(t, ops::resize_bilinear(t, x, xv.h * factor, xv.w * factor));
  }
  int64_t macs(int in_h, int in_w) const { return conv.macs(in_h * factor, in_w * factor); }
  int64_t params() const { return conv.params(); }
};

struct Linear {
  Parameter* w = nullptr;
  Parameter* b = nullptr;
  int in = 0, out = 0;

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in_, int out_, bool zero_init,
         float bias_init, Rng& rng);

  Var operator()(Tape& t, Var x) const {
    return ops::linear(t, x, t.param(*w), t.param(*b));
  }
  int64_t params() const { return static_cast<int64_t>(out) * in + out; }
};

// Adam with optional global-norm gradient clipping over trainable params.
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : b1_(beta1), b2_(beta2), eps_(eps) {}
  // clip_norm <= 0 disables clipping. Frozen parameters are not touched.
  void step(ParamStore& ps, double lr, double clip_norm);
  int64_t steps_taken() const { return t_; }

 private:
  double b1_, b2_, eps_;
  int64_t t_ = 0;
};

// Cosine decay from lr0 to lr1 over `total` steps (step in [0, total)).
double cosine_lr(double lr0, double lr1, int64_t step, int64_t total);

}  // namespace cvpp

#endif  // CVPP_NN_H_
