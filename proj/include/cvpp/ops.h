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

#ifndef CVPP_OPS_H_
#define CVPP_OPS_H_

#include <vector>

#include "cvpp/autodiff.h"
#include "cvpp/rng.h"

namespace cvpp {
namespace ops {

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, float s);
Var add_scalar(Tape& t, Var a, float s);
// Elementwise product with a non-differentiated constant (masks etc).
Var mul_const(Tape& t, Var a, Tensor k);

Var concat_c(Tape& t, const std::vector<Var>& xs);
Var slice_c(Tape& t, Var a, int c0, int n);

// x: (cin,H,W); w: (cout, cin*k*k, 1); b: (cout,1,1). Odd k, zero padding.
Var conv2d(Tape& t, Var x, Var w, Var b, int k, int stride, int pad);
// x: (n,1,1); w: (m,n,1); b: (m,1,1).
Var linear(Tape& t, Var x, Var w, Var b);

Var leaky_relu(Tape& t, Var a, float slope = 0.2f);
Var softplus(Tape& t, Var a);
Var tanh_(Tape& t, Var a);
Var sigmoid_(Tape& t, Var a);

// Half-pixel-centered bilinear resize with clamp-to-edge. Identity when the
// size is unchanged; exact 2x2 averaging at scale 1/2.
Var resize_bilinear(Tape& t, Var a, int h2, int w2);

// Backward warp: out(c,y,x) samples src at (x + flow[0], y + flow[1]) with
// bilinear interpolation and clamp-to-edge. flow is (2,H,W) in pixels.
Var warp(Tape& t, Var src, Var flow);

Var global_mean_sp(Tape& t, Var a);  // (C,H,W) -> (C,1,1)
Var mean_all(Tape& t, Var a);        // -> scalar
Var sum_all(Tape& t, Var a);         // -> scalar
// Mean squared error; optionally reports the double-precision value.
Var mse(Tape& t, Var a, Var b, double* out = nullptr);

// Per-channel affine: out = alpha[c]*x + beta[c]; alpha/beta are (C,1,1).
Var modulate(Tape& t, Var x, Var alpha, Var beta);

// Straight-through rounding: forward = round(x), backward = identity.
Var round_ste(Tape& t, Var a);
// Adds U(-0.5, 0.5) per element; backward = identity.
Var add_noise(Tape& t, Var a, Rng& rng);
// Forward clamp to [0,1]; backward passes through so saturated pixels keep
// gradient signal (subgradient choice, keeps train/eval forwards identical).
Var clamp01_ste(Tape& t, Var a);

Var detach(Tape& t, Var a);

// Zero padding at bottom/right up to (h2,w2); top-left crop down to (h2,w2).
Var pad_spatial(Tape& t, Var a, int h2, int w2);
Var crop_spatial(Tape& t, Var a, int h2, int w2);

// Total coding cost in bits of x under N(mu, sigma^2) integrated over
// quantization bins [x-0.5, x+0.5]. sigma is floored at 0.01 and the bin
// probability at 2^-16. `mask` (same shape, 0/1) selects counted elements.
// The double-precision total is written to *bits_out when given.
Var rate_gaussian(Tape& t, Var x, Var mu, Var sigma, const Tensor* mask,
                  double* bits_out = nullptr);

// Scalar oracle used by tests and table builders.
double gaussian_bin_bits(double x, double mu, double sigma);

// Total -log2(max(p, 2^-16)) over all elements of a per-element likelihood
// map; gradient is zero for floored elements. Double total via *bits_out.
Var bits_from_prob(Tape& t, Var p, double* bits_out = nullptr);

// Multiply-accumulate accounting: conv2d and linear bump a process-wide
// counter on every forward call. Used by the complexity report.
void reset_mac_count();
long long mac_count();

}  // namespace ops
}  // namespace cvpp

#endif  // CVPP_OPS_H_
