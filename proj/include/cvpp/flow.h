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

#ifndef CVPP_FLOW_H_
#define CVPP_FLOW_H_

#include <array>
#include <string>

#include "cvpp/nn.h"
#include "cvpp/tensor.h"

namespace cvpp {

// Flow fields are (2,H,W): channel 0 horizontal dx, channel 1 vertical dy,
// in pixels, backward-warp convention.

// Bilinear resize of a flow field with displacement rescaling: dx scales by
// w2/w, dy by h2/h. Identity (bitwise) when the size is unchanged.
Var rescale_flow(Tape& t, Var f, int h2, int w2);

// 3-level coarse-to-fine pyramid estimator. Frames are downsampled 2x per
// level; each level runs a 4-conv residual predictor whose output layer is
// zero-initialized, so a fresh model emits exactly zero flow.
struct FlowEstimator {
  std::array<std::array<Conv2d, 4>, 3> net;  // [level][conv], level 0 finest
  std::array<int, 3> hidden{};
  int frame_ch = 3;

  FlowEstimator() = default;
  FlowEstimator(ParamStore& ps, const std::string& prefix, int frame_ch,
                std::array<int, 3> hidden, Rng& rng);
  // cur and ref share shape; returns (2,H,W).
  Var operator()(Tape& t, Var cur, Var ref) const;
};

// U-shaped extrapolator over 3 reference frames and 2 decoded flows,
// predicting the flow from x_{t-1} viewed at frame t. Zero-initialized
// output layer.
struct FlowExtrapolator {
  Conv2d e0, e1, e2;
  UpConv up;
  Conv2d fuse, out;

  FlowExtrapolator() = default;
  FlowExtrapolator(ParamStore& ps, const std::string& prefix, int frame_ch, int ch, Rng& rng);
  // refs: {x̂[t-1], x̂[t-2], x̂[t-3]}; flows: {f̂[t-1], f̂[t-2]}.
  Var operator()(Tape& t, const std::array<Var, 3>& refs,
                 const std::array<Var, 2>& flows) const;
};

// Decode-side accumulated motion relative to the GOP's first frame; feeds
// feature-map modulation. Cleared at every I-frame.
struct PropagatedFlow {
  bool has = false;
  Var flow{};

  void reset() { has = false; }
};

// frame_t == 2 seeds the state with f_hat; frame_t > 2 warps the accumulated
// field by f_hat (per-channel scalar warps) and adds f_hat.
void update_propagated_flow(Tape& t, PropagatedFlow& state, Var f_hat, int frame_t);

// Raw float flow file: float32 magic 202021.25 ("PIEH"), int32 width/height,
// then row-major interleaved (dx, dy) float32 pairs. Little-endian.
void save_flo(const std::string& path, const Tensor& flow);
Tensor load_flo(const std::string& path);

}  // namespace cvpp

#endif  // CVPP_FLOW_H_
