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

#ifndef CVPP_MCNET_H_
#define CVPP_MCNET_H_

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "cvpp/nn.h"

namespace cvpp {

// Multi-scale motion compensation: features of the reference frame are
// warped at three scales and fused by a 3-row grid network whose output is
// added to the plainly warped reference. The fusion starts as an exact no-op
// (zero-init output conv), so an untrained network returns warp(ref, flow).

// Three-level feature pyramid at strides 1, 2, 4.
struct FeatureExtractor {
  Conv2d c0, c1, c2;

  FeatureExtractor() = default;
  FeatureExtractor(ParamStore& ps, const std::string& prefix, int frame_ch,
                   const std::array<int, 3>& ch, Rng& rng);
  std::array<Var, 3> operator()(Tape& t, Var frame) const;
  int64_t param_count() const;
};

// Residual unit: x + conv(lrelu(conv(x))), first conv optionally modulated
// by a per-channel (alpha, beta) pair.
struct GridBlock {
  Conv2d a, b;

  GridBlock() = default;
  GridBlock(ParamStore& ps, const std::string& prefix, int ch, Rng& rng);
  Var operator()(Tape& t, Var x, Var alpha = {}, Var beta = {}) const;
};

// 3 rows x 6 columns. Rows hold streams at strides 1, 2, 4; the first three
// columns transfer downward (strided conv), the last three upward (bilinear
// resize + conv). Every cell applies one GridBlock: 18 modulated sites,
// indexed col * 3 + row.
struct GridNet {
  static constexpr int kRows = 3;
  int cols = 6;
  std::array<int, 3> ch{};
  std::array<Conv2d, 3> in_conv;              // content_l -> ch_l
  std::vector<std::array<GridBlock, 3>> blocks;  // [col][row]
  std::vector<std::array<Conv2d, 2>> down;       // [col][0]: ch0->ch1, [1]: ch1->ch2
  std::vector<std::array<UpConv, 2>> up;         // [col][0]: ch2->ch1, [1]: ch1->ch0
  Conv2d out;                                    // ch0 -> frame_ch, zero-init

  GridNet() = default;
  GridNet(ParamStore& ps, const std::string& prefix, const std::array<int, 3>& content_ch,
          const std::array<int, 3>& ch, int cols, int frame_ch, Rng& rng);
  // mods: 18 (alpha, beta) pairs or null. Returns the fusion residual at
  // full resolution (callers add the warped reference).
  Var operator()(Tape& t, const std::array<Var, 3>& content,
                 const std::vector<std::pair<Var, Var>>* mods) const;
};

struct MCNet {
  int frame_ch = 3;
  FeatureExtractor feat;
  GridNet grid;

  MCNet() = default;
  MCNet(ParamStore& ps, const std::string& feat_prefix, const std::string& grid_prefix,
        int frame_ch, const std::array<int, 3>& pyr_ch, const std::array<int, 3>& grid_ch,
        int grid_cols, Rng& rng);

  // Warped-and-unwarped content stack per level; level 0 carries the raw
  // reference alongside its features.
  std::array<Var, 3> make_content(Tape& t, Var ref, Var flow) const;
  // Motion-compensated prediction x_tilde = grid(content) + warp(ref, flow).
  Var operator()(Tape& t, Var ref, Var flow,
                 const std::vector<std::pair<Var, Var>>* mods = nullptr) const;

  int block_count() const { return GridNet::kRows * grid.cols; }
  // Channel width of block i's modulated conv (row-dependent).
  int block_channels(int i) const { return grid.ch[i % GridNet::kRows]; }
};

}  // namespace cvpp

#endif  // CVPP_MCNET_H_
