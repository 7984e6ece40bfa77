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

#include "cvpp/mcnet.h"

#include <stdexcept>

#include "cvpp/flow.h"
#include "cvpp/ops.h"

namespace cvpp {

FeatureExtractor::FeatureExtractor(ParamStore& ps, const std::string& prefix, int frame_ch,
                                   const std::array<int, 3>& ch, Rng& rng)
    : c0(ps, prefix + "c0", frame_ch, ch[0], 3, 1, false, rng),
      c1(ps, prefix + "c1", ch[0], ch[1], 3, 2, false, rng),
      c2(ps, prefix + "c2", ch[1], ch[2], 3, 2, false, rng) {}

std::array<Var, 3> FeatureExtractor::operator()(Tape& t, Var frame) const {
  Var f0 = ops::leaky_relu(t, c0(t, frame));
  Var f1 = ops::leaky_relu(t, c1(t, f0));
  Var f2 = ops::leaky_relu(t, c2(t, f1));
  return {f0, f1, f2};
}

int64_t FeatureExtractor::param_count() const {
  return c0.params() + c1.params() + c2.params();
}

GridBlock::GridBlock(ParamStore& ps, const std::string& prefix, int ch, Rng& rng)
    : a(ps, prefix + "a", ch, ch, 3, 1, false, rng),
      b(ps, prefix + "b", ch, ch, 3, 1, false, rng) {}

Var GridBlock::operator()(Tape& t, Var x, Var alpha, Var beta) const {
  Var h = a(t, x);
  if (alpha.ok()) h = ops::modulate(t, h, alpha, beta);
  return ops::add(t, x, b(t, ops::leaky_relu(t, h)));
}

GridNet::GridNet(ParamStore& ps, const std::string& prefix,
                 const std::array<int, 3>& content_ch, const std::array<int, 3>& ch_,
                 int cols_, int frame_ch, Rng& rng)
    : cols(cols_), ch(ch_) {
  if (cols < 2 || cols % 2 != 0)
    throw std::invalid_argument("grid: column count must be even and >= 2");
  for (int l = 0; l < kRows; ++l)
    in_conv[l] = Conv2d(ps, prefix + "in" + std::to_string(l), content_ch[l], ch[l], 3, 1,
                        false, rng);
  blocks.resize(cols);
  for (int c = 0; c < cols; ++c) {
    const std::string col = ".c" + std::to_string(c) + ".";
    for (int r = 0; r < kRows; ++r)
      blocks[c][r] = GridBlock(ps, prefix + "r" + std::to_string(r) + col, ch[r], rng);
  }
  const int half = cols / 2;
  down.resize(half);
  up.resize(half);
  for (int c = 0; c < half; ++c) {
    const std::string dc = prefix + "d" + std::to_string(c) + ".";
    down[c][0] = Conv2d(ps, dc + "0", ch[0], ch[1], 3, 2, false, rng);
    down[c][1] = Conv2d(ps, dc + "1", ch[1], ch[2], 3, 2, false, rng);
    const std::string uc = prefix + "u" + std::to_string(c) + ".";
    up[c][0] = UpConv(ps, uc + "0", ch[2], ch[1], 3, 2, false, rng);
    up[c][1] = UpConv(ps, uc + "1", ch[1], ch[0], 3, 2, false, rng);
  }
  out = Conv2d(ps, prefix + "out", ch[0], frame_ch, 3, 1, true, rng);
}

Var GridNet::operator()(Tape& t, const std::array<Var, 3>& content,
                        const std::vector<std::pair<Var, Var>>* mods) const {
  if (mods && static_cast<int>(mods->size()) != cols * kRows)
    throw std::invalid_argument("grid: modulation count mismatch");
  auto block = [&](int col, int row, Var x) {
    if (!mods) return blocks[col][row](t, x);
    const auto& [alpha, beta] = (*mods)[col * kRows + row];
    return blocks[col][row](t, x, alpha, beta);
  };
  Var s0 = ops::leaky_relu(t, in_conv[0](t, content[0]));
  Var s1 = ops::leaky_relu(t, in_conv[1](t, content[1]));
  Var s2 = ops::leaky_relu(t, in_conv[2](t, content[2]));
  const int half = cols / 2;
  for (int c = 0; c < half; ++c) {
    s0 = block(c, 0, s0);
    s1 = block(c, 1, ops::add(t, s1, down[c][0](t, s0)));
    s2 = block(c, 2, ops::add(t, s2, down[c][1](t, s1)));
  }
  for (int c = half; c < cols; ++c) {
    const int u = c - half;
    s2 = block(c, 2, s2);
    s1 = block(c, 1, ops::add(t, s1, up[u][0](t, s2)));
    s0 = block(c, 0, ops::add(t, s0, up[u][1](t, s1)));
  }
  return out(t, s0);
}

MCNet::MCNet(ParamStore& ps, const std::string& feat_prefix, const std::string& grid_prefix,
             int frame_ch_, const std::array<int, 3>& pyr_ch,
             const std::array<int, 3>& grid_ch, int grid_cols, Rng& rng)
    : frame_ch(frame_ch_), feat(ps, feat_prefix, frame_ch_, pyr_ch, rng) {
  // Level 0 carries warped+unwarped (features ++ raw reference); deeper
  // levels carry warped+unwarped features only.
  const std::array<int, 3> content_ch = {2 * (pyr_ch[0] + frame_ch_), 2 * pyr_ch[1],
                                         2 * pyr_ch[2]};
  grid = GridNet(ps, grid_prefix, content_ch, grid_ch, grid_cols, frame_ch_, rng);
}

std::array<Var, 3> MCNet::make_content(Tape& t, Var ref, Var flow) const {
  const std::array<Var, 3> feats = feat(t, ref);
  std::array<Var, 3> content;
  for (int l = 0; l < 3; ++l) {
    Var x = l == 0 ? ops::concat_c(t, {feats[0], ref}) : feats[l];
    const Tensor& xv = t.val(x);
    Var fl = rescale_flow(t, flow, xv.h, xv.w);
    content[l] = ops::concat_c(t, {ops::warp(t, x, fl), x});
  }
  return content;
}

Var MCNet::operator()(Tape& t, Var ref, Var flow,
                      const std::vector<std::pair<Var, Var>>* mods) const {
  Var resid = grid(t, make_content(t, ref, flow), mods);
  return ops::add(t, resid, ops::warp(t, ref, flow));
}

}  // namespace cvpp
