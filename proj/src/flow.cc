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

#include "cvpp/flow.h"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "cvpp/ops.h"

namespace cvpp {

Var rescale_flow(Tape& t, Var f, int h2, int w2) {
  const Tensor& fv = t.val(f);
  if (fv.c != 2) throw std::invalid_argument("rescale_flow: flow must have 2 channels");
  if (fv.h == h2 && fv.w == w2) return f;
  Var r = ops::resize_bilinear(t, f, h2, w2);
  Tensor s(2, h2, w2);
  const float sx = static_cast<float>(w2) / fv.w;
  const float sy = static_cast<float>(h2) / fv.h;
  std::fill(s.v.begin(), s.v.begin() + static_cast<size_t>(h2) * w2, sx);
  std::fill(s.v.begin() + static_cast<size_t>(h2) * w2, s.v.end(), sy);
  return ops::mul_const(t, r, std::move(s));
}

FlowEstimator::FlowEstimator(ParamStore& ps, const std::string& prefix, int frame_ch_,
                             std::array<int, 3> hidden_, Rng& rng)
    : hidden(hidden_), frame_ch(frame_ch_) {
  for (int l = 0; l < 3; ++l) {
    const int h = hidden[l];
    // Coarsest level sees (cur, ref); finer levels see (cur, warped ref,
    // upsampled flow).
    const int in_ch = l == 2 ? 2 * frame_ch : 2 * frame_ch + 2;
    const std::string base = prefix + "l" + std::to_string(l) + ".";
    net[l][0] = Conv2d(ps, base + "c0", in_ch, h, 3, 1, false, rng);
    net[l][1] = Conv2d(ps, base + "c1", h, h, 3, 1, false, rng);
    net[l][2] = Conv2d(ps, base + "c2", h, h, 3, 1, false, rng);
    net[l][3] = Conv2d(ps, base + "c3", h, 2, 3, 1, true, rng);
  }
}

namespace {

Var run_level(Tape& t, const std::array<Conv2d, 4>& net, Var in) {
  Var h = ops::leaky_relu(t, net[0](t, in));
  h = ops::leaky_relu(t, net[1](t, h));
  h = ops::leaky_relu(t, net[2](t, h));
  return net[3](t, h);
}

}  // namespace

Var FlowEstimator::operator()(Tape& t, Var cur, Var ref) const {
  const Tensor& cv = t.val(cur);
  if (!cv.same_shape(t.val(ref))) throw std::invalid_argument("estimate_flow: shape mismatch");
  std::array<Var, 3> curs{cur, Var{}, Var{}}, refs{ref, Var{}, Var{}};
  for (int l = 1; l < 3; ++l) {
    const Tensor& prev = t.val(curs[l - 1]);
    curs[l] = ops::resize_bilinear(t, curs[l - 1], prev.h / 2, prev.w / 2);
    refs[l] = ops::resize_bilinear(t, refs[l - 1], prev.h / 2, prev.w / 2);
  }
  Var flow = run_level(t, net[2], ops::concat_c(t, {curs[2], refs[2]}));
  for (int l = 1; l >= 0; --l) {
    const Tensor& cl = t.val(curs[l]);
    Var up = rescale_flow(t, flow, cl.h, cl.w);
    Var warped = ops::warp(t, refs[l], up);
    Var res = run_level(t, net[l], ops::concat_c(t, {curs[l], warped, up}));
    flow = ops::add(t, up, res);
  }
  return flow;
}

FlowExtrapolator::FlowExtrapolator(ParamStore& ps, const std::string& prefix, int frame_ch,
                                   int ch, Rng& rng) {
  const int in_ch = 3 * frame_ch + 4;
  const int mid = ch * 3 / 2;
  e0 = Conv2d(ps, prefix + "e0", in_ch, ch, 3, 1, false, rng);
  e1 = Conv2d(ps, prefix + "e1", ch, mid, 3, 2, false, rng);
  e2 = Conv2d(ps, prefix + "e2", mid, mid, 3, 1, false, rng);
  up = UpConv(ps, prefix + "up", mid, ch, 3, 2, false, rng);
  fuse = Conv2d(ps, prefix + "fuse", 2 * ch, ch, 3, 1, false, rng);
  out = Conv2d(ps, prefix + "out", ch, 2, 3, 1, true, rng);
}

Var FlowExtrapolator::operator()(Tape& t, const std::array<Var, 3>& refs,
                                 const std::array<Var, 2>& flows) const {
  Var in = ops::concat_c(t, {refs[0], refs[1], refs[2], flows[0], flows[1]});
  Var a = ops::leaky_relu(t, e0(t, in));
  Var b = ops::leaky_relu(t, e1(t, a));
  b = ops::leaky_relu(t, e2(t, b));
  Var u = ops::leaky_relu(t, up(t, b));
  Var f = ops::leaky_relu(t, fuse(t, ops::concat_c(t, {u, a})));
  return out(t, f);
}

void update_propagated_flow(Tape& t, PropagatedFlow& state, Var f_hat, int frame_t) {
  if (frame_t < 2) throw std::invalid_argument("update_propagated_flow: t >= 2");
  if (frame_t == 2) {
    state.flow = f_hat;
    state.has = true;
    return;
  }
  if (!state.has)
    throw std::logic_error("update_propagated_flow: empty state at t >= 3");
  state.flow = ops::add(t, ops::warp(t, state.flow, f_hat), f_hat);
}

namespace {
constexpr float kFloMagic = 202021.25f;  // reads as "PIEH" in ASCII
}

void save_flo(const std::string& path, const Tensor& flow) {
  if (flow.c != 2) throw std::invalid_argument("save_flo: flow must be (2,H,W)");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const int32_t w = flow.w, h = flow.h;
  out.write(reinterpret_cast<const char*>(&kFloMagic), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(&h), 4);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      out.write(reinterpret_cast<const char*>(&flow.at(0, y, x)), 4);
      out.write(reinterpret_cast<const char*>(&flow.at(1, y, x)), 4);
    }
}

Tensor load_flo(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  float magic = 0.f;
  int32_t w = 0, h = 0;
  in.read(reinterpret_cast<char*>(&magic), 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  in.read(reinterpret_cast<char*>(&h), 4);
  if (!in || magic != kFloMagic) throw std::runtime_error("not a flow file: " + path);
  if (w <= 0 || h <= 0) throw std::runtime_error("bad flow size: " + path);
  Tensor flow(2, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      in.read(reinterpret_cast<char*>(&flow.at(0, y, x)), 4);
      in.read(reinterpret_cast<char*>(&flow.at(1, y, x)), 4);
    }
  if (!in) throw std::runtime_error("truncated flow file: " + path);
  return flow;
}

}  // namespace cvpp
