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

#ifndef CVPP_MODEL_H_
#define CVPP_MODEL_H_

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cvpp/canf.h"
#include "cvpp/flow.h"
#include "cvpp/mcnet.h"

namespace cvpp {

struct ModelConfig {
  int frame_ch = 3;
  int flow_ch = 2;
  int latent_ch = 128;
  int hyper_ch = 64;
  int coupling_hidden = 64;
  int cond_feat = 32;
  std::array<int, 3> pyr_ch = {32, 64, 96};
  std::array<int, 3> grid_ch = {32, 64, 96};
  int grid_cols = 6;
  int sigma_dim = 64;
  std::array<int, 3> flow_hidden = {16, 32, 48};
  int extrap_ch = 32;
  int ctx_hidden = 64;
  int tctx_ch = 64;
  // Ablation switches: plain warp instead of the grid fusion, plain
  // hyperprior instead of the quadtree model, no feature-map modulation.
  bool use_mcnet = true;
  bool use_quadtree = true;
  bool use_feature_mod = true;

  // Desk-scale preset for tests and quick experiments.
  static ModelConfig small();

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Flow summary vector -> per-site (alpha, beta) modulation. Alpha heads are
// zero-weight with bias 1, beta heads zero-weight with bias 0: modulation is
// the bitwise identity until trained.
struct Modulator {
  int dim = 0;
  Conv2d c0, c1, c2;  // summary stack over the 2-channel flow, then GAP
  struct Head {
    Linear alpha, beta;
  };
  std::vector<Head> grid_heads;     // one per grid block
  std::array<Head, 4> coup_heads;   // inter couplings: enc1, dec1, enc2, dec2

  Modulator() = default;
  Modulator(ParamStore& ps, int dim, const std::vector<int>& grid_ch_per_block,
            int coupling_hidden, Rng& rng);

  // Sigma = GAP over the summary stack of a (2,H,W) flow field.
  Var summarize(Tape& t, Var flow) const;
  std::vector<std::pair<Var, Var>> grid_mods(Tape& t, Var sigma) const;
  CouplingMod coupling_mods(Tape& t, Var sigma) const;
};

// Every trainable component of the codec, assembled over one ParamStore.
// Construction order (and thus parameter naming) is pinned:
//   iframe. imotion. motion. inter. flow. extrap. mcnet.feat. mcnet.grid.
//   mod.sigma. mod.head.*
struct VideoCodecModel {
  ModelConfig cfg;
  ParamStore ps;
  IntraCodec iframe;   // unconditional frame codec
  IntraCodec imotion;  // unconditional motion codec for the first P-frame
  CanfCodec motion;    // conditional motion codec (condition: extrapolation)
  CanfCodec inter;     // conditional frame codec (condition: compensation)
  FlowEstimator flow;
  FlowExtrapolator extrap;
  MCNet mcnet;         // when cfg.use_mcnet
  Modulator mod;       // when cfg.use_feature_mod

  explicit VideoCodecModel(const ModelConfig& cfg, uint64_t seed = 0x5eed);

  int64_t param_count() const { return static_cast<int64_t>(ps.count_values()); }
};

}  // namespace cvpp

#endif  // CVPP_MODEL_H_
