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

#include "cvpp/model.h"

#include <stdexcept>

#include "cvpp/ops.h"

namespace cvpp {

ModelConfig ModelConfig::small() {
  ModelConfig c;
  c.latent_ch = 32;
  c.hyper_ch = 16;
  c.coupling_hidden = 16;
  c.cond_feat = 8;
  c.pyr_ch = {8, 12, 16};
  c.grid_ch = {8, 12, 16};
  c.grid_cols = 2;
  c.sigma_dim = 16;
  c.flow_hidden = {8, 12, 16};
  c.extrap_ch = 16;
  c.ctx_hidden = 16;
  c.tctx_ch = 16;
  return c;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"frame_ch", frame_ch},
          {"flow_ch", flow_ch},
          {"latent_ch", latent_ch},
          {"hyper_ch", hyper_ch},
          {"coupling_hidden", coupling_hidden},
          {"cond_feat", cond_feat},
          {"pyr_ch", pyr_ch},
          {"grid_ch", grid_ch},
          {"grid_cols", grid_cols},
          {"sigma_dim", sigma_dim},
          {"flow_hidden", flow_hidden},
          {"extrap_ch", extrap_ch},
          {"ctx_hidden", ctx_hidden},
          {"tctx_ch", tctx_ch},
          {"use_mcnet", use_mcnet},
          {"use_quadtree", use_quadtree},
          {"use_feature_mod", use_feature_mod}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.frame_ch = j.value("frame_ch", c.frame_ch);
  c.flow_ch = j.value("flow_ch", c.flow_ch);
  c.latent_ch = j.value("latent_ch", c.latent_ch);
  c.hyper_ch = j.value("hyper_ch", c.hyper_ch);
  c.coupling_hidden = j.value("coupling_hidden", c.coupling_hidden);
  c.cond_feat = j.value("cond_feat", c.cond_feat);
  if (j.contains("pyr_ch")) c.pyr_ch = j.at("pyr_ch").get<std::array<int, 3>>();
  if (j.contains("grid_ch")) c.grid_ch = j.at("grid_ch").get<std::array<int, 3>>();
  c.grid_cols = j.value("grid_cols", c.grid_cols);
  c.sigma_dim = j.value("sigma_dim", c.sigma_dim);
  if (j.contains("flow_hidden"))
    c.flow_hidden = j.at("flow_hidden").get<std::array<int, 3>>();
  c.extrap_ch = j.value("extrap_ch", c.extrap_ch);
  c.ctx_hidden = j.value("ctx_hidden", c.ctx_hidden);
  c.tctx_ch = j.value("tctx_ch", c.tctx_ch);
  c.use_mcnet = j.value("use_mcnet", c.use_mcnet);
  c.use_quadtree = j.value("use_quadtree", c.use_quadtree);
  c.use_feature_mod = j.value("use_feature_mod", c.use_feature_mod);
  return c;
}

Modulator::Modulator(ParamStore& ps, int dim_, const std::vector<int>& grid_ch_per_block,
                     int coupling_hidden, Rng& rng)
    : dim(dim_),
      c0(ps, "mod.sigma.c0", 2, dim_ / 2, 3, 2, false, rng),
      c1(ps, "mod.sigma.c1", dim_ / 2, dim_, 3, 2, false, rng),
      c2(ps, "mod.sigma.c2", dim_, dim_, 3, 1, false, rng) {
  for (size_t i = 0; i < grid_ch_per_block.size(); ++i) {
    const std::string base = "mod.head.grid" + std::to_string(i) + ".";
    grid_heads.push_back(
        {Linear(ps, base + "alpha", dim_, grid_ch_per_block[i], true, 1.f, rng),
         Linear(ps, base + "beta", dim_, grid_ch_per_block[i], true, 0.f, rng)});
  }
  const char* names[4] = {"enc1", "dec1", "enc2", "dec2"};
  for (int i = 0; i < 4; ++i) {
    const std::string base = std::string("mod.head.coup.") + names[i] + ".";
    coup_heads[i] = {Linear(ps, base + "alpha", dim_, coupling_hidden, true, 1.f, rng),
                     Linear(ps, base + "beta", dim_, coupling_hidden, true, 0.f, rng)};
  }
}

Var Modulator::summarize(Tape& t, Var flow) const {
  Var h = ops::leaky_relu(t, c0(t, flow));
  h = ops::leaky_relu(t, c1(t, h));
  h = c2(t, h);
  return ops::global_mean_sp(t, h);
}

std::vector<std::pair<Var, Var>> Modulator::grid_mods(Tape& t, Var sigma) const {
  std::vector<std::pair<Var, Var>> mods;
  mods.reserve(grid_heads.size());
  for (const Head& head : grid_heads)
    mods.emplace_back(head.alpha(t, sigma), head.beta(t, sigma));
  return mods;
}

CouplingMod Modulator::coupling_mods(Tape& t, Var sigma) const {
  CouplingMod m;
  for (int i = 0; i < 4; ++i) {
    m.alpha[i] = coup_heads[i].alpha(t, sigma);
    m.beta[i] = coup_heads[i].beta(t, sigma);
  }
  return m;
}

VideoCodecModel::VideoCodecModel(const ModelConfig& cfg_, uint64_t seed) : cfg(cfg_) {
  Rng rng(seed);
  iframe = IntraCodec(ps, "iframe.", cfg.frame_ch, cfg.latent_ch, cfg.hyper_ch, rng);
  imotion = IntraCodec(ps, "imotion.", cfg.flow_ch, cfg.latent_ch, cfg.hyper_ch, rng);
  motion = CanfCodec(ps, "motion.", cfg.flow_ch, cfg.latent_ch, cfg.hyper_ch,
                     cfg.coupling_hidden, cfg.cond_feat, cfg.use_quadtree, cfg.ctx_hidden,
                     /*tctx_ch=*/0, /*tctx_in_ch=*/0, rng);
  inter = CanfCodec(ps, "inter.", cfg.frame_ch, cfg.latent_ch, cfg.hyper_ch,
                    cfg.coupling_hidden, cfg.cond_feat, cfg.use_quadtree, cfg.ctx_hidden,
                    cfg.tctx_ch, cfg.use_quadtree ? cfg.latent_ch : 0, rng);
  flow = FlowEstimator(ps, "flow.", cfg.frame_ch, cfg.flow_hidden, rng);
  extrap = FlowExtrapolator(ps, "extrap.", cfg.frame_ch, cfg.extrap_ch, rng);
  if (cfg.use_mcnet)
    mcnet = MCNet(ps, "mcnet.feat.", "mcnet.grid.", cfg.frame_ch, cfg.pyr_ch, cfg.grid_ch,
                  cfg.grid_cols, rng);
  if (cfg.use_feature_mod) {
    std::vector<int> block_ch;
    if (cfg.use_mcnet)
      for (int i = 0; i < mcnet.block_count(); ++i)
        block_ch.push_back(mcnet.block_channels(i));
    mod = Modulator(ps, cfg.sigma_dim, block_ch, cfg.coupling_hidden, rng);
  }
}

}  // namespace cvpp
