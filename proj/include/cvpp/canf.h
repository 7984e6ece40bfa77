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

#ifndef CVPP_CANF_H_
#define CVPP_CANF_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cvpp/entropy.h"
#include "cvpp/nn.h"

namespace cvpp {

// Conditional two-step additive coupling codec. The forward pass lifts the
// signal into a latent while draining the signal plane toward the condition;
// the inverse pass reconstructs by re-running the couplings backwards with
// the condition seeding the drained slot. Coupling output layers start at
// zero, so an untrained codec reproduces the condition bit for bit.

// Per-coupling feature modulation (64-vector alpha/beta applied after the
// first conv). Order: enc1, dec1, enc2, dec2. Inactive sites pass {-1} Vars.
struct CouplingMod {
  std::array<Var, 4> alpha{}, beta{};
};

// Latent-direction half: conv(2S -> hidden, k5, s4) lrelu
// conv(hidden -> hidden, k3, s2) lrelu conv(hidden -> C, k3, s2, zero-init).
struct CouplingEnc {
  Conv2d c0, c1, c2;

  CouplingEnc() = default;
  CouplingEnc(ParamStore& ps, const std::string& prefix, int data_ch, int latent_ch,
              int hidden, Rng& rng);
  // mod_alpha/mod_beta (hidden,1,1) modulate the first conv when ok().
  Var operator()(Tape& t, Var x, Var cond, Var mod_alpha = {}, Var mod_beta = {}) const;
  int64_t param_count() const;
};

// Signal-direction half: the condition is embedded by two stride-4 convs and
// concatenated with the latent, then decoded back to signal resolution.
// conv(C+cf -> hidden, k3, s1) is the modulated site.
struct CouplingDec {
  Conv2d e0, e1;  // condition embedding, S -> cf -> cf at 1/16
  Conv2d d0;
  UpConv u1, u2, u3;  // x2, x2, x4 (zero-init output)

  CouplingDec() = default;
  CouplingDec(ParamStore& ps, const std::string& prefix, int data_ch, int latent_ch,
              int hidden, int cond_feat, Rng& rng);
  Var operator()(Tape& t, Var z, Var cond, Var mod_alpha = {}, Var mod_beta = {}) const;
  int64_t param_count() const;
};

// Latent -> hyper latent at 1/4: conv(C -> H, k3, s1) lrelu
// conv(H -> H, k3, s2) lrelu conv(H -> H, k3, s2).
struct HyperAnalysis {
  Conv2d c0, c1, c2;

  HyperAnalysis() = default;
  HyperAnalysis(ParamStore& ps, const std::string& prefix, int latent_ch, int hyper_ch,
                Rng& rng);
  Var operator()(Tape& t, Var y) const;
  int64_t param_count() const;
};

// Hyper latent -> (mu, v) base at latent resolution: up2 conv(H -> 1.5H)
// lrelu up2 conv(1.5H -> 2C).
struct HyperSynthesis {
  UpConv u0, u1;

  HyperSynthesis() = default;
  HyperSynthesis(ParamStore& ps, const std::string& prefix, int latent_ch, int hyper_ch,
                 Rng& rng);
  // Returns the concatenated (2C) base; callers slice mu and v.
  Var operator()(Tape& t, Var z_hat) const;
  int64_t param_count() const;
};

// Temporal-context embedding of the decoded motion latent, feeding the
// quadtree model of the inter codec.
struct TctxEncoder {
  Conv2d c0, c1;

  TctxEncoder() = default;
  TctxEncoder(ParamStore& ps, const std::string& prefix, int in_ch, int out_ch, Rng& rng);
  Var operator()(Tape& t, Var motion_latent) const;
  int64_t param_count() const;
};

struct CanfCodeResult {
  Var x_hat;   // reconstruction (inverse pass seeded with the condition)
  Var x2;      // forward residual slot; its distance to the condition is the
               // flow-consistency regularizer
  Var y_hat;   // quantized latent as seen by the inverse pass
  Var rate;    // scalar graph bits, hyper + main
  double bits = 0.0;
  std::vector<uint8_t> payload;  // pack_unit(z, y) when bytes were requested
};

struct CanfCodec {
  int data_ch = 0, latent_ch = 0, hyper_ch = 0;
  CouplingEnc enc1, enc2;
  CouplingDec dec1, dec2;
  HyperAnalysis ha;
  HyperSynthesis hs;
  FactorizedPrior prior;
  bool use_quadtree = false;
  QuadtreeCoder ctx;       // when use_quadtree
  bool has_tctx = false;
  TctxEncoder tctx;        // when tctx_in_ch > 0

  CanfCodec() = default;
  // tctx_in_ch > 0 attaches the temporal-context branch (quadtree only).
  CanfCodec(ParamStore& ps, const std::string& prefix, int data_ch, int latent_ch,
            int hyper_ch, int hidden, int cond_feat, bool use_quadtree, int ctx_hidden,
            int tctx_ch, int tctx_in_ch, Rng& rng);

  // Two additive coupling steps; returns (y2, x2).
  std::pair<Var, Var> forward(Tape& t, Var x, Var cond, const CouplingMod* mod) const;
  // Runs the couplings backwards from the quantized latent. x2_slot is the
  // drained-plane seed: the condition at decode time, the true x2 when
  // checking invertibility.
  Var inverse(Tape& t, Var y_hat, Var cond, Var x2_slot, const CouplingMod* mod) const;

  // Full conditional coding pass. tctx_src is the decoded motion latent (or
  // null). emit_bytes requires Phase::kEval.
  CanfCodeResult code(Tape& t, Var x, Var cond, const Var* tctx_src, QuantMode mode,
                      Phase phase, Rng* noise_rng, bool emit_bytes,
                      const CouplingMod* mod) const;
  // Decoder-side mirror of code()'s eval path, bit for bit.
  Var decode(Tape& t, Var cond, const Var* tctx_src, const std::vector<uint8_t>& payload,
             const CouplingMod* mod, Var* y_hat_out = nullptr) const;

  int64_t param_count() const;
};

// Unconditional transform codec for I-frames and the first P-frame's motion
// field: plain analysis/synthesis autoencoder with a mean-scale hyperprior.
struct IntraCodeResult {
  Var x_hat;  // unclamped; frame callers clamp to [0, 1]
  Var y_hat;
  Var rate;
  double bits = 0.0;
  std::vector<uint8_t> payload;
};

struct IntraCodec {
  int data_ch = 0, latent_ch = 0, hyper_ch = 0;
  Conv2d a0, a1, a2;  // s4, s2, s2
  UpConv s0, s1, s2;  // x2, x2, x4
  HyperAnalysis ha;
  HyperSynthesis hs;
  FactorizedPrior prior;

  IntraCodec() = default;
  IntraCodec(ParamStore& ps, const std::string& prefix, int data_ch, int latent_ch,
             int hyper_ch, Rng& rng);

  Var synthesize(Tape& t, Var y_hat) const;
  IntraCodeResult code(Tape& t, Var x, QuantMode mode, Phase phase, Rng* noise_rng,
                       bool emit_bytes) const;
  // h, w: padded signal dimensions (multiples of the codec stride).
  Var decode(Tape& t, int h, int w, const std::vector<uint8_t>& payload,
             Var* y_hat_out = nullptr) const;

  int64_t param_count() const;
};

}  // namespace cvpp

#endif  // CVPP_CANF_H_
