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

#include "cvpp/canf.h"

#include <stdexcept>
#include <utility>

#include "cvpp/ops.h"

namespace cvpp {

namespace {
// Latent sits at 1/16 of the signal, the hyper latent at 1/64.
constexpr int kLatentStride = 16;
constexpr int kHyperStride = 4;

Var maybe_modulate(Tape& t, Var h, Var alpha, Var beta) {
  return alpha.ok() ? ops::modulate(t, h, alpha, beta) : h;
}
}  // namespace

// ---------------------------------------------------------------------------
// Coupling halves.

CouplingEnc::CouplingEnc(ParamStore& ps, const std::string& prefix, int data_ch,
                         int latent_ch, int hidden, Rng& rng)
    : c0(ps, prefix + "c0", 2 * data_ch, hidden, 5, 4, false, rng),
      c1(ps, prefix + "c1", hidden, hidden, 3, 2, false, rng),
      c2(ps, prefix + "c2", hidden, latent_ch, 3, 2, true, rng) {}

Var CouplingEnc::operator()(Tape& t, Var x, Var cond, Var mod_alpha, Var mod_beta) const {
  Var h = maybe_modulate(t, c0(t, ops::concat_c(t, {x, cond})), mod_alpha, mod_beta);
  h = ops::leaky_relu(t, h);
  h = ops::leaky_relu(t, c1(t, h));
  return c2(t, h);
}

CouplingDec::CouplingDec(ParamStore& ps, const std::string& prefix, int data_ch,
                         int latent_ch, int hidden, int cond_feat, Rng& rng)
    : e0(ps, prefix + "e0", data_ch, cond_feat, 5, 4, false, rng),
      e1(ps, prefix + "e1", cond_feat, cond_feat, 5, 4, false, rng),
      d0(ps, prefix + "d0", latent_ch + cond_feat, hidden, 3, 1, false, rng),
      u1(ps, prefix + "u1", hidden, hidden, 3, 2, false, rng),
      u2(ps, prefix + "u2", hidden, hidden, 3, 2, false, rng),
      u3(ps, prefix + "u3", hidden, data_ch, 5, 4, true, rng) {}

Var CouplingDec::operator()(Tape& t, Var z, Var cond, Var mod_alpha, Var mod_beta) const {
  Var ce = ops::leaky_relu(t, e0(t, cond));
  ce = ops::leaky_relu(t, e1(t, ce));
  Var h = maybe_modulate(t, d0(t, ops::concat_c(t, {z, ce})), mod_alpha, mod_beta);
  h = ops::leaky_relu(t, h);
  h = ops::leaky_relu(t, u1(t, h));
  h = ops::leaky_relu(t, u2(t, h));
  return u3(t, h);
}

int64_t CouplingEnc::param_count() const {
  return c0.params() + c1.params() + c2.params();
}

int64_t CouplingDec::param_count() const {
  return e0.params() + e1.params() + d0.params() + u1.params() + u2.params() + u3.params();
}

// ---------------------------------------------------------------------------
// Hyper transforms.

HyperAnalysis::HyperAnalysis(ParamStore& ps, const std::string& prefix, int latent_ch,
                             int hyper_ch, Rng& rng)
    : c0(ps, prefix + "c0", latent_ch, hyper_ch, 3, 1, false, rng),
      c1(ps, prefix + "c1", hyper_ch, hyper_ch, 3, 2, false, rng),
      c2(ps, prefix + "c2", hyper_ch, hyper_ch, 3, 2, false, rng) {}

Var HyperAnalysis::operator()(Tape& t, Var y) const {
  Var h = ops::leaky_relu(t, c0(t, y));
  h = ops::leaky_relu(t, c1(t, h));
  return c2(t, h);
}

int64_t HyperAnalysis::param_count() const {
  return c0.params() + c1.params() + c2.params();
}

HyperSynthesis::HyperSynthesis(ParamStore& ps, const std::string& prefix, int latent_ch,
                               int hyper_ch, Rng& rng)
    : u0(ps, prefix + "u0", hyper_ch, hyper_ch * 3 / 2, 3, 2, false, rng),
      u1(ps, prefix + "u1", hyper_ch * 3 / 2, 2 * latent_ch, 3, 2, false, rng) {}

Var HyperSynthesis::operator()(Tape& t, Var z_hat) const {
  return u1(t, ops::leaky_relu(t, u0(t, z_hat)));
}

int64_t HyperSynthesis::param_count() const { return u0.params() + u1.params(); }

TctxEncoder::TctxEncoder(ParamStore& ps, const std::string& prefix, int in_ch, int out_ch,
                         Rng& rng)
    : c0(ps, prefix + "c0", in_ch, out_ch, 3, 1, false, rng),
      c1(ps, prefix + "c1", out_ch, out_ch, 3, 1, false, rng) {}

Var TctxEncoder::operator()(Tape& t, Var motion_latent) const {
  return c1(t, ops::leaky_relu(t, c0(t, motion_latent)));
}

int64_t TctxEncoder::param_count() const { return c0.params() + c1.params(); }

// ---------------------------------------------------------------------------
// Conditional codec.

CanfCodec::CanfCodec(ParamStore& ps, const std::string& prefix, int data_ch_, int latent_ch_,
                     int hyper_ch_, int hidden, int cond_feat, bool use_quadtree_,
                     int ctx_hidden, int tctx_ch, int tctx_in_ch, Rng& rng)
    : data_ch(data_ch_),
      latent_ch(latent_ch_),
      hyper_ch(hyper_ch_),
      enc1(ps, prefix + "enc1.", data_ch_, latent_ch_, hidden, rng),
      enc2(ps, prefix + "enc2.", data_ch_, latent_ch_, hidden, rng),
      dec1(ps, prefix + "dec1.", data_ch_, latent_ch_, hidden, cond_feat, rng),
      dec2(ps, prefix + "dec2.", data_ch_, latent_ch_, hidden, cond_feat, rng),
      ha(ps, prefix + "ha.", latent_ch_, hyper_ch_, rng),
      hs(ps, prefix + "hs.", latent_ch_, hyper_ch_, rng),
      prior(ps, prefix + "prior.", hyper_ch_, rng),
      use_quadtree(use_quadtree_),
      has_tctx(tctx_in_ch > 0) {
  if (use_quadtree)
    ctx = QuadtreeCoder(ps, prefix + "ctx.", latent_ch_, ctx_hidden,
                        has_tctx ? tctx_ch : 0, rng);
  if (has_tctx) {
    if (!use_quadtree)
      throw std::invalid_argument("canf: temporal context requires the quadtree model");
    tctx = TctxEncoder(ps, prefix + "tctx.", tctx_in_ch, tctx_ch, rng);
  }
}

std::pair<Var, Var> CanfCodec::forward(Tape& t, Var x, Var cond, const CouplingMod* mod) const {
  Var ma0{}, mb0{}, ma1{}, mb1{}, ma2{}, mb2{}, ma3{}, mb3{};
  if (mod) {
    ma0 = mod->alpha[0], mb0 = mod->beta[0];
    ma1 = mod->alpha[1], mb1 = mod->beta[1];
    ma2 = mod->alpha[2], mb2 = mod->beta[2];
    ma3 = mod->alpha[3], mb3 = mod->beta[3];
  }
  Var z = enc1(t, x, cond, ma0, mb0);
  Var xa = ops::sub(t, x, dec1(t, z, cond, ma1, mb1));
  z = ops::add(t, z, enc2(t, xa, cond, ma2, mb2));
  xa = ops::sub(t, xa, dec2(t, z, cond, ma3, mb3));
  return {z, xa};
}

Var CanfCodec::inverse(Tape& t, Var y_hat, Var cond, Var x2_slot,
                       const CouplingMod* mod) const {
  Var ma1{}, mb1{}, ma2{}, mb2{}, ma3{}, mb3{};
  if (mod) {
    ma1 = mod->alpha[1], mb1 = mod->beta[1];
    ma2 = mod->alpha[2], mb2 = mod->beta[2];
    ma3 = mod->alpha[3], mb3 = mod->beta[3];
  }
  Var x = ops::add(t, x2_slot, dec2(t, y_hat, cond, ma3, mb3));
  Var z = ops::sub(t, y_hat, enc2(t, x, cond, ma2, mb2));
  return ops::add(t, x, dec1(t, z, cond, ma1, mb1));
}

CanfCodeResult CanfCodec::code(Tape& t, Var x, Var cond, const Var* tctx_src, QuantMode mode,
                               Phase phase, Rng* noise_rng, bool emit_bytes,
                               const CouplingMod* mod) const {
  const Tensor& xv = t.val(x);
  const Tensor& cv = t.val(cond);
  if (xv.c != data_ch || cv.c != data_ch || xv.h != cv.h || xv.w != cv.w)
    throw std::invalid_argument("canf code: shape mismatch");

  CanfCodeResult r;
  auto [y2, x2] = forward(t, x, cond, mod);
  r.x2 = x2;

  RangeEncoder z_enc, y_enc;
  Var z = ha(t, y2);
  FactorizedCodeResult zr =
      factorized_code(t, prior, z, mode, phase, noise_rng, emit_bytes ? &z_enc : nullptr);
  Var base = hs(t, zr.z_hat);
  Var mu = ops::slice_c(t, base, 0, latent_ch);
  Var v = ops::slice_c(t, base, latent_ch, latent_ch);

  Var tc{};
  const bool with_tctx = has_tctx && tctx_src != nullptr;
  if (with_tctx) tc = tctx(t, *tctx_src);

  Var rate_y{};
  if (use_quadtree) {
    QuadtreeCoder::Result qr = ctx.apply(t, y2, mu, v, with_tctx ? &tc : nullptr, mode,
                                         phase, noise_rng, emit_bytes ? &y_enc : nullptr);
    r.y_hat = qr.y_hat;
    rate_y = qr.rate;
    r.bits = zr.bits + qr.bits;
  } else {
    GaussianCoderResult gr = gaussian_code(t, y2, mu, v, mode, phase, noise_rng,
                                           emit_bytes ? &y_enc : nullptr);
    r.y_hat = gr.y_hat;
    rate_y = gr.rate;
    r.bits = zr.bits + gr.bits;
  }
  r.rate = ops::add(t, zr.rate, rate_y);
  r.x_hat = inverse(t, r.y_hat, cond, cond, mod);
  if (emit_bytes) r.payload = pack_unit(z_enc.finish(), y_enc.finish());
  return r;
}

Var CanfCodec::decode(Tape& t, Var cond, const Var* tctx_src,
                      const std::vector<uint8_t>& payload, const CouplingMod* mod,
                      Var* y_hat_out) const {
  const Tensor& cv = t.val(cond);
  if (cv.h % (kLatentStride * kHyperStride) != 0 || cv.w % (kLatentStride * kHyperStride) != 0)
    throw std::invalid_argument("canf decode: condition not stride-aligned");
  const int hy = cv.h / kLatentStride, wy = cv.w / kLatentStride;
  const int hz = hy / kHyperStride, wz = wy / kHyperStride;

  std::vector<uint8_t> z_bytes, y_bytes;
  unpack_unit(payload, &z_bytes, &y_bytes);
  RangeDecoder z_dec(z_bytes);
  Var z_hat = factorized_decode(t, prior, hyper_ch, hz, wz, z_dec);
  Var base = hs(t, z_hat);
  Var mu = ops::slice_c(t, base, 0, latent_ch);
  Var v = ops::slice_c(t, base, latent_ch, latent_ch);

  Var tc{};
  const bool with_tctx = has_tctx && tctx_src != nullptr;
  if (with_tctx) tc = tctx(t, *tctx_src);

  RangeDecoder y_dec(y_bytes);
  Var y_hat = use_quadtree ? ctx.decode(t, mu, v, with_tctx ? &tc : nullptr, y_dec)
                           : gaussian_decode(t, mu, v, y_dec);
  if (y_hat_out) *y_hat_out = y_hat;
  return inverse(t, y_hat, cond, cond, mod);
}

int64_t CanfCodec::param_count() const {
  int64_t n = enc1.param_count() + enc2.param_count() + dec1.param_count() +
              dec2.param_count() + ha.param_count() + hs.param_count();
  n += 28 * hyper_ch;  // factorized prior
  if (use_quadtree)
    for (const auto& s : ctx.steps) n += s.c0.params() + s.c1.params() + s.c2.params();
  if (has_tctx) n += tctx.param_count();
  return n;
}

// ---------------------------------------------------------------------------
// Intra codec.

IntraCodec::IntraCodec(ParamStore& ps, const std::string& prefix, int data_ch_,
                       int latent_ch_, int hyper_ch_, Rng& rng)
    : data_ch(data_ch_),
      latent_ch(latent_ch_),
      hyper_ch(hyper_ch_),
      a0(ps, prefix + "a0", data_ch_, latent_ch_ / 2, 5, 4, false, rng),
      a1(ps, prefix + "a1", latent_ch_ / 2, latent_ch_ * 3 / 4, 3, 2, false, rng),
      a2(ps, prefix + "a2", latent_ch_ * 3 / 4, latent_ch_, 3, 2, false, rng),
      s0(ps, prefix + "s0", latent_ch_, latent_ch_ * 3 / 4, 3, 2, false, rng),
      s1(ps, prefix + "s1", latent_ch_ * 3 / 4, latent_ch_ / 2, 3, 2, false, rng),
      s2(ps, prefix + "s2", latent_ch_ / 2, data_ch_, 5, 4, false, rng),
      ha(ps, prefix + "ha.", latent_ch_, hyper_ch_, rng),
      hs(ps, prefix + "hs.", latent_ch_, hyper_ch_, rng),
      prior(ps, prefix + "prior.", hyper_ch_, rng) {}

Var IntraCodec::synthesize(Tape& t, Var y_hat) const {
  Var h = ops::leaky_relu(t, s0(t, y_hat));
  h = ops::leaky_relu(t, s1(t, h));
  return s2(t, h);
}

IntraCodeResult IntraCodec::code(Tape& t, Var x, QuantMode mode, Phase phase, Rng* noise_rng,
                                 bool emit_bytes) const {
  if (t.val(x).c != data_ch) throw std::invalid_argument("intra code: channel mismatch");
  Var y = ops::leaky_relu(t, a0(t, x));
  y = ops::leaky_relu(t, a1(t, y));
  y = a2(t, y);

  RangeEncoder z_enc, y_enc;
  Var z = ha(t, y);
  FactorizedCodeResult zr =
      factorized_code(t, prior, z, mode, phase, noise_rng, emit_bytes ? &z_enc : nullptr);
  Var base = hs(t, zr.z_hat);
  Var mu = ops::slice_c(t, base, 0, latent_ch);
  Var v = ops::slice_c(t, base, latent_ch, latent_ch);
  GaussianCoderResult gr =
      gaussian_code(t, y, mu, v, mode, phase, noise_rng, emit_bytes ? &y_enc : nullptr);

  IntraCodeResult r;
  r.y_hat = gr.y_hat;
  r.rate = ops::add(t, zr.rate, gr.rate);
  r.bits = zr.bits + gr.bits;
  r.x_hat = synthesize(t, gr.y_hat);
  if (emit_bytes) r.payload = pack_unit(z_enc.finish(), y_enc.finish());
  return r;
}

Var IntraCodec::decode(Tape& t, int h, int w, const std::vector<uint8_t>& payload,
                       Var* y_hat_out) const {
  if (h % (kLatentStride * kHyperStride) != 0 || w % (kLatentStride * kHyperStride) != 0)
    throw std::invalid_argument("intra decode: size not stride-aligned");
  const int hy = h / kLatentStride, wy = w / kLatentStride;
  std::vector<uint8_t> z_bytes, y_bytes;
  unpack_unit(payload, &z_bytes, &y_bytes);
  RangeDecoder z_dec(z_bytes);
  Var z_hat = factorized_decode(t, prior, hyper_ch, hy / kHyperStride, wy / kHyperStride,
                                z_dec);
  Var base = hs(t, z_hat);
  Var mu = ops::slice_c(t, base, 0, latent_ch);
  Var v = ops::slice_c(t, base, latent_ch, latent_ch);
  RangeDecoder y_dec(y_bytes);
  Var y_hat = gaussian_decode(t, mu, v, y_dec);
  if (y_hat_out) *y_hat_out = y_hat;
  return synthesize(t, y_hat);
}

int64_t IntraCodec::param_count() const {
  return a0.params() + a1.params() + a2.params() + s0.params() + s1.params() + s2.params() +
         ha.param_count() + hs.param_count() + 28 * hyper_ch;
}

}  // namespace cvpp
