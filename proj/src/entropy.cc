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

#include "cvpp/entropy.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "cvpp/ops.h"

namespace cvpp {
namespace {

constexpr uint32_t kTop = 1u << 24;
constexpr uint32_t kBot = 1u << 16;
constexpr double kInvSqrt2 = 0.7071067811865476;

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

// Largest-remainder style quantization of a bucket pmf to 16-bit counts:
// every bucket gets at least 1 and the total is exactly kFreqScale; leftover
// drift lands on the heaviest bucket.
CdfTable quantize_pmf(const std::array<double, kNumBuckets>& pmf) {
  std::array<int64_t, kNumBuckets> counts;
  int64_t total = 0;
  int heaviest = 0;
  for (int i = 0; i < kNumBuckets; ++i) {
    counts[i] = std::max<int64_t>(1, std::llround(pmf[i] * kFreqScale));
    total += counts[i];
    if (counts[i] > counts[heaviest]) heaviest = i;
  }
  counts[heaviest] += static_cast<int64_t>(kFreqScale) - total;
  if (counts[heaviest] < 1)
    throw std::logic_error("cdf quantization: drift exceeded heaviest bucket");
  CdfTable t;
  t.cum[0] = 0;
  for (int i = 0; i < kNumBuckets; ++i)
    t.cum[i + 1] = t.cum[i] + static_cast<uint32_t>(counts[i]);
  return t;
}

}  // namespace

CdfTable gaussian_cdf_table(double sigma) {
  const double s = std::max(sigma, 0.01);
  std::array<double, kNumBuckets> pmf{};
  double covered = 0.0;
  for (int sym = kSymMin; sym <= kSymMax; ++sym) {
    const double p = normal_cdf((sym + 0.5) / s) - normal_cdf((sym - 0.5) / s);
    pmf[sym - kSymMin] = p;
    covered += p;
  }
  pmf[kEscapeIndex] = std::max(0.0, 1.0 - covered);
  return quantize_pmf(pmf);
}

// ---------------------------------------------------------------------------
// Range coder (Subbotin carry-less variant).

void RangeEncoder::normalize() {
  while ((low_ ^ (low_ + range_)) < kTop ||
         (range_ < kBot && ((range_ = -low_ & (kBot - 1)), true))) {
    out_.push_back(static_cast<uint8_t>(low_ >> 24));
    low_ <<= 8;
    range_ <<= 8;
  }
}

void RangeEncoder::encode(uint32_t cum_lo, uint32_t freq) {
  range_ /= kFreqScale;
  low_ += cum_lo * range_;
  range_ *= freq;
  normalize();
}

void RangeEncoder::encode_symbol(const CdfTable& table, int bucket) {
  encode(table.cum[bucket], table.cum[bucket + 1] - table.cum[bucket]);
}

void RangeEncoder::encode_raw_byte(uint8_t b) {
  encode(static_cast<uint32_t>(b) << 8, 1u << 8);
}

void RangeEncoder::encode_int(const CdfTable& table, int32_t value) {
  if (value >= kSymMin && value <= kSymMax) {
    encode_symbol(table, value - kSymMin);
    return;
  }
  encode_symbol(table, kEscapeIndex);
  const uint32_t u = static_cast<uint32_t>(value);
  for (int i = 0; i < 4; ++i) encode_raw_byte(static_cast<uint8_t>(u >> (8 * i)));
}

std::vector<uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 4; ++i) {
    out_.push_back(static_cast<uint8_t>(low_ >> 24));
    low_ <<= 8;
  }
  return std::move(out_);
}

RangeDecoder::RangeDecoder(const std::vector<uint8_t>& bytes) : bytes_(bytes) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() { return pos_ < bytes_.size() ? bytes_[pos_++] : 0; }

void RangeDecoder::normalize() {
  while ((low_ ^ (low_ + range_)) < kTop ||
         (range_ < kBot && ((range_ = -low_ & (kBot - 1)), true))) {
    code_ = (code_ << 8) | next_byte();
    low_ <<= 8;
    range_ <<= 8;
  }
}

uint32_t RangeDecoder::decode_freq() {
  range_ /= kFreqScale;
  const uint32_t f = (code_ - low_) / range_;
  if (f >= kFreqScale) throw std::runtime_error("range decoder desync");
  return f;
}

void RangeDecoder::decode_update(uint32_t cum_lo, uint32_t freq) {
  low_ += cum_lo * range_;
  range_ *= freq;
  normalize();
}

int RangeDecoder::decode_symbol(const CdfTable& table) {
  const uint32_t f = decode_freq();
  // First bucket whose upper cumulative bound exceeds f.
  const auto it = std::upper_bound(table.cum.begin() + 1, table.cum.end(), f);
  const int bucket = static_cast<int>(it - table.cum.begin()) - 1;
  decode_update(table.cum[bucket], table.cum[bucket + 1] - table.cum[bucket]);
  return bucket;
}

uint8_t RangeDecoder::decode_raw_byte() {
  const uint32_t f = decode_freq();
  const uint8_t b = static_cast<uint8_t>(f >> 8);
  decode_update(static_cast<uint32_t>(b) << 8, 1u << 8);
  return b;
}

int32_t RangeDecoder::decode_int(const CdfTable& table) {
  const int bucket = decode_symbol(table);
  if (bucket != kEscapeIndex) return bucket + kSymMin;
  uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<uint32_t>(decode_raw_byte()) << (8 * i);
  return static_cast<int32_t>(u);
}

// ---------------------------------------------------------------------------
// Factorized prior.

namespace {
// softplus inverse: x such that log(1+e^x) = y.
float softplus_inv(double y) { return static_cast<float>(std::log(std::expm1(y))); }
}  // namespace

FactorizedPrior::FactorizedPrior(ParamStore& ps, const std::string& prefix, int channels_,
                                 Rng& rng)
    : channels(channels_) {
  // Initialized so the composite CDF starts as sigmoid(x + shift): unit
  // effective slope, per-channel random shifts to break symmetry.
  const float w1 = softplus_inv(1.0);
  const float w23 = softplus_inv(1.0 / 3.0);
  auto full = [&](float v) { return Tensor::full(channels, 1, 1, v); };
  for (int k = 0; k < 3; ++k) {
    const std::string sk = std::to_string(k);
    h1[k] = ps.create(prefix + "h1." + sk, full(w1));
    Tensor noisy(channels, 1, 1);
    for (float& v : noisy.v) v = rng.uniform(-0.5f, 0.5f);
    b1[k] = ps.create(prefix + "b1." + sk, std::move(noisy));
    a1[k] = ps.create(prefix + "a1." + sk, full(0.f));
    for (int j = 0; j < 3; ++j)
      h2[j][k] = ps.create(prefix + "h2." + std::to_string(j) + "." + sk, full(w23));
    b2[k] = ps.create(prefix + "b2." + sk, full(0.f));
    a2[k] = ps.create(prefix + "a2." + sk, full(0.f));
    h3[k] = ps.create(prefix + "h3." + sk, full(w23));
  }
  b3 = ps.create(prefix + "b3", full(0.f));
}

Var FactorizedPrior::likelihood(Tape& t, Var z) const {
  const int C = t.val(z).c;
  if (C != channels) throw std::invalid_argument("factorized prior: channel mismatch");
  Var zero = t.leaf(Tensor(channels, 1, 1));
  auto cdf = [&](Var x) {
    std::array<Var, 3> t1;
    for (int k = 0; k < 3; ++k) {
      Var u = ops::modulate(t, x, ops::softplus(t, t.param(*h1[k])), t.param(*b1[k]));
      t1[k] = ops::add(
          t, u, ops::modulate(t, ops::tanh_(t, u), ops::tanh_(t, t.param(*a1[k])), zero));
    }
    std::array<Var, 3> t2;
    for (int j = 0; j < 3; ++j) {
      Var u = ops::modulate(t, t1[0], ops::softplus(t, t.param(*h2[j][0])), t.param(*b2[j]));
      for (int k = 1; k < 3; ++k)
        u = ops::add(t, u,
                     ops::modulate(t, t1[k], ops::softplus(t, t.param(*h2[j][k])), zero));
      t2[j] = ops::add(
          t, u, ops::modulate(t, ops::tanh_(t, u), ops::tanh_(t, t.param(*a2[j])), zero));
    }
    Var u3 = ops::modulate(t, t2[0], ops::softplus(t, t.param(*h3[0])), t.param(*b3));
    for (int k = 1; k < 3; ++k)
      u3 = ops::add(t, u3, ops::modulate(t, t2[k], ops::softplus(t, t.param(*h3[k])), zero));
    return ops::sigmoid_(t, u3);
  };
  return ops::sub(t, cdf(ops::add_scalar(t, z, 0.5f)), cdf(ops::add_scalar(t, z, -0.5f)));
}

Var FactorizedPrior::rate(Tape& t, Var z, double* bits_out) const {
  return ops::bits_from_prob(t, likelihood(t, z), bits_out);
}

double FactorizedPrior::cdf_scalar(int ch, double x) const {
  auto sp = [](double v) { return v > 20.0 ? v : std::log1p(std::exp(v)); };
  double t1[3], t2[3];
  for (int k = 0; k < 3; ++k) {
    const double u = sp(h1[k]->value.v[ch]) * x + b1[k]->value.v[ch];
    t1[k] = u + std::tanh(a1[k]->value.v[ch]) * std::tanh(u);
  }
  for (int j = 0; j < 3; ++j) {
    double u = b2[j]->value.v[ch];
    for (int k = 0; k < 3; ++k) u += sp(h2[j][k]->value.v[ch]) * t1[k];
    t2[j] = u + std::tanh(a2[j]->value.v[ch]) * std::tanh(u);
  }
  double u3 = b3->value.v[ch];
  for (int k = 0; k < 3; ++k) u3 += sp(h3[k]->value.v[ch]) * t2[k];
  return 1.0 / (1.0 + std::exp(-u3));
}

CdfTable FactorizedPrior::cdf_table(int ch) const {
  std::array<double, kNumBuckets> pmf{};
  double covered = 0.0;
  for (int sym = kSymMin; sym <= kSymMax; ++sym) {
    const double p = cdf_scalar(ch, sym + 0.5) - cdf_scalar(ch, sym - 0.5);
    pmf[sym - kSymMin] = std::max(0.0, p);
    covered += pmf[sym - kSymMin];
  }
  pmf[kEscapeIndex] = std::max(0.0, 1.0 - covered);
  return quantize_pmf(pmf);
}

// ---------------------------------------------------------------------------
// Quantizers shared by the coding helpers.

Var sigma_from_v(Tape& t, Var v) {
  return ops::add_scalar(t, ops::softplus(t, v), 0.01f);
}

namespace {

// Mean-centered straight-through rounding: forward round(y - mu) + mu; the
// gradient is identity in y and exactly zero in mu.
Var quantize_ste(Tape& t, Var y, Var mu) {
  return ops::add(t, ops::round_ste(t, ops::sub(t, y, mu)), mu);
}

// Integer symbols matching quantize_ste's forward, from tensor values.
int32_t symbol_of(float y, float mu) {
  const float d = y - mu;
  return static_cast<int32_t>(std::round(d));
}

}  // namespace

// ---------------------------------------------------------------------------
// Plain mean-scale Gaussian conditional.

GaussianCoderResult gaussian_code(Tape& t, Var y, Var mu, Var v, QuantMode mode, Phase phase,
                                  Rng* noise_rng, RangeEncoder* enc) {
  GaussianCoderResult r;
  Var sigma = sigma_from_v(t, v);
  const bool train = phase == Phase::kTrain;
  if (train && !noise_rng) throw std::invalid_argument("gaussian_code: train needs rng");
  if (enc && train) throw std::invalid_argument("gaussian_code: coder is eval-only");

  if (train && mode == QuantMode::kNoise)
    r.y_hat = y;  // transforms see the continuous latent
  else
    r.y_hat = quantize_ste(t, y, mu);

  Var rate_in = train ? ops::add_noise(t, y, *noise_rng) : r.y_hat;
  r.rate = ops::rate_gaussian(t, rate_in, mu, sigma, nullptr, &r.bits);

  if (enc) {
    const Tensor& yv = t.val(y);
    const Tensor& mv = t.val(mu);
    const Tensor& sv = t.val(sigma);
    for (size_t i = 0; i < yv.size(); ++i)
      enc->encode_int(gaussian_cdf_table(sv.v[i]), symbol_of(yv.v[i], mv.v[i]));
  }
  return r;
}

Var gaussian_decode(Tape& t, Var mu, Var v, RangeDecoder& dec) {
  Var sigma = sigma_from_v(t, v);
  const Tensor& mv = t.val(mu);
  const Tensor& sv = t.val(sigma);
  Tensor rounded(mv.c, mv.h, mv.w);
  for (size_t i = 0; i < mv.size(); ++i)
    rounded.v[i] = static_cast<float>(dec.decode_int(gaussian_cdf_table(sv.v[i])));
  // y_hat = round(y - mu) + mu, reassembled decoder-side.
  return ops::add(t, t.leaf(std::move(rounded)), mu);
}

// ---------------------------------------------------------------------------
// Factorized-coded hyper latent.

FactorizedCodeResult factorized_code(Tape& t, const FactorizedPrior& prior, Var z,
                                     QuantMode mode, Phase phase, Rng* noise_rng,
                                     RangeEncoder* enc) {
  FactorizedCodeResult r;
  const bool train = phase == Phase::kTrain;
  if (train && !noise_rng) throw std::invalid_argument("factorized_code: train needs rng");
  if (enc && train) throw std::invalid_argument("factorized_code: coder is eval-only");

  if (train && mode == QuantMode::kNoise)
    r.z_hat = z;
  else
    r.z_hat = ops::round_ste(t, z);

  Var rate_in = train ? ops::add_noise(t, z, *noise_rng) : r.z_hat;
  r.rate = prior.rate(t, rate_in, &r.bits);

  if (enc) {
    const Tensor& zv = t.val(z);
    const int plane = zv.h * zv.w;
    for (int c = 0; c < zv.c; ++c) {
      const CdfTable table = prior.cdf_table(c);
      for (int i = 0; i < plane; ++i) {
        const float val = zv.v[static_cast<size_t>(c) * plane + i];
        enc->encode_int(table, static_cast<int32_t>(std::round(val)));
      }
    }
  }
  return r;
}

Var factorized_decode(Tape& t, const FactorizedPrior& prior, int c, int h, int w,
                      RangeDecoder& dec) {
  Tensor z(c, h, w);
  const int plane = h * w;
  for (int ch = 0; ch < c; ++ch) {
    const CdfTable table = prior.cdf_table(ch);
    for (int i = 0; i < plane; ++i)
      z.v[static_cast<size_t>(ch) * plane + i] = static_cast<float>(dec.decode_int(table));
  }
  return t.leaf(std::move(z));
}

// ---------------------------------------------------------------------------
// Quadtree partition.

int quadtree_step_of(int C, int c, int y, int x) {
  const int chunk = c / (C / 4);
  const int label = 2 * (y % 2) + (x % 2);
  return (chunk + label) % 4;
}

namespace {
Tensor quadtree_mask(int C, int h, int w, int s, bool below) {
  if (C % 4 != 0) throw std::invalid_argument("quadtree: C % 4 != 0");
  Tensor m(C, h, w);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int step = quadtree_step_of(C, c, y, x);
        m.at(c, y, x) = (below ? step < s : step == s) ? 1.f : 0.f;
      }
  return m;
}
}  // namespace

Tensor quadtree_mask_below(int C, int h, int w, int s) {
  return quadtree_mask(C, h, w, s, true);
}
Tensor quadtree_mask_step(int C, int h, int w, int s) {
  return quadtree_mask(C, h, w, s, false);
}

QuadtreeCoder::QuadtreeCoder(ParamStore& ps, const std::string& prefix, int latent_ch_,
                             int hidden_, int tctx_ch_, Rng& rng)
    : latent_ch(latent_ch_), tctx_ch(tctx_ch_), hidden(hidden_) {
  if (latent_ch % 4 != 0) throw std::invalid_argument("quadtree: latent_ch % 4 != 0");
  const int in_ch = latent_ch + 2 * latent_ch + tctx_ch;
  for (int s = 0; s < 4; ++s) {
    const std::string base = prefix + "s" + std::to_string(s) + ".";
    steps[s].c0 = Conv2d(ps, base + "c0", in_ch, hidden, 3, 1, false, rng);
    steps[s].c1 = Conv2d(ps, base + "c1", hidden, hidden, 3, 1, false, rng);
    steps[s].c2 = Conv2d(ps, base + "c2", hidden, 2 * latent_ch, 1, 1, true, rng);
  }
}

namespace {

struct StepParams {
  Var mu, sigma;
};

StepParams quadtree_step_params(Tape& t, const QuadtreeCoder::StepNet& net, Var y_ctx,
                                Var mu_base, Var v_base, const Var* tctx, int latent_ch) {
  std::vector<Var> in = {y_ctx, mu_base, v_base};
  if (tctx) in.push_back(*tctx);
  Var h = ops::leaky_relu(t, net.c0(t, ops::concat_c(t, in)));
  h = ops::leaky_relu(t, net.c1(t, h));
  Var delta = net.c2(t, h);
  Var mu = ops::add(t, mu_base, ops::slice_c(t, delta, 0, latent_ch));
  Var v = ops::add(t, v_base, ops::slice_c(t, delta, latent_ch, latent_ch));
  return {mu, sigma_from_v(t, v)};
}

}  // namespace

QuadtreeCoder::Result QuadtreeCoder::apply(Tape& t, Var y, Var mu_base, Var v_base,
                                           const Var* tctx, QuantMode mode, Phase phase,
                                           Rng* noise_rng, RangeEncoder* enc) const {
  const int C = t.val(y).c, h0 = t.val(y).h, w0 = t.val(y).w;
  if (C != latent_ch) throw std::invalid_argument("quadtree apply: channel mismatch");
  const bool train = phase == Phase::kTrain;
  if (train && !noise_rng) throw std::invalid_argument("quadtree apply: train needs rng");
  if (enc && train) throw std::invalid_argument("quadtree apply: coder is eval-only");

  // Odd spatial sizes are zero-padded to even and cropped after the merge.
  const int he = (h0 + 1) & ~1, we = (w0 + 1) & ~1;
  const bool padded = he != h0 || we != w0;
  Var yp = padded ? ops::pad_spatial(t, y, he, we) : y;
  Var mup = padded ? ops::pad_spatial(t, mu_base, he, we) : mu_base;
  Var vp = padded ? ops::pad_spatial(t, v_base, he, we) : v_base;
  Var tctxp{};
  if (tctx) tctxp = padded ? ops::pad_spatial(t, *tctx, he, we) : *tctx;

  Var noisy{};
  if (train) noisy = ops::add_noise(t, yp, *noise_rng);

  Result r;
  Var acc = t.leaf(Tensor(C, he, we));  // decoded-so-far, future steps zero
  Var rate_total{};
  for (int s = 0; s < 4; ++s) {
    Var ctx = ops::mul_const(t, acc, quadtree_mask_below(C, he, we, s));
    StepParams p = quadtree_step_params(t, steps[s], ctx, mup, vp,
                                        tctx ? &tctxp : nullptr, latent_ch);
    const Tensor mask_s = quadtree_mask_step(C, he, we, s);

    Var q = (train && mode == QuantMode::kNoise) ? yp : quantize_ste(t, yp, p.mu);
    acc = ops::add(t, acc, ops::mul_const(t, q, mask_s));

    Var rate_in = train ? noisy : q;
    double step_bits = 0;
    Var rate_s = ops::rate_gaussian(t, rate_in, p.mu, p.sigma, &mask_s, &step_bits);
    r.bits += step_bits;
    rate_total = s == 0 ? rate_s : ops::add(t, rate_total, rate_s);

    if (enc) {
      const Tensor& yv = t.val(yp);
      const Tensor& mv = t.val(p.mu);
      const Tensor& sv = t.val(p.sigma);
      for (size_t i = 0; i < yv.size(); ++i)
        if (mask_s.v[i] != 0.f)
          enc->encode_int(gaussian_cdf_table(sv.v[i]), symbol_of(yv.v[i], mv.v[i]));
    }
  }
  r.y_hat = padded ? ops::crop_spatial(t, acc, h0, w0) : acc;
  r.rate = rate_total;
  return r;
}

Var QuadtreeCoder::decode(Tape& t, Var mu_base, Var v_base, const Var* tctx,
                          RangeDecoder& dec) const {
  const int C = t.val(mu_base).c, h0 = t.val(mu_base).h, w0 = t.val(mu_base).w;
  if (C != latent_ch) throw std::invalid_argument("quadtree decode: channel mismatch");
  const int he = (h0 + 1) & ~1, we = (w0 + 1) & ~1;
  const bool padded = he != h0 || we != w0;
  Var mup = padded ? ops::pad_spatial(t, mu_base, he, we) : mu_base;
  Var vp = padded ? ops::pad_spatial(t, v_base, he, we) : v_base;
  Var tctxp{};
  if (tctx) tctxp = padded ? ops::pad_spatial(t, *tctx, he, we) : *tctx;

  Var acc = t.leaf(Tensor(C, he, we));
  for (int s = 0; s < 4; ++s) {
    Var ctx = ops::mul_const(t, acc, quadtree_mask_below(C, he, we, s));
    StepParams p = quadtree_step_params(t, steps[s], ctx, mup, vp,
                                        tctx ? &tctxp : nullptr, latent_ch);
    const Tensor mask_s = quadtree_mask_step(C, he, we, s);
    const Tensor& mv = t.val(p.mu);
    const Tensor& sv = t.val(p.sigma);
    // q = round(y - mu) + mu at coded positions, zero elsewhere; identical
    // float expression to the encoder's quantize_ste + mask merge.
    Tensor q(C, he, we);
    for (size_t i = 0; i < q.size(); ++i)
      if (mask_s.v[i] != 0.f)
        q.v[i] = static_cast<float>(dec.decode_int(gaussian_cdf_table(sv.v[i]))) + mv.v[i];
    acc = ops::add(t, acc, t.leaf(std::move(q)));
  }
  return padded ? ops::crop_spatial(t, acc, h0, w0) : acc;
}

// ---------------------------------------------------------------------------
// Bitstream container.

namespace {
void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(v & 0xFF);
  out.push_back(v >> 8);
}
void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}
uint16_t get_u16(const std::vector<uint8_t>& b, size_t& p) {
  const uint16_t v = static_cast<uint16_t>(b[p] | (b[p + 1] << 8));
  p += 2;
  return v;
}
uint32_t get_u32(const std::vector<uint8_t>& b, size_t& p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[p + i]) << (8 * i);
  p += 4;
  return v;
}
}  // namespace

std::vector<uint8_t> Bitstream::serialize() const {
  std::vector<uint8_t> out;
  out.insert(out.end(), kBitstreamMagic, kBitstreamMagic + 4);
  out.push_back(version);
  put_u16(out, width);
  put_u16(out, height);
  out.push_back(gop);
  out.push_back(lambda_idx);
  put_u16(out, frame_count);
  for (const Chunk& c : chunks) {
    out.push_back(static_cast<uint8_t>(c.type));
    put_u32(out, static_cast<uint32_t>(c.payload.size()));
    out.insert(out.end(), c.payload.begin(), c.payload.end());
  }
  return out;
}

Bitstream Bitstream::parse(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 13) throw std::runtime_error("bitstream: truncated header");
  if (std::memcmp(bytes.data(), kBitstreamMagic, 4) != 0)
    throw std::runtime_error("bitstream: bad magic");
  size_t p = 4;
  Bitstream bs;
  bs.version = bytes[p++];
  if (bs.version != kBitstreamVersion)
    throw std::runtime_error("bitstream: unsupported version " + std::to_string(bs.version));
  bs.width = get_u16(bytes, p);
  bs.height = get_u16(bytes, p);
  bs.gop = bytes[p++];
  bs.lambda_idx = bytes[p++];
  bs.frame_count = get_u16(bytes, p);
  while (p < bytes.size()) {
    if (p + 5 > bytes.size()) throw std::runtime_error("bitstream: truncated chunk header");
    const uint8_t type = bytes[p++];
    if (type > 2) throw std::runtime_error("bitstream: unknown chunk type");
    const uint32_t len = get_u32(bytes, p);
    if (p + len > bytes.size()) throw std::runtime_error("bitstream: truncated chunk payload");
    Chunk c;
    c.type = static_cast<ChunkType>(type);
    c.payload.assign(bytes.begin() + p, bytes.begin() + p + len);
    p += len;
    bs.chunks.push_back(std::move(c));
  }
  return bs;
}

int lambda_to_index(int lambda) {
  for (size_t i = 0; i < kLambdaLevels.size(); ++i)
    if (kLambdaLevels[i] == lambda) return static_cast<int>(i);
  throw std::invalid_argument("unsupported lambda " + std::to_string(lambda));
}

std::vector<uint8_t> pack_unit(const std::vector<uint8_t>& z_bytes,
                               const std::vector<uint8_t>& y_bytes) {
  std::vector<uint8_t> out;
  put_u32(out, static_cast<uint32_t>(z_bytes.size()));
  out.insert(out.end(), z_bytes.begin(), z_bytes.end());
  put_u32(out, static_cast<uint32_t>(y_bytes.size()));
  out.insert(out.end(), y_bytes.begin(), y_bytes.end());
  return out;
}

void unpack_unit(const std::vector<uint8_t>& payload, std::vector<uint8_t>* z_bytes,
                 std::vector<uint8_t>* y_bytes) {
  size_t p = 0;
  auto take = [&](std::vector<uint8_t>* dst) {
    if (p + 4 > payload.size()) throw std::runtime_error("coded unit: truncated length");
    const uint32_t len = get_u32(payload, p);
    if (p + len > payload.size()) throw std::runtime_error("coded unit: truncated stream");
    dst->assign(payload.begin() + p, payload.begin() + p + len);
    p += len;
  };
  take(z_bytes);
  take(y_bytes);
}

}  // namespace cvpp
