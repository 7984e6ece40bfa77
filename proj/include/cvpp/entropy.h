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

#ifndef CVPP_ENTROPY_H_
#define CVPP_ENTROPY_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cvpp/nn.h"
#include "cvpp/tensor.h"

namespace cvpp {

// ---------------------------------------------------------------------------
// Quantization / phase switches shared by every codec transform.

enum class QuantMode { kNoise, kRoundSte };
enum class Phase { kTrain, kEval };

// ---------------------------------------------------------------------------
// Range coder (carry-less, 32-bit, byte output). Frequencies live on a
// 16-bit scale: cumulative totals are exactly 1 << 16.

constexpr uint32_t kFreqScaleBits = 16;
constexpr uint32_t kFreqScale = 1u << kFreqScaleBits;

// Symbol alphabet for latent residuals: integers in [-64, 64] plus a final
// escape bucket that switches to 4 raw bytes.
constexpr int kSymMin = -64;
constexpr int kSymMax = 64;
constexpr int kEscapeIndex = kSymMax - kSymMin + 1;  // 129
constexpr int kNumBuckets = kEscapeIndex + 1;        // 130

// Cumulative frequency table: cum[0] = 0, cum[kNumBuckets] = kFreqScale,
// strictly increasing (every bucket gets >= 1).
struct CdfTable {
  std::array<uint32_t, kNumBuckets + 1> cum{};
};

// Discretized N(0, sigma^2) over the bucket alphabet (mean is removed by the
// caller before symbol mapping).
CdfTable gaussian_cdf_table(double sigma);

class RangeEncoder {
 public:
  void encode(uint32_t cum_lo, uint32_t freq);  // 16-bit total scale
  void encode_symbol(const CdfTable& table, int bucket);
  void encode_raw_byte(uint8_t b);
  // Integer with escape-to-raw for out-of-alphabet values.
  void encode_int(const CdfTable& table, int32_t value);
  std::vector<uint8_t> finish();

 private:
  void normalize();
  uint32_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(const std::vector<uint8_t>& bytes);
  int decode_symbol(const CdfTable& table);
  uint8_t decode_raw_byte();
  int32_t decode_int(const CdfTable& table);

 private:
  uint32_t decode_freq();
  void decode_update(uint32_t cum_lo, uint32_t freq);
  void normalize();
  uint8_t next_byte();
  const std::vector<uint8_t>& bytes_;
  size_t pos_ = 0;
  uint32_t low_ = 0, range_ = 0xFFFFFFFFu, code_ = 0;
};

// ---------------------------------------------------------------------------
// Factorized prior: per-channel learned monotone CDF (3 hidden units, two
// nonlinear layers), the rate model of the hyper-latent.

struct FactorizedPrior {
  int channels = 0;
  // All parameters are (C,1,1); layer 2 mixes the 3 hidden units through a
  // 3x3 grid of per-channel scales.
  std::array<Parameter*, 3> h1{}, b1{}, a1{};
  std::array<std::array<Parameter*, 3>, 3> h2{};
  std::array<Parameter*, 3> b2{}, a2{};
  std::array<Parameter*, 3> h3{};
  Parameter* b3 = nullptr;

  FactorizedPrior() = default;
  FactorizedPrior(ParamStore& ps, const std::string& prefix, int channels, Rng& rng);

  // Per-element likelihood c(z+0.5) - c(z-0.5) as a graph op.
  Var likelihood(Tape& t, Var z) const;
  // Total bits with the 2^-16 likelihood floor; double total via *bits_out.
  Var rate(Tape& t, Var z, double* bits_out = nullptr) const;

  // Scalar CDF for table building and quadrature tests.
  double cdf_scalar(int ch, double x) const;
  CdfTable cdf_table(int ch) const;
};

// ---------------------------------------------------------------------------
// Quadtree spatial-channel context model over a (C,h,w) latent with C % 4 == 0.
// Elements are decoded in 4 steps: channel chunk c' = c / (C/4), spatial
// label l = 2*(y%2) + (x%2), step = (c' + l) % 4. Step s sees the hyper
// parameters, optional temporal context, and already-decoded elements of
// steps < s (others zeroed).

int quadtree_step_of(int C, int c, int y, int x);
// 1.0 where step(c,y,x) < s (pass s=0 for all-zero, s=4 for all-one).
Tensor quadtree_mask_below(int C, int h, int w, int s);
Tensor quadtree_mask_step(int C, int h, int w, int s);

struct QuadtreeCoder {
  int latent_ch = 0, tctx_ch = 0, hidden = 0;
  // Per step: 3x3 conv -> lrelu -> 3x3 conv -> lrelu -> 1x1 conv (zero-init)
  // emitting (delta_mu, delta_v) added to the hyper-synthesis base.
  struct StepNet {
    Conv2d c0, c1, c2;
  };
  std::array<StepNet, 4> steps;

  QuadtreeCoder() = default;
  QuadtreeCoder(ParamStore& ps, const std::string& prefix, int latent_ch, int hidden,
                int tctx_ch, Rng& rng);

  struct Result {
    Var y_hat;       // what downstream transforms consume
    Var rate;        // scalar bits (graph)
    double bits = 0; // double-precision bits
  };

  // Rate estimation / encoding. `enc` non-null additionally emits actual
  // bytes (Phase must be kEval). `noise_rng` is required in training.
  Result apply(Tape& t, Var y, Var mu_base, Var v_base, const Var* tctx, QuantMode mode,
               Phase phase, Rng* noise_rng, RangeEncoder* enc) const;

  // Decoder-side reconstruction of y_hat from the stream; mirrors apply()'s
  // eval path bit for bit.
  Var decode(Tape& t, Var mu_base, Var v_base, const Var* tctx, RangeDecoder& dec) const;
};

// Plain mean-scale Gaussian conditional (no context model): shared by the
// intra codecs and the quadtree-ablated configuration.
struct GaussianCoderResult {
  Var y_hat;
  Var rate;
  double bits = 0;
};
GaussianCoderResult gaussian_code(Tape& t, Var y, Var mu, Var v, QuantMode mode, Phase phase,
                                  Rng* noise_rng, RangeEncoder* enc);
Var gaussian_decode(Tape& t, Var mu, Var v, RangeDecoder& dec);

// sigma = 0.01 + softplus(v), the parametrization every rate site shares.
Var sigma_from_v(Tape& t, Var v);

// Factorized-coded hyper latent: round + rate (+ optional real coding).
struct FactorizedCodeResult {
  Var z_hat;
  Var rate;
  double bits = 0;
};
FactorizedCodeResult factorized_code(Tape& t, const FactorizedPrior& prior, Var z,
                                     QuantMode mode, Phase phase, Rng* noise_rng,
                                     RangeEncoder* enc);
Var factorized_decode(Tape& t, const FactorizedPrior& prior, int c, int h, int w,
                      RangeDecoder& dec);

// ---------------------------------------------------------------------------
// Bitstream container.

constexpr char kBitstreamMagic[4] = {'C', 'V', 'P', 'P'};
// Version 1 pins the quadtree rotation rule step = (chunk + label) % 4.
constexpr uint8_t kBitstreamVersion = 1;

enum class ChunkType : uint8_t { kIFrame = 0, kMotion = 1, kInter = 2 };

struct Chunk {
  ChunkType type = ChunkType::kIFrame;
  std::vector<uint8_t> payload;
};

struct Bitstream {
  uint8_t version = kBitstreamVersion;
  uint16_t width = 0, height = 0;  // pre-padding pixels
  uint8_t gop = 0;
  uint8_t lambda_idx = 0;  // index into {256, 512, 1024, 2048}
  uint16_t frame_count = 0;
  std::vector<Chunk> chunks;

  std::vector<uint8_t> serialize() const;
  static Bitstream parse(const std::vector<uint8_t>& bytes);
};

constexpr std::array<int, 4> kLambdaLevels = {256, 512, 1024, 2048};
int lambda_to_index(int lambda);  // throws on unknown lambda

// Two length-prefixed streams (hyper z then main y), the payload layout of
// every coded unit.
std::vector<uint8_t> pack_unit(const std::vector<uint8_t>& z_bytes,
                               const std::vector<uint8_t>& y_bytes);
void unpack_unit(const std::vector<uint8_t>& payload, std::vector<uint8_t>* z_bytes,
                 std::vector<uint8_t>* y_bytes);

}  // namespace cvpp

#endif  // CVPP_ENTROPY_H_
