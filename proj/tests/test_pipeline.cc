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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "cvpp/ops.h"
#include "cvpp/pipeline.h"
#include "doctest.h"
#include "test_util.h"

using namespace cvpp;

namespace {

// A smooth translating texture: sinusoid mixture shifted by (dx, dy) per
// frame, so flow estimation and conditional coding both have signal.
Tensor texture_frame(int c, int h, int w, float shift_x, float shift_y) {
  Tensor t(c, h, w);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float u = (x + shift_x) * 0.21f + ch * 0.7f;
        float v = (y + shift_y) * 0.17f - ch * 0.3f;
        t.at(ch, y, x) = 0.5f + 0.25f * std::sin(u) * std::cos(v) +
                         0.15f * std::sin(0.5f * u + 0.9f * v);
      }
  return t;
}

Clip make_clip(int n, int h, int w, float dx = 1.5f, float dy = -0.5f) {
  Clip clip;
  for (int i = 0; i < n; ++i)
    clip.emplace_back(texture_frame(3, h, w, dx * i, dy * i));
  return clip;
}

bool same_tensor(const Tensor& a, const Tensor& b) {
  if (a.c != b.c || a.h != b.h || a.w != b.w) return false;
  for (size_t i = 0; i < a.v.size(); ++i)
    if (a.v[i] != b.v[i]) return false;
  return true;
}

VideoCodecModel& shared_model() {
  static VideoCodecModel m(ModelConfig::small(), 0x11);
  return m;
}

// A lightly randomized copy so latents are nonzero and rates nontrivial.
VideoCodecModel& shared_trained_model() {
  static VideoCodecModel* m = [] {
    auto* p = new VideoCodecModel(ModelConfig::small(), 0x12);
    Rng rng(0xabc);
    p->ps.randomize(rng, 0.02f);
    return p;
  }();
  return *m;
}

}  // namespace

TEST_CASE("closed loop: decoder reproduces encoder reconstructions bitwise") {
  VideoCodecModel& m = shared_trained_model();
  Clip clip = make_clip(8, 64, 64);
  EncodeResult enc = encode_sequence(m, clip, 4, 1024, true);

  // 2 GOPs of 4: two intra chunks, six motion/inter pairs.
  REQUIRE(enc.bitstream.chunks.size() == 2 + 6 * 2);
  CHECK(enc.bitstream.chunks[0].type == ChunkType::kIFrame);
  CHECK(enc.bitstream.chunks[1].type == ChunkType::kMotion);
  CHECK(enc.bitstream.chunks[2].type == ChunkType::kInter);
  CHECK(enc.bitstream.frame_count == 8);

  // Serialize/parse then decode: byte-level container round trip included.
  Bitstream parsed = Bitstream::parse(enc.bitstream.serialize());
  std::vector<Frame> dec = decode_sequence(m, parsed);
  REQUIRE(dec.size() == 8);
  for (size_t i = 0; i < dec.size(); ++i) {
    INFO("frame " << i);
    CHECK(same_tensor(dec[i].data, enc.recons[i].data));
  }

  // Reported bits equal the container size minus the 13-byte header.
  double total = 0.0;
  for (const auto& pf : enc.stats.frames) total += pf.bits;
  CHECK(total == enc.bitstream.serialize().size() * 8.0 - 13 * 8);
  CHECK(enc.stats.total_bits == total);

  // Reconstruction distortion is sane (codec is randomized, not trained, so
  // only a weak bound), and bpp is positive.
  for (const auto& pf : enc.stats.frames) CHECK(pf.psnr > 3.0);
  CHECK(enc.stats.bpp > 0.0);
}

TEST_CASE("closed loop with odd frame sizes pads and crops transparently") {
  VideoCodecModel& m = shared_trained_model();
  Clip clip;
  for (int i = 0; i < 3; ++i) {
    Tensor t = texture_frame(3, 50, 34, 1.5f * i, -0.5f * i);
    clip.emplace_back(std::move(t));
  }
  EncodeResult enc = encode_sequence(m, clip, 4, 256, true);
  CHECK(enc.bitstream.width == 34);
  CHECK(enc.bitstream.height == 50);
  std::vector<Frame> dec = decode_sequence(m, Bitstream::parse(enc.bitstream.serialize()));
  REQUIRE(dec.size() == 3);
  for (size_t i = 0; i < dec.size(); ++i) {
    CHECK(dec[i].data.h == 50);
    CHECK(dec[i].data.w == 34);
    CHECK(same_tensor(dec[i].data, enc.recons[i].data));
  }
}

TEST_CASE("gop clock emits intra frames on schedule") {
  VideoCodecModel& m = shared_trained_model();
  Clip clip = make_clip(5, 64, 64);
  EncodeResult enc = encode_sequence(m, clip, 2, 512, true);
  // Frames 0,2,4 intra; 1,3 conditional.
  std::vector<ChunkType> want = {ChunkType::kIFrame, ChunkType::kMotion, ChunkType::kInter,
                                 ChunkType::kIFrame, ChunkType::kMotion, ChunkType::kInter,
                                 ChunkType::kIFrame};
  REQUIRE(enc.bitstream.chunks.size() == want.size());
  for (size_t i = 0; i < want.size(); ++i) CHECK(enc.bitstream.chunks[i].type == want[i]);
  CHECK(enc.stats.frames[0].intra);
  CHECK_FALSE(enc.stats.frames[1].intra);
  CHECK(enc.stats.frames[2].intra);

  // gop=1: every frame intra, decodes bitwise.
  EncodeResult all_i = encode_sequence(m, make_clip(3, 64, 64), 1, 512, true);
  REQUIRE(all_i.bitstream.chunks.size() == 3);
  for (const auto& ch : all_i.bitstream.chunks) CHECK(ch.type == ChunkType::kIFrame);
  std::vector<Frame> dec = decode_sequence(m, all_i.bitstream);
  for (size_t i = 0; i < dec.size(); ++i)
    CHECK(same_tensor(dec[i].data, all_i.recons[i].data));
}

TEST_CASE("estimation mode matches real coding up to coder overhead") {
  VideoCodecModel& m = shared_trained_model();
  Clip clip = make_clip(4, 64, 64);
  EncodeResult real = encode_sequence(m, clip, 4, 2048, true);
  EncodeResult est = encode_sequence(m, clip, 4, 2048, false);

  CHECK(est.bitstream.chunks.empty());
  REQUIRE(est.stats.frames.size() == real.stats.frames.size());
  // Identical reconstructions: estimation changes only the rate accounting.
  for (size_t i = 0; i < est.recons.size(); ++i)
    CHECK(same_tensor(est.recons[i].data, real.recons[i].data));
  // One intra frame (2 coded planes) + 3 conditional frames (4 each): the
  // coder's per-plane overhead bound plus framing bytes.
  double slack = 0.01 * est.stats.total_bits + 8.0 * (64.0 * 14 + 5 * 7 + 8 * 7);
  CHECK(std::fabs(est.stats.total_bits - real.stats.total_bits) <= slack);
}

TEST_CASE("fresh modulation heads are a bitwise no-op on the stream") {
  VideoCodecModel& m = shared_model();  // identity heads
  Clip clip = make_clip(3, 64, 64);
  EncodeResult on = encode_sequence(m, clip, 4, 1024, true, true);
  EncodeResult off = encode_sequence(m, clip, 4, 1024, true, false);
  REQUIRE(on.bitstream.chunks.size() == off.bitstream.chunks.size());
  for (size_t i = 0; i < on.bitstream.chunks.size(); ++i)
    CHECK(on.bitstream.chunks[i].payload == off.bitstream.chunks[i].payload);
  for (size_t i = 0; i < on.recons.size(); ++i)
    CHECK(same_tensor(on.recons[i].data, off.recons[i].data));

  // Trained (randomized) heads actually change the coding.
  VideoCodecModel& tm = shared_trained_model();
  EncodeResult ton = encode_sequence(tm, clip, 4, 1024, true, true);
  EncodeResult toff = encode_sequence(tm, clip, 4, 1024, true, false);
  bool any_diff = false;
  for (size_t i = 0; i < ton.recons.size(); ++i)
    if (!same_tensor(ton.recons[i].data, toff.recons[i].data)) any_diff = true;
  if (ton.stats.total_bits != toff.stats.total_bits) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("one persistent tape reproduces the per-frame-tape pipeline") {
  VideoCodecModel& m = shared_trained_model();
  Clip clip = make_clip(4, 64, 64);
  EncodeResult ref = encode_sequence(m, clip, 4, 1024, false);

  // Same frames coded on a single recording tape with var-threaded refs,
  // the way end-to-end training walks a clip.
  Tape tape(true);
  FrameRefs refs;
  CodeOptions opts;
  opts.mode = QuantMode::kRoundSte;
  opts.phase = Phase::kEval;
  opts.emit_bytes = false;
  for (size_t i = 0; i < clip.size(); ++i) {
    Var x = tape.leaf(clip[i].data);
    FrameResult r = encode_frame(m, tape, x, static_cast<int>(i) + 1, refs, opts);
    CHECK(same_tensor(tape.val(r.x_hat), ref.recons[i].data));
    if (i == 0)
      refs.advance_intra(r.x_hat);
    else
      refs.advance_inter(r.x_hat, r.f_hat, r.prop);
  }
  CHECK(refs.frames.size() == 3);
  CHECK(refs.flows.size() == 2);
}

TEST_CASE("reference window holds three frames and two flows") {
  FrameRefs r;
  Tape t;
  auto v = [&](float x) {
    Tensor one(1, 1, 1);
    one.v[0] = x;
    return t.leaf(one);
  };
  r.advance_intra(v(0));
  CHECK(r.frames.size() == 1);
  CHECK(r.flows.empty());
  CHECK_FALSE(r.prop.ok());
  for (int i = 1; i <= 4; ++i) r.advance_inter(v(i), v(10 + i), v(20 + i));
  REQUIRE(r.frames.size() == 3);
  REQUIRE(r.flows.size() == 2);
  // Most recent first.
  CHECK(t.val(r.frames[0]).v[0] == 4.0f);
  CHECK(t.val(r.frames[1]).v[0] == 3.0f);
  CHECK(t.val(r.frames[2]).v[0] == 2.0f);
  CHECK(t.val(r.flows[0]).v[0] == 14.0f);
  CHECK(t.val(r.flows[1]).v[0] == 13.0f);
  CHECK(t.val(r.prop).v[0] == 24.0f);
  r.advance_intra(v(9));
  CHECK(r.frames.size() == 1);
  CHECK(r.flows.empty());
  CHECK_FALSE(r.prop.ok());
}

TEST_CASE("pipeline input validation") {
  VideoCodecModel& m = shared_model();
  CHECK_THROWS_AS(encode_sequence(m, {}, 4, 1024, false), std::invalid_argument);
  Clip clip = make_clip(2, 64, 64);
  CHECK_THROWS_AS(encode_sequence(m, clip, 0, 1024, false), std::invalid_argument);
  CHECK_THROWS_AS(encode_sequence(m, clip, 256, 1024, false), std::invalid_argument);
  CHECK_THROWS_AS(encode_sequence(m, clip, 4, 999, false), std::invalid_argument);
  Clip mixed = clip;
  mixed.push_back(Frame(texture_frame(3, 32, 64, 0, 0)));
  CHECK_THROWS_AS(encode_sequence(m, mixed, 4, 1024, false), std::invalid_argument);

  Tape t;
  // Unpadded frame straight into the frame coder.
  Var bad = t.leaf(texture_frame(3, 50, 34, 0, 0));
  CHECK_THROWS_AS(encode_frame(m, t, bad, 1, FrameRefs{}, CodeOptions{}),
                  std::invalid_argument);
  // Conditional frame with no reference.
  Var ok = t.leaf(texture_frame(3, 64, 64, 0, 0));
  CHECK_THROWS_AS(encode_frame(m, t, ok, 2, FrameRefs{}, CodeOptions{}),
                  std::invalid_argument);
}

TEST_CASE("malformed chunk layouts are rejected at decode") {
  VideoCodecModel& m = shared_trained_model();
  Clip clip = make_clip(3, 64, 64);
  EncodeResult enc = encode_sequence(m, clip, 4, 1024, true);

  Bitstream bad = enc.bitstream;
  bad.gop = 0;
  CHECK_THROWS_WITH_AS(decode_sequence(m, bad), "bitstream: bad gop size", std::runtime_error);

  bad = enc.bitstream;
  bad.chunks[0].type = ChunkType::kMotion;  // intra slot holds a motion chunk
  CHECK_THROWS_WITH_AS(decode_sequence(m, bad), "bitstream: expected an intra chunk",
                       std::runtime_error);

  bad = enc.bitstream;
  std::swap(bad.chunks[1], bad.chunks[2]);  // pair order flipped
  CHECK_THROWS_WITH_AS(decode_sequence(m, bad), "bitstream: expected a motion/inter chunk pair",
                       std::runtime_error);

  bad = enc.bitstream;
  bad.chunks.pop_back();  // inter half missing
  CHECK_THROWS_AS(decode_sequence(m, bad), std::runtime_error);

  bad = enc.bitstream;
  bad.frame_count = 2;  // chunks left over
  CHECK_THROWS_WITH_AS(decode_sequence(m, bad), "bitstream: trailing chunks",
                       std::runtime_error);

  bad = enc.bitstream;
  bad.frame_count = 0;
  bad.chunks.clear();
  CHECK_THROWS_WITH_AS(decode_sequence(m, bad), "bitstream: no frames", std::runtime_error);

  // Estimation-mode stream: header only, so decoding must fail, not crash.
  EncodeResult est = encode_sequence(m, clip, 4, 1024, false);
  CHECK_THROWS_AS(decode_sequence(m, est.bitstream), std::runtime_error);
}

TEST_CASE("stats serialize to json with inf psnr spelled out") {
  SequenceStats s;
  s.width = 8;
  s.height = 4;
  SequenceStats::PerFrame pf;
  pf.index = 0;
  pf.intra = true;
  pf.bits = 96;
  pf.mse = 0.0;
  pf.psnr = std::numeric_limits<double>::infinity();
  s.frames.push_back(pf);
  s.total_bits = 96;
  s.bpp = 96.0 / 32.0;
  s.avg_psnr = pf.psnr;

  nlohmann::json j = stats_to_json(s);
  CHECK(j["width"] == 8);
  CHECK(j["frame_count"] == 1);
  CHECK(j["frames"][0]["psnr"] == "inf");
  CHECK(j["frames"][0]["bits"] == 96.0);
  CHECK(j["frames"][0]["bpp"] == doctest::Approx(3.0));
  CHECK(j["avg_psnr"] == "inf");
  CHECK(j["bpp"] == doctest::Approx(3.0));

  // Finite values stay numeric.
  s.frames[0].psnr = 30.0;
  s.avg_psnr = 30.0;
  j = stats_to_json(s);
  CHECK(j["frames"][0]["psnr"] == doctest::Approx(30.0));
  CHECK(j["avg_psnr"] == doctest::Approx(30.0));
}

TEST_CASE("ablated models still close the loop") {
  ModelConfig plain = ModelConfig::small();
  plain.use_mcnet = false;
  plain.use_quadtree = false;
  plain.use_feature_mod = false;
  VideoCodecModel m(plain, 0x21);
  Rng rng(77);
  m.ps.randomize(rng, 0.02f);

  Clip clip = make_clip(4, 64, 64);
  EncodeResult enc = encode_sequence(m, clip, 4, 512, true);
  std::vector<Frame> dec = decode_sequence(m, Bitstream::parse(enc.bitstream.serialize()));
  REQUIRE(dec.size() == 4);
  for (size_t i = 0; i < dec.size(); ++i)
    CHECK(same_tensor(dec[i].data, enc.recons[i].data));
}
