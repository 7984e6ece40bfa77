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

#ifndef CVPP_PIPELINE_H_
#define CVPP_PIPELINE_H_

#include <cstdint>
#include <vector>

#include "cvpp/entropy.h"
#include "cvpp/frames.h"
#include "cvpp/model.h"

namespace cvpp {

// GOP clock: frame 1 is intra, frame 2 codes its motion unconditionally
// (no flow history yet), frames >= 3 run the full conditional path with
// flow extrapolation.

// Decoded state threaded between frames, as graph vars so that one-tape
// (end-to-end) training backpropagates across frame boundaries. Most recent
// entry first.
struct FrameRefs {
  std::vector<Var> frames;  // up to 3 decoded frames
  std::vector<Var> flows;   // up to 2 decoded flows
  Var prop{};               // accumulated flow since the intra frame

  void advance_intra(Var x_hat);
  void advance_inter(Var x_hat, Var f_hat, Var prop_new);
};

struct CodeOptions {
  QuantMode mode = QuantMode::kRoundSte;
  Phase phase = Phase::kEval;
  Rng* noise_rng = nullptr;  // required in training
  bool emit_bytes = false;   // eval only
  bool modulation = true;    // honored when the model has modulation at all
};

struct FrameResult {
  ChunkType type = ChunkType::kIFrame;
  Var x_hat;  // decoded frame, clamped to [0, 1]
  Var f_hat{};  // decoded flow (P-frames)
  Var prop{};   // updated accumulated flow (P-frames)
  Var rate;     // total frame bits (graph scalar)
  Var dist;     // mse(x, x_hat) (graph scalar)
  double bits = 0.0;
  double mse = 0.0;
  // Residual-slot pairs for the flow-consistency regularizer (conditional
  // codecs only; unset on intra and first-P motion).
  Var x2_motion{}, cond_motion{};
  Var x2_inter{}, cond_inter{};
  std::vector<uint8_t> motion_payload, inter_payload;  // P-frames
  std::vector<uint8_t> intra_payload;                  // I-frames
};

// Codes one frame at GOP time t (1 = intra). Does not mutate `refs`; the
// caller advances them (training may detach first).
FrameResult encode_frame(const VideoCodecModel& model, Tape& t, Var x, int gop_t,
                         const FrameRefs& refs, const CodeOptions& opts);

// Decoder-side mirror. For intra frames, `intra_payload` is used and (h, w)
// give the padded size; P-frames take the two payloads and infer the size
// from the references. Returns the same fields as the encoder, bit for bit.
struct DecodedFrame {
  Var x_hat;
  Var f_hat{};
  Var prop{};
};
DecodedFrame decode_frame(const VideoCodecModel& model, Tape& t, int gop_t,
                          const FrameRefs& refs, const std::vector<uint8_t>& intra_payload,
                          const std::vector<uint8_t>& motion_payload,
                          const std::vector<uint8_t>& inter_payload, int h, int w,
                          bool modulation);

// ---------------------------------------------------------------------------
// Sequence-level coding.

struct SequenceStats {
  struct PerFrame {
    int index = 0;
    bool intra = false;
    double bits = 0.0;
    double mse = 0.0;   // on original (unpadded) pixels
    double psnr = 0.0;  // +inf when lossless
  };
  std::vector<PerFrame> frames;
  int width = 0, height = 0;  // original pixels
  double total_bits = 0.0;
  double bpp = 0.0;       // total bits / (frames * width * height)
  double avg_psnr = 0.0;  // mean of per-frame PSNR
};

struct EncodeResult {
  Bitstream bitstream;  // chunks are empty in estimation-only mode
  SequenceStats stats;
  std::vector<Frame> recons;  // encoder-side decoded frames, cropped
};

// Encodes a clip with the given GOP size and lambda level. real_coding
// writes actual range-coded chunks; otherwise rates are estimates and the
// bitstream carries only the header.
EncodeResult encode_sequence(const VideoCodecModel& model, const Clip& clip, int gop,
                             int lambda, bool real_coding, bool modulation = true);

std::vector<Frame> decode_sequence(const VideoCodecModel& model, const Bitstream& bs,
                                   bool modulation = true);

nlohmann::json stats_to_json(const SequenceStats& stats);

}  // namespace cvpp

#endif  // CVPP_PIPELINE_H_
