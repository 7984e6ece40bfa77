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

#include "cvpp/pipeline.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cvpp/flow.h"
#include "cvpp/ops.h"

namespace cvpp {

namespace {

// References and flows are left-padded by repeating the oldest entry, so
// the extrapolator runs from frame 3 on with whatever history exists.
Var extrapolated_cond(const VideoCodecModel& m, Tape& t, const FrameRefs& refs) {
  if (refs.frames.empty() || refs.flows.empty())
    throw std::invalid_argument("pipeline: extrapolation without history");
  auto pick = [](const std::vector<Var>& v, int i) {
    return v[std::min<size_t>(i, v.size() - 1)];
  };
  std::array<Var, 3> fr = {pick(refs.frames, 0), pick(refs.frames, 1), pick(refs.frames, 2)};
  std::array<Var, 2> fl = {pick(refs.flows, 0), pick(refs.flows, 1)};
  return m.extrap(t, fr, fl);
}

Var motion_summary(const VideoCodecModel& m, Tape& t, Var prop, bool modulation) {
  if (!m.cfg.use_feature_mod || !modulation) return {};
  return m.mod.summarize(t, prop);
}

// Motion-compensated prediction of the current frame from the newest
// reference and the decoded flow.
Var compensate(const VideoCodecModel& m, Tape& t, Var ref, Var f_hat, Var sigma) {
  if (!m.cfg.use_mcnet) return ops::warp(t, ref, f_hat);
  if (sigma.ok()) {
    auto mods = m.mod.grid_mods(t, sigma);
    return m.mcnet(t, ref, f_hat, &mods);
  }
  return m.mcnet(t, ref, f_hat);
}

void check_padded(const Tensor& x) {
  if (x.h % kCodecStride != 0 || x.w % kCodecStride != 0)
    throw std::invalid_argument("pipeline: frame not padded to the codec stride");
}

double psnr_of_mse(double mse) {
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double tensor_mse(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    double d = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.v.size());
}

}  // namespace

void FrameRefs::advance_intra(Var x_hat) {
  frames.assign(1, x_hat);
  flows.clear();
  prop = Var{};
}

void FrameRefs::advance_inter(Var x_hat, Var f_hat, Var prop_new) {
  frames.insert(frames.begin(), x_hat);
  if (frames.size() > 3) frames.resize(3);
  flows.insert(flows.begin(), f_hat);
  if (flows.size() > 2) flows.resize(2);
  prop = prop_new;
}

FrameResult encode_frame(const VideoCodecModel& model, Tape& t, Var x, int gop_t,
                         const FrameRefs& refs, const CodeOptions& opts) {
  check_padded(t.val(x));
  if (gop_t < 1) throw std::invalid_argument("pipeline: frame clock starts at 1");

  FrameResult r;
  if (gop_t == 1) {
    auto c = model.iframe.code(t, x, opts.mode, opts.phase, opts.noise_rng, opts.emit_bytes);
    r.type = ChunkType::kIFrame;
    r.x_hat = ops::clamp01_ste(t, c.x_hat);
    r.rate = c.rate;
    r.bits = c.bits;
    r.intra_payload = std::move(c.payload);
    r.dist = ops::mse(t, x, r.x_hat, &r.mse);
    return r;
  }

  if (refs.frames.empty())
    throw std::invalid_argument("pipeline: inter frame without a reference");
  Var ref = refs.frames.front();
  Var f = model.flow(t, x, ref);

  Var rate_m, y_m;
  if (gop_t == 2) {
    auto c = model.imotion.code(t, f, opts.mode, opts.phase, opts.noise_rng, opts.emit_bytes);
    r.f_hat = c.x_hat;
    rate_m = c.rate;
    r.bits += c.bits;
    y_m = c.y_hat;
    r.motion_payload = std::move(c.payload);
  } else {
    Var cond = extrapolated_cond(model, t, refs);
    auto c = model.motion.code(t, f, cond, nullptr, opts.mode, opts.phase, opts.noise_rng,
                               opts.emit_bytes, nullptr);
    r.f_hat = c.x_hat;
    rate_m = c.rate;
    r.bits += c.bits;
    y_m = c.y_hat;
    r.motion_payload = std::move(c.payload);
    r.x2_motion = c.x2;
    r.cond_motion = cond;
  }

  PropagatedFlow pstate{refs.prop.ok(), refs.prop};
  update_propagated_flow(t, pstate, r.f_hat, gop_t);
  r.prop = pstate.flow;

  Var sigma = motion_summary(model, t, r.prop, opts.modulation);
  Var x_tilde = compensate(model, t, ref, r.f_hat, sigma);

  CouplingMod cmod;
  const CouplingMod* cmod_ptr = nullptr;
  if (sigma.ok()) {
    cmod = model.mod.coupling_mods(t, sigma);
    cmod_ptr = &cmod;
  }
  const Var* tctx = model.inter.has_tctx ? &y_m : nullptr;
  auto c = model.inter.code(t, x, x_tilde, tctx, opts.mode, opts.phase, opts.noise_rng,
                            opts.emit_bytes, cmod_ptr);
  r.type = ChunkType::kInter;
  r.x_hat = ops::clamp01_ste(t, c.x_hat);
  r.rate = ops::add(t, rate_m, c.rate);
  r.bits += c.bits;
  r.inter_payload = std::move(c.payload);
  r.x2_inter = c.x2;
  r.cond_inter = x_tilde;
  r.dist = ops::mse(t, x, r.x_hat, &r.mse);
  return r;
}

DecodedFrame decode_frame(const VideoCodecModel& model, Tape& t, int gop_t,
                          const FrameRefs& refs, const std::vector<uint8_t>& intra_payload,
                          const std::vector<uint8_t>& motion_payload,
                          const std::vector<uint8_t>& inter_payload, int h, int w,
                          bool modulation) {
  DecodedFrame d;
  if (gop_t == 1) {
    d.x_hat = ops::clamp01_ste(t, model.iframe.decode(t, h, w, intra_payload));
    return d;
  }

  if (refs.frames.empty())
    throw std::invalid_argument("pipeline: inter frame without a reference");
  Var ref = refs.frames.front();

  Var y_m;
  if (gop_t == 2) {
    d.f_hat = model.imotion.decode(t, h, w, motion_payload, &y_m);
  } else {
    Var cond = extrapolated_cond(model, t, refs);
    d.f_hat = model.motion.decode(t, cond, nullptr, motion_payload, nullptr, &y_m);
  }

  PropagatedFlow pstate{refs.prop.ok(), refs.prop};
  update_propagated_flow(t, pstate, d.f_hat, gop_t);
  d.prop = pstate.flow;

  Var sigma = motion_summary(model, t, d.prop, modulation);
  Var x_tilde = compensate(model, t, ref, d.f_hat, sigma);

  CouplingMod cmod;
  const CouplingMod* cmod_ptr = nullptr;
  if (sigma.ok()) {
    cmod = model.mod.coupling_mods(t, sigma);
    cmod_ptr = &cmod;
  }
  const Var* tctx = model.inter.has_tctx ? &y_m : nullptr;
  d.x_hat = ops::clamp01_ste(t, model.inter.decode(t, x_tilde, tctx, inter_payload, cmod_ptr));
  return d;
}

// ---------------------------------------------------------------------------

namespace {

// Plain-tensor session state between per-frame tapes.
struct SessionState {
  std::vector<Tensor> frames, flows;
  Tensor prop;
  bool has_prop = false;

  FrameRefs leaf_into(Tape& t) const {
    FrameRefs r;
    for (const Tensor& f : frames) r.frames.push_back(t.leaf(f));
    for (const Tensor& f : flows) r.flows.push_back(t.leaf(f));
    if (has_prop) r.prop = t.leaf(prop);
    return r;
  }

  void advance_intra(Tensor x_hat) {
    frames.assign(1, std::move(x_hat));
    flows.clear();
    has_prop = false;
  }

  void advance_inter(Tensor x_hat, Tensor f_hat, Tensor prop_new) {
    frames.insert(frames.begin(), std::move(x_hat));
    if (frames.size() > 3) frames.resize(3);
    flows.insert(flows.begin(), std::move(f_hat));
    if (flows.size() > 2) flows.resize(2);
    prop = std::move(prop_new);
    has_prop = true;
  }
};

}  // namespace

EncodeResult encode_sequence(const VideoCodecModel& model, const Clip& clip, int gop,
                             int lambda, bool real_coding, bool modulation) {
  if (clip.empty()) throw std::invalid_argument("encode: empty clip");
  if (gop < 1 || gop > 255) throw std::invalid_argument("encode: gop must be in [1, 255]");
  if (clip.size() > 65535) throw std::invalid_argument("encode: too many frames");
  for (const Frame& f : clip)
    if (f.orig_h != clip[0].orig_h || f.orig_w != clip[0].orig_w)
      throw std::invalid_argument("encode: frames disagree on size");

  EncodeResult out;
  out.bitstream.width = static_cast<uint16_t>(clip[0].orig_w);
  out.bitstream.height = static_cast<uint16_t>(clip[0].orig_h);
  out.bitstream.gop = static_cast<uint8_t>(gop);
  out.bitstream.lambda_idx = lambda_to_index(lambda);
  out.bitstream.frame_count = static_cast<uint16_t>(clip.size());
  out.stats.width = clip[0].orig_w;
  out.stats.height = clip[0].orig_h;

  SessionState st;
  for (size_t i = 0; i < clip.size(); ++i) {
    int gop_t = static_cast<int>(i % gop) + 1;
    Frame padded = pad_to_stride(clip[i]);

    Tape tape(false);
    Var x = tape.leaf(padded.data);
    FrameRefs refs = st.leaf_into(tape);
    CodeOptions opts;
    opts.mode = QuantMode::kRoundSte;
    opts.phase = Phase::kEval;
    opts.emit_bytes = real_coding;
    opts.modulation = modulation;
    FrameResult r = encode_frame(model, tape, x, gop_t, refs, opts);

    // Estimation mode reports graph-estimated bits; real coding reports the
    // actual coded size including the 5-byte chunk framing, so the per-frame
    // bits sum to the file size minus the stream header.
    double frame_bits = r.bits;
    if (real_coding) {
      if (gop_t == 1) {
        frame_bits = 8.0 * (r.intra_payload.size() + 5);
        out.bitstream.chunks.push_back({ChunkType::kIFrame, std::move(r.intra_payload)});
      } else {
        frame_bits = 8.0 * (r.motion_payload.size() + 5 + r.inter_payload.size() + 5);
        out.bitstream.chunks.push_back({ChunkType::kMotion, std::move(r.motion_payload)});
        out.bitstream.chunks.push_back({ChunkType::kInter, std::move(r.inter_payload)});
      }
    }

    Tensor x_hat = tape.val(r.x_hat);
    if (gop_t == 1) {
      st.advance_intra(x_hat);
    } else {
      st.advance_inter(x_hat, tape.val(r.f_hat), tape.val(r.prop));
    }

    Frame recon = crop_to_original(Frame(x_hat, clip[i].orig_h, clip[i].orig_w));
    Frame orig = crop_to_original(clip[i]);
    double mse = tensor_mse(recon.data, orig.data);
    SequenceStats::PerFrame pf;
    pf.index = static_cast<int>(i);
    pf.intra = gop_t == 1;
    pf.bits = frame_bits;
    pf.mse = mse;
    pf.psnr = psnr_of_mse(mse);
    out.stats.frames.push_back(pf);
    out.stats.total_bits += frame_bits;
    out.recons.push_back(std::move(recon));
  }

  double n = static_cast<double>(clip.size());
  out.stats.bpp = out.stats.total_bits / (n * out.stats.width * out.stats.height);
  double acc = 0.0;
  for (const auto& pf : out.stats.frames) acc += pf.psnr;
  out.stats.avg_psnr = acc / n;
  return out;
}

std::vector<Frame> decode_sequence(const VideoCodecModel& model, const Bitstream& bs,
                                   bool modulation) {
  if (bs.gop < 1) throw std::runtime_error("bitstream: bad gop size");
  if (bs.frame_count == 0) throw std::runtime_error("bitstream: no frames");
  int ph = (bs.height + kCodecStride - 1) / kCodecStride * kCodecStride;
  int pw = (bs.width + kCodecStride - 1) / kCodecStride * kCodecStride;

  std::vector<Frame> out;
  SessionState st;
  size_t k = 0;
  for (size_t i = 0; i < bs.frame_count; ++i) {
    int gop_t = static_cast<int>(i % bs.gop) + 1;
    const std::vector<uint8_t>*intra = nullptr, *mo = nullptr, *in = nullptr;
    if (gop_t == 1) {
      if (k >= bs.chunks.size() || bs.chunks[k].type != ChunkType::kIFrame)
        throw std::runtime_error("bitstream: expected an intra chunk");
      intra = &bs.chunks[k++].payload;
    } else {
      if (k + 1 >= bs.chunks.size() || bs.chunks[k].type != ChunkType::kMotion ||
          bs.chunks[k + 1].type != ChunkType::kInter)
        throw std::runtime_error("bitstream: expected a motion/inter chunk pair");
      mo = &bs.chunks[k].payload;
      in = &bs.chunks[k + 1].payload;
      k += 2;
    }

    Tape tape(false);
    FrameRefs refs = st.leaf_into(tape);
    DecodedFrame d = decode_frame(model, tape, gop_t, refs,
                                  intra ? *intra : std::vector<uint8_t>{},
                                  mo ? *mo : std::vector<uint8_t>{},
                                  in ? *in : std::vector<uint8_t>{}, ph, pw, modulation);

    Tensor x_hat = tape.val(d.x_hat);
    if (gop_t == 1) {
      st.advance_intra(x_hat);
    } else {
      st.advance_inter(x_hat, tape.val(d.f_hat), tape.val(d.prop));
    }
    out.push_back(crop_to_original(Frame(std::move(x_hat), bs.height, bs.width)));
  }
  if (k != bs.chunks.size()) throw std::runtime_error("bitstream: trailing chunks");
  return out;
}

nlohmann::json stats_to_json(const SequenceStats& stats) {
  auto num_or_inf = [](double v) -> nlohmann::json {
    if (std::isinf(v)) return "inf";
    return v;
  };
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& pf : stats.frames) {
    frames.push_back({{"index", pf.index},
                      {"intra", pf.intra},
                      {"bits", pf.bits},
                      {"bpp", pf.bits / (static_cast<double>(stats.width) * stats.height)},
                      {"mse", pf.mse},
                      {"psnr", num_or_inf(pf.psnr)}});
  }
  return {{"width", stats.width},
          {"height", stats.height},
          {"frame_count", stats.frames.size()},
          {"frames", frames},
          {"total_bits", stats.total_bits},
          {"bpp", stats.bpp},
          {"avg_psnr", num_or_inf(stats.avg_psnr)}};
}

}  // namespace cvpp
