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

#include "cvpp/training.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "cvpp/checkpoint.h"
#include "cvpp/ops.h"

namespace cvpp {

double mu_schedule(int t) {
  if (t < 2) throw std::invalid_argument("mu schedule: defined for t >= 2");
  return 1.0 + 0.2 * (t - 2);
}

ClipLoss clip_loss(const VideoCodecModel& m, Tape& tape, const Clip& clip, int lambda,
                   const TrainFlags& flags, Rng& noise_rng) {
  if (clip.empty()) throw std::invalid_argument("train: empty clip");

  ClipLoss out;
  FrameRefs refs;
  CodeOptions opts;
  opts.mode = flags.round_ste ? QuantMode::kRoundSte : QuantMode::kNoise;
  opts.phase = Phase::kTrain;
  opts.noise_rng = &noise_rng;
  opts.emit_bytes = false;
  opts.modulation = flags.modulation_active;

  for (size_t i = 0; i < clip.size(); ++i) {
    const int gop_t = static_cast<int>(i) + 1;
    const int oh = clip[i].orig_h, ow = clip[i].orig_w;
    Frame padded = pad_to_stride(clip[i]);
    Var x = tape.leaf(padded.data);
    FrameResult r = encode_frame(m, tape, x, gop_t, refs, opts);

    // Distortion on the original pixels; padding is a coding artifact.
    Var d_v = r.dist;
    double d_num = r.mse;
    if (padded.data.h != oh || padded.data.w != ow) {
      Var recon = ops::crop_spatial(tape, r.x_hat, oh, ow);
      d_v = ops::mse(tape, tape.leaf(clip[i].data), recon, &d_num);
    }
    const double mu =
        gop_t == 1 ? 1.0 : (flags.modulated ? mu_schedule(gop_t) : 1.0);
    const double px = static_cast<double>(oh) * ow;
    Var r_v = ops::scale(tape, r.rate, static_cast<float>(1.0 / px));
    Var term = ops::add(tape, ops::scale(tape, d_v, static_cast<float>(lambda * mu)), r_v);

    double reg_num = 0.0;
    if (r.x2_motion.ok()) {
      double v = 0.0;
      Var reg = ops::mse(tape, r.x2_motion, r.cond_motion, &v);
      reg_num += v;
      if (r.x2_inter.ok()) {
        Var reg2 = ops::mse(tape, r.x2_inter, r.cond_inter, &v);
        reg_num += v;
        reg = ops::add(tape, reg, reg2);
      }
      term = ops::add(tape, term, ops::scale(tape, reg, static_cast<float>(flags.reg_weight)));
    } else if (r.x2_inter.ok()) {
      double v = 0.0;
      Var reg = ops::mse(tape, r.x2_inter, r.cond_inter, &v);
      reg_num += v;
      term = ops::add(tape, term, ops::scale(tape, reg, static_cast<float>(flags.reg_weight)));
    }

    out.per_frame.push_back(term);
    out.total = out.total.ok() ? ops::add(tape, out.total, term) : term;
    out.numbers.d.push_back(d_num);
    out.numbers.r_bpp.push_back(r.bits / px);
    out.numbers.mu.push_back(mu);
    out.numbers.l_reg += flags.reg_weight * reg_num;
    out.numbers.total += lambda * mu * d_num + r.bits / px + flags.reg_weight * reg_num;

    // Thread references forward; without EPA they are detached so no
    // gradient crosses the frame boundary.
    Var xh = r.x_hat, fh = r.f_hat, pr = r.prop;
    if (!flags.epa) {
      xh = ops::detach(tape, xh);
      if (fh.ok()) fh = ops::detach(tape, fh);
      if (pr.ok()) pr = ops::detach(tape, pr);
    }
    if (gop_t == 1)
      refs.advance_intra(xh);
    else
      refs.advance_inter(xh, fh, pr);
  }

  if (!std::isfinite(out.numbers.total)) throw std::runtime_error("train: non-finite loss");
  return out;
}

LossBreakdown train_step(VideoCodecModel& m, Adam& opt, const Clip& clip, int lambda,
                         const TrainFlags& flags, double lr, double clip_norm,
                         Rng& noise_rng) {
  Tape tape(true);
  ClipLoss cl = clip_loss(m, tape, clip, lambda, flags, noise_rng);
  if (flags.epa) {
    m.ps.zero_grad();
    tape.backward(cl.total);
    opt.step(m.ps, lr, clip_norm);
  } else {
    // Per-frame updates; every gradient is evaluated at the incoming
    // parameters since the forward pass is already recorded.
    for (Var term : cl.per_frame) {
      m.ps.zero_grad();
      tape.backward(term);
      opt.step(m.ps, lr, clip_norm);
    }
  }
  m.ps.zero_grad();
  return cl.numbers;
}

std::vector<StageConfig> stage_plan(int stage, int lambda) {
  StageConfig base;
  base.stage = stage;
  base.lambda = lambda;
  switch (stage) {
    case 1: {
      base.name = "stage1";
      base.steps = 500;
      base.clip_len = 2;
      return {base};
    }
    case 2: {
      StageConfig a = base, b = base;
      a.name = "stage2a";  // compensation network alone, frozen codecs
      a.steps = 500;
      a.clip_len = 2;
      a.trainable = {"mcnet."};
      b.name = "stage2b";
      b.steps = 500;
      b.clip_len = 5;
      return {a, b};
    }
    case 3: {
      base.name = "stage3";
      base.steps = 1000;
      base.clip_len = 7;
      base.batch = 2;
      base.flags.modulation_active = true;
      return {base};
    }
    case 4: {
      StageConfig a = base, b = base;
      a.name = "stage4a";  // entropy-context pre-train, everything else frozen
      a.steps = 500;
      a.clip_len = 7;
      a.trainable = {"motion.ctx.", "inter.ctx.", "inter.tctx."};
      a.flags.modulation_active = true;
      b.name = "stage4b";
      b.steps = 1000;
      b.clip_len = 7;
      b.batch = 2;
      b.flags.modulation_active = true;
      return {a, b};
    }
    default:
      throw std::invalid_argument("train: stage must be 1..4");
  }
}

namespace {

Clip clip_head(const Clip& c, int len) {
  if (static_cast<int>(c.size()) < len)
    throw std::invalid_argument("train: dataset clip shorter than the stage needs");
  return Clip(c.begin(), c.begin() + len);
}

}  // namespace

std::vector<TrainLogRow> run_phase(VideoCodecModel& m, Adam& opt,
                                   const std::vector<Clip>& dataset, const StageConfig& cfg,
                                   Rng& noise_rng) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  // A frozen-subset phase whose subset is absent (ablated away) is vacuous.
  if (!cfg.trainable.empty() && m.ps.matching(cfg.trainable).empty()) return {};

  m.ps.set_trainable(cfg.trainable);
  std::vector<TrainLogRow> rows;
  size_t cursor = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    const double lr = cosine_lr(cfg.lr0, cfg.lr1, step, cfg.steps);
    TrainLogRow row;
    row.step = step;
    int frames = 0;
    auto accumulate = [&](const LossBreakdown& nb) {
      for (double v : nb.d) row.d += v;
      for (double v : nb.r_bpp) row.r += v;
      frames += static_cast<int>(nb.d.size());
      row.total += nb.total;
    };

    if (cfg.flags.epa) {
      m.ps.zero_grad();
      for (int b = 0; b < cfg.batch; ++b) {
        Clip sub = clip_head(dataset[cursor++ % dataset.size()], cfg.clip_len);
        Tape tape(true);
        ClipLoss cl = clip_loss(m, tape, sub, cfg.lambda, cfg.flags, noise_rng);
        Var obj = cfg.batch > 1 ? ops::scale(tape, cl.total, 1.0f / cfg.batch) : cl.total;
        tape.backward(obj);
        accumulate(cl.numbers);
      }
      opt.step(m.ps, lr, cfg.clip_norm);
      m.ps.zero_grad();
    } else {
      for (int b = 0; b < cfg.batch; ++b) {
        Clip sub = clip_head(dataset[cursor++ % dataset.size()], cfg.clip_len);
        LossBreakdown nb = train_step(m, opt, sub, cfg.lambda, cfg.flags, lr, cfg.clip_norm,
                                      noise_rng);
        accumulate(nb);
      }
    }

    row.d /= frames;
    row.r /= frames;
    row.total /= cfg.batch;
    rows.push_back(row);
  }
  m.ps.set_trainable({});
  return rows;
}

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("train: cannot write log " + path);
  out << "step,D,R,total\n";
  for (const TrainLogRow& r : rows)
    out << r.step << "," << r.d << "," << r.r << "," << r.total << "\n";
}

void run_training(VideoCodecModel& m, const std::vector<Clip>& dataset,
                  const nlohmann::json& config, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  const std::vector<int> stages = config.value("stages", std::vector<int>{1, 2, 3, 4});
  std::vector<int> lambdas = config.value("lambdas", std::vector<int>{2048, 1024, 512, 256});
  const double lr0 = config.value("lr0", 1e-4);
  const double lr1 = config.value("lr1", 1e-5);
  const double step_scale = config.value("step_scale", 1.0);
  const bool feature_mod = config.value("feature_mod", true);
  TrainFlags flags;
  flags.epa = config.value("epa", true);
  flags.modulated = config.value("modulated", true);
  flags.round_ste = config.value("round_ste", true);
  flags.reg_weight = config.value("reg_weight", 0.01);
  Rng rng(config.value("seed", uint64_t{0x7ea1}));

  auto scaled = [&](int steps) {
    return std::max(1, static_cast<int>(std::llround(steps * step_scale)));
  };
  auto apply_overrides = [&](StageConfig& p, int lambda) {
    p.lambda = lambda;
    p.lr0 = lr0;
    p.lr1 = lr1;
    p.steps = scaled(p.steps);
    bool mod_active = p.flags.modulation_active && feature_mod;
    p.flags = flags;
    p.flags.modulation_active = mod_active;
  };
  auto ckpt_path = [&](int stage, int lambda) {
    return out_dir + "/stage" + std::to_string(stage) + "_lambda" + std::to_string(lambda) +
           ".ckpt";
  };
  auto save = [&](int stage, int lambda, int steps_done) {
    nlohmann::json manifest;
    manifest["config"] = m.cfg.to_json();
    manifest["stage"] = stage;
    manifest["lambda"] = lambda;
    manifest["steps"] = steps_done;
    save_checkpoint(ckpt_path(stage, lambda), m.ps, manifest);
  };

  // Progressive stages, all at the highest rate point.
  int total_steps = 0;
  for (int stage : stages) {
    for (StageConfig phase : stage_plan(stage, 2048)) {
      apply_overrides(phase, 2048);
      Adam opt;
      std::vector<TrainLogRow> rows = run_phase(m, opt, dataset, phase, rng);
      total_steps += static_cast<int>(rows.size());
      write_train_log(out_dir + "/" + phase.name + "_lambda2048.csv", rows);
    }
    save(stage, 2048, total_steps);
  }

  // Lower-rate sweep: fine-tune from the final high-rate checkpoint with a
  // quarter of the final joint budget.
  const int last = stages.empty() ? 0 : stages.back();
  if (last != 0) {
    StageConfig tmpl = stage_plan(last, 2048).back();
    for (int lambda : lambdas) {
      if (lambda == 2048) continue;
      load_checkpoint(ckpt_path(last, 2048), m.ps);
      StageConfig phase = tmpl;
      phase.name = "sweep";
      phase.steps = std::max(1, tmpl.steps / 4);
      phase.trainable.clear();
      apply_overrides(phase, lambda);
      phase.flags.modulation_active = tmpl.flags.modulation_active && feature_mod;
      Adam opt;
      std::vector<TrainLogRow> rows = run_phase(m, opt, dataset, phase, rng);
      write_train_log(out_dir + "/sweep_lambda" + std::to_string(lambda) + ".csv", rows);
      save(last, lambda, static_cast<int>(rows.size()));
    }
    load_checkpoint(ckpt_path(last, 2048), m.ps);
  }
}

std::vector<Clip> make_translating_dataset(int clips, int frames, int h, int w, Rng& rng) {
  std::vector<Clip> out;
  out.reserve(clips);
  for (int n = 0; n < clips; ++n) {
    const double vx = rng.uniform(-2.0, 2.0);
    const double vy = rng.uniform(-2.0, 2.0);
    constexpr int kWaves = 6;
    double amp[kWaves], fx[kWaves], fy[kWaves], ph[kWaves];
    double sum = 0.0;
    for (int k = 0; k < kWaves; ++k) {
      amp[k] = rng.uniform(0.02, 0.1);
      fx[k] = rng.uniform(-0.9, 0.9);
      fy[k] = rng.uniform(-0.9, 0.9);
      ph[k] = rng.uniform(0.0, 6.283185307179586);
      sum += amp[k];
    }
    if (sum > 0.42)
      for (double& a : amp) a *= 0.42 / sum;

    Clip clip;
    for (int t = 0; t < frames; ++t) {
      Tensor f(3, h, w);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            double v = 0.5;
            for (int k = 0; k < kWaves; ++k)
              v += amp[k] * std::sin(fx[k] * (x - vx * t) + fy[k] * (y - vy * t) + ph[k] +
                                     1.3 * c);
            f.at(c, y, x) = static_cast<float>(v);
          }
      clip.emplace_back(std::move(f));
    }
    out.push_back(std::move(clip));
  }
  return out;
}

}  // namespace cvpp
