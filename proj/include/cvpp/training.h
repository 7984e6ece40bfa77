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

#ifndef CVPP_TRAINING_H_
#define CVPP_TRAINING_H_

#include <string>
#include <vector>

#include "cvpp/model.h"
#include "cvpp/nn.h"
#include "cvpp/pipeline.h"

namespace cvpp {

// Distortion weight of P-frame t: 1 + 0.2 * (t - 2). Frame clock starts at
// the first conditional frame, t = 2.
double mu_schedule(int t);

struct TrainFlags {
  bool epa = true;         // gradients flow across frame boundaries
  bool modulated = true;   // apply the mu schedule (else all weights 1)
  bool round_ste = true;   // rounded latents downstream; noise proxy if false
  bool modulation_active = false;  // feature-map modulation (stages >= 3)
  double reg_weight = 0.01;        // condition-residual penalty weight
};

struct LossBreakdown {
  std::vector<double> d;      // per-frame MSE on unpadded pixels
  std::vector<double> r_bpp;  // per-frame estimated bits per unpadded pixel
  std::vector<double> mu;     // applied distortion weights (index 0: intra)
  double l_reg = 0.0;
  double total = 0.0;  // sum_t (lambda * mu_t * d_t + r_t) + l_reg
};

struct ClipLoss {
  Var total;
  std::vector<Var> per_frame;  // frame objective incl. its regularizer share
  LossBreakdown numbers;
};

// Codes the clip sequentially (intra first) on one tape, reusing
// reconstructions as references. epa=false detaches every reference before
// reuse, so cross-frame gradient paths are exactly zero; values and the
// reported breakdown are unchanged by the flag.
ClipLoss clip_loss(const VideoCodecModel& m, Tape& tape, const Clip& clip, int lambda,
                   const TrainFlags& flags, Rng& noise_rng);

// One training update on the clip: a single optimizer step from the summed
// loss under EPA, or one step per frame (gradients evaluated at the incoming
// parameters) without it.
LossBreakdown train_step(VideoCodecModel& m, Adam& opt, const Clip& clip, int lambda,
                         const TrainFlags& flags, double lr, double clip_norm,
                         Rng& noise_rng);

// One phase of the progressive schedule.
struct StageConfig {
  int stage = 1;
  std::string name = "stage1";
  int steps = 500;
  int clip_len = 2;
  int batch = 1;  // clips per update (gradient accumulation, EPA only)
  int lambda = 2048;
  double lr0 = 1e-4, lr1 = 1e-5;  // cosine within the phase
  double clip_norm = 1.0;
  TrainFlags flags;
  std::vector<std::string> trainable;  // name prefixes; empty = everything
};

// The pinned desk-scale plan for one stage id (1..4) at one lambda; stages 2
// and 4 expand to a frozen pre-phase plus a joint phase.
std::vector<StageConfig> stage_plan(int stage, int lambda);

struct TrainLogRow {
  int step = 0;
  double d = 0.0;      // mean per-frame MSE
  double r = 0.0;      // mean per-frame bpp
  double total = 0.0;  // mu-weighted clip objective
};

// Runs one phase over the dataset in round-robin order, honoring the
// trainable subset and the cosine schedule.
std::vector<TrainLogRow> run_phase(VideoCodecModel& m, Adam& opt,
                                   const std::vector<Clip>& dataset, const StageConfig& cfg,
                                   Rng& noise_rng);

// "step,D,R,total" CSV.
void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows);

// Full protocol driver: stages at lambda 2048 in order, then lower-rate
// fine-tunes (a quarter of the stage-4 joint budget each), with
// stage{K}_lambda{L}.ckpt checkpoints and per-phase CSV logs in out_dir.
// Config keys (all optional): stages [1..4], lambdas, lr0, lr1, epa,
// modulated, round_ste, feature_mod, reg_weight, step_scale, seed.
void run_training(VideoCodecModel& m, const std::vector<Clip>& dataset,
                  const nlohmann::json& config, const std::string& out_dir);

// Exponential moving average with the conventional 2/(window+1) weight.
struct Ema {
  double alpha;
  double value = 0.0;
  bool primed = false;
  explicit Ema(int window) : alpha(2.0 / (window + 1)) {}
  void add(double x) {
    value = primed ? alpha * x + (1.0 - alpha) * value : x;
    primed = true;
  }
};

// Smooth sinusoid-mixture textures under constant subpixel translation,
// sampled analytically (no resampling artifacts). Values lie in [0.05, 0.95].
std::vector<Clip> make_translating_dataset(int clips, int frames, int h, int w, Rng& rng);

}  // namespace cvpp

#endif  // CVPP_TRAINING_H_
