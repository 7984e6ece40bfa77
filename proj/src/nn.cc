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

#include "cvpp/nn.h"

#include <cmath>

namespace cvpp {

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int cin_, int cout_, int k_,
               int stride_, bool zero_init, Rng& rng)
    : cin(cin_), cout(cout_), k(k_), stride(stride_) {
  if (k % 2 == 0) throw std::invalid_argument("Conv2d: kernel must be odd");
  Tensor wt(cout, cin * k * k, 1);
  if (!zero_init) {
    const float std = std::sqrt(2.f / (cin * k * k));
    for (float& x : wt.v) x = rng.normal(0.f, std);
  }
  w = ps.create(name + ".w", std::move(wt));
  b = ps.create(name + ".b", Tensor(cout, 1, 1));
}

Linear::Linear(ParamStore& ps, const std::string& name, int in_, int out_, bool zero_init,
               float bias_init, Rng& rng)
    : in(in_), out(out_) {
  Tensor wt(out, in, 1);
  if (!zero_init) {
    const float std = std::sqrt(2.f / in);
    for (float& x : wt.v) x = rng.normal(0.f, std);
  }
  w = ps.create(name + ".w", std::move(wt));
  b = ps.create(name + ".b", Tensor::full(out, 1, 1, bias_init));
}

void Adam::step(ParamStore& ps, double lr, double clip_norm) {
  ++t_;
  double norm_sq = 0.0;
  for (const auto& p : ps.all()) {
    if (!p->trainable) continue;
    for (float g : p->grad.v) norm_sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(norm_sq);
  const double scale = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;

  const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (const auto& p : ps.all()) {
    if (!p->trainable) continue;
    if (p->adam_m.empty()) {
      p->adam_m = Tensor(p->value.c, p->value.h, p->value.w);
      p->adam_v = Tensor(p->value.c, p->value.h, p->value.w);
    }
    for (size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad.v[i] * scale;
      const double m = b1_ * p->adam_m.v[i] + (1.0 - b1_) * g;
      const double v = b2_ * p->adam_v.v[i] + (1.0 - b2_) * g * g;
      p->adam_m.v[i] = static_cast<float>(m);
      p->adam_v.v[i] = static_cast<float>(v);
      p->value.v[i] -=
          static_cast<float>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps_));
    }
  }
}

double cosine_lr(double lr0, double lr1, int64_t step, int64_t total) {
  if (total <= 1) return lr1;
  const double u = static_cast<double>(step) / (total - 1);
  return lr1 + 0.5 * (lr0 - lr1) * (1.0 + std::cos(M_PI * u));
}

}  // namespace cvpp
