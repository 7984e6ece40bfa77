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

#ifndef CVPP_RNG_H_
#define CVPP_RNG_H_

#include <cmath>
#include <cstdint>
#include <random>

namespace cvpp {

// Deterministic RNG. The distributions are hand-rolled on top of mt19937_64
// so that sampled values are identical across standard library
// implementations (std::uniform_real_distribution is not portable).
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  float uniform(float a, float b) { return a + static_cast<float>(uniform()) * (b - a); }

  // Box-Muller; second value cached.
  float normal(float mean = 0.f, float stddev = 1.f) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * static_cast<float>(spare_);
    }
    double u1 = 0.0, u2 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 1e-300);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * M_PI * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return mean + stddev * static_cast<float>(r * std::cos(th));
  }

  // Uniform integer in [0, n).
  uint32_t below(uint32_t n) { return n == 0 ? 0 : static_cast<uint32_t>(uniform() * n); }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cvpp

#endif  // CVPP_RNG_H_
