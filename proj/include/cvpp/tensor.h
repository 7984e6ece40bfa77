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

#ifndef CVPP_TENSOR_H_
#define CVPP_TENSOR_H_

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace cvpp {

// Dense CHW float tensor. Vectors are stored as (n,1,1), scalars as (1,1,1).
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, 0.f) {
    if (c_ < 0 || h_ < 0 || w_ < 0) throw std::invalid_argument("Tensor: negative dim");
  }

  static Tensor scalar(float x) {
    Tensor t(1, 1, 1);
    t.v[0] = x;
    return t;
  }
  static Tensor full(int c_, int h_, int w_, float x) {
    Tensor t(c_, h_, w_);
    std::fill(t.v.begin(), t.v.end(), x);
    return t;
  }

  size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }
  float* data() { return v.data(); }
  const float* data() const { return v.data(); }

  float& at(int ci, int yi, int xi) { return v[(static_cast<size_t>(ci) * h + yi) * w + xi]; }
  const float& at(int ci, int yi, int xi) const {
    return v[(static_cast<size_t>(ci) * h + yi) * w + xi];
  }

  float item() const {
    if (size() != 1) throw std::logic_error("Tensor::item on non-scalar");
    return v[0];
  }

  void zero() { std::fill(v.begin(), v.end(), 0.f); }
  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

}  // namespace cvpp

#endif  // CVPP_TENSOR_H_
