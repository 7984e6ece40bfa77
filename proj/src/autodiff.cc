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

#include "cvpp/autodiff.h"

#include <algorithm>

namespace cvpp {

Parameter* ParamStore::create(const std::string& name, Tensor init) {
  if (index_.count(name)) throw std::logic_error("ParamStore: duplicate name " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Tensor(init.c, init.h, init.w);
  p->value = std::move(init);
  Parameter* raw = p.get();
  params_.push_back(std::move(p));
  index_[name] = raw;
  return raw;
}

Parameter* ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

std::vector<Parameter*> ParamStore::matching(
    const std::vector<std::string>& prefixes) const {
  std::vector<Parameter*> out;
  for (const auto& p : params_)
    for (const auto& pre : prefixes)
      if (p->name.rfind(pre, 0) == 0) {
        out.push_back(p.get());
        break;
      }
  return out;
}

size_t ParamStore::count_values() const {
  size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (const auto& p : params_) p->grad.zero();
}

void ParamStore::set_trainable(const std::vector<std::string>& prefixes) {
  for (const auto& p : params_) {
    if (prefixes.empty()) {
      p->trainable = true;
      continue;
    }
    p->trainable = false;
    for (const auto& pre : prefixes)
      if (p->name.rfind(pre, 0) == 0) {
        p->trainable = true;
        break;
      }
  }
}

void ParamStore::randomize(Rng& rng, float stddev) {
  for (const auto& p : params_)
    for (float& x : p->value.v) x = rng.normal(0.f, stddev);
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  auto it = param_ids_.find(&p);
  if (it != param_ids_.end()) return Var{it->second};
  nodes_.push_back(Node{p.value, {}, {}, nullptr, &p});
  int id = static_cast<int>(nodes_.size()) - 1;
  param_ids_[&p] = id;
  return Var{id};
}

Tensor& Tape::grad_ref(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.c, n.value.h, n.value.w);
  return n.grad;
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = nodes_[check(v)];
  if (n.grad.empty()) throw std::logic_error("Tape::grad: node has no gradient");
  return n.grad;
}

Var Tape::make(Tensor value, std::vector<int> parents, BackwardFn bw) {
  if (!recording_) {
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, nullptr});
  } else {
    nodes_.push_back(Node{std::move(value), {}, std::move(parents), std::move(bw), nullptr});
  }
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var loss) {
  if (!recording_) throw std::logic_error("Tape::backward on non-recording tape");
  int lid = check(loss);
  if (nodes_[lid].value.size() != 1)
    throw std::logic_error("Tape::backward: loss must be scalar");
  for (Node& n : nodes_) n.grad = Tensor();
  grad_ref(lid).v[0] = 1.f;
  for (int id = lid; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.grad.empty() && n.backward) n.backward(*this, id);
  }
  for (Node& n : nodes_) {
    if (n.bound && !n.grad.empty()) {
      float* g = n.bound->grad.data();
      const float* s = n.grad.data();
      for (size_t i = 0; i < n.grad.size(); ++i) g[i] += s[i];
    }
  }
}

}  // namespace cvpp
