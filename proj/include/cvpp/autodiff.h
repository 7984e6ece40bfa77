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

#ifndef CVPP_AUTODIFF_H_
#define CVPP_AUTODIFF_H_

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "cvpp/rng.h"
#include "cvpp/tensor.h"

namespace cvpp {

// A trainable array, owned by a ParamStore. Gradients accumulate across
// Tape::backward calls until zero_grad.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  // Adam state, sized on first optimizer step.
  Tensor adam_m, adam_v;
};

// Owns parameters in creation order (the order defines checkpoint layout
// stability and optimizer iteration order).
class ParamStore {
 public:
  Parameter* create(const std::string& name, Tensor init);
  Parameter* find(const std::string& name);              // nullptr if absent
  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
  // Parameters whose name starts with any of the given prefixes.
  std::vector<Parameter*> matching(const std::vector<std::string>& prefixes) const;
  size_t count_values() const;  // total number of scalar weights
  void zero_grad();
  // Sets the trainable flag: true for params matching a prefix, false
  // otherwise. An empty prefix list marks everything trainable.
  void set_trainable(const std::vector<std::string>& prefixes);
  // Test helper: refills every parameter with N(0, stddev), including layers
  // that are zero-initialized by design.
  void randomize(Rng& rng, float stddev);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> index_;
};

struct Var {
  int id = -1;
  bool ok() const { return id >= 0; }
};

// Reverse-mode tape. Ops append nodes; backward() sweeps them in reverse
// creation order. When recording is off, ops compute values only, so the
// same graph-building code doubles as the inference path.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var leaf(Tensor value);
  // Leaf bound to a parameter; memoized so each parameter appears once per
  // tape. backward() flushes the node gradient into Parameter::grad.
  Var param(Parameter& p);

  const Tensor& val(Var v) const { return nodes_[check(v)].value; }
  const Tensor& val(int id) const { return nodes_[id].value; }

  // Gradient of a node, allocated as zeros on first access.
  Tensor& grad_ref(int id);
  bool has_grad(Var v) const { return !nodes_[check(v)].grad.empty(); }
  const Tensor& grad(Var v) const;  // throws if never touched by backward

  // Clears previous node grads, seeds d(loss)=1, sweeps, then accumulates
  // bound parameter gradients. `loss` must be scalar. May be called several
  // times per tape (each call is an independent sweep; parameter grads add).
  void backward(Var loss);

  // Node construction API for ops.
  Var make(Tensor value, std::vector<int> parents, BackwardFn bw);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    BackwardFn backward;
    Parameter* bound = nullptr;
  };

  int check(Var v) const {
    if (!v.ok() || v.id >= static_cast<int>(nodes_.size()))
      throw std::logic_error("Tape: invalid Var");
    return v.id;
  }

  // deque: node references stay valid while ops append more nodes, so code
  // may hold a `const Tensor&` from val() across graph construction.
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_ids_;
  bool recording_;
};

}  // namespace cvpp

#endif  // CVPP_AUTODIFF_H_
