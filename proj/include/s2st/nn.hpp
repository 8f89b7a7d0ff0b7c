// Copyright 2026 The s2st Authors. All Rights Reserved.
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

// Parameter registry and the small layer set the encoder and decoder share.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "s2st/checkpoint.hpp"
#include "s2st/random.hpp"
#include "s2st/tensor.hpp"

namespace s2st {

// Named trainable tensors. Layers keep handles that alias the stored tensors,
// so loading values in place updates every layer.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor t);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  const TensorMap& tensors() const { return params_; }
  std::size_t count() const;  // total scalar parameters

  void zero_grad();
  // Copies values for every name present in both; returns the number copied.
  // Shape disagreement throws kShapeMismatch.
  std::size_t load(const TensorMap& values, const std::string& prefix = "");
  TensorMap snapshot(const std::string& prefix = "") const;

 private:
  TensorMap params_;
};

// Dropout state for one forward pass.
struct ForwardContext {
  bool train = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  Tensor drop(const Tensor& x) const {
    return train && rng && dropout > 0.0 ? s2st::dropout(x, dropout, *rng) : x;
  }
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear create(ParamStore& ps, const std::string& name, std::size_t in,
                       std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(ParamStore& ps, const std::string& name, std::size_t dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, 1e-5); }
};

// LN -> Linear(d, e*d) -> SiLU -> dropout -> Linear(e*d, d) -> dropout.
struct FeedForward {
  LayerNorm norm;
  Linear up;
  Linear down;

  static FeedForward create(ParamStore& ps, const std::string& name, std::size_t d,
                            std::size_t expansion, Rng& rng);
  Tensor operator()(const Tensor& x, const ForwardContext& ctx) const;
};

// Fixed sinusoidal encoding of absolute positions [offset, offset + len).
Tensor sinusoidal_positions(std::size_t len, std::size_t d);

}  // namespace s2st
