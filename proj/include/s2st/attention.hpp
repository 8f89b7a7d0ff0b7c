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

// Multi-head attention with clipped relative-position embeddings on keys and
// values:
//   e_ij = q_i . (k_j + aK[clip(j - i)]) / sqrt(d_head)
//   o_i  = sum_j softmax_j(e_ij) (v_j + aV[clip(j - i)])
// The embedding tables are shared by all heads of a layer.

#pragma once

#include <cstddef>
#include <string>

#include "s2st/nn.hpp"

namespace s2st {

struct RelPosAttentionConfig {
  std::size_t n_heads = 4;
  std::size_t d_model = 144;
  std::size_t max_relative_distance = 16;

  std::size_t d_head() const { return d_model / n_heads; }
  std::size_t table_rows() const { return 2 * max_relative_distance + 1; }
};

// q, k, v: [T, d] already projected. rel_key / rel_value: [2k+1, d_head].
Tensor rel_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                     const RelPosAttentionConfig& cfg, const Tensor& rel_key,
                     const Tensor& rel_value, bool causal);

// Standard scaled dot-product attention; q [Tq, d], k/v [Tk, d].
Tensor dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                     std::size_t n_heads, bool causal);

// Self-attention block with projections and relative tables.
struct RelSelfAttention {
  RelPosAttentionConfig cfg;
  Linear q, k, v, out;
  Tensor rel_key;
  Tensor rel_value;

  static RelSelfAttention create(ParamStore& ps, const std::string& name,
                                 const RelPosAttentionConfig& cfg, Rng& rng);
  Tensor operator()(const Tensor& x, bool causal) const;
};

// Cross-attention over a memory with absolute sinusoidal positions added to
// both the queries and the memory.
struct CrossAttention {
  std::size_t n_heads = 4;
  Linear q, k, v, out;

  static CrossAttention create(ParamStore& ps, const std::string& name, std::size_t d,
                               std::size_t n_heads, Rng& rng);
  Tensor operator()(const Tensor& x, const Tensor& memory) const;
};

}  // namespace s2st
