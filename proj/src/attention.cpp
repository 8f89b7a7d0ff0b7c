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

#include "s2st/attention.hpp"

#include <cmath>
#include <vector>

namespace s2st {

namespace {

void check_heads(const Tensor& q, std::size_t n_heads) {
  if (q.rank() != 2 || n_heads == 0 || q.dim(1) % n_heads != 0) {
    throw Error(Errc::kShapeMismatch, "attention width " + shape_str(q.shape()) +
                                          " not divisible into " + std::to_string(n_heads) +
                                          " heads");
  }
}

}  // namespace

Tensor rel_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                     const RelPosAttentionConfig& cfg, const Tensor& rel_key,
                     const Tensor& rel_value, bool causal) {
  check_heads(q, cfg.n_heads);
  if (k.shape() != q.shape() || v.shape() != q.shape()) {
    throw Error(Errc::kShapeMismatch, "rel_attention q/k/v shapes differ");
  }
  const std::size_t dh = q.dim(1) / cfg.n_heads;
  const Shape table{cfg.table_rows(), dh};
  if (rel_key.shape() != table || rel_value.shape() != table) {
    throw Error(Errc::kShapeMismatch, "relative tables must be " + shape_str(table));
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t clip = cfg.max_relative_distance;
  const Tensor rel_key_t = transpose(rel_key);
  std::vector<Tensor> heads;
  heads.reserve(cfg.n_heads);
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    const Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    const Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    const Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    const Tensor content = matmul(qh, transpose(kh));
    const Tensor position = rel_gather(matmul(qh, rel_key_t), clip);
    Tensor logits = scale(add(content, position), inv_sqrt);
    if (causal) logits = causal_mask(logits);
    const Tensor weights = softmax(logits, 1);
    heads.push_back(add(matmul(weights, vh), matmul(rel_scatter(weights, clip), rel_value)));
  }
  return heads.size() == 1 ? heads.front() : concat_cols(heads);
}

Tensor dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                     std::size_t n_heads, bool causal) {
  check_heads(q, n_heads);
  if (k.rank() != 2 || k.dim(1) != q.dim(1) || v.shape() != k.shape()) {
    throw Error(Errc::kShapeMismatch, "dot_attention k/v shapes");
  }
  const std::size_t dh = q.dim(1) / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < n_heads; ++h) {
    const Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    const Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    const Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    Tensor logits = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (causal) logits = causal_mask(logits);
    heads.push_back(matmul(softmax(logits, 1), vh));
  }
  return heads.size() == 1 ? heads.front() : concat_cols(heads);
}

RelSelfAttention RelSelfAttention::create(ParamStore& ps, const std::string& name,
                                          const RelPosAttentionConfig& cfg, Rng& rng) {
  if (cfg.n_heads == 0 || cfg.d_model % cfg.n_heads != 0) {
    throw Error(Errc::kConfig, "d_model must be divisible by n_heads");
  }
  if (cfg.max_relative_distance < 1) throw Error(Errc::kConfig, "clip radius must be >= 1");
  RelSelfAttention a;
  a.cfg = cfg;
  const std::size_t d = cfg.d_model;
  a.q = Linear::create(ps, name + ".q", d, d, rng);
  a.k = Linear::create(ps, name + ".k", d, d, rng);
  a.v = Linear::create(ps, name + ".v", d, d, rng);
  a.out = Linear::create(ps, name + ".out", d, d, rng);
  const std::size_t rows = cfg.table_rows(), dh = cfg.d_head();
  a.rel_key = ps.add(name + ".rel_key", xavier_uniform({rows, dh}, rows, dh, rng));
  a.rel_value = ps.add(name + ".rel_value", xavier_uniform({rows, dh}, rows, dh, rng));
  return a;
}

Tensor RelSelfAttention::operator()(const Tensor& x, bool causal) const {
  return out(rel_attention(q(x), k(x), v(x), cfg, rel_key, rel_value, causal));
}

CrossAttention CrossAttention::create(ParamStore& ps, const std::string& name,
                                      std::size_t d, std::size_t n_heads, Rng& rng) {
  CrossAttention a;
  a.n_heads = n_heads;
  a.q = Linear::create(ps, name + ".q", d, d, rng);
  a.k = Linear::create(ps, name + ".k", d, d, rng);
  a.v = Linear::create(ps, name + ".v", d, d, rng);
  a.out = Linear::create(ps, name + ".out", d, d, rng);
  return a;
}

Tensor CrossAttention::operator()(const Tensor& x, const Tensor& memory) const {
  const std::size_t d = x.dim(1);
  const Tensor xq = add(x, sinusoidal_positions(x.dim(0), d));
  const Tensor mem = add(memory, sinusoidal_positions(memory.dim(0), d));
  return out(dot_attention(q(xq), k(mem), v(mem), n_heads, false));
}

}  // namespace s2st
