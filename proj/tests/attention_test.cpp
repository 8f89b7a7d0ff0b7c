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

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "s2st/attention.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace s2st {
namespace {

using testing::random_tensor;

using testing::max_abs_diff;
using testing::naive_rel_attention;
using testing::random_attention_instance;

TEST(RelAttention, ZeroTablesReduceToDotAttention) {
  Rng rng(100);
  for (int n = 0; n < 100; ++n) {
    const testing::AttentionInstance in = random_attention_instance(rng, true);
    const Tensor rel = rel_attention(in.q, in.k, in.v, in.cfg, in.rk, in.rv, in.causal);
    const Tensor abs = dot_attention(in.q, in.k, in.v, in.cfg.n_heads, in.causal);
    EXPECT_LE(max_abs_diff(rel.data(), abs.data()), 1e-9) << "instance " << n;
  }
}

TEST(RelAttention, MatchesNaiveLoop) {
  Rng rng(101);
  for (int n = 0; n < 100; ++n) {
    const testing::AttentionInstance in = random_attention_instance(rng, false);
    const Tensor rel = rel_attention(in.q, in.k, in.v, in.cfg, in.rk, in.rv, in.causal);
    const auto oracle = naive_rel_attention(in.q, in.k, in.v, in.cfg, in.rk, in.rv, in.causal);
    EXPECT_LE(max_abs_diff(rel.data(), oracle), 1e-9) << "instance " << n;
  }
}

TEST(RelAttention, SingleStepAttendsToItself) {
  Rng rng(102);
  RelPosAttentionConfig cfg{2, 4, 2};
  const Tensor q = random_tensor({1, 4}, rng, -1, 1, false);
  const Tensor k = random_tensor({1, 4}, rng, -1, 1, false);
  const Tensor v = random_tensor({1, 4}, rng, -1, 1, false);
  const Tensor rk = random_tensor({5, 2}, rng, -1, 1, false);
  const Tensor rv = random_tensor({5, 2}, rng, -1, 1, false);
  const Tensor o = rel_attention(q, k, v, cfg, rk, rv, true);
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_NEAR(o.at(0, h * 2 + c), v.at(0, h * 2 + c) + rv.at(2, c), 1e-12);
    }
  }
}

TEST(RelAttention, CausalOutputIgnoresFutureKeys) {
  Rng rng(103);
  RelPosAttentionConfig cfg{2, 6, 3};
  Tensor q = random_tensor({7, 6}, rng, -1, 1, false);
  Tensor k = random_tensor({7, 6}, rng, -1, 1, false);
  Tensor v = random_tensor({7, 6}, rng, -1, 1, false);
  const Tensor rk = random_tensor({7, 3}, rng, -1, 1, false);
  const Tensor rv = random_tensor({7, 3}, rng, -1, 1, false);
  const Tensor before = rel_attention(q, k, v, cfg, rk, rv, true);
  for (std::size_t c = 0; c < 6; ++c) {
    k.mutable_data()[6 * 6 + c] += 5.0;
    v.mutable_data()[6 * 6 + c] -= 5.0;
  }
  const Tensor after = rel_attention(q, k, v, cfg, rk, rv, true);
  for (std::size_t i = 0; i < 6 * 6; ++i) EXPECT_EQ(before.data()[i], after.data()[i]);
}

TEST(RelAttention, TranslatingKeysByTableRowIsAbsorbed) {
  // Adding a constant row to every key embedding shifts each head's scores
  // uniformly in j, which the softmax ignores.
  Rng rng(104);
  RelPosAttentionConfig cfg{1, 4, 2};
  const Tensor q = random_tensor({5, 4}, rng, -1, 1, false);
  const Tensor k = random_tensor({5, 4}, rng, -1, 1, false);
  const Tensor v = random_tensor({5, 4}, rng, -1, 1, false);
  const Tensor rv = Tensor::zeros({5, 4});
  std::vector<double> row = {0.3, -0.2, 0.5, 0.1};
  std::vector<double> table;
  for (int r = 0; r < 5; ++r) table.insert(table.end(), row.begin(), row.end());
  const Tensor shifted = rel_attention(q, k, v, cfg, Tensor::from({5, 4}, table), rv, false);
  const Tensor plain = dot_attention(q, k, v, 1, false);
  EXPECT_LE(max_abs_diff(shifted.data(), plain.data()), 1e-12);
}

}  // namespace
}  // namespace s2st
