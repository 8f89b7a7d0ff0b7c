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

// Finite-difference gradient checks for every differentiable operation and
// for the full model, shared by the unit suite and the acceptance binary.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "s2st/attention.hpp"
#include "s2st/encoder.hpp"
#include "s2st/model.hpp"
#include "s2st/tensor.hpp"
#include "test_util.hpp"

namespace s2st::testing {

inline std::size_t dim_in(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(lo),
                                              static_cast<std::int64_t>(hi)));
}

using Results = std::vector<GradCheckResult>;

struct GradCase {
  std::string name;
  std::uint64_t seed = 0;
  int trials = 1;
  // One randomized trial; appends one result per checked expression.
  std::function<void(Rng&, Results&)> run;
};

struct GradCaseOutcome {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t checks = 0;
};

inline GradCaseOutcome run_grad_case(const GradCase& c) {
  Rng rng(c.seed);
  Results out;
  for (int t = 0; t < c.trials; ++t) c.run(rng, out);
  GradCaseOutcome r;
  for (const auto& x : out) {
    r.max_rel_error = std::max(r.max_rel_error, x.max_rel_error);
    r.checked += x.checked;
    ++r.checks;
  }
  return r;
}

inline std::vector<GradCase> op_grad_cases() {
  constexpr int kTrials = 4;
  std::vector<GradCase> cases;
  cases.push_back({"Matmul", 10, kTrials, [](Rng& rng, Results& out) {
    const std::size_t m = dim_in(rng, 1, 8), k = dim_in(rng, 1, 8), n = dim_in(rng, 1, 8);
    const Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
    out.push_back(grad_check([&] { return probe(matmul(a, b)); }, {a, b}));
  }});
  cases.push_back({"ElementwiseBinary", 11, kTrials, [](Rng& rng, Results& out) {
    const Shape s{dim_in(rng, 1, 8), dim_in(rng, 1, 8)};
    const Tensor a = random_tensor(s, rng), b = random_tensor(s, rng);
    out.push_back(grad_check([&] { return probe(add(a, b)); }, {a, b}));
    out.push_back(grad_check([&] { return probe(sub(a, b)); }, {a, b}));
    out.push_back(grad_check([&] { return probe(mul(a, b)); }, {a, b}));
    out.push_back(grad_check([&] { return probe(scale(a, -2.5)); }, {a}));
  }});
  cases.push_back({"BiasTransposeReshapeReductions", 12, kTrials, [](Rng& rng, Results& out) {
    const std::size_t r = dim_in(rng, 1, 8), c = dim_in(rng, 1, 8);
    const Tensor x = random_tensor({r, c}, rng), b = random_tensor({c}, rng);
    out.push_back(grad_check([&] { return probe(add_bias(x, b)); }, {x, b}));
    out.push_back(grad_check([&] { return probe(transpose(x)); }, {x}));
    out.push_back(grad_check([&] { return probe(reshape(x, {c, r})); }, {x}));
    out.push_back(grad_check([&] { return scale(sum(mul(x, x)), 0.5); }, {x}));
    out.push_back(grad_check([&] { return mean(mul(x, x)); }, {x}));
  }});
  cases.push_back({"Activations", 13, kTrials, [](Rng& rng, Results& out) {
    const Shape s{dim_in(rng, 1, 8), 2 * dim_in(rng, 1, 4)};
    const Tensor x = random_away_from_zero(s, rng);
    out.push_back(grad_check([&] { return probe(relu(x)); }, {x}));
    out.push_back(grad_check([&] { return probe(sigmoid(x)); }, {x}));
    out.push_back(grad_check([&] { return probe(silu(x)); }, {x}));
    out.push_back(grad_check([&] { return probe(tanh(x)); }, {x}));
    out.push_back(grad_check([&] { return probe(glu(x)); }, {x}));
  }});
  cases.push_back({"SoftmaxFamily", 14, kTrials, [](Rng& rng, Results& out) {
    const Shape s{dim_in(rng, 1, 8), dim_in(rng, 2, 8)};
    const Tensor x = random_tensor(s, rng, -3, 3);
    out.push_back(grad_check([&] { return probe(softmax(x, 1)); }, {x}));
    out.push_back(grad_check([&] { return probe(softmax(x, 0)); }, {x}));
    out.push_back(grad_check([&] { return probe(log_softmax(x)); }, {x}));
  }});
  cases.push_back({"Normalizations", 15, kTrials, [](Rng& rng, Results& out) {
    const std::size_t r = dim_in(rng, 1, 8), c = dim_in(rng, 2, 8);
    const Tensor x = random_tensor({r, c}, rng, -2, 2);
    const Tensor g = random_tensor({c}, rng, 0.5, 1.5), b = random_tensor({c}, rng);
    out.push_back(grad_check([&] { return probe(layer_norm(x, g, b)); }, {x, g, b}));
    out.push_back(grad_check([&] { return probe(l2_normalize_rows(x)); }, {x}));
  }});
  cases.push_back({"Convolutions", 16, kTrials, [](Rng& rng, Results& out) {
    const std::size_t len = dim_in(rng, 3, 8), cin = dim_in(rng, 1, 4), cout = dim_in(rng, 1, 4);
    const std::size_t w = 1 + 2 * dim_in(rng, 0, 1);
    const std::size_t stride = dim_in(rng, 1, 2);
    const Tensor x = random_tensor({len, cin}, rng);
    const Tensor k = random_tensor({w, cin, cout}, rng);
    out.push_back(
        grad_check([&] { return probe(conv1d(x, k, stride, (w - 1) / 2)); }, {x, k}));
    const Tensor dk = random_tensor({w, cin}, rng);
    out.push_back(grad_check([&] { return probe(depthwise_conv1d(x, dk)); }, {x, dk}));
  }});
  cases.push_back({"IndexingOps", 17, kTrials, [](Rng& rng, Results& out) {
    const std::size_t r = dim_in(rng, 2, 8), c = dim_in(rng, 2, 8);
    const Tensor x = random_tensor({r, c}, rng), y = random_tensor({r, 3}, rng);
    out.push_back(grad_check([&] { return probe(slice_cols(x, 1, c)); }, {x}));
    out.push_back(grad_check([&] { return probe(slice_rows(x, 0, r - 1)); }, {x}));
    out.push_back(grad_check([&] { return probe(concat_cols({x, y})); }, {x, y}));
    const std::vector<std::size_t> ids = {0, r - 1, 1, 0};
    out.push_back(grad_check([&] { return probe(gather_rows(x, ids)); }, {x}));
    std::vector<std::vector<std::size_t>> cols(r);
    for (auto& row : cols) row = {uniform_index(rng, c), uniform_index(rng, c)};
    out.push_back(grad_check([&] { return probe(gather_cols_per_row(x, cols)); }, {x}));
    std::vector<bool> mask(r);
    for (std::size_t i = 0; i < r; ++i) mask[i] = bernoulli(rng, 0.5);
    const Tensor fill = random_tensor({c}, rng);
    out.push_back(grad_check([&] { return probe(replace_rows(x, mask, fill)); }, {x, fill}));
  }});
  cases.push_back({"CausalMaskThroughSoftmax", 18, 1, [](Rng& rng, Results& out) {
    const Tensor x = random_tensor({5, 5}, rng);
    out.push_back(grad_check([&] { return probe(softmax(causal_mask(x), 1)); }, {x}));
  }});
  cases.push_back({"RelativeGatherScatter", 19, kTrials, [](Rng& rng, Results& out) {
    const std::size_t len = dim_in(rng, 1, 8), clip = dim_in(rng, 1, 4);
    const Tensor rel = random_tensor({len, 2 * clip + 1}, rng);
    out.push_back(grad_check([&] { return probe(rel_gather(rel, clip)); }, {rel}));
    const Tensor w = random_tensor({len, len}, rng);
    out.push_back(grad_check([&] { return probe(rel_scatter(w, clip)); }, {w}));
  }});
  cases.push_back({"CrossEntropyWithSmoothing", 20, kTrials, [](Rng& rng, Results& out) {
    const std::size_t r = dim_in(rng, 1, 8), v = dim_in(rng, 2, 8);
    const Tensor logits = random_tensor({r, v}, rng, -3, 3);
    std::vector<std::size_t> targets(r);
    for (auto& y : targets) y = uniform_index(rng, v);
    out.push_back(grad_check([&] { return cross_entropy(logits, targets, 0.1); }, {logits}));
    out.push_back(grad_check(
        [&] { return cross_entropy(logits, targets, 0.0, Reduction::kSum); }, {logits}));
  }});
  cases.push_back({"DropoutWithFixedMask", 21, 1, [](Rng& rng, Results& out) {
    const Tensor x = random_tensor({6, 5}, rng);
    out.push_back(grad_check(
        [&] {
          std::mt19937_64 mask_rng(7);
          return probe(dropout(x, 0.3, mask_rng));
        },
        {x}));
  }});
  cases.push_back({"Attention", 22, kTrials, [](Rng& rng, Results& out) {
    const std::size_t len = dim_in(rng, 1, 8), heads = dim_in(rng, 1, 2);
    const std::size_t d = heads * dim_in(rng, 1, 4);
    RelPosAttentionConfig cfg{heads, d, dim_in(rng, 1, 3)};
    const Tensor q = random_tensor({len, d}, rng), k = random_tensor({len, d}, rng);
    const Tensor v = random_tensor({len, d}, rng);
    const Tensor rk = random_tensor({cfg.table_rows(), cfg.d_head()}, rng);
    const Tensor rv = random_tensor({cfg.table_rows(), cfg.d_head()}, rng);
    for (const bool causal : {false, true}) {
      out.push_back(grad_check(
          [&] { return probe(rel_attention(q, k, v, cfg, rk, rv, causal)); }, {q, k, v, rk, rv}));
      out.push_back(grad_check(
          [&] { return probe(dot_attention(q, k, v, heads, causal)); }, {q, k, v}));
    }
  }});
  cases.push_back({"InfoNce", 23, kTrials, [](Rng& rng, Results& out) {
    const std::size_t len = dim_in(rng, 4, 8), d = dim_in(rng, 2, 8);
    const Tensor c = random_tensor({len, d}, rng), q = random_tensor({len, d}, rng);
    const std::vector<std::size_t> masked = {0, 2, 3};
    std::vector<std::vector<std::size_t>> negatives;
    for (const std::size_t m : masked) {
      std::vector<std::size_t> row;
      for (int n = 0; n < 3; ++n) row.push_back((m + 1 + uniform_index(rng, len - 1)) % len);
      negatives.push_back(row);
    }
    out.push_back(grad_check([&] { return info_nce(c, q, masked, negatives, 0.1); }, {c, q}));
  }});
  return cases;
}

inline ModelConfig grad_check_model_config() {
  ModelConfig c;
  c.encoder.n_mels = 8;
  c.encoder.n_layers = 1;
  c.encoder.d_model = 8;
  c.encoder.n_heads = 2;
  c.encoder.conv_kernel_size = 3;
  c.encoder.ffn_expansion = 2;
  c.encoder.dropout = 0.0;
  c.encoder.max_relative_distance = 2;
  c.decoder.n_layers = 1;
  c.decoder.d_model = 8;
  c.decoder.n_heads = 2;
  c.decoder.ffn_expansion = 2;
  c.decoder.dropout = 0.0;
  c.decoder.n_units = 5;
  c.decoder.max_target_len = 16;
  c.decoder.max_relative_distance = 2;
  return c;
}

inline std::vector<GradCase> composite_grad_cases() {
  std::vector<GradCase> cases;
  cases.push_back({"TranslationLossOverEveryParameter", 30, 2,
                   [](Rng& rng, Results& out) {
                     S2stModel model(grad_check_model_config(), rng());
                     const std::size_t frames = 5 + uniform_index(rng, 4);
                     const Tensor mel = random_tensor({frames, 8}, rng, -4, 1, false);
                     UnitSequence target;
                     target.units = {uniform_index(rng, 5), uniform_index(rng, 5), 2};
                     target.reduced = true;
                     std::vector<Tensor> leaves;
                     for (const auto& [name, t] : model.params().tensors()) leaves.push_back(t);
                     out.push_back(grad_check(
                         [&] {
                           return model.decoder().teacher_forced_loss(model.memory(mel, {}),
                                                                      target, 0.1, {});
                         },
                         leaves));
                   }});
  cases.push_back({"ContrastiveLossOverEncoderParameters", 40, 1,
                   [](Rng& rng, Results& out) {
                     S2stModel model(grad_check_model_config(), rng());
                     const Tensor mel = random_tensor({24, 8}, rng, -4, 1, false);
                     std::vector<Tensor> leaves;
                     for (const auto& [name, t] : model.params().tensors()) {
                       if (param_group(name) == ParamGroup::kEncoder) leaves.push_back(t);
                     }
                     out.push_back(grad_check(
                         [&] {
                           Rng mask_rng(42);
                           const Tensor x = model.encoder().stem(mel, {});
                           const MaskedInput masked =
                               apply_span_mask(x, model.mask_embedding(), 0.3, 2, mask_rng);
                           const Tensor context =
                               model.pretrain_head()(model.encoder().run_blocks(masked.x, {}));
                           return contrastive_loss(context, x, masked.spec, 3, 0.1, mask_rng);
                         },
                         leaves));
                   }});
  return cases;
}

}  // namespace s2st::testing
