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

// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// Every op that sees an input with requires_grad() records a node on the
// calling thread's Tape. backward() walks the tape in reverse, accumulates
// gradients into leaves and clears the tape. Tensors are cheap handles;
// copies alias the same buffer.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "s2st/error.hpp"

namespace s2st {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
  void zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }

  double item() const;
  double at(std::size_t i) const { return impl_->data.at(i); }
  double at(std::size_t r, std::size_t c) const;

  // Fresh leaf holding a copy of the data, detached from any graph.
  Tensor detach() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

class Tape {
 public:
  struct Node {
    std::shared_ptr<TensorImpl> output;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::function<void(const TensorImpl& out)> backward;
  };

  // Thread-local tape of the calling thread.
  static Tape& active();

  bool recording() const { return enabled_; }
  void set_recording(bool on) { enabled_ = on; }
  void record(Node node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  std::vector<Node> nodes_;
  bool enabled_ = true;
};

// Disables recording for the lifetime of the guard (evaluation, decoding).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(Tape::active().recording()) {
    Tape::active().set_recording(false);
  }
  ~NoGradGuard() { Tape::active().set_recording(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Populates dLoss/dLeaf for every requires_grad leaf reachable from `loss`,
// then clears the active tape. Throws kNotScalar unless loss has one element.
void backward(const Tensor& loss);

// ---- arithmetic -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// x[..., n] + bias[n]; the only broadcast the library supports.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor tanh(const Tensor& x);
// Splits the last axis in halves (a, b) and returns a * sigmoid(b).
Tensor glu(const Tensor& x);

// Numerically stabilized softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x);  // last axis
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
// Rows scaled to unit L2 norm; eps guards zero rows.
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

// x [T, C_in], kernel [w, C_in, C_out] -> [T', C_out], cross-correlation.
Tensor conv1d(const Tensor& x, const Tensor& kernel, std::size_t stride,
              std::size_t padding);
// x [T, C], kernel [w, C], stride 1, symmetric padding (w-1)/2.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel);

// Inverted dropout. Identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
// out[i, c] = x[i, cols[i][c]]; every row selects the same number of columns.
Tensor gather_cols_per_row(const Tensor& x,
                           const std::vector<std::vector<std::size_t>>& cols);
// Rows flagged in `mask` are replaced by `fill` [d]; gradient for those rows
// flows to `fill`.
Tensor replace_rows(const Tensor& x, const std::vector<bool>& mask,
                    const Tensor& fill);
// Sets entries above the diagonal (j > i) to -inf.
Tensor causal_mask(const Tensor& scores);

// Relative-position helpers for square [T, T] attention.
// rel_gather: R [T, 2k+1] -> S [T, T], S[i, j] = R[i, clip(j - i, -k, k) + k].
Tensor rel_gather(const Tensor& rel, std::size_t clip);
// rel_scatter: A [T, T] -> B [T, 2k+1], B[i, r] = sum over j mapping to r.
Tensor rel_scatter(const Tensor& weights, std::size_t clip);

enum class Reduction { kMean, kSum };

// Label-smoothed cross-entropy over rows of logits [T, V]:
// (1 - eps) * NLL(target) + eps * mean_v NLL(v).
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                     double label_smoothing = 0.0,
                     Reduction reduction = Reduction::kMean);

// ---- initialization -------------------------------------------------------

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng);

}  // namespace s2st
