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

#include "s2st/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "s2st/random.hpp"

namespace s2st {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kEmptyOutput: return "EmptyOutput";
    case Errc::kIndexOutOfVocab: return "IndexOutOfVocab";
    case Errc::kNotScalar: return "NotScalar";
    case Errc::kUnsupportedFormat: return "UnsupportedFormat";
    case Errc::kCorruptFile: return "CorruptFile";
    case Errc::kTooShort: return "TooShort";
    case Errc::kTooFewPoints: return "TooFewPoints";
    case Errc::kDimMismatch: return "DimMismatch";
    case Errc::kEmptyInput: return "EmptyInput";
    case Errc::kMissingDurations: return "MissingDurations";
    case Errc::kNoMaskedPositions: return "NoMaskedPositions";
    case Errc::kPrefixTooLong: return "PrefixTooLong";
    case Errc::kEmptyTarget: return "EmptyTarget";
    case Errc::kUtteranceTooLong: return "UtteranceTooLong";
    case Errc::kFeatureSpaceMismatch: return "FeatureSpaceMismatch";
    case Errc::kCodebookMismatch: return "CodebookMismatch";
    case Errc::kLengthMismatch: return "LengthMismatch";
    case Errc::kEmptyCorpus: return "EmptyCorpus";
    case Errc::kEmptyRef: return "EmptyRef";
    case Errc::kTranscriberFailure: return "TranscriberFailure";
    case Errc::kMalformedManifest: return "MalformedManifest";
    case Errc::kProviderUnavailable: return "ProviderUnavailable";
    case Errc::kProviderFailure: return "ProviderFailure";
    case Errc::kDuplicateId: return "DuplicateId";
    case Errc::kNonFiniteLoss: return "NonFiniteLoss";
    case Errc::kConfig: return "ConfigError";
    case Errc::kIo: return "IoError";
  }
  return "Unknown";
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (numel(shape) != data.size()) {
    throw Error(Errc::kShapeMismatch, "shape " + shape_str(shape) + " holds " +
                                          std::to_string(numel(shape)) +
                                          " elements, got " +
                                          std::to_string(data.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

double Tensor::item() const {
  if (size() != 1) throw Error(Errc::kNotScalar, shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return impl_->data.at(r * impl_->shape.at(1) + c);
}

Tensor Tensor::detach() const { return from(shape(), impl_->data); }

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

namespace {

using Impl = std::shared_ptr<TensorImpl>;
using BackwardFn = std::function<void(const TensorImpl&)>;

Tensor finish(Shape shape, std::vector<double> data,
              std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  auto out = std::make_shared<TensorImpl>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  Tape& tape = Tape::active();
  bool needs = false;
  for (const auto* t : inputs) needs = needs || t->requires_grad();
  if (needs && tape.recording()) {
    out->requires_grad = true;
    Tape::Node node;
    node.output = out;
    for (const auto* t : inputs) node.inputs.push_back(t->impl());
    node.backward = std::move(fn);
    tape.record(std::move(node));
  }
  return Tensor(std::move(out));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw Error(Errc::kShapeMismatch, std::string(op) + ": expected rank " +
                                          std::to_string(rank) + ", got " +
                                          shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(Errc::kShapeMismatch, std::string(op) + ": " +
                                          shape_str(a.shape()) + " vs " +
                                          shape_str(b.shape()));
  }
}

// Accumulation target for an input, or nullptr when it needs no gradient.
double* grad_of(const Impl& t) {
  if (!t->requires_grad) return nullptr;
  t->ensure_grad();
  return t->grad.data();
}

template <class F>
Tensor unary(const Tensor& x, F&& f) {
  std::vector<double> y(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xd[i]);
  return Tensor::from(x.shape(), std::move(y));
}

double sigmoid_scalar(double v) {
  return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

}  // namespace

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw Error(Errc::kNotScalar, "backward on " + shape_str(loss.shape()));
  }
  Tape& tape = Tape::active();
  if (!loss.requires_grad()) {
    tape.clear();
    return;
  }
  for (const auto& node : tape.nodes()) {
    node.output->grad.assign(node.output->data.size(), 0.0);
  }
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0;
  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    it->backward(*it->output);
  }
  tape.clear();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw Error(Errc::kShapeMismatch, "matmul " + shape_str(a.shape()) + " @ " +
                                          shape_str(b.shape()));
  }
  std::vector<double> c(m * n, 0.0);
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      const double* brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  Impl ai = a.impl(), bi = b.impl();
  return finish({m, n}, std::move(c), {&a, &b},
                [ai, bi, m, k, n](const TensorImpl& out) {
                  const double* g = out.grad.data();
                  if (double* ga = grad_of(ai)) {
                    const double* bd = bi->data.data();
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) {
                          acc += g[i * n + j] * bd[p * n + j];
                        }
                        ga[i * k + p] += acc;
                      }
                    }
                  }
                  if (double* gb = grad_of(bi)) {
                    const double* ad = ai->data.data();
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t p = 0; p < k; ++p) {
                        const double av = ad[i * k + p];
                        for (std::size_t j = 0; j < n; ++j) {
                          gb[p * n + j] += av * g[i * n + j];
                        }
                      }
                    }
                  }
                });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> y(r * c);
  const auto ad = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = ad[i * c + j];
  }
  Impl ai = a.impl();
  return finish({c, r}, std::move(y), {&a}, [ai, r, c](const TensorImpl& out) {
    if (double* ga = grad_of(ai)) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += out.grad[j * r + i];
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  Impl ai = a.impl(), bi = b.impl();
  return finish(a.shape(), std::move(y), {&a, &b}, [ai, bi](const TensorImpl& out) {
    if (double* ga = grad_of(ai)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) ga[i] += out.grad[i];
    }
    if (double* gb = grad_of(bi)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) gb[i] += out.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] - b.data()[i];
  Impl ai = a.impl(), bi = b.impl();
  return finish(a.shape(), std::move(y), {&a, &b}, [ai, bi](const TensorImpl& out) {
    if (double* ga = grad_of(ai)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) ga[i] += out.grad[i];
    }
    if (double* gb = grad_of(bi)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) gb[i] -= out.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  Impl ai = a.impl(), bi = b.impl();
  return finish(a.shape(), std::move(y), {&a, &b}, [ai, bi](const TensorImpl& out) {
    if (double* ga = grad_of(ai)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) {
        ga[i] += out.grad[i] * bi->data[i];
      }
    }
    if (double* gb = grad_of(bi)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) {
        gb[i] += out.grad[i] * ai->data[i];
      }
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * factor;
  Impl ai = a.impl();
  return finish(a.shape(), std::move(y), {&a}, [ai, factor](const TensorImpl& out) {
    if (double* ga = grad_of(ai)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) ga[i] += out.grad[i] * factor;
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() == 0 || bias.rank() != 1 || bias.dim(0) != x.shape().back()) {
    throw Error(Errc::kShapeMismatch, "add_bias " + shape_str(x.shape()) + " + " +
                                          shape_str(bias.shape()));
  }
  const std::size_t n = bias.dim(0);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] + bias.data()[i % n];
  Impl xi = x.impl(), bi = bias.impl();
  return finish(x.shape(), std::move(y), {&x, &bias}, [xi, bi, n](const TensorImpl& out) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) gx[i] += out.grad[i];
    }
    if (double* gb = grad_of(bi)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) gb[i % n] += out.grad[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Impl xi = x.impl();
  return finish({}, {s}, {&x}, [xi](const TensorImpl& out) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += out.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw Error(Errc::kEmptyInput, "mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw Error(Errc::kShapeMismatch, "reshape " + shape_str(x.shape()) + " -> " +
                                          shape_str(shape));
  }
  std::vector<double> y(x.data().begin(), x.data().end());
  Impl xi = x.impl();
  return finish(std::move(shape), std::move(y), {&x}, [xi](const TensorImpl& out) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) gx[i] += out.grad[i];
    }
  });
}

Tensor relu(const Tensor& x) {
  Tensor y = unary(x, [](double v) { return v > 0 ? v : 0.0; });
  Impl xi = x.impl();
  return finish(x.shape(), std::move(y.impl()->data), {&x}, [xi](const TensorImpl& out) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) {
        if (xi->data[i] > 0) gx[i] += out.grad[i];
      }
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = unary(x, sigmoid_scalar);
  Impl xi = x.impl();
  return finish(x.shape(), std::move(y.impl()->data), {&x}, [xi](const TensorImpl& out) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) {
        const double s = out.data[i];
        gx[i] += out.grad[i] * s * (1.0 - s);
      }
    }
  });
}

Tensor silu(const Tensor& x) {
  Tensor y = unary(x, [](double v) { return v * sigmoid_scalar(v); });
  Impl xi = x.impl();
  return finish(x.shape(), std::move(y.impl()->data), {&x}, [xi](const TensorImpl& out) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) {
        const double v = xi->data[i];
        const double s = sigmoid_scalar(v);
        gx[i] += out.grad[i] * (s + v * s * (1.0 - s));
      }
    }
  });
}

Tensor tanh(const Tensor& x) {
  Tensor y = unary(x, [](double v) { return std::tanh(v); });
  Impl xi = x.impl();
  return finish(x.shape(), std::move(y.impl()->data), {&x}, [xi](const TensorImpl& out) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) {
        gx[i] += out.grad[i] * (1.0 - out.data[i] * out.data[i]);
      }
    }
  });
}

Tensor glu(const Tensor& x) {
  if (x.rank() == 0 || x.shape().back() % 2 != 0) {
    throw Error(Errc::kShapeMismatch, "glu needs an even last axis, got " +
                                          shape_str(x.shape()));
  }
  const std::size_t two_c = x.shape().back(), c = two_c / 2;
  const std::size_t rows = x.size() / two_c;
  Shape shape = x.shape();
  shape.back() = c;
  std::vector<double> y(rows * c);
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      y[r * c + j] = xd[r * two_c + j] * sigmoid_scalar(xd[r * two_c + c + j]);
    }
  }
  Impl xi = x.impl();
  return finish(std::move(shape), std::move(y), {&x},
                [xi, rows, c, two_c](const TensorImpl& out) {
                  if (double* gx = grad_of(xi)) {
                    const double* xd = xi->data.data();
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t j = 0; j < c; ++j) {
                        const double a = xd[r * two_c + j];
                        const double s = sigmoid_scalar(xd[r * two_c + c + j]);
                        const double g = out.grad[r * c + j];
                        gx[r * two_c + j] += g * s;
                        gx[r * two_c + c + j] += g * a * s * (1.0 - s);
                      }
                    }
                  }
                });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw Error(Errc::kShapeMismatch, "softmax axis " + std::to_string(axis) +
                                          " on " + shape_str(x.shape()));
  }
  const auto& shape = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];
  std::vector<double> y(x.size());
  const auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < len; ++l) m = std::max(m, xd[base + l * inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        const double e = std::exp(xd[base + l * inner] - m);
        y[base + l * inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < len; ++l) y[base + l * inner] /= z;
    }
  }
  Impl xi = x.impl();
  return finish(shape, std::move(y), {&x},
                [xi, outer, inner, len](const TensorImpl& out) {
                  double* gx = grad_of(xi);
                  if (!gx) return;
                  for (std::size_t o = 0; o < outer; ++o) {
                    for (std::size_t in = 0; in < inner; ++in) {
                      const std::size_t base = o * len * inner + in;
                      double dot = 0.0;
                      for (std::size_t l = 0; l < len; ++l) {
                        dot += out.grad[base + l * inner] * out.data[base + l * inner];
                      }
                      for (std::size_t l = 0; l < len; ++l) {
                        const std::size_t i = base + l * inner;
                        gx[i] += out.data[i] * (out.grad[i] - dot);
                      }
                    }
                  }
                });
}

Tensor log_softmax(const Tensor& x) {
  if (x.rank() == 0) throw Error(Errc::kShapeMismatch, "log_softmax on scalar");
  const std::size_t n = x.shape().back(), rows = x.size() / n;
  std::vector<double> y(x.size());
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) m = std::max(m, xd[r * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(xd[r * n + j] - m);
    const double lz = m + std::log(z);
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = xd[r * n + j] - lz;
  }
  Impl xi = x.impl();
  return finish(x.shape(), std::move(y), {&x}, [xi, rows, n](const TensorImpl& out) {
    double* gx = grad_of(xi);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += out.grad[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t i = r * n + j;
        gx[i] += out.grad[i] - std::exp(out.data[i]) * gs;
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.rank() == 0 || gamma.size() != x.shape().back() ||
      beta.size() != x.shape().back()) {
    throw Error(Errc::kShapeMismatch, "layer_norm " + shape_str(x.shape()) +
                                          " with gamma " + shape_str(gamma.shape()));
  }
  const std::size_t n = x.shape().back(), rows = x.size() / n;
  std::vector<double> y(x.size()), xhat(x.size()), inv_std(rows);
  const auto xd = x.data(), gd = gamma.data(), bd = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xd[r * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xd[r * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t i = r * n + j;
      xhat[i] = (xd[i] - mu) * inv_std[r];
      y[i] = gd[j] * xhat[i] + bd[j];
    }
  }
  Impl xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
  return finish(x.shape(), std::move(y), {&x, &gamma, &beta},
                [xi, gi, bi, rows, n, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](const TensorImpl& out) {
                  const double* g = out.grad.data();
                  if (double* gg = grad_of(gi)) {
                    for (std::size_t i = 0; i < out.grad.size(); ++i) {
                      gg[i % n] += g[i] * xhat[i];
                    }
                  }
                  if (double* gb = grad_of(bi)) {
                    for (std::size_t i = 0; i < out.grad.size(); ++i) gb[i % n] += g[i];
                  }
                  if (double* gx = grad_of(xi)) {
                    const double* gamma_d = gi->data.data();
                    const double inv_n = 1.0 / static_cast<double>(n);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double m1 = 0.0, m2 = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        const double gh = g[r * n + j] * gamma_d[j];
                        m1 += gh;
                        m2 += gh * xhat[r * n + j];
                      }
                      m1 *= inv_n;
                      m2 *= inv_n;
                      for (std::size_t j = 0; j < n; ++j) {
                        const std::size_t i = r * n + j;
                        const double gh = g[i] * gamma_d[j];
                        gx[i] += inv_std[r] * (gh - m1 - xhat[i] * m2);
                      }
                    }
                  }
                });
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  require_rank(x, 2, "l2_normalize_rows");
  const std::size_t rows = x.dim(0), n = x.dim(1);
  std::vector<double> y(x.size()), norms(rows);
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += xd[r * n + j] * xd[r * n + j];
    norms[r] = std::sqrt(s + eps);
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = xd[r * n + j] / norms[r];
  }
  Impl xi = x.impl();
  return finish(x.shape(), std::move(y), {&x},
                [xi, rows, n, norms = std::move(norms)](const TensorImpl& out) {
                  double* gx = grad_of(xi);
                  if (!gx) return;
                  for (std::size_t r = 0; r < rows; ++r) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                      dot += out.grad[r * n + j] * out.data[r * n + j];
                    }
                    for (std::size_t j = 0; j < n; ++j) {
                      const std::size_t i = r * n + j;
                      gx[i] += (out.grad[i] - out.data[i] * dot) / norms[r];
                    }
                  }
                });
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, std::size_t stride,
              std::size_t padding) {
  require_rank(x, 2, "conv1d");
  require_rank(kernel, 3, "conv1d kernel");
  const std::size_t t_in = x.dim(0), c_in = x.dim(1);
  const std::size_t w = kernel.dim(0), c_out = kernel.dim(2);
  if (kernel.dim(1) != c_in) {
    throw Error(Errc::kShapeMismatch, "conv1d input channels " + std::to_string(c_in) +
                                          " vs kernel " + shape_str(kernel.shape()));
  }
  if (w == 0 || stride == 0) {
    throw Error(Errc::kShapeMismatch, "conv1d needs width >= 1 and stride >= 1");
  }
  if (t_in + 2 * padding < w) {
    throw Error(Errc::kEmptyOutput, "conv1d input of " + std::to_string(t_in) +
                                        " frames is shorter than kernel " +
                                        std::to_string(w));
  }
  const std::size_t t_out = (t_in + 2 * padding - w) / stride + 1;
  std::vector<double> y(t_out * c_out, 0.0);
  const auto xd = x.data(), kd = kernel.data();
  for (std::size_t t = 0; t < t_out; ++t) {
    double* yrow = y.data() + t * c_out;
    for (std::size_t u = 0; u < w; ++u) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + u) -
                                 static_cast<std::ptrdiff_t>(padding);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_in)) continue;
      const double* xrow = xd.data() + static_cast<std::size_t>(src) * c_in;
      for (std::size_t c = 0; c < c_in; ++c) {
        const double xv = xrow[c];
        const double* krow = kd.data() + (u * c_in + c) * c_out;
        for (std::size_t o = 0; o < c_out; ++o) yrow[o] += xv * krow[o];
      }
    }
  }
  Impl xi = x.impl(), ki = kernel.impl();
  return finish({t_out, c_out}, std::move(y), {&x, &kernel},
                [xi, ki, t_in, c_in, w, c_out, t_out, stride,
                 padding](const TensorImpl& out) {
                  double* gx = grad_of(xi);
                  double* gk = grad_of(ki);
                  const double* xd = xi->data.data();
                  const double* kd = ki->data.data();
                  for (std::size_t t = 0; t < t_out; ++t) {
                    const double* grow = out.grad.data() + t * c_out;
                    for (std::size_t u = 0; u < w; ++u) {
                      const std::ptrdiff_t src =
                          static_cast<std::ptrdiff_t>(t * stride + u) -
                          static_cast<std::ptrdiff_t>(padding);
                      if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_in)) continue;
                      const std::size_t s = static_cast<std::size_t>(src);
                      for (std::size_t c = 0; c < c_in; ++c) {
                        const std::size_t kbase = (u * c_in + c) * c_out;
                        if (gx) {
                          double acc = 0.0;
                          for (std::size_t o = 0; o < c_out; ++o) {
                            acc += grow[o] * kd[kbase + o];
                          }
                          gx[s * c_in + c] += acc;
                        }
                        if (gk) {
                          const double xv = xd[s * c_in + c];
                          for (std::size_t o = 0; o < c_out; ++o) {
                            gk[kbase + o] += xv * grow[o];
                          }
                        }
                      }
                    }
                  }
                });
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel) {
  require_rank(x, 2, "depthwise_conv1d");
  require_rank(kernel, 2, "depthwise_conv1d kernel");
  const std::size_t t_len = x.dim(0), c = x.dim(1), w = kernel.dim(0);
  if (kernel.dim(1) != c || w % 2 == 0) {
    throw Error(Errc::kShapeMismatch, "depthwise_conv1d kernel " +
                                          shape_str(kernel.shape()) + " for input " +
                                          shape_str(x.shape()));
  }
  const std::size_t pad = (w - 1) / 2;
  std::vector<double> y(t_len * c, 0.0);
  const auto xd = x.data(), kd = kernel.data();
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t u = 0; u < w; ++u) {
      const std::ptrdiff_t src =
          static_cast<std::ptrdiff_t>(t + u) - static_cast<std::ptrdiff_t>(pad);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
      for (std::size_t ch = 0; ch < c; ++ch) {
        y[t * c + ch] += xd[static_cast<std::size_t>(src) * c + ch] * kd[u * c + ch];
      }
    }
  }
  Impl xi = x.impl(), ki = kernel.impl();
  return finish(x.shape(), std::move(y), {&x, &kernel},
                [xi, ki, t_len, c, w, pad](const TensorImpl& out) {
                  double* gx = grad_of(xi);
                  double* gk = grad_of(ki);
                  for (std::size_t t = 0; t < t_len; ++t) {
                    for (std::size_t u = 0; u < w; ++u) {
                      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + u) -
                                                 static_cast<std::ptrdiff_t>(pad);
                      if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
                      const std::size_t s = static_cast<std::size_t>(src);
                      for (std::size_t ch = 0; ch < c; ++ch) {
                        const double g = out.grad[t * c + ch];
                        if (gx) gx[s * c + ch] += g * ki->data[u * c + ch];
                        if (gk) gk[u * c + ch] += g * xi->data[s * c + ch];
                      }
                    }
                  }
                });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = bernoulli(rng, rate) ? 0.0 : keep_scale;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] * mask[i];
  Impl xi = x.impl();
  return finish(x.shape(), std::move(y), {&x},
                [xi, mask = std::move(mask)](const TensorImpl& out) {
                  if (double* gx = grad_of(xi)) {
                    for (std::size_t i = 0; i < out.grad.size(); ++i) {
                      gx[i] += out.grad[i] * mask[i];
                    }
                  }
                });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin > end || end > cols) {
    throw Error(Errc::kShapeMismatch, "slice_cols out of range");
  }
  const std::size_t w = end - begin;
  std::vector<double> y(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < w; ++j) y[r * w + j] = x.data()[r * cols + begin + j];
  }
  Impl xi = x.impl();
  return finish({rows, w}, std::move(y), {&x},
                [xi, rows, cols, begin, w](const TensorImpl& out) {
                  if (double* gx = grad_of(xi)) {
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t j = 0; j < w; ++j) {
                        gx[r * cols + begin + j] += out.grad[r * w + j];
                      }
                    }
                  }
                });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin > end || end > rows) {
    throw Error(Errc::kShapeMismatch, "slice_rows out of range");
  }
  std::vector<double> y(x.data().begin() + begin * cols, x.data().begin() + end * cols);
  Impl xi = x.impl();
  return finish({end - begin, cols}, std::move(y), {&x},
                [xi, begin, cols](const TensorImpl& out) {
                  if (double* gx = grad_of(xi)) {
                    for (std::size_t i = 0; i < out.grad.size(); ++i) {
                      gx[begin * cols + i] += out.grad[i];
                    }
                  }
                });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error(Errc::kShapeMismatch, "concat_cols of nothing");
  const std::size_t rows = parts.front().dim(0);
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != rows) throw Error(Errc::kShapeMismatch, "concat_cols row mismatch");
    offsets.push_back(total);
    total += p.dim(1);
  }
  std::vector<double> y(rows * total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = parts[k].dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < w; ++j) {
        y[r * total + offsets[k] + j] = parts[k].data()[r * w + j];
      }
    }
  }
  auto out = std::make_shared<TensorImpl>();
  out->shape = {rows, total};
  out->data = std::move(y);
  bool needs = false;
  for (const auto& p : parts) needs = needs || p.requires_grad();
  Tape& tape = Tape::active();
  if (needs && tape.recording()) {
    out->requires_grad = true;
    Tape::Node node;
    node.output = out;
    std::vector<Impl> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    node.inputs = impls;
    node.backward = [impls, offsets, rows, total](const TensorImpl& o) {
      for (std::size_t k = 0; k < impls.size(); ++k) {
        double* g = grad_of(impls[k]);
        if (!g) continue;
        const std::size_t w = impls[k]->shape[1];
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < w; ++j) {
            g[r * w + j] += o.grad[r * total + offsets[k] + j];
          }
        }
      }
    };
    tape.record(std::move(node));
  }
  return Tensor(std::move(out));
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank(table, 2, "gather_rows");
  const std::size_t v = table.dim(0), d = table.dim(1);
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  std::vector<double> y(idx.size() * d);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= v) {
      throw Error(Errc::kIndexOutOfVocab, "index " + std::to_string(idx[r]) +
                                              " >= " + std::to_string(v));
    }
    std::copy_n(table.data().begin() + idx[r] * d, d, y.begin() + r * d);
  }
  Impl ti = table.impl();
  const std::size_t n = idx.size();
  return finish({n, d}, std::move(y), {&table},
                [ti, d, idx = std::move(idx)](const TensorImpl& out) {
                  if (double* g = grad_of(ti)) {
                    for (std::size_t r = 0; r < idx.size(); ++r) {
                      for (std::size_t j = 0; j < d; ++j) {
                        g[idx[r] * d + j] += out.grad[r * d + j];
                      }
                    }
                  }
                });
}

Tensor gather_cols_per_row(const Tensor& x,
                           const std::vector<std::vector<std::size_t>>& cols) {
  require_rank(x, 2, "gather_cols_per_row");
  const std::size_t rows = x.dim(0), c = x.dim(1);
  if (cols.size() != rows) throw Error(Errc::kShapeMismatch, "gather_cols_per_row rows");
  const std::size_t k = rows ? cols.front().size() : 0;
  std::vector<double> y(rows * k);
  for (std::size_t r = 0; r < rows; ++r) {
    if (cols[r].size() != k) throw Error(Errc::kShapeMismatch, "ragged column sets");
    for (std::size_t j = 0; j < k; ++j) {
      if (cols[r][j] >= c) throw Error(Errc::kShapeMismatch, "column out of range");
      y[r * k + j] = x.data()[r * c + cols[r][j]];
    }
  }
  Impl xi = x.impl();
  return finish({rows, k}, std::move(y), {&x}, [xi, c, k, cols](const TensorImpl& out) {
    if (double* g = grad_of(xi)) {
      for (std::size_t r = 0; r < cols.size(); ++r) {
        for (std::size_t j = 0; j < k; ++j) g[r * c + cols[r][j]] += out.grad[r * k + j];
      }
    }
  });
}

Tensor replace_rows(const Tensor& x, const std::vector<bool>& mask,
                    const Tensor& fill) {
  require_rank(x, 2, "replace_rows");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  if (mask.size() != rows || fill.size() != d) {
    throw Error(Errc::kShapeMismatch, "replace_rows mask/fill shape");
  }
  std::vector<double> y(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < rows; ++r) {
    if (mask[r]) std::copy_n(fill.data().begin(), d, y.begin() + r * d);
  }
  Impl xi = x.impl(), fi = fill.impl();
  return finish(x.shape(), std::move(y), {&x, &fill},
                [xi, fi, mask, d](const TensorImpl& out) {
                  double* gx = grad_of(xi);
                  double* gf = grad_of(fi);
                  for (std::size_t r = 0; r < mask.size(); ++r) {
                    for (std::size_t j = 0; j < d; ++j) {
                      const double g = out.grad[r * d + j];
                      if (mask[r]) {
                        if (gf) gf[j] += g;
                      } else if (gx) {
                        gx[r * d + j] += g;
                      }
                    }
                  }
                });
}

Tensor causal_mask(const Tensor& scores) {
  require_rank(scores, 2, "causal_mask");
  const std::size_t rows = scores.dim(0), cols = scores.dim(1);
  std::vector<double> y(scores.data().begin(), scores.data().end());
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = i + 1; j < cols; ++j) {
      y[i * cols + j] = -std::numeric_limits<double>::infinity();
    }
  }
  Impl si = scores.impl();
  return finish(scores.shape(), std::move(y), {&scores},
                [si, rows, cols](const TensorImpl& out) {
                  if (double* g = grad_of(si)) {
                    for (std::size_t i = 0; i < rows; ++i) {
                      for (std::size_t j = 0; j <= i && j < cols; ++j) {
                        g[i * cols + j] += out.grad[i * cols + j];
                      }
                    }
                  }
                });
}

namespace {
std::size_t rel_bucket(std::size_t i, std::size_t j, std::size_t clip) {
  const auto k = static_cast<std::ptrdiff_t>(clip);
  std::ptrdiff_t d = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(i);
  d = std::clamp(d, -k, k);
  return static_cast<std::size_t>(d + k);
}
}  // namespace

Tensor rel_gather(const Tensor& rel, std::size_t clip) {
  require_rank(rel, 2, "rel_gather");
  const std::size_t t = rel.dim(0), width = 2 * clip + 1;
  if (rel.dim(1) != width) throw Error(Errc::kShapeMismatch, "rel_gather width");
  std::vector<double> y(t * t);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      y[i * t + j] = rel.data()[i * width + rel_bucket(i, j, clip)];
    }
  }
  Impl ri = rel.impl();
  return finish({t, t}, std::move(y), {&rel}, [ri, t, width, clip](const TensorImpl& out) {
    if (double* g = grad_of(ri)) {
      for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < t; ++j) {
          g[i * width + rel_bucket(i, j, clip)] += out.grad[i * t + j];
        }
      }
    }
  });
}

Tensor rel_scatter(const Tensor& weights, std::size_t clip) {
  require_rank(weights, 2, "rel_scatter");
  const std::size_t t = weights.dim(0), width = 2 * clip + 1;
  if (weights.dim(1) != t) throw Error(Errc::kShapeMismatch, "rel_scatter needs square");
  std::vector<double> y(t * width, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      y[i * width + rel_bucket(i, j, clip)] += weights.data()[i * t + j];
    }
  }
  Impl wi = weights.impl();
  return finish({t, width}, std::move(y), {&weights},
                [wi, t, width, clip](const TensorImpl& out) {
                  if (double* g = grad_of(wi)) {
                    for (std::size_t i = 0; i < t; ++i) {
                      for (std::size_t j = 0; j < t; ++j) {
                        g[i * t + j] += out.grad[i * width + rel_bucket(i, j, clip)];
                      }
                    }
                  }
                });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                     double label_smoothing, Reduction reduction) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t rows = logits.dim(0), v = logits.dim(1);
  if (targets.size() != rows) {
    throw Error(Errc::kShapeMismatch, "cross_entropy: " + std::to_string(targets.size()) +
                                          " targets for " + std::to_string(rows) + " rows");
  }
  if (rows == 0) throw Error(Errc::kEmptyTarget, "cross_entropy over zero rows");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw Error(Errc::kConfig, "label smoothing must lie in [0, 1)");
  }
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  for (auto t : tgt) {
    if (t >= v) {
      throw Error(Errc::kIndexOutOfVocab,
                  "target " + std::to_string(t) + " >= vocab " + std::to_string(v));
    }
  }
  const double eps = label_smoothing;
  const auto xd = logits.data();
  std::vector<double> probs(logits.size());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * v;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < v; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      probs[r * v + j] = std::exp(row[j] - m);
      z += probs[r * v + j];
    }
    for (std::size_t j = 0; j < v; ++j) probs[r * v + j] /= z;
    const double lz = m + std::log(z);
    double loss = lz - row[tgt[r]];
    if (eps > 0.0) {
      double mean_x = 0.0;
      for (std::size_t j = 0; j < v; ++j) mean_x += row[j];
      mean_x /= static_cast<double>(v);
      loss = (1.0 - eps) * loss + eps * (lz - mean_x);
    }
    total += loss;
  }
  const double factor =
      reduction == Reduction::kMean ? 1.0 / static_cast<double>(rows) : 1.0;
  Impl li = logits.impl();
  return finish({}, {total * factor}, {&logits},
                [li, rows, v, eps, factor, tgt = std::move(tgt),
                 probs = std::move(probs)](const TensorImpl& out) {
                  double* g = grad_of(li);
                  if (!g) return;
                  const double scale_g = out.grad[0] * factor;
                  const double uniform = eps / static_cast<double>(v);
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < v; ++j) {
                      double target_p = uniform;
                      if (j == tgt[r]) target_p += 1.0 - eps;
                      g[r * v + j] += scale_g * (probs[r * v + j] - target_p);
                    }
                  }
                });
}

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = uniform(rng, -limit, limit);
  return Tensor::from(std::move(shape), std::move(data), true);
}

}  // namespace s2st
