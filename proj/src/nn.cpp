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

#include "s2st/nn.hpp"

#include <algorithm>
#include <cmath>

namespace s2st {

Tensor ParamStore::add(const std::string& name, Tensor t) {
  if (params_.count(name)) throw Error(Errc::kConfig, "duplicate parameter " + name);
  t.set_requires_grad(true);
  params_.emplace(name, t);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(Errc::kConfig, "unknown parameter " + name);
  return it->second;
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : params_) {
    Tensor h = t;
    h.zero_grad();
  }
}

std::size_t ParamStore::load(const TensorMap& values, const std::string& prefix) {
  std::size_t copied = 0;
  for (const auto& [name, src] : values) {
    if (!name.starts_with(prefix)) continue;
    auto it = params_.find(name);
    if (it == params_.end()) continue;
    if (it->second.shape() != src.shape()) {
      throw Error(Errc::kShapeMismatch, "parameter " + name + " is " +
                                            shape_str(it->second.shape()) + ", checkpoint has " +
                                            shape_str(src.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), it->second.mutable_data().begin());
    ++copied;
  }
  return copied;
}

TensorMap ParamStore::snapshot(const std::string& prefix) const {
  TensorMap out;
  for (const auto& [name, t] : params_) {
    if (name.starts_with(prefix)) out.emplace(name, t.detach());
  }
  return out;
}

Linear Linear::create(ParamStore& ps, const std::string& name, std::size_t in,
                      std::size_t out, Rng& rng) {
  Linear l;
  l.weight = ps.add(name + ".weight", xavier_uniform({in, out}, in, out, rng));
  l.bias = ps.add(name + ".bias", Tensor::zeros({out}));
  return l;
}

LayerNorm LayerNorm::create(ParamStore& ps, const std::string& name, std::size_t dim) {
  LayerNorm n;
  n.gamma = ps.add(name + ".gamma", Tensor::full({dim}, 1.0));
  n.beta = ps.add(name + ".beta", Tensor::zeros({dim}));
  return n;
}

FeedForward FeedForward::create(ParamStore& ps, const std::string& name, std::size_t d,
                                std::size_t expansion, Rng& rng) {
  FeedForward f;
  f.norm = LayerNorm::create(ps, name + ".norm", d);
  f.up = Linear::create(ps, name + ".up", d, d * expansion, rng);
  f.down = Linear::create(ps, name + ".down", d * expansion, d, rng);
  return f;
}

Tensor FeedForward::operator()(const Tensor& x, const ForwardContext& ctx) const {
  Tensor h = ctx.drop(silu(up(norm(x))));
  return ctx.drop(down(h));
}

Tensor sinusoidal_positions(std::size_t len, std::size_t d) {
  std::vector<double> pe(len * d);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double a = static_cast<double>(t) * rate;
      pe[t * d + i] = (i % 2 == 0) ? std::sin(a) : std::cos(a);
    }
  }
  return Tensor::from({len, d}, std::move(pe));
}

}  // namespace s2st
