// SPDX-License-Identifier: Apache-2.0
#include "treeloss/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace treeloss {

void Mlp::Grads::zero() {
  for (auto& l : layers) {
    std::fill(l.w.begin(), l.w.end(), 0.0);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
}

void Mlp::Grads::scale(double s) {
  for (auto& l : layers) {
    for (double& x : l.w) x *= s;
    for (double& x : l.b) x *= s;
  }
}

Mlp Mlp::init(int inputs, const std::vector<int>& hidden, int outputs, Rng& rng) {
  if (inputs < 1 || outputs < 1) throw std::invalid_argument("mlp needs positive dimensions");
  Mlp m;
  int prev = inputs;
  std::vector<int> dims = hidden;
  dims.push_back(outputs);
  for (int d : dims) {
    if (d < 1) throw std::invalid_argument("mlp layer size must be positive");
    Layer l;
    l.in = prev;
    l.out = d;
    l.w.resize(static_cast<std::size_t>(d) * prev);
    l.b.assign(d, 0.0);
    const double scale = std::sqrt(2.0 / prev);
    for (double& w : l.w) w = rng.normal() * scale;
    m.layers_.push_back(std::move(l));
    prev = d;
  }
  return m;
}

std::vector<int> Mlp::hidden_sizes() const {
  std::vector<int> h;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h.push_back(layers_[i].out);
  return h;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.w.size() + l.b.size();
  return n;
}

std::span<const double> Mlp::forward(std::span<const double> x, Workspace& ws) const {
  if (static_cast<int>(x.size()) != input_dim())
    throw std::invalid_argument("input dimension mismatch");
  ws.input.assign(x.begin(), x.end());
  ws.pre.resize(layers_.size());
  ws.post.resize(layers_.size());

  const std::vector<double>* cur = &ws.input;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    auto& z = ws.pre[li];
    z.assign(l.out, 0.0);
    for (int o = 0; o < l.out; ++o) {
      const double* wrow = l.w.data() + static_cast<std::size_t>(o) * l.in;
      double acc = l.b[o];
      for (int i = 0; i < l.in; ++i) acc += wrow[i] * (*cur)[i];
      z[o] = acc;
    }
    auto& a = ws.post[li];
    a = z;
    if (li + 1 < layers_.size())
      for (double& v : a) v = v > 0.0 ? v : 0.0;  // ReLU on hidden layers
    cur = &a;
  }
  return ws.post.back();
}

void Mlp::backward(const Workspace& ws, std::span<const double> dlogits, Grads& grads) const {
  if (ws.post.size() != layers_.size())
    throw std::invalid_argument("workspace does not match a forward pass");
  if (static_cast<int>(dlogits.size()) != output_dim())
    throw std::invalid_argument("upstream gradient dimension mismatch");

  std::vector<double> delta(dlogits.begin(), dlogits.end());
  for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
    const Layer& l = layers_[li];
    const std::vector<double>& below =
        li == 0 ? ws.input : ws.post[static_cast<std::size_t>(li) - 1];
    Layer& g = grads.layers[li];
    for (int o = 0; o < l.out; ++o) {
      const double d = delta[o];
      g.b[o] += d;
      double* grow = g.w.data() + static_cast<std::size_t>(o) * l.in;
      for (int i = 0; i < l.in; ++i) grow[i] += d * below[i];
    }
    if (li == 0) break;
    std::vector<double> next(l.in, 0.0);
    for (int o = 0; o < l.out; ++o) {
      const double d = delta[o];
      const double* wrow = l.w.data() + static_cast<std::size_t>(o) * l.in;
      for (int i = 0; i < l.in; ++i) next[i] += d * wrow[i];
    }
    // ReLU mask of the layer below
    const auto& zprev = ws.pre[static_cast<std::size_t>(li) - 1];
    for (int i = 0; i < l.in; ++i)
      if (zprev[i] <= 0.0) next[i] = 0.0;
    delta = std::move(next);
  }
}

Mlp::Grads Mlp::make_grads() const {
  Grads g;
  g.layers.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    g.layers[i].in = layers_[i].in;
    g.layers[i].out = layers_[i].out;
    g.layers[i].w.assign(layers_[i].w.size(), 0.0);
    g.layers[i].b.assign(layers_[i].b.size(), 0.0);
  }
  return g;
}

std::vector<double*> Mlp::parameter_blocks() {
  std::vector<double*> blocks;
  for (auto& l : layers_) {
    blocks.push_back(l.w.data());
    blocks.push_back(l.b.data());
  }
  return blocks;
}

std::vector<double> Mlp::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers_) {
    out.insert(out.end(), l.w.begin(), l.w.end());
    out.insert(out.end(), l.b.begin(), l.b.end());
  }
  return out;
}

void Mlp::unflatten(std::span<const double> params) {
  if (params.size() != parameter_count())
    throw std::invalid_argument("parameter blob has wrong length");
  std::size_t off = 0;
  for (auto& l : layers_) {
    std::copy_n(params.begin() + off, l.w.size(), l.w.begin());
    off += l.w.size();
    std::copy_n(params.begin() + off, l.b.size(), l.b.begin());
    off += l.b.size();
  }
}

}  // namespace treeloss
