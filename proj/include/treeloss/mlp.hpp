// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "treeloss/rng.hpp"

namespace treeloss {

/// Fully connected ReLU network mapping a band vector to leaf logits.
/// Parameters and arithmetic are double precision throughout.
class Mlp {
 public:
  struct Layer {
    int in = 0, out = 0;
    std::vector<double> w;  // out x in, row-major
    std::vector<double> b;  // out
  };

  /// Per-sample activation cache reused across forward/backward calls.
  struct Workspace {
    std::vector<std::vector<double>> pre;   // pre-activation per layer
    std::vector<std::vector<double>> post;  // post-activation per layer (last = logits)
    std::vector<double> input;
  };

  /// Parameter-shaped gradient accumulator.
  struct Grads {
    std::vector<Layer> layers;

    void zero();
    void scale(double s);
  };

  Mlp() = default;
  /// He-normal weights, zero biases.
  static Mlp init(int inputs, const std::vector<int>& hidden, int outputs, Rng& rng);

  int input_dim() const { return layers_.front().in; }
  int output_dim() const { return layers_.back().out; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  std::vector<int> hidden_sizes() const;

  std::size_t parameter_count() const;

  /// Logits for one input vector; activations cached in ws.
  std::span<const double> forward(std::span<const double> x, Workspace& ws) const;

  /// Accumulate parameter gradients for the cached sample given dLoss/dlogits.
  void backward(const Workspace& ws, std::span<const double> dlogits, Grads& grads) const;

  Grads make_grads() const;

  /// Flat parameter views in a fixed order (layer by layer, weights then bias).
  std::vector<double*> parameter_blocks();
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> params);

 private:
  std::vector<Layer> layers_;
};

}  // namespace treeloss
