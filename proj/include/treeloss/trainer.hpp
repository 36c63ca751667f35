// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "treeloss/datagen.hpp"
#include "treeloss/losses.hpp"
#include "treeloss/mlp.hpp"

namespace treeloss {

struct TrainConfig {
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double lr_gamma = 0.999;        // per-epoch multiplicative decay
  int batch_images = 5;           // images per optimizer step
  int pixels_per_image = 1024;    // annotated pixels sampled per image per step
  int epochs = 50;
  std::uint64_t seed = 0;
  std::vector<int> hidden{64, 64};
  LossConfig loss;

  void validate() const;
};

/// Bias-corrected Adam over the model's parameter blocks.
class Adam {
 public:
  explicit Adam(const Mlp& model);

  /// One update with the given step-size. Throws on non-finite gradients
  /// (training divergence).
  void step(Mlp& model, const Mlp::Grads& grads, double lr, const TrainConfig& cfg);

  long steps_taken() const { return t_; }

 private:
  Mlp::Grads m_, v_;
  long t_ = 0;
};

/// Scale a pixel to unit l1 mass, direction preserved. All-zero pixels pass
/// through unchanged and bump the counter (degenerate sensor reading).
std::vector<double> l1_normalize(std::span<const double> pixel, long* zero_count = nullptr);

struct TrainResult {
  Mlp model;
  std::vector<double> epoch_loss;   // mean training loss per epoch
  std::vector<double> epoch_lr;     // lr * gamma^epoch, recorded for the trace
  long sampled_pixels = 0;
  long zero_pixels = 0;             // all-zero inputs seen by l1 normalization
  long unannotated_touched = 0;     // stays 0: positive-only supervision probe
};

/// Deterministic mini-batch training of the per-pixel classifier on the
/// annotated (positive-only) pixels of the selected images. Empty
/// image_indices means all images.
TrainResult train(const Dataset& data, const TrainConfig& cfg,
                  std::span<const int> image_indices = {});

/// Checkpoint file: magic, JSON header (dims + resolved config + digest),
/// little-endian float64 parameter blob.
void save_checkpoint(const std::string& path, const Mlp& model, const TrainConfig& cfg);
Mlp load_checkpoint(const std::string& path, TrainConfig* cfg_out = nullptr);

/// Loss trace CSV: epoch, lr, mean loss rows.
std::string trace_csv(const TrainResult& result);

}  // namespace treeloss
