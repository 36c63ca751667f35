// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "treeloss/rng.hpp"
#include "treeloss/tree.hpp"

namespace treeloss {

/// H x W x B cube of nonnegative reflectance values, band-fastest layout.
struct SpectralImage {
  int height = 0, width = 0, bands = 0;
  std::vector<float> values;

  float at(int y, int x, int b) const {
    return values[(static_cast<std::size_t>(y) * width + x) * bands + b];
  }
  float& at(int y, int x, int b) {
    return values[(static_cast<std::size_t>(y) * width + x) * bands + b];
  }
};

/// Per-pixel labels: -1 unannotated, 1..C leaf classes, 0 out-of-distribution
/// ground truth (only emitted for dedicated OOD evaluation images).
struct AnnotationField {
  int height = 0, width = 0;
  std::vector<std::int32_t> labels;

  std::int32_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::int32_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
};

struct LabeledImage {
  SpectralImage cube;
  AnnotationField labels;
};

struct Dataset {
  LabelTree tree;
  std::vector<LabeledImage> images;      // cross-validation pool
  std::vector<LabeledImage> ood_images;  // held-out-class evaluation pool
  std::vector<std::vector<int>> folds;   // validation image indices per fold
};

/// Generator parameters for the synthetic hierarchy-correlated benchmark.
/// Class mean spectra share offsets along the tree so that spectral distance
/// grows with tree distance; annotations are blob-shaped regions around each
/// class patch.
struct GenSpec {
  int tops = 4, mids = 3, leaves = 2;  // branching: tops x mids-per-top x leaves-per-mid
  int images = 40;
  int height = 64, width = 64, bands = 16;
  int blob_count = 8;              // class patches per image
  double branch_scale = 0.5;       // top-branch spectral offset scale
  double mid_scale = 0.25;         // mid-node offset scale
  double leaf_scale = 0.12;        // leaf offset scale
  double noise_scale = 1.0;        // per-pixel noise
  double annotated_fraction = 0.3;
  std::vector<int> heldout;        // leaf class codes (1..C) excluded from training data
  int ood_images = 0;              // extra images containing held-out classes
  int folds = 5;
  std::uint64_t seed = 0;
};

/// Balanced 3-level tree for the given shape: root, tops, mids, leaves, with
/// ids assigned level by level so leaf order groups by branch.
LabelTree gen_tree(const GenSpec& spec);

/// Deterministic synthetic dataset, including fold splits.
Dataset gen_dataset(const GenSpec& spec);

/// Image-level disjoint validation folds over n images.
std::vector<std::vector<int>> split_folds(int n_images, int folds, std::uint64_t seed);

/// On-disk layout: directory with tree.json, raw cubes (little-endian float32)
/// and labels (little-endian int32), described by manifest.json.
void save_dataset(const Dataset& data, const std::string& dir);
Dataset load_dataset(const std::string& manifest_path);

}  // namespace treeloss
