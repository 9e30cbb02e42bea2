#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "protonet/episodes.hpp"
#include "protonet/stats.hpp"

namespace protonet {

// Synthetic isotropic Gaussian classes --------------------------------------------

struct SyntheticSpec {
  std::size_t n_classes = 20;
  std::size_t dim = 16;
  std::size_t examples_per_class = 40;
  double mean_scale = 1.0;   // means uniform in [-mean_scale, mean_scale) per coordinate
  double noise_sigma = 0.35; // within-class standard deviation
  std::uint64_t seed = 0;

  void validate() const;
};

struct GaussianDataset {
  LabeledDataset data;
  std::vector<std::vector<double>> true_means;  // aligned with data.classes
  double noise_sigma = 0.0;
};

/// Draws every class mean first (class-major, coordinate-minor), then every
/// example of class 0, class 1, ... as mean + sigma * normal(). Class ids
/// are "class_000", "class_001", ...
GaussianDataset gen_gaussian_dataset(const SyntheticSpec& spec);

/// Nearest-true-mean classification of every query (the Bayes rule for equal
/// isotropic Gaussians), averaged per episode then across episodes.
/// `true_means` is indexed by the episodes' class_indices.
AccuracySummary bayes_accuracy_oracle(std::span<const std::vector<double>> true_means, double noise_sigma,
                                      std::span<const Episode> episodes);

/// Classes [0, count) and [count, n) as two datasets.
std::pair<LabeledDataset, LabeledDataset> split_classes(const LabeledDataset& data, std::size_t count);

// Images ---------------------------------------------------------------------------

/// Each rotation (90, 180 or 270 degrees counter-clockwise) of each class
/// becomes a new class "<id>/rot<deg>" placed right after its source class.
/// Images must be square, shaped [N x N] or [1 x N x N].
LabeledDataset rotation_augment(const LabeledDataset& data, std::span<const int> rotations);

/// out[i][j] = in[j][n - 1 - i] (one counter-clockwise quarter turn).
std::vector<double> rotate90(std::span<const double> image, std::size_t n);

// Files ------------------------------------------------------------------------------

/// Manifest JSON:
///   { "format_version": 1, "input_shape": [...],
///     "classes": [ {"id": "...", "files": ["a.pft", ...]}, ... ],
///     "attributes": [ {"id": "...", "file": "v.pft"}, ... ] }   (optional)
/// Paths are relative to the manifest's directory. A file whose shape equals
/// input_shape holds one example; shape [n, input_shape...] holds n.
LabeledDataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes one PFT1 file per class plus `manifest.json` into `dir`; returns
/// the manifest path.
std::filesystem::path write_dataset(const LabeledDataset& data, const std::filesystem::path& dir);

// Zero-shot attribute data ---------------------------------------------------------

struct AttributeDataset {
  LabeledDataset features;                      // image-domain examples per class
  std::vector<std::vector<double>> attributes;  // one vector per class, aligned

  std::size_t attribute_dim() const { return attributes.empty() ? 0 : attributes.front().size(); }
  std::size_t feature_dim() const { return features.example_size(); }
  /// Attribute rows for the given class positions, as [K x A].
  Tensor attribute_matrix(std::span<const std::size_t> class_indices) const;
};

AttributeDataset load_attribute_dataset(const std::filesystem::path& manifest_path);
std::filesystem::path write_attribute_dataset(const AttributeDataset& data, const std::filesystem::path& dir);

struct AttributeSpec {
  std::size_t n_classes = 100;
  std::size_t attribute_dim = 16;
  std::size_t feature_dim = 32;
  std::size_t examples_per_class = 20;
  double mean_noise = 0.1;    // class-mean deviation from the linear map
  double noise_sigma = 0.5;   // within-class feature noise
  std::uint64_t seed = 0;
};

/// Attributes v_k ~ N(0, I); a fixed map L with N(0, 1/A) entries; class
/// means L v_k + mean_noise * N(0, I); features mean + noise_sigma * N(0, I).
AttributeDataset gen_attribute_dataset(const AttributeSpec& spec);

std::pair<AttributeDataset, AttributeDataset> split_classes(const AttributeDataset& data, std::size_t count);

/// Per-coordinate centering and unit-variance scaling of the attribute
/// vectors (coordinates with zero variance are only centered).
void standardize_attributes(AttributeDataset& data);

}  // namespace protonet
