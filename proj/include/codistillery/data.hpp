#pragma once

// Synthetic multi-view classification data.
//
// Each class c has, in every view v, a mean vector: a seeded random unit
// direction scaled by the view's separation s_v. A sample draws its label
// uniformly, then every view's features from N(mean[c][v], noise^2 I).
// Views are contiguous blocks of dims_per_view input columns.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "codistillery/tensor.hpp"

namespace codistillery {

struct MultiViewSpec {
  std::size_t n_views = 8;
  std::size_t dims_per_view = 4;
  std::size_t num_classes = 4;
  /// One entry per view, or a single entry shared by all views.
  std::vector<double> separation{1.0};
  double noise = 1.0;
  std::size_t train_size = 4000;
  std::size_t val_size = 1000;
  std::uint64_t seed = 0;

  std::size_t input_dim() const noexcept { return n_views * dims_per_view; }
  double separation_of(std::size_t view) const;
  void validate() const;
};

enum class Split { train, val };

struct Dataset {
  Tensor features;          // N x input_dim
  std::vector<int> labels;  // N
  Split split = Split::train;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  /// Rows in `indices` order.
  Dataset gather(std::span<const std::size_t> indices) const;
};

/// num_classes x input_dim matrix of class means.
Tensor class_means(const MultiViewSpec& spec);

std::pair<Dataset, Dataset> generate_multiview(const MultiViewSpec& spec);

/// Accuracy of the Bayes rule that sees only the features of `views`.
/// Closed form Phi(||dmu|| / (2 noise)) for two classes; seeded Monte Carlo
/// with `mc_samples` draws otherwise. Throws ContractError for an empty set.
double bayes_accuracy(const MultiViewSpec& spec, std::span<const std::size_t> views,
                      std::size_t mc_samples = 200000);

enum class SamplingMode { independent, coordinated };

/// Epoch-wise shuffled minibatch index stream with drop-last batching.
/// Coordinated samplers ignore the group id, so every group sharing a seed
/// draws the identical stream.
class Sampler {
 public:
  Sampler(std::size_t dataset_size, std::uint64_t seed, std::size_t group_id, SamplingMode mode);

  std::vector<std::size_t> next_indices(std::size_t batch);

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t cursor() const noexcept { return cursor_; }
  SamplingMode mode() const noexcept { return mode_; }
  const std::vector<std::size_t>& permutation() const noexcept { return permutation_; }

 private:
  void reshuffle();

  std::size_t size_;
  std::uint64_t stream_seed_;
  SamplingMode mode_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> permutation_;
};

struct Minibatch {
  Tensor x;
  std::vector<int> y;
  std::vector<std::size_t> indices;
};

Minibatch next_minibatch(Sampler& sampler, const Dataset& data, std::size_t batch);

struct Subsample {
  Dataset data;
  std::size_t epoch_multiplier = 1;
};

/// Seeded uniform subsample of floor(N / k) rows without replacement. The
/// multiplier k keeps the total number of updates unchanged when epochs are
/// multiplied by it.
Subsample subsample_fraction(const Dataset& train, std::size_t k, std::uint64_t seed);

/// Text header terminated by a line "end", then row-major f64 little-endian
/// features followed by i32 little-endian labels.
void export_dataset(const Dataset& data, const std::filesystem::path& path);

}  // namespace codistillery
