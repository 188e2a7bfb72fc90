#include "codistillery/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "codistillery/errors.hpp"
#include "codistillery/rng.hpp"

namespace codistillery {
namespace {

constexpr std::uint64_t kMeansSalt = 0x6d65616e73;  // "means"
constexpr std::uint64_t kTrainSalt = 1;
constexpr std::uint64_t kValSalt = 2;
constexpr std::uint64_t kBayesSalt = 3;

Dataset draw(const MultiViewSpec& spec, const Tensor& means, std::size_t n, std::uint64_t seed, Split split) {
  Rng rng(seed);
  const std::size_t d = spec.input_dim();
  Dataset out{Tensor({n, d}), std::vector<int>(n), split, spec.num_classes};
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(rng.below(spec.num_classes));
    out.labels[i] = static_cast<int>(y);
    for (std::size_t j = 0; j < d; ++j) out.features.at(i, j) = means.at(y, j) + spec.noise * rng.normal();
  }
  return out;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

template <typename T>
void write_le(std::ofstream& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.write(buf, sizeof(T));
}

}  // namespace

double MultiViewSpec::separation_of(std::size_t view) const {
  return separation.size() == 1 ? separation[0] : separation.at(view);
}

void MultiViewSpec::validate() const {
  if (n_views == 0) throw ConfigError("must be >= 1", "data.n_views");
  if (dims_per_view == 0) throw ConfigError("must be >= 1", "data.dims_per_view");
  if (num_classes < 2) throw ConfigError("must be >= 2", "data.num_classes");
  if (separation.size() != 1 && separation.size() != n_views) {
    throw ConfigError("needs one entry or one per view", "data.separation");
  }
  for (double s : separation) {
    if (!(s >= 0.0)) throw ConfigError("must be >= 0", "data.separation");
  }
  if (!(noise > 0.0)) throw ConfigError("must be > 0", "data.noise");
  if (train_size == 0) throw ConfigError("must be >= 1", "data.train_size");
  if (val_size == 0) throw ConfigError("must be >= 1", "data.val_size");
}

Dataset Dataset::gather(std::span<const std::size_t> indices) const {
  const std::size_t d = features.cols();
  Dataset out{Tensor({indices.size(), d}), std::vector<int>(indices.size()), split, num_classes};
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t src = indices[r];
    if (src >= size()) throw ContractError("gather: index out of range");
    std::memcpy(out.features.ptr() + r * d, features.ptr() + src * d, d * sizeof(double));
    out.labels[r] = labels[src];
  }
  return out;
}

Tensor class_means(const MultiViewSpec& spec) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, kMeansSalt));
  const std::size_t dv = spec.dims_per_view;
  Tensor means({spec.num_classes, spec.input_dim()});
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t v = 0; v < spec.n_views; ++v) {
      std::vector<double> dir(dv);
      double norm2 = 0.0;
      while (norm2 == 0.0) {
        norm2 = 0.0;
        for (double& x : dir) {
          x = rng.normal();
          norm2 = norm2 + x * x;
        }
      }
      const double s = spec.separation_of(v) / std::sqrt(norm2);
      for (std::size_t j = 0; j < dv; ++j) means.at(c, v * dv + j) = s * dir[j];
    }
  }
  return means;
}

std::pair<Dataset, Dataset> generate_multiview(const MultiViewSpec& spec) {
  const Tensor means = class_means(spec);
  return {draw(spec, means, spec.train_size, mix_seed(spec.seed, kTrainSalt), Split::train),
          draw(spec, means, spec.val_size, mix_seed(spec.seed, kValSalt), Split::val)};
}

double bayes_accuracy(const MultiViewSpec& spec, std::span<const std::size_t> views, std::size_t mc_samples) {
  if (views.empty()) throw ContractError("bayes_accuracy: empty view subset");
  const Tensor means = class_means(spec);
  std::vector<std::size_t> cols;
  for (std::size_t v : views) {
    if (v >= spec.n_views) throw ContractError("bayes_accuracy: view index out of range");
    for (std::size_t j = 0; j < spec.dims_per_view; ++j) cols.push_back(v * spec.dims_per_view + j);
  }
  const std::size_t c = spec.num_classes;

  bool informative = false;
  for (std::size_t a = 1; a < c && !informative; ++a) {
    for (std::size_t j : cols) {
      if (means.at(a, j) != means.at(0, j)) {
        informative = true;
        break;
      }
    }
  }
  if (!informative) return 1.0 / static_cast<double>(c);

  if (c == 2) {
    double d2 = 0.0;
    for (std::size_t j : cols) {
      const double d = means.at(0, j) - means.at(1, j);
      d2 = d2 + d * d;
    }
    return normal_cdf(std::sqrt(d2) / (2.0 * spec.noise));
  }

  // Equal priors and isotropic noise: the Bayes rule is the nearest mean.
  Rng rng(mix_seed(spec.seed, kBayesSalt));
  std::size_t correct = 0;
  std::vector<double> x(cols.size());
  for (std::size_t s = 0; s < mc_samples; ++s) {
    const auto y = static_cast<std::size_t>(rng.below(c));
    for (std::size_t j = 0; j < cols.size(); ++j) x[j] = means.at(y, cols[j]) + spec.noise * rng.normal();
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t k = 0; k < c; ++k) {
      double d = 0.0;
      for (std::size_t j = 0; j < cols.size(); ++j) {
        const double diff = x[j] - means.at(k, cols[j]);
        d = d + diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    if (best == y) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(mc_samples);
}

Sampler::Sampler(std::size_t dataset_size, std::uint64_t seed, std::size_t group_id, SamplingMode mode)
    : size_(dataset_size),
      stream_seed_(mode == SamplingMode::coordinated ? seed : mix_seed(seed, group_id)),
      mode_(mode),
      permutation_(dataset_size) {
  if (dataset_size == 0) throw ContractError("sampler over an empty dataset");
  reshuffle();
}

void Sampler::reshuffle() {
  std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
  Rng rng(mix_seed(stream_seed_, epoch_));
  for (std::size_t i = size_; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(permutation_[i - 1], permutation_[j]);
  }
  cursor_ = 0;
}

std::vector<std::size_t> Sampler::next_indices(std::size_t batch) {
  if (batch == 0 || batch > size_) {
    throw ContractError("batch of " + std::to_string(batch) + " from a dataset of " + std::to_string(size_));
  }
  if (cursor_ + batch > size_) {
    ++epoch_;
    reshuffle();
  }
  std::vector<std::size_t> out(permutation_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               permutation_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch));
  cursor_ += batch;
  return out;
}

Minibatch next_minibatch(Sampler& sampler, const Dataset& data, std::size_t batch) {
  std::vector<std::size_t> idx = sampler.next_indices(batch);
  Dataset rows = data.gather(idx);
  return {std::move(rows.features), std::move(rows.labels), std::move(idx)};
}

Subsample subsample_fraction(const Dataset& train, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ConfigError("must be >= 1", "data.subsample");
  if (k > train.size()) throw ConfigError("fraction 1/k leaves no training data", "data.subsample");
  if (k == 1) return {train, 1};
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  const std::size_t keep = train.size() / k;
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(train.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(keep);
  return {train.gather(idx), k};
}

void export_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "codistillery-dataset 1\n"
      << "split " << (data.split == Split::train ? "train" : "val") << "\n"
      << "rows " << data.size() << "\n"
      << "cols " << data.features.cols() << "\n"
      << "classes " << data.num_classes << "\n"
      << "features f64le row-major\n"
      << "labels i32le\n"
      << "end\n";
  for (double v : data.features.data()) write_le(out, v);
  for (int y : data.labels) write_le<std::int32_t>(out, y);
  if (!out) throw std::runtime_error("short write to " + path.string());
}

}  // namespace codistillery
