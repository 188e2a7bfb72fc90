#pragma once

// MLP classifiers: affine -> relu stacks with un-normalized logits.
//
// Two optional masks give a model a restricted view of the data:
//   view_mask  - over the first hidden layer's units, applied after the
//                activation (disjoint masks split a shared first layer);
//   input_mask - over input features, applied before the first layer
//                (assigns whole generator views to a model).
// Masks multiply by 0/1, so masked and unmasked models share parameter shapes.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "codistillery/autodiff.hpp"
#include "codistillery/tensor.hpp"

namespace codistillery {

enum class Activation { relu };

struct ModelSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_widths;
  std::size_t num_classes = 0;
  Activation activation = Activation::relu;
  std::optional<std::vector<bool>> view_mask;
  std::optional<std::vector<bool>> input_mask;
  /// Leading layers (weight + bias) that never receive updates.
  std::size_t frozen_prefix = 0;

  std::size_t num_layers() const noexcept { return hidden_widths.size() + 1; }
  std::size_t fan_in(std::size_t layer) const;
  std::size_t fan_out(std::size_t layer) const;
  bool layer_frozen(std::size_t layer) const noexcept { return layer < frozen_prefix; }

  /// Throws ConfigError describing the first violated invariant.
  void validate() const;

  bool operator==(const ModelSpec&) const = default;
};

std::string weight_name(std::size_t layer);
std::string bias_name(std::size_t layer);

/// Named tensors in layer order: layer0.weight, layer0.bias, layer1.weight, ...
class Parameters {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void insert(std::string name, Tensor value);
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const;

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::vector<Entry>& entries() noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::vector<Entry> entries_;
};

bool bit_equal(const Parameters& a, const Parameters& b);

/// Glorot-uniform weights, zero biases. Identical (spec, seed) gives
/// bit-identical parameters.
Parameters init_parameters(const ModelSpec& spec, std::uint64_t seed);

/// Throws DimensionError when names or shapes disagree with `spec`.
void check_parameters(const ModelSpec& spec, const Parameters& params);

/// Parameters bound onto a tape: trainable layers as parameter leaves,
/// frozen layers as constants.
struct BoundModel {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

BoundModel bind(Tape& tape, const ModelSpec& spec, const Parameters& params);

/// Logits on the tape.
Var forward(Tape& tape, const ModelSpec& spec, const BoundModel& model, Var x);

/// Logits without a tape. Bit-identical to the taped forward pass.
Tensor predict(const ModelSpec& spec, const Parameters& params, const Tensor& x);

/// Top-1 accuracy; ties go to the lowest class index.
double accuracy(const Tensor& logits, std::span<const int> labels);

/// ||theta - theta0||_2 over the trainable (non-frozen) tensors.
double distance_from(const ModelSpec& spec, const Parameters& theta, const Parameters& theta0);

// Flat binary layout (all integers little-endian):
//   "CDPM"  u32 version=1  u32 tensor_count
//   per tensor: u16 name_len, name bytes, u32 rank, u64 dim[rank]
//   payload: every tensor's values in table order, row-major IEEE-754 f64
std::vector<std::uint8_t> serialize(const Parameters& params);
Parameters deserialize(std::span<const std::uint8_t> bytes);
/// Byte length of serialize() for parameters of `spec`, computed from the
/// spec alone.
std::size_t serialized_size(const ModelSpec& spec);

enum class SplitArm { frozen, pretrained_not_frozen, random_init };

std::string to_string(SplitArm arm);
std::optional<SplitArm> parse_split_arm(std::string_view name);

struct FamilyMember {
  ModelSpec spec;
  Parameters params;
};

/// Split the first hidden layer of `spec` into n_splits disjoint contiguous
/// unit masks and build one model per split. Layers after the first are
/// freshly initialized from `seed` in every arm; the first layer is copied
/// from `pretrained` (frozen or trainable) or freshly initialized.
std::vector<FamilyMember> make_split_family(const Parameters& pretrained, const ModelSpec& spec,
                                            std::size_t n_splits, SplitArm arm, std::uint64_t seed);

}  // namespace codistillery
