#pragma once

// Supervised loss, distillation losses and the per-model codistillation
// objective. Peer logits always enter as constants: no gradient reaches the
// peer that produced them.

#include <optional>
#include <span>
#include <string_view>

#include "codistillery/autodiff.hpp"
#include "codistillery/model.hpp"
#include "codistillery/tensor.hpp"

namespace codistillery {

enum class DistillKind { mse, kl };

std::string_view to_string(DistillKind kind);
std::optional<DistillKind> parse_distill_kind(std::string_view name);

/// Mean over the batch of -sum_c q_c log softmax(z)_c with
/// q = (1 - eps) onehot(label) + eps / C.
Var cross_entropy(Tape& tape, Var logits, std::span<const int> labels, double smoothing);
double cross_entropy(const Tensor& logits, std::span<const int> labels, double smoothing);

/// Mean over all B*C entries of (self - peer)^2, uncentered.
Var distill_mse(Tape& tape, Var self, const Tensor& peer);
double distill_mse(const Tensor& self, const Tensor& peer);

/// Mean over the batch of KL(softmax(peer) || softmax(self)).
Var distill_kl(Tape& tape, Var self, const Tensor& peer);
double distill_kl(const Tensor& self, const Tensor& peer);

/// 0.5 * sum of squared entries over trainable weight tensors (biases and
/// frozen layers excluded).
Var l2_penalty(Tape& tape, const ModelSpec& spec, const BoundModel& model);
double l2_penalty(const ModelSpec& spec, const Parameters& params);

struct LossValue {
  double scalar = 0.0;
  double supervised = 0.0;
  double distill = 0.0;
  double l2 = 0.0;
  Var root;
};

/// supervised + alpha * mean_j D(self, peer_j) + lambda * l2.
///
/// With no peers the distillation term is omitted (distill = 0). The
/// distillation term is also left off the tape when alpha == 0, and the l2
/// term when lambda == 0, so degenerate settings reproduce plain SGD exactly.
/// `scalar` equals (supervised + alpha * distill) + lambda * l2 evaluated in
/// that order, which is how the root node computes it.
LossValue codistill_objective(Tape& tape, Var logits, std::span<const int> labels,
                              std::span<const Tensor> peer_logits, double alpha, double lambda,
                              const ModelSpec& spec, const BoundModel& model, double smoothing,
                              DistillKind kind = DistillKind::mse);

}  // namespace codistillery
