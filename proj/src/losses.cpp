#include "codistillery/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "codistillery/errors.hpp"

namespace codistillery {
namespace {

void check_labels(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw DimensionError("logits must be rank 2, got " + shape_string(logits.shape()));
  if (labels.size() != logits.rows()) {
    throw DimensionError("label count " + std::to_string(labels.size()) + " does not match batch " +
                         std::to_string(logits.rows()));
  }
  const int c = static_cast<int>(logits.cols());
  for (int y : labels) {
    if (y < 0 || y >= c) throw ContractError("label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
  }
}

void check_pair(const Tensor& self, const Tensor& peer, const char* op) {
  if (!self.same_shape(peer) || self.rank() != 2) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(self.shape()) + " vs " +
                         shape_string(peer.shape()));
  }
}

// Row-wise log-sum-exp with max subtraction.
double log_sum_exp(const double* z, std::size_t n) {
  double m = z[0];
  for (std::size_t j = 1; j < n; ++j) m = std::max(m, z[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s = s + std::exp(z[j] - m);
  return m + std::log(s);
}

struct CrossEntropyRows {
  std::vector<double> loss;   // per row
  std::vector<double> probs;  // softmax, B x C
};

CrossEntropyRows cross_entropy_rows(const Tensor& logits, std::span<const int> labels, double smoothing) {
  check_labels(logits, labels);
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ContractError("label smoothing must lie in [0, 1)");
  const std::size_t b = logits.rows(), c = logits.cols();
  const double off = smoothing / static_cast<double>(c);
  const double on = (1.0 - smoothing) + off;
  CrossEntropyRows out{std::vector<double>(b), std::vector<double>(b * c)};
  for (std::size_t r = 0; r < b; ++r) {
    const double* z = logits.ptr() + r * c;
    const double lse = log_sum_exp(z, c);
    double l = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double q = static_cast<int>(j) == labels[r] ? on : off;
      l = l + q * (lse - z[j]);
      out.probs[r * c + j] = std::exp(z[j] - lse);
    }
    out.loss[r] = l;
  }
  return out;
}

// KL(softmax(peer) || softmax(self)) per row, plus softmax(self) and softmax(peer).
struct KlRows {
  std::vector<double> kl;
  std::vector<double> p_self;
  std::vector<double> p_peer;
};

KlRows kl_rows(const Tensor& self, const Tensor& peer) {
  check_pair(self, peer, "distill_kl");
  const std::size_t b = self.rows(), c = self.cols();
  KlRows out{std::vector<double>(b), std::vector<double>(b * c), std::vector<double>(b * c)};
  for (std::size_t r = 0; r < b; ++r) {
    const double* zs = self.ptr() + r * c;
    const double* zp = peer.ptr() + r * c;
    const double lse_s = log_sum_exp(zs, c);
    const double lse_p = log_sum_exp(zp, c);
    double kl = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double log_ps = zs[j] - lse_s;
      const double log_pp = zp[j] - lse_p;
      const double pp = std::exp(log_pp);
      if (pp > 0.0) kl = kl + pp * (log_pp - log_ps);
      out.p_self[r * c + j] = std::exp(log_ps);
      out.p_peer[r * c + j] = pp;
    }
    out.kl[r] = kl;
  }
  return out;
}

}  // namespace

std::string_view to_string(DistillKind kind) { return kind == DistillKind::mse ? "mse" : "kl"; }

std::optional<DistillKind> parse_distill_kind(std::string_view name) {
  if (name == "mse") return DistillKind::mse;
  if (name == "kl") return DistillKind::kl;
  return std::nullopt;
}

double cross_entropy(const Tensor& logits, std::span<const int> labels, double smoothing) {
  const auto rows = cross_entropy_rows(logits, labels, smoothing);
  return sum(rows.loss) / static_cast<double>(rows.loss.size());
}

Var cross_entropy(Tape& tape, Var logits, std::span<const int> labels, double smoothing) {
  auto rows = cross_entropy_rows(logits.value(), labels, smoothing);
  const std::size_t b = logits.value().rows();
  const double value = blocked_sum(rows.loss, 1, tape.row_block()) / static_cast<double>(b);
  std::vector<int> y(labels.begin(), labels.end());
  return tape.custom(Tensor::scalar(value), {logits},
                     [probs = std::move(rows.probs), y = std::move(y), smoothing](BackwardContext& ctx) {
                       Tensor* g = ctx.grad_input(0);
                       if (g == nullptr) return;
                       const std::size_t rows_n = g->rows(), c = g->cols();
                       const double coef = ctx.grad_output().item() / static_cast<double>(rows_n);
                       const double off = smoothing / static_cast<double>(c);
                       const double on = (1.0 - smoothing) + off;
                       for (std::size_t r = 0; r < rows_n; ++r) {
                         for (std::size_t j = 0; j < c; ++j) {
                           const double q = static_cast<int>(j) == y[r] ? on : off;
                           (*g)[r * c + j] = (*g)[r * c + j] + (probs[r * c + j] - q) * coef;
                         }
                       }
                     });
}

double distill_mse(const Tensor& self, const Tensor& peer) {
  check_pair(self, peer, "distill_mse");
  std::vector<double> sq(self.size());
  for (std::size_t i = 0; i < sq.size(); ++i) {
    const double d = self[i] - peer[i];
    sq[i] = d * d;
  }
  return sum(sq) / static_cast<double>(sq.size());
}

Var distill_mse(Tape& tape, Var self, const Tensor& peer) {
  const Tensor& s = self.value();
  check_pair(s, peer, "distill_mse");
  std::vector<double> sq(s.size());
  for (std::size_t i = 0; i < sq.size(); ++i) {
    const double d = s[i] - peer[i];
    sq[i] = d * d;
  }
  const double value = blocked_sum(sq, s.cols(), tape.row_block()) / static_cast<double>(sq.size());
  return tape.custom(Tensor::scalar(value), {self}, [peer](BackwardContext& ctx) {
    Tensor* g = ctx.grad_input(0);
    if (g == nullptr) return;
    const Tensor& s_val = ctx.input(0);
    const double coef = 2.0 * ctx.grad_output().item() / static_cast<double>(s_val.size());
    for (std::size_t i = 0; i < s_val.size(); ++i) (*g)[i] = (*g)[i] + (s_val[i] - peer[i]) * coef;
  });
}

double distill_kl(const Tensor& self, const Tensor& peer) {
  const auto rows = kl_rows(self, peer);
  return sum(rows.kl) / static_cast<double>(rows.kl.size());
}

Var distill_kl(Tape& tape, Var self, const Tensor& peer) {
  auto rows = kl_rows(self.value(), peer);
  const std::size_t b = self.value().rows();
  const double value = blocked_sum(rows.kl, 1, tape.row_block()) / static_cast<double>(b);
  return tape.custom(Tensor::scalar(value), {self},
                     [ps = std::move(rows.p_self), pp = std::move(rows.p_peer)](BackwardContext& ctx) {
                       Tensor* g = ctx.grad_input(0);
                       if (g == nullptr) return;
                       const double coef = ctx.grad_output().item() / static_cast<double>(g->rows());
                       for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] = (*g)[i] + (ps[i] - pp[i]) * coef;
                     });
}

double l2_penalty(const ModelSpec& spec, const Parameters& params) {
  double s = 0.0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    if (spec.layer_frozen(l)) continue;
    for (double v : params.at(weight_name(l)).data()) s = s + v * v;
  }
  return 0.5 * s;
}

Var l2_penalty(Tape& tape, const ModelSpec& spec, const BoundModel& model) {
  std::vector<Var> weights;
  double s = 0.0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    if (spec.layer_frozen(l)) continue;
    weights.push_back(model.weights.at(l));
    for (double v : model.weights[l].value().data()) s = s + v * v;
  }
  const std::size_t count = weights.size();
  return tape.custom(Tensor::scalar(0.5 * s), std::move(weights), [count](BackwardContext& ctx) {
    const double g = ctx.grad_output().item();
    for (std::size_t i = 0; i < count; ++i) {
      if (Tensor* gi = ctx.grad_input(i)) axpy_inplace(g, ctx.input(i), *gi);
    }
  });
}

LossValue codistill_objective(Tape& tape, Var logits, std::span<const int> labels,
                              std::span<const Tensor> peer_logits, double alpha, double lambda,
                              const ModelSpec& spec, const BoundModel& model, double smoothing,
                              DistillKind kind) {
  const Tensor& z = logits.value();
  if (z.rank() != 2 || labels.size() != z.rows()) {
    throw DimensionError("codistill_objective: batch of " + std::to_string(labels.size()) +
                         " labels for logits " + shape_string(z.shape()));
  }
  for (const Tensor& p : peer_logits) {
    if (p.rank() != 2 || p.rows() != z.rows()) {
      throw DimensionError("codistill_objective: peer logits " + shape_string(p.shape()) +
                           " inconsistent with batch " + shape_string(z.shape()));
    }
  }

  LossValue out;
  Var ce = cross_entropy(tape, logits, labels, smoothing);
  out.supervised = ce.value().item();
  Var root = ce;

  if (!peer_logits.empty()) {
    std::vector<Var> terms;
    for (const Tensor& p : peer_logits) {
      terms.push_back(kind == DistillKind::mse ? distill_mse(tape, logits, p) : distill_kl(tape, logits, p));
    }
    double total = 0.0;
    for (Var t : terms) total = total + t.value().item();
    const auto count = static_cast<double>(terms.size());
    out.distill = total / count;
    if (alpha != 0.0) {
      Var mean = tape.custom(Tensor::scalar(out.distill), terms, [count](BackwardContext& ctx) {
        const double g = ctx.grad_output().item() / count;
        for (std::size_t i = 0; i < static_cast<std::size_t>(count); ++i) {
          if (Tensor* gi = ctx.grad_input(i)) (*gi)[0] = (*gi)[0] + g;
        }
      });
      root = tape.add(root, tape.scale(mean, alpha));
    }
  }

  Var l2 = l2_penalty(tape, spec, model);
  out.l2 = l2.value().item();
  if (lambda != 0.0) root = tape.add(root, tape.scale(l2, lambda));

  out.scalar = (out.supervised + alpha * out.distill) + lambda * out.l2;
  out.root = root;
  return out;
}

}  // namespace codistillery
