#pragma once

// Reference computations written independently of the library's kernels
// and tape, used as test oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "codistillery/model.hpp"
#include "codistillery/rng.hpp"
#include "codistillery/tensor.hpp"

namespace oracle {

using codistillery::ModelSpec;
using codistillery::Parameters;
using codistillery::Tensor;

inline ModelSpec mlp_spec(std::size_t input_dim, std::vector<std::size_t> widths, std::size_t classes) {
  ModelSpec spec;
  spec.input_dim = input_dim;
  spec.hidden_widths = std::move(widths);
  spec.num_classes = classes;
  return spec;
}

inline Tensor random_tensor(codistillery::Rng& rng, Tensor::Shape shape, double lo = -2.0, double hi = 2.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Pre-activation sign pattern of every hidden layer, row-major.
using Pattern = std::vector<bool>;

/// Plain triple-loop MLP, masks applied as in the model definition.
inline Tensor mlp_forward(const ModelSpec& spec, const Parameters& params, const Tensor& x,
                          Pattern* pattern = nullptr) {
  const std::size_t rows = x.rows();
  std::vector<std::vector<double>> act(rows, std::vector<double>(x.cols()));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const bool keep = !spec.input_mask || (*spec.input_mask)[c];
      act[r][c] = keep ? x.at(r, c) : 0.0;
    }
  }
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const Tensor& w = params.at(codistillery::weight_name(l));
    const Tensor& b = params.at(codistillery::bias_name(l));
    const std::size_t out = spec.fan_out(l);
    const bool hidden = l + 1 < spec.num_layers();
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> next(out);
      for (std::size_t j = 0; j < out; ++j) {
        double s = b[j];
        for (std::size_t i = 0; i < act[r].size(); ++i) s += act[r][i] * w.at(i, j);
        if (hidden) {
          if (pattern) pattern->push_back(s > 0.0);
          s = s > 0.0 ? s : 0.0;
          if (l == 0 && spec.view_mask && !(*spec.view_mask)[j]) s = 0.0;
        }
        next[j] = s;
      }
      act[r] = std::move(next);
    }
  }
  Tensor logits({rows, spec.num_classes});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < spec.num_classes; ++c) logits.at(r, c) = act[r][c];
  }
  return logits;
}

inline std::vector<double> log_softmax(const Tensor& z, std::size_t r) {
  double mx = z.at(r, 0);
  for (std::size_t c = 1; c < z.cols(); ++c) mx = std::max(mx, z.at(r, c));
  double s = 0.0;
  for (std::size_t c = 0; c < z.cols(); ++c) s += std::exp(z.at(r, c) - mx);
  std::vector<double> out(z.cols());
  for (std::size_t c = 0; c < z.cols(); ++c) out[c] = z.at(r, c) - mx - std::log(s);
  return out;
}

inline double cross_entropy(const Tensor& z, const std::vector<int>& labels, double eps) {
  const double classes = static_cast<double>(z.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto ls = log_softmax(z, r);
    for (std::size_t c = 0; c < z.cols(); ++c) {
      const double q = (static_cast<int>(c) == labels[r] ? 1.0 - eps : 0.0) + eps / classes;
      total -= q * ls[c];
    }
  }
  return total / static_cast<double>(z.rows());
}

inline double mse(const Tensor& a, const Tensor& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

inline double kl(const Tensor& self, const Tensor& peer) {
  double total = 0.0;
  for (std::size_t r = 0; r < self.rows(); ++r) {
    const auto lp = log_softmax(peer, r);
    const auto ls = log_softmax(self, r);
    for (std::size_t c = 0; c < self.cols(); ++c) total += std::exp(lp[c]) * (lp[c] - ls[c]);
  }
  return total / static_cast<double>(self.rows());
}

/// Step used by every finite-difference check.
inline constexpr double kStep = 1e-5;

/// |analytic - numeric| / max(|analytic|, |numeric|, kRelFloor). The floor
/// keeps round-off in near-zero gradients (about eps * |f| / h ~ 1e-11) from
/// dominating the ratio.
inline constexpr double kRelFloor = 1e-4;

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kRelFloor});
}

inline double central_difference(const std::function<double()>& f, double& coordinate, double h = kStep) {
  const double saved = coordinate;
  coordinate = saved + h;
  const double up = f();
  coordinate = saved - h;
  const double down = f();
  coordinate = saved;
  return (up - down) / (2.0 * h);
}

}  // namespace oracle
