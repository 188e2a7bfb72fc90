#pragma once

// Reverse-mode differentiation over a fixed operator set.
//
// A Tape records every operation as a node holding its forward value. Leaves
// are either parameters (named, receive gradients) or constants (no gradient
// ever flows into them). backward() may be called once per tape.
//
// relu'(0) is 0.

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "codistillery/tensor.hpp"

namespace codistillery {

class Tape;

/// Handle to a tape node. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using GradientMap = std::map<std::string, Tensor>;

/// View handed to a custom op's backward rule.
class BackwardContext {
 public:
  const Tensor& grad_output() const { return *grad_out_; }
  const Tensor& output() const { return *out_; }
  const Tensor& input(std::size_t i) const;
  /// Accumulator for input i's adjoint, or nullptr when that input needs no
  /// gradient. Contributions must be added into it, never assigned.
  Tensor* grad_input(std::size_t i);
  std::size_t row_block() const;

 private:
  friend class Tape;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
  const Tensor* grad_out_ = nullptr;
  const Tensor* out_ = nullptr;
};

using BackwardFn = std::function<void(BackwardContext&)>;

class Tape {
 public:
  /// `row_block` > 0 makes every reduction over the leading (batch)
  /// dimension proceed in blocks of that many rows, see blocked_sum().
  explicit Tape(std::size_t row_block = 0) : row_block_(row_block) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t row_block() const noexcept { return row_block_; }

  Var constant(Tensor value);
  Var parameter(std::string name, Tensor value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var relu(Var a);
  /// x[B x n] + row[n] broadcast over rows (bias add).
  Var add_row(Var x, Var row);
  /// x[B x n] * mask[n] broadcast over rows; the mask is a constant.
  Var mul_row(Var x, const Tensor& mask);
  /// Sum of every entry to a scalar (blocked over rows when row_block > 0).
  Var sum(Var a);

  /// Register an op whose forward value was computed by the caller.
  Var custom(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Reverse sweep from a scalar root. Returns gradients for every parameter
  /// leaf (zeros when the root does not depend on it). Throws ContractError
  /// for a non-scalar root or a second call.
  GradientMap backward(Var root);

  std::size_t node_count() const noexcept { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }

 private:
  friend class BackwardContext;

  struct Node {
    Tensor value;
    Tensor adjoint;
    bool has_adjoint = false;
    bool requires_grad = false;
    bool is_parameter = false;
    std::string name;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  Var push(Node node);
  Node& node(Var v);
  Tensor* adjoint_slot(std::size_t id);

  std::vector<Node> nodes_;
  std::size_t row_block_ = 0;
  bool consumed_ = false;
};

}  // namespace codistillery
