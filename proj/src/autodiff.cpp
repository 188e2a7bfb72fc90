#include "codistillery/autodiff.hpp"

#include <algorithm>

#include "codistillery/errors.hpp"
#include "codistillery/kernels.hpp"

namespace codistillery {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw ContractError("Var is not attached to a tape");
  return tape_->value(id_);
}

const Tensor& BackwardContext::input(std::size_t i) const {
  return tape_->nodes_[tape_->nodes_[node_].inputs.at(i)].value;
}

Tensor* BackwardContext::grad_input(std::size_t i) {
  return tape_->adjoint_slot(tape_->nodes_[node_].inputs.at(i));
}

std::size_t BackwardContext::row_block() const { return tape_->row_block_; }

Var Tape::push(Node node) {
  if (consumed_) throw ContractError("tape already differentiated; build a new tape");
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tape::Node& Tape::node(Var v) {
  if (v.tape_ != this) throw ContractError("Var belongs to a different tape");
  return nodes_.at(v.id_);
}

Tensor* Tape::adjoint_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (!n.has_adjoint) {
    n.adjoint = Tensor::zeros_like(n.value);
    n.has_adjoint = true;
  }
  return &n.adjoint;
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(std::string name, Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.is_parameter = true;
  n.name = std::move(name);
  return push(std::move(n));
}

Var Tape::custom(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (Var v : inputs) {
    const Node& in = node(v);
    n.inputs.push_back(v.id_);
    n.requires_grad = n.requires_grad || in.requires_grad;
  }
  n.backward = std::move(backward);
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  Tensor out = codistillery::matmul(node(a).value, node(b).value);
  return custom(std::move(out), {a, b}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    const Tensor& av = ctx.input(0);
    const Tensor& bv = ctx.input(1);
    if (Tensor* ga = ctx.grad_input(0)) {
      add_inplace(*ga, codistillery::matmul(g, transpose(bv)));
    }
    if (Tensor* gb = ctx.grad_input(1)) {
      const std::size_t rows = av.rows();
      const std::size_t block = ctx.row_block();
      if (block == 0 || block >= rows) {
        add_inplace(*gb, codistillery::matmul(transpose(av), g));
      } else {
        Tensor total = Tensor::zeros_like(*gb);
        for (std::size_t r0 = 0; r0 < rows; r0 += block) {
          const std::size_t r1 = std::min(rows, r0 + block);
          add_inplace(total, codistillery::matmul(transpose(av.slice_rows(r0, r1)), g.slice_rows(r0, r1)));
        }
        add_inplace(*gb, total);
      }
    }
  });
}

Var Tape::add(Var a, Var b) {
  return custom(codistillery::add(node(a).value, node(b).value), {a, b}, [](BackwardContext& ctx) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (Tensor* gi = ctx.grad_input(i)) add_inplace(*gi, ctx.grad_output());
    }
  });
}

Var Tape::sub(Var a, Var b) {
  return custom(codistillery::sub(node(a).value, node(b).value), {a, b}, [](BackwardContext& ctx) {
    if (Tensor* ga = ctx.grad_input(0)) add_inplace(*ga, ctx.grad_output());
    if (Tensor* gb = ctx.grad_input(1)) axpy_inplace(-1.0, ctx.grad_output(), *gb);
  });
}

Var Tape::mul(Var a, Var b) {
  return custom(codistillery::mul(node(a).value, node(b).value), {a, b}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    if (Tensor* ga = ctx.grad_input(0)) add_inplace(*ga, codistillery::mul(g, ctx.input(1)));
    if (Tensor* gb = ctx.grad_input(1)) add_inplace(*gb, codistillery::mul(g, ctx.input(0)));
  });
}

Var Tape::scale(Var a, double s) {
  return custom(codistillery::scale(node(a).value, s), {a}, [s](BackwardContext& ctx) {
    if (Tensor* ga = ctx.grad_input(0)) axpy_inplace(s, ctx.grad_output(), *ga);
  });
}

Var Tape::relu(Var a) {
  return custom(codistillery::relu(node(a).value), {a}, [](BackwardContext& ctx) {
    if (Tensor* ga = ctx.grad_input(0)) {
      const Tensor& x = ctx.input(0);
      kernels::active().relu_backward_acc(x.ptr(), ctx.grad_output().ptr(), ga->ptr(), x.size());
    }
  });
}

Var Tape::add_row(Var x, Var row) {
  const Tensor& xv = node(x).value;
  const Tensor& rv = node(row).value;
  if (xv.rank() != 2 || rv.size() != xv.cols()) {
    throw DimensionError("add_row: cannot broadcast " + shape_string(rv.shape()) + " over " +
                         shape_string(xv.shape()));
  }
  Tensor out(xv.shape());
  const std::size_t n = xv.cols();
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < xv.rows(); ++r) k.add(xv.ptr() + r * n, rv.ptr(), out.ptr() + r * n, n);
  return custom(std::move(out), {x, row}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    if (Tensor* gx = ctx.grad_input(0)) add_inplace(*gx, g);
    if (Tensor* gr = ctx.grad_input(1)) {
      const auto& kt = kernels::active();
      const std::size_t rows = g.rows(), n = g.cols();
      const std::size_t block = ctx.row_block() == 0 ? rows : ctx.row_block();
      Tensor total(gr->shape());
      for (std::size_t r0 = 0; r0 < rows; r0 += block) {
        Tensor partial(gr->shape());
        for (std::size_t r = r0; r < std::min(rows, r0 + block); ++r) {
          kt.add(partial.ptr(), g.ptr() + r * n, partial.ptr(), n);
        }
        add_inplace(total, partial);
      }
      add_inplace(*gr, total);
    }
  });
}

Var Tape::mul_row(Var x, const Tensor& mask) {
  const Tensor& xv = node(x).value;
  if (xv.rank() != 2 || mask.size() != xv.cols()) {
    throw DimensionError("mul_row: cannot broadcast " + shape_string(mask.shape()) + " over " +
                         shape_string(xv.shape()));
  }
  Tensor out(xv.shape());
  const std::size_t n = xv.cols();
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < xv.rows(); ++r) k.mul(xv.ptr() + r * n, mask.ptr(), out.ptr() + r * n, n);
  return custom(std::move(out), {x}, [mask](BackwardContext& ctx) {
    if (Tensor* gx = ctx.grad_input(0)) {
      const Tensor& g = ctx.grad_output();
      const std::size_t n = g.cols();
      const auto& kt = kernels::active();
      std::vector<double> tmp(n);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        kt.mul(g.ptr() + r * n, mask.ptr(), tmp.data(), n);
        kt.add(gx->ptr() + r * n, tmp.data(), gx->ptr() + r * n, n);
      }
    }
  });
}

Var Tape::sum(Var a) {
  const Tensor& av = node(a).value;
  const double s = blocked_sum(av.data(), av.rank() == 2 ? av.cols() : av.size(), row_block_);
  return custom(Tensor::scalar(s), {a}, [](BackwardContext& ctx) {
    if (Tensor* ga = ctx.grad_input(0)) {
      const double g = ctx.grad_output().item();
      for (double& v : ga->data()) v = v + g;
    }
  });
}

GradientMap Tape::backward(Var root) {
  if (consumed_) throw ContractError("backward called twice on the same tape");
  Node& r = node(root);
  if (r.value.size() != 1) {
    throw ContractError("backward requires a scalar root, got shape " + shape_string(r.value.shape()));
  }
  consumed_ = true;
  if (r.requires_grad) {
    r.adjoint = Tensor(r.value.shape(), 1.0);
    r.has_adjoint = true;
  }
  // Nodes are appended in creation order, which is a topological order.
  for (std::size_t id = root.id_ + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_adjoint || !n.backward) continue;
    BackwardContext ctx;
    ctx.tape_ = this;
    ctx.node_ = id;
    ctx.grad_out_ = &n.adjoint;
    ctx.out_ = &n.value;
    n.backward(ctx);
  }
  GradientMap grads;
  for (Node& n : nodes_) {
    if (!n.is_parameter) continue;
    grads.emplace(n.name, n.has_adjoint ? std::move(n.adjoint) : Tensor::zeros_like(n.value));
  }
  return grads;
}

}  // namespace codistillery
