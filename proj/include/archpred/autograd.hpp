#pragma once

// Tape-based reverse-mode automatic differentiation over rank-2 tensors.
//
// A Tape records every operation executed on it together with a closure that
// propagates the output gradient to the operation's parents. Parameters live
// in a ParamStore and are referenced (not copied) by tape leaves; backward()
// returns their gradients as a Gradients object aligned with the store, so
// many tapes can read one store concurrently.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "archpred/errors.hpp"
#include "archpred/tensor.hpp"

namespace archpred {

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

class ParamStore {
 public:
  std::size_t add(std::string name, Tensor value, bool trainable = true) {
    if (index_.contains(name)) throw ContractError("duplicate parameter name " + name);
    index_.emplace(name, params_.size());
    params_.push_back(Parameter{std::move(name), std::move(value), trainable});
    return params_.size() - 1;
  }

  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw KeyError("no parameter named " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.contains(name); }

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t total_numel() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].name != b[i].name || a[i].trainable != b[i].trainable || !(a[i].value == b[i].value)) return false;
    }
    return true;
  }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gradient buffers aligned slot-for-slot with a ParamStore.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamStore& store) {
    grads_.reserve(store.size());
    for (const auto& p : store) grads_.emplace_back(p.value.shape(), 0.0);
  }

  Tensor& operator[](std::size_t i) { return grads_[i]; }
  const Tensor& operator[](std::size_t i) const { return grads_[i]; }
  std::size_t size() const { return grads_.size(); }

  void add(const Gradients& other) {
    if (other.size() != size()) throw DimensionError("gradient set size mismatch");
    for (std::size_t i = 0; i < grads_.size(); ++i) {
      auto dst = grads_[i].data();
      auto src = other.grads_[i].data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }

  void scale(double s) {
    for (auto& g : grads_)
      for (double& v : g.data()) v *= s;
  }

  void zero() {
    for (auto& g : grads_)
      for (double& v : g.data()) v = 0.0;
  }

 private:
  std::vector<Tensor> grads_;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Propagates the gradient of node `self` into its parents.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push(std::move(value), nullptr, false, {}); }

  Var input(Tensor value, bool requires_grad = true) { return push(std::move(value), nullptr, requires_grad, {}); }

  /// Leaf bound to a stored parameter. The parameter tensor is referenced,
  /// so the store must outlive the tape and must not change until backward()
  /// has run.
  Var param(const ParamStore& store, std::size_t slot) {
    if (store_ && store_ != &store) throw ContractError("tape already bound to a different parameter store");
    store_ = &store;
    Node node;
    node.external = &store[slot].value;
    node.requires_grad = store[slot].trainable;
    node.param_slot = static_cast<std::ptrdiff_t>(slot);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
  }

  /// Records a computed value. The node requires a gradient iff any parent
  /// does; `backward` is dropped otherwise.
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward, const char* op_name = "op") {
    require_finite(value, op_name);
    bool needs = false;
    for (std::size_t p : parents) needs = needs || nodes_.at(p).requires_grad;
    return push(std::move(value), needs ? std::move(backward) : nullptr, needs, std::move(parents));
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of a node that requires one, or nullptr. Allocated on
  /// first use during backward().
  Tensor* grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.numel() == 0 && value(id).numel() != 0) n.grad = Tensor(value(id).shape(), 0.0);
    return &n.grad;
  }

  /// Gradient of an input leaf after backward(); zeros if nothing reached it.
  Tensor grad(Var v) const {
    const Node& n = nodes_.at(v.id());
    if (n.grad.numel() == 0) return Tensor(value(v.id()).shape(), 0.0);
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Returns parameter gradients aligned
  /// with the bound store (empty when no parameter was used).
  Gradients backward(Var loss) {
    sweep(loss);
    Gradients out = store_ ? Gradients(*store_) : Gradients();
    accumulate_param_grads(out);
    return out;
  }

  /// backward() that adds the parameter gradients into `acc` instead.
  void backward_into(Var loss, Gradients& acc) {
    sweep(loss);
    if (store_ && acc.size() != store_->size()) throw DimensionError("gradient set does not match the store");
    accumulate_param_grads(acc);
  }

  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    std::ptrdiff_t param_slot = -1;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };

  Var push(Tensor value, BackwardFn fn, bool requires_grad, std::vector<std::size_t> parents) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    node.parents = std::move(parents);
    node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
  }

  void sweep(Var loss) {
    if (loss.tape_ != this) throw ContractError("loss does not belong to this tape");
    if (value(loss.id()).numel() != 1) {
      throw ContractError("backward() needs a scalar loss, got shape " + shape_string(value(loss.id()).shape()));
    }
    if (backward_done_) throw ContractError("backward() already ran on this tape");
    backward_done_ = true;
    if (Tensor* g = grad_buffer(loss.id())) (*g)[0] = 1.0;

    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.numel() == 0 || !n.backward) continue;
      n.backward(*this, id);
    }
  }

  void accumulate_param_grads(Gradients& out) const {
    for (const Node& n : nodes_) {
      if (n.param_slot < 0 || n.grad.numel() == 0) continue;
      auto dst = out[static_cast<std::size_t>(n.param_slot)].data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }

  std::vector<Node> nodes_;
  const ParamStore* store_ = nullptr;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace ad {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMat> view(const Tensor& t) { return {t.data().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())}; }
inline Eigen::Map<RowMat> view(Tensor& t) { return {t.data().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())}; }

inline void same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

inline void accumulate(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  auto d = dst->data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// Matrix kernels shared by the forward pass and by gradient rules.
inline Tensor gemm(const Tensor& a, const Tensor& b) {
  Tensor c = Tensor::zeros(a.rows(), b.cols());
  view(c).noalias() = view(a) * view(b);
  return c;
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  Tensor out = detail::gemm(av, bv);
  return a.tape().record(std::move(out), {a.id(), b.id()}, [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    if (Tensor* ga = t.grad_buffer(ai)) detail::view(*ga).noalias() += detail::view(g) * detail::view(t.value(bi)).transpose();
    if (Tensor* gb = t.grad_buffer(bi)) detail::view(*gb).noalias() += detail::view(t.value(ai)).transpose() * detail::view(g);
  }, "matmul");
}

/// a * transpose(b).
inline Var matmul_nt(Var a, Var b) {
  detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw DimensionError("matmul_nt: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()) + "^T");
  }
  Tensor out = Tensor::zeros(av.rows(), bv.rows());
  detail::view(out).noalias() = detail::view(av) * detail::view(bv).transpose();
  return a.tape().record(std::move(out), {a.id(), b.id()}, [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    if (Tensor* ga = t.grad_buffer(ai)) detail::view(*ga).noalias() += detail::view(g) * detail::view(t.value(bi));
    if (Tensor* gb = t.grad_buffer(bi)) detail::view(*gb).noalias() += detail::view(g).transpose() * detail::view(t.value(ai));
  }, "matmul_nt");
}

inline Var add(Var a, Var b) {
  detail::same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return a.tape().record(std::move(out), {a.id(), b.id()}, [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    detail::accumulate(t.grad_buffer(ai), g);
    detail::accumulate(t.grad_buffer(bi), g);
  }, "add");
}

inline Var sub(Var a, Var b) {
  detail::same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return a.tape().record(std::move(out), {a.id(), b.id()}, [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    detail::accumulate(t.grad_buffer(ai), g);
    if (Tensor* gb = t.grad_buffer(bi)) {
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] -= g[i];
    }
  }, "sub");
}

/// Element-wise product.
inline Var mul(Var a, Var b) {
  detail::same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return a.tape().record(std::move(out), {a.id(), b.id()}, [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    if (Tensor* ga = t.grad_buffer(ai)) {
      const Tensor& bv = t.value(bi);
      for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (Tensor* gb = t.grad_buffer(bi)) {
      const Tensor& av = t.value(ai);
      for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * av[i];
    }
  }, "mul");
}

/// Element-wise product with a constant (non-differentiable) tensor.
inline Var mul_const(Var a, const Tensor& factor) {
  detail::require_same_shape(a.value(), factor, "mul_const");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= factor[i];
  return a.tape().record(std::move(out), {a.id()}, [ai = a.id(), factor](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    Tensor* ga = t.grad_buffer(ai);
    for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * factor[i];
  }, "mul_const");
}

inline Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  return a.tape().record(std::move(out), {a.id()}, [ai = a.id(), s](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    Tensor* ga = t.grad_buffer(ai);
    for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * s;
  }, "scale");
}

inline Var add_scalar(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v += s;
  return a.tape().record(std::move(out), {a.id()}, [ai = a.id()](Tape& t, std::size_t self) {
    detail::accumulate(t.grad_buffer(ai), *t.grad_buffer(self));
  }, "add_scalar");
}

/// Adds a 1 x c row vector to every row of an r x c matrix.
inline Var add_row(Var a, Var bias) {
  detail::same_tape(a, bias);
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw DimensionError("add_row: bias " + shape_string(bv.shape()) + " for " + shape_string(av.shape()));
  }
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(0, c);
  return a.tape().record(std::move(out), {a.id(), bias.id()}, [ai = a.id(), bi = bias.id()](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    detail::accumulate(t.grad_buffer(ai), g);
    if (Tensor* gb = t.grad_buffer(bi)) {
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (*gb)(0, c) += g(r, c);
    }
  }, "add_row");
}

/// Scales row r of `a` by column vector entry c(r, 0).
inline Var mul_col(Var a, Var column) {
  detail::same_tape(a, column);
  const Tensor& av = a.value();
  const Tensor& cv = column.value();
  if (cv.cols() != 1 || cv.rows() != av.rows()) {
    throw DimensionError("mul_col: column " + shape_string(cv.shape()) + " for " + shape_string(av.shape()));
  }
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= cv(r, 0);
  return a.tape().record(std::move(out), {a.id(), column.id()}, [ai = a.id(), ci = column.id()](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    if (Tensor* ga = t.grad_buffer(ai)) {
      const Tensor& cv = t.value(ci);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(r, c) += g(r, c) * cv(r, 0);
    }
    if (Tensor* gc = t.grad_buffer(ci)) {
      const Tensor& av = t.value(ai);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < g.cols(); ++c) acc += g(r, c) * av(r, c);
        (*gc)(r, 0) += acc;
      }
    }
  }, "mul_col");
}

namespace detail {

// Softmax of each row over the entries where keep != 0 (all entries when
// keep is null). Max subtraction keeps exp() in range.
inline Tensor softmax_rows(const Tensor& x, const Tensor* keep) {
  Tensor y = Tensor::zeros(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (!keep || (*keep)(r, c) != 0.0) mx = std::max(mx, x(r, c));
    }
    if (!std::isfinite(mx)) throw ContractError("softmax row " + std::to_string(r) + " has no unmasked entry");
    double z = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (keep && (*keep)(r, c) == 0.0) continue;
      y(r, c) = std::exp(x(r, c) - mx);
      z += y(r, c);
    }
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) /= z;
  }
  return y;
}

inline Tape::BackwardFn softmax_backward(std::size_t xi) {
  return [xi](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    const Tensor& y = t.value(self);
    Tensor* gx = t.grad_buffer(xi);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) (*gx)(r, c) += y(r, c) * (g(r, c) - dot);
    }
  };
}

}  // namespace detail

inline Var row_softmax(Var x) {
  require_finite(x.value(), "row_softmax input");
  return x.tape().record(detail::softmax_rows(x.value(), nullptr), {x.id()}, detail::softmax_backward(x.id()), "row_softmax");
}

/// Row softmax restricted to entries where `keep` is nonzero; excluded
/// entries get exactly zero weight (equivalent to -inf logits).
inline Var masked_row_softmax(Var x, const Tensor& keep) {
  detail::require_same_shape(x.value(), keep, "masked_row_softmax");
  require_finite(x.value(), "masked_row_softmax input");
  return x.tape().record(detail::softmax_rows(x.value(), &keep), {x.id()}, detail::softmax_backward(x.id()),
                         "masked_row_softmax");
}

inline Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
  detail::same_tape(x, gain);
  detail::same_tape(x, bias);
  const Tensor& xv = x.value();
  const std::size_t rows = xv.rows();
  const std::size_t cols = xv.cols();
  if (gain.value().numel() != cols || bias.value().numel() != cols) throw DimensionError("layer_norm: gain/bias width");
  Tensor xhat = Tensor::zeros(rows, cols);
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xv(r, c);
    mean /= double(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
    var /= double(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) xhat(r, c) = (xv(r, c) - mean) * inv_std[r];
  }
  Tensor out = xhat;
  const Tensor& g = gain.value();
  const Tensor& b = bias.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = xhat(r, c) * g[c] + b[c];

  return x.tape().record(std::move(out), {x.id(), gain.id(), bias.id()},
                         [xi = x.id(), gi = gain.id(), bi = bias.id(), xhat = std::move(xhat),
                          inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
    const Tensor& dy = *t.grad_buffer(self);
    const Tensor& g = t.value(gi);
    const std::size_t rows = dy.rows();
    const std::size_t cols = dy.cols();
    if (Tensor* gx = t.grad_buffer(xi)) {
      std::vector<double> dxhat(cols);
      for (std::size_t r = 0; r < rows; ++r) {
        double m1 = 0.0;
        double m2 = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          dxhat[c] = dy(r, c) * g[c];
          m1 += dxhat[c];
          m2 += dxhat[c] * xhat(r, c);
        }
        m1 /= double(cols);
        m2 /= double(cols);
        for (std::size_t c = 0; c < cols; ++c) (*gx)(r, c) += inv_std[r] * (dxhat[c] - m1 - xhat(r, c) * m2);
      }
    }
    if (Tensor* gg = t.grad_buffer(gi)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) (*gg)[c] += dy(r, c) * xhat(r, c);
    }
    if (Tensor* gb = t.grad_buffer(bi)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) (*gb)[c] += dy(r, c);
    }
  }, "layer_norm");
}

/// GELU, tanh approximation.
inline Var gelu(Var x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double a = 0.044715;
  Tensor out = x.value();
  for (double& v : out.data()) v = 0.5 * v * (1.0 + std::tanh(k * (v + a * v * v * v)));
  return x.tape().record(std::move(out), {x.id()}, [xi = x.id()](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    const Tensor& xv = t.value(xi);
    Tensor* gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double v = xv[i];
      const double th = std::tanh(k * (v + a * v * v * v));
      const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * k * (1.0 + 3.0 * a * v * v);
      (*gx)[i] += g[i] * d;
    }
  }, "gelu");
}

inline Var exp(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = std::exp(v);
  return x.tape().record(std::move(out), {x.id()}, [xi = x.id()](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    const Tensor& y = t.value(self);
    Tensor* gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i] * y[i];
  }, "exp");
}

inline Var log(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) {
    if (v <= 0.0) throw NumericError("log of nonpositive value");
    v = std::log(v);
  }
  return x.tape().record(std::move(out), {x.id()}, [xi = x.id()](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    const Tensor& xv = t.value(xi);
    Tensor* gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i] / xv[i];
  }, "log");
}

inline Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape().record(Tensor::scalar(s), {x.id()}, [xi = x.id()](Tape& t, std::size_t self) {
    const double g = (*t.grad_buffer(self))[0];
    Tensor* gx = t.grad_buffer(xi);
    for (double& v : gx->data()) v += g;
  }, "sum");
}

/// Mean of `count` consecutive rows starting at `begin`, as a 1 x c row.
inline Var mean_rows(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  if (count == 0 || begin + count > xv.rows()) throw ContractError("mean_rows: empty or out-of-range row block");
  Tensor out = Tensor::zeros(1, xv.cols());
  for (std::size_t r = begin; r < begin + count; ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) out(0, c) += xv(r, c);
  for (double& v : out.data()) v /= double(count);
  return x.tape().record(std::move(out), {x.id()}, [xi = x.id(), begin, count](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    Tensor* gx = t.grad_buffer(xi);
    const double w = 1.0 / double(count);
    for (std::size_t r = begin; r < begin + count; ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) (*gx)(r, c) += g(0, c) * w;
  }, "mean_rows");
}

inline Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  if (begin + count > xv.rows()) throw DimensionError("slice_rows out of range");
  Tensor out = Tensor::zeros(count, xv.cols());
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) out(r, c) = xv(begin + r, c);
  return x.tape().record(std::move(out), {x.id()}, [xi = x.id(), begin](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    Tensor* gx = t.grad_buffer(xi);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) (*gx)(begin + r, c) += g(r, c);
  }, "slice_rows");
}

inline Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  if (begin + count > xv.cols()) throw DimensionError("slice_cols out of range");
  Tensor out = Tensor::zeros(xv.rows(), count);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = xv(r, begin + c);
  return x.tape().record(std::move(out), {x.id()}, [xi = x.id(), begin](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    Tensor* gx = t.grad_buffer(xi);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) (*gx)(r, begin + c) += g(r, c);
  }, "slice_cols");
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols of nothing");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    detail::same_tape(parts.front(), p);
    if (p.rows() != rows) throw DimensionError("concat_cols row mismatch");
    ids.push_back(p.id());
    offsets.push_back(cols);
    cols += p.cols();
  }
  Tensor out = Tensor::zeros(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, offsets[k] + c) = pv(r, c);
  }
  return parts.front().tape().record(std::move(out), ids, [ids, offsets](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tensor* gp = t.grad_buffer(ids[k]);
      if (!gp) continue;
      for (std::size_t r = 0; r < gp->rows(); ++r)
        for (std::size_t c = 0; c < gp->cols(); ++c) (*gp)(r, c) += g(r, offsets[k] + c);
    }
  }, "concat_cols");
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    detail::same_tape(parts.front(), p);
    if (p.cols() != cols) throw DimensionError("concat_rows column mismatch");
    ids.push_back(p.id());
    offsets.push_back(rows);
    rows += p.rows();
  }
  Tensor out = Tensor::zeros(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    std::copy(pv.data().begin(), pv.data().end(), out.data().begin() + std::ptrdiff_t(offsets[k] * cols));
  }
  return parts.front().tape().record(std::move(out), ids, [ids, offsets](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    const std::size_t cols = g.cols();
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tensor* gp = t.grad_buffer(ids[k]);
      if (!gp) continue;
      for (std::size_t i = 0; i < gp->numel(); ++i) (*gp)[i] += g[offsets[k] * cols + i];
    }
  }, "concat_rows");
}

/// Row lookup: out(k, :) = table(ids[k], :).
inline Var gather_rows(Var table, std::vector<std::size_t> ids) {
  const Tensor& tv = table.value();
  Tensor out = Tensor::zeros(ids.size(), tv.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] >= tv.rows()) throw DimensionError("gather_rows index out of range");
    for (std::size_t c = 0; c < tv.cols(); ++c) out(k, c) = tv(ids[k], c);
  }
  return table.tape().record(std::move(out), {table.id()}, [ti = table.id(), ids = std::move(ids)](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    Tensor* gt = t.grad_buffer(ti);
    for (std::size_t k = 0; k < ids.size(); ++k)
      for (std::size_t c = 0; c < g.cols(); ++c) (*gt)(ids[k], c) += g(k, c);
  }, "gather_rows");
}

inline Var transpose(Var x) {
  return x.tape().record(x.value().transposed(), {x.id()}, [xi = x.id()](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad_buffer(self);
    Tensor* gx = t.grad_buffer(xi);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) (*gx)(c, r) += g(r, c);
  }, "transpose");
}

}  // namespace ad
}  // namespace archpred
