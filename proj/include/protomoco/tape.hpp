#ifndef PROTOMOCO_TAPE_HPP
#define PROTOMOCO_TAPE_HPP

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "protomoco/nn.hpp"
#include "protomoco/tensor.hpp"

namespace protomoco {

template <typename Scalar>
class Tape;

/// Handle to one node of a computation tape.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const Tensor<Scalar>& value() const;
  const Tensor<Scalar>& grad() const;
};

/// Reverse-mode computation tape. Operations append nodes in construction
/// order, which is topological by definition (inputs must already exist), so
/// the backward pass is one reverse sweep visiting each node exactly once.
template <typename Scalar>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;  // allocated during backward
    bool requires_grad = false;
    BackwardFn backward;
    std::string param_name;  // non-empty for parameter leaves
  };

  Var<Scalar> leaf(Tensor<Scalar> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, nullptr);
  }

  Var<Scalar> constant(Tensor<Scalar> value) { return leaf(std::move(value), false); }

  Var<Scalar> constant_scalar(Scalar v) { return leaf(Tensor<Scalar>::scalar(v), false); }

  /// Leaf bound to a named parameter. Repeated requests for the same name on
  /// one tape return the same node, so gradients from all uses accumulate.
  Var<Scalar> param(const std::string& name, const ParameterSet<Scalar>& params) {
    auto it = param_ids_.find(name);
    if (it != param_ids_.end()) return {this, it->second};
    Var<Scalar> v = push(params.weight(name), true, nullptr);
    nodes_[v.id].param_name = name;
    param_ids_.emplace(name, v.id);
    return v;
  }

  /// Reverse sweep from a scalar loss. Populates node gradients.
  void backward(Var<Scalar> loss) {
    if (loss.tape != this || loss.id < 0 || loss.id >= static_cast<int>(nodes_.size())) {
      throw ContractError("backward: loss does not belong to this tape");
    }
    if (nodes_[loss.id].value.size() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " +
                          nodes_[loss.id].value.shape_string());
    }
    if (backward_done_) {
      throw ContractError("backward: tape already swept");
    }
    backward_done_ = true;
    for (auto& n : nodes_) {
      if (n.requires_grad) n.grad = Tensor<Scalar>(n.value.shape());
    }
    if (!nodes_[loss.id].requires_grad) {
      return;  // loss does not depend on any parameter; all gradients are zero
    }
    nodes_[loss.id].grad[0] = Scalar(1);
    for (int i = loss.id; i >= 0; --i) {
      if (nodes_[i].requires_grad && nodes_[i].backward) nodes_[i].backward(*this, i);
    }
  }

  /// Reverse sweep plus accumulation into the gradient buffers of every
  /// parameter leaf registered on this tape.
  void backward(Var<Scalar> loss, ParameterSet<Scalar>& params) {
    backward(loss);
    for (const auto& [name, id] : param_ids_) {
      if (nodes_[id].grad.size() == 0) continue;
      Tensor<Scalar>& acc = params.grad(name);
      const Tensor<Scalar>& g = nodes_[id].grad;
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
    }
  }

  const Tensor<Scalar>& value(int id) const { return nodes_[id].value; }
  const Tensor<Scalar>& grad(int id) const { return nodes_[id].grad; }
  Tensor<Scalar>& grad_mut(int id) { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  Var<Scalar> push(Tensor<Scalar> value, bool requires_grad, BackwardFn bwd) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(bwd);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> param_ids_;
  bool backward_done_ = false;
};

template <typename Scalar>
const Tensor<Scalar>& Var<Scalar>::value() const {
  return tape->value(id);
}

template <typename Scalar>
const Tensor<Scalar>& Var<Scalar>::grad() const {
  return tape->grad(id);
}

namespace detail {

template <typename Scalar>
void check_same_tape(Var<Scalar> a, Var<Scalar> b, const char* op) {
  if (a.tape != b.tape || a.tape == nullptr) {
    throw ContractError(std::string(op) + ": operands must live on the same tape");
  }
}

template <typename Scalar>
void accumulate(Tensor<Scalar>& acc, const Tensor<Scalar>& g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

template <typename Scalar>
using MatMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename Scalar>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b, "add");
  Tape<Scalar>& t = *a.tape;
  if (!t.value(a.id).same_shape(t.value(b.id))) {
    throw DimensionError("add: shape mismatch " + t.value(a.id).shape_string() + " vs " +
                         t.value(b.id).shape_string());
  }
  Tensor<Scalar> out = t.value(a.id);
  const Tensor<Scalar>& vb = t.value(b.id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.push(std::move(out), rg, [a = a.id, b = b.id](Tape<Scalar>& tp, int out_id) {
    const Tensor<Scalar>& g = tp.grad(out_id);
    if (tp.requires_grad(a)) detail::accumulate(tp.grad_mut(a), g);
    if (tp.requires_grad(b)) detail::accumulate(tp.grad_mut(b), g);
  });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b, "sub");
  Tape<Scalar>& t = *a.tape;
  if (!t.value(a.id).same_shape(t.value(b.id))) {
    throw DimensionError("sub: shape mismatch " + t.value(a.id).shape_string() + " vs " +
                         t.value(b.id).shape_string());
  }
  Tensor<Scalar> out = t.value(a.id);
  const Tensor<Scalar>& vb = t.value(b.id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
  bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.push(std::move(out), rg, [a = a.id, b = b.id](Tape<Scalar>& tp, int out_id) {
    const Tensor<Scalar>& g = tp.grad(out_id);
    if (tp.requires_grad(a)) detail::accumulate(tp.grad_mut(a), g);
    if (tp.requires_grad(b)) {
      Tensor<Scalar>& gb = tp.grad_mut(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b, "mul");
  Tape<Scalar>& t = *a.tape;
  if (!t.value(a.id).same_shape(t.value(b.id))) {
    throw DimensionError("mul: shape mismatch " + t.value(a.id).shape_string() + " vs " +
                         t.value(b.id).shape_string());
  }
  Tensor<Scalar> out = t.value(a.id);
  const Tensor<Scalar>& vb = t.value(b.id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.push(std::move(out), rg, [a = a.id, b = b.id](Tape<Scalar>& tp, int out_id) {
    const Tensor<Scalar>& g = tp.grad(out_id);
    const Tensor<Scalar>& va = tp.value(a);
    const Tensor<Scalar>& vb2 = tp.value(b);
    if (tp.requires_grad(a)) {
      Tensor<Scalar>& ga = tp.grad_mut(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * vb2[i];
    }
    if (tp.requires_grad(b)) {
      Tensor<Scalar>& gb = tp.grad_mut(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar c) {
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out = t.value(a.id);
  for (auto& v : out.storage()) v *= c;
  return t.push(std::move(out), t.requires_grad(a.id),
                [a = a.id, c](Tape<Scalar>& tp, int out_id) {
                  const Tensor<Scalar>& g = tp.grad(out_id);
                  Tensor<Scalar>& ga = tp.grad_mut(a);
                  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * g[i];
                });
}

/// Adds a constant to every entry (the constant is not differentiated).
template <typename Scalar>
Var<Scalar> shift(Var<Scalar> a, Scalar c) {
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out = t.value(a.id);
  for (auto& v : out.storage()) v += c;
  return t.push(std::move(out), t.requires_grad(a.id),
                [a = a.id](Tape<Scalar>& tp, int out_id) {
                  detail::accumulate(tp.grad_mut(a), tp.grad(out_id));
                });
}

template <typename Scalar>
Var<Scalar> neg(Var<Scalar> a) {
  return scale(a, Scalar(-1));
}

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) {
  return add(a, b);
}
template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) {
  return sub(a, b);
}
template <typename Scalar>
Var<Scalar> operator*(Var<Scalar> a, Var<Scalar> b) {
  return mul(a, b);
}
template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a) {
  return neg(a);
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities
// ---------------------------------------------------------------------------

/// max(0, x); the backward gate is 1 where x > 0 and 0 elsewhere.
template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out = t.value(a.id);
  for (auto& v : out.storage()) v = v > Scalar(0) ? v : Scalar(0);
  return t.push(std::move(out), t.requires_grad(a.id),
                [a = a.id](Tape<Scalar>& tp, int out_id) {
                  const Tensor<Scalar>& g = tp.grad(out_id);
                  const Tensor<Scalar>& x = tp.value(a);
                  Tensor<Scalar>& ga = tp.grad_mut(a);
                  for (std::size_t i = 0; i < ga.size(); ++i) {
                    if (x[i] > Scalar(0)) ga[i] += g[i];
                  }
                });
}

template <typename Scalar>
Var<Scalar> exp(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out = t.value(a.id);
  for (auto& v : out.storage()) v = std::exp(v);
  return t.push(std::move(out), t.requires_grad(a.id),
                [a = a.id](Tape<Scalar>& tp, int out_id) {
                  const Tensor<Scalar>& g = tp.grad(out_id);
                  const Tensor<Scalar>& y = tp.value(out_id);
                  Tensor<Scalar>& ga = tp.grad_mut(a);
                  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * y[i];
                });
}

template <typename Scalar>
Var<Scalar> log(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out = t.value(a.id);
  for (auto& v : out.storage()) v = std::log(v);
  return t.push(std::move(out), t.requires_grad(a.id),
                [a = a.id](Tape<Scalar>& tp, int out_id) {
                  const Tensor<Scalar>& g = tp.grad(out_id);
                  const Tensor<Scalar>& x = tp.value(a);
                  Tensor<Scalar>& ga = tp.grad_mut(a);
                  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] / x[i];
                });
}

template <typename Scalar>
Var<Scalar> sqrt(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out = t.value(a.id);
  for (auto& v : out.storage()) v = std::sqrt(v);
  return t.push(std::move(out), t.requires_grad(a.id),
                [a = a.id](Tape<Scalar>& tp, int out_id) {
                  const Tensor<Scalar>& g = tp.grad(out_id);
                  const Tensor<Scalar>& y = tp.value(out_id);
                  Tensor<Scalar>& ga = tp.grad_mut(a);
                  for (std::size_t i = 0; i < ga.size(); ++i) {
                    Scalar denom = y[i] > Scalar(1e-12) ? y[i] : Scalar(1e-12);
                    ga[i] += g[i] * Scalar(0.5) / denom;
                  }
                });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& v = t.value(a.id);
  Scalar s = 0;
  for (std::size_t i = 0; i < v.size(); ++i) s += v[i];
  return t.push(Tensor<Scalar>::scalar(s), t.requires_grad(a.id),
                [a = a.id](Tape<Scalar>& tp, int out_id) {
                  const Scalar g = tp.grad(out_id)[0];
                  Tensor<Scalar>& ga = tp.grad_mut(a);
                  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
                });
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> a) {
  const std::size_t n = a.tape->value(a.id).size();
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(n));
}

/// Inner product of two tensors of identical shape, as a scalar node.
template <typename Scalar>
Var<Scalar> dot(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b, "dot");
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);
  const Tensor<Scalar>& vb = t.value(b.id);
  if (va.size() != vb.size()) {
    throw DimensionError("dot: size mismatch " + va.shape_string() + " vs " + vb.shape_string());
  }
  Scalar s = 0;
  for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
  bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.push(Tensor<Scalar>::scalar(s), rg, [a = a.id, b = b.id](Tape<Scalar>& tp, int out_id) {
    const Scalar g = tp.grad(out_id)[0];
    const Tensor<Scalar>& va2 = tp.value(a);
    const Tensor<Scalar>& vb2 = tp.value(b);
    if (tp.requires_grad(a)) {
      Tensor<Scalar>& ga = tp.grad_mut(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * vb2[i];
    }
    if (tp.requires_grad(b)) {
      Tensor<Scalar>& gb = tp.grad_mut(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * va2[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Shape
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> reshape(Var<Scalar> a, std::vector<int> shape) {
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out(std::move(shape), t.value(a.id).storage());
  return t.push(std::move(out), t.requires_grad(a.id),
                [a = a.id](Tape<Scalar>& tp, int out_id) {
                  const Tensor<Scalar>& g = tp.grad(out_id);
                  Tensor<Scalar>& ga = tp.grad_mut(a);
                  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// Matrix product of a [m x k] and b [k x n]. Backward: dA = G B^T, dB = A^T G.
template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b, "matmul");
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);
  const Tensor<Scalar>& vb = t.value(b.id);
  if (va.rank() != 2 || vb.rank() != 2 || va.shape()[1] != vb.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + va.shape_string() + " and " +
                         vb.shape_string());
  }
  const int m = va.shape()[0], k = va.shape()[1], n = vb.shape()[1];
  Tensor<Scalar> out({m, n});
  detail::ConstMatMap<Scalar> A(va.data(), m, k);
  detail::ConstMatMap<Scalar> B(vb.data(), k, n);
  detail::MatMap<Scalar> C(out.data(), m, n);
  C.noalias() = A * B;
  bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.push(std::move(out), rg,
                [a = a.id, b = b.id, m, k, n](Tape<Scalar>& tp, int out_id) {
                  detail::ConstMatMap<Scalar> G(tp.grad(out_id).data(), m, n);
                  detail::ConstMatMap<Scalar> A2(tp.value(a).data(), m, k);
                  detail::ConstMatMap<Scalar> B2(tp.value(b).data(), k, n);
                  if (tp.requires_grad(a)) {
                    detail::MatMap<Scalar> GA(tp.grad_mut(a).data(), m, k);
                    GA.noalias() += G * B2.transpose();
                  }
                  if (tp.requires_grad(b)) {
                    detail::MatMap<Scalar> GB(tp.grad_mut(b).data(), k, n);
                    GB.noalias() += A2.transpose() * G;
                  }
                });
}

/// Valid-padding cross-correlation. x is [C x H x W], kernels [F x C x kh x kw],
/// output [F x H' x W'] with H' = (H - kh) / stride + 1.
template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> kernels, int stride = 1) {
  detail::check_same_tape(x, kernels, "conv2d");
  Tape<Scalar>& t = *x.tape;
  const Tensor<Scalar>& vx = t.value(x.id);
  const Tensor<Scalar>& vk = t.value(kernels.id);
  if (vx.rank() != 3 || vk.rank() != 4) {
    throw DimensionError("conv2d: expected input [CxHxW] and kernels [FxCxkhxkw], got " +
                         vx.shape_string() + " and " + vk.shape_string());
  }
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  const int C = vx.shape()[0], H = vx.shape()[1], W = vx.shape()[2];
  const int F = vk.shape()[0], KC = vk.shape()[1], kh = vk.shape()[2], kw = vk.shape()[3];
  if (KC != C) {
    throw DimensionError("conv2d: kernel channels " + vk.shape_string() +
                         " do not match input " + vx.shape_string());
  }
  if (kh > H || kw > W) {
    throw DimensionError("conv2d: kernel " + vk.shape_string() + " larger than input " +
                         vx.shape_string());
  }
  const int OH = (H - kh) / stride + 1;
  const int OW = (W - kw) / stride + 1;
  Tensor<Scalar> out({F, OH, OW});
  const Scalar* xp = vx.data();
  const Scalar* kp = vk.data();
  Scalar* op = out.data();
  auto xat = [&](int c, int i, int j) { return xp[(static_cast<std::size_t>(c) * H + i) * W + j]; };
  auto kat = [&](int f, int c, int a, int b) {
    return kp[((static_cast<std::size_t>(f) * C + c) * kh + a) * kw + b];
  };
  for (int f = 0; f < F; ++f) {
    for (int oi = 0; oi < OH; ++oi) {
      for (int oj = 0; oj < OW; ++oj) {
        Scalar acc = 0;
        for (int c = 0; c < C; ++c) {
          for (int a = 0; a < kh; ++a) {
            for (int b = 0; b < kw; ++b) {
              acc += xat(c, oi * stride + a, oj * stride + b) * kat(f, c, a, b);
            }
          }
        }
        op[(static_cast<std::size_t>(f) * OH + oi) * OW + oj] = acc;
      }
    }
  }
  bool rg = t.requires_grad(x.id) || t.requires_grad(kernels.id);
  return t.push(std::move(out), rg,
                [x = x.id, k = kernels.id, stride, C, H, W, F, kh, kw, OH,
                 OW](Tape<Scalar>& tp, int out_id) {
                  const Scalar* g = tp.grad(out_id).data();
                  const Scalar* xp2 = tp.value(x).data();
                  const Scalar* kp2 = tp.value(k).data();
                  auto gat = [&](int f, int oi, int oj) {
                    return g[(static_cast<std::size_t>(f) * OH + oi) * OW + oj];
                  };
                  if (tp.requires_grad(x)) {
                    Scalar* gx = tp.grad_mut(x).data();
                    for (int f = 0; f < F; ++f) {
                      for (int oi = 0; oi < OH; ++oi) {
                        for (int oj = 0; oj < OW; ++oj) {
                          const Scalar go = gat(f, oi, oj);
                          for (int c = 0; c < C; ++c) {
                            for (int a = 0; a < kh; ++a) {
                              for (int b = 0; b < kw; ++b) {
                                gx[(static_cast<std::size_t>(c) * H + oi * stride + a) * W +
                                   oj * stride + b] +=
                                    go * kp2[((static_cast<std::size_t>(f) * C + c) * kh + a) * kw + b];
                              }
                            }
                          }
                        }
                      }
                    }
                  }
                  if (tp.requires_grad(k)) {
                    Scalar* gk = tp.grad_mut(k).data();
                    for (int f = 0; f < F; ++f) {
                      for (int oi = 0; oi < OH; ++oi) {
                        for (int oj = 0; oj < OW; ++oj) {
                          const Scalar go = gat(f, oi, oj);
                          for (int c = 0; c < C; ++c) {
                            for (int a = 0; a < kh; ++a) {
                              for (int b = 0; b < kw; ++b) {
                                gk[((static_cast<std::size_t>(f) * C + c) * kh + a) * kw + b] +=
                                    go * xp2[(static_cast<std::size_t>(c) * H + oi * stride + a) * W +
                                             oj * stride + b];
                              }
                            }
                          }
                        }
                      }
                    }
                  }
                });
}

/// Mean over non-overlapping window x window blocks; extents must divide.
template <typename Scalar>
Var<Scalar> avgpool2d(Var<Scalar> x, int window) {
  Tape<Scalar>& t = *x.tape;
  const Tensor<Scalar>& vx = t.value(x.id);
  if (vx.rank() != 3) {
    throw DimensionError("avgpool2d: expected [CxHxW], got " + vx.shape_string());
  }
  if (window < 1) throw ContractError("avgpool2d: window must be >= 1");
  const int C = vx.shape()[0], H = vx.shape()[1], W = vx.shape()[2];
  if (H % window != 0 || W % window != 0) {
    throw DimensionError("avgpool2d: extents " + vx.shape_string() + " not divisible by window " +
                         std::to_string(window));
  }
  const int OH = H / window, OW = W / window;
  const Scalar inv = Scalar(1) / static_cast<Scalar>(window * window);
  Tensor<Scalar> out({C, OH, OW});
  for (int c = 0; c < C; ++c) {
    for (int oi = 0; oi < OH; ++oi) {
      for (int oj = 0; oj < OW; ++oj) {
        Scalar acc = 0;
        for (int a = 0; a < window; ++a) {
          for (int b = 0; b < window; ++b) {
            acc += vx.at(c, oi * window + a, oj * window + b);
          }
        }
        out.at(c, oi, oj) = acc * inv;
      }
    }
  }
  return t.push(std::move(out), t.requires_grad(x.id),
                [x = x.id, window, C, OH, OW, inv](Tape<Scalar>& tp, int out_id) {
                  const Tensor<Scalar>& g = tp.grad(out_id);
                  Tensor<Scalar>& gx = tp.grad_mut(x);
                  for (int c = 0; c < C; ++c) {
                    for (int oi = 0; oi < OH; ++oi) {
                      for (int oj = 0; oj < OW; ++oj) {
                        const Scalar go = g.at(c, oi, oj) * inv;
                        for (int a = 0; a < window; ++a) {
                          for (int b = 0; b < window; ++b) {
                            gx.at(c, oi * window + a, oj * window + b) += go;
                          }
                        }
                      }
                    }
                  }
                });
}

/// v / ||v||_2 over the flattened tensor. Backward projects the upstream
/// gradient onto the tangent space: (g - y (y . g)) / ||v||.
template <typename Scalar>
Var<Scalar> l2_normalize(Var<Scalar> v) {
  Tape<Scalar>& t = *v.tape;
  const Tensor<Scalar>& x = t.value(v.id);
  double norm_sq = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    norm_sq += static_cast<double>(x[i]) * static_cast<double>(x[i]);
  }
  const double norm = std::sqrt(norm_sq);
  if (norm <= 1e-12) {
    throw DegenerateVectorError("l2_normalize: vector norm " + std::to_string(norm) +
                                " below 1e-12");
  }
  Tensor<Scalar> out = x;
  const Scalar inv = static_cast<Scalar>(1.0 / norm);
  for (auto& e : out.storage()) e *= inv;
  return t.push(std::move(out), t.requires_grad(v.id),
                [v = v.id, inv](Tape<Scalar>& tp, int out_id) {
                  const Tensor<Scalar>& g = tp.grad(out_id);
                  const Tensor<Scalar>& y = tp.value(out_id);
                  Tensor<Scalar>& gv = tp.grad_mut(v);
                  Scalar ydotg = 0;
                  for (std::size_t i = 0; i < y.size(); ++i) ydotg += y[i] * g[i];
                  for (std::size_t i = 0; i < gv.size(); ++i) {
                    gv[i] += (g[i] - y[i] * ydotg) * inv;
                  }
                });
}

/// log(sum(exp(logits))) with the running max subtracted as a plain constant;
/// the subtraction cancels exactly in both the value and the gradient.
template <typename Scalar>
Var<Scalar> logsumexp(Var<Scalar> logits) {
  const Tensor<Scalar>& v = logits.tape->value(logits.id);
  Scalar m = v[0];
  for (std::size_t i = 1; i < v.size(); ++i) m = std::max(m, v[i]);
  return shift(log(sum(exp(shift(logits, -m)))), m);
}

/// Packs scalar vars into one vector node; gradient routes back entrywise.
template <typename Scalar>
Var<Scalar> stack_scalars(Tape<Scalar>& tape, const std::vector<Var<Scalar>>& scalars) {
  if (scalars.empty()) throw ContractError("stack_scalars: empty list");
  Tensor<Scalar> out({static_cast<int>(scalars.size())});
  bool rg = false;
  std::vector<int> ids(scalars.size());
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].tape != &tape) {
      throw ContractError("stack_scalars: operand from another tape");
    }
    if (tape.value(scalars[i].id).size() != 1) {
      throw ContractError("stack_scalars: operands must be scalars");
    }
    out[i] = tape.value(scalars[i].id)[0];
    ids[i] = scalars[i].id;
    rg = rg || tape.requires_grad(scalars[i].id);
  }
  return tape.push(std::move(out), rg, [ids = std::move(ids)](Tape<Scalar>& tp, int out_id) {
    const Tensor<Scalar>& g = tp.grad(out_id);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (tp.requires_grad(ids[i])) tp.grad_mut(ids[i])[0] += g[i];
    }
  });
}

/// max(x, floor) elementwise; gradient passes only where x > floor.
template <typename Scalar>
Var<Scalar> clamp_min(Var<Scalar> a, Scalar floor) {
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out = t.value(a.id);
  for (auto& v : out.storage()) v = v > floor ? v : floor;
  return t.push(std::move(out), t.requires_grad(a.id),
                [a = a.id, floor](Tape<Scalar>& tp, int out_id) {
                  const Tensor<Scalar>& g = tp.grad(out_id);
                  const Tensor<Scalar>& x = tp.value(a);
                  Tensor<Scalar>& ga = tp.grad_mut(a);
                  for (std::size_t i = 0; i < ga.size(); ++i) {
                    if (x[i] > floor) ga[i] += g[i];
                  }
                });
}

/// Mean of a non-empty list of same-shape vars.
template <typename Scalar>
Var<Scalar> mean_of(const std::vector<Var<Scalar>>& vars) {
  if (vars.empty()) throw ContractError("mean_of: empty list");
  Var<Scalar> acc = vars[0];
  for (std::size_t i = 1; i < vars.size(); ++i) acc = add(acc, vars[i]);
  return scale(acc, Scalar(1) / static_cast<Scalar>(vars.size()));
}

}  // namespace protomoco

#endif  // PROTOMOCO_TAPE_HPP
