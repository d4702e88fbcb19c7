#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "talkgen/core/tensor.hpp"

namespace talkgen::ad {

// Reverse-mode automatic differentiation on Tensor<S>. Graphs are built
// dynamically: every op returns a new node holding its value, the parent
// edges, and a closure that pulls the node's gradient into its parents.
// Leaf nodes created with param() persist across steps so modules can hold
// their weights as Vars; intermediate nodes are freed when the root dies.

template <typename S>
class Node;
template <typename S>
using Var = std::shared_ptr<Node<S>>;

inline int64_t next_node_id() {
  static std::atomic<int64_t> counter{0};
  return ++counter;
}

template <typename S>
class Node {
 public:
  Tensor<S> value;
  Tensor<S> grad;
  bool requires_grad = false;
  bool grad_ready = false;
  int64_t id = 0;
  std::vector<Var<S>> parents;
  std::function<void(Node<S>&)> backprop;

  void ensure_grad() {
    if (!grad_ready) {
      grad = Tensor<S>(value.shape());
      grad_ready = true;
    }
  }
  void drop_grad() { grad_ready = false; }
};

template <typename S>
Var<S> constant(Tensor<S> v) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(v);
  n->id = next_node_id();
  return n;
}

template <typename S>
Var<S> param(Tensor<S> v) {
  auto n = constant(std::move(v));
  n->requires_grad = true;
  return n;
}

template <typename S>
Var<S> make_node(Tensor<S> value, std::vector<Var<S>> parents,
                 std::function<void(Node<S>&)> backprop) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->id = next_node_id();
  bool rg = false;
  for (auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

// Accumulate g into parent, reducing to a scalar if the parent was broadcast.
template <typename S>
void accum(const Var<S>& p, const typename Tensor<S>::Storage& g) {
  if (!p->requires_grad) return;
  p->ensure_grad();
  if (p->value.size() == 1 && g.size() != 1)
    p->grad[0] += g.sum();
  else
    p->grad.array() += g;
}

template <typename S>
void backward(const Var<S>& root) {
  check_contract(root->value.size() == 1, "backward: root must be scalar");
  if (!root->requires_grad) return;
  // Collect the reachable differentiable subgraph, then replay in reverse
  // creation order (parents always precede children).
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<Node<S>*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node<S>* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents)
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](Node<S>* a, Node<S>* b) { return a->id > b->id; });
  root->ensure_grad();
  root->grad[0] = S(1);
  for (Node<S>* n : order) {
    if (n->backprop && n->grad_ready) n->backprop(*n);
  }
}

// ---- elementwise ops (scalar nodes of size 1 broadcast against tensors) ----

template <typename S>
inline void check_broadcast(const Var<S>& a, const Var<S>& b) {
  check_contract(a->value.same_shape(b->value) || a->value.size() == 1 ||
                     b->value.size() == 1,
                 "elementwise op: shape mismatch");
}

template <typename S>
Tensor<S> broadcast_result_shape(const Var<S>& a, const Var<S>& b) {
  return a->value.size() >= b->value.size() ? Tensor<S>(a->value.shape())
                                            : Tensor<S>(b->value.shape());
}

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  check_broadcast(a, b);
  Tensor<S> out = broadcast_result_shape(a, b);
  if (a->value.size() == 1)
    out.array() = a->value[0] + b->value.array();
  else if (b->value.size() == 1)
    out.array() = a->value.array() + b->value[0];
  else
    out.array() = a->value.array() + b->value.array();
  return make_node<S>(std::move(out), {a, b}, [a, b](Node<S>& n) {
    accum(a, n.grad.array());
    accum(b, n.grad.array());
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  check_broadcast(a, b);
  Tensor<S> out = broadcast_result_shape(a, b);
  if (a->value.size() == 1)
    out.array() = a->value[0] - b->value.array();
  else if (b->value.size() == 1)
    out.array() = a->value.array() - b->value[0];
  else
    out.array() = a->value.array() - b->value.array();
  return make_node<S>(std::move(out), {a, b}, [a, b](Node<S>& n) {
    accum(a, n.grad.array());
    accum(b, (-n.grad.array()).eval());
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  check_broadcast(a, b);
  Tensor<S> out = broadcast_result_shape(a, b);
  if (a->value.size() == 1)
    out.array() = a->value[0] * b->value.array();
  else if (b->value.size() == 1)
    out.array() = a->value.array() * b->value[0];
  else
    out.array() = a->value.array() * b->value.array();
  return make_node<S>(std::move(out), {a, b}, [a, b](Node<S>& n) {
    if (b->value.size() == 1)
      accum(a, (n.grad.array() * b->value[0]).eval());
    else
      accum(a, (n.grad.array() * b->value.array()).eval());
    if (a->value.size() == 1)
      accum(b, (n.grad.array() * a->value[0]).eval());
    else
      accum(b, (n.grad.array() * a->value.array()).eval());
  });
}

template <typename S>
Var<S> div(const Var<S>& a, const Var<S>& b) {
  check_broadcast(a, b);
  Tensor<S> out = broadcast_result_shape(a, b);
  if (a->value.size() == 1)
    out.array() = a->value[0] / b->value.array();
  else if (b->value.size() == 1)
    out.array() = a->value.array() / b->value[0];
  else
    out.array() = a->value.array() / b->value.array();
  return make_node<S>(std::move(out), {a, b}, [a, b](Node<S>& n) {
    auto bv = [&](Index i) { return b->value.size() == 1 ? b->value[0] : b->value[i]; };
    auto av = [&](Index i) { return a->value.size() == 1 ? a->value[0] : a->value[i]; };
    if (a->requires_grad) {
      typename Tensor<S>::Storage ga(n.grad.size());
      for (Index i = 0; i < n.grad.size(); ++i) ga[i] = n.grad[i] / bv(i);
      accum(a, ga);
    }
    if (b->requires_grad) {
      typename Tensor<S>::Storage gb(n.grad.size());
      for (Index i = 0; i < n.grad.size(); ++i)
        gb[i] = -n.grad[i] * av(i) / (bv(i) * bv(i));
      accum(b, gb);
    }
  });
}

template <typename S>
Var<S> scale(const Var<S>& a, S c) {
  Tensor<S> out(a->value.shape());
  out.array() = a->value.array() * c;
  return make_node<S>(std::move(out), {a},
                      [a, c](Node<S>& n) { accum(a, (n.grad.array() * c).eval()); });
}

template <typename S>
Var<S> add_const(const Var<S>& a, S c) {
  Tensor<S> out(a->value.shape());
  out.array() = a->value.array() + c;
  return make_node<S>(std::move(out), {a},
                      [a](Node<S>& n) { accum(a, n.grad.array()); });
}

template <typename S>
Var<S> neg(const Var<S>& a) {
  return scale(a, S(-1));
}

template <typename S>
Var<S> relu(const Var<S>& a) {
  Tensor<S> out(a->value.shape());
  out.array() = a->value.array().max(S(0));
  return make_node<S>(std::move(out), {a}, [a](Node<S>& n) {
    accum(a, (n.grad.array() * (a->value.array() > S(0)).template cast<S>()).eval());
  });
}

template <typename S>
Var<S> leaky_relu(const Var<S>& a, S alpha) {
  Tensor<S> out(a->value.shape());
  out.array() = (a->value.array() > S(0)).select(a->value.array(), a->value.array() * alpha);
  return make_node<S>(std::move(out), {a, }, [a, alpha](Node<S>& n) {
    typename Tensor<S>::Storage g(n.grad.size());
    for (Index i = 0; i < g.size(); ++i)
      g[i] = n.grad[i] * (a->value[i] > S(0) ? S(1) : alpha);
    accum(a, g);
  });
}

template <typename S>
Var<S> sigmoid(const Var<S>& a) {
  Tensor<S> out(a->value.shape());
  out.array() = S(1) / (S(1) + (-a->value.array()).exp());
  auto n = make_node<S>(std::move(out), {a}, nullptr);
  if (n->requires_grad) {
    Node<S>* raw = n.get();
    n->backprop = [a, raw](Node<S>& nn) {
      accum(a, (nn.grad.array() * raw->value.array() * (S(1) - raw->value.array())).eval());
    };
  }
  return n;
}

template <typename S>
Var<S> tanh_(const Var<S>& a) {
  Tensor<S> out(a->value.shape());
  out.array() = a->value.array().tanh();
  auto n = make_node<S>(std::move(out), {a}, nullptr);
  if (n->requires_grad) {
    Node<S>* raw = n.get();
    n->backprop = [a, raw](Node<S>& nn) {
      accum(a, (nn.grad.array() * (S(1) - raw->value.array().square())).eval());
    };
  }
  return n;
}

template <typename S>
Var<S> exp_(const Var<S>& a) {
  Tensor<S> out(a->value.shape());
  out.array() = a->value.array().exp();
  auto n = make_node<S>(std::move(out), {a}, nullptr);
  if (n->requires_grad) {
    Node<S>* raw = n.get();
    n->backprop = [a, raw](Node<S>& nn) {
      accum(a, (nn.grad.array() * raw->value.array()).eval());
    };
  }
  return n;
}

template <typename S>
Var<S> sqrt_(const Var<S>& a) {
  Tensor<S> out(a->value.shape());
  out.array() = a->value.array().sqrt();
  auto n = make_node<S>(std::move(out), {a}, nullptr);
  if (n->requires_grad) {
    Node<S>* raw = n.get();
    n->backprop = [a, raw](Node<S>& nn) {
      accum(a, (nn.grad.array() / (S(2) * raw->value.array())).eval());
    };
  }
  return n;
}

template <typename S>
Var<S> square(const Var<S>& a) {
  Tensor<S> out(a->value.shape());
  out.array() = a->value.array().square();
  return make_node<S>(std::move(out), {a}, [a](Node<S>& n) {
    accum(a, (n.grad.array() * S(2) * a->value.array()).eval());
  });
}

// L1 building block; subgradient 0 at the kink.
template <typename S>
Var<S> abs_(const Var<S>& a) {
  Tensor<S> out(a->value.shape());
  out.array() = a->value.array().abs();
  return make_node<S>(std::move(out), {a}, [a](Node<S>& n) {
    typename Tensor<S>::Storage g(n.grad.size());
    for (Index i = 0; i < g.size(); ++i) {
      S v = a->value[i];
      g[i] = n.grad[i] * (v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)));
    }
    accum(a, g);
  });
}

// ---- reductions ----

template <typename S>
Var<S> sum_all(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::scalar(a->value.array().sum());
  return make_node<S>(std::move(out), {a}, [a](Node<S>& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    a->grad.array() += n.grad[0];
  });
}

template <typename S>
Var<S> mean_all(const Var<S>& a) {
  const S inv = S(1) / (S)a->value.size();
  Tensor<S> out = Tensor<S>::scalar(a->value.array().sum() * inv);
  return make_node<S>(std::move(out), {a}, [a, inv](Node<S>& n) {
    if (!a->requires_grad) return;
    a->ensure_grad();
    a->grad.array() += n.grad[0] * inv;
  });
}

// Row sums of x viewed as [G, M] -> [G].
template <typename S>
Var<S> sum_rows(const Var<S>& x, Index G) {
  const Index M = x->value.size() / G;
  Tensor<S> out({G});
  for (Index g = 0; g < G; ++g) {
    Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> m(x->value.data() + g * M, M);
    out[g] = m.sum();
  }
  return make_node<S>(std::move(out), {x}, [x, G, M](Node<S>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (Index g = 0; g < G; ++g) {
      S gv = n.grad[g];
      S* dst = x->grad.data() + g * M;
      for (Index i = 0; i < M; ++i) dst[i] += gv;
    }
  });
}

// ---- linear algebra ----

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  check_contract(a->value.rank() == 2 && b->value.rank() == 2 &&
                     a->value.dim(1) == b->value.dim(0),
                 "matmul: shape mismatch");
  Index m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  Tensor<S> out({m, n});
  out.matrix(m, n).noalias() = a->value.matrix(m, k) * b->value.matrix(k, n);
  return make_node<S>(std::move(out), {a, b}, [a, b, m, k, n](Node<S>& nd) {
    auto g = nd.grad.matrix(m, n);
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad.matrix(m, k).noalias() += g * b->value.matrix(k, n).transpose();
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad.matrix(k, n).noalias() += a->value.matrix(m, k).transpose() * g;
    }
  });
}

// ---- shape ops ----

template <typename S>
Var<S> reshape(const Var<S>& a, Shape s) {
  Tensor<S> out = a->value.reshaped(std::move(s));
  return make_node<S>(std::move(out), {a},
                      [a](Node<S>& n) { accum(a, n.grad.array()); });
}

template <typename S>
Var<S> concat(const std::vector<Var<S>>& xs, Index axis) {
  check_contract(!xs.empty(), "concat: empty input");
  Shape s = xs[0]->value.shape();
  Index total = 0;
  for (auto& x : xs) total += x->value.dim(axis);
  s[(size_t)axis] = total;
  Tensor<S> out(s);
  Index outer = 1, inner = 1;
  for (Index i = 0; i < axis; ++i) outer *= s[(size_t)i];
  for (Index i = axis + 1; i < (Index)s.size(); ++i) inner *= s[(size_t)i];
  Index off = 0;
  for (auto& x : xs) {
    Index da = x->value.dim(axis);
    for (Index o = 0; o < outer; ++o)
      std::copy_n(x->value.data() + o * da * inner, da * inner,
                  out.data() + (o * total + off) * inner);
    off += da;
  }
  std::vector<Var<S>> parents = xs;
  return make_node<S>(std::move(out), std::move(parents),
                      [xs, axis, outer, inner, total](Node<S>& n) {
                        Index off = 0;
                        for (auto& x : xs) {
                          Index da = x->value.dim(axis);
                          if (x->requires_grad) {
                            x->ensure_grad();
                            for (Index o = 0; o < outer; ++o) {
                              const S* src = n.grad.data() + (o * total + off) * inner;
                              S* dst = x->grad.data() + o * da * inner;
                              for (Index i = 0; i < da * inner; ++i) dst[i] += src[i];
                            }
                          }
                          off += da;
                        }
                      });
}

template <typename S>
Var<S> slice(const Var<S>& a, Index axis, Index start, Index len) {
  const Shape& in = a->value.shape();
  check_contract(start >= 0 && start + len <= in[(size_t)axis], "slice: out of range");
  Shape s = in;
  s[(size_t)axis] = len;
  Index outer = 1, inner = 1;
  for (Index i = 0; i < axis; ++i) outer *= in[(size_t)i];
  for (Index i = axis + 1; i < (Index)in.size(); ++i) inner *= in[(size_t)i];
  Index da = in[(size_t)axis];
  Tensor<S> out(s);
  for (Index o = 0; o < outer; ++o)
    std::copy_n(a->value.data() + (o * da + start) * inner, len * inner,
                out.data() + o * len * inner);
  return make_node<S>(std::move(out), {a},
                      [a, outer, inner, da, start, len](Node<S>& n) {
                        if (!a->requires_grad) return;
                        a->ensure_grad();
                        for (Index o = 0; o < outer; ++o) {
                          const S* src = n.grad.data() + o * len * inner;
                          S* dst = a->grad.data() + (o * da + start) * inner;
                          for (Index i = 0; i < len * inner; ++i) dst[i] += src[i];
                        }
                      });
}

// x [B,in] * W [in,out] + bias [out]
template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
  Index B = x->value.dim(0), in = x->value.dim(1), out_d = w->value.dim(1);
  check_contract(w->value.dim(0) == in && b->value.size() == out_d,
                 "linear: shape mismatch");
  Tensor<S> out({B, out_d});
  out.matrix(B, out_d).noalias() = x->value.matrix(B, in) * w->value.matrix(in, out_d);
  for (Index i = 0; i < B; ++i)
    for (Index j = 0; j < out_d; ++j) out(i, j) += b->value[j];
  return make_node<S>(std::move(out), {x, w, b}, [x, w, b, B, in, out_d](Node<S>& n) {
    auto g = n.grad.matrix(B, out_d);
    if (x->requires_grad) {
      x->ensure_grad();
      x->grad.matrix(B, in).noalias() += g * w->value.matrix(in, out_d).transpose();
    }
    if (w->requires_grad) {
      w->ensure_grad();
      w->grad.matrix(in, out_d).noalias() += x->value.matrix(B, in).transpose() * g;
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (Index i = 0; i < B; ++i)
        for (Index j = 0; j < out_d; ++j) b->grad[j] += n.grad(i, j);
    }
  });
}

// mean |a - b|
template <typename S>
Var<S> l1_loss(const Var<S>& a, const Var<S>& b) {
  return mean_all(abs_(sub(a, b)));
}

template <typename S>
Var<S> mse_loss(const Var<S>& a, const Var<S>& b) {
  return mean_all(square(sub(a, b)));
}

}  // namespace talkgen::ad
