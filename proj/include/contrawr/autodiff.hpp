#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "contrawr/errors.hpp"

namespace contrawr {

// Reverse-mode automatic differentiation over a dynamically built graph.
// Templated on the scalar so training can run at 32-bit while the gradient
// check suite runs the identical graph at 64-bit.

template <typename S>
struct Node {
  std::vector<S> val;
  std::vector<std::size_t> shape;
  std::vector<S> grad;  // sized on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<S>>> inputs;
  std::function<void()> backprop;  // accumulates into inputs' grads
};

template <typename S>
using Var = std::shared_ptr<Node<S>>;

inline std::size_t numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

template <typename S>
Var<S> make_leaf(std::vector<S> values, std::vector<std::size_t> shape, bool requires_grad) {
  if (values.size() != numel(shape)) throw shape_error("autodiff: leaf value/shape mismatch");
  auto node = std::make_shared<Node<S>>();
  node->val = std::move(values);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return node;
}

template <typename S>
Var<S> make_constant(std::vector<S> values, std::vector<std::size_t> shape) {
  return make_leaf<S>(std::move(values), std::move(shape), false);
}

namespace ad_detail {

template <typename S>
Var<S> make_op(std::vector<std::size_t> shape, std::vector<Var<S>> inputs) {
  auto node = std::make_shared<Node<S>>();
  node->shape = std::move(shape);
  node->val.resize(numel(node->shape));
  for (const auto& in : inputs) node->requires_grad |= in->requires_grad;
  node->inputs = std::move(inputs);
  return node;
}

template <typename S>
S* grad_of(const Var<S>& node) {
  if (node->grad.size() != node->val.size()) node->grad.assign(node->val.size(), S(0));
  return node->grad.data();
}

template <typename S>
void check_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a->shape != b->shape) throw shape_error(std::string("autodiff: ") + op + ": shape mismatch");
}

#ifndef NDEBUG
template <typename S>
void check_finite(const Var<S>& node, const char* op) {
  for (const S& v : node->val) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw numeric_error(std::string("autodiff: non-finite value out of ") + op);
    }
  }
}
#else
template <typename S>
void check_finite(const Var<S>&, const char*) {}
#endif

}  // namespace ad_detail

// ---------------------------------------------------------------------------
// Elementwise ops

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  ad_detail::check_same_shape(a, b, "add");
  auto out = ad_detail::make_op<S>(a->shape, {a, b});
  for (std::size_t i = 0; i < out->val.size(); ++i) out->val[i] = a->val[i] + b->val[i];
  if (out->requires_grad) {
    out->backprop = [out, a, b] {
      if (a->requires_grad) {
        S* ga = ad_detail::grad_of(a);
        for (std::size_t i = 0; i < out->val.size(); ++i) ga[i] += out->grad[i];
      }
      if (b->requires_grad) {
        S* gb = ad_detail::grad_of(b);
        for (std::size_t i = 0; i < out->val.size(); ++i) gb[i] += out->grad[i];
      }
    };
  }
  return out;
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  ad_detail::check_same_shape(a, b, "sub");
  auto out = ad_detail::make_op<S>(a->shape, {a, b});
  for (std::size_t i = 0; i < out->val.size(); ++i) out->val[i] = a->val[i] - b->val[i];
  if (out->requires_grad) {
    out->backprop = [out, a, b] {
      if (a->requires_grad) {
        S* ga = ad_detail::grad_of(a);
        for (std::size_t i = 0; i < out->val.size(); ++i) ga[i] += out->grad[i];
      }
      if (b->requires_grad) {
        S* gb = ad_detail::grad_of(b);
        for (std::size_t i = 0; i < out->val.size(); ++i) gb[i] -= out->grad[i];
      }
    };
  }
  return out;
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  ad_detail::check_same_shape(a, b, "mul");
  auto out = ad_detail::make_op<S>(a->shape, {a, b});
  for (std::size_t i = 0; i < out->val.size(); ++i) out->val[i] = a->val[i] * b->val[i];
  if (out->requires_grad) {
    out->backprop = [out, a, b] {
      if (a->requires_grad) {
        S* ga = ad_detail::grad_of(a);
        for (std::size_t i = 0; i < out->val.size(); ++i) ga[i] += out->grad[i] * b->val[i];
      }
      if (b->requires_grad) {
        S* gb = ad_detail::grad_of(b);
        for (std::size_t i = 0; i < out->val.size(); ++i) gb[i] += out->grad[i] * a->val[i];
      }
    };
  }
  return out;
}

template <typename S>
Var<S> scale(Var<S> a, S factor) {
  auto out = ad_detail::make_op<S>(a->shape, {a});
  for (std::size_t i = 0; i < out->val.size(); ++i) out->val[i] = a->val[i] * factor;
  if (out->requires_grad) {
    out->backprop = [out, a, factor] {
      S* ga = ad_detail::grad_of(a);
      for (std::size_t i = 0; i < out->val.size(); ++i) ga[i] += out->grad[i] * factor;
    };
  }
  return out;
}

template <typename S>
Var<S> add_scalar(Var<S> a, S shift) {
  auto out = ad_detail::make_op<S>(a->shape, {a});
  for (std::size_t i = 0; i < out->val.size(); ++i) out->val[i] = a->val[i] + shift;
  if (out->requires_grad) {
    out->backprop = [out, a] {
      S* ga = ad_detail::grad_of(a);
      for (std::size_t i = 0; i < out->val.size(); ++i) ga[i] += out->grad[i];
    };
  }
  return out;
}

template <typename S>
Var<S> vexp(Var<S> a) {
  auto out = ad_detail::make_op<S>(a->shape, {a});
  for (std::size_t i = 0; i < out->val.size(); ++i) out->val[i] = std::exp(a->val[i]);
  ad_detail::check_finite(out, "exp");
  if (out->requires_grad) {
    out->backprop = [out, a] {
      S* ga = ad_detail::grad_of(a);
      for (std::size_t i = 0; i < out->val.size(); ++i) ga[i] += out->grad[i] * out->val[i];
    };
  }
  return out;
}

// max(x, 0); the subgradient at exactly zero is zero.
template <typename S>
Var<S> relu(Var<S> a) {
  auto out = ad_detail::make_op<S>(a->shape, {a});
  for (std::size_t i = 0; i < out->val.size(); ++i) out->val[i] = std::max(a->val[i], S(0));
  if (out->requires_grad) {
    out->backprop = [out, a] {
      S* ga = ad_detail::grad_of(a);
      for (std::size_t i = 0; i < out->val.size(); ++i) {
        if (a->val[i] > S(0)) ga[i] += out->grad[i];
      }
    };
  }
  return out;
}

// ELU with alpha = 1: x for x > 0, exp(x) - 1 otherwise; C1-continuous at 0.
template <typename S>
Var<S> elu(Var<S> a) {
  auto out = ad_detail::make_op<S>(a->shape, {a});
  for (std::size_t i = 0; i < out->val.size(); ++i) {
    const S x = a->val[i];
    out->val[i] = x > S(0) ? x : std::exp(x) - S(1);
  }
  if (out->requires_grad) {
    out->backprop = [out, a] {
      S* ga = ad_detail::grad_of(a);
      for (std::size_t i = 0; i < out->val.size(); ++i) {
        ga[i] += a->val[i] > S(0) ? out->grad[i] : out->grad[i] * (out->val[i] + S(1));
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and row ops

template <typename S>
Var<S> sum(Var<S> a) {
  auto out = ad_detail::make_op<S>({1}, {a});
  S total = S(0);
  for (const S& v : a->val) total += v;
  out->val[0] = total;
  if (out->requires_grad) {
    out->backprop = [out, a] {
      S* ga = ad_detail::grad_of(a);
      for (std::size_t i = 0; i < a->val.size(); ++i) ga[i] += out->grad[0];
    };
  }
  return out;
}

template <typename S>
Var<S> mean(Var<S> a) {
  const S inv = S(1) / static_cast<S>(a->val.size());
  return scale(sum(a), inv);
}

template <typename S>
Var<S> row_sum(Var<S> a) {
  if (a->shape.size() != 2) throw shape_error("autodiff: row_sum expects a matrix");
  const std::size_t rows = a->shape[0], cols = a->shape[1];
  auto out = ad_detail::make_op<S>({rows}, {a});
  for (std::size_t r = 0; r < rows; ++r) {
    S total = S(0);
    for (std::size_t c = 0; c < cols; ++c) total += a->val[r * cols + c];
    out->val[r] = total;
  }
  if (out->requires_grad) {
    out->backprop = [out, a, rows, cols] {
      S* ga = ad_detail::grad_of(a);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += out->grad[r];
      }
    };
  }
  return out;
}

// Mean over rows of [M x m] -> [m].
template <typename S>
Var<S> mean_rows(Var<S> a) {
  if (a->shape.size() != 2) throw shape_error("autodiff: mean_rows expects a matrix");
  const std::size_t rows = a->shape[0], cols = a->shape[1];
  auto out = ad_detail::make_op<S>({cols}, {a});
  const S inv = S(1) / static_cast<S>(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    S total = S(0);
    for (std::size_t r = 0; r < rows; ++r) total += a->val[r * cols + c];
    out->val[c] = total * inv;
  }
  if (out->requires_grad) {
    out->backprop = [out, a, rows, cols, inv] {
      S* ga = ad_detail::grad_of(a);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += out->grad[c] * inv;
      }
    };
  }
  return out;
}

// Tile a vector [m] into [rows x m].
template <typename S>
Var<S> repeat_rows(Var<S> v, std::size_t rows) {
  if (v->shape.size() != 1) throw shape_error("autodiff: repeat_rows expects a vector");
  const std::size_t cols = v->shape[0];
  auto out = ad_detail::make_op<S>({rows, cols}, {v});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(v->val.begin(), v->val.end(), out->val.begin() + r * cols);
  }
  if (out->requires_grad) {
    out->backprop = [out, v, rows, cols] {
      S* gv = ad_detail::grad_of(v);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) gv[c] += out->grad[r * cols + c];
      }
    };
  }
  return out;
}

template <typename S>
Var<S> reshape(Var<S> a, std::vector<std::size_t> shape) {
  if (numel(shape) != a->val.size()) throw shape_error("autodiff: reshape changes element count");
  auto out = ad_detail::make_op<S>(std::move(shape), {a});
  out->val = a->val;
  if (out->requires_grad) {
    out->backprop = [out, a] {
      S* ga = ad_detail::grad_of(a);
      for (std::size_t i = 0; i < out->val.size(); ++i) ga[i] += out->grad[i];
    };
  }
  return out;
}

// Diagonal of a square matrix -> vector.
template <typename S>
Var<S> diag(Var<S> a) {
  if (a->shape.size() != 2 || a->shape[0] != a->shape[1]) {
    throw shape_error("autodiff: diag expects a square matrix");
  }
  const std::size_t n = a->shape[0];
  auto out = ad_detail::make_op<S>({n}, {a});
  for (std::size_t i = 0; i < n; ++i) out->val[i] = a->val[i * n + i];
  if (out->requires_grad) {
    out->backprop = [out, a, n] {
      S* ga = ad_detail::grad_of(a);
      for (std::size_t i = 0; i < n; ++i) ga[i * n + i] += out->grad[i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix products

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0]) {
    throw shape_error("autodiff: matmul shape mismatch");
  }
  const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
  auto out = ad_detail::make_op<S>({m, n}, {a, b});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      S acc = S(0);
      for (std::size_t p = 0; p < k; ++p) acc += a->val[i * k + p] * b->val[p * n + j];
      out->val[i * n + j] = acc;
    }
  }
  if (out->requires_grad) {
    out->backprop = [out, a, b, m, k, n] {
      if (a->requires_grad) {
        S* ga = ad_detail::grad_of(a);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            S acc = S(0);
            for (std::size_t j = 0; j < n; ++j) acc += out->grad[i * n + j] * b->val[p * n + j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (b->requires_grad) {
        S* gb = ad_detail::grad_of(b);
        for (std::size_t p = 0; p < k; ++p) {
          for (std::size_t j = 0; j < n; ++j) {
            S acc = S(0);
            for (std::size_t i = 0; i < m; ++i) acc += a->val[i * k + p] * out->grad[i * n + j];
            gb[p * n + j] += acc;
          }
        }
      }
    };
  }
  return out;
}

// A [M x K] times B^T where B is [N x K]; the row-similarity workhorse.
template <typename S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[1]) {
    throw shape_error("autodiff: matmul_nt shape mismatch");
  }
  const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[0];
  auto out = ad_detail::make_op<S>({m, n}, {a, b});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      S acc = S(0);
      for (std::size_t p = 0; p < k; ++p) acc += a->val[i * k + p] * b->val[j * k + p];
      out->val[i * n + j] = acc;
    }
  }
  if (out->requires_grad) {
    out->backprop = [out, a, b, m, k, n] {
      if (a->requires_grad) {
        S* ga = ad_detail::grad_of(a);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            S acc = S(0);
            for (std::size_t j = 0; j < n; ++j) acc += out->grad[i * n + j] * b->val[j * k + p];
            ga[i * k + p] += acc;
          }
        }
      }
      if (b->requires_grad) {
        S* gb = ad_detail::grad_of(b);
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t p = 0; p < k; ++p) {
            S acc = S(0);
            for (std::size_t i = 0; i < m; ++i) acc += a->val[i * k + p] * out->grad[i * n + j];
            gb[j * k + p] += acc;
          }
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Row-wise softmax family (max-subtracted for numerical stability)

template <typename S>
Var<S> softmax_rows(Var<S> a) {
  if (a->shape.size() != 2) throw shape_error("autodiff: softmax_rows expects a matrix");
  const std::size_t rows = a->shape[0], cols = a->shape[1];
  auto out = ad_detail::make_op<S>(a->shape, {a});
  for (std::size_t r = 0; r < rows; ++r) {
    const S* x = a->val.data() + r * cols;
    S* y = out->val.data() + r * cols;
    S hi = x[0];
    for (std::size_t c = 1; c < cols; ++c) hi = std::max(hi, x[c]);
    S total = S(0);
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - hi);
      total += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  ad_detail::check_finite(out, "softmax_rows");
  if (out->requires_grad) {
    out->backprop = [out, a, rows, cols] {
      S* ga = ad_detail::grad_of(a);
      for (std::size_t r = 0; r < rows; ++r) {
        const S* y = out->val.data() + r * cols;
        const S* g = out->grad.data() + r * cols;
        S dot = S(0);
        for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
        for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += y[c] * (g[c] - dot);
      }
    };
  }
  return out;
}

template <typename S>
Var<S> logsumexp_rows(Var<S> a) {
  if (a->shape.size() != 2) throw shape_error("autodiff: logsumexp_rows expects a matrix");
  const std::size_t rows = a->shape[0], cols = a->shape[1];
  auto out = ad_detail::make_op<S>({rows}, {a});
  for (std::size_t r = 0; r < rows; ++r) {
    const S* x = a->val.data() + r * cols;
    S hi = x[0];
    for (std::size_t c = 1; c < cols; ++c) hi = std::max(hi, x[c]);
    S total = S(0);
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(x[c] - hi);
    out->val[r] = hi + std::log(total);
  }
  ad_detail::check_finite(out, "logsumexp_rows");
  if (out->requires_grad) {
    out->backprop = [out, a, rows, cols] {
      S* ga = ad_detail::grad_of(a);
      for (std::size_t r = 0; r < rows; ++r) {
        const S* x = a->val.data() + r * cols;
        const S lse = out->val[r];
        for (std::size_t c = 0; c < cols; ++c) {
          ga[r * cols + c] += out->grad[r] * std::exp(x[c] - lse);
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backward pass

// Populates grad fields of every requires_grad node reachable from `loss`.
// The graph's closures are released afterwards unless retain_graph is set.
template <typename S>
void backward(const Var<S>& loss, bool retain_graph = false) {
  if (loss->val.size() != 1) throw contract_error("backward: loss must be a scalar");

  // Iterative post-order over the DAG.
  std::vector<Node<S>*> order;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  std::vector<Node<S>*> visited;
  stack.push_back({loss.get(), 0});
  auto seen = [&](Node<S>* n) {
    return std::find(visited.begin(), visited.end(), n) != visited.end();
  };
  visited.push_back(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<S>* child = node->inputs[next++].get();
      if (child->requires_grad && !seen(child)) {
        visited.push_back(child);
        stack.push_back({child, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->grad.assign(1, S(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop && !(*it)->grad.empty()) (*it)->backprop();
    if (!retain_graph) (*it)->backprop = nullptr;
  }
}

}  // namespace contrawr
