#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "contrawr/autodiff.hpp"
#include "contrawr/errors.hpp"

namespace contrawr {

// Y = X W^T + b with X [B x in], W [out x in], b [out].
template <typename S>
Var<S> linear(Var<S> x, Var<S> w, Var<S> b, const std::string& layer = "linear") {
  if (x->shape.size() != 2 || w->shape.size() != 2 || x->shape[1] != w->shape[1] ||
      b->shape.size() != 1 || b->shape[0] != w->shape[0]) {
    throw shape_error("layer " + layer + ": linear shape mismatch");
  }
  const std::size_t batch = x->shape[0], in = x->shape[1], out_dim = w->shape[0];
  auto out = ad_detail::make_op<S>({batch, out_dim}, {x, w, b});
  for (std::size_t i = 0; i < batch; ++i) {
    const S* xi = x->val.data() + i * in;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const S* wo = w->val.data() + o * in;
      S acc = b->val[o];
      for (std::size_t p = 0; p < in; ++p) acc += xi[p] * wo[p];
      out->val[i * out_dim + o] = acc;
    }
  }
  ad_detail::check_finite(out, "linear");
  if (out->requires_grad) {
    out->backprop = [out, x, w, b, batch, in, out_dim] {
      if (x->requires_grad) {
        S* gx = ad_detail::grad_of(x);
        for (std::size_t i = 0; i < batch; ++i) {
          for (std::size_t p = 0; p < in; ++p) {
            S acc = S(0);
            for (std::size_t o = 0; o < out_dim; ++o) {
              acc += out->grad[i * out_dim + o] * w->val[o * in + p];
            }
            gx[i * in + p] += acc;
          }
        }
      }
      if (w->requires_grad) {
        S* gw = ad_detail::grad_of(w);
        for (std::size_t o = 0; o < out_dim; ++o) {
          for (std::size_t p = 0; p < in; ++p) {
            S acc = S(0);
            for (std::size_t i = 0; i < batch; ++i) {
              acc += out->grad[i * out_dim + o] * x->val[i * in + p];
            }
            gw[o * in + p] += acc;
          }
        }
      }
      if (b->requires_grad) {
        S* gb = ad_detail::grad_of(b);
        for (std::size_t o = 0; o < out_dim; ++o) {
          S acc = S(0);
          for (std::size_t i = 0; i < batch; ++i) acc += out->grad[i * out_dim + o];
          gb[o] += acc;
        }
      }
    };
  }
  return out;
}

namespace conv_detail {

// Patch matrix for one sample: row (ci, ky, kx) holds the input values under
// that kernel tap for every output position, zero-filled at the padding.
template <typename S>
void im2col(const S* src, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t oh, std::size_t ow, std::size_t stride,
            std::ptrdiff_t pad, S* col) {
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const S* plane = src + ci * h * w;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        S* row = col + ((ci * kh + ky) * kw + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
          S* dst = row + oy * ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + ow, S(0));
            continue;
          }
          const S* line = plane + iy * static_cast<std::ptrdiff_t>(w);
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? S(0) : line[ix];
          }
        }
      }
    }
  }
}

// Scatter-add of a patch-matrix gradient back onto the input plane.
template <typename S>
void col2im_add(const S* col, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh,
                std::size_t kw, std::size_t oh, std::size_t ow, std::size_t stride,
                std::ptrdiff_t pad, S* dst) {
  for (std::size_t ci = 0; ci < cin; ++ci) {
    S* plane = dst + ci * h * w;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const S* row = col + ((ci * kh + ky) * kw + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          S* line = plane + iy * static_cast<std::ptrdiff_t>(w);
          const S* g = row + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) line[ix] += g[ox];
          }
        }
      }
    }
  }
}

// C[m x n] += A[m x k] * B[k x n], row-major, accumulate-row form so the
// inner loop runs contiguously over both C and B.
template <typename S>
void gemm_acc(const S* a, const S* b, std::size_t m, std::size_t k, std::size_t n, S* c) {
  for (std::size_t i = 0; i < m; ++i) {
    S* crow = c + i * n;
    const S* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const S f = arow[p];
      if (f == S(0)) continue;
      const S* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += f * brow[j];
    }
  }
}

// C[m x n] += A^T's row view: c[i, j] += sum_p a[i*k+p] * b[j*k+p] is not
// needed; what the weight gradient wants is C[m x k] += G[m x n] * col[k x n]^T,
// i.e. dot products of contiguous rows.
template <typename S>
void gemm_nt_acc(const S* a, const S* b, std::size_t m, std::size_t n, std::size_t k, S* c) {
  // c[i, p] += sum_j a[i * n + j] * b[p * n + j]
  for (std::size_t i = 0; i < m; ++i) {
    const S* arow = a + i * n;
    S* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const S* brow = b + p * n;
      S acc = S(0);
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

}  // namespace conv_detail

// 2-D convolution over [B x C x H x W] with kernel [Cout x Cin x KH x KW],
// zero padding, square stride, realized as per-sample im2col + GEMM.
// Parallel loops partition their output (samples, or fixed accumulation
// slots for the weight gradient), so results are bitwise independent of the
// thread count.
template <typename S>
Var<S> conv2d(Var<S> x, Var<S> w, Var<S> b, std::size_t stride, std::size_t pad,
              const std::string& layer = "conv") {
  if (x->shape.size() != 4 || w->shape.size() != 4 || x->shape[1] != w->shape[1] ||
      b->shape.size() != 1 || b->shape[0] != w->shape[0]) {
    throw shape_error("layer " + layer + ": conv2d shape mismatch");
  }
  const std::size_t batch = x->shape[0], cin = x->shape[1], h = x->shape[2], wd = x->shape[3];
  const std::size_t cout = w->shape[0], kh = w->shape[2], kw = w->shape[3];
  if (h + 2 * pad < kh || wd + 2 * pad < kw) {
    throw shape_error("layer " + layer + ": input smaller than kernel");
  }
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (wd + 2 * pad - kw) / stride + 1;
  const std::size_t taps = cin * kh * kw;   // patch rows
  const std::size_t positions = oh * ow;    // patch columns
  const std::ptrdiff_t ipad = static_cast<std::ptrdiff_t>(pad);

  auto out = ad_detail::make_op<S>({batch, cout, oh, ow}, {x, w, b});

#pragma omp parallel
  {
    std::vector<S> col(taps * positions);
#pragma omp for schedule(static)
    for (std::size_t n = 0; n < batch; ++n) {
      conv_detail::im2col(x->val.data() + n * cin * h * wd, cin, h, wd, kh, kw, oh, ow, stride,
                          ipad, col.data());
      S* dst = out->val.data() + n * cout * positions;
      for (std::size_t co = 0; co < cout; ++co) {
        std::fill(dst + co * positions, dst + (co + 1) * positions, b->val[co]);
      }
      conv_detail::gemm_acc(w->val.data(), col.data(), cout, taps, positions, dst);
    }
  }
  ad_detail::check_finite(out, "conv2d");

  if (out->requires_grad) {
    out->backprop = [out, x, w, b, batch, cin, h, wd, cout, kh, kw, oh, ow, stride, ipad, taps,
                     positions] {
      if (x->requires_grad) {
        S* gx = ad_detail::grad_of(x);
#pragma omp parallel
        {
          std::vector<S> dcol(taps * positions);
#pragma omp for schedule(static)
          for (std::size_t n = 0; n < batch; ++n) {
            // dcol = W^T (as [taps x cout]) * G_n; built tap row by tap row.
            std::fill(dcol.begin(), dcol.end(), S(0));
            const S* g = out->grad.data() + n * cout * positions;
            for (std::size_t co = 0; co < cout; ++co) {
              const S* grow = g + co * positions;
              const S* wrow = w->val.data() + co * taps;
              for (std::size_t t = 0; t < taps; ++t) {
                const S f = wrow[t];
                if (f == S(0)) continue;
                S* drow = dcol.data() + t * positions;
                for (std::size_t j = 0; j < positions; ++j) drow[j] += f * grow[j];
              }
            }
            conv_detail::col2im_add(dcol.data(), cin, h, wd, kh, kw, oh, ow, stride, ipad,
                                    gx + n * cin * h * wd);
          }
        }
      }
      if (w->requires_grad || b->requires_grad) {
        // Fixed accumulation slots (sample index mod kSlots, each slot
        // summed serially in index order) keep the reduction order
        // independent of scheduling.
        constexpr std::size_t kSlots = 4;
        const std::size_t used = std::min(kSlots, batch);
        std::vector<std::vector<S>> wslot(used), bslot(used);
#pragma omp parallel
        {
          std::vector<S> col(taps * positions);
#pragma omp for schedule(static)
          for (std::size_t slot = 0; slot < used; ++slot) {
            wslot[slot].assign(cout * taps, S(0));
            bslot[slot].assign(cout, S(0));
            for (std::size_t n = slot; n < batch; n += used) {
              const S* g = out->grad.data() + n * cout * positions;
              if (w->requires_grad) {
                conv_detail::im2col(x->val.data() + n * cin * h * wd, cin, h, wd, kh, kw, oh,
                                    ow, stride, ipad, col.data());
                conv_detail::gemm_nt_acc(g, col.data(), cout, positions, taps,
                                         wslot[slot].data());
              }
              for (std::size_t co = 0; co < cout; ++co) {
                const S* grow = g + co * positions;
                S acc = S(0);
                for (std::size_t j = 0; j < positions; ++j) acc += grow[j];
                bslot[slot][co] += acc;
              }
            }
          }
        }
        if (w->requires_grad) {
          S* gw = ad_detail::grad_of(w);
          for (std::size_t slot = 0; slot < used; ++slot) {
            for (std::size_t i = 0; i < cout * taps; ++i) gw[i] += wslot[slot][i];
          }
        }
        if (b->requires_grad) {
          S* gb = ad_detail::grad_of(b);
          for (std::size_t slot = 0; slot < used; ++slot) {
            for (std::size_t co = 0; co < cout; ++co) gb[co] += bslot[slot][co];
          }
        }
      }
    };
  }
  return out;
}

// Batch normalization over [B x C x H x W], statistics per channel.
// use_batch_stats selects train-mode math; update_running writes the
// momentum-mixed statistics back through the raw pointers (running variance
// uses the unbiased estimate, normalization the biased one).
template <typename S>
Var<S> batchnorm2d(Var<S> x, Var<S> gamma, Var<S> beta, S* running_mean, S* running_var,
                   bool use_batch_stats, bool update_running, S momentum, S eps,
                   const std::string& layer = "bn") {
  if (x->shape.size() != 4 || gamma->shape.size() != 1 || gamma->shape[0] != x->shape[1] ||
      beta->shape != gamma->shape) {
    throw shape_error("layer " + layer + ": batchnorm shape mismatch");
  }
  const std::size_t batch = x->shape[0], ch = x->shape[1], plane = x->shape[2] * x->shape[3];
  const std::size_t count = batch * plane;

  auto out = ad_detail::make_op<S>(x->shape, {x, gamma, beta});
  std::vector<S> mu(ch), inv_std(ch);
  auto xhat = std::make_shared<std::vector<S>>(x->val.size());

  for (std::size_t c = 0; c < ch; ++c) {
    S m, v;
    if (use_batch_stats) {
      S total = S(0);
      for (std::size_t n = 0; n < batch; ++n) {
        const S* src = x->val.data() + (n * ch + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) total += src[i];
      }
      m = total / static_cast<S>(count);
      S sq = S(0);
      for (std::size_t n = 0; n < batch; ++n) {
        const S* src = x->val.data() + (n * ch + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sq += (src[i] - m) * (src[i] - m);
      }
      v = sq / static_cast<S>(count);
      if (update_running) {
        const S unbiased = count > 1 ? sq / static_cast<S>(count - 1) : v;
        running_mean[c] = (S(1) - momentum) * running_mean[c] + momentum * m;
        running_var[c] = (S(1) - momentum) * running_var[c] + momentum * unbiased;
      }
    } else {
      m = running_mean[c];
      v = running_var[c];
    }
    mu[c] = m;
    inv_std[c] = S(1) / std::sqrt(v + eps);
    for (std::size_t n = 0; n < batch; ++n) {
      const S* src = x->val.data() + (n * ch + c) * plane;
      S* xh = xhat->data() + (n * ch + c) * plane;
      S* dst = out->val.data() + (n * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - m) * inv_std[c];
        dst[i] = gamma->val[c] * xh[i] + beta->val[c];
      }
    }
  }

  ad_detail::check_finite(out, "batchnorm");
  if (out->requires_grad) {
    out->backprop = [out, x, gamma, beta, xhat, inv_std, batch, ch, plane, count,
                     use_batch_stats] {
      for (std::size_t c = 0; c < ch; ++c) {
        S sum_g = S(0), sum_gx = S(0);
        for (std::size_t n = 0; n < batch; ++n) {
          const S* g = out->grad.data() + (n * ch + c) * plane;
          const S* xh = xhat->data() + (n * ch + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            sum_g += g[i];
            sum_gx += g[i] * xh[i];
          }
        }
        if (beta->requires_grad) ad_detail::grad_of(beta)[c] += sum_g;
        if (gamma->requires_grad) ad_detail::grad_of(gamma)[c] += sum_gx;
        if (x->requires_grad) {
          S* gx = ad_detail::grad_of(x);
          const S scale = gamma->val[c] * inv_std[c];
          for (std::size_t n = 0; n < batch; ++n) {
            const S* g = out->grad.data() + (n * ch + c) * plane;
            const S* xh = xhat->data() + (n * ch + c) * plane;
            S* dst = gx + (n * ch + c) * plane;
            if (use_batch_stats) {
              const S inv_count = S(1) / static_cast<S>(count);
              for (std::size_t i = 0; i < plane; ++i) {
                dst[i] += scale * (g[i] - inv_count * sum_g - inv_count * xh[i] * sum_gx);
              }
            } else {
              for (std::size_t i = 0; i < plane; ++i) dst[i] += scale * g[i];
            }
          }
        }
      }
    };
  }
  return out;
}

// Adaptive average pooling of [B x C x H x W] to a fixed (out_h x out_w)
// grid; cell (i, j) averages the half-open block [i*H/out_h, (i+1)*H/out_h).
template <typename S>
Var<S> adaptive_avg_pool2d(Var<S> x, std::size_t out_h, std::size_t out_w) {
  if (x->shape.size() != 4) throw shape_error("autodiff: adaptive_avg_pool2d expects 4-D input");
  const std::size_t batch = x->shape[0], ch = x->shape[1], h = x->shape[2], w = x->shape[3];
  if (h < out_h || w < out_w) throw shape_error("autodiff: pool grid larger than input");

  auto out = ad_detail::make_op<S>({batch, ch, out_h, out_w}, {x});
  auto cell = [](std::size_t i, std::size_t in, std::size_t grid) {
    return std::pair<std::size_t, std::size_t>{i * in / grid, (i + 1) * in / grid};
  };
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < ch; ++c) {
      const S* src = x->val.data() + (n * ch + c) * h * w;
      S* dst = out->val.data() + (n * ch + c) * out_h * out_w;
      for (std::size_t i = 0; i < out_h; ++i) {
        auto [y0, y1] = cell(i, h, out_h);
        for (std::size_t j = 0; j < out_w; ++j) {
          auto [x0, x1] = cell(j, w, out_w);
          S acc = S(0);
          for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t xx = x0; xx < x1; ++xx) acc += src[y * w + xx];
          }
          dst[i * out_w + j] = acc / static_cast<S>((y1 - y0) * (x1 - x0));
        }
      }
    }
  }
  if (out->requires_grad) {
    out->backprop = [out, x, batch, ch, h, w, out_h, out_w, cell] {
      S* gx = ad_detail::grad_of(x);
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t c = 0; c < ch; ++c) {
          const S* g = out->grad.data() + (n * ch + c) * out_h * out_w;
          S* dst = gx + (n * ch + c) * h * w;
          for (std::size_t i = 0; i < out_h; ++i) {
            auto [y0, y1] = cell(i, h, out_h);
            for (std::size_t j = 0; j < out_w; ++j) {
              auto [x0, x1] = cell(j, w, out_w);
              const S share = g[i * out_w + j] / static_cast<S>((y1 - y0) * (x1 - x0));
              for (std::size_t y = y0; y < y1; ++y) {
                for (std::size_t xx = x0; xx < x1; ++xx) dst[y * w + xx] += share;
              }
            }
          }
        }
      }
    };
  }
  return out;
}

// Row-wise projection onto the unit hypersphere. A zero row maps to the
// first basis vector and receives zero gradient (documented convention).
template <typename S>
Var<S> l2_normalize_rows(Var<S> x) {
  if (x->shape.size() != 2) throw shape_error("autodiff: l2_normalize_rows expects a matrix");
  const std::size_t rows = x->shape[0], cols = x->shape[1];
  auto out = ad_detail::make_op<S>(x->shape, {x});
  auto norms = std::make_shared<std::vector<S>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const S* src = x->val.data() + r * cols;
    S sq = S(0);
    for (std::size_t c = 0; c < cols; ++c) sq += src[c] * src[c];
    const S norm = std::sqrt(sq);
    (*norms)[r] = norm;
    S* dst = out->val.data() + r * cols;
    if (norm > S(0)) {
      for (std::size_t c = 0; c < cols; ++c) dst[c] = src[c] / norm;
    } else {
      std::fill(dst, dst + cols, S(0));
      dst[0] = S(1);
    }
  }
  ad_detail::check_finite(out, "l2_normalize_rows");
  if (out->requires_grad) {
    out->backprop = [out, x, norms, rows, cols] {
      S* gx = ad_detail::grad_of(x);
      for (std::size_t r = 0; r < rows; ++r) {
        const S norm = (*norms)[r];
        if (norm <= S(0)) continue;
        const S* y = out->val.data() + r * cols;
        const S* g = out->grad.data() + r * cols;
        S dot = S(0);
        for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += (g[c] - dot * y[c]) / norm;
      }
    };
  }
  return out;
}

}  // namespace contrawr
