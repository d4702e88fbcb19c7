#pragma once

#include "talkgen/core/autodiff.hpp"

namespace talkgen::ad {

// Layout conventions:
//   conv2d activations  [B, C, H, W]
//   conv1d activations  [B, C, L]
//   conv3d activations  [C, T, H, W]      (space-time volumes, single sample)
//   flow fields / grids [H, W, 2] with last axis (x, y), normalized [-1, 1],
//   align-corners convention: -1 and +1 map to the outermost pixel centers.

// Per-position gate broadcast over channels: x [C,spatial] * gate [1,spatial].
template <typename S>
Var<S> mul_gate(const Var<S>& x, const Var<S>& gate) {
  const Index M = gate->value.size();
  const Index C = x->value.size() / M;
  check_contract(x->value.size() == C * M && gate->value.dim(0) == 1,
                 "mul_gate: shape mismatch");
  Tensor<S> out(x->value.shape());
  for (Index c = 0; c < C; ++c)
    for (Index i = 0; i < M; ++i) out[c * M + i] = x->value[c * M + i] * gate->value[i];
  return make_node<S>(std::move(out), {x, gate}, [x, gate, C, M](Node<S>& n) {
    if (x->requires_grad) {
      x->ensure_grad();
      for (Index c = 0; c < C; ++c)
        for (Index i = 0; i < M; ++i)
          x->grad[c * M + i] += n.grad[c * M + i] * gate->value[i];
    }
    if (gate->requires_grad) {
      gate->ensure_grad();
      for (Index c = 0; c < C; ++c)
        for (Index i = 0; i < M; ++i)
          gate->grad[i] += n.grad[c * M + i] * x->value[c * M + i];
    }
  });
}

// Swap the two leading axes: [A,B,rest] -> [B,A,rest].
template <typename S>
Var<S> swap01(const Var<S>& x) {
  const Index A = x->value.dim(0), B = x->value.dim(1);
  Index inner = 1;
  for (Index i = 2; i < x->value.rank(); ++i) inner *= x->value.dim(i);
  Shape s = x->value.shape();
  std::swap(s[0], s[1]);
  Tensor<S> out(s);
  for (Index a = 0; a < A; ++a)
    for (Index b = 0; b < B; ++b)
      std::copy_n(x->value.data() + (a * B + b) * inner, inner,
                  out.data() + (b * A + a) * inner);
  return make_node<S>(std::move(out), {x}, [x, A, B, inner](Node<S>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (Index a = 0; a < A; ++a)
      for (Index b = 0; b < B; ++b) {
        const S* src = n.grad.data() + (b * A + a) * inner;
        S* dst = x->grad.data() + (a * B + b) * inner;
        for (Index i = 0; i < inner; ++i) dst[i] += src[i];
      }
  });
}

// [H,W,C] -> [C,H,W]
template <typename S>
Var<S> hwc_to_chw(const Var<S>& x) {
  const Index H = x->value.dim(0), W = x->value.dim(1), C = x->value.dim(2);
  Tensor<S> out({C, H, W});
  for (Index y = 0; y < H; ++y)
    for (Index xx = 0; xx < W; ++xx)
      for (Index c = 0; c < C; ++c) out(c, y, xx) = x->value(y, xx, c);
  return make_node<S>(std::move(out), {x}, [x, H, W, C](Node<S>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (Index y = 0; y < H; ++y)
      for (Index xx = 0; xx < W; ++xx)
        for (Index c = 0; c < C; ++c) x->grad(y, xx, c) += n.grad(c, y, xx);
  });
}

// [C,H,W] -> [H,W,C]
template <typename S>
Var<S> chw_to_hwc(const Var<S>& x) {
  const Index C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
  Tensor<S> out({H, W, C});
  for (Index c = 0; c < C; ++c)
    for (Index y = 0; y < H; ++y)
      for (Index xx = 0; xx < W; ++xx) out(y, xx, c) = x->value(c, y, xx);
  return make_node<S>(std::move(out), {x}, [x, H, W, C](Node<S>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (Index c = 0; c < C; ++c)
      for (Index y = 0; y < H; ++y)
        for (Index xx = 0; xx < W; ++xx) x->grad(c, y, xx) += n.grad(y, xx, c);
  });
}

// x [B,Cin,H,W], w [Cout, Cin*k*k], b [Cout]
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, Index k,
              Index stride = 1, Index pad = 0) {
  const Index B = x->value.dim(0), Cin = x->value.dim(1), H = x->value.dim(2),
              W = x->value.dim(3);
  const Index Cout = w->value.dim(0), CKK = w->value.dim(1);
  check_contract(CKK == Cin * k * k, "conv2d: weight shape mismatch");
  const Index Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
  check_contract(Ho > 0 && Wo > 0, "conv2d: output empty");

  auto gather = [=](const Tensor<S>& src, Index bi, std::vector<S>& cols) {
    cols.assign((size_t)(Ho * Wo * CKK), S(0));
    const S* xb = src.data() + bi * Cin * H * W;
    for (Index oy = 0; oy < Ho; ++oy)
      for (Index ox = 0; ox < Wo; ++ox) {
        S* row = cols.data() + (oy * Wo + ox) * CKK;
        for (Index ci = 0; ci < Cin; ++ci)
          for (Index ky = 0; ky < k; ++ky) {
            Index iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            const S* src_row = xb + (ci * H + iy) * W;
            S* dst = row + (ci * k + ky) * k;
            for (Index kx = 0; kx < k; ++kx) {
              Index ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < W) dst[kx] = src_row[ix];
            }
          }
      }
  };

  Tensor<S> out({B, Cout, Ho, Wo});
  {
    std::vector<S> cols;
    for (Index bi = 0; bi < B; ++bi) {
      gather(x->value, bi, cols);
      typename Tensor<S>::ConstMatrixMap cm(cols.data(), Ho * Wo, CKK);
      typename Tensor<S>::MatrixMap om(out.data() + bi * Cout * Ho * Wo, Cout, Ho * Wo);
      om.noalias() = w->value.matrix(Cout, CKK) * cm.transpose();
      for (Index co = 0; co < Cout; ++co) om.row(co).array() += b->value[co];
    }
  }

  return make_node<S>(std::move(out), {x, w, b}, [=](Node<S>& n) {
    std::vector<S> cols, dcols((size_t)(Ho * Wo * CKK));
    for (Index bi = 0; bi < B; ++bi) {
      typename Tensor<S>::ConstMatrixMap g(n.grad.data() + bi * Cout * Ho * Wo, Cout,
                                           Ho * Wo);
      if (w->requires_grad || b->requires_grad) {
        w->ensure_grad();
        b->ensure_grad();
        gather(x->value, bi, cols);
        typename Tensor<S>::ConstMatrixMap cm(cols.data(), Ho * Wo, CKK);
        w->grad.matrix(Cout, CKK).noalias() += g * cm;
        for (Index co = 0; co < Cout; ++co) b->grad[co] += g.row(co).sum();
      }
      if (x->requires_grad) {
        x->ensure_grad();
        typename Tensor<S>::MatrixMap dm(dcols.data(), Ho * Wo, CKK);
        dm.noalias() = g.transpose() * w->value.matrix(Cout, CKK);
        S* dxb = x->grad.data() + bi * Cin * H * W;
        for (Index oy = 0; oy < Ho; ++oy)
          for (Index ox = 0; ox < Wo; ++ox) {
            const S* row = dcols.data() + (oy * Wo + ox) * CKK;
            for (Index ci = 0; ci < Cin; ++ci)
              for (Index ky = 0; ky < k; ++ky) {
                Index iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= H) continue;
                S* dst_row = dxb + (ci * H + iy) * W;
                const S* srow = row + (ci * k + ky) * k;
                for (Index kx = 0; kx < k; ++kx) {
                  Index ix = ox * stride - pad + kx;
                  if (ix >= 0 && ix < W) dst_row[ix] += srow[kx];
                }
              }
          }
      }
    }
  });
}

// x [B,Cin,L], w [Cout, Cin*k], b [Cout]
template <typename S>
Var<S> conv1d(const Var<S>& x, const Var<S>& w, const Var<S>& b, Index k,
              Index stride = 1, Index pad = 0) {
  const Index B = x->value.dim(0), Cin = x->value.dim(1), L = x->value.dim(2);
  const Index Cout = w->value.dim(0), CK = w->value.dim(1);
  check_contract(CK == Cin * k, "conv1d: weight shape mismatch");
  const Index Lo = (L + 2 * pad - k) / stride + 1;
  check_invalid(Lo > 0, "conv1d: sequence shorter than kernel");

  auto gather = [=](const Tensor<S>& src, Index bi, std::vector<S>& cols) {
    cols.assign((size_t)(Lo * CK), S(0));
    const S* xb = src.data() + bi * Cin * L;
    for (Index o = 0; o < Lo; ++o) {
      S* row = cols.data() + o * CK;
      for (Index ci = 0; ci < Cin; ++ci)
        for (Index kk = 0; kk < k; ++kk) {
          Index i = o * stride - pad + kk;
          if (i >= 0 && i < L) row[ci * k + kk] = xb[ci * L + i];
        }
    }
  };

  Tensor<S> out({B, Cout, Lo});
  {
    std::vector<S> cols;
    for (Index bi = 0; bi < B; ++bi) {
      gather(x->value, bi, cols);
      typename Tensor<S>::ConstMatrixMap cm(cols.data(), Lo, CK);
      typename Tensor<S>::MatrixMap om(out.data() + bi * Cout * Lo, Cout, Lo);
      om.noalias() = w->value.matrix(Cout, CK) * cm.transpose();
      for (Index co = 0; co < Cout; ++co) om.row(co).array() += b->value[co];
    }
  }

  return make_node<S>(std::move(out), {x, w, b}, [=](Node<S>& n) {
    std::vector<S> cols, dcols((size_t)(Lo * CK));
    for (Index bi = 0; bi < B; ++bi) {
      typename Tensor<S>::ConstMatrixMap g(n.grad.data() + bi * Cout * Lo, Cout, Lo);
      if (w->requires_grad || b->requires_grad) {
        w->ensure_grad();
        b->ensure_grad();
        gather(x->value, bi, cols);
        typename Tensor<S>::ConstMatrixMap cm(cols.data(), Lo, CK);
        w->grad.matrix(Cout, CK).noalias() += g * cm;
        for (Index co = 0; co < Cout; ++co) b->grad[co] += g.row(co).sum();
      }
      if (x->requires_grad) {
        x->ensure_grad();
        typename Tensor<S>::MatrixMap dm(dcols.data(), Lo, CK);
        dm.noalias() = g.transpose() * w->value.matrix(Cout, CK);
        S* dxb = x->grad.data() + bi * Cin * L;
        for (Index o = 0; o < Lo; ++o) {
          const S* row = dcols.data() + o * CK;
          for (Index ci = 0; ci < Cin; ++ci)
            for (Index kk = 0; kk < k; ++kk) {
              Index i = o * stride - pad + kk;
              if (i >= 0 && i < L) dxb[ci * L + i] += row[ci * k + kk];
            }
        }
      }
    }
  });
}

// x [Cin,T,H,W], w [Cout, Cin*k^3], b [Cout]. The im2col buffer is built one
// output time slice at a time to bound memory.
template <typename S>
Var<S> conv3d(const Var<S>& x, const Var<S>& w, const Var<S>& b, Index k,
              Index stride = 1, Index pad = 0) {
  const Index Cin = x->value.dim(0), T = x->value.dim(1), H = x->value.dim(2),
              W = x->value.dim(3);
  const Index Cout = w->value.dim(0), CKKK = w->value.dim(1);
  check_contract(CKKK == Cin * k * k * k, "conv3d: weight shape mismatch");
  const Index To = (T + 2 * pad - k) / stride + 1, Ho = (H + 2 * pad - k) / stride + 1,
              Wo = (W + 2 * pad - k) / stride + 1;
  check_invalid(To > 0 && Ho > 0 && Wo > 0, "conv3d: output empty");

  auto gather_slice = [=](const Tensor<S>& src, Index ot, std::vector<S>& cols) {
    cols.assign((size_t)(Ho * Wo * CKKK), S(0));
    for (Index oy = 0; oy < Ho; ++oy)
      for (Index ox = 0; ox < Wo; ++ox) {
        S* row = cols.data() + (oy * Wo + ox) * CKKK;
        for (Index ci = 0; ci < Cin; ++ci)
          for (Index kt = 0; kt < k; ++kt) {
            Index it = ot * stride - pad + kt;
            if (it < 0 || it >= T) continue;
            for (Index ky = 0; ky < k; ++ky) {
              Index iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= H) continue;
              const S* src_row = src.data() + ((ci * T + it) * H + iy) * W;
              S* dst = row + ((ci * k + kt) * k + ky) * k;
              for (Index kx = 0; kx < k; ++kx) {
                Index ix = ox * stride - pad + kx;
                if (ix >= 0 && ix < W) dst[kx] = src_row[ix];
              }
            }
          }
      }
  };

  Tensor<S> out({Cout, To, Ho, Wo});
  {
    std::vector<S> cols;
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> slice(Cout, Ho * Wo);
    for (Index ot = 0; ot < To; ++ot) {
      gather_slice(x->value, ot, cols);
      typename Tensor<S>::ConstMatrixMap cm(cols.data(), Ho * Wo, CKKK);
      slice.noalias() = w->value.matrix(Cout, CKKK) * cm.transpose();
      for (Index co = 0; co < Cout; ++co) {
        S* dst = out.data() + (co * To + ot) * Ho * Wo;
        for (Index i = 0; i < Ho * Wo; ++i) dst[i] = slice(co, i) + b->value[co];
      }
    }
  }

  return make_node<S>(std::move(out), {x, w, b}, [=](Node<S>& n) {
    std::vector<S> cols, dcols((size_t)(Ho * Wo * CKKK));
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> g(Cout, Ho * Wo);
    for (Index ot = 0; ot < To; ++ot) {
      for (Index co = 0; co < Cout; ++co) {
        const S* src = n.grad.data() + (co * To + ot) * Ho * Wo;
        for (Index i = 0; i < Ho * Wo; ++i) g(co, i) = src[i];
      }
      if (w->requires_grad || b->requires_grad) {
        w->ensure_grad();
        b->ensure_grad();
        gather_slice(x->value, ot, cols);
        typename Tensor<S>::ConstMatrixMap cm(cols.data(), Ho * Wo, CKKK);
        w->grad.matrix(Cout, CKKK).noalias() += g * cm;
        for (Index co = 0; co < Cout; ++co) b->grad[co] += g.row(co).sum();
      }
      if (x->requires_grad) {
        x->ensure_grad();
        typename Tensor<S>::MatrixMap dm(dcols.data(), Ho * Wo, CKKK);
        dm.noalias() = g.transpose() * w->value.matrix(Cout, CKKK);
        for (Index oy = 0; oy < Ho; ++oy)
          for (Index ox = 0; ox < Wo; ++ox) {
            const S* row = dcols.data() + (oy * Wo + ox) * CKKK;
            for (Index ci = 0; ci < Cin; ++ci)
              for (Index kt = 0; kt < k; ++kt) {
                Index it = ot * stride - pad + kt;
                if (it < 0 || it >= T) continue;
                for (Index ky = 0; ky < k; ++ky) {
                  Index iy = oy * stride - pad + ky;
                  if (iy < 0 || iy >= H) continue;
                  S* dst_row = x->grad.data() + ((ci * T + it) * H + iy) * W;
                  const S* srow = row + ((ci * k + kt) * k + ky) * k;
                  for (Index kx = 0; kx < k; ++kx) {
                    Index ix = ox * stride - pad + kx;
                    if (ix >= 0 && ix < W) dst_row[ix] += srow[kx];
                  }
                }
              }
          }
      }
    }
  });
}

// Non-overlapping average pool, x [B,C,H,W] -> [B,C,H/k,W/k]
template <typename S>
Var<S> avg_pool2d(const Var<S>& x, Index k) {
  const Index B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
              W = x->value.dim(3);
  check_contract(H % k == 0 && W % k == 0, "avg_pool2d: size not divisible");
  const Index Ho = H / k, Wo = W / k;
  const S inv = S(1) / S(k * k);
  Tensor<S> out({B, C, Ho, Wo});
  for (Index bc = 0; bc < B * C; ++bc) {
    const S* src = x->value.data() + bc * H * W;
    S* dst = out.data() + bc * Ho * Wo;
    for (Index oy = 0; oy < Ho; ++oy)
      for (Index ox = 0; ox < Wo; ++ox) {
        S acc = 0;
        for (Index ky = 0; ky < k; ++ky)
          for (Index kx = 0; kx < k; ++kx) acc += src[(oy * k + ky) * W + ox * k + kx];
        dst[oy * Wo + ox] = acc * inv;
      }
  }
  return make_node<S>(std::move(out), {x}, [=](Node<S>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (Index bc = 0; bc < B * C; ++bc) {
      S* dst = x->grad.data() + bc * H * W;
      const S* g = n.grad.data() + bc * Ho * Wo;
      for (Index oy = 0; oy < Ho; ++oy)
        for (Index ox = 0; ox < Wo; ++ox) {
          S gv = g[oy * Wo + ox] * inv;
          for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx) dst[(oy * k + ky) * W + ox * k + kx] += gv;
        }
    }
  });
}

// x [C,T,H,W] -> [C,T/k,H/k,W/k]
template <typename S>
Var<S> avg_pool3d(const Var<S>& x, Index k) {
  const Index C = x->value.dim(0), T = x->value.dim(1), H = x->value.dim(2),
              W = x->value.dim(3);
  check_contract(T % k == 0 && H % k == 0 && W % k == 0, "avg_pool3d: size not divisible");
  const Index To = T / k, Ho = H / k, Wo = W / k;
  const S inv = S(1) / S(k * k * k);
  Tensor<S> out({C, To, Ho, Wo});
  for (Index c = 0; c < C; ++c)
    for (Index ot = 0; ot < To; ++ot)
      for (Index oy = 0; oy < Ho; ++oy)
        for (Index ox = 0; ox < Wo; ++ox) {
          S acc = 0;
          for (Index kt = 0; kt < k; ++kt)
            for (Index ky = 0; ky < k; ++ky)
              for (Index kx = 0; kx < k; ++kx)
                acc += x->value(c, ot * k + kt, oy * k + ky, ox * k + kx);
          out(c, ot, oy, ox) = acc * inv;
        }
  return make_node<S>(std::move(out), {x}, [=](Node<S>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (Index c = 0; c < C; ++c)
      for (Index ot = 0; ot < To; ++ot)
        for (Index oy = 0; oy < Ho; ++oy)
          for (Index ox = 0; ox < Wo; ++ox) {
            S gv = n.grad(c, ot, oy, ox) * inv;
            for (Index kt = 0; kt < k; ++kt)
              for (Index ky = 0; ky < k; ++ky)
                for (Index kx = 0; kx < k; ++kx)
                  x->grad(c, ot * k + kt, oy * k + ky, ox * k + kx) += gv;
          }
  });
}

template <typename S>
Var<S> upsample_nearest2d(const Var<S>& x, Index f) {
  const Index B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2),
              W = x->value.dim(3);
  const Index Ho = H * f, Wo = W * f;
  Tensor<S> out({B, C, Ho, Wo});
  for (Index bc = 0; bc < B * C; ++bc) {
    const S* src = x->value.data() + bc * H * W;
    S* dst = out.data() + bc * Ho * Wo;
    for (Index y = 0; y < Ho; ++y)
      for (Index xx = 0; xx < Wo; ++xx) dst[y * Wo + xx] = src[(y / f) * W + xx / f];
  }
  return make_node<S>(std::move(out), {x}, [=](Node<S>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (Index bc = 0; bc < B * C; ++bc) {
      S* dst = x->grad.data() + bc * H * W;
      const S* g = n.grad.data() + bc * Ho * Wo;
      for (Index y = 0; y < Ho; ++y)
        for (Index xx = 0; xx < Wo; ++xx) dst[(y / f) * W + xx / f] += g[y * Wo + xx];
    }
  });
}

template <typename S>
Var<S> upsample_nearest3d(const Var<S>& x, Index f) {
  const Index C = x->value.dim(0), T = x->value.dim(1), H = x->value.dim(2),
              W = x->value.dim(3);
  const Index To = T * f, Ho = H * f, Wo = W * f;
  Tensor<S> out({C, To, Ho, Wo});
  for (Index c = 0; c < C; ++c)
    for (Index t = 0; t < To; ++t)
      for (Index y = 0; y < Ho; ++y)
        for (Index xx = 0; xx < Wo; ++xx)
          out(c, t, y, xx) = x->value(c, t / f, y / f, xx / f);
  return make_node<S>(std::move(out), {x}, [=](Node<S>& n) {
    if (!x->requires_grad) return;
    x->ensure_grad();
    for (Index c = 0; c < C; ++c)
      for (Index t = 0; t < To; ++t)
        for (Index y = 0; y < Ho; ++y)
          for (Index xx = 0; xx < Wo; ++xx)
            x->grad(c, t / f, y / f, xx / f) += n.grad(c, t, y, xx);
  });
}

// Per-sample, per-channel normalization over the trailing spatial extent.
// x is interpreted as [B, C, M]; gamma/beta are [C].
template <typename S>
Var<S> instance_norm(const Var<S>& x, Index B, Index C, const Var<S>& gamma,
                     const Var<S>& beta, S eps = S(1e-5)) {
  const Index M = x->value.size() / (B * C);
  Tensor<S> out(x->value.shape());
  auto xhat = std::make_shared<Tensor<S>>(x->value.shape());
  auto istd = std::make_shared<Tensor<S>>(Shape{B * C});
  for (Index bc = 0; bc < B * C; ++bc) {
    const S* src = x->value.data() + bc * M;
    Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> m(src, M);
    S mu = m.mean();
    S var = (m - mu).square().mean();
    S is = S(1) / std::sqrt(var + eps);
    (*istd)[bc] = is;
    S g = gamma->value[bc % C], be = beta->value[bc % C];
    S* xh = xhat->data() + bc * M;
    S* dst = out.data() + bc * M;
    for (Index i = 0; i < M; ++i) {
      xh[i] = (src[i] - mu) * is;
      dst[i] = g * xh[i] + be;
    }
  }
  return make_node<S>(std::move(out), {x, gamma, beta}, [=](Node<S>& n) {
    for (Index bc = 0; bc < B * C; ++bc) {
      const S* g = n.grad.data() + bc * M;
      const S* xh = xhat->data() + bc * M;
      const S ga = gamma->value[bc % C];
      if (gamma->requires_grad) {
        gamma->ensure_grad();
        beta->ensure_grad();
        S dg = 0, db = 0;
        for (Index i = 0; i < M; ++i) {
          dg += g[i] * xh[i];
          db += g[i];
        }
        gamma->grad[bc % C] += dg;
        beta->grad[bc % C] += db;
      }
      if (x->requires_grad) {
        x->ensure_grad();
        S sum_g = 0, sum_gx = 0;
        for (Index i = 0; i < M; ++i) {
          sum_g += g[i];
          sum_gx += g[i] * xh[i];
        }
        const S is = (*istd)[bc], invM = S(1) / S(M);
        S* dx = x->grad.data() + bc * M;
        for (Index i = 0; i < M; ++i)
          dx[i] += ga * is * (g[i] - invM * sum_g - xh[i] * invM * sum_gx);
      }
    }
  });
}

// Softmax over the trailing extent M of x viewed as [G, M], optionally with a
// temperature (logits are divided by it before exponentiation).
template <typename S>
Var<S> softmax_rows(const Var<S>& x, Index G, S temperature = S(1)) {
  const Index M = x->value.size() / G;
  Tensor<S> out(x->value.shape());
  const S invT = S(1) / temperature;
  for (Index gi = 0; gi < G; ++gi) {
    Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> m(x->value.data() + gi * M, M);
    Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> o(out.data() + gi * M, M);
    o = ((m - m.maxCoeff()) * invT).exp();
    o /= o.sum();
  }
  auto n = make_node<S>(std::move(out), {x}, nullptr);
  if (n->requires_grad) {
    Node<S>* raw = n.get();
    n->backprop = [x, raw, G, M, invT](Node<S>& nn) {
      x->ensure_grad();
      for (Index gi = 0; gi < G; ++gi) {
        const S* p = raw->value.data() + gi * M;
        const S* g = nn.grad.data() + gi * M;
        S dot = 0;
        for (Index i = 0; i < M; ++i) dot += p[i] * g[i];
        S* dx = x->grad.data() + gi * M;
        for (Index i = 0; i < M; ++i) dx[i] += invT * p[i] * (g[i] - dot);
      }
    };
  }
  return n;
}

// Softmax over the channel axis of x [B,C,M] (per sample and position).
template <typename S>
Var<S> softmax_channel(const Var<S>& x, Index B, Index C) {
  const Index M = x->value.size() / (B * C);
  Tensor<S> out(x->value.shape());
  for (Index bi = 0; bi < B; ++bi)
    for (Index i = 0; i < M; ++i) {
      const S* src = x->value.data() + bi * C * M;
      S mx = src[i];
      for (Index c = 1; c < C; ++c) mx = std::max(mx, src[c * M + i]);
      S sum = 0;
      S* dst = out.data() + bi * C * M;
      for (Index c = 0; c < C; ++c) {
        S e = std::exp(src[c * M + i] - mx);
        dst[c * M + i] = e;
        sum += e;
      }
      for (Index c = 0; c < C; ++c) dst[c * M + i] /= sum;
    }
  auto n = make_node<S>(std::move(out), {x}, nullptr);
  if (n->requires_grad) {
    Node<S>* raw = n.get();
    n->backprop = [x, raw, B, C, M](Node<S>& nn) {
      x->ensure_grad();
      for (Index bi = 0; bi < B; ++bi) {
        const S* p = raw->value.data() + bi * C * M;
        const S* g = nn.grad.data() + bi * C * M;
        S* dx = x->grad.data() + bi * C * M;
        for (Index i = 0; i < M; ++i) {
          S dot = 0;
          for (Index c = 0; c < C; ++c) dot += p[c * M + i] * g[c * M + i];
          for (Index c = 0; c < C; ++c)
            dx[c * M + i] += p[c * M + i] * (g[c * M + i] - dot);
        }
      }
    };
  }
  return n;
}

// Bilinear sampling of input [C,H,W] at grid [Ho,Wo,2] (x,y in [-1,1],
// align-corners, border padding). Differentiable in both input and grid.
template <typename S>
Var<S> grid_sample(const Var<S>& input, const Var<S>& grid) {
  const Index C = input->value.dim(0), H = input->value.dim(1), W = input->value.dim(2);
  const Index Ho = grid->value.dim(0), Wo = grid->value.dim(1);
  check_contract(grid->value.rank() == 3 && grid->value.dim(2) == 2,
                 "grid_sample: grid must be [H,W,2]");
  check_invalid(input->value.all_finite() && grid->value.all_finite(),
                "grid_sample: non-finite input");
  Tensor<S> out({C, Ho, Wo});
  auto to_pix = [](S g, Index n) {
    S p = (g + S(1)) * S(0.5) * S(n - 1);
    return std::min(std::max(p, S(0)), S(n - 1));
  };
  for (Index oy = 0; oy < Ho; ++oy)
    for (Index ox = 0; ox < Wo; ++ox) {
      S px = to_pix(grid->value(oy, ox, 0), W);
      S py = to_pix(grid->value(oy, ox, 1), H);
      Index x0 = (Index)px, y0 = (Index)py;
      Index x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      S wx = px - (S)x0, wy = py - (S)y0;
      for (Index c = 0; c < C; ++c) {
        const S* plane = input->value.data() + c * H * W;
        S v00 = plane[y0 * W + x0], v01 = plane[y0 * W + x1];
        S v10 = plane[y1 * W + x0], v11 = plane[y1 * W + x1];
        out(c, oy, ox) = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                         wy * ((1 - wx) * v10 + wx * v11);
      }
    }
  return make_node<S>(std::move(out), {input, grid}, [=](Node<S>& n) {
    if (input->requires_grad) input->ensure_grad();
    if (grid->requires_grad) grid->ensure_grad();
    for (Index oy = 0; oy < Ho; ++oy)
      for (Index ox = 0; ox < Wo; ++ox) {
        S gx = grid->value(oy, ox, 0), gy = grid->value(oy, ox, 1);
        S pxr = (gx + S(1)) * S(0.5) * S(W - 1);
        S pyr = (gy + S(1)) * S(0.5) * S(H - 1);
        bool cx = pxr <= S(0) || pxr >= S(W - 1);
        bool cy = pyr <= S(0) || pyr >= S(H - 1);
        S px = std::min(std::max(pxr, S(0)), S(W - 1));
        S py = std::min(std::max(pyr, S(0)), S(H - 1));
        Index x0 = (Index)px, y0 = (Index)py;
        Index x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
        S wx = px - (S)x0, wy = py - (S)y0;
        S dpx = 0, dpy = 0;
        for (Index c = 0; c < C; ++c) {
          S g = n.grad(c, oy, ox);
          if (g == S(0)) continue;
          const S* plane = input->value.data() + c * H * W;
          S v00 = plane[y0 * W + x0], v01 = plane[y0 * W + x1];
          S v10 = plane[y1 * W + x0], v11 = plane[y1 * W + x1];
          if (input->requires_grad) {
            S* dplane = input->grad.data() + c * H * W;
            dplane[y0 * W + x0] += g * (1 - wy) * (1 - wx);
            dplane[y0 * W + x1] += g * (1 - wy) * wx;
            dplane[y1 * W + x0] += g * wy * (1 - wx);
            dplane[y1 * W + x1] += g * wy * wx;
          }
          dpx += g * ((1 - wy) * (v01 - v00) + wy * (v11 - v10));
          dpy += g * ((1 - wx) * (v10 - v00) + wx * (v11 - v01));
        }
        if (grid->requires_grad) {
          if (!cx) grid->grad(oy, ox, 0) += dpx * S(0.5) * S(W - 1);
          if (!cy) grid->grad(oy, ox, 1) += dpy * S(0.5) * S(H - 1);
        }
      }
  });
}

}  // namespace talkgen::ad
