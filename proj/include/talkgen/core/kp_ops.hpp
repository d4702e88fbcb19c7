#pragma once

#include "talkgen/core/autodiff.hpp"

namespace talkgen::ad {

// Pixel-center coordinate grid in [-1,1]^2, shape [H,W,2], last axis (x,y).
template <typename S>
Tensor<S> make_grid(Index H, Index W) {
  Tensor<S> g({H, W, 2});
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) {
      g(y, x, 0) = W > 1 ? S(-1) + S(2) * S(x) / S(W - 1) : S(0);
      g(y, x, 1) = H > 1 ? S(-1) + S(2) * S(y) / S(H - 1) : S(0);
    }
  return g;
}

// Isotropic Gaussian bumps centered at kp [N,2] -> [N,H,W].
template <typename S>
Var<S> kp_gaussian(const Var<S>& kp, Index H, Index W, S variance) {
  const Index N = kp->value.dim(0);
  Tensor<S> grid = make_grid<S>(H, W);
  Tensor<S> out({N, H, W});
  const S inv2v = S(1) / (S(2) * variance);
  for (Index n = 0; n < N; ++n) {
    S px = kp->value(n, 0), py = kp->value(n, 1);
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x) {
        S dx = grid(y, x, 0) - px, dy = grid(y, x, 1) - py;
        out(n, y, x) = std::exp(-(dx * dx + dy * dy) * inv2v);
      }
  }
  auto node = make_node<S>(std::move(out), {kp}, nullptr);
  if (node->requires_grad) {
    Node<S>* raw = node.get();
    node->backprop = [kp, raw, H, W, N, variance](Node<S>& nn) {
      kp->ensure_grad();
      Tensor<S> grid = make_grid<S>(H, W);
      const S invv = S(1) / variance;
      for (Index n = 0; n < N; ++n) {
        S px = kp->value(n, 0), py = kp->value(n, 1);
        S gx = 0, gy = 0;
        for (Index y = 0; y < H; ++y)
          for (Index x = 0; x < W; ++x) {
            S e = raw->value(n, y, x) * nn.grad(n, y, x) * invv;
            gx += e * (grid(y, x, 0) - px);
            gy += e * (grid(y, x, 1) - py);
          }
        kp->grad(n, 0) += gx;
        kp->grad(n, 1) += gy;
      }
    };
  }
  return node;
}

// Expected grid position under probability maps p [B,N,H,W] -> [B,N,2].
// This is the soft-argmax readout; p must already be normalized.
template <typename S>
Var<S> spatial_expectation(const Var<S>& p, Index H, Index W) {
  const Index BN = p->value.size() / (H * W);
  Tensor<S> grid = make_grid<S>(H, W);
  Shape s = p->value.shape();
  s.pop_back();
  s.back() = 2;
  Tensor<S> out(s);
  for (Index bn = 0; bn < BN; ++bn) {
    const S* m = p->value.data() + bn * H * W;
    S ex = 0, ey = 0;
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x) {
        ex += m[y * W + x] * grid(y, x, 0);
        ey += m[y * W + x] * grid(y, x, 1);
      }
    out[bn * 2] = ex;
    out[bn * 2 + 1] = ey;
  }
  return make_node<S>(std::move(out), {p}, [=](Node<S>& n) {
    if (!p->requires_grad) return;
    p->ensure_grad();
    Tensor<S> grid = make_grid<S>(H, W);
    for (Index bn = 0; bn < BN; ++bn) {
      S gx = n.grad[bn * 2], gy = n.grad[bn * 2 + 1];
      S* dp = p->grad.data() + bn * H * W;
      for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x)
          dp[y * W + x] += gx * grid(y, x, 0) + gy * grid(y, x, 1);
    }
  });
}

// out[b,n,j] = sum_hw heat[b,n,h,w] * maps[b, n*J+j, h, w]
template <typename S>
Var<S> heatmap_weighted_sum(const Var<S>& heat, const Var<S>& maps, Index J) {
  const Index B = heat->value.dim(0), N = heat->value.dim(1), H = heat->value.dim(2),
              W = heat->value.dim(3);
  check_contract(maps->value.dim(1) == N * J, "heatmap_weighted_sum: channel mismatch");
  const Index M = H * W;
  Tensor<S> out({B, N, J});
  for (Index b = 0; b < B; ++b)
    for (Index n = 0; n < N; ++n) {
      const S* hm = heat->value.data() + (b * N + n) * M;
      for (Index j = 0; j < J; ++j) {
        const S* mp = maps->value.data() + (b * N * J + n * J + j) * M;
        S acc = 0;
        for (Index i = 0; i < M; ++i) acc += hm[i] * mp[i];
        out(b, n, j) = acc;
      }
    }
  return make_node<S>(std::move(out), {heat, maps}, [=](Node<S>& nd) {
    if (heat->requires_grad) heat->ensure_grad();
    if (maps->requires_grad) maps->ensure_grad();
    for (Index b = 0; b < B; ++b)
      for (Index n = 0; n < N; ++n) {
        const S* hm = heat->value.data() + (b * N + n) * M;
        S* dhm = heat->requires_grad ? heat->grad.data() + (b * N + n) * M : nullptr;
        for (Index j = 0; j < J; ++j) {
          S g = nd.grad(b, n, j);
          const S* mp = maps->value.data() + (b * N * J + n * J + j) * M;
          if (dhm)
            for (Index i = 0; i < M; ++i) dhm[i] += g * mp[i];
          if (maps->requires_grad) {
            S* dmp = maps->grad.data() + (b * N * J + n * J + j) * M;
            for (Index i = 0; i < M; ++i) dmp[i] += g * hm[i];
          }
        }
      }
  });
}

// Batched 2x2 products on [N,2,2] tensors.
template <typename S>
Var<S> matmul2x2(const Var<S>& a, const Var<S>& b) {
  check_contract(a->value.same_shape(b->value) && a->value.size() % 4 == 0,
                 "matmul2x2: shape mismatch");
  const Index N = a->value.size() / 4;
  Tensor<S> out(a->value.shape());
  for (Index n = 0; n < N; ++n) {
    const S* A = a->value.data() + n * 4;
    const S* B = b->value.data() + n * 4;
    S* O = out.data() + n * 4;
    O[0] = A[0] * B[0] + A[1] * B[2];
    O[1] = A[0] * B[1] + A[1] * B[3];
    O[2] = A[2] * B[0] + A[3] * B[2];
    O[3] = A[2] * B[1] + A[3] * B[3];
  }
  return make_node<S>(std::move(out), {a, b}, [=](Node<S>& nd) {
    for (Index n = 0; n < N; ++n) {
      const S* A = a->value.data() + n * 4;
      const S* B = b->value.data() + n * 4;
      const S* G = nd.grad.data() + n * 4;
      if (a->requires_grad) {
        a->ensure_grad();
        S* dA = a->grad.data() + n * 4;
        dA[0] += G[0] * B[0] + G[1] * B[1];
        dA[1] += G[0] * B[2] + G[1] * B[3];
        dA[2] += G[2] * B[0] + G[3] * B[1];
        dA[3] += G[2] * B[2] + G[3] * B[3];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        S* dB = b->grad.data() + n * 4;
        dB[0] += A[0] * G[0] + A[2] * G[2];
        dB[1] += A[0] * G[1] + A[2] * G[3];
        dB[2] += A[1] * G[0] + A[3] * G[2];
        dB[3] += A[1] * G[1] + A[3] * G[3];
      }
    }
  });
}

// Batched 2x2 inverse on [N,2,2]; throws on near-singular blocks.
template <typename S>
Var<S> inv2x2(const Var<S>& a, S min_abs_det = S(1e-6)) {
  const Index N = a->value.size() / 4;
  Tensor<S> out(a->value.shape());
  for (Index n = 0; n < N; ++n) {
    const S* A = a->value.data() + n * 4;
    S det = A[0] * A[3] - A[1] * A[2];
    if (std::abs(det) <= min_abs_det)
      throw Error(ErrorKind::invalid_input,
                  "inv2x2: singular Jacobian at keypoint " + std::to_string(n));
    S inv = S(1) / det;
    S* O = out.data() + n * 4;
    O[0] = A[3] * inv;
    O[1] = -A[1] * inv;
    O[2] = -A[2] * inv;
    O[3] = A[0] * inv;
  }
  auto node = make_node<S>(std::move(out), {a}, nullptr);
  if (node->requires_grad) {
    Node<S>* raw = node.get();
    // d inv(X) = -inv(X) dX inv(X)  =>  dL/dX = -inv(X)^T G inv(X)^T
    node->backprop = [a, raw, N](Node<S>& nd) {
      a->ensure_grad();
      for (Index n = 0; n < N; ++n) {
        const S* I = raw->value.data() + n * 4;  // inv(X), row major
        const S* G = nd.grad.data() + n * 4;
        S IT[4] = {I[0], I[2], I[1], I[3]};
        S tmp[4] = {IT[0] * G[0] + IT[1] * G[2], IT[0] * G[1] + IT[1] * G[3],
                    IT[2] * G[0] + IT[3] * G[2], IT[2] * G[1] + IT[3] * G[3]};
        S* dA = a->grad.data() + n * 4;
        dA[0] -= tmp[0] * IT[0] + tmp[1] * IT[2];
        dA[1] -= tmp[0] * IT[1] + tmp[1] * IT[3];
        dA[2] -= tmp[2] * IT[0] + tmp[3] * IT[2];
        dA[3] -= tmp[2] * IT[1] + tmp[3] * IT[3];
      }
    };
  }
  return node;
}

// N local affine backward flows plus an identity background candidate.
// Candidate k sends driving-frame position z to source coordinates
//   p_src^k + A_k (z - p_drv^k),  A_k = j_src^k (j_drv^k)^{-1};
// candidate N is the identity. Output [N+1, H, W, 2].
template <typename S>
Var<S> affine_candidate_flows(const Var<S>& p_src, const Var<S>& j_src,
                              const Var<S>& p_drv, const Var<S>& j_drv, Index H,
                              Index W) {
  const Index N = p_src->value.dim(0);
  check_contract(p_drv->value.dim(0) == N && j_src->value.dim(0) == N &&
                     j_drv->value.dim(0) == N,
                 "affine flows: keypoint count mismatch");
  auto jd_inv = inv2x2(j_drv);
  auto a_mat = matmul2x2(j_src, jd_inv);  // [N,2,2]

  Tensor<S> grid = make_grid<S>(H, W);
  Tensor<S> out({N + 1, H, W, 2});
  for (Index n = 0; n < N; ++n) {
    const S* A = a_mat->value.data() + n * 4;
    S psx = p_src->value(n, 0), psy = p_src->value(n, 1);
    S pdx = p_drv->value(n, 0), pdy = p_drv->value(n, 1);
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x) {
        S zx = grid(y, x, 0) - pdx, zy = grid(y, x, 1) - pdy;
        out(n, y, x, 0) = psx + A[0] * zx + A[1] * zy;
        out(n, y, x, 1) = psy + A[2] * zx + A[3] * zy;
      }
  }
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) {
      out(N, y, x, 0) = grid(y, x, 0);
      out(N, y, x, 1) = grid(y, x, 1);
    }

  return make_node<S>(std::move(out), {p_src, p_drv, a_mat}, [=](Node<S>& nd) {
    Tensor<S> grid = make_grid<S>(H, W);
    const Index M = H * W;
    bool need_a = a_mat->requires_grad;
    if (p_src->requires_grad) p_src->ensure_grad();
    if (p_drv->requires_grad) p_drv->ensure_grad();
    if (need_a) a_mat->ensure_grad();
    for (Index n = 0; n < N; ++n) {
      const S* A = a_mat->value.data() + n * 4;
      S pdx = p_drv->value(n, 0), pdy = p_drv->value(n, 1);
      const S* g = nd.grad.data() + n * M * 2;
      S sgx = 0, sgy = 0;  // sums of output grads
      S dA[4] = {0, 0, 0, 0};
      for (Index i = 0; i < M; ++i) {
        S gx = g[i * 2], gy = g[i * 2 + 1];
        sgx += gx;
        sgy += gy;
        if (need_a) {
          S zx = grid[i * 2] - pdx, zy = grid[i * 2 + 1] - pdy;
          dA[0] += gx * zx;
          dA[1] += gx * zy;
          dA[2] += gy * zx;
          dA[3] += gy * zy;
        }
      }
      if (p_src->requires_grad) {
        p_src->grad(n, 0) += sgx;
        p_src->grad(n, 1) += sgy;
      }
      if (p_drv->requires_grad) {
        // d flow / d p_drv = -A
        p_drv->grad(n, 0) += -(A[0] * sgx + A[2] * sgy);
        p_drv->grad(n, 1) += -(A[1] * sgx + A[3] * sgy);
      }
      if (need_a) {
        S* da = a_mat->grad.data() + n * 4;
        for (int q = 0; q < 4; ++q) da[q] += dA[q];
      }
    }
  });
}

// flow = sum_k mask_k * candidate_k. masks [N+1,H,W], candidates [N+1,H,W,2].
template <typename S>
Var<S> mask_mixture_flow(const Var<S>& candidates, const Var<S>& masks) {
  const Index K = candidates->value.dim(0), H = candidates->value.dim(1),
              W = candidates->value.dim(2);
  check_contract(masks->value.dim(0) == K && masks->value.dim(1) == H &&
                     masks->value.dim(2) == W,
                 "mask mixture: shape mismatch");
  const Index M = H * W;
  Tensor<S> out({H, W, 2});
  for (Index k = 0; k < K; ++k) {
    const S* c = candidates->value.data() + k * M * 2;
    const S* m = masks->value.data() + k * M;
    for (Index i = 0; i < M; ++i) {
      out[i * 2] += m[i] * c[i * 2];
      out[i * 2 + 1] += m[i] * c[i * 2 + 1];
    }
  }
  return make_node<S>(std::move(out), {candidates, masks}, [=](Node<S>& nd) {
    if (candidates->requires_grad) candidates->ensure_grad();
    if (masks->requires_grad) masks->ensure_grad();
    for (Index k = 0; k < K; ++k) {
      const S* c = candidates->value.data() + k * M * 2;
      const S* m = masks->value.data() + k * M;
      for (Index i = 0; i < M; ++i) {
        S gx = nd.grad[i * 2], gy = nd.grad[i * 2 + 1];
        if (candidates->requires_grad) {
          S* dc = candidates->grad.data() + k * M * 2;
          dc[i * 2] += m[i] * gx;
          dc[i * 2 + 1] += m[i] * gy;
        }
        if (masks->requires_grad) {
          masks->grad.data()[k * M + i] += gx * c[i * 2] + gy * c[i * 2 + 1];
        }
      }
    }
  });
}

}  // namespace talkgen::ad
