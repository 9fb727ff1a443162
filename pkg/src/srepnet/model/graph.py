"""Scaled graph Laplacian and Chebyshev spectral graph convolution."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .. import autodiff as ad


def scaled_laplacian(adjacency) -> sp.csr_matrix:
    """``L - I`` for the normalised Laplacian ``L = I - D^-1/2 A D^-1/2`` (lambda_max taken as 2)."""
    A = sp.csr_matrix(adjacency, dtype=np.float64)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency must be square, got {A.shape}")
    if (A != A.T).nnz:
        raise ValueError("adjacency must be symmetric")
    if A.diagonal().any():
        raise ValueError("adjacency must not contain self-loops")
    deg = np.asarray(A.sum(axis=1)).ravel()
    if np.any(deg == 0):
        raise ValueError(f"isolated nodes {np.flatnonzero(deg == 0).tolist()}")
    d = sp.diags(1.0 / np.sqrt(deg))
    return (-(d @ A @ d)).tocsr()


def chebyshev_basis(x: ad.Tensor, L, order: int) -> list[ad.Tensor]:
    """``[T_0(L) x, ..., T_{K-1}(L) x]`` by the three-term recurrence."""
    basis = [x]
    if order > 1:
        basis.append(ad.sparse_dense_matmul(L, x))
    for _ in range(2, order):
        basis.append(ad.sparse_dense_matmul(L, basis[-1]) * 2.0 - basis[-2])
    return basis


def cheb_conv(x: ad.Tensor, L, theta: ad.Tensor, bias: ad.Tensor | None = None) -> ad.Tensor:
    """``sum_k T_k(L) x theta[k]`` for x of shape (V, F_in) or (B, V, F_in), theta (K, F_in, F_out)."""
    order, fin, fout = theta.shape
    if x.shape[-1] != fin:
        raise ValueError(f"cheb_conv feature mismatch: input {x.shape}, theta {theta.shape}")
    stacked = ad.concat(chebyshev_basis(x, L, order), axis=-1)  # (..., V, K*F_in), k-major
    return ad.linear(stacked, ad.reshape(theta, (order * fin, fout)), bias)
