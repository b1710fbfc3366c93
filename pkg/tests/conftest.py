"""Shared test helpers: finite-difference machinery and small graph builders."""

import numpy as np
from hypothesis import settings

from mgk.graph import build_knn_rbf_graph
from mgk.linalg import SparseSymMatrix

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")

FD_H = 1e-5


def rel_err(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = max(1e-8, np.max(np.abs(analytic)), np.max(np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric)) / denom)


def fd_grad(loss_fn, arr, h=FD_H):
    """Central finite differences of a scalar loss wrt an array.

    loss_fn takes no arguments and must re-read arr on every call; the
    perturbation is applied in place and always undone.
    """
    grad = np.zeros(arr.shape, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = loss_fn()
        flat[i] = keep - h
        down = loss_fn()
        flat[i] = keep
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def random_graph(rng, n, d=3, k=None, sigma=1.0):
    feats = rng.normal(size=(n, d))
    if k is None:
        k = min(3, n - 1)
    return build_knn_rbf_graph(feats, k, sigma), feats


def dense_to_sparse(a):
    """Pack a symmetric dense matrix into SparseSymMatrix storage."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    rows, cols, vals = [], [], []
    for i in range(n):
        for j in range(i, n):
            if a[i, j] != 0.0:
                rows.append(i)
                cols.append(j)
                vals.append(a[i, j])
    return SparseSymMatrix(dim=n, rows=np.array(rows, dtype=np.int64),
                           cols=np.array(cols, dtype=np.int64),
                           vals=np.array(vals, dtype=np.float64))
