"""KNN/RBF graph construction and the Laplacian family used for filtering.

Vertices are feature vectors (pixels); edges connect each vertex to its k
nearest neighbors under squared euclidean distance, symmetrized by union,
with Gaussian weights exp(-d^2 / sigma^2). Distances are meant to be taken
on min-max normalized features (see data.normalize_bands); the builder does
not renormalize its input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError
from .linalg import SparseSymMatrix


@dataclass(frozen=True)
class Graph:
    """An undirected weighted graph plus cached propagation operator.

    ``prop`` caches the renormalized propagation (self-loops added, degree
    renormalized); it always equals ``renormalized_propagation`` recomputed
    from the adjacency.
    """

    n: int
    adjacency: SparseSymMatrix
    degree: np.ndarray
    knn_k: int
    rbf_sigma: float
    prop: SparseSymMatrix


def pairwise_sq_dists(features: np.ndarray) -> np.ndarray:
    """All-pairs squared euclidean distances, clamped at zero."""
    x = np.asarray(features, dtype=np.float64)
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    return np.maximum(d2, 0.0)


def build_knn_rbf_graph(features, k: int, sigma: float) -> Graph:
    """Build the union-symmetrized KNN graph with RBF edge weights.

    Each vertex selects its k nearest other vertices (ties broken by lower
    vertex index, duplicates at distance zero count against the k budget
    with weight 1); an edge exists if either endpoint selected the other.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"features must be 2-D, got shape {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise ContractError(f"need at least 2 vertices, got {n}")
    if not (1 <= k < n):
        raise ContractError(f"k must satisfy 1 <= k < n, got k={k}, n={n}")
    if not (sigma > 0):
        raise ContractError(f"sigma must be positive, got {sigma}")
    if not np.all(np.isfinite(x)):
        raise ContractError("features must be finite")

    d2 = pairwise_sq_dists(x)
    np.fill_diagonal(d2, np.inf)
    # stable sort: equal distances resolve to the lower vertex index
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]

    src = np.repeat(np.arange(n), k)
    dst = nearest.ravel()
    lo = np.minimum(src, dst)
    hi = np.maximum(src, dst)
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
    w = np.exp(-d2[pairs[:, 0], pairs[:, 1]] / (sigma * sigma))

    adj = SparseSymMatrix(n, pairs[:, 0], pairs[:, 1], w,
                          require_nonnegative=True)
    degree = adj.row_sums()
    return Graph(n=n, adjacency=adj, degree=degree, knn_k=k,
                 rbf_sigma=float(sigma), prop=_renorm_prop(adj))


def laplacian(g: Graph) -> SparseSymMatrix:
    """Combinatorial Laplacian L = D - A."""
    a = g.adjacency
    n = g.n
    rows = np.concatenate([np.arange(n), a.rows])
    cols = np.concatenate([np.arange(n), a.cols])
    vals = np.concatenate([g.degree, -a.vals])
    return SparseSymMatrix(n, rows, cols, vals)


def sym_normalized_laplacian(g: Graph) -> SparseSymMatrix:
    """Symmetric normalized Laplacian I - D^{-1/2} A D^{-1/2}.

    Every eigenvalue lands in [0, 2]. Requires strictly positive degrees.
    """
    zero = np.nonzero(g.degree <= 0.0)[0]
    if zero.size:
        raise ContractError(
            f"vertex {int(zero[0])} has zero degree; cannot normalize"
        )
    a = g.adjacency
    inv_sqrt = 1.0 / np.sqrt(g.degree)
    n = g.n
    rows = np.concatenate([np.arange(n), a.rows])
    cols = np.concatenate([np.arange(n), a.cols])
    vals = np.concatenate(
        [np.ones(n), -a.vals * inv_sqrt[a.rows] * inv_sqrt[a.cols]]
    )
    return SparseSymMatrix(n, rows, cols, vals)


def _renorm_prop(adj: SparseSymMatrix) -> SparseSymMatrix:
    """Propagation operator of adj with self-loops: Dt^{-1/2}(A+I)Dt^{-1/2}."""
    n = adj.dim
    if np.any(adj.diagonal() != 0.0):
        raise ContractError("adjacency must have a zero diagonal")
    dtil = adj.row_sums() + 1.0
    inv_sqrt = 1.0 / np.sqrt(dtil)
    rows = np.concatenate([np.arange(n), adj.rows])
    cols = np.concatenate([np.arange(n), adj.cols])
    vals = np.concatenate(
        [inv_sqrt * inv_sqrt, adj.vals * inv_sqrt[adj.rows] * inv_sqrt[adj.cols]]
    )
    return SparseSymMatrix(n, rows, cols, vals)


def renormalized_propagation(g: Graph) -> SparseSymMatrix:
    """Self-loop propagation operator, recomputed from the adjacency."""
    return _renorm_prop(g.adjacency)


def chebyshev_scaled(l_sym: SparseSymMatrix, lambda_max: float = 2.0
                     ) -> SparseSymMatrix:
    """Rescale a normalized Laplacian to (2/lambda_max) L - I.

    With the lambda_max = 2 convention this maps the spectrum into [-1, 1],
    the domain of the Chebyshev recurrence.
    """
    if not (lambda_max > 0):
        raise ContractError(f"lambda_max must be positive, got {lambda_max}")
    scale = 2.0 / lambda_max
    vals = l_sym.vals * scale
    on = l_sym.rows == l_sym.cols
    vals = np.where(on, vals - 1.0, vals)
    present = np.zeros(l_sym.dim, dtype=bool)
    present[l_sym.rows[on]] = True
    missing = np.nonzero(~present)[0]
    rows = np.concatenate([l_sym.rows, missing])
    cols = np.concatenate([l_sym.cols, missing])
    vals = np.concatenate([vals, -np.ones(missing.size)])
    return SparseSymMatrix(l_sym.dim, rows, cols, vals)


def dump_edges(g: Graph, fh) -> None:
    """Write the adjacency as text lines ``i j w`` (debug helper)."""
    a = g.adjacency
    for i, j, w in zip(a.rows, a.cols, a.vals):
        fh.write(f"{int(i)} {int(j)} {float(w)!r}\n")
