"""Partitioning backends: Lloyd k-means and self-expressive clustering.

Both take a complete ``(d, n)`` matrix with one instance per column.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import top_r_basis
from .errors import ConfigurationError, DimensionError, NumericalError


@dataclass
class Partition:
    assign: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_trace: list = field(default_factory=list)
    iterations: int = 0

    @property
    def c(self):
        return self.centroids.shape[1]


@dataclass
class CoefficientMatrix:
    Z: np.ndarray
    gamma: float
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _as_complete(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError("expected a (d, n) matrix")
    if not np.isfinite(X).all():
        raise ConfigurationError("clustering needs a complete, finite matrix")
    return X


def _sq_dist(X, C):
    """(n, c) squared distances between the columns of X and of C."""
    return np.sum((X[:, :, None] - C[:, None, :]) ** 2, axis=0)


def _centroids(X, assign, c):
    C = np.zeros((X.shape[0], c))
    for j in range(c):
        C[:, j] = X[:, assign == j].mean(axis=1)
    return C


def kmeans(X, c, seed=0, max_iter=300, tol=1e-7, n_init=10) -> Partition:
    """Lloyd's algorithm from ``c`` distinct random instances.

    A cluster left empty after an assignment step takes over the instance
    farthest from its current centroid. Iteration stops once the inertia
    changes by at most ``tol`` relative to its previous value. ``n_init``
    seeded restarts are run and the lowest final inertia wins (first one
    on ties).
    """
    X = _as_complete(X)
    n = X.shape[1]
    if not 1 <= c <= n:
        raise ConfigurationError(f"cluster count {c} must lie in [1, {n}]")
    if n_init < 1:
        raise ConfigurationError("n_init must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        start = np.sort(rng.choice(n, size=c, replace=False))
        part = _lloyd(X, X[:, start].copy(), max_iter, tol)
        if best is None or part.inertia < best.inertia:
            best = part
        if best.inertia == 0.0:
            break
    return best


def _lloyd(X, C, max_iter, tol):
    n, c = X.shape[1], C.shape[1]
    trace = []
    it = 0
    assign = np.zeros(n, dtype=int)
    for it in range(1, max_iter + 1):
        D = _sq_dist(X, C)
        assign = np.argmin(D, axis=1)
        own = D[np.arange(n), assign]
        for j in range(c):
            if not np.any(assign == j):
                # only steal from clusters that keep at least one member
                sizes = np.bincount(assign, minlength=c)
                donors = np.flatnonzero(sizes[assign] > 1)
                far = donors[np.argmax(own[donors])]
                assign[far] = j
                own[far] = 0.0
        C = _centroids(X, assign, c)
        inertia = float(np.sum((X - C[:, assign]) ** 2))
        trace.append(inertia)
        if len(trace) > 1 and trace[-2] - inertia <= tol * trace[-2]:
            break
        if inertia == 0.0:
            break
    return Partition(assign, C, trace[-1], trace, it)


def simplex_project(v):
    """Euclidean projection of ``v`` onto ``{z : sum(z) = 1, 0 <= z <= 1}``."""
    v = np.asarray(v, dtype=float)
    return _project_columns(v[:, None])[:, 0]


def _project_columns(V):
    """Project every column of ``V`` onto the probability simplex (sort-based)."""
    n = V.shape[0]
    U = -np.sort(-V, axis=0)
    css = np.cumsum(U, axis=0) - 1.0
    ks = np.arange(1, n + 1)[:, None]
    cond = U - css / ks > 0
    rho = n - 1 - np.argmax(cond[::-1], axis=0)
    theta = css[rho, np.arange(V.shape[1])] / (rho + 1)
    return np.maximum(V - theta, 0.0)


def sec_objective(X, Z, gamma):
    R = X - X @ Z
    return 0.5 * float(np.sum(R * R)) + gamma * float(np.sum(Z * Z))


def solve_sec(X, gamma=0.1, max_iter=500, tol=1e-6, zero_diagonal=False) -> CoefficientMatrix:
    """Self-expressive coefficients by projected gradient descent.

    Minimizes ``0.5 ||X - X Z||^2 + gamma ||Z||_F^2`` with every column of
    ``Z`` on the probability simplex, starting from uniform columns. The
    step size shrinks from ``1.5 / L`` toward ``1 / L`` (``L`` the gradient
    Lipschitz constant), which keeps every step a descent step. Stops on a
    relative objective change of at most ``tol``.
    """
    X = _as_complete(X)
    n = X.shape[1]
    if not gamma > 0:
        raise ConfigurationError("gamma must be positive")
    if zero_diagonal and n < 2:
        raise ConfigurationError("zero diagonal needs at least two instances")
    with np.errstate(over="ignore", invalid="ignore"):
        G = X.T @ X
    if not np.isfinite(G).all():
        raise NumericalError("Gram matrix overflowed", [])
    lip = float(np.linalg.eigvalsh(G)[-1]) + 2.0 * gamma
    if zero_diagonal:
        Z = (np.ones((n, n)) - np.eye(n)) / (n - 1)
    else:
        Z = np.full((n, n), 1.0 / n)
    trace = [sec_objective(X, Z, gamma)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        step = (1.0 + 1.0 / (it + 1)) / lip
        grad = G @ Z - G + 2.0 * gamma * Z
        Z = _project(Z - step * grad, zero_diagonal)
        obj = sec_objective(X, Z, gamma)
        if not np.isfinite(obj):
            raise NumericalError("self-expressive objective is not finite", trace + [obj])
        trace.append(obj)
        if abs(trace[-2] - obj) <= tol * max(abs(trace[-2]), np.finfo(float).tiny):
            converged = True
            break
    return CoefficientMatrix(Z, gamma, trace, it, converged)


def _project(V, zero_diagonal):
    if not zero_diagonal:
        return _project_columns(V)
    n = V.shape[0]
    off = ~np.eye(n, dtype=bool)
    # drop the diagonal, project the remaining n - 1 entries of each column
    packed = V.T[off].reshape(n, n - 1).T
    Z = np.zeros_like(V)
    Z.T[off] = _project_columns(packed).T.ravel()
    return Z


def spectral_embedding(W, c, seed=0):
    """Leading ``c`` eigenvectors of the normalized affinity, as a (c, n) matrix."""
    deg = W.sum(axis=1)
    inv = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    N = inv[:, None] * W * inv[None, :]
    # shifting into [0, 1] makes the largest algebraic eigenvalues dominate
    shifted = 0.5 * (np.eye(len(W)) + N)
    return top_r_basis(shifted, c, seed=seed).P.T


def sec_cluster(X, c, gamma=0.1, seed=0, max_iter=500, tol=1e-6, zero_diagonal=False) -> Partition:
    """Self-expressive clustering.

    Symmetrizes the coefficient matrix into an affinity, embeds the
    instances with its leading eigenvectors and runs k-means on the
    embedding. Centroids and inertia are reported in the input space.
    """
    X = _as_complete(X)
    n = X.shape[1]
    if not 1 <= c <= n:
        raise ConfigurationError(f"cluster count {c} must lie in [1, {n}]")
    coef = solve_sec(X, gamma, max_iter=max_iter, tol=tol, zero_diagonal=zero_diagonal)
    W = 0.5 * (coef.Z + coef.Z.T)
    emb = spectral_embedding(W, c, seed=seed)
    part = kmeans(emb, c, seed=seed)
    C = _centroids(X, part.assign, c)
    inertia = float(np.sum((X - C[:, part.assign]) ** 2))
    return Partition(part.assign, C, inertia, coef.objective_trace, coef.iterations)


def cluster(X, c, backend="kmeans", seed=0, gamma=0.1, zero_diagonal=False) -> Partition:
    if backend == "kmeans":
        return kmeans(X, c, seed=seed)
    if backend == "sec":
        return sec_cluster(X, c, gamma=gamma, seed=seed, zero_diagonal=zero_diagonal)
    raise ConfigurationError(f"unknown clustering backend {backend!r}")
