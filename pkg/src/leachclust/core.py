"""Masked numeric primitives shared by the imputers and clusterers.

Data matrices follow a column-instance layout: ``X`` has shape ``(d, n)``,
one feature per row and one instance per column. A binary validity mask
``L`` of the same shape marks observed cells with 1; missing cells hold the
placeholder value 0 in ``X``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DimensionError

VARIANCE_FLOOR = 1e-12
SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class MaskedDataset:
    """A partially observed ``(d, n)`` matrix with its validity mask.

    ``truth`` optionally keeps the pre-mask values and ``labels`` the
    ground-truth cluster of each instance.
    """

    X: np.ndarray
    L: np.ndarray
    truth: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        L = np.asarray(self.L)
        if X.ndim != 2 or X.shape != L.shape:
            raise DimensionError(f"X {X.shape} and L {L.shape} must be equal 2-D shapes")
        if not np.isin(L, (0, 1)).all():
            raise ConfigurationError("mask entries must be 0 or 1")
        L = L.astype(np.int8)
        if np.any(X[L == 0] != 0):
            raise ConfigurationError("missing cells must hold the placeholder 0")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "L", L)
        if self.truth is not None:
            truth = np.asarray(self.truth, dtype=float)
            if truth.shape != X.shape:
                raise DimensionError("truth must match X in shape")
            if np.any(truth[L == 1] != X[L == 1]):
                raise ConfigurationError("X disagrees with truth on a valid cell")
            object.__setattr__(self, "truth", truth)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=int)
            if labels.shape != (X.shape[1],):
                raise DimensionError("labels must have one entry per instance")
            object.__setattr__(self, "labels", labels)

    @classmethod
    def complete(cls, X, labels=None):
        """Wrap a fully observed matrix."""
        X = np.asarray(X, dtype=float)
        return cls(X, np.ones(X.shape, dtype=np.int8), truth=X.copy(), labels=labels)

    @classmethod
    def from_nan(cls, X, labels=None):
        """Build a dataset from a matrix that marks missing cells with NaN."""
        X = np.array(X, dtype=float)
        L = (~np.isnan(X)).astype(np.int8)
        X[L == 0] = 0.0
        return cls(X, L, labels=labels)

    @property
    def d(self):
        return self.X.shape[0]

    @property
    def n(self):
        return self.X.shape[1]

    @property
    def missing(self):
        """Boolean array, True on missing cells."""
        return self.L == 0


@dataclass
class DistributionParams:
    """Per-feature masked means ``m``, valid counts ``delta`` and pooled variance."""

    m: np.ndarray
    delta: np.ndarray
    sigma2: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Basis:
    P: np.ndarray

    @property
    def r(self):
        return self.P.shape[1]


def masked_hadamard(x, li, lj):
    """Restrict ``x`` to the coordinates observed in both ``li`` and ``lj``."""
    x, li, lj = np.asarray(x, dtype=float), np.asarray(li), np.asarray(lj)
    if not (x.shape == li.shape == lj.shape) or x.ndim != 1:
        raise DimensionError(f"length mismatch: {x.shape}, {li.shape}, {lj.shape}")
    return x * li * lj


def validity_from_zeros(X):
    """Mask that treats every zero cell as missing."""
    return (np.asarray(X) != 0).astype(np.int8)


def masked_mean_and_counts(ds: MaskedDataset) -> DistributionParams:
    """Average each feature row over its valid instances.

    Rows without a single valid entry get mean 0 and are listed under the
    ``"empty_rows"`` diagnostic.
    """
    delta = ds.L.sum(axis=1).astype(int)
    sums = (ds.X * ds.L).sum(axis=1)
    m = np.zeros(ds.d)
    nz = delta > 0
    m[nz] = sums[nz] / delta[nz]
    diagnostics = {}
    if not nz.all():
        diagnostics["empty_rows"] = np.flatnonzero(~nz).tolist()
    return DistributionParams(m=m, delta=delta, diagnostics=diagnostics)


def pooled_variance(ds: MaskedDataset, m) -> float:
    """Scalar variance of all valid cells around their row means."""
    total = int(ds.L.sum())
    if total == 0:
        raise ConfigurationError("no valid cells to estimate a variance from")
    dev = (ds.X - np.asarray(m)[:, None]) * ds.L
    return max(float(np.sum(dev * dev)) / total, VARIANCE_FLOOR)


def fit_params(ds: MaskedDataset) -> DistributionParams:
    """Masked means, counts and pooled variance in one call."""
    params = masked_mean_and_counts(ds)
    params.sigma2 = pooled_variance(ds, params.m)
    return params


def masked_sq_distance(x, l, m):
    """Squared distance between ``x`` and ``m`` over the coordinates where ``l`` is 1."""
    diff = (np.asarray(x, dtype=float) - np.asarray(m) * l) * l
    return float(diff @ diff)


def gaussian_density(x, l, params: DistributionParams) -> float:
    """Isotropic Gaussian density of an instance over its observed coordinates.

    The normalization is the one-dimensional ``1 / (sqrt(2 pi) sigma)`` while
    the exponent sums over all observed coordinates.
    """
    sigma = math.sqrt(params.sigma2)
    dist = masked_sq_distance(x, l, params.m)
    return math.exp(-dist / (2.0 * params.sigma2)) / (SQRT_2PI * sigma)


def log_gaussian_density(x, l, params: DistributionParams) -> float:
    """``log(gaussian_density(...))`` without underflow for distant instances."""
    dist = masked_sq_distance(x, l, params.m)
    return -dist / (2.0 * params.sigma2) - math.log(SQRT_2PI * math.sqrt(params.sigma2))


def tau(x: float) -> float:
    return abs(x) if x != 0 else 0.0


def alignment_radius2(sigma2_tilde, log_g_target):
    """Squared half-distance between the two alignment roots.

    Takes the log of the target density so that targets far below the
    smallest positive double still give finite roots.
    """
    log_term = math.log(SQRT_2PI) + 0.5 * math.log(sigma2_tilde) + log_g_target
    return 2.0 * sigma2_tilde * tau(log_term)


def solve_alignment_quadratic(m_tilde, sigma2_tilde, g_target):
    """Roots of ``(v - m)^2 = 2 s2 tau(log(sqrt(2 pi) s g))``, low root first."""
    if g_target <= 0:
        raise ConfigurationError("target density must be positive")
    half = math.sqrt(alignment_radius2(sigma2_tilde, math.log(g_target)))
    return m_tilde - half, m_tilde + half


def top_r_basis(X, r, seed=0, tol=1e-10, max_sweeps=1000) -> Basis:
    """Orthonormal basis of the ``r`` leading left singular directions of ``X``.

    Power iteration on ``X X^T`` with deflation by re-orthogonalization
    against the components already found. Each component stops once its
    eigen-residual drops below ``tol`` times the leading eigenvalue, or
    after ``max_sweeps`` multiplications.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError("expected a matrix")
    d, n = X.shape
    if not 1 <= r <= min(d, n):
        raise DimensionError(f"rank {r} outside [1, {min(d, n)}]")
    C = X @ X.T
    scale = max(float(np.abs(C).max()), np.finfo(float).tiny)
    rng = np.random.default_rng(seed)
    P = np.zeros((d, r))
    for k in range(r):
        prev = P[:, :k]
        v = _orthonormalize(rng.standard_normal(d), prev)
        for _ in range(max_sweeps):
            w = _orthonormalize_raw(C @ v, prev)
            norm = np.linalg.norm(w)
            if norm <= 1e-14 * scale:
                # remaining spectrum is null; any orthonormal direction works
                break
            lam = float(v @ C @ v)
            resid = np.linalg.norm(C @ v - lam * v - prev @ (prev.T @ (C @ v)))
            v = w / norm
            if resid <= tol * scale:
                break
        P[:, k] = _orthonormalize(v, prev)
    return Basis(P)


def _orthonormalize_raw(v, Q):
    for _ in range(2):
        v = v - Q @ (Q.T @ v)
    return v


def _orthonormalize(v, Q):
    v = _orthonormalize_raw(v, Q)
    norm = np.linalg.norm(v)
    if norm == 0:
        # fall back to the first coordinate axis not spanned by Q
        for e in np.eye(len(v)):
            v = _orthonormalize_raw(e, Q)
            norm = np.linalg.norm(v)
            if norm > 1e-8:
                break
    return v / norm
