"""Missing-value imputers sharing one contract.

Every imputer maps a :class:`~leachclust.core.MaskedDataset` to an
:class:`ImputationResult` whose ``filled`` matrix equals the input on every
valid cell, bit for bit. Iterative imputers start from the masked row
means and stop on ``tol`` or ``max_iter``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    VARIANCE_FLOOR,
    DistributionParams,
    MaskedDataset,
    alignment_radius2,
    log_gaussian_density,
    masked_mean_and_counts,
    pooled_variance,
    top_r_basis,
)
from .errors import ConfigurationError, DimensionError

METHODS = ("mean", "nn", "pc", "ivp", "bayes")
SIMILARITIES = ("euclidean", "cosine")


@dataclass
class ImputerConfig:
    method: str = "mean"
    max_iter: int = 50
    tol: float = 1e-6
    k_neighbors: int = 5
    nn_samples: int = 3
    rank: Optional[int] = None  # None -> max(1, min(d, n) // 2)
    sample_cap: Optional[int] = None  # None -> n
    seed: int = 0
    recycle_partitions: bool = False
    similarity: str = "euclidean"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown imputation method {self.method!r}")
        if self.similarity not in SIMILARITIES:
            raise ConfigurationError(f"unknown similarity {self.similarity!r}")
        for name in ("max_iter", "k_neighbors", "nn_samples", "rank", "sample_cap"):
            value = getattr(self, name)
            if value is not None and int(value) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {value}")
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")

    def resolved_rank(self, d, n):
        return self.rank if self.rank is not None else max(1, min(d, n) // 2)


@dataclass
class ImputationResult:
    filled: np.ndarray
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    params: Optional[DistributionParams] = None


def _restore_valid(ds, filled):
    return np.where(ds.L == 1, ds.X, filled)


def _relative_change(new, old):
    if new.size == 0:
        return 0.0
    return float(np.max(np.abs(new - old))) / max(1.0, float(np.max(np.abs(old))))


def _check_nonempty(ds):
    if ds.d == 0 or ds.n == 0:
        raise DimensionError("empty dataset")


def impute_mean(ds: MaskedDataset) -> ImputationResult:
    _check_nonempty(ds)
    params = masked_mean_and_counts(ds)
    filled = _restore_valid(ds, np.broadcast_to(params.m[:, None], ds.X.shape))
    return ImputationResult(
        filled=filled,
        iterations=1,
        converged=True,
        diagnostics=dict(params.diagnostics),
        params=params,
    )


def impute_nn(ds: MaskedDataset, cfg: ImputerConfig) -> ImputationResult:
    """Fill each missing cell with the average of a few random other instances.

    ``cfg.nn_samples`` distinct instances are drawn per incomplete instance;
    only those observed at a cell vote for it, and a cell nobody observes
    falls back to the feature mean.
    """
    _check_nonempty(ds)
    n = ds.n
    if n < cfg.nn_samples + 1:
        raise ConfigurationError(f"need at least {cfg.nn_samples + 1} instances, got {n}")
    rng = np.random.default_rng(cfg.seed)
    means = masked_mean_and_counts(ds)
    filled = ds.X.copy()
    fallbacks = 0
    for i in np.flatnonzero(ds.missing.any(axis=0)):
        others = np.delete(np.arange(n), i)
        nb = rng.choice(others, size=cfg.nn_samples, replace=False)
        vals = ds.X[:, nb]
        ok = ds.L[:, nb]
        counts = ok.sum(axis=1)
        for q in np.flatnonzero(ds.missing[:, i]):
            if counts[q] > 0:
                filled[q, i] = vals[q][ok[q] == 1].mean()
            else:
                filled[q, i] = means.m[q]
                fallbacks += 1
    diagnostics = dict(means.diagnostics)
    if fallbacks:
        diagnostics["mean_fallbacks"] = fallbacks
    return ImputationResult(_restore_valid(ds, filled), 1, True, [], diagnostics, means)


def impute_pc(ds: MaskedDataset, cfg: ImputerConfig) -> ImputationResult:
    """Iterative low-rank reconstruction of the missing cells.

    Each pass centers the current fill, projects it onto the top ``rank``
    principal directions and overwrites only the missing cells with the
    reconstruction. Stops when the largest absolute change on a missing cell
    is at most ``cfg.tol``.
    """
    _check_nonempty(ds)
    r = cfg.resolved_rank(ds.d, ds.n)
    if not 1 <= r <= min(ds.d, ds.n):
        raise ConfigurationError(f"rank {r} outside [1, {min(ds.d, ds.n)}]")
    start = impute_mean(ds)
    filled = start.filled.copy()
    miss = ds.missing
    trace = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        mu = filled.mean(axis=1, keepdims=True)
        centered = filled - mu
        P = top_r_basis(centered, r, seed=cfg.seed).P
        recon = P @ (P.T @ centered) + mu
        trace.append(float(np.sum((centered - (recon - mu)) ** 2)))
        change = float(np.max(np.abs(recon[miss] - filled[miss]))) if miss.any() else 0.0
        filled[miss] = recon[miss]
        if change <= cfg.tol:
            converged = True
            break
    return ImputationResult(
        _restore_valid(ds, filled), it, converged, trace, dict(start.diagnostics), start.params
    )


def _masked_pair_terms(ds, i, neighbor_ids, similarity):
    """Per-neighbor kernel values between the masked views of ``i`` and each neighbor."""
    J = np.asarray(neighbor_ids, dtype=int)
    common = ds.L[:, [i]] * ds.L[:, J]
    xi = ds.X[:, [i]] * common
    xj = ds.X[:, J] * common
    overlap = common.sum(axis=0) > 0
    if similarity == "euclidean":
        h = np.sum((xi - xj) ** 2, axis=0)
    else:
        ni = np.linalg.norm(xi, axis=0)
        nj = np.linalg.norm(xj, axis=0)
        denom = ni * nj
        h = np.zeros(len(J))
        ok = denom > 0
        h[ok] = 1.0 - np.sum(xi[:, ok] * xj[:, ok], axis=0) / denom[ok]
    return h, overlap


def ivp_volume(ds: MaskedDataset, i, neighbor_ids, cfg: ImputerConfig, diagnostics=None):
    """Information volume of instance ``i``: summed kernel between masked views.

    The kernel is the squared Euclidean distance, or ``1 - cosine`` when
    ``cfg.similarity == "cosine"``. Neighbors sharing no observed
    coordinate with ``i`` contribute 0 and are counted under
    ``diagnostics["empty_overlap"]``.
    """
    if cfg.k_neighbors > ds.n - 1:
        raise ConfigurationError(f"k_neighbors={cfg.k_neighbors} exceeds n - 1 = {ds.n - 1}")
    h, overlap = _masked_pair_terms(ds, i, neighbor_ids, cfg.similarity)
    if diagnostics is not None and not overlap.all():
        diagnostics["empty_overlap"] = diagnostics.get("empty_overlap", 0) + int((~overlap).sum())
    return float(h.sum())


def solve_ivp_coordinate(neighbor_values, budget):
    """Roots of ``k v^2 - 2 v sum(x) + sum(x^2) - budget = 0``.

    Returns ``(low, high, real)``; when the discriminant is negative both
    roots collapse to the vertex ``mean(x)`` and ``real`` is False.
    """
    x = np.asarray(neighbor_values, dtype=float)
    k = len(x)
    s1 = float(x.sum())
    disc = s1 * s1 - k * (float(x @ x) - budget)
    if disc < 0:
        return s1 / k, s1 / k, False
    root = math.sqrt(disc)
    return (s1 - root) / k, (s1 + root) / k, True


def root_select(roots, reference):
    """The root nearer to ``reference``; ties go to the lower root."""
    lo, hi = min(roots), max(roots)
    return hi if abs(hi - reference) < abs(lo - reference) else lo


def _sq_distances(F):
    sq = np.sum(F * F, axis=0)
    D = sq[:, None] + sq[None, :] - 2.0 * (F.T @ F)
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, np.inf)
    return D


def impute_ivp(ds: MaskedDataset, cfg: ImputerConfig) -> ImputationResult:
    """Information-volume-preserving imputation.

    For each sampled incomplete instance, the k nearest neighbors in the
    current fill should keep the summed squared distance measured on the
    masked data (the information volume). The observed coordinates already
    account for part of it; the remainder is split evenly over the missing
    coordinates, each solving ``k v^2 - 2 v sum(x) + sum(x^2) - share = 0``
    with ``x`` the neighbors' values there. Updates are applied after each
    full sweep, so instance order does not matter.
    """
    _check_nonempty(ds)
    k = cfg.k_neighbors
    if k > ds.n - 1:
        raise ConfigurationError(f"k_neighbors={k} exceeds n - 1 = {ds.n - 1}")
    start = impute_mean(ds)
    filled = start.filled.copy()
    miss = ds.missing
    incomplete = np.flatnonzero(miss.any(axis=0))
    cap = cfg.sample_cap if cfg.sample_cap is not None else ds.n
    rng = np.random.default_rng(cfg.seed)
    diagnostics = dict(start.diagnostics)
    trace = []
    complex_roots = 0
    converged = not incomplete.size
    it = 1 if converged else 0
    while not converged and it < cfg.max_iter:
        it += 1
        if cap < incomplete.size:
            batch = np.sort(rng.choice(incomplete, size=cap, replace=False))
        else:
            batch = incomplete
        D = _sq_distances(filled)
        new = filled.copy()
        gap = 0.0
        for i in batch:
            nb = np.argsort(D[i], kind="stable")[:k]
            target = ivp_volume(ds, i, nb, cfg, diagnostics)
            gap += abs(float(D[i, nb].sum()) - target)
            qs = np.flatnonzero(miss[:, i])
            obs = ~miss[:, i]
            spent = float(np.sum((filled[obs, i][:, None] - filled[obs][:, nb]) ** 2))
            share = max(0.0, target - spent) / qs.size
            for q in qs:
                lo, hi, real = solve_ivp_coordinate(filled[q, nb], share)
                if not real:
                    complex_roots += 1
                new[q, i] = root_select((lo, hi), filled[q, i])
        trace.append(gap)
        change = _relative_change(new[miss], filled[miss])
        filled = new
        converged = change <= cfg.tol
    if complex_roots:
        diagnostics["complex_roots"] = complex_roots
    return ImputationResult(
        _restore_valid(ds, filled), it, converged, trace, diagnostics, start.params
    )


def _group_params(F, members):
    """Row means and pooled variance of a fully observed block of columns."""
    block = F[:, members]
    m = block.mean(axis=1)
    s2 = max(float(np.mean((block - m[:, None]) ** 2)), VARIANCE_FLOOR)
    return m, s2


def alignment_share(x_valid, m_valid, d_miss, sigma2_tilde, log_g_target):
    """Squared offset from the mean given to each missing coordinate.

    The whole filled instance must sit at squared distance
    ``2 s2 tau(log(sqrt(2 pi) s g))`` from the filled-data mean. The
    observed coordinates already use up part of that budget; the rest is
    split evenly over the ``d_miss`` missing coordinates, and clamped at 0
    when the observed part alone overshoots.
    """
    spent = float(np.sum((np.asarray(x_valid) - m_valid) ** 2))
    budget = alignment_radius2(sigma2_tilde, log_g_target)
    return max(0.0, budget - spent) / d_miss


def impute_bayes_align(ds: MaskedDataset, cfg: ImputerConfig, partition=None) -> ImputationResult:
    """Bayes-alignment imputation.

    Each incomplete instance gets a target log-density from the Gaussian
    fitted to the observed cells. The missing coordinates are then placed so
    the filled instance has that same density under the Gaussian refitted on
    the current fill: every missing ``q`` takes one of the two roots
    ``m_q +/- sqrt(share)`` (see :func:`alignment_share`), the one nearest
    ``m_q`` on the first pass and nearest the previous estimate afterwards.
    Parameters are refitted after every pass.

    With ``cfg.recycle_partitions`` and a ``partition`` (anything with an
    ``assign`` vector, or the vector itself), every statistic is fitted per
    cluster and each instance uses its own cluster's.
    """
    _check_nonempty(ds)
    diagnostics = {}
    if cfg.recycle_partitions and partition is not None:
        assign = np.asarray(getattr(partition, "assign", partition), dtype=int)
        if assign.shape != (ds.n,):
            raise DimensionError("partition must assign every instance")
        groups = [np.flatnonzero(assign == g) for g in np.unique(assign)]
        diagnostics["groups"] = len(groups)
    else:
        groups = [np.arange(ds.n)]

    global_params = masked_mean_and_counts(ds)
    diagnostics.update(global_params.diagnostics)
    filled = ds.X.copy()
    log_g = np.zeros(ds.n)
    group_of = np.zeros(ds.n, dtype=int)
    for gi, members in enumerate(groups):
        group_of[members] = gi
        sub = MaskedDataset(ds.X[:, members], ds.L[:, members])
        params = masked_mean_and_counts(sub)
        # rows with no valid cell inside the cluster borrow the global mean
        empty = params.delta == 0
        params.m[empty] = global_params.m[empty]
        if sub.L.sum() > 0:
            params.sigma2 = pooled_variance(sub, params.m)
        else:
            params.sigma2 = pooled_variance(ds, global_params.m)
        for i in members:
            log_g[i] = log_gaussian_density(ds.X[:, i], ds.L[:, i], params)
        block = filled[:, members]
        holes = sub.L == 0
        block[holes] = np.broadcast_to(params.m[:, None], block.shape)[holes]
        filled[:, members] = block
    filled = _restore_valid(ds, filled)

    miss = ds.missing
    incomplete = np.flatnonzero(miss.any(axis=0))
    converged = not incomplete.size
    trace = []
    it = 1 if converged else 0
    while not converged and it < cfg.max_iter:
        it += 1
        new = filled.copy()
        stats = [_group_params(filled, members) for members in groups]
        misfit = 0.0
        for i in incomplete:
            m_t, s2_t = stats[group_of[i]]
            qs = miss[:, i]
            obs = ~qs
            x = filled[:, i]
            d2 = float(np.sum((x - m_t) ** 2))
            misfit += abs(-d2 / (2 * s2_t) - 0.5 * math.log(2 * math.pi * s2_t) - log_g[i])
            half = math.sqrt(alignment_share(x[obs], m_t[obs], qs.sum(), s2_t, log_g[i]))
            for q in np.flatnonzero(qs):
                ref = m_t[q] if it == 1 else x[q]
                new[q, i] = root_select((m_t[q] - half, m_t[q] + half), ref)
        trace.append(misfit)
        change = _relative_change(new[miss], filled[miss])
        filled = new
        converged = change <= cfg.tol

    final = [_group_params(filled, members) for members in groups]
    floored = [gi for gi, (_, s2) in enumerate(final) if s2 <= VARIANCE_FLOOR]
    if floored and any(
        alignment_radius2(final[group_of[i]][1], log_g[i]) > 0
        for i in incomplete
        if group_of[i] in floored
    ):
        converged = False
        diagnostics["variance_floor"] = "filled variance collapsed to the floor"
    m_all, s2_all = _group_params(filled, np.arange(ds.n))
    snapshot = DistributionParams(
        m=m_all,
        delta=np.full(ds.d, ds.n),
        sigma2=s2_all,
        diagnostics={"log_g_target": log_g, "group_of": group_of},
    )
    return ImputationResult(
        _restore_valid(ds, filled), it, converged, trace, diagnostics, snapshot
    )


def impute(ds: MaskedDataset, cfg: ImputerConfig, partition=None) -> ImputationResult:
    """Dispatch on ``cfg.method``."""
    if cfg.method == "mean":
        return impute_mean(ds)
    if cfg.method == "nn":
        return impute_nn(ds, cfg)
    if cfg.method == "pc":
        return impute_pc(ds, cfg)
    if cfg.method == "ivp":
        return impute_ivp(ds, cfg)
    return impute_bayes_align(ds, cfg, partition)


def impute_zero(ds: MaskedDataset) -> np.ndarray:
    """The raw incomplete matrix, placeholders left at 0."""
    return ds.X.copy()
