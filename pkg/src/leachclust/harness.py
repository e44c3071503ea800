"""Benchmark protocol: data sources, MCAR masking, method matrix, reports."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .clustering import cluster
from .core import MaskedDataset, validity_from_zeros
from .errors import ConfigurationError, DimensionError, IngestionError
from .imputation import ImputerConfig, impute
from .metrics import MetricsRecord, nmi, pairwise_f, rand_index, rmse_missing

log = logging.getLogger(__name__)

MAX_MASK_RETRIES = 100

# (clusters, dimensionality, instances) of the benchmark collections the
# synthetic presets imitate
TABLE_PRESETS = {
    "birds": (20, 50, 3625),
    "firewall": (3, 11, 3000),
    "flower": (5, 50, 4323),
    "monkey": (10, 50, 1098),
}


# ---------------------------------------------------------------- data sources


@dataclass
class SyntheticSpec:
    c: int = 3
    d: int = 10
    n_per_cluster: int = 100
    separation: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if min(self.c, self.d, self.n_per_cluster) < 1:
            raise ConfigurationError("synthetic counts must be >= 1")
        if not self.separation > 0:
            raise ConfigurationError("separation must be positive")

    @classmethod
    def preset(cls, name, separation=4.0, seed=0):
        try:
            c, d, n = TABLE_PRESETS[name]
        except KeyError:
            raise ConfigurationError(f"unknown preset {name!r}") from None
        return cls(c=c, d=d, n_per_cluster=n // c, separation=separation, seed=seed)


@dataclass
class CsvSource:
    """Where and how to read a numeric CSV.

    ``features`` and ``label`` are 0-based column indices, or header names
    when ``header`` is set. ``features=None`` takes every non-label column.
    """

    path: Union[str, Path]
    features: Optional[List[Union[int, str]]] = None
    label: Optional[Union[int, str]] = None
    header: bool = False
    zero_as_missing: bool = False


def gen_synthetic(spec: SyntheticSpec) -> MaskedDataset:
    """Isotropic unit-variance Gaussian clusters, fully observed.

    Centroids are drawn uniformly from the box ``[0, separation]^d`` and,
    if any pair ends up closer than ``spec.separation``, scaled away from
    the origin until none is. Features therefore sit on a nonnegative scale
    rather than around 0. Instances are stored cluster by cluster.
    """
    rng = np.random.default_rng(spec.seed)
    centers = rng.uniform(0.0, spec.separation, size=(spec.d, spec.c))
    if spec.c > 1:
        closest = min(
            np.linalg.norm(centers[:, a] - centers[:, b])
            for a in range(spec.c)
            for b in range(a + 1, spec.c)
        )
        if closest < spec.separation:
            centers *= spec.separation / max(closest, 1e-12)
    blocks = [
        centers[:, [k]] + rng.standard_normal((spec.d, spec.n_per_cluster)) for k in range(spec.c)
    ]
    labels = np.repeat(np.arange(spec.c), spec.n_per_cluster)
    return MaskedDataset.complete(np.concatenate(blocks, axis=1), labels=labels)


def _resolve_column(ref, header, width):
    if isinstance(ref, str) and not ref.lstrip("-").isdigit():
        if header is None:
            raise ConfigurationError(f"column name {ref!r} needs a header row")
        if ref not in header:
            raise ConfigurationError(f"no column named {ref!r}")
        return header.index(ref)
    idx = int(ref)
    if not 0 <= idx < width:
        raise ConfigurationError(f"column index {idx} out of range")
    return idx


def load_csv(path, schema: Optional[CsvSource] = None, **kwargs) -> MaskedDataset:
    """Read instances as rows; empty fields are missing cells.

    Labels may be any strings and are numbered in sorted order.
    """
    schema = schema or CsvSource(path, **kwargs)
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = None
    first = 1
    if schema.header:
        if not rows:
            raise IngestionError(f"{path} has no header row")
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]
        first = 2
    rows = [r for r in rows if any(f.strip() for f in r)]
    if not rows:
        raise IngestionError(f"{path} has no data rows")
    width = len(header) if header is not None else len(rows[0])
    for k, r in enumerate(rows):
        if len(r) != width:
            raise IngestionError(f"expected {width} fields, found {len(r)}", first + k, len(r))
    label_col = None if schema.label is None else _resolve_column(schema.label, header, width)
    if schema.features is None:
        feat_cols = [j for j in range(width) if j != label_col]
    else:
        feat_cols = [_resolve_column(f, header, width) for f in schema.features]
    X = np.zeros((len(feat_cols), len(rows)))
    L = np.ones(X.shape, dtype=np.int8)
    for i, r in enumerate(rows):
        for q, j in enumerate(feat_cols):
            text = r[j].strip()
            if not text:
                L[q, i] = 0
                continue
            try:
                X[q, i] = float(text)
            except ValueError:
                raise IngestionError(f"cannot parse {text!r} as a number", first + i, j + 1) from None
            if not math.isfinite(X[q, i]):
                raise IngestionError(f"non-finite value {text!r}", first + i, j + 1)
    if schema.zero_as_missing:
        L = L * validity_from_zeros(X)
    labels = None
    if label_col is not None:
        raw = [r[label_col].strip() for r in rows]
        labels = _encode_labels(raw)
    truth = X.copy() if L.all() else None
    return MaskedDataset(X, L, truth=truth, labels=labels)


def _encode_labels(raw):
    try:
        keys = sorted(set(raw), key=float)
    except ValueError:
        keys = sorted(set(raw))
    index = {k: i for i, k in enumerate(keys)}
    return np.array([index[v] for v in raw], dtype=int)


def write_csv(path, X, labels=None, L=None):
    """Write a (d, n) matrix with one instance per line; masked cells stay empty."""
    X = np.asarray(X)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for i in range(X.shape[1]):
            row = ["" if L is not None and L[q, i] == 0 else repr(float(X[q, i])) for q in range(X.shape[0])]
            if labels is not None:
                row.append(str(int(labels[i])))
            w.writerow(row)


# ---------------------------------------------------------------- masking


def derive_seed(master, *indices):
    """Fixed 64-bit mix of a master seed with repeat/fraction indices."""
    ss = np.random.SeedSequence([int(master), *[int(i) for i in indices]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def apply_mcar(ds: MaskedDataset, fraction, seed) -> MaskedDataset:
    """Hide exactly ``round(fraction * d * n)`` cells chosen uniformly.

    Draws that would empty a whole feature row or instance column are
    redrawn with a fresh sub-seed; after 100 failures the last draw is kept
    and ``diagnostics["degenerate_mask"]`` is set.
    """
    if not 0 <= fraction < 1:
        raise ConfigurationError("fraction must lie in [0, 1)")
    if not ds.L.all():
        raise ConfigurationError("MCAR masking expects a fully observed dataset")
    d, n = ds.X.shape
    count = int(math.floor(fraction * d * n + 0.5))
    truth = ds.X.copy() if ds.truth is None else ds.truth
    if count == 0:
        return MaskedDataset(ds.X.copy(), ds.L.copy(), truth=truth, labels=ds.labels)
    diagnostics = {}
    for attempt in range(MAX_MASK_RETRIES + 1):
        rng = np.random.default_rng(derive_seed(seed, attempt))
        flat = rng.choice(d * n, size=count, replace=False)
        L = np.ones(d * n, dtype=np.int8)
        L[flat] = 0
        L = L.reshape(d, n)
        if L.any(axis=1).all() and L.any(axis=0).all():
            break
    else:
        diagnostics["degenerate_mask"] = f"kept a mask with an empty row or column after {MAX_MASK_RETRIES} retries"
        log.warning(diagnostics["degenerate_mask"])
    X = np.where(L == 1, ds.X, 0.0)
    return MaskedDataset(X, L, truth=truth, labels=ds.labels, diagnostics=diagnostics)


# ---------------------------------------------------------------- methods


@dataclass
class MethodSpec:
    """An imputer followed by a clusterer. ``imputer=None`` clusters the raw
    matrix with missing cells left at the placeholder 0."""

    name: str
    imputer: Optional[ImputerConfig]
    backend: str = "kmeans"
    gamma: float = 0.1


ROSTER = ("baseline", "nnc", "pcc", "sec", "ivpc1", "ivpc2", "bac1", "bac2")


def make_method(name, gamma=0.1, **imputer_kwargs) -> MethodSpec:
    """Build one of the roster methods; suffix 1 = self-expressive, 2 = k-means."""
    table = {
        "baseline": (None, "kmeans"),
        "nnc": ("nn", "kmeans"),
        "pcc": ("pc", "kmeans"),
        "sec": (None, "sec"),
        "ivpc1": ("ivp", "sec"),
        "ivpc2": ("ivp", "kmeans"),
        "bac1": ("bayes", "sec"),
        "bac2": ("bayes", "kmeans"),
    }
    if name not in table:
        raise ConfigurationError(f"unknown method {name!r}; choose from {', '.join(ROSTER)}")
    method, backend = table[name]
    imputer = None
    if method is not None:
        kwargs = dict(imputer_kwargs)
        if method != "bayes":
            kwargs.pop("recycle_partitions", None)
        imputer = ImputerConfig(method=method, **kwargs)
    return MethodSpec(name, imputer, backend, gamma)


# ---------------------------------------------------------------- experiments


@dataclass
class ExperimentConfig:
    dataset: Union[SyntheticSpec, CsvSource, MaskedDataset]
    methods: Sequence[MethodSpec]
    c: int
    missing_fraction: float = 0.3
    repeats: int = 5
    seed: int = 0
    output_dir: Optional[Union[str, Path]] = None
    timing: str = "wall"

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigurationError("repeats must be >= 1")
        if not 0 <= self.missing_fraction < 1:
            raise ConfigurationError("missing_fraction must lie in [0, 1)")
        if self.c < 1:
            raise ConfigurationError("cluster count must be >= 1")
        if self.timing not in ("wall", "off"):
            raise ConfigurationError("timing must be 'wall' or 'off'")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ConfigurationError("method names must be unique")


@dataclass
class ReportRow:
    method: str
    repeat: int
    fraction: float
    metrics: Optional[MetricsRecord]
    error: Optional[str] = None


@dataclass
class Aggregate:
    method: str
    fraction: float
    count: int
    means: dict
    stds: dict


METRIC_FIELDS = ("nmi", "f_score", "rand_index", "rmse_missing", "runtime_seconds")


@dataclass
class ExperimentReport:
    rows: List[ReportRow] = field(default_factory=list)
    aggregates: List[Aggregate] = field(default_factory=list)

    @property
    def failed(self):
        return [r for r in self.rows if r.error is not None]

    def aggregate(self, method, fraction):
        for a in self.aggregates:
            if a.method == method and a.fraction == fraction:
                return a
        raise KeyError((method, fraction))


def load_dataset(source) -> MaskedDataset:
    if isinstance(source, MaskedDataset):
        return source
    if isinstance(source, SyntheticSpec):
        return gen_synthetic(source)
    if isinstance(source, CsvSource):
        return load_csv(source.path, source)
    raise ConfigurationError(f"unsupported dataset descriptor {type(source).__name__}")


def run_method(method: MethodSpec, ds: MaskedDataset, c, seed, timing="wall"):
    """Impute, cluster and score one method on one masked dataset."""
    t0 = time.perf_counter()
    imputer = method.imputer
    if imputer is None:
        filled = ds.X.copy()
    else:
        imputer = replace(imputer, seed=seed)
        filled = impute(ds, imputer).filled
    part = cluster(filled, c, backend=method.backend, seed=seed, gamma=method.gamma)
    if imputer is not None and imputer.method == "bayes" and imputer.recycle_partitions:
        filled = impute(ds, imputer, partition=part).filled
        part = cluster(filled, c, backend=method.backend, seed=seed, gamma=method.gamma)
    elapsed = time.perf_counter() - t0 if timing == "wall" else 0.0
    rmse = None
    if ds.truth is not None and ds.missing.any():
        rmse = rmse_missing(ds.truth, filled, ds.L)
    return MetricsRecord(
        nmi=nmi(ds.labels, part.assign),
        f_score=pairwise_f(ds.labels, part.assign),
        rand_index=rand_index(ds.labels, part.assign),
        rmse_missing=rmse,
        runtime_seconds=elapsed,
    )


def _aggregate(rows, methods, fractions):
    out = []
    for frac in fractions:
        for name in methods:
            ok = [r.metrics for r in rows if r.method == name and r.fraction == frac and r.error is None]
            means, stds = {}, {}
            for key in METRIC_FIELDS:
                vals = [getattr(m, key) for m in ok if getattr(m, key) is not None]
                means[key] = float(np.mean(vals)) if vals else None
                stds[key] = float(np.std(vals)) if vals else None
            out.append(Aggregate(name, frac, len(ok), means, stds))
    return out


def run_experiment(cfg: ExperimentConfig, fraction_index=0, base=None) -> ExperimentReport:
    """Run every method on ``cfg.repeats`` independently masked copies.

    Each repeat masks with a seed derived from ``(cfg.seed, repeat,
    fraction_index)`` and hands the same seed to every method. A method
    that raises is logged as a failed row; the run carries on.
    """
    base = load_dataset(cfg.dataset) if base is None else base
    if base.labels is None:
        raise ConfigurationError("the dataset needs ground-truth labels for scoring")
    if cfg.c > base.n:
        raise ConfigurationError(f"cluster count {cfg.c} exceeds {base.n} instances")
    frac = float(cfg.missing_fraction)
    rows = []
    for rep in range(cfg.repeats):
        sub = derive_seed(cfg.seed, rep, fraction_index)
        ds = apply_mcar(base, frac, sub) if frac > 0 or base.L.all() else base
        for method in cfg.methods:
            try:
                rec = run_method(method, ds, cfg.c, sub, cfg.timing)
                rows.append(ReportRow(method.name, rep, frac, rec))
            except Exception as exc:  # noqa: BLE001 - recorded per row by design
                log.warning("%s failed on repeat %d: %s", method.name, rep, exc)
                rows.append(ReportRow(method.name, rep, frac, None, f"{type(exc).__name__}: {exc}"))
    rows.sort(key=lambda r: (_order(cfg, r.method), r.repeat, r.fraction))
    names = [m.name for m in cfg.methods]
    return ExperimentReport(rows, _aggregate(rows, names, [frac]))


def _order(cfg, name):
    return [m.name for m in cfg.methods].index(name)


def sweep_missing(cfg: ExperimentConfig, fractions) -> ExperimentReport:
    """:func:`run_experiment` once per fraction, merged into one report."""
    fractions = [float(f) for f in fractions]
    for f in fractions:
        if not 0 <= f < 1:
            raise ConfigurationError(f"fraction {f} outside [0, 1)")
    if not fractions:
        return ExperimentReport()
    base = load_dataset(cfg.dataset)
    merged = ExperimentReport()
    for fi, frac in enumerate(fractions):
        part = run_experiment(replace(cfg, missing_fraction=frac), fraction_index=fi, base=base)
        merged.rows.extend(part.rows)
        merged.aggregates.extend(part.aggregates)
    return merged


# ---------------------------------------------------------------- persistence

ROW_COLUMNS = ("method", "repeat", "fraction", "nmi", "f", "ri", "rmse", "seconds", "error")
AGG_METRICS = (("nmi", "nmi"), ("f", "f_score"), ("ri", "rand_index"), ("rmse", "rmse_missing"), ("seconds", "runtime_seconds"))
AGG_COLUMNS = ("method", "fraction", "count") + tuple(
    f"{short}_{stat}" for short, _ in AGG_METRICS for stat in ("mean", "std")
)


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def write_report(report: ExperimentReport, output_dir, plots=True):
    """Write rows.csv, aggregates.csv and one SVG chart per metric.

    Returns the list of written paths.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows_path = out / "rows.csv"
    with rows_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROW_COLUMNS)
        for r in report.rows:
            m = r.metrics
            vals = [None] * 5 if m is None else [m.nmi, m.f_score, m.rand_index, m.rmse_missing, m.runtime_seconds]
            w.writerow([r.method, r.repeat, _fmt(r.fraction), *map(_fmt, vals), r.error or ""])
    agg_path = out / "aggregates.csv"
    with agg_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGG_COLUMNS)
        for a in report.aggregates:
            cells = [a.method, _fmt(a.fraction), a.count]
            for _, key in AGG_METRICS:
                cells += [_fmt(a.means[key]), _fmt(a.stds[key])]
            w.writerow(cells)
    written = [rows_path, agg_path]
    if plots and report.aggregates:
        from .plotting import plot_report

        written += plot_report(report, out)
    return written


def format_table(report: ExperimentReport) -> str:
    """Plain-text aggregate table for terminal output."""
    head = f"{'method':<10} {'fraction':>8} {'nmi':>8} {'f':>8} {'ri':>8} {'rmse':>10} {'seconds':>9}"
    lines = [head, "-" * len(head)]
    for a in report.aggregates:
        m = a.means

        def cell(key, width, prec):
            return f"{m[key]:>{width}.{prec}f}" if m[key] is not None else " " * (width - 1) + "-"

        lines.append(
            f"{a.method:<10} {a.fraction:>8.2f} {cell('nmi', 8, 4)} {cell('f_score', 8, 4)} "
            f"{cell('rand_index', 8, 4)} {cell('rmse_missing', 10, 4)} {cell('runtime_seconds', 9, 3)}"
        )
    return "\n".join(lines)
