"""Flat ``key = value`` experiment files.

Blank lines are ignored and ``#`` after whitespace (or at the start of a
line) begins a comment. Recognised keys::

    dataset             synthetic | csv | preset:<birds|firewall|flower|monkey>
    csv_path            path, relative to the config file
    csv_features        comma-separated column indices or names
    csv_label           label column index or name
    csv_header          true | false
    zero_as_missing     true | false
    synthetic_c, synthetic_d, synthetic_n_per_cluster,
    synthetic_separation, synthetic_seed
    clusters            cluster count (defaults to synthetic_c)
    missing_fraction    fraction for ``bench`` (default 0.3)
    fractions           comma list for ``sweep`` (default 0.1, ..., 0.8)
    methods             comma list from the roster (default: all eight)
    repeats, seed, output_dir, timing (wall | off)
    gamma, k_neighbors, nn_samples, rank, max_iter, tol, sample_cap,
    similarity, recycle
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError
from .harness import ROSTER, CsvSource, ExperimentConfig, SyntheticSpec, make_method

DEFAULT_FRACTIONS = tuple(round(0.1 * k, 1) for k in range(1, 9))


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _floats(text):
    return [float(t) for t in _list(text)]


KEYS = {
    "dataset": str,
    "csv_path": str,
    "csv_features": _list,
    "csv_label": str,
    "csv_header": _bool,
    "zero_as_missing": _bool,
    "synthetic_c": int,
    "synthetic_d": int,
    "synthetic_n_per_cluster": int,
    "synthetic_separation": float,
    "synthetic_seed": int,
    "clusters": int,
    "missing_fraction": float,
    "fractions": _floats,
    "methods": _list,
    "repeats": int,
    "seed": int,
    "output_dir": str,
    "timing": str,
    "gamma": float,
    "k_neighbors": int,
    "nn_samples": int,
    "rank": int,
    "max_iter": int,
    "tol": float,
    "sample_cap": int,
    "similarity": str,
    "recycle": _bool,
}

IMPUTER_KEYS = {
    "k_neighbors": "k_neighbors",
    "nn_samples": "nn_samples",
    "rank": "rank",
    "max_iter": "max_iter",
    "tol": "tol",
    "sample_cap": "sample_cap",
    "similarity": "similarity",
    "recycle": "recycle_partitions",
}


class ConfigFileError(ConfigurationError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass
class BenchSetup:
    experiment: ExperimentConfig
    fractions: list


def parse_config_text(text):
    """Parse the key-value lines into a dict of typed values plus line numbers."""
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = re.split(r"(?:^|\s)#", raw, maxsplit=1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"expected 'key = value', got {line!r}", lineno)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in KEYS:
            raise ConfigFileError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigFileError(f"duplicate key {key!r}", lineno)
        try:
            values[key] = KEYS[key](value)
        except ValueError as exc:
            raise ConfigFileError(f"bad value for {key}: {exc}", lineno) from None
        lines[key] = lineno
    return values, lines


def build_setup(values, lines=None, base_dir=".") -> BenchSetup:
    """Turn parsed values (optionally overridden by CLI flags) into a run setup."""
    lines = lines or {}

    def fail(key, message):
        raise ConfigFileError(message, lines.get(key))

    dataset = values.get("dataset", "synthetic")
    if dataset == "synthetic":
        try:
            source = SyntheticSpec(
                c=values.get("synthetic_c", 3),
                d=values.get("synthetic_d", 10),
                n_per_cluster=values.get("synthetic_n_per_cluster", 100),
                separation=values.get("synthetic_separation", 4.0),
                seed=values.get("synthetic_seed", 0),
            )
        except ConfigurationError as exc:
            fail("dataset", str(exc))
        default_c = source.c
    elif dataset.startswith("preset:"):
        try:
            source = SyntheticSpec.preset(
                dataset.split(":", 1)[1],
                separation=values.get("synthetic_separation", 4.0),
                seed=values.get("synthetic_seed", 0),
            )
        except ConfigurationError as exc:
            fail("dataset", str(exc))
        default_c = source.c
    elif dataset == "csv":
        if "csv_path" not in values:
            fail("dataset", "dataset = csv needs csv_path")
        path = Path(values["csv_path"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        source = CsvSource(
            path,
            features=values.get("csv_features"),
            label=values.get("csv_label"),
            header=values.get("csv_header", False),
            zero_as_missing=values.get("zero_as_missing", False),
        )
        default_c = None
    else:
        fail("dataset", f"unknown dataset kind {dataset!r}")

    c = values.get("clusters", default_c)
    if c is None:
        fail("clusters", "clusters is required for csv datasets")
    imputer_kwargs = {IMPUTER_KEYS[k]: v for k, v in values.items() if k in IMPUTER_KEYS}
    names = values.get("methods", list(ROSTER))
    try:
        methods = [make_method(name, gamma=values.get("gamma", 0.1), **imputer_kwargs) for name in names]
    except ConfigurationError as exc:
        fail("methods", str(exc))
    try:
        experiment = ExperimentConfig(
            dataset=source,
            methods=methods,
            c=c,
            missing_fraction=values.get("missing_fraction", 0.3),
            repeats=values.get("repeats", 5),
            seed=values.get("seed", 0),
            output_dir=values.get("output_dir", "report"),
            timing=values.get("timing", "wall"),
        )
    except ConfigurationError as exc:
        raise ConfigFileError(str(exc)) from None
    fractions = values.get("fractions", list(DEFAULT_FRACTIONS))
    return BenchSetup(experiment, fractions)


def load_config(path, overrides=None) -> BenchSetup:
    path = Path(path)
    values, lines = parse_config_text(path.read_text(encoding="utf-8"))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_setup(values, lines, base_dir=path.parent)
