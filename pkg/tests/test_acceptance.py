"""End-to-end acceptance checks, one test per criterion.

Each test tags itself with its criterion number; the conftest summary
prints one PASS/FAIL line per criterion. Runtime budgets are asserted
inside the tests.
"""

import csv
import itertools
import math
import time

import numpy as np
import pytest

from leachclust.cli import main
from leachclust.clustering import kmeans, solve_sec
from leachclust.core import MaskedDataset, alignment_radius2
from leachclust.harness import (
    ROSTER,
    ExperimentConfig,
    SyntheticSpec,
    apply_mcar,
    gen_synthetic,
    make_method,
    run_experiment,
)
from leachclust.imputation import ImputerConfig, impute, impute_bayes_align, impute_zero
from leachclust.metrics import nmi, pairwise_f, rand_index, rmse_missing

pytestmark = pytest.mark.acceptance

IMPUTERS = ("mean", "nn", "pc", "ivp", "bayes")


def tag(request, number):
    request.node.user_properties.append(("criterion", number))
    return time.perf_counter()


def report(number, ok, detail, t0, budget):
    secs = time.perf_counter() - t0
    print(f"criterion {number}: {'PASS' if ok and secs < budget else 'FAIL'} ({detail}; {secs:.2f} s of {budget} s)")
    assert ok, detail
    assert secs < budget, f"took {secs:.1f} s, budget {budget} s"


# ---------------------------------------------------------------- 1: metric oracles


def set_partitions(n, max_blocks):
    """Canonical labelings (first appearance order) with at most max_blocks blocks."""
    out = []

    def grow(prefix, used):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for lab in range(min(used + 1, max_blocks)):
            grow(prefix + [lab], max(used, lab + 1))

    grow([], 0)
    return out


def tables(n, k=3):
    """Every k x k contingency table with total n, expanded into label pairs."""
    for cells in itertools.combinations(range(n + k * k - 1), k * k - 1):
        bounds = (-1,) + cells + (n + k * k - 1,)
        counts = [bounds[j + 1] - bounds[j] - 1 for j in range(k * k)]
        a, b = [], []
        for idx, cnt in enumerate(counts):
            a += [idx // k] * cnt
            b += [idx % k] * cnt
        yield tuple(a), tuple(b)


def pair_oracle(a, b):
    """(rand, pairwise F) by enumerating every instance pair."""
    agree = same_a = same_b = both = 0
    pairs = 0
    for i, j in itertools.combinations(range(len(a)), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        pairs += 1
        agree += sa == sb
        same_a += sa
        same_b += sb
        both += sa and sb
    ri = agree / pairs
    if same_a == 0 and same_b == 0:
        f = 1.0
    elif both == 0:
        f = 0.0
    else:
        p, r = both / same_b, both / same_a
        f = 2 * p * r / (p + r)
    return ri, f


def nmi_oracle(a, b):
    n = len(a)
    ha = -sum(a.count(x) / n * math.log(a.count(x) / n) for x in set(a))
    hb = -sum(b.count(y) / n * math.log(b.count(y) / n) for y in set(b))
    if ha == 0 and hb == 0:
        return 1.0
    if ha == 0 or hb == 0:
        return 0.0
    mi = 0.0
    for x, y in set(zip(a, b)):
        pxy = sum(1 for u, v in zip(a, b) if u == x and v == y) / n
        mi += pxy * math.log(pxy * n * n / (a.count(x) * b.count(y)))
    return mi / math.sqrt(ha * hb)


def test_criterion_1_metric_oracles(request):
    t0 = tag(request, 1)
    cases = set()
    # all pairs of set partitions for small n
    for n in range(2, 7):
        parts = set_partitions(n, 3)
        cases.update(itertools.product(parts, parts))
    # every partition pair up to instance order for n = 7, 8
    for n in (7, 8):
        cases.update(tables(n))
    worst = 0.0
    for a, b in sorted(cases):
        ri, f = pair_oracle(a, b)
        worst = max(worst, abs(nmi(a, b) - nmi_oracle(list(a), list(b))),
                    abs(rand_index(a, b) - ri), abs(pairwise_f(a, b) - f))
    report(1, worst <= 1e-12, f"{len(cases)} partition pairs, max deviation {worst:.2e}", t0, 10)


# ---------------------------------------------------------------- 2: Bayes residual


def test_criterion_2_bayes_residual(request):
    t0 = tag(request, 2)
    cfg = ImputerConfig("bayes", tol=1e-10, max_iter=500)
    worst, bad, total, unconverged = 0.0, 0, 0, 0
    for seed in range(20):
        base = gen_synthetic(SyntheticSpec(c=3, d=10, n_per_cluster=100, separation=4.0, seed=seed))
        ds = apply_mcar(base, 0.3, seed=seed)
        res = impute_bayes_align(ds, cfg)
        unconverged += not res.converged
        m, s2 = res.params.m, res.params.sigma2
        log_g = res.params.diagnostics["log_g_target"]
        for i in np.flatnonzero(ds.missing.any(axis=0)):
            target = alignment_radius2(s2, log_g[i])
            for q in np.flatnonzero(ds.missing[:, i]):
                lhs = (res.filled[q, i] - m[q]) ** 2
                rel = abs(lhs - target) / max(target, np.finfo(float).tiny)
                worst = max(worst, rel)
                bad += rel > 1e-6
                total += 1
    ok = bad == 0 and unconverged == 0
    detail = f"{bad}/{total} cells off by more than 1e-6 relative, worst {worst:.3g}, {unconverged} unconverged"
    report(2, ok, detail, t0, 30)


# ---------------------------------------------------------------- 3: identity


def test_criterion_3_identity(request):
    t0 = tag(request, 3)
    problems = []
    base = gen_synthetic(SyntheticSpec(c=3, d=10, n_per_cluster=30, seed=3))
    ds = apply_mcar(base, 0.3, seed=3)
    valid = ds.L == 1
    for name in IMPUTERS:
        cfg = ImputerConfig(name, seed=1)
        if not np.array_equal(impute(base, cfg).filled, base.X):
            problems.append(f"{name} changed complete data")
        filled = impute(ds, cfg).filled
        if not np.array_equal(filled[valid], ds.X[valid]):
            problems.append(f"{name} altered valid cells")
    if not np.array_equal(impute_zero(base), base.X):
        problems.append("zero-fill changed complete data")
    report(3, not problems, "; ".join(problems) or f"{len(IMPUTERS) + 1} imputers exact", t0, 10)


# ---------------------------------------------------------------- 4: directional protocol


def test_criterion_4_directional(request):
    t0 = tag(request, 4)
    wins = 0
    lines = []
    for master in range(10):
        cfg = ExperimentConfig(
            SyntheticSpec(c=3, d=10, n_per_cluster=100, separation=4.0, seed=master),
            [make_method("baseline"), make_method("bac2")],
            c=3, missing_fraction=0.3, repeats=5, seed=master, timing="off",
        )
        rep = run_experiment(cfg)
        base, bac = rep.aggregate("baseline", 0.3).means, rep.aggregate("bac2", 0.3).means
        # baseline rows score the zero-filled matrix, bac2 rows the Bayes fill
        ok = bac["nmi"] >= base["nmi"] and bac["rmse_missing"] <= base["rmse_missing"]
        wins += ok
        lines.append(f"seed {master}: nmi {bac['nmi']:.3f} vs {base['nmi']:.3f}, "
                     f"rmse {bac['rmse_missing']:.3f} vs {base['rmse_missing']:.3f}")
    print("\n".join(lines))
    report(4, wins >= 8, f"ordering holds on {wins}/10 master seeds", t0, 120)


# ---------------------------------------------------------------- 5: PC recovery


def test_criterion_5_pc_recovery(request):
    t0 = tag(request, 5)
    rng = np.random.default_rng(5)
    X = rng.standard_normal((10, 2)) @ rng.standard_normal((2, 100))
    ds = apply_mcar(MaskedDataset.complete(X, labels=np.zeros(100, dtype=int)), 0.05, seed=5)
    res = impute(ds, ImputerConfig("pc", rank=2, tol=1e-10, max_iter=500))
    err = rmse_missing(X, res.filled, ds.L)
    report(5, err <= 1e-5, f"rmse {err:.3g} after {res.iterations} iterations", t0, 5)


# ---------------------------------------------------------------- 6: SEC constraints


def test_criterion_6_sec(request):
    t0 = tag(request, 6)
    worst_col = worst_mono = 0.0
    for seed in range(12):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((6, 40)) * rng.uniform(0.1, 10)
        for gamma in (1e-3, 0.1, 10.0):
            for zd in (False, True):
                coef = solve_sec(X, gamma=gamma, zero_diagonal=zd)
                Z = coef.Z
                worst_col = max(worst_col, np.abs(Z.sum(axis=0) - 1).max(), -Z.min(), Z.max() - 1)
                t = np.array(coef.objective_trace)
                rise = np.diff(t) / np.maximum(1.0, np.abs(t[:-1]))
                worst_mono = max(worst_mono, rise.max(initial=0.0))
    X = np.random.default_rng(99).standard_normal((6, 40))
    dev = np.abs(solve_sec(X, gamma=1e9).Z - 1 / 40).max()
    ok = worst_col <= 1e-6 and dev <= 1e-3 and worst_mono <= 1e-9
    report(6, ok, f"constraint slack {worst_col:.2e}, uniform gap {dev:.2e}, max rise {worst_mono:.2e}", t0, 30)


# ---------------------------------------------------------------- 7: k-means sanity


def test_criterion_7_kmeans(request):
    t0 = tag(request, 7)
    problems = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        centers = np.array([[0.0, 0.0], [60.0, 0.0], [0.0, 60.0]]).T
        y = np.repeat(np.arange(3), 30)
        X = centers[:, y] + rng.standard_normal((2, 90))
        part = kmeans(X, 3, seed=seed)
        if nmi(y, part.assign) != 1.0:
            problems.append(f"seed {seed}: blobs not recovered")
        t = np.array(part.inertia_trace)
        if np.any(np.diff(t) > 0):
            problems.append(f"seed {seed}: inertia rose")
        noisy = rng.standard_normal((4, 60))
        if not np.array_equal(kmeans(noisy, 4, seed=seed).assign, kmeans(7.5 * noisy, 4, seed=seed).assign):
            problems.append(f"seed {seed}: scaling changed assignment")
    report(7, not problems, "; ".join(problems) or "10 seeds clean", t0, 5)


# ---------------------------------------------------------------- 8: protocol shape


def _cli_run(tmp_path, name, command, extra, timing="off"):
    cfg = tmp_path / f"{name}.cfg"
    cfg.write_text(
        "dataset = synthetic\nsynthetic_d = 10\nsynthetic_n_per_cluster = 30\n"
        f"repeats = 5\nseed = 4\ntiming = {timing}\n"
    )
    out = tmp_path / name
    code = main([command, str(cfg), "--out", str(out), *extra])
    return code, out


def _csv_rows(path):
    with path.open() as fh:
        return list(csv.DictReader(fh))


def test_criterion_8_protocol_shape(request, tmp_path):
    t0 = tag(request, 8)
    problems = []
    fractions = [round(0.1 * k, 1) for k in range(1, 9)]
    runs = {}
    for command, extra in (("bench", ["--fraction", "0.3"]), ("sweep", ["--fractions", ",".join(map(str, fractions))])):
        outs = []
        for attempt in (1, 2):
            code, out = _cli_run(tmp_path, f"{command}{attempt}", command, extra)
            if code != 0:
                problems.append(f"{command} exited {code}")
            outs.append(out)
        runs[command] = outs
        files = sorted(p.name for p in outs[0].iterdir())
        if files != ["aggregates.csv", "f.svg", "nmi.svg", "ri.svg", "rows.csv", "seconds.svg"]:
            problems.append(f"{command} wrote {files}")
        for fname in files:
            if (outs[0] / fname).read_bytes() != (outs[1] / fname).read_bytes():
                problems.append(f"{command} {fname} differs between runs")
        n_frac = 1 if command == "bench" else len(fractions)
        rows, aggs = _csv_rows(outs[0] / "rows.csv"), _csv_rows(outs[0] / "aggregates.csv")
        if len(rows) != len(ROSTER) * 5 * n_frac or len(aggs) != len(ROSTER) * n_frac:
            problems.append(f"{command}: {len(rows)} rows, {len(aggs)} aggregates")
        if any(r["error"] for r in rows):
            problems.append(f"{command}: failed rows")
        if any(v == "" for r in aggs for v in r.values()):
            problems.append(f"{command}: empty aggregate cells")
        if [a["method"] for a in aggs[: len(ROSTER)]] != list(ROSTER):
            problems.append(f"{command}: roster order {[a['method'] for a in aggs]}")
        for stem in ("nmi", "f", "ri", "seconds"):
            svg = (outs[0] / f"{stem}.svg").read_text()
            if not all(f"series-{m}" in svg for m in ROSTER):
                problems.append(f"{command} {stem}.svg misses a series")
    # wall-clock timing fills the seconds column and leaves every score unchanged
    code, wall = _cli_run(tmp_path, "wall", "bench", ["--fraction", "0.3"], timing="wall")
    timed, ref = _csv_rows(wall / "rows.csv"), _csv_rows(runs["bench"][0] / "rows.csv")
    if code != 0 or not all(float(r["seconds"]) > 0 for r in timed):
        problems.append("wall-timed bench did not record runtimes")
    strip = [{k: v for k, v in r.items() if k != "seconds"} for r in timed]
    if strip != [{k: v for k, v in r.items() if k != "seconds"} for r in ref]:
        problems.append("wall-timed scores differ from the untimed run")
    report(8, not problems, "; ".join(problems) or "bench and sweep reports complete and reproducible", t0, 300)
