"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerance.

The f2/f1 runs go through the staged pipeline, so the same artifacts serve the
reproduction, ablation, monotonicity and determinism checks. Trained models
are shared across criteria through session fixtures.
"""

import json
import math
import shutil
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anchor_risk import experiment
from anchor_risk.nn import Mlp, MlpSpec
from anchor_risk.regimes import REGIME_MATRIX
from anchor_risk.uncertainty import calibrate_sigma, forward_uncertainty
from conftest import AnchorEcho, ConstantModel
from test_metrics import metric_mismatch, random_record_set

pytestmark = pytest.mark.slow

SEEDS = [0, 1, 2]
# exact max over the training set and 50 forward anchors
RUN = {"uq": {"n_anchors": 50}, "score": {"anchor_batch": None}, "report": {"seeds": SEEDS}}
RESULTS = []


def verdict(number, name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {name} | {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def fmt(v):
    return "n/a" if v is None else f"{v:.3f}"


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    """3-seed reports for f2 and f1, plus wall time of the whole batch."""
    root = tmp_path_factory.mktemp("acceptance")
    out = {}
    t0 = time.perf_counter()
    for name in ("f2", "f1"):
        cfg = experiment.load_config(None, experiment.deep_merge(RUN, {"data": {"source": name}}))
        path = experiment.cmd_report(cfg, root / name)
        out[name] = {"cfg": cfg, "dir": root / name, "summary": json.loads(path.read_text())}
    out["seconds"] = time.perf_counter() - t0
    return out


# -- 1 -----------------------------------------------------------------------

def _rel(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def _fd(f, arr, h=1e-5):
    g = np.zeros_like(arr)
    for idx in np.ndindex(*arr.shape):
        old = arr[idx]
        arr[idx] = old + h
        up = f()
        arr[idx] = old - h
        down = f()
        arr[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def test_criterion_01_gradient_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for probe in range(50):
        depth = 1 + probe % 4
        hidden = tuple(int(w) for w in rng.integers(3, 9, size=depth))
        d_in, d_out = 2 * int(rng.integers(1, 4)), int(rng.integers(1, 3))
        m = Mlp.init(MlpSpec(d_in, hidden, d_out, seed=probe))
        m.biases = [rng.normal(scale=0.1, size=b.shape) for b in m.biases]
        X = rng.normal(size=(int(rng.integers(1, 4)), d_in))
        U = rng.normal(size=(X.shape[0], d_out))
        gx, gw, gb = m.backward(X, U)

        def obj():
            return float(np.sum(U * m.forward(X)))

        worst = max(worst, _rel(gx, _fd(obj, X)))
        for i in range(m.n_layers):
            worst = max(worst, _rel(gw[i], _fd(obj, m.weights[i])),
                        _rel(gb[i], _fd(obj, m.biases[i])))
    elapsed = time.perf_counter() - t0
    verdict(1, "analytic vs central-difference gradients", worst < 1e-4 and elapsed < 10,
            f"max rel err {worst:.2e} (< 1e-4), {elapsed:.2f}s (< 10s), 50 probes, 1-4 layers")


# -- 2 -----------------------------------------------------------------------

def test_criterion_02_forward_anchoring_units():
    _, s_const = forward_uncertainty(ConstantModel(5.0), np.zeros((4, 1)),
                                     np.arange(6.0)[:, None])
    mu, sigma = forward_uncertainty(AnchorEcho(), np.zeros((1, 1)), np.array([[1.0], [3.0]]))
    ok = (np.all(s_const == 0.0) and abs(mu[0] - 2.0) <= 1e-12
          and abs(sigma[0] - math.sqrt(2.0)) <= 1e-12)
    verdict(2, "mean/spread unit behavior", ok,
            f"constant sigma max {float(s_const.max())}, two-anchor mu={float(mu[0])!r} "
            f"sigma={float(sigma[0])!r}")


# -- 3 -----------------------------------------------------------------------

def test_criterion_03_regime_matrix():
    expected = {
        ("low", "low"): "ID", ("low", "moderate"): "ID", ("low", "high"): "low",
        ("moderate", "low"): "low", ("moderate", "moderate"): "low",
        ("moderate", "high"): "moderate",
        ("high", "low"): "moderate", ("high", "moderate"): "moderate", ("high", "high"): "high",
    }
    bad = [k for k in expected if REGIME_MATRIX.get(k) != expected[k]]
    verdict(3, "9-cell regime matrix", not bad and len(REGIME_MATRIX) == 9,
            f"{9 - len(bad)}/9 cells match")


# -- 4 -----------------------------------------------------------------------

def test_criterion_04_metric_oracles():
    worst = max(metric_mismatch(*random_record_set(1000 + s)) for s in range(200))
    verdict(4, "FN/FP/C_low/C_high vs brute force", worst <= 1e-12,
            f"200 random record sets, max abs diff {worst:.1e} (<= 1e-12)")


# -- 5 -----------------------------------------------------------------------

def test_criterion_05_f2_reproduction(runs):
    per_seed = runs["f2"]["summary"]["per_seed"]["0"]
    p, u = per_seed["joint"], per_seed["uq-only"]
    below = all(p.get(k) is not None and u.get(k) is not None and p[k] < u[k]
                for k in ("c_low", "c_high"))
    ok = p["fn_pct"] <= 5 and p["fp_pct"] <= 5 and below
    verdict(5, "f2 Gaps, Score_1: FN<=5, FP<=5, C_low/C_high below UQ-only", ok,
            f"seed 0: FN {p['fn_pct']:.2f} FP {p['fp_pct']:.2f} | C_low {fmt(p.get('c_low'))} vs "
            f"{fmt(u.get('c_low'))} | C_high {fmt(p.get('c_high'))} vs {fmt(u.get('c_high'))}")


# -- 6 -----------------------------------------------------------------------

def test_criterion_06_ablation_ordering(runs):
    parts, ok = [], True
    for name in ("f2", "f1"):
        mean = runs[name]["summary"]["mean"]
        fn = {m: mean[m]["fn_pct"] for m in ("joint", "uq-only", "mnc-only")}
        ok &= fn["joint"] <= fn["uq-only"] and fn["joint"] <= fn["mnc-only"]
        parts.append(f"{name} FN joint {fn['joint']:.2f} uq {fn['uq-only']:.2f} "
                     f"mnc {fn['mnc-only']:.2f}")
    ok &= runs["seconds"] < 600
    verdict(6, "3-seed FN: joint <= UQ-only and <= MNC-only", ok,
            "; ".join(parts) + f"; {runs['seconds']:.0f}s (< 600s)")


# -- 7 -----------------------------------------------------------------------

def test_criterion_07_risk_monotonicity(runs):
    mr = runs["f2"]["summary"]["mean"]["joint"]["mean_risk"]
    vals = [mr.get(r) for r in ("ID", "low", "moderate", "high")]
    ok = None not in vals and all(a <= b for a, b in zip(vals, vals[1:]))
    verdict(7, "f2 mean |error| ID <= low <= moderate <= high", ok,
            " <= ".join(fmt(v) for v in vals))


# -- 8 -----------------------------------------------------------------------

def test_criterion_08_score2(runs, tmp_path):
    # seed-0 regressor reused; both scores share the default 100-sample anchor batch
    src = runs["f2"]["dir"] / "seed_0"
    run = tmp_path / "f2_score2"
    shutil.copytree(src, run)
    base = experiment.deep_merge(runs["f2"]["cfg"], {"seed": 0, "score": {"anchor_batch": 100}})
    cfg1 = experiment.deep_merge(base, {"score": {"kind": 1}})
    cfg2 = experiment.deep_merge(base, {"score": {"kind": 2}})
    m1 = experiment.run_pipeline(cfg1, run, ablations=())["joint"]
    m2 = experiment.run_pipeline(cfg2, run, ablations=())["joint"]

    det = experiment._detector(cfg2, run, "acceptance")
    test = experiment._load_split(run, "test")
    scores = json.loads((run / "scores.json").read_text())["samples"]
    clean = np.array([s["mnc"] for s in scores], dtype=float)
    rng = np.random.default_rng(0)
    means = [float(np.nanmean(clean))]
    for noise in (0.1, 0.5):
        X = test.X + noise * rng.standard_normal(test.X.shape)
        means.append(float(np.nanmean(det.score_samples(X)["mnc"])))
    increasing = means[0] < means[1] < means[2]
    s1 = m1.get("c_low", math.inf) + m1.get("c_high", math.inf)
    s2 = m2.get("c_low", math.inf) + m2.get("c_high", math.inf)
    verdict(8, "Score_2 rises with corruption; C_low+C_high <= Score_1's",
            increasing and s2 <= s1,
            "mean Score_2 at sigma 0/0.1/0.5: " + "/".join(f"{v:.4f}" for v in means)
            + f" | C sum Score_2 {s2:.3f} vs Score_1 {s1:.3f}")


# -- 9 -----------------------------------------------------------------------

COVERAGES = []


@settings(max_examples=25, deadline=None, derandomize=True)
@given(st.sampled_from(["normal", "laplace", "student3", "hetero"]),
       st.floats(0.01, 100.0), st.integers(0, 2**31))
def _coverage_property(family, scale, seed):
    rng = np.random.default_rng(seed)
    hits = []
    for _ in range(20):
        n = 2000
        sigma = scale * rng.uniform(0.2, 2.0, n)
        z = {"normal": rng.standard_normal, "laplace": rng.laplace,
             "student3": lambda size: rng.standard_t(3, size),
             "hetero": lambda size: rng.standard_normal(size) * rng.uniform(0.5, 1.5, size)}[family](n)
        mu = rng.normal(size=n)
        y = mu + sigma * z
        c = calibrate_sigma(mu[:1000], sigma[:1000], y[:1000], 0.9)
        hits.append(np.mean(np.abs(y[1000:] - mu[1000:]) <= c * sigma[1000:]))
    COVERAGES.append(float(np.mean(hits)))
    assert COVERAGES[-1] >= 0.88


def test_criterion_09_calibration_coverage():
    COVERAGES.clear()
    try:
        _coverage_property()
        ok = True
    except AssertionError:
        ok = False
    verdict(9, "split-conformal coverage at nominal 90%", ok,
            f"{len(COVERAGES)} residual models x 20 splits of 1000/1000 points; "
            f"min mean coverage {min(COVERAGES):.4f} (>= 0.88)")


# -- 10 ----------------------------------------------------------------------

def test_criterion_10_determinism(runs, tmp_path):
    cfg = runs["f2"]["cfg"]
    again = experiment.cmd_report(cfg, tmp_path / "rerun")
    first = runs["f2"]["dir"]
    files = sorted(p.relative_to(first) for p in first.rglob("*")
                   if p.is_file() and p.name != "timing.json")
    same = [(first / f).read_bytes() == (tmp_path / "rerun" / f).read_bytes() for f in files]
    verdict(10, "full f2 pipeline rerun is byte-identical", all(same) and len(files) > 0,
            f"{sum(same)}/{len(files)} report files identical")


# -- Score_1 runtime ---------------------------------------------------------

def test_score1_runtime(runs):
    det = experiment._detector(experiment.deep_merge(runs["f2"]["cfg"], {"seed": 0}),
                               runs["f2"]["dir"] / "seed_0", "acceptance")
    X = np.linspace(-0.5, 2.5, 1000)[:, None]
    t0 = time.perf_counter()
    det.score_samples(X)
    elapsed = time.perf_counter() - t0
    print(f"INFO  Score_1 + mean/spread on 1000 samples: {elapsed:.2f}s "
          f"({len(det.anchor_batch_)} reverse anchors, 50 forward anchors)")
    assert elapsed < 10


def test_report_summary(runs):
    """Per-method 3-seed means, for the record."""
    for name in ("f2", "f1"):
        for method, m in runs[name]["summary"]["mean"].items():
            print(f"INFO  {name} {method:9s} FN {m['fn_pct']:6.2f} FP {m['fp_pct']:6.2f} "
                  f"C_low {fmt(m.get('c_low'))} C_high {fmt(m.get('c_high'))}")
