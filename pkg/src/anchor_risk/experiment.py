"""Staged experiment pipeline: gen -> train / train-ae -> score -> evaluate -> report.

Each stage writes its artifacts into a run directory and stamps them with a
hash of the configuration sections it depends on. Downstream stages refuse
to consume artifacts whose stamp does not match the current configuration,
and a stage whose own outputs are already up to date is skipped.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import time
from pathlib import Path

import numpy as np

from . import benchmarks, checkpoint
from .estimator import AnchoredAutoencoder, AnchoredRegressor, RiskRegimeDetector, _Standardizer
from .metrics import metrics_report

logger = logging.getLogger(__name__)

DEFAULTS = {
    "seed": 0,
    "data": {
        "source": "f2",          # benchmark function name or "csv"
        "path": None,            # csv only
        "target": "y",           # csv only
        "n_train": 400,          # synthetic only: samples before the split
        "grid": 200,             # synthetic only: evaluation grid size
        "holdout": 0.2,          # csv only: in-band fraction kept for testing
        "calibration": 0.0,      # fraction of in-band samples held out as a calibration set
        "split": {"mode": "gaps", "low": 30.0, "high": 60.0, "intervals": []},
        "standardize": True,
    },
    "model": {
        "hidden_dims": [128, 128, 128, 128],
        "epochs": 2000,
        "batch_size": 64,
        "learning_rate": 3e-3,
        "lr_decay": 0.01,
        "loss": "mae",
    },
    "autoencoder": {
        "hidden_dims": [64, 16, 64],
        "epochs": 500,
        "batch_size": 64,
        "learning_rate": 1e-3,
        "lr_decay": 0.1,
        "loss": "mse",
    },
    "uq": {"n_anchors": 10, "coverage": 0.9},
    "score": {"kind": 1, "anchor_batch": 100, "eta": 0.01, "lambda": 0.1, "iters": 100},
    "regimes": {"conditional": False},
    "report": {"seeds": [0, 1, 2]},
}

# config sections each stage depends on (cumulative through the pipeline)
STAGE_SECTIONS = {
    "gen": ["seed", "data"],
    "train": ["seed", "data", "model"],
    "train-ae": ["seed", "data", "model", "autoencoder"],
    "score": ["seed", "data", "model", "uq", "score"],
    "evaluate": ["seed", "data", "model", "uq", "score", "regimes"],
}

ARTIFACTS = {
    "gen": "manifest.json",
    "train": "model.json",
    "train-ae": "autoencoder.json",
    "score": "scores.json",
}


class PipelineError(RuntimeError):
    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path=None, overrides=None) -> dict:
    """Defaults, then the YAML/JSON file at ``path``, then ``overrides``."""
    import yaml

    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text()) or {}
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = deep_merge(cfg, loaded)
    return deep_merge(cfg, overrides or {})


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def stage_hash(cfg: dict, stage: str) -> str:
    sections = list(STAGE_SECTIONS[stage])
    if stage in ("score", "evaluate") and int(cfg["score"]["kind"]) == 2:
        sections.append("autoencoder")
    return hashlib.sha256(canonical({k: cfg[k] for k in sections}).encode()).hexdigest()[:16]


def _json_float(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return v


def _sanitize(obj):
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    return _json_float(obj)


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(_sanitize(doc), indent=2, sort_keys=True,
                                     allow_nan=False) + "\n")


def _read_stamped(run_dir: Path, stage: str, cfg: dict, consumer: str) -> dict:
    path = run_dir / ARTIFACTS[stage]
    if not path.exists():
        raise PipelineError(f"missing {path.name}; run the '{stage}' stage first", consumer)
    doc = json.loads(path.read_text())
    stamp = doc.get("config_hash") or doc.get("meta", {}).get("config_hash")
    if stamp != stage_hash(cfg, stage):
        raise PipelineError(
            f"{path.name} is stale (config changed since it was produced); "
            f"rerun the '{stage}' stage", consumer)
    return doc


def _up_to_date(path: Path, stage: str, cfg: dict) -> bool:
    if not path.exists():
        return False
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError:
        return False
    stamp = doc.get("config_hash") or doc.get("meta", {}).get("config_hash")
    return stamp == stage_hash(cfg, stage)


def _split_spec(cfg) -> benchmarks.SplitSpec:
    s = cfg["data"]["split"]
    return benchmarks.SplitSpec(mode=s.get("mode", "gaps"), low=float(s.get("low", 30.0)),
                                high=float(s.get("high", 60.0)),
                                intervals=tuple(tuple(iv) for iv in s.get("intervals", [])),
                                seed=int(cfg["seed"]))


def cmd_gen(cfg: dict, run_dir, force=False) -> Path:
    """Build train/test (and optional calibration) CSVs plus a manifest."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    out = run_dir / ARTIFACTS["gen"]
    if not force and _up_to_date(out, "gen", cfg):
        return out
    data, seed = cfg["data"], int(cfg["seed"])
    spec = _split_spec(cfg)
    rng = np.random.default_rng(seed)
    if data["source"] == "csv":
        if not data.get("path"):
            raise PipelineError("data.path is required for csv sources", "gen")
        ds = benchmarks.load_csv(data["path"], data["target"])
        in_band = benchmarks.train_mask(ds.y, spec)
        idx = rng.permutation(np.flatnonzero(in_band))
        n_hold = int(round(data.get("holdout", 0.2) * idx.size))
        test_mask = ~in_band
        test_mask[idx[:n_hold]] = True
        train_idx = idx[n_hold:]
        train_ds, test = ds.subset(np.sort(train_idx)), ds.subset(test_mask)
    else:
        ds = benchmarks.gen_function(data["source"], int(data["n_train"]), seed=seed)
        test = benchmarks.make_eval_grid(data["source"], int(data["grid"]))
        train_ds, test = benchmarks.split_targets(ds, spec, test)
    calib = None
    frac = float(data.get("calibration", 0.0))
    if frac > 0:
        perm = rng.permutation(len(train_ds))
        n_cal = int(round(frac * len(train_ds)))
        calib = train_ds.subset(np.sort(perm[:n_cal]))
        train_ds = train_ds.subset(np.sort(perm[n_cal:]))
    h = stage_hash(cfg, "gen")
    stamp = f"config_hash={h} seed={seed}"
    benchmarks.write_csv(train_ds, run_dir / "train.csv", comment=stamp)
    benchmarks.write_csv(test, run_dir / "test.csv", comment=stamp)
    if calib is not None:
        benchmarks.write_csv(calib, run_dir / "calib.csv", comment=stamp)
    scaler = _Standardizer(train_ds.X, bool(data.get("standardize", True)))
    write_json(out, {
        "config_hash": h,
        "seed": seed,
        "source": data["source"] if data["source"] != "csv" else f"csv:{data['path']}",
        "split": spec.to_dict(),
        "n_train": len(train_ds),
        "n_test": len(test),
        "n_calibration": 0 if calib is None else len(calib),
        "standardization": scaler.to_dict(),
        "dropped_rows": (ds.stats or {}).get("dropped_rows", 0),
    })
    return out


def _load_split(run_dir: Path, name: str) -> benchmarks.Dataset:
    return benchmarks.load_csv(run_dir / f"{name}.csv", "y")


def _regressor_params(cfg):
    m = cfg["model"]
    return dict(hidden_dims=tuple(m["hidden_dims"]), epochs=int(m["epochs"]),
                batch_size=int(m["batch_size"]), learning_rate=float(m["learning_rate"]),
                lr_decay=float(m["lr_decay"]), loss=m["loss"],
                n_anchors=int(cfg["uq"]["n_anchors"]),
                standardize=bool(cfg["data"].get("standardize", True)),
                random_state=int(cfg["seed"]))


def cmd_train(cfg: dict, run_dir, force=False) -> Path:
    run_dir = Path(run_dir)
    out = run_dir / ARTIFACTS["train"]
    if not force and _up_to_date(out, "train", cfg):
        return out
    _read_stamped(run_dir, "gen", cfg, "train")
    train = _load_split(run_dir, "train")
    t0 = time.perf_counter()
    reg = AnchoredRegressor(**_regressor_params(cfg)).fit(train.X, train.y)
    elapsed = time.perf_counter() - t0
    checkpoint.save(reg.model_, out, "regressor", meta={
        "config_hash": stage_hash(cfg, "train"),
        "seed": int(cfg["seed"]),
        "scaler": reg.scaler_.to_dict(),
    })
    _record_timing(run_dir, "train", elapsed)
    return out


def cmd_train_ae(cfg: dict, run_dir, force=False) -> Path:
    run_dir = Path(run_dir)
    out = run_dir / ARTIFACTS["train-ae"]
    if not force and _up_to_date(out, "train-ae", cfg):
        return out
    reg = _load_regressor(cfg, run_dir, "train-ae")
    a = cfg["autoencoder"]
    t0 = time.perf_counter()
    ae = AnchoredAutoencoder(hidden_dims=tuple(a["hidden_dims"]), epochs=int(a["epochs"]),
                             batch_size=int(a["batch_size"]),
                             learning_rate=float(a["learning_rate"]),
                             lr_decay=float(a["lr_decay"]), loss=a["loss"],
                             random_state=int(cfg["seed"])).fit(reg.anchor_pool_)
    elapsed = time.perf_counter() - t0
    checkpoint.save(ae.model_, out, "autoencoder", meta={
        "config_hash": stage_hash(cfg, "train-ae"),
        "seed": int(cfg["seed"]),
    })
    _record_timing(run_dir, "train-ae", elapsed)
    return out


def _load_regressor(cfg, run_dir: Path, consumer: str) -> AnchoredRegressor:
    _read_stamped(run_dir, "gen", cfg, consumer)
    _read_stamped(run_dir, "train", cfg, consumer)
    model, meta = checkpoint.load(run_dir / ARTIFACTS["train"], "regressor")
    train = _load_split(run_dir, "train")
    scaler = _Standardizer.from_dict(meta["scaler"])
    return AnchoredRegressor.from_model(model, scaler(train.X), train.y, scaler,
                                        **_regressor_params(cfg))


def _detector(cfg, run_dir: Path, consumer: str, mode="joint") -> RiskRegimeDetector:
    reg = _load_regressor(cfg, run_dir, consumer)
    s = cfg["score"]
    kind = int(s["kind"])
    if kind not in (1, 2):
        raise PipelineError(f"score.kind must be 1 or 2, got {kind}", consumer)
    ae = None
    if kind == 2 and float(s["lambda"]) > 0:
        _read_stamped(run_dir, "train-ae", cfg, consumer)
        ae_model, _ = checkpoint.load(run_dir / ARTIFACTS["train-ae"], "autoencoder")
        ae = AnchoredAutoencoder()
        ae.model_ = ae_model
        ae.n_features_in_ = reg.n_features_in_
    batch = s.get("anchor_batch")
    return RiskRegimeDetector.from_fitted(
        reg, ae, score=f"score{kind}", anchor_batch=None if batch is None else int(batch),
        eta=float(s["eta"]), lam=float(s["lambda"]), n_iter=int(s["iters"]), mode=mode,
        conditional=bool(cfg["regimes"]["conditional"]), random_state=int(cfg["seed"]))


def cmd_score(cfg: dict, run_dir, force=False) -> Path:
    """Per-sample mean, spread, non-conformity and true risk for the test split."""
    run_dir = Path(run_dir)
    out = run_dir / ARTIFACTS["score"]
    if not force and _up_to_date(out, "score", cfg):
        return out
    det = _detector(cfg, run_dir, "score")
    calib_path = run_dir / "calib.csv"
    if calib_path.exists():
        cal = _load_split(run_dir, "calib")
        det.calibrate(cal.X, cal.y, float(cfg["uq"].get("coverage", 0.9)))
    test = _load_split(run_dir, "test")
    t0 = time.perf_counter()
    s = det.score_samples(test.X)
    elapsed = time.perf_counter() - t0
    risk = np.abs(test.y - s["mu"])
    kind = int(cfg["score"]["kind"])
    samples = [
        {"id": i, "x": [float(v) for v in test.X[i]], "y": float(test.y[i]),
         "mu": float(s["mu"][i]), "sigma": float(s["sigma"][i]),
         "mnc": None if not np.isfinite(s["mnc"][i]) else float(s["mnc"][i]),
         "risk": float(risk[i])}
        for i in range(len(test))
    ]
    write_json(out, {
        "config_hash": stage_hash(cfg, "score"),
        "seed": int(cfg["seed"]),
        "score_kind": f"score{kind}",
        "sigma_scale": det.sigma_scale_,
        "n_missing": int(np.count_nonzero(~np.isfinite(s["mnc"]))),
        "samples": samples,
    })
    _record_timing(run_dir, "score", elapsed)
    return out


def cmd_evaluate(cfg: dict, run_dir, ablation=None, csv_path=None) -> Path:
    """Assign regimes from the score file and write the metrics report."""
    run_dir = Path(run_dir)
    doc = _read_stamped(run_dir, "score", cfg, "evaluate")
    mode = ablation or "joint"
    if mode not in ("joint", "uq-only", "mnc-only"):
        raise PipelineError(f"unknown ablation {ablation!r}", "evaluate")
    samples = [s for s in doc["samples"] if s["mnc"] is not None]
    sigma = np.array([s["sigma"] for s in samples])
    mnc = np.array([s["mnc"] for s in samples])
    risk = np.array([s["risk"] for s in samples])
    det = RiskRegimeDetector(mode=mode, conditional=bool(cfg["regimes"]["conditional"]))
    regimes = det.regimes_from_scores(sigma, mnc)
    report = metrics_report(regimes, risk)
    method = mode
    out = run_dir / ("metrics.json" if mode == "joint" else f"metrics_{mode}.json")
    records = [{"id": s["id"], "regime": r, "true_risk": s["risk"]}
               for s, r in zip(samples, regimes)]
    write_json(out, {
        "config_hash": stage_hash(cfg, "evaluate"),
        "seed": int(cfg["seed"]),
        "method": method,
        "score_kind": doc["score_kind"],
        "n_missing": doc["n_missing"],
        "metrics": report,
        "records": records,
    })
    if csv_path:
        with open(csv_path, "w") as fh:
            fh.write(f"# config_hash={stage_hash(cfg, 'evaluate')} seed={cfg['seed']}\n")
            fh.write("id,regime,true_risk\n")
            for r in records:
                fh.write(f"{r['id']},{r['regime']},{r['true_risk']!r}\n")
    return out


def _record_timing(run_dir: Path, stage: str, seconds: float) -> None:
    # timings vary run to run, so they live outside the deterministic reports
    path = run_dir / "timing.json"
    doc = json.loads(path.read_text()) if path.exists() else {}
    doc[stage] = round(seconds, 4)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def run_pipeline(cfg: dict, run_dir, ablations=("uq-only", "mnc-only")) -> dict:
    """All stages for one seed; returns ``{method: metrics}``."""
    run_dir = Path(run_dir)
    cmd_gen(cfg, run_dir)
    cmd_train(cfg, run_dir)
    if int(cfg["score"]["kind"]) == 2 and float(cfg["score"]["lambda"]) > 0:
        cmd_train_ae(cfg, run_dir)
    cmd_score(cfg, run_dir)
    out = {}
    for mode in ("joint", *ablations):
        path = cmd_evaluate(cfg, run_dir, None if mode == "joint" else mode)
        doc = json.loads(path.read_text())
        out[doc["method"]] = doc["metrics"]
    return out


def cmd_report(cfg: dict, out_dir, seeds=None) -> Path:
    """Run (or reuse) the pipeline for every seed and summarize the metrics."""
    out_dir = Path(out_dir)
    seeds = list(seeds if seeds is not None else cfg["report"]["seeds"])
    per_seed, timing = {}, {}
    for seed in seeds:
        scfg = deep_merge(cfg, {"seed": int(seed)})
        run_dir = out_dir / f"seed_{seed}"
        per_seed[str(seed)] = run_pipeline(scfg, run_dir)
        timing[str(seed)] = json.loads((run_dir / "timing.json").read_text())
    methods = sorted({m for v in per_seed.values() for m in v})
    mean = {}
    for m in methods:
        mean[m] = {}
        for key in ("fn_pct", "fp_pct", "c_low", "c_high"):
            vals = [v[m][key] for v in per_seed.values() if isinstance(v[m].get(key), (int, float))]
            if vals:
                mean[m][key] = float(np.mean(vals))
        mean[m]["mean_risk"] = {}
        for reg in ("ID", "low", "moderate", "high"):
            vals = [v[m]["mean_risk"][reg] for v in per_seed.values()
                    if reg in v[m]["mean_risk"]]
            if vals:
                mean[m]["mean_risk"][reg] = float(np.mean(vals))
    summary_cfg = {k: v for k, v in cfg.items() if k != "seed"}
    out = out_dir / "summary.json"
    write_json(out, {
        "config_hash": hashlib.sha256(canonical(summary_cfg).encode()).hexdigest()[:16],
        "seeds": seeds,
        "per_seed": per_seed,
        "mean": mean,
    })
    write_json(out_dir / "timing.json", timing)
    return out
