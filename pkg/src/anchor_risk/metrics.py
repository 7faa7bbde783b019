"""Detector quality over risk regimes: FN, FP, C_low and C_high."""

from __future__ import annotations

import math
import warnings

import numpy as np

from .regimes import HIGH_RISK, ID, LOW_RISK, MODERATE_RISK, REGIMES


def _records(regimes, risk):
    regimes = np.asarray(regimes, dtype=object).ravel()
    risk = np.asarray(risk, dtype=np.float64).ravel()
    if regimes.size == 0 or regimes.shape != risk.shape:
        raise ValueError("regimes and risks must be non-empty and aligned")
    if not np.all(np.isfinite(risk)) or np.any(risk < 0):
        raise ValueError("true risks must be finite and nonnegative")
    unknown = set(regimes) - set(REGIMES)
    if unknown:
        raise ValueError(f"unknown regime labels {sorted(unknown)}")
    return regimes, risk


def false_negatives(regimes, risk) -> float:
    """Percent of ID/low-risk samples whose true risk is above the 80th percentile."""
    regimes, risk = _records(regimes, risk)
    benign = np.isin(regimes, [ID, LOW_RISK])
    if not benign.any():
        warnings.warn("no ID or low-risk samples; FN defined as 0", stacklevel=2)
        return 0.0
    top = risk > np.percentile(risk, 80.0)
    return 100.0 * np.count_nonzero(benign & top) / np.count_nonzero(benign)


def false_positives(regimes, risk) -> float:
    """Percent of moderate/high-risk samples whose true risk is below the 20th percentile."""
    regimes, risk = _records(regimes, risk)
    flagged = np.isin(regimes, [MODERATE_RISK, HIGH_RISK])
    if not flagged.any():
        warnings.warn("no moderate or high-risk samples; FP defined as 0", stacklevel=2)
        return 0.0
    bottom = risk < np.percentile(risk, 20.0)
    return 100.0 * np.count_nonzero(flagged & bottom) / np.count_nonzero(flagged)


def _confusion(regimes, risk, lower, upper):
    regimes, risk = _records(regimes, risk)
    a, b = risk[regimes == lower], risk[regimes == upper]
    if a.size == 0 or b.size == 0:
        return None
    num = np.percentile(a, 90.0)
    den = np.percentile(b, 10.0)
    if den == 0:
        warnings.warn(f"10th percentile of {upper!r} regime is 0; confusion is infinite",
                      stacklevel=3)
        return math.inf
    return float(num / den)


def confusion_low(regimes, risk):
    """P90 of ID risks over P10 of low-risk risks; ``None`` if either regime is empty."""
    return _confusion(regimes, risk, ID, LOW_RISK)


def confusion_high(regimes, risk):
    """P90 of moderate-risk risks over P10 of high-risk risks; ``None`` if either is empty."""
    return _confusion(regimes, risk, MODERATE_RISK, HIGH_RISK)


def metrics_report(regimes, risk) -> dict:
    """All four metrics plus per-regime counts. Undefined confusions are omitted."""
    regimes, risk = _records(regimes, risk)
    report = {
        "fn_pct": false_negatives(regimes, risk),
        "fp_pct": false_positives(regimes, risk),
    }
    for key, fn in (("c_low", confusion_low), ("c_high", confusion_high)):
        val = fn(regimes, risk)
        if val is not None:
            report[key] = val
    report["counts"] = {r: int(np.count_nonzero(regimes == r)) for r in REGIMES}
    report["mean_risk"] = {
        r: float(risk[regimes == r].mean()) for r in REGIMES if np.any(regimes == r)
    }
    return report
