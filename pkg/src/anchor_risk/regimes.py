"""Quantile binning of score channels and the mapping onto four risk regimes."""

from __future__ import annotations

import numpy as np

LOW, MODERATE, HIGH = "low", "moderate", "high"
BINS = (LOW, MODERATE, HIGH)

ID, LOW_RISK, MODERATE_RISK, HIGH_RISK = "ID", "low", "moderate", "high"
REGIMES = (ID, LOW_RISK, MODERATE_RISK, HIGH_RISK)

# (uncertainty bin, non-conformity bin) -> regime
REGIME_MATRIX = {
    (LOW, LOW): ID,
    (LOW, MODERATE): ID,
    (LOW, HIGH): LOW_RISK,
    (MODERATE, LOW): LOW_RISK,
    (MODERATE, MODERATE): LOW_RISK,
    (MODERATE, HIGH): MODERATE_RISK,
    (HIGH, LOW): MODERATE_RISK,
    (HIGH, MODERATE): MODERATE_RISK,
    (HIGH, HIGH): HIGH_RISK,
}


def _scores(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("cannot bin an empty score vector")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return s


def bin_scores(scores, low_q: float = 25.0, high_q: float = 75.0):
    """Split scores at their empirical ``low_q``/``high_q`` percentiles.

    Returns ``((q_low, q_high), bins)`` with ``bins`` an object array of
    ``"low"`` (s <= q_low), ``"moderate"`` (q_low < s <= q_high) or ``"high"``.
    """
    s = _scores(scores)
    q_lo, q_hi = np.percentile(s, [low_q, high_q])
    bins = np.full(s.shape, HIGH, dtype=object)
    bins[s <= q_hi] = MODERATE
    bins[s <= q_lo] = LOW
    return (float(q_lo), float(q_hi)), bins


def assign_regime(unc_bin: str, mnc_bin: str) -> str:
    try:
        return REGIME_MATRIX[(unc_bin, mnc_bin)]
    except KeyError:
        raise ValueError(f"invalid bin pair ({unc_bin!r}, {mnc_bin!r})") from None


def assign_regimes(uncertainty, mnc, conditional: bool = False) -> np.ndarray:
    """Regime per sample from an uncertainty channel and a non-conformity channel.

    With ``conditional`` the non-conformity quantiles are computed separately
    inside each uncertainty bin rather than over all samples.
    """
    u = _scores(uncertainty)
    m = _scores(mnc)
    if u.shape != m.shape:
        raise ValueError("uncertainty and non-conformity vectors must be aligned")
    _, ub = bin_scores(u)
    if conditional:
        mb = np.empty(m.shape, dtype=object)
        for b in BINS:
            sel = ub == b
            if sel.any():
                mb[sel] = bin_scores(m[sel])[1]
    else:
        _, mb = bin_scores(m)
    return np.array([REGIME_MATRIX[p] for p in zip(ub, mb)], dtype=object)


def single_score_regimes(scores) -> np.ndarray:
    """Quartile split of one channel onto the regime labels (for ablations)."""
    s = _scores(scores)
    q1, q2, q3 = np.percentile(s, [25.0, 50.0, 75.0])
    out = np.full(s.shape, HIGH_RISK, dtype=object)
    out[s <= q3] = MODERATE_RISK
    out[s <= q2] = LOW_RISK
    out[s <= q1] = ID
    return out
