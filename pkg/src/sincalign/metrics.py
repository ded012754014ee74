"""Agreement metrics for paired sequences.

The concordance correlation coefficient (CCC) between a reference y and a
prediction yhat is

    ccc = 2 * cov / (var_y + var_yhat + (mu_y - mu_yhat)^2)

with population (divide-by-N) moments. It penalizes decorrelation as well
as mean and scale mismatch, so unlike Pearson correlation it is not
invariant to affine distortion of the prediction.

The denominator is guarded below by EPS so that fully degenerate input
(both sequences constant with equal means) yields 0 with finite gradients
instead of 0/0. Away from degeneracy the guard is inactive and values are
exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import SampledSignal

__all__ = [
    "CccStats",
    "ccc_stats",
    "ccc",
    "ccc_grad",
    "rmse",
    "masked_ccc",
    "concat_eval",
]

EPS = 1e-8


def _as_array(x) -> np.ndarray:
    if isinstance(x, SampledSignal):
        return x.values
    return np.asarray(x, dtype=np.float64)


def _paired(y, yhat, min_len: int) -> tuple[np.ndarray, np.ndarray]:
    a, b = _as_array(y), _as_array(yhat)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size < min_len:
        raise ValueError(f"need at least {min_len} samples, got {a.size}")
    return a, b


@dataclass(frozen=True)
class CccStats:
    """Population moments entering the CCC."""

    mu_y: float
    mu_yhat: float
    var_y: float
    var_yhat: float
    cov: float


def ccc_stats(y, yhat) -> CccStats:
    a, b = _paired(y, yhat, 2)
    mu_a, mu_b = float(a.mean()), float(b.mean())
    da, db = a - mu_a, b - mu_b
    return CccStats(
        mu_y=mu_a,
        mu_yhat=mu_b,
        var_y=float(da @ da) / a.size,
        var_yhat=float(db @ db) / a.size,
        cov=float(da @ db) / a.size,
    )


def _denom(s: CccStats) -> float:
    return s.var_y + s.var_yhat + (s.mu_y - s.mu_yhat) ** 2


def ccc(y, yhat) -> float:
    s = ccc_stats(y, yhat)
    return 2.0 * s.cov / max(_denom(s), EPS)


def ccc_grad(y, yhat) -> np.ndarray:
    """Gradient of ccc(y, yhat) with respect to each yhat entry.

    Consistent with the guarded value: when the raw denominator falls below
    EPS it is held constant there, so its own derivative drops out.
    """
    a, b = _paired(y, yhat, 2)
    s = ccc_stats(a, b)
    n = a.size
    d = _denom(s)
    dg = max(d, EPS)
    value = 2.0 * s.cov / dg
    grad = (2.0 / n) * (a - s.mu_y) / dg
    if d > EPS:
        grad = grad - (value * (2.0 / n) / dg) * (b - s.mu_y)
    return grad


def rmse(y, yhat) -> float:
    a, b = _paired(y, yhat, 1)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def masked_ccc(y, yhat, mask) -> float:
    """CCC restricted to the indices selected by a boolean mask."""
    a, b = _paired(y, yhat, 2)
    m = np.asarray(mask, dtype=bool)
    if m.shape != a.shape:
        raise ValueError(f"mask length {m.shape} does not match signals {a.shape}")
    if int(m.sum()) < 2:
        raise ValueError("mask must select at least two samples")
    return ccc(a[m], b[m])


def concat_eval(ys, yhats) -> dict[str, float]:
    """CCC and RMSE on the concatenation of per-recording pairs.

    Metrics are computed over one long vector, not averaged per recording.
    """
    ys = [_as_array(y) for y in ys]
    yhats = [_as_array(t) for t in yhats]
    if len(ys) != len(yhats) or not ys:
        raise ValueError("need equally many non-empty reference and prediction lists")
    for i, (a, b) in enumerate(zip(ys, yhats)):
        if a.shape != b.shape:
            raise ValueError(f"recording {i}: length mismatch {a.shape} vs {b.shape}")
    y_cat = np.concatenate(ys)
    t_cat = np.concatenate(yhats)
    return {"ccc": ccc(y_cat, t_cat), "rmse": rmse(y_cat, t_cat)}
