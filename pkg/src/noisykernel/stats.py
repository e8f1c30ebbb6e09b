"""Small statistics toolbox for experiment summaries and checks."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats as sps

from .errors import InvalidParameterError


def mean_stderr(samples) -> tuple[float, float]:
    """Sample mean and standard error (ddof=1)."""
    arr = np.asarray(samples, dtype=float)
    if arr.size < 2:
        raise InvalidParameterError("need at least two samples")
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise InvalidParameterError("need at least two samples per side")
    res = sps.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


def chi_square_gof(samples, pmf, min_expected: float = 5.0) -> tuple[float, float]:
    """Goodness-of-fit of integer samples against a probability function.

    Bins are 0, 1, 2, ... with a pooled tail bin chosen so that every
    expected count is at least ``min_expected``.
    """
    arr = np.asarray(samples, dtype=np.int64)
    if arr.size < 2:
        raise InvalidParameterError("need at least two samples")
    n = arr.size
    cut = 0
    tail = 1.0
    while tail * n - pmf(cut) * n >= min_expected and pmf(cut) * n >= min_expected:
        tail -= pmf(cut)
        cut += 1
    observed = np.bincount(np.minimum(arr, cut), minlength=cut + 1).astype(float)
    expected = np.array([pmf(k) * n for k in range(cut)] + [tail * n])
    res = sps.chisquare(observed, expected)
    return float(res.statistic), float(res.pvalue)


def loglog_slope(checkpoints) -> float:
    """Least-squares slope of log(value) against log(horizon).

    ``checkpoints`` is a sequence of (horizon, value) pairs with
    positive entries.
    """
    pts = [(float(t), float(v)) for t, v in checkpoints]
    if len(pts) < 2:
        raise InvalidParameterError("need at least two checkpoints")
    if any(t <= 0 or v <= 0 for t, v in pts):
        raise InvalidParameterError("checkpoints must be positive for log fits")
    logs_t = np.log([t for t, _ in pts])
    logs_v = np.log([v for _, v in pts])
    slope, _intercept = np.polyfit(logs_t, logs_v, 1)
    return float(slope)
