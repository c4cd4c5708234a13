"""Bayesian-bootstrap success estimation, runs-to-solution, and summaries.

Per-gauge success counts turn into a success-probability posterior by drawing
Beta(s+1, M-s+1) variates per gauge and combining them with uniform Dirichlet
weights; the across-gauge spread relative to the mean is the chaoticity
measure.  Runs-to-solution asks how many independent runs are needed to see
the ground state at least once with 99% probability; instances that never
succeed stay `unsolved` and order as +infinity in medians and percentiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as rnglib
from .errors import InputError, UndefinedStatisticError

MIN_RESAMPLES = 1000
TTS_TARGET = 0.99
_LOG_MISS = math.log(1.0 - TTS_TARGET)


@dataclass(frozen=True)
class GaugeCounts:
    """Success counts per gauge, all gauges sharing one readout budget M."""

    successes: tuple[int, ...]
    n_reads: int

    def __post_init__(self):
        if len(self.successes) < 1:
            raise InputError("need at least one gauge")
        if self.n_reads < 1:
            raise InputError(f"n_reads must be >= 1, got {self.n_reads}")
        for s in self.successes:
            if not 0 <= s <= self.n_reads:
                raise InputError(f"count {s} outside [0, {self.n_reads}]")

    @property
    def g(self) -> int:
        return len(self.successes)


@dataclass(frozen=True)
class SuccessEstimate:
    mu: float
    sigma: float
    chaoticity: float
    mu_ci: tuple[float, float]
    sigma_ci: tuple[float, float]
    chaoticity_ci: tuple[float, float]
    n_resamples: int


@dataclass(frozen=True)
class TtsResult:
    """Runs needed to hit the ground state at least once with 99% chance.

    ``runs`` is None when the success probability was zero (`unsolved`)."""

    runs: int | None
    p: float

    @property
    def sort_value(self) -> float:
        return math.inf if self.runs is None else float(self.runs)


def bootstrap_success(counts: GaugeCounts, n_resamples: int = 10000,
                      seed: int = 0, transform=None) -> SuccessEstimate:
    """Bootstrap distribution of (mean, std, std/mean) over gauges.

    ``transform`` maps per-gauge success-probability draws elementwise
    before combination (the repetition baseline passes 1-(1-p)^4 here).
    """
    if n_resamples < MIN_RESAMPLES:
        raise InputError(f"n_resamples must be >= {MIN_RESAMPLES}")
    gen = rnglib.stream(seed, "bootstrap")
    s = np.asarray(counts.successes, dtype=np.float64)
    m = float(counts.n_reads)
    b = gen.beta(s + 1.0, m - s + 1.0, size=(n_resamples, counts.g))
    if transform is not None:
        b = np.asarray(transform(b), dtype=np.float64)
        if b.shape != (n_resamples, counts.g) or np.any(b < 0) or np.any(b > 1):
            raise InputError("transform must map probabilities to [0, 1]")
    d = gen.dirichlet(np.ones(counts.g), size=n_resamples)
    mu = (d * b).sum(axis=1)
    if counts.g == 1:  # a single gauge has no spread, exactly
        sigma = np.zeros(n_resamples)
        chaos = np.zeros(n_resamples)
    else:
        sigma = np.sqrt((d * (b - mu[:, None]) ** 2).sum(axis=1))
        chaos = sigma / mu

    def central(v):
        lo, hi = np.percentile(v, [2.5, 97.5])
        return float(lo), float(hi)

    return SuccessEstimate(
        mu=float(mu.mean()),
        sigma=float(sigma.mean()),
        chaoticity=float(chaos.mean()),
        mu_ci=central(mu),
        sigma_ci=central(sigma),
        chaoticity_ci=central(chaos),
        n_resamples=n_resamples,
    )


def tts(p: float) -> TtsResult:
    """Runs-to-solution at the 99% target; p=0 is `unsolved`."""
    if not 0.0 <= p <= 1.0:
        raise InputError(f"probability {p} outside [0, 1]")
    if p == 0.0:
        return TtsResult(runs=None, p=p)
    if p >= TTS_TARGET:
        return TtsResult(runs=1, p=p)
    return TtsResult(runs=max(1, math.ceil(_LOG_MISS / math.log(1.0 - p))), p=p)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise InputError("need two equal-length sequences of >= 2 values")
    dx = x - x.mean()
    dy = y - y.mean()
    vx = (dx ** 2).sum()
    vy = (dy ** 2).sum()
    if vx == 0.0 or vy == 0.0:
        raise UndefinedStatisticError("correlation undefined at zero variance")
    return float((dx * dy).sum() / math.sqrt(vx * vy))


def _as_sortable(values) -> np.ndarray:
    out = np.array(
        [math.inf if v is None else float(v) for v in values], dtype=np.float64
    )
    if out.size == 0:
        raise InputError("empty value list")
    return out


def median_ci(values, n_resamples: int = 2000, seed: int = 0):
    """(median, (lo, hi)) with a standard bootstrap over entries.

    `unsolved` (None) entries sort as +infinity; a median that lands at
    +infinity is itself `unsolved` and comes back as (None, (None, None)).
    """
    arr = _as_sortable(values)
    # inf - inf inside the median/percentile interpolation is an expected
    # encounter with the unsolved boundary, not a numerical error; any
    # non-finite result means the quantity lies in unsolved territory.
    with np.errstate(invalid="ignore"):
        med = float(np.median(arr))
        if not math.isfinite(med):
            return None, (None, None)
        gen = rnglib.stream(seed, "median")
        idx = gen.integers(arr.size, size=(n_resamples, arr.size))
        meds = np.median(arr[idx], axis=1)
        lo, hi = np.percentile(meds, [2.5, 97.5])
    lo = None if not math.isfinite(lo) else float(lo)
    hi = None if not math.isfinite(hi) else float(hi)
    return med, (lo, hi)


def percentile(values, p) -> float | None:
    """Nearest-rank percentile; None when the rank falls on `unsolved`."""
    if not isinstance(p, (int, np.integer)) or not 10 <= int(p) <= 90:
        raise InputError(f"percentile must be an integer in [10, 90], got {p}")
    arr = np.sort(_as_sortable(values))
    rank = math.ceil(int(p) / 100.0 * arr.size)
    v = arr[max(0, rank - 1)]
    return None if math.isinf(v) else float(v)
