"""Trial scaling forms, data-collapse fitting, and bound curves.

Median runs-to-solution data over a grid of (size, noise) is modeled as
10^g(L, eta) for a small family of trial exponents:

    g1 = a (eta^2 + b^2)^c L^d
    g2 = g1 + log10(e)
    g3 = a L + c (eta^2 + b^2)^(d1) L^(d2) + log10(e L^2)

with the g3 pair (d1, d2) fixed per variant: (1/2, 2), (d, 2), or (1/2, d).
Fits minimize squared log10 error with a seeded derivative-free simplex and
random restarts; the `squared` positivity mode re-parameterizes every
parameter p -> p^2.  The d-range procedure refits only d against lower /
upper confidence series and widens the result by bootstrap spread.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import rng as rnglib
from .errors import FitFailureError, InputError, RangeError

FORMS = ("g1", "g2", "g3a", "g3b", "g3c")
PARAM_NAMES = {
    "g1": ("a", "b", "c", "d"),
    "g2": ("a", "b", "c", "d", "e"),
    "g3a": ("a", "b", "c", "d", "e"),
    "g3b": ("a", "b", "c", "d", "e"),
    "g3c": ("a", "b", "c", "d", "e"),
}
DEFAULT_RESTARTS = 32
LOG10E = math.log10(math.e)


@dataclass(frozen=True)
class TrialForm:
    form: str
    params: tuple[float, ...]
    mode: str = "raw"  # raw | squared: squared evaluates with p -> p^2

    def __post_init__(self):
        if self.form not in FORMS:
            raise InputError(f"unknown trial form {self.form!r}")
        if self.mode not in ("raw", "squared"):
            raise InputError(f"positivity mode must be raw|squared, got {self.mode!r}")
        want = len(PARAM_NAMES[self.form])
        if len(self.params) != want:
            raise InputError(f"{self.form} takes {want} parameters, got {len(self.params)}")
        if not all(math.isfinite(p) for p in self.params):
            raise InputError("non-finite parameter")

    @property
    def effective(self) -> tuple[float, ...]:
        if self.mode == "squared":
            return tuple(p * p for p in self.params)
        return self.params

    def named(self) -> dict[str, float]:
        return dict(zip(PARAM_NAMES[self.form], self.effective))


def _exponent(form: str, eff, L, eta):
    """log10 of the trial TTS; vectorized over L, eta arrays."""
    L = np.asarray(L, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    if form == "g1":
        a, b, c, d = eff
        return a * (eta ** 2 + b ** 2) ** c * L ** d
    if form == "g2":
        a, b, c, d, e = eff
        if e <= 0:
            return np.full(np.broadcast_shapes(L.shape, eta.shape), np.inf)
        return a * (eta ** 2 + b ** 2) ** c * L ** d + math.log10(e)
    a, b, c, d, e = eff
    if e <= 0:
        return np.full(np.broadcast_shapes(L.shape, eta.shape), np.inf)
    if form == "g3a":
        d1, d2 = 0.5, 2.0
    elif form == "g3b":
        d1, d2 = d, 2.0
    else:  # g3c
        d1, d2 = 0.5, d
    return a * L + c * (eta ** 2 + b ** 2) ** d1 * L ** d2 + np.log10(e * L ** 2)


def eval_trial(trial: TrialForm, L, eta):
    """TTS value 10^g at (L, eta); L > 0 and eta >= 0 required."""
    L_arr = np.asarray(L, dtype=np.float64)
    eta_arr = np.asarray(eta, dtype=np.float64)
    if np.any(L_arr <= 0) or np.any(eta_arr < 0):
        raise InputError("need L > 0 and eta >= 0")
    out = 10.0 ** _exponent(trial.form, trial.effective, L_arr, eta_arr)
    if np.isscalar(L) and np.isscalar(eta):
        return float(out)
    return out


@dataclass(frozen=True)
class ScalingFit:
    trial: TrialForm
    residual: float
    n_points: int
    n_excluded: int
    data_digest: str
    n_restarts: int
    restarts_accepted: int

    @property
    def d(self) -> float:
        return self.trial.named()["d"]


@dataclass(frozen=True)
class DBounds:
    d_minus: float
    delta_minus: float
    d_plus: float
    delta_plus: float

    @property
    def d_range(self) -> tuple[float, float]:
        return (self.d_minus - self.delta_minus, self.d_plus + self.delta_plus)


def _clean_rows(data, l_values):
    rows = []
    dropped = 0
    for L, eta, r in data:
        if r is None:
            dropped += 1
            continue
        r = float(r)
        if not math.isfinite(r) or r <= 0:
            dropped += 1
            continue
        L_fit = float(l_values[L]) if l_values is not None else float(L)
        if L_fit <= 0 or eta < 0:
            raise InputError(f"bad data row (L={L}, eta={eta})")
        rows.append((L_fit, float(eta), math.log10(r)))
    return rows, dropped


def _digest(rows) -> str:
    h = hashlib.sha256()
    for row in sorted(rows):
        h.update(repr(row).encode())
        h.update(b"\n")
    return h.hexdigest()[:16]


def _objective(form, mode, Ls, etas, ys):
    def fn(vec):
        eff = vec * vec if mode == "squared" else vec
        g = _exponent(form, tuple(eff), Ls, etas)
        if not np.all(np.isfinite(g)):
            return np.inf
        delta = g - ys
        # an exploring restart may square past float range; the infinite
        # misfit is the verdict, not an error
        with np.errstate(over="ignore"):
            return float(delta @ delta)

    return fn


def fit_collapse(data, form: str = "g1", *, mode: str = "squared",
                 n_restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                 l_values=None) -> ScalingFit:
    """Least-squares fit of log10(R) to one trial form.

    ``data`` rows are (L, eta, median R); `unsolved` (None) rows drop out.
    ``l_values`` optionally maps each L to a substitute (effective size)
    before fitting.  Under g3 forms in raw mode, restarts that land on a < 0
    are rejected outright.
    """
    if form not in FORMS:
        raise InputError(f"unknown trial form {form!r}")
    if mode not in ("raw", "squared"):
        raise InputError(f"positivity mode must be raw|squared, got {mode!r}")
    names = PARAM_NAMES[form]
    rows, dropped = _clean_rows(data, l_values)
    if len(rows) < len(names) + 2:
        raise InputError(
            f"need at least {len(names) + 2} finite points, have {len(rows)}"
        )
    Ls = np.array([r[0] for r in rows])
    etas = np.array([r[1] for r in rows])
    ys = np.array([r[2] for r in rows])
    fn = _objective(form, mode, Ls, etas, ys)
    gen = rnglib.stream(seed, "fit", form, mode)

    options = {"maxiter": 4000, "xatol": 1e-11, "fatol": 1e-13}
    best = None
    accepted = 0
    for restart in range(n_restarts):
        if restart == 0:
            x0 = np.ones(len(names)) * 0.5
        else:
            x0 = gen.normal(0.0, 1.0, size=len(names)) * gen.uniform(0.2, 3.0)
        res = optimize.minimize(fn, x0, method="Nelder-Mead", options=options)
        vec = res.x
        if form.startswith("g3") and mode == "raw" and vec[0] < 0:
            continue  # only fits with a >= 0 are acceptable for g3
        val = fn(vec)
        if not math.isfinite(val):
            continue
        accepted += 1
        if best is None or val < best[0]:
            best = (val, restart, vec)
    if best is None:
        raise FitFailureError(
            f"no acceptable fit for {form} ({mode}) after {n_restarts} restarts"
        )
    # polish the winner once more from its own optimum
    res = optimize.minimize(fn, best[2], method="Nelder-Mead", options=options)
    if math.isfinite(fn(res.x)) and fn(res.x) < best[0]:
        if not (form.startswith("g3") and mode == "raw" and res.x[0] < 0):
            best = (fn(res.x), best[1], res.x)
    trial = TrialForm(form=form, params=tuple(float(v) for v in best[2]), mode=mode)
    return ScalingFit(
        trial=trial,
        residual=best[0],
        n_points=len(rows),
        n_excluded=dropped,
        data_digest=_digest(rows),
        n_restarts=n_restarts,
        restarts_accepted=accepted,
    )


def _fit_d_only(form, mode, base_eff, Ls, etas, ys):
    """Scalar least squares over d with the other parameters frozen."""
    names = PARAM_NAMES[form]
    d_index = names.index("d")

    def fn(d):
        eff = list(base_eff)
        eff[d_index] = d
        g = _exponent(form, tuple(eff), Ls, etas)
        if not np.all(np.isfinite(g)):
            return np.inf
        delta = g - ys
        return float(delta @ delta)

    res = optimize.minimize_scalar(
        fn, bounds=(1e-3, 10.0), method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.x)


def fit_d_bounds(data_ci, base: ScalingFit, *, n_resamples: int = 2000,
                 seed: int = 0, l_values=None) -> DBounds:
    """d refit against lower/upper confidence series, widened by bootstrap.

    ``data_ci`` rows are (L, eta, R_lower, R_upper); rows with an unsolved
    side are dropped.  All parameters except d stay at the base fit's
    values.  Delta widths are one-sided 95% bootstrap spreads over data
    points, clipped at zero.
    """
    lower, _ = _clean_rows([(L, eta, rl) for L, eta, rl, _ in data_ci], l_values)
    upper, _ = _clean_rows([(L, eta, ru) for L, eta, _, ru in data_ci], l_values)
    if len(lower) < 3 or len(upper) < 3:
        raise InputError("need at least 3 finite rows per bound series")
    form, mode = base.trial.form, base.trial.mode
    base_eff = list(base.trial.effective)

    def series_fit(rows):
        Ls = np.array([r[0] for r in rows])
        etas = np.array([r[1] for r in rows])
        ys = np.array([r[2] for r in rows])
        return _fit_d_only(form, mode, base_eff, Ls, etas, ys)

    d_minus = series_fit(lower)
    d_plus = series_fit(upper)

    gen = rnglib.stream(seed, "dbounds")
    boot_lo = np.empty(n_resamples)
    boot_hi = np.empty(n_resamples)
    lo_arr = np.array(lower)
    hi_arr = np.array(upper)
    for k in range(n_resamples):
        pick = gen.integers(lo_arr.shape[0], size=lo_arr.shape[0])
        rows = [tuple(r) for r in lo_arr[pick]]
        boot_lo[k] = series_fit(rows)
        pick = gen.integers(hi_arr.shape[0], size=hi_arr.shape[0])
        rows = [tuple(r) for r in hi_arr[pick]]
        boot_hi[k] = series_fit(rows)
    delta_minus = max(0.0, d_minus - float(np.percentile(boot_lo, 2.5)))
    delta_plus = max(0.0, float(np.percentile(boot_hi, 97.5)) - d_plus)
    return DBounds(
        d_minus=d_minus, delta_minus=delta_minus,
        d_plus=d_plus, delta_plus=delta_plus,
    )


def classical_bound(L, eta, alpha: float = 1.0, *, random_guess: bool = False,
                    n_spins=None):
    """log10 of the exact-solver cost curve, optionally the random-guess one.

    Cost model: L^2 2^(4L) work scaled by e^(8 eta^alpha L^2) repetitions;
    the random-guess variant multiplies by 2^N over N spins (default 2L^2).
    """
    L_arr = np.asarray(L, dtype=np.float64)
    eta_arr = np.asarray(eta, dtype=np.float64)
    if np.any(L_arr < 1):
        raise RangeError("L must be >= 1")
    if np.any(eta_arr < 0):
        raise RangeError("eta must be >= 0")
    if not 0 < alpha <= 1:
        raise RangeError(f"alpha must be in (0, 1], got {alpha}")
    out = (
        np.log10(L_arr ** 2 * 2.0 ** (4.0 * L_arr))
        + 8.0 * eta_arr ** alpha * L_arr ** 2 * LOG10E
    )
    if random_guess:
        n = 2.0 * L_arr ** 2 if n_spins is None else np.asarray(n_spins, dtype=np.float64)
        out = out + n * math.log10(2.0)
    if np.isscalar(L) and np.isscalar(eta):
        return float(out)
    return out


def speedup_ratio(tts_baseline: dict, tts_encoded: dict):
    """Per-key ratio baseline/encoded; unsolved sides drop out and are counted.

    Keys are (L, eta); values are runs-to-solution or None for unsolved.
    """
    shared = sorted(set(tts_baseline) & set(tts_encoded))
    if not shared:
        raise InputError("no overlapping (L, eta) keys")
    ratios = {}
    omitted = 0
    for key in shared:
        rc, rq = tts_baseline[key], tts_encoded[key]
        if rc is None or rq is None:
            omitted += 1
            continue
        ratios[key] = float(rc) / float(rq)
    return ratios, omitted


def write_fit_report(fit: ScalingFit, path, bounds: DBounds | None = None) -> None:
    lines = [
        f"form={fit.trial.form}",
        f"mode={fit.trial.mode}",
    ]
    for name, value in fit.trial.named().items():
        lines.append(f"{name}={value!r}")
    lines.append(f"residual={fit.residual!r}")
    lines.append(f"points={fit.n_points}")
    lines.append(f"excluded={fit.n_excluded}")
    lines.append(f"restarts={fit.n_restarts}")
    lines.append(f"restarts_accepted={fit.restarts_accepted}")
    lines.append(f"data_digest={fit.data_digest}")
    if bounds is not None:
        lines.append(f"d_minus={bounds.d_minus!r}")
        lines.append(f"delta_minus={bounds.delta_minus!r}")
        lines.append(f"d_plus={bounds.d_plus!r}")
        lines.append(f"delta_plus={bounds.delta_plus!r}")
        lo, hi = bounds.d_range
        lines.append(f"d_range=[{lo!r}, {hi!r}]")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
