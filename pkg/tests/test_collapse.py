"""Tests for trial scaling forms, collapse fitting, and bound curves.

The high-precision oracle for the closed-form curves is mpmath; fits are
checked against planted data generated by the forms themselves.
"""

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qaclab import collapse as cl
from qaclab.errors import FitFailureError, InputError, RangeError

# Pinned reference parameter sets used by the planted-recovery fixtures.
ENCODED_REF = (0.392, 0.069, 0.486, 1.73)
BASELINE_REF = (8.01, 0.134, 1.61, 2.12)
ETA_GRID = (0.0, 0.03, 0.05, 0.07, 0.10, 0.15)
ENCODED_SIZES = tuple(range(2, 17))
BASELINE_SIZES = tuple(range(2, 13))


def planted_rows(params, sizes, *, form="g1", mode="raw", etas=ETA_GRID):
    trial = cl.TrialForm(form=form, params=params, mode=mode)
    return [(L, eta, cl.eval_trial(trial, L, eta)) for L in sizes for eta in etas]


def mp_power_curve(params, L, eta):
    """Independent high-precision evaluation of the 4-parameter curve."""
    mp.mp.dps = 40
    a, b, c, d = (mp.mpf(repr(p)) for p in params)
    expo = a * (mp.mpf(repr(eta)) ** 2 + b ** 2) ** c * mp.mpf(L) ** d
    return mp.mpf(10) ** expo


# ---------------------------------------------------------------------------
# trial forms and evaluation


def test_form_validation():
    with pytest.raises(InputError):
        cl.TrialForm(form="g9", params=(1.0, 1.0, 1.0, 1.0))
    with pytest.raises(InputError):
        cl.TrialForm(form="g1", params=(1.0, 1.0, 1.0))
    with pytest.raises(InputError):
        cl.TrialForm(form="g2", params=(1.0, 1.0, 1.0, 1.0))
    with pytest.raises(InputError):
        cl.TrialForm(form="g1", params=(1.0, math.nan, 1.0, 1.0))
    with pytest.raises(InputError):
        cl.TrialForm(form="g1", params=(1.0, 1.0, 1.0, 1.0), mode="positive")


def test_reference_curves_match_high_precision():
    trial_q = cl.TrialForm(form="g1", params=ENCODED_REF)
    trial_c = cl.TrialForm(form="g1", params=BASELINE_REF)
    for params, trial in ((ENCODED_REF, trial_q), (BASELINE_REF, trial_c)):
        for L, eta in ((1, 0.0), (4, 0.05), (8, 0.10), (12, 0.15)):
            got = cl.eval_trial(trial, L, eta)
            want = float(mp_power_curve(params, L, eta))
            assert got == pytest.approx(want, rel=1e-10), (params, L, eta)


def test_reference_point_value():
    # encoded reference curve at (L=8, eta=0.10): exponent ~1.8443, value ~69.86
    trial = cl.TrialForm(form="g1", params=ENCODED_REF)
    assert cl.eval_trial(trial, 8, 0.10) == pytest.approx(69.8649631077937, rel=1e-10)
    assert math.log10(cl.eval_trial(trial, 8, 0.10)) == pytest.approx(
        1.8442594340609469, abs=1e-10
    )


def test_zero_amplitude_gives_unit_tts():
    trial = cl.TrialForm(form="g1", params=(0.0, 0.1, 0.5, 2.0))
    assert cl.eval_trial(trial, 7, 0.12) == 1.0


def test_squared_mode_squares_every_parameter():
    raw = cl.TrialForm(form="g1", params=(4.0, 9.0, 0.25, 1.44))
    squared = cl.TrialForm(form="g1", params=(2.0, 3.0, 0.5, 1.2), mode="squared")
    assert squared.effective == (4.0, 9.0, 0.25, 1.44)
    assert squared.named() == raw.named()
    for L, eta in ((2, 0.0), (5, 0.07)):
        assert cl.eval_trial(squared, L, eta) == pytest.approx(
            cl.eval_trial(raw, L, eta), rel=1e-14
        )


def test_offset_form_reduces_to_power_form():
    base = cl.TrialForm(form="g1", params=(0.3, 0.08, 0.6, 1.5))
    unit = cl.TrialForm(form="g2", params=(0.3, 0.08, 0.6, 1.5, 1.0))
    tenfold = cl.TrialForm(form="g2", params=(0.3, 0.08, 0.6, 1.5, 10.0))
    for L, eta in ((2, 0.0), (6, 0.1), (11, 0.15)):
        v = cl.eval_trial(base, L, eta)
        assert cl.eval_trial(unit, L, eta) == pytest.approx(v, rel=1e-12)
        assert cl.eval_trial(tenfold, L, eta) == pytest.approx(10 * v, rel=1e-12)


def test_mixed_form_exponent_wiring():
    # variant a: both inner exponents fixed, the d slot is inert
    pa = (0.05, 0.1, 0.3, 1.0, 2.0)
    pa2 = (0.05, 0.1, 0.3, 9.9, 2.0)
    ta, ta2 = (cl.TrialForm(form="g3a", params=p) for p in (pa, pa2))
    assert cl.eval_trial(ta, 5, 0.1) == cl.eval_trial(ta2, 5, 0.1)
    # closed-form check of variant a
    a, b, c, _, e = pa
    L, eta = 5, 0.1
    expo = a * L + c * math.sqrt(eta**2 + b**2) * L**2 + math.log10(e * L**2)
    assert cl.eval_trial(ta, L, eta) == pytest.approx(10**expo, rel=1e-12)
    # variant b: d drives the noise exponent (matters only when eta varies)
    tb, tb2 = (
        cl.TrialForm(form="g3b", params=(0.05, 0.1, 0.3, d, 2.0)) for d in (0.5, 1.5)
    )
    assert cl.eval_trial(tb, 5, 0.0) != cl.eval_trial(tb2, 5, 0.0)  # b^2 base
    assert cl.eval_trial(tb, 5, 0.1) != cl.eval_trial(tb2, 5, 0.1)
    # variant c: d drives the size exponent of the noise term
    tc, tc2 = (
        cl.TrialForm(form="g3c", params=(0.05, 0.1, 0.3, d, 2.0)) for d in (1.0, 3.0)
    )
    assert cl.eval_trial(tc, 1, 0.1) == pytest.approx(
        cl.eval_trial(tc2, 1, 0.1), rel=1e-12
    )  # L = 1 hides the size exponent
    assert cl.eval_trial(tc, 4, 0.1) != cl.eval_trial(tc2, 4, 0.1)


def test_offset_forms_reject_nonpositive_offset_via_infinite_cost():
    bad = cl.TrialForm(form="g2", params=(0.3, 0.08, 0.6, 1.5, -1.0))
    assert cl.eval_trial(bad, 4, 0.1) == math.inf


def test_eval_rejects_bad_domain():
    trial = cl.TrialForm(form="g1", params=(0.3, 0.08, 0.6, 1.5))
    with pytest.raises(InputError):
        cl.eval_trial(trial, 0, 0.1)
    with pytest.raises(InputError):
        cl.eval_trial(trial, 3, -0.01)


@settings(max_examples=60, deadline=None)
@given(
    a=st.floats(0.01, 0.5),
    b=st.floats(0.01, 0.4),
    c=st.floats(0.1, 2.0),
    d=st.floats(0.1, 2.0),
)
def test_power_curve_monotone_in_size_and_noise(a, b, c, d):
    trial = cl.TrialForm(form="g1", params=(a, b, c, d))
    values_l = [cl.eval_trial(trial, L, 0.08) for L in (1, 2, 3, 5)]
    assert all(x < y for x, y in zip(values_l, values_l[1:]))
    values_eta = [cl.eval_trial(trial, 3, eta) for eta in (0.0, 0.05, 0.1, 0.15)]
    assert all(x < y for x, y in zip(values_eta, values_eta[1:]))


# ---------------------------------------------------------------------------
# collapse fitting


def test_planted_recovery_exact_encoded():
    rows = planted_rows(ENCODED_REF, ENCODED_SIZES)
    fit = cl.fit_collapse(rows, form="g1", mode="squared", seed=3)
    assert fit.residual < 1e-8
    named = fit.trial.named()
    for key, want in zip("abcd", ENCODED_REF):
        assert named[key] == pytest.approx(want, abs=1e-6), key
    assert fit.n_points == len(rows)
    assert fit.n_excluded == 0


def test_planted_recovery_exact_baseline_raw_mode():
    rows = planted_rows(BASELINE_REF, BASELINE_SIZES)
    fit = cl.fit_collapse(rows, form="g1", mode="raw", seed=3)
    assert fit.residual < 1e-8
    assert fit.d == pytest.approx(2.12, abs=1e-6)


def test_fit_deterministic_and_permutation_invariant():
    rows = planted_rows(ENCODED_REF, (2, 3, 4, 6, 8))
    fit_a = cl.fit_collapse(rows, form="g1", mode="squared", n_restarts=8, seed=11)
    fit_b = cl.fit_collapse(rows, form="g1", mode="squared", n_restarts=8, seed=11)
    assert fit_a.trial.params == fit_b.trial.params
    assert fit_a.residual == fit_b.residual
    shuffled = list(reversed(rows))
    fit_c = cl.fit_collapse(shuffled, form="g1", mode="squared", n_restarts=8, seed=11)
    assert fit_c.trial.params == fit_a.trial.params
    assert fit_c.data_digest == fit_a.data_digest


def test_effective_size_substitution_equivalence():
    sizes = (2, 3, 4, 6, 8)
    mapping = {L: L - 0.3 for L in sizes}
    rows = planted_rows(ENCODED_REF, sizes)
    substituted = [(mapping[L], eta, r) for (L, eta, r) in rows]
    fit_map = cl.fit_collapse(
        rows, form="g1", mode="squared", n_restarts=8, seed=2, l_values=mapping
    )
    fit_direct = cl.fit_collapse(substituted, form="g1", mode="squared", n_restarts=8, seed=2)
    assert fit_map.trial.params == fit_direct.trial.params
    assert fit_map.data_digest == fit_direct.data_digest


def test_unsolved_rows_drop_out():
    rows = planted_rows(ENCODED_REF, (2, 3, 4, 6, 8))
    rows[4] = (rows[4][0], rows[4][1], None)
    rows[17] = (rows[17][0], rows[17][1], None)
    fit = cl.fit_collapse(rows, form="g1", mode="squared", n_restarts=8, seed=4)
    assert fit.n_excluded == 2
    assert fit.n_points == len(rows) - 2
    assert fit.d == pytest.approx(1.73, abs=1e-4)


def test_nonpositive_medians_drop_out_bad_sizes_raise():
    rows = planted_rows(ENCODED_REF, (2, 3, 4, 6, 8))
    rows[0] = (rows[0][0], rows[0][1], 0.0)
    fit = cl.fit_collapse(rows, form="g1", mode="squared", n_restarts=4, seed=4)
    assert fit.n_excluded == 1
    with pytest.raises(InputError):
        cl.fit_collapse([(0, 0.05, 10.0)] * 8, form="g1")


def test_insufficient_points_rejected():
    rows = planted_rows(ENCODED_REF, (2,), etas=(0.0, 0.05, 0.1, 0.15, 0.07))
    with pytest.raises(InputError):
        cl.fit_collapse(rows, form="g1")


def test_noise_trial_keeps_size_exponent():
    rows = planted_rows(ENCODED_REF, ENCODED_SIZES)
    gen = np.random.default_rng(1000)
    noisy = [
        (L, eta, r * math.exp(0.05 * gen.standard_normal())) for (L, eta, r) in rows
    ]
    fit = cl.fit_collapse(noisy, form="g1", mode="squared", n_restarts=8, seed=0)
    assert abs(fit.d - 1.73) <= 0.1


def test_mixed_form_raw_mode_rejects_negative_linear_term():
    hostile = cl.TrialForm(form="g3a", params=(-0.4, 0.1, 0.3, 1.0, 2.0))
    rows = [
        (L, eta, cl.eval_trial(hostile, L, eta))
        for L in range(2, 9)
        for eta in ETA_GRID
    ]
    with pytest.raises(FitFailureError):
        cl.fit_collapse(rows, form="g3a", mode="raw", n_restarts=1, seed=0)
    # the squared re-parameterization always yields an admissible linear term
    fit = cl.fit_collapse(rows, form="g3a", mode="squared", n_restarts=4, seed=0)
    assert fit.trial.named()["a"] >= 0


def test_mixed_form_planted_recovery():
    planted = cl.TrialForm(form="g3b", params=(0.05, 0.1, 0.3, 0.8, 2.0))
    rows = [
        (L, eta, cl.eval_trial(planted, L, eta))
        for L in range(2, 11)
        for eta in ETA_GRID
    ]
    fit = cl.fit_collapse(rows, form="g3b", mode="squared", n_restarts=16, seed=5)
    named = fit.trial.named()
    assert named["d"] == pytest.approx(0.8, abs=1e-4)
    assert fit.residual < 1e-8


# ---------------------------------------------------------------------------
# d bounds


def test_d_bounds_degenerate_ci_recovers_point():
    rows = planted_rows(ENCODED_REF, ENCODED_SIZES)
    base = cl.fit_collapse(rows, form="g1", mode="squared", seed=3)
    ci = [(L, eta, r, r) for (L, eta, r) in rows]
    bounds = cl.fit_d_bounds(ci, base, n_resamples=200, seed=0)
    assert bounds.d_minus == pytest.approx(1.73, abs=1e-6)
    assert bounds.d_plus == pytest.approx(1.73, abs=1e-6)
    assert bounds.delta_minus < 1e-6
    assert bounds.delta_plus < 1e-6
    lo, hi = bounds.d_range
    # degenerate CI collapses the range to a point at the planted value
    assert lo <= 1.73 + 1e-6 and hi >= 1.73 - 1e-6


def test_d_bounds_widen_with_ci_spread():
    rows = planted_rows(ENCODED_REF, ENCODED_SIZES)
    base = cl.fit_collapse(rows, form="g1", mode="squared", seed=3)
    ci = [(L, eta, r / 1.26, r * 1.26) for (L, eta, r) in rows]
    bounds = cl.fit_d_bounds(ci, base, n_resamples=200, seed=0)
    assert bounds.d_minus < base.d < bounds.d_plus
    lo, hi = bounds.d_range
    assert lo <= bounds.d_minus and hi >= bounds.d_plus
    assert lo <= 1.73 <= hi


def test_d_bounds_need_enough_rows():
    rows = planted_rows(ENCODED_REF, ENCODED_SIZES)
    base = cl.fit_collapse(rows, form="g1", mode="squared", n_restarts=4, seed=3)
    with pytest.raises(InputError):
        cl.fit_d_bounds([(2, 0.0, 1.0, 2.0), (3, 0.0, 1.0, 2.0)], base)


# ---------------------------------------------------------------------------
# bound curves and speedup


def test_cost_curve_fixtures():
    assert cl.classical_bound(1, 0.0) == pytest.approx(math.log10(16.0), rel=1e-12)
    assert cl.classical_bound(2, 0.0) == pytest.approx(math.log10(4 * 256.0), rel=1e-12)
    curve = [cl.classical_bound(4, eta, 0.5) for eta in (0.0, 0.05, 0.1, 0.2)]
    assert all(x < y for x, y in zip(curve, curve[1:]))
    # the exhaustive-guess variant adds one bit per spin, default 2 L^2 spins
    delta = cl.classical_bound(2, 0.0, random_guess=True) - cl.classical_bound(2, 0.0)
    assert delta == pytest.approx(8 * math.log10(2.0), rel=1e-12)
    delta32 = cl.classical_bound(2, 0.0, random_guess=True, n_spins=32) - cl.classical_bound(2, 0.0)
    assert delta32 == pytest.approx(32 * math.log10(2.0), rel=1e-12)


def test_cost_curve_validation():
    with pytest.raises(RangeError):
        cl.classical_bound(0, 0.1)
    with pytest.raises(RangeError):
        cl.classical_bound(2, -0.1)
    with pytest.raises(RangeError):
        cl.classical_bound(2, 0.1, 0.0)
    with pytest.raises(RangeError):
        cl.classical_bound(2, 0.1, 1.5)


def test_cost_curve_dominates_encoded_projection():
    # at the largest grid size and strongest noise the exact-solver cost curve
    # must sit far above the fitted encoded-strategy projection
    trial = cl.TrialForm(form="g1", params=ENCODED_REF)
    projected = math.log10(cl.eval_trial(trial, 16, 0.15))
    bound = cl.classical_bound(16, 0.15, 1.0)
    assert bound > projected + 100


def test_speedup_fixtures():
    keys = [(2, 0.0), (2, 0.1), (3, 0.0)]
    same = {k: 50.0 for k in keys}
    ratios, omitted = cl.speedup_ratio(same, dict(same))
    assert omitted == 0
    assert all(v == 1.0 for v in ratios.values())
    ratios, omitted = cl.speedup_ratio({(2, 0.0): 100.0}, {(2, 0.0): 10.0})
    assert ratios[(2, 0.0)] == pytest.approx(10.0)
    ratios, omitted = cl.speedup_ratio(
        {(2, 0.0): 100.0, (3, 0.0): None}, {(2, 0.0): 10.0, (3, 0.0): 5.0}
    )
    assert omitted == 1 and list(ratios) == [(2, 0.0)]
    with pytest.raises(InputError):
        cl.speedup_ratio({(2, 0.0): 1.0}, {(3, 0.0): 1.0})


def test_speedup_grows_when_baseline_scales_faster():
    trial_c = cl.TrialForm(form="g1", params=BASELINE_REF)
    trial_q = cl.TrialForm(form="g1", params=ENCODED_REF)
    # at strong noise the baseline's steeper size exponent dominates early;
    # at weaker noise its smaller prefactor delays the crossover to L ~ 37
    sizes = range(2, 9)
    base = {(L, 0.15): cl.eval_trial(trial_c, L, 0.15) for L in sizes}
    enc = {(L, 0.15): cl.eval_trial(trial_q, L, 0.15) for L in sizes}
    ratios, omitted = cl.speedup_ratio(base, enc)
    assert omitted == 0
    series = [ratios[(L, 0.15)] for L in sizes]
    assert all(x < y for x, y in zip(series, series[1:]))


def test_fit_report_contents(tmp_path):
    rows = planted_rows(ENCODED_REF, (2, 3, 4, 6, 8))
    fit = cl.fit_collapse(rows, form="g1", mode="squared", n_restarts=8, seed=3)
    ci = [(L, eta, r / 1.1, r * 1.1) for (L, eta, r) in rows]
    bounds = cl.fit_d_bounds(ci, fit, n_resamples=50, seed=0)
    path = tmp_path / "fit.txt"
    cl.write_fit_report(fit, path, bounds=bounds)
    text = path.read_text()
    assert "form=g1" in text
    assert "mode=squared" in text
    assert f"data_digest={fit.data_digest}" in text
    assert "d_range=[" in text
    for name in "abcd":
        assert f"{name}=" in text
