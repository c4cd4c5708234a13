"""Acceptance gate: ten criteria, one printed pass/fail line each.

Run with ``pytest -s tests/test_acceptance.py`` to watch the lines appear.
The battery is dominated by the full-pipeline criterion (A9, roughly ten to
fifteen minutes on one core); everything else finishes in about three.
All seeds and tolerances are pinned so the verdicts are reproducible.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats as sps

from qaclab import chimera, collapse as coll, harness, instances, qac, solvers
from qaclab import rng as rnglib
from qaclab import stats
from qaclab.config import ExperimentConfig


def _report(name, ok, detail):
    print(f"\n[{name}] {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# A1: the exact frontier solver agrees with exhaustive enumeration
# ---------------------------------------------------------------------------

def test_a1_exact_solver_matches_brute_force():
    t0 = time.time()
    n_trials = 100
    mismatches = 0
    for trial in range(n_trials):
        gen = rnglib.stream(424242, "a1", trial)
        n_active = int(gen.integers(8, 21))
        keep = set(int(q) for q in gen.choice(32, size=n_active, replace=False))
        g = chimera.build_chimera(2, holes=tuple(q for q in range(32)
                                                  if q not in keep))
        inst = instances.generate_instance(g, rnglib.child_seed(424242, "a1i",
                                                                trial))
        c_dp = solvers.solve_dp_exact(inst)
        c_bf = solvers.brute_force(inst)
        if c_dp.energy_scaled != c_bf.energy_scaled:
            mismatches += 1
    _report("A1", mismatches == 0,
            f"{n_trials} masked instances (8-20 active spins), "
            f"{mismatches} integer-energy mismatches, "
            f"{time.time() - t0:.1f}s")


# ---------------------------------------------------------------------------
# A2: the stochastic solver reaches the certified ground energy
# ---------------------------------------------------------------------------

def test_a2_pticm_reaches_certified_energies():
    t0 = time.time()
    agree = total = 0
    for L in (1, 2, 3, 4):
        g = chimera.build_chimera(L)
        lg = chimera.build_logical_graph(g)
        for k in range(25):
            inst = instances.generate_instance(
                lg, rnglib.child_seed(22, "a2", L, k))
            cert = solvers.solve_dp_exact(inst)
            pt, _ = solvers.solve_pticm(
                inst, n_temps=12, sweeps=600,
                seed=rnglib.child_seed(22, "a2pt", L, k))
            total += 1
            agree += int(pt.energy_scaled == cert.energy_scaled)
    _report("A2", agree >= 99,
            f"replica exchange matched the exact energy on {agree}/{total} "
            f"instances across sizes 1-4, {time.time() - t0:.1f}s")


# ---------------------------------------------------------------------------
# A3: control noise destabilizes ground states, increasingly so with size
# ---------------------------------------------------------------------------

def test_a3_noise_destabilizes_ground_states():
    t0 = time.time()
    seed = 1303
    etas = (0.03, 0.05, 0.10, 0.15)
    pooled_eta, pooled_overlap = [], []
    mono_ok = True
    frac_lines = []
    for L in (2, 3, 4):
        g = chimera.build_chimera(L)
        lg = chimera.build_logical_graph(g)
        inst = instances.generate_instance(
            lg, rnglib.child_seed(seed, "a3inst", L))
        cert = solvers.solve_dp_exact(inst)
        fracs = []
        for eta in etas:
            fails = 0
            for i in range(50):
                draw = instances.draw_noise(
                    inst, eta, rnglib.child_seed(seed, "a3noise", L, eta, i))
                pert, _ = instances.apply_noise(inst, draw)
                cp = solvers.solve_dp_exact(pert)
                if instances.energy_scaled(inst, cp.witness) > cert.energy_scaled:
                    fails += 1
                overlap = abs(float(np.dot(cp.witness, cert.witness)))
                pooled_eta.append(eta)
                pooled_overlap.append(overlap / cert.witness.size)
            fracs.append(fails / 50.0)
        mono_ok = mono_ok and all(
            fracs[i] <= fracs[i + 1] for i in range(len(fracs) - 1))
        frac_lines.append(f"L={L}:{fracs}")
    rho, p = sps.spearmanr(pooled_eta, pooled_overlap)
    ok = mono_ok and rho < 0 and p < 0.05
    _report("A3", ok,
            f"fail fractions rise with noise ({'; '.join(frac_lines)}); "
            f"overlap vs noise spearman rho={rho:.3f} p={p:.2e}, "
            f"{time.time() - t0:.1f}s")


# ---------------------------------------------------------------------------
# A4: copy-averaging suppresses coupler noise by 1/sqrt(3)
# ---------------------------------------------------------------------------

def test_a4_triple_copy_noise_suppression():
    t0 = time.time()
    g = chimera.build_chimera(1)
    lg = chimera.build_logical_graph(g)
    inst = instances.generate_instance(lg, 99)
    enc = qac.encode(inst, lg, 0.3)
    pen = set(enc.penalty_couplers)
    copies = [e for e in enc.physical.J if e not in pen]
    assert len(copies) == 3  # one logical coupler backed by three
    eta = 0.1
    n_draws = 100_000
    means = np.empty(n_draws)
    for i in range(n_draws):
        draw = instances.draw_noise(enc.physical, eta, 505_000 + i)
        means[i] = sum(draw.delta_J[e] for e in copies) / 3.0
    got = float(means.std())
    want = eta / math.sqrt(3.0)
    rel = abs(got - want) / want
    _report("A4", rel <= 0.05,
            f"std of 3-copy mean over {n_draws} draws = {got:.5f} "
            f"vs eta/sqrt(3) = {want:.5f} (rel {rel:.4f}), "
            f"{time.time() - t0:.1f}s")


# ---------------------------------------------------------------------------
# A5: repetitions-to-target values at the three pinned probabilities
# ---------------------------------------------------------------------------

def test_a5_repetition_counts():
    got = tuple(stats.tts(p).runs for p in (0.99, 0.5, 0.01))
    _report("A5", got == (1, 7, 459),
            f"tts(0.99, 0.5, 0.01) = {got}, expected (1, 7, 459)")


# ---------------------------------------------------------------------------
# A6: bootstrap success statistics at a pinned fixture
# ---------------------------------------------------------------------------

def test_a6_bootstrap_fixture():
    t0 = time.time()
    counts = stats.GaugeCounts(successes=(9000,) * 5, n_reads=10_000)
    est = stats.bootstrap_success(counts, n_resamples=10_000, seed=606)
    ok = 0.895 <= est.mu <= 0.905 and est.chaoticity < 0.02
    _report("A6", ok,
            f"mu={est.mu:.5f} (want [0.895, 0.905]), "
            f"chaoticity={est.chaoticity:.5f} (want < 0.02), "
            f"{time.time() - t0:.1f}s")


# ---------------------------------------------------------------------------
# A7: the scaling fit recovers planted exponents under noise, and the
#     exponent ranges separate the two strategies
# ---------------------------------------------------------------------------

A7_ENCODED = (0.392, 0.069, 0.486, 1.73)
A7_BASELINE = (8.01, 0.134, 1.61, 2.12)
A7_ETAS = (0.0, 0.03, 0.05, 0.07, 0.10, 0.15)


def _a7_planted(params, sizes):
    a, b, c, d = params
    return [(L, eta, 10.0 ** (a * (eta * eta + b * b) ** c * L ** d))
            for L in sizes for eta in A7_ETAS]


def test_a7_fit_recovery_and_exponent_separation():
    t0 = time.time()
    details = []
    ok = True
    specs = (("encoded", A7_ENCODED, range(2, 17)),
             ("baseline", A7_BASELINE, range(2, 13)))

    for name, params, sizes in specs:
        rows = _a7_planted(params, sizes)
        hits = 0
        for trial in range(100):
            gen = rnglib.stream(909, "a7", name, trial)
            noisy = [(L, eta, v * float(gen.lognormal(0.0, 0.05)))
                     for (L, eta, v) in rows]
            fit = coll.fit_collapse(
                noisy, form="g1", mode="squared", n_restarts=8,
                seed=rnglib.child_seed(909, "fit", name, trial))
            if abs(fit.trial.named()["d"] - params[3]) <= 0.1:
                hits += 1
        ok = ok and hits >= 95
        details.append(f"{name} d within 0.1 in {hits}/100 noisy refits")

    for name, params, sizes, side in (
        ("encoded", A7_ENCODED, range(2, 17), "below"),
        ("baseline", A7_BASELINE, range(2, 13), "above"),
    ):
        rows = _a7_planted(params, sizes)
        fit = coll.fit_collapse(rows, form="g1", mode="squared",
                                n_restarts=8, seed=707)
        ci = [(L, eta, v / 10 ** 0.1, v * 10 ** 0.1) for (L, eta, v) in rows]
        bounds = coll.fit_d_bounds(ci, fit, n_resamples=500, seed=808)
        if side == "below":
            ok = ok and bounds.d_plus < 2.0
        else:
            ok = ok and bounds.d_minus > 2.0
        details.append(f"{name} d range [{bounds.d_minus:.3f}, "
                       f"{bounds.d_plus:.3f}] {side} 2")
    _report("A7", ok, "; ".join(details) + f", {time.time() - t0:.0f}s")


# ---------------------------------------------------------------------------
# A8: graph size bookkeeping in closed form
# ---------------------------------------------------------------------------

def test_a8_graph_counts_closed_form():
    t0 = time.time()
    ok = True
    for L in range(1, 17):
        g = chimera.build_chimera(L)
        lg = chimera.build_logical_graph(g)
        n_logical = chimera.ideal_logical_coupler_count(L)
        ok = ok and n_logical == L * (3 * L - 2) == len(lg.edges)
        ok = ok and len(g.active_qubits) == 8 * L * L
        ok = ok and len(g.edges()) == 24 * L * L - 8 * L
        ok = ok and abs(chimera.effective_L(n_logical) - L) < 1e-12
    _report("A8", ok,
            "sizes 1-16: logical couplers = L(3L-2), qubits = 8L^2, "
            f"physical couplers = 24L^2-8L, size round-trip exact, "
            f"{time.time() - t0:.1f}s")


# ---------------------------------------------------------------------------
# A9: the full benchmark pipeline end to end
# ---------------------------------------------------------------------------

def test_a9_full_pipeline(tmp_path):
    t0 = time.time()
    out = tmp_path / "bench"
    cfg = ExperimentConfig(
        sizes=(1, 2, 3, 4), etas=(0.0, 0.05, 0.10, 0.15), n_instances=20,
        n_gauges=5, n_reads=200, gammas=(0.1, 0.2, 0.3, 0.4, 0.5),
        backend="sa", backend_options={"sweeps": 250}, seed=2026,
        out_dir=str(out),
    )
    gen = harness.cmd_generate(cfg)
    n_usable = len(cfg.sizes) * cfg.n_instances - len(gen.flagged)
    run = harness.cmd_run(cfg)
    harness.cmd_analyze(out)
    harness.cmd_collapse(out)
    verify = harness.cmd_verify(out, fraction=0.01)

    ws = harness.Workspace(Path(out))
    per_cell = cfg.n_gauges * (1 + len(cfg.gammas))
    want_records = n_usable * len(cfg.etas) * per_cell
    _, srows = harness._read_csv(ws.analysis_dir / "summary.csv")
    summary = dict(srows)

    hard_ok = (
        run.n_completed == want_records
        and summary["records"] == str(want_records)
        and summary["cells_incomplete"] == "0"
        and verify.failures == ()
    )

    header, fit_rows = harness._read_csv(ws.collapse_dir / "fits.csv")
    status_col = header.index("status")
    hard_ok = hard_ok and len(fit_rows) == 4 and all(
        row[status_col] == "ok" for row in fit_rows)

    # trend facts (reported, not asserted: at this reduced scale the gap
    # between the strategies is real but statistically marginal per line)
    header, est = harness._read_csv(ws.analysis_dir / "success_estimates.csv")
    ei, si, mi = header.index("eta"), header.index("strategy"), header.index("mu")
    mus = {"C": [], "QAC": []}
    for row in est:
        if row[ei] == "0.15":
            mus[row[si]].append(float(row[mi]))
    med_c = float(np.median(mus["C"]))
    med_q = float(np.median(mus["QAC"]))

    header, bf = harness._read_csv(ws.analysis_dir / "better_fraction.csv")
    ei = header.index("eta")
    nb, nc = header.index("n_better"), header.index("n_compared")
    pool = {}
    for row in bf:
        b, c = pool.get(row[ei], (0, 0))
        pool[row[ei]] = (b + int(row[nb]), c + int(row[nc]))
    frac = {eta: (b / c if c else float("nan")) for eta, (b, c) in pool.items()}

    _report("A9", hard_ok,
            f"{want_records} records ({len(gen.flagged)} instances flagged), "
            f"verify {verify.n_checked} clean, 4 scaling fits ok; "
            f"trend: median success at noise 0.15 encoded {med_q:.3f} vs "
            f"baseline {med_c:.3f}; encoded-better fraction "
            f"{frac.get('0.0', float('nan')):.2f} at 0.0 -> "
            f"{frac.get('0.15', float('nan')):.2f} at 0.15, "
            f"{(time.time() - t0) / 60:.1f} min")


# ---------------------------------------------------------------------------
# A10: the pipeline is deterministic from the seed alone
# ---------------------------------------------------------------------------

def test_a10_pipeline_determinism(tmp_path):
    t0 = time.time()

    def build(root):
        cfg = ExperimentConfig(
            sizes=(1, 2), etas=(0.0, 0.1), n_instances=5, n_gauges=2,
            n_reads=50, gammas=(0.2, 0.4), backend="sa",
            backend_options={"sweeps": 150}, seed=7, out_dir=str(root),
        )
        harness.cmd_generate(cfg)
        harness.cmd_run(cfg)
        harness.cmd_analyze(root)
        return harness.Workspace(Path(root))

    a = build(tmp_path / "first")
    b = build(tmp_path / "second")
    diffs = []
    for path_a in sorted(a.analysis_dir.iterdir()):
        path_b = b.analysis_dir / path_a.name
        if path_a.read_bytes() != path_b.read_bytes():
            diffs.append(path_a.name)
    for L in (1, 2):
        for k in range(5):
            if a.instance_path(L, k).read_bytes() != b.instance_path(L, k).read_bytes():
                diffs.append(f"instance L{L}/{k}")
    _report("A10", not diffs,
            "two fresh builds from one seed: analysis tables and instance "
            f"files byte-identical (diffs: {diffs or 'none'}), "
            f"{time.time() - t0:.1f}s")
