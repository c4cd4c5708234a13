"""Experiment pipeline: generation, sampling runs, analysis, fits, checking.

Stages communicate only through files under one output directory:

    config.json                   frozen copy of the configuration
    instances/Lxx/instyyyy.txt    intended logical instances
    certs/Lxx/instyyyy.json       ground certificates (DP, cross-checked)
    noise/...                     persisted noise draws per (instance, eta)
    flagged.json                  instances excluded by oracle disagreement
    records.jsonl                 append-only run record index (one JSON/line)
    archives/...                  per-record readout archives (intended frame)
    analysis/*.csv                tables derived from the record index
    collapse/*                    scaling fits, d-ranges, bound overlays

Every random quantity derives from the config seed and the record identity,
so a rerun in a fresh directory reproduces identical counts and identical
analysis tables (archives differ only in recorded wall times).  The record
index is append-only: completed records are never rewritten, and a second
`run` skips them, which is what makes interrupted runs resumable.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from threading import Lock

import numpy as np

from . import chimera as chim
from . import collapse as coll
from . import instances as inst_mod
from . import qac
from . import rng as rnglib
from . import solvers
from . import stats
from .config import ExperimentConfig, load_config, write_config
from .errors import (
    DependencyError,
    FitFailureError,
    InputError,
    UndefinedStatisticError,
)

STRATEGIES = ("C", "QAC")
XCHECK_TEMPS = 12
XCHECK_SWEEPS = 600
SA_DEFAULTS = {"sweeps": 300, "beta_min": 0.1, "beta_max": 5.0}
PT_DEFAULTS = {"n_temps": 12, "sweeps": 600, "icm_period": 10,
               "beta_min": 0.1, "beta_max": 5.0}


def _ftag(x: float) -> str:
    return repr(float(x))


def _c_combine(p):
    """Success of the 4-copy unencoded strategy given per-copy success."""
    return 1.0 - (1.0 - np.asarray(p, dtype=np.float64)) ** qac.C_STRATEGY_COPIES


# ---------------------------------------------------------------------------
# workspace layout
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Workspace:
    root: Path

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))

    @property
    def config_path(self) -> Path:
        return self.root / "config.json"

    @property
    def records_path(self) -> Path:
        return self.root / "records.jsonl"

    @property
    def flagged_path(self) -> Path:
        return self.root / "flagged.json"

    def instance_path(self, L: int, k: int) -> Path:
        return self.root / "instances" / f"L{L:02d}" / f"inst{k:04d}.txt"

    def cert_path(self, L: int, k: int) -> Path:
        return self.root / "certs" / f"L{L:02d}" / f"inst{k:04d}.json"

    def noise_path(self, L: int, k: int, eta: float, kind: str,
                   gauge: int | None = None) -> Path:
        name = f"eta{_ftag(eta)}.{kind}"
        if gauge is not None:
            name += f".g{gauge}"
        return self.root / "noise" / f"L{L:02d}" / f"inst{k:04d}" / (name + ".json")

    def archive_path(self, ident: "RunIdentity") -> Path:
        gtag = "none" if ident.gamma is None else _ftag(ident.gamma)
        name = (
            f"e{_ftag(ident.eta)}_{ident.strategy}_G{gtag}_g{ident.gauge}.txt.gz"
        )
        return (
            self.root / "archives" / f"L{ident.L:02d}" / f"inst{ident.instance:04d}"
            / name
        )

    @property
    def analysis_dir(self) -> Path:
        return self.root / "analysis"

    @property
    def collapse_dir(self) -> Path:
        return self.root / "collapse"

    def ensure_layout(self) -> None:
        for sub in ("instances", "certs", "noise", "archives", "analysis",
                    "collapse"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)


def _freeze_config(ws: Workspace, config: ExperimentConfig) -> None:
    """Write the config once; later stages must present the same one."""
    if ws.config_path.exists():
        stored = load_config(ws.config_path)
        # The output path is the workspace's own address, so a relocated
        # (copied) workspace is still the same experiment.
        if stored.with_overrides(out_dir=config.out_dir) != config:
            raise InputError(
                f"{ws.config_path} holds a different configuration; "
                "use a fresh output directory or the stored config"
            )
        return
    ws.root.mkdir(parents=True, exist_ok=True)
    write_config(config, ws.config_path)


def _stored_config(out_dir) -> tuple[Workspace, ExperimentConfig]:
    ws = Workspace(Path(out_dir))
    if not ws.config_path.exists():
        raise DependencyError(f"no config.json under {ws.root}; run generate first")
    return ws, load_config(ws.config_path)


# ---------------------------------------------------------------------------
# run records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunIdentity:
    L: int
    instance: int
    eta: float
    gamma: float | None  # None marks the unencoded strategy
    strategy: str
    gauge: int
    seed: int

    def key(self):
        return (self.L, self.instance, self.eta, self.gamma, self.strategy,
                self.gauge)


@dataclass(frozen=True)
class RunRecord:
    identity: RunIdentity
    status: str
    successes: int
    n_reads: int
    tie_breaks: int
    truncated: int
    archive: str  # path relative to the workspace root
    sha256: str

    def to_json(self) -> str:
        d = {
            "L": self.identity.L,
            "instance": self.identity.instance,
            "eta": self.identity.eta,
            "gamma": self.identity.gamma,
            "strategy": self.identity.strategy,
            "gauge": self.identity.gauge,
            "seed": self.identity.seed,
            "status": self.status,
            "successes": self.successes,
            "n_reads": self.n_reads,
            "tie_breaks": self.tie_breaks,
            "truncated": self.truncated,
            "archive": self.archive,
            "sha256": self.sha256,
        }
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        ident = RunIdentity(
            L=int(d["L"]), instance=int(d["instance"]), eta=float(d["eta"]),
            gamma=None if d["gamma"] is None else float(d["gamma"]),
            strategy=str(d["strategy"]), gauge=int(d["gauge"]),
            seed=int(d["seed"]),
        )
        return cls(
            identity=ident, status=str(d["status"]),
            successes=int(d["successes"]), n_reads=int(d["n_reads"]),
            tie_breaks=int(d["tie_breaks"]), truncated=int(d["truncated"]),
            archive=str(d["archive"]), sha256=str(d["sha256"]),
        )


def load_records(ws: Workspace) -> list[RunRecord]:
    """Read the record index; an interrupted final line is dropped.

    The first record for an identity wins — completed records are immutable.
    """
    if not ws.records_path.exists():
        return []
    records: list[RunRecord] = []
    seen = set()
    with open(ws.records_path) as fh:
        lines = fh.readlines()
    for pos, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError:
            if pos == len(lines) - 1:
                continue  # torn final write from an interrupted run
            raise InputError(f"{ws.records_path}: corrupt record line {pos + 1}")
        rec = RunRecord.from_dict(d)
        if rec.identity.key() in seen:
            continue
        seen.add(rec.identity.key())
        records.append(rec)
    return records


class _RecordWriter:
    """Single appending writer for the record index (thread-safe)."""

    def __init__(self, ws: Workspace):
        self._path = ws.records_path
        self._lock = Lock()
        if self._path.exists():
            with open(self._path, "rb") as fh:
                data = fh.read()
            if data and not data.endswith(b"\n"):
                tail = data[data.rfind(b"\n") + 1:]
                try:
                    json.loads(tail)
                except json.JSONDecodeError:
                    # A torn final write can never be completed; drop it so it
                    # does not linger as a corrupt mid-file line.  The rerun
                    # regenerates the record from its identity-derived seed.
                    with open(self._path, "wb") as fh:
                        fh.write(data[: len(data) - len(tail)])
                else:
                    with open(self._path, "ab") as fh:
                        fh.write(b"\n")

    def append(self, record: RunRecord) -> None:
        with self._lock:
            with open(self._path, "a") as fh:
                fh.write(record.to_json() + "\n")
                fh.flush()
                os.fsync(fh.fileno())


def _load_flagged(ws: Workspace) -> list[dict]:
    if not ws.flagged_path.exists():
        return []
    with open(ws.flagged_path) as fh:
        return json.load(fh)


def _write_flagged(ws: Workspace, flagged: list[dict]) -> None:
    flagged = sorted(flagged, key=lambda d: (d["L"], d["instance"]))
    with open(ws.flagged_path, "w") as fh:
        json.dump(flagged, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GenerateResult:
    n_generated: int
    n_skipped: int
    flagged: tuple[dict, ...]


def _build_graphs(L: int):
    graph = chim.build_chimera(L)
    return graph, chim.build_logical_graph(graph)


def _run_tasks(tasks, threads: int):
    if threads <= 1:
        for fn in tasks:
            fn()
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn) for fn in tasks]
        for f in futures:
            f.result()


def cmd_generate(config: ExperimentConfig, threads: int = 1) -> GenerateResult:
    """Write intended instances and cross-checked ground certificates.

    Each certificate is produced by the exact frontier solver and must agree
    with an independent PT-ICM run; a disagreement flags the instance, which
    is then excluded from runs and reported.
    """
    ws = Workspace(Path(config.out_dir))
    ws.root.mkdir(parents=True, exist_ok=True)
    _freeze_config(ws, config)
    ws.ensure_layout()
    flagged = _load_flagged(ws)
    flagged_keys = {(d["L"], d["instance"]) for d in flagged}
    counters = {"generated": 0, "skipped": 0}
    lock = Lock()

    def make_task(L, lg, k):
        def task():
            cert_path = ws.cert_path(L, k)
            if cert_path.exists() or (L, k) in flagged_keys:
                with lock:
                    counters["skipped"] += 1
                return
            inst = inst_mod.generate_instance(
                lg, rnglib.child_seed(config.seed, "inst", L, k)
            )
            ipath = ws.instance_path(L, k)
            ipath.parent.mkdir(parents=True, exist_ok=True)
            inst_mod.write_instance(inst, ipath)
            cert = solvers.solve_dp_exact(inst)
            pt_cert, _ = solvers.solve_pticm(
                inst, n_temps=XCHECK_TEMPS, sweeps=XCHECK_SWEEPS,
                seed=rnglib.child_seed(config.seed, "xcheck", L, k),
            )
            if pt_cert.energy_scaled != cert.energy_scaled:
                with lock:
                    flagged.append({
                        "L": L, "instance": k,
                        "dp_energy": cert.energy,
                        "pticm_energy": pt_cert.energy,
                    })
                    flagged_keys.add((L, k))
                return
            cert.agreement = {"dp": cert.energy, "pticm": pt_cert.energy}
            cert_path.parent.mkdir(parents=True, exist_ok=True)
            solvers.write_certificate(cert, cert_path)
            with lock:
                counters["generated"] += 1
        return task

    tasks = []
    for L in config.sizes:
        _, lg = _build_graphs(L)
        for k in range(config.n_instances):
            tasks.append(make_task(L, lg, k))
    _run_tasks(tasks, threads)
    _write_flagged(ws, flagged)
    return GenerateResult(
        n_generated=counters["generated"], n_skipped=counters["skipped"],
        flagged=tuple(flagged),
    )


# ---------------------------------------------------------------------------
# sampling runs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunResult:
    n_completed: int
    n_skipped: int
    n_excluded_instances: int


def _backend_sample(config: ExperimentConfig, inst, seed: int, gauge_id: int):
    opts = config.backend_options
    if config.backend == "sa":
        return solvers.solve_sa(
            inst,
            sweeps=int(opts.get("sweeps", SA_DEFAULTS["sweeps"])),
            n_reads=config.n_reads,
            beta_min=float(opts.get("beta_min", SA_DEFAULTS["beta_min"])),
            beta_max=float(opts.get("beta_max", SA_DEFAULTS["beta_max"])),
            seed=seed, gauge_id=gauge_id,
        )
    _, ss = solvers.solve_pticm(
        inst,
        n_temps=int(opts.get("n_temps", PT_DEFAULTS["n_temps"])),
        sweeps=int(opts.get("sweeps", PT_DEFAULTS["sweeps"])),
        icm_period=int(opts.get("icm_period", PT_DEFAULTS["icm_period"])),
        beta_min=float(opts.get("beta_min", PT_DEFAULTS["beta_min"])),
        beta_max=float(opts.get("beta_max", PT_DEFAULTS["beta_max"])),
        seed=seed,
    )
    ss.gauge_id = gauge_id
    return ss


def _noise_file_payload(draw: inst_mod.NoiseDraw, kind: str) -> dict:
    return {
        "eta": draw.eta,
        "seed": draw.seed,
        "kind": kind,
        "truncation_count": draw.truncation_count,
        "delta_j": {f"{i} {j}": v for (i, j), v in sorted(draw.delta_J.items())},
        "delta_h": {str(n): v for n, v in sorted(draw.delta_h.items())},
    }


def _noise_from_payload(d: dict) -> inst_mod.NoiseDraw:
    delta_J = {}
    for key, v in d["delta_j"].items():
        i, j = key.split()
        delta_J[(int(i), int(j))] = float(v)
    delta_h = {int(n): float(v) for n, v in d["delta_h"].items()}
    return inst_mod.NoiseDraw(
        eta=float(d["eta"]), seed=int(d["seed"]), delta_J=delta_J,
        delta_h=delta_h, truncation_count=int(d["truncation_count"]),
    )


def _noise_for(ws: Workspace, config: ExperimentConfig, base_inst, L: int,
               k: int, eta: float, kind: str,
               gauge: int | None) -> inst_mod.NoiseDraw:
    """Load the persisted draw for this identity, drawing it on first use."""
    path = ws.noise_path(L, k, eta, kind, gauge)
    if path.exists():
        with open(path) as fh:
            return _noise_from_payload(json.load(fh))
    tokens = [config.seed, "noise", L, k, eta, kind]
    if gauge is not None:
        tokens.append(gauge)
    draw = inst_mod.draw_noise(base_inst, eta, rnglib.child_seed(*tokens))
    # realize once so the persisted truncation count is filled in
    inst_mod.apply_noise(base_inst, draw)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_noise_file_payload(draw, kind), fh, sort_keys=True)
        fh.write("\n")
    return draw


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_pair(ws: Workspace, lg, L: int, k: int):
    ipath = ws.instance_path(L, k)
    cpath = ws.cert_path(L, k)
    if not ipath.exists():
        raise DependencyError(f"missing instance file {ipath}; run generate")
    if not cpath.exists():
        raise DependencyError(f"missing certificate {cpath}; run generate")
    inst = inst_mod.read_instance(ipath, graph=lg)
    cert = solvers.read_certificate(cpath, inst)
    return inst, cert


def _finish_record(ws: Workspace, writer: _RecordWriter, ident: RunIdentity,
                   arch: solvers.SampleSet, successes: int, tie_breaks: int,
                   truncated: int) -> None:
    path = ws.archive_path(ident)
    path.parent.mkdir(parents=True, exist_ok=True)
    solvers.write_archive(arch, path)
    writer.append(RunRecord(
        identity=ident, status="done", successes=int(successes),
        n_reads=arch.n_reads, tie_breaks=int(tie_breaks),
        truncated=int(truncated),
        archive=str(path.relative_to(ws.root)), sha256=_sha256_file(path),
    ))


def cmd_run(config: ExperimentConfig, threads: int = 1) -> RunResult:
    """Sample the full run matrix; completed identities are skipped.

    Per (instance, eta): the unencoded path samples the perturbed logical
    problem once per gauge (the 4-copy combination is applied at analysis
    time); the encoded path perturbs the physical problem with its own
    persisted draw, samples each penalty strength, and majority-decodes.
    Successes always count hits on the intended certificate.
    """
    ws = Workspace(Path(config.out_dir))
    _freeze_config(ws, config)
    ws.ensure_layout()
    done = {rec.identity.key() for rec in load_records(ws)}
    flagged_keys = {(d["L"], d["instance"]) for d in _load_flagged(ws)}
    writer = _RecordWriter(ws)
    counters = {"completed": 0, "skipped": 0}
    lock = Lock()

    def bump(name):
        with lock:
            counters[name] += 1

    def make_task(L, lg, k):
        def task():
            inst, cert = _read_pair(ws, lg, L, k)
            encodings = {g: qac.encode(inst, lg, g) for g in config.gammas}
            ref_phys = encodings[config.gammas[0]].physical
            for eta in config.etas:
                gauge_slots = (
                    range(config.n_gauges) if config.redraw_noise_per_gauge
                    else [None]
                )
                for slot in gauge_slots:
                    _run_cell(ws, config, writer, done, bump, L, k, eta, slot,
                              inst, cert, encodings, ref_phys)
        return task

    tasks = []
    excluded = 0
    for L in config.sizes:
        _, lg = _build_graphs(L)
        for k in range(config.n_instances):
            if (L, k) in flagged_keys:
                excluded += 1
                continue
            tasks.append(make_task(L, lg, k))
    _run_tasks(tasks, threads)
    return RunResult(
        n_completed=counters["completed"], n_skipped=counters["skipped"],
        n_excluded_instances=excluded,
    )


def _run_cell(ws, config, writer, done, bump, L, k, eta, slot, inst, cert,
              encodings, ref_phys):
    """All records of one (instance, eta[, noise slot]) cell."""
    gauges = [slot] if slot is not None else range(config.n_gauges)

    log_noise = _noise_for(ws, config, inst, L, k, eta, "logical", slot)
    perturbed_logical, _ = inst_mod.apply_noise(inst, log_noise)
    phys_noise = _noise_for(ws, config, ref_phys, L, k, eta, "physical", slot)

    for g in gauges:
        gauge = inst_mod.random_gauge(
            perturbed_logical, rnglib.child_seed(config.seed, "gauge", L, k, eta, g)
        )

        ident_c = RunIdentity(
            L=L, instance=k, eta=eta, gamma=None, strategy="C", gauge=g,
            seed=rnglib.child_seed(config.seed, "solve", L, k, eta, "C", g),
        )
        if ident_c.key() in done:
            bump("skipped")
        else:
            gauged = inst_mod.apply_gauge(perturbed_logical, gauge)
            ss = _backend_sample(config, gauged, ident_c.seed, g)
            spins = inst_mod.ungauge_readout(gauge, ss.spins)
            arch = solvers.SampleSet(
                nodes=perturbed_logical.nodes, spins=spins,
                energies=ss.energies, gauge_id=g,
                descriptor=dict(ss.descriptor, strategy="C", L=L, instance=k,
                                eta=eta, gauge=g, frame="intended"),
                wall_time=ss.wall_time,
            )
            successes = solvers.adjudicate_success(arch, cert)
            _finish_record(ws, writer, ident_c, arch, successes, 0,
                           log_noise.truncation_count)
            bump("completed")

        for gamma in config.gammas:
            ident_q = RunIdentity(
                L=L, instance=k, eta=eta, gamma=gamma, strategy="QAC", gauge=g,
                seed=rnglib.child_seed(
                    config.seed, "solve", L, k, eta, "QAC", gamma, g
                ),
            )
            if ident_q.key() in done:
                bump("skipped")
                continue
            enc = encodings[gamma]
            perturbed_phys, _ = inst_mod.apply_noise(enc.physical, phys_noise)
            phys_gauge = qac.lift_gauge(enc, gauge)
            gauged = inst_mod.apply_gauge(perturbed_phys, phys_gauge)
            ss = _backend_sample(config, gauged, ident_q.seed, g)
            spins = inst_mod.ungauge_readout(phys_gauge, ss.spins)
            decoded = qac.decode_majority(
                spins, enc,
                rnglib.child_seed(config.seed, "decode", L, k, eta, gamma, g),
            )
            if decoded.unusable:
                successes = 0
            else:
                successes = solvers.adjudicate_success(decoded, cert)
            arch = solvers.SampleSet(
                nodes=perturbed_phys.nodes, spins=spins,
                energies=ss.energies, gauge_id=g,
                descriptor=dict(ss.descriptor, strategy="QAC", L=L, instance=k,
                                eta=eta, gamma=gamma, gauge=g, frame="intended"),
                wall_time=ss.wall_time,
            )
            _finish_record(ws, writer, ident_q, arch, successes,
                           int(decoded.tie_breaks.sum()),
                           phys_noise.truncation_count)
            bump("completed")


# ---------------------------------------------------------------------------
# analysis
# ---------------------------------------------------------------------------

def _csv_cell(v) -> str:
    if v is None:
        return "unsolved"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_csv_cell(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _group_records(records: list[RunRecord]) -> dict:
    """matrix[(L, k, eta)] = {"C": {g: rec}, "QAC": {gamma: {g: rec}}}"""
    matrix: dict = {}
    for rec in records:
        ident = rec.identity
        cell = matrix.setdefault(
            (ident.L, ident.instance, ident.eta), {"C": {}, "QAC": {}}
        )
        if ident.strategy == "C":
            cell["C"][ident.gauge] = rec
        else:
            cell["QAC"].setdefault(ident.gamma, {})[ident.gauge] = rec


    return matrix


@dataclass(frozen=True)
class _CellCounts:
    counts: stats.GaugeCounts
    gamma: float | None  # chosen penalty for QAC cells; None for C cells
    raw_rate: float  # pooled success fraction before any combination
    solved: bool  # any raw success at all (QAC: at any penalty)


def _complete_cells(config: ExperimentConfig, matrix: dict) -> tuple[dict, int]:
    """Cells with every gauge present for both strategies; rest are counted."""
    cells = {}
    incomplete = 0
    for key in sorted(matrix):
        cell = matrix[key]
        have_c = sorted(cell["C"])
        have_q = {gm: sorted(gs) for gm, gs in cell["QAC"].items()}
        want = list(range(config.n_gauges))
        if have_c != want or sorted(have_q) != sorted(config.gammas) or any(
            gs != want for gs in have_q.values()
        ):
            incomplete += 1
            continue
        cells[key] = cell
    return cells, incomplete


def _cell_counts(config: ExperimentConfig, cell: dict) -> dict:
    """Per-strategy gauge counts for one (L, instance, eta) cell."""
    out = {}
    c_recs = [cell["C"][g] for g in range(config.n_gauges)]
    reads = c_recs[0].n_reads
    counts = stats.GaugeCounts(
        successes=tuple(r.successes for r in c_recs), n_reads=reads
    )
    total = sum(r.successes for r in c_recs)
    out["C"] = _CellCounts(
        counts=counts, gamma=None,
        raw_rate=total / (reads * config.n_gauges), solved=total > 0,
    )

    by_gamma = {}
    any_success = False
    for gamma in config.gammas:
        recs = [cell["QAC"][gamma][g] for g in range(config.n_gauges)]
        reads_q = recs[0].n_reads
        total_q = sum(r.successes for r in recs)
        by_gamma[gamma] = (
            tuple(r.successes for r in recs), reads_q,
            total_q / (reads_q * config.n_gauges),
        )
        any_success = any_success or total_q > 0
    chosen = qac.optimal_penalty({g: v[2] for g, v in by_gamma.items()})
    pick = config.gammas[0] if chosen is None else chosen
    successes, reads_q, rate = by_gamma[pick]
    out["QAC"] = _CellCounts(
        counts=stats.GaugeCounts(successes=successes, n_reads=reads_q),
        gamma=chosen, raw_rate=rate, solved=any_success,
    )
    return out


def _strategy_success(strategy: str, cc: _CellCounts) -> float:
    """Pooled success probability of the strategy (0 when unsolved)."""
    if strategy == "C":
        return float(_c_combine(cc.raw_rate))
    return cc.raw_rate


def _estimate(config, L, k, eta, strategy, cc: _CellCounts,
              n_resamples: int) -> stats.SuccessEstimate:
    transform = _c_combine if strategy == "C" else None
    return stats.bootstrap_success(
        cc.counts, n_resamples=n_resamples,
        seed=rnglib.child_seed(config.seed, "boot", L, k, eta, strategy),
        transform=transform,
    )


def cmd_analyze(out_dir, n_resamples: int = 2000) -> list[Path]:
    """Emit the derived tables; every number comes from the record index."""
    ws, config = _stored_config(out_dir)
    records = load_records(ws)
    if not records:
        raise DependencyError(f"no run records under {ws.root}; run the pipeline")
    matrix = _group_records(records)
    cells, incomplete = _complete_cells(config, matrix)
    adir = ws.analysis_dir
    written: list[Path] = []

    est_rows = []
    gamma_rows = []
    per_cell: dict = {}
    for (L, k, eta) in sorted(cells):
        cc = _cell_counts(config, cells[(L, k, eta)])
        per_cell[(L, k, eta)] = cc
        for strategy in STRATEGIES:
            est = _estimate(config, L, k, eta, strategy, cc[strategy],
                            n_resamples)
            per_cell[(L, k, eta, strategy)] = est
            est_rows.append((
                L, k, eta, strategy,
                # C carries no penalty column; an unsolved QAC cell keeps the
                # distinguished marker
                "" if strategy == "C" else cc[strategy].gamma,
                est.mu, est.sigma, est.chaoticity,
                est.mu_ci[0], est.mu_ci[1],
                est.chaoticity_ci[0], est.chaoticity_ci[1],
                cc[strategy].counts.n_reads, config.n_gauges,
            ))
        gamma_rows.append((L, k, eta, cc["QAC"].gamma))
    path = adir / "success_estimates.csv"
    _write_csv(path, ["L", "instance", "eta", "strategy", "gamma", "mu",
                      "sigma", "chaoticity", "mu_lo", "mu_hi", "chaos_lo",
                      "chaos_hi", "n_reads", "n_gauges"], est_rows)
    written.append(path)
    path = adir / "optimal_gamma.csv"
    _write_csv(path, ["L", "instance", "eta", "gamma"], gamma_rows)
    written.append(path)

    le_pairs = sorted({(L, eta) for (L, k, eta) in cells})

    corr_rows = []
    for (L, eta) in le_pairs:
        ks = sorted(k for (L2, k, e2) in cells if (L2, e2) == (L, eta))
        mu_c = [per_cell[(L, k, eta, "C")].mu for k in ks]
        mu_q = [per_cell[(L, k, eta, "QAC")].mu for k in ks]
        ch_c = [per_cell[(L, k, eta, "C")].chaoticity for k in ks]
        ch_q = [per_cell[(L, k, eta, "QAC")].chaoticity for k in ks]
        for name, x, y in (
            ("success_c_vs_qac", mu_c, mu_q),
            ("chaoticity_vs_success_c", ch_c, mu_c),
            ("chaoticity_vs_success_qac", ch_q, mu_q),
        ):
            try:
                value = stats.pearson(x, y)
            except UndefinedStatisticError:
                value = math.nan
            except InputError:
                value = math.nan
            corr_rows.append((L, eta, name, value, len(ks)))
    path = adir / "correlations.csv"
    _write_csv(path, ["L", "eta", "quantity", "pearson", "n"], corr_rows)
    written.append(path)

    better_rows = []
    failure_rows = []
    for (L, eta) in le_pairs:
        ks = sorted(k for (L2, k, e2) in cells if (L2, e2) == (L, eta))
        n_better = n_compared = n_both_failed = 0
        for k in ks:
            cc = per_cell[(L, k, eta)]
            if not cc["C"].solved and not cc["QAC"].solved:
                n_both_failed += 1
                failure_rows.append((L, eta, k))
                continue
            n_compared += 1
            if per_cell[(L, k, eta, "QAC")].mu > per_cell[(L, k, eta, "C")].mu:
                n_better += 1
        frac = math.nan if n_compared == 0 else n_better / n_compared
        better_rows.append((L, eta, n_better, n_compared, n_both_failed, frac))
    path = adir / "better_fraction.csv"
    _write_csv(path, ["L", "eta", "n_better", "n_compared", "n_both_failed",
                      "fraction"], better_rows)
    written.append(path)
    path = adir / "failures.csv"
    _write_csv(path, ["L", "eta", "instance"], failure_rows)
    written.append(path)

    tts_rows = []
    pct_rows = []
    medians = {"C": {}, "QAC": {}}
    for (L, eta) in le_pairs:
        ks = sorted(k for (L2, k, e2) in cells if (L2, e2) == (L, eta))
        for strategy in STRATEGIES:
            values = []
            for k in ks:
                p = _strategy_success(strategy, per_cell[(L, k, eta)][strategy])
                values.append(stats.tts(p).runs)
            med, (lo, hi) = stats.median_ci(
                values,
                seed=rnglib.child_seed(config.seed, "medci", L, eta, strategy),
            )
            medians[strategy][(L, eta)] = (med, lo, hi)
            n_unsolved = sum(1 for v in values if v is None)
            tts_rows.append((L, eta, strategy, med, lo, hi, n_unsolved,
                             len(values)))
            for p in range(10, 91, 10):
                pct_rows.append((L, eta, strategy, p,
                                 stats.percentile(values, p)))
    path = adir / "tts_median.csv"
    _write_csv(path, ["L", "eta", "strategy", "median", "ci_lo", "ci_hi",
                      "n_unsolved", "n"], tts_rows)
    written.append(path)
    path = adir / "tts_percentiles.csv"
    _write_csv(path, ["L", "eta", "strategy", "p", "tts"], pct_rows)
    written.append(path)

    med_c = {key: v[0] for key, v in medians["C"].items()}
    med_q = {key: v[0] for key, v in medians["QAC"].items()}
    if med_c or med_q:
        ratios, omitted = coll.speedup_ratio(med_c, med_q)
    else:
        ratios, omitted = {}, 0
    speed_rows = [(L, eta, ratios[(L, eta)]) for (L, eta) in sorted(ratios)]
    path = adir / "speedup.csv"
    _write_csv(path, ["L", "eta", "ratio"], speed_rows)
    written.append(path)

    summary_rows = [
        ("records", len(records)),
        ("cells_complete", len(cells)),
        ("cells_incomplete", incomplete),
        ("speedup_pairs_omitted", omitted),
        ("bootstrap_resamples", n_resamples),
    ]
    path = adir / "summary.csv"
    _write_csv(path, ["key", "value"], summary_rows)
    written.append(path)
    return written


# ---------------------------------------------------------------------------
# scaling fits
# ---------------------------------------------------------------------------

def _median_tables(config: ExperimentConfig, cells: dict) -> dict:
    """Per-strategy {(L, eta): (median, lo, hi)} of per-instance TTS."""
    out = {"C": {}, "QAC": {}}
    le_pairs = sorted({(L, eta) for (L, k, eta) in cells})
    for (L, eta) in le_pairs:
        ks = sorted(k for (L2, k, e2) in cells if (L2, e2) == (L, eta))
        for strategy in STRATEGIES:
            values = []
            for k in ks:
                cc = _cell_counts(config, cells[(L, k, eta)])[strategy]
                values.append(stats.tts(_strategy_success(strategy, cc)).runs)
            med, (lo, hi) = stats.median_ci(
                values,
                seed=rnglib.child_seed(config.seed, "medci", L, eta, strategy),
            )
            out[strategy][(L, eta)] = (med, lo, hi)
    return out


def cmd_collapse(out_dir) -> list[Path]:
    """Fit the scaling forms to median TTS and emit bound overlays."""
    ws, config = _stored_config(out_dir)
    records = load_records(ws)
    if not records:
        raise DependencyError(f"no run records under {ws.root}; run the pipeline")
    cells, _ = _complete_cells(config, _group_records(records))
    if not cells:
        raise DependencyError("no complete (instance, eta) cells to fit")
    medians = _median_tables(config, cells)
    cdir = ws.collapse_dir
    cdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    effective = {
        L: chim.effective_L(len(_build_graphs(L)[1].edges))
        for L in config.sizes
    }

    fit_rows = []
    for strategy in STRATEGIES:
        table = medians[strategy]
        data = [(L, eta, med) for (L, eta), (med, _, _) in sorted(table.items())]
        ci_rows = [
            (L, eta, lo, hi) for (L, eta), (_, lo, hi) in sorted(table.items())
        ]
        for variant, l_values in (("raw", None), ("effective", effective)):
            report = cdir / f"fit_{strategy}_{variant}.txt"
            try:
                fit = coll.fit_collapse(
                    data, form="g1", mode="squared",
                    seed=rnglib.child_seed(config.seed, "collapse", strategy,
                                           variant),
                    l_values=l_values,
                )
            except (InputError, FitFailureError) as exc:
                with open(report, "w") as fh:
                    fh.write(f"unavailable: {exc}\n")
                written.append(report)
                fit_rows.append((strategy, variant, "g1", None, None, None,
                                 None, None, f"unavailable: {exc}"))
                continue
            bounds = None
            try:
                bounds = coll.fit_d_bounds(
                    ci_rows, fit, n_resamples=500,
                    seed=rnglib.child_seed(config.seed, "dbounds", strategy,
                                           variant),
                    l_values=l_values,
                )
            except (InputError, FitFailureError):
                bounds = None
            coll.write_fit_report(fit, report, bounds=bounds)
            written.append(report)
            named = fit.trial.named()
            fit_rows.append((strategy, variant, "g1", named["a"], named["b"],
                            named["c"], named["d"], fit.residual, "ok"))
    path = cdir / "fits.csv"
    _write_csv(path, ["strategy", "variant", "form", "a", "b", "c", "d",
                      "residual", "status"],
               [tuple("" if v is None else v for v in row) for row in fit_rows])
    written.append(path)

    overlay_rows = []
    for L in sorted(config.sizes):
        for eta in sorted(config.etas):
            overlay_rows.append((
                L, eta,
                coll.classical_bound(L, eta, 1.0),
                coll.classical_bound(L, eta, 1.0, random_guess=True),
            ))
    path = cdir / "bound_overlay.csv"
    _write_csv(path, ["L", "eta", "exact_solver_log10", "random_guess_log10"],
               overlay_rows)
    written.append(path)
    return written


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerifyResult:
    n_checked: int
    failures: tuple[str, ...]


def cmd_verify(out_dir, fraction: float = 0.01) -> VerifyResult:
    """Recompute a sample of records end-to-end from persisted inputs."""
    if not 0 < fraction <= 1:
        raise InputError(f"fraction must be in (0, 1], got {fraction}")
    ws, config = _stored_config(out_dir)
    records = load_records(ws)
    if not records:
        raise DependencyError(f"no run records under {ws.root}")
    n_check = max(1, round(fraction * len(records)))
    gen = rnglib.stream(config.seed, "verifypick")
    picks = sorted(gen.choice(len(records), size=n_check, replace=False))

    graphs: dict = {}
    pairs: dict = {}
    failures: list[str] = []

    def fail(rec, msg):
        failures.append(f"{rec.identity}: {msg}")

    for pos in picks:
        rec = records[pos]
        ident = rec.identity
        L, k, eta = ident.L, ident.instance, ident.eta
        if L not in graphs:
            graphs[L] = _build_graphs(L)
        _, lg = graphs[L]
        if (L, k) not in pairs:
            pairs[(L, k)] = _read_pair(ws, lg, L, k)
        inst, cert = pairs[(L, k)]
        apath = ws.root / rec.archive
        if not apath.exists():
            fail(rec, "archive missing")
            continue
        if _sha256_file(apath) != rec.sha256:
            fail(rec, "archive hash mismatch")
            continue
        ss = solvers.read_archive(apath)
        if ss.n_reads != rec.n_reads:
            fail(rec, f"read count {ss.n_reads} != {rec.n_reads}")
            continue
        slot = ident.gauge if config.redraw_noise_per_gauge else None
        if ident.strategy == "C":
            noise_path = ws.noise_path(L, k, eta, "logical", slot)
            if not noise_path.exists():
                raise DependencyError(f"missing noise draw {noise_path}")
            with open(noise_path) as fh:
                noise = _noise_from_payload(json.load(fh))
            sampled, _ = inst_mod.apply_noise(inst, noise)
            successes = solvers.adjudicate_success(ss, cert)
        else:
            enc = qac.encode(inst, lg, ident.gamma)
            noise_path = ws.noise_path(L, k, eta, "physical", slot)
            if not noise_path.exists():
                raise DependencyError(f"missing noise draw {noise_path}")
            with open(noise_path) as fh:
                noise = _noise_from_payload(json.load(fh))
            sampled, _ = inst_mod.apply_noise(enc.physical, noise)
            decoded = qac.decode_majority(
                ss.spins, enc,
                rnglib.child_seed(config.seed, "decode", L, k, eta,
                                  ident.gamma, ident.gauge),
            )
            successes = (
                0 if decoded.unusable
                else solvers.adjudicate_success(decoded, cert)
            )
        want = inst_mod.energies(sampled, ss.spins)
        if not np.allclose(want, ss.energies, rtol=0.0, atol=1e-9):
            fail(rec, "stored energies do not match the sampled instance")
            continue
        if successes != rec.successes:
            fail(rec, f"recomputed successes {successes} != {rec.successes}")
    return VerifyResult(n_checked=n_check, failures=tuple(failures))


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def cmd_report(out_dir) -> str:
    """Plain-text digest of whatever stages have completed."""
    ws, config = _stored_config(out_dir)
    records = load_records(ws)
    flagged = _load_flagged(ws)
    lines = ["run overview", "============"]
    lines.append(f"output directory: {ws.root}")
    lines.append(
        "matrix: sizes=" + repr(list(config.sizes))
        + " etas=" + repr(list(config.etas))
        + f" instances={config.n_instances} gauges={config.n_gauges}"
        + f" reads={config.n_reads} backend={config.backend}"
    )
    lines.append(f"records completed: {len(records)}")
    lines.append(f"instances flagged by oracle disagreement: {len(flagged)}")
    for d in flagged:
        lines.append(
            f"  L={d['L']} instance={d['instance']}: "
            f"dp={d['dp_energy']} pticm={d['pticm_energy']}"
        )

    bf_path = ws.analysis_dir / "better_fraction.csv"
    if bf_path.exists():
        header, rows = _read_csv(bf_path)
        lines.append("")
        lines.append("encoded-better fraction by (L, eta):")
        for row in rows:
            lines.append("  " + " ".join(f"{h}={v}" for h, v in zip(header, row)))
    fits_path = ws.collapse_dir / "fits.csv"
    if fits_path.exists():
        header, rows = _read_csv(fits_path)
        lines.append("")
        lines.append("scaling fits (g1, squared mode):")
        for row in rows:
            lines.append("  " + " ".join(f"{h}={v}" for h, v in zip(header, row)))
    text = "\n".join(lines) + "\n"
    with open(ws.root / "report.txt", "w") as fh:
        fh.write(text)
    return text
