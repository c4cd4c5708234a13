"""Exact and stochastic ground-state solvers plus success adjudication.

Exact route: ``solve_dp_exact`` runs a boustrophedon frontier sweep (min-sum
variable elimination) whose width stays at r*L bits on hardware-shaped
problems, and ``brute_force`` enumerates small instances completely.  Both
adjudicate in integer arithmetic on intended instances, so equality of
energies is exact.

Stochastic route: ``solve_sa`` (independent Metropolis anneals) and
``solve_pticm`` (two-chain parallel tempering with isoenergetic cluster
moves) return spin readouts; a configuration counts as a success only if it
reaches the certified intended ground energy.
"""

from __future__ import annotations

import gzip
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from . import instances as inst_mod
from . import rng as rnglib
from .chimera import ChimeraGraph, LogicalGraph
from .errors import InputError, ParseError, ResourceError
from .instances import IsingInstance
from .qac import DecodedSet

DP_DEFAULT_MAX_FRONTIER_BITS = 24
BRUTE_FORCE_MAX_SPINS = 24
FLOAT_ENERGY_ATOL = 1e-9
NEAR_TIE_TOL = 1e-12


# ---------------------------------------------------------------------------
# result containers
# ---------------------------------------------------------------------------

@dataclass
class SampleSet:
    """A batch of spin readouts from one solver call (one gauge)."""

    nodes: tuple[int, ...]
    spins: np.ndarray  # (n_reads, n) int8, +/-1
    energies: np.ndarray  # per-read energy of the sampled instance
    gauge_id: int | None
    descriptor: dict
    wall_time: float

    def __post_init__(self):
        self.spins = np.asarray(self.spins, dtype=np.int8)
        self.energies = np.asarray(self.energies, dtype=np.float64)
        if self.spins.ndim != 2 or self.spins.shape[1] != len(self.nodes):
            raise InputError(f"readout matrix shape {self.spins.shape} invalid")
        if self.energies.shape != (self.spins.shape[0],):
            raise InputError("one energy per readout required")

    @property
    def n_reads(self) -> int:
        return self.spins.shape[0]


@dataclass
class GroundCertificate:
    """A claimed ground state with the evidence for it."""

    instance: IsingInstance
    energy: float
    witness: np.ndarray
    method: str
    energy_scaled: int | None = None
    agreement: dict = field(default_factory=dict)
    ground_set: np.ndarray | None = None

    def __post_init__(self):
        self.witness = inst_mod.spins_to_array(self.instance, self.witness)
        if self.instance.exact_scale is not None:
            got = inst_mod.energy_scaled(self.instance, self.witness)
            if self.energy_scaled is None:
                claimed = self.energy * self.instance.exact_scale
                if abs(claimed - got) > 1e-6:
                    raise InputError(
                        f"witness energy {got} != certified {claimed}"
                    )
                self.energy_scaled = got
            elif got != self.energy_scaled:
                raise InputError(
                    f"witness energy {got} != certified {self.energy_scaled}"
                )
            self.energy = self.energy_scaled / self.instance.exact_scale
        else:
            got = inst_mod.energy(self.instance, self.witness)
            if abs(got - self.energy) > FLOAT_ENERGY_ATOL:
                raise InputError(f"witness energy {got} != certified {self.energy}")


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _csr(inst: IsingInstance):
    """Symmetric adjacency of the instance couplers in CSR form."""
    a = inst.arrays()
    n = inst.num_spins
    deg = np.zeros(n, dtype=np.int64)
    np.add.at(deg, a["ei"], 1)
    np.add.at(deg, a["ej"], 1)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(deg, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)
    weights = np.empty(indptr[-1], dtype=np.float64)
    cursor = indptr[:-1].copy()
    for i, j, w in zip(a["ei"], a["ej"], a["J"]):
        indices[cursor[i]] = j
        weights[cursor[i]] = w
        cursor[i] += 1
        indices[cursor[j]] = i
        weights[cursor[j]] = w
        cursor[j] += 1
    return indptr, indices, weights, a["h"]


def _validate_schedule(betas) -> np.ndarray:
    arr = np.asarray(betas, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise InputError("schedule must be a non-empty 1-d array")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise InputError("schedule entries must be finite and >= 0")
    if np.any(np.diff(arr) < 0):
        raise InputError("schedule must be monotone non-decreasing")
    return arr


# ---------------------------------------------------------------------------
# simulated annealing
# ---------------------------------------------------------------------------

def solve_sa(inst: IsingInstance, *, sweeps: int = 1000, n_reads: int = 1000,
             beta_min: float = 0.1, beta_max: float = 3.0,
             schedule=None, seed: int = 0, gauge_id: int | None = None) -> SampleSet:
    """Restart-style simulated annealing; every read is an independent anneal."""
    if n_reads < 1:
        raise InputError(f"n_reads must be >= 1, got {n_reads}")
    if schedule is None:
        if sweeps < 1:
            raise InputError(f"sweeps must be >= 1, got {sweeps}")
        schedule = np.linspace(beta_min, beta_max, sweeps)
    betas = _validate_schedule(schedule)
    indptr, indices, weights, h = _csr(inst)
    t0 = time.perf_counter()
    spins = _kernels.sa_batch(
        indptr, indices, weights, h, betas,
        int(n_reads), np.uint64(rnglib.child_seed(seed, "sa")),
    )
    wall = time.perf_counter() - t0
    return SampleSet(
        nodes=inst.nodes,
        spins=spins,
        energies=inst_mod.energies(inst, spins),
        gauge_id=gauge_id,
        descriptor={
            "solver": "sa", "sweeps": int(betas.size), "n_reads": int(n_reads),
            "beta_min": float(betas[0]), "beta_max": float(betas[-1]),
            "seed": int(seed),
        },
        wall_time=wall,
    )


# ---------------------------------------------------------------------------
# parallel tempering with isoenergetic cluster moves
# ---------------------------------------------------------------------------

def houdayer_cluster(indptr, indices, s0, s1, site) -> np.ndarray:
    """Connected component of disagreeing sites containing ``site``.

    Flipping the component in both chains exchanges energy between them but
    leaves the pair total exactly unchanged, because every boundary edge sees
    opposite spins in the two chains.
    """
    if s0[site] == s1[site]:
        raise InputError("cluster seed must be a disagreeing site")
    diff = s0 != s1
    seen = np.zeros(s0.size, dtype=bool)
    seen[site] = True
    stack = [int(site)]
    out = [int(site)]
    while stack:
        u = stack.pop()
        for k in range(indptr[u], indptr[u + 1]):
            v = int(indices[k])
            if diff[v] and not seen[v]:
                seen[v] = True
                stack.append(v)
                out.append(v)
    return np.array(sorted(out), dtype=np.int64)


def solve_pticm(inst: IsingInstance, *, n_temps: int = 16, sweeps: int = 1500,
                icm_period: int = 10, beta_min: float = 0.1, beta_max: float = 5.0,
                seed: int = 0, debug_icm: bool = False
                ) -> tuple[GroundCertificate, SampleSet]:
    """Two chains per temperature; cluster moves between same-beta chains.

    Returns the best configuration seen (as a certificate with
    ``method='pticm'``) together with the final readouts of all chains.
    """
    if n_temps < 2:
        raise InputError(f"need >= 2 temperatures, got {n_temps}")
    if sweeps < 1 or icm_period < 1:
        raise InputError("sweeps and icm_period must be >= 1")
    if not (0 < beta_min < beta_max):
        raise InputError(f"need 0 < beta_min < beta_max, got [{beta_min}, {beta_max}]")
    betas = np.geomspace(beta_min, beta_max, n_temps)
    indptr, indices, weights, h = _csr(inst)
    n = inst.num_spins
    gen = rnglib.stream(seed, "pt-init")
    spins = gen.choice(np.array([-1, 1], dtype=np.int8), size=(2 * n_temps, n))
    energies = inst_mod.energies(inst, spins)
    state = np.array([rnglib.child_seed(seed, "pt-chain")], dtype=np.uint64)
    icm_gen = rnglib.stream(seed, "pt-icm")
    best_energy = np.array([np.inf])
    best_spins = spins[0].copy()
    t0 = time.perf_counter()
    done = 0
    while done < sweeps:
        block = min(icm_period, sweeps - done)
        _kernels.pt_block(
            indptr, indices, weights, h, betas, spins, energies,
            block, state, done, best_energy, best_spins,
        )
        done += block
        # refresh incrementally-tracked energies and run cluster moves
        energies[:] = inst_mod.energies(inst, spins)
        for t in range(n_temps):
            c0, c1 = 2 * t, 2 * t + 1
            diff = np.flatnonzero(spins[c0] != spins[c1])
            if diff.size == 0 or diff.size == n:
                continue
            site = int(diff[icm_gen.integers(diff.size)])
            cluster = houdayer_cluster(indptr, indices, spins[c0], spins[c1], site)
            pair_before = energies[c0] + energies[c1]
            spins[c0, cluster] *= -1
            spins[c1, cluster] *= -1
            pair = inst_mod.energies(inst, spins[[c0, c1]])
            if debug_icm:
                drift = abs((pair[0] + pair[1]) - pair_before)
                if drift > FLOAT_ENERGY_ATOL:
                    raise AssertionError(
                        f"cluster move changed pair energy by {drift}"
                    )
            energies[c0], energies[c1] = pair[0], pair[1]
    wall = time.perf_counter() - t0
    # pick the best configuration with exactly recomputed energies
    candidates = np.vstack([best_spins[None, :], spins])
    cand_e = inst_mod.energies(inst, candidates)
    k = int(np.argmin(cand_e))
    witness = candidates[k].copy()
    cert = GroundCertificate(
        instance=inst,
        energy=float(cand_e[k]),
        witness=witness,
        method="pticm",
    )
    samples = SampleSet(
        nodes=inst.nodes,
        spins=spins.copy(),
        energies=energies.copy(),
        gauge_id=None,
        descriptor={
            "solver": "pticm", "n_temps": int(n_temps), "sweeps": int(sweeps),
            "icm_period": int(icm_period), "beta_min": float(beta_min),
            "beta_max": float(beta_max), "seed": int(seed),
        },
        wall_time=wall,
    )
    return cert, samples


# ---------------------------------------------------------------------------
# exact frontier dynamic programming
# ---------------------------------------------------------------------------

def chimera_elimination_order(graph: ChimeraGraph, nodes) -> list[int]:
    """Column-major cells; within a cell side 0 before side 1.

    Side-0 spins trade places with their vertical predecessor and side-1
    spins with their horizontal predecessor, which keeps the frontier at
    r*L bits plus a bounded transient.
    """
    keep = set(nodes)
    order = []
    for col in range(graph.L):
        for row in range(graph.L):
            for side in (0, 1):
                for k in range(graph.r):
                    q = graph.index(row, col, side, k)
                    if q in keep:
                        order.append(q)
    return order


def logical_elimination_order(lg: LogicalGraph, nodes) -> list[int]:
    keep = set(nodes)
    order = []
    for col in range(lg.L):
        for row in range(lg.L):
            for slot in (0, 1):
                q = 2 * (row * lg.L + col) + slot
                if q in keep:
                    order.append(q)
    return order


def _dp_order(inst: IsingInstance) -> list[int]:
    if isinstance(inst.graph, ChimeraGraph):
        return chimera_elimination_order(inst.graph, inst.nodes)
    if isinstance(inst.graph, LogicalGraph):
        return logical_elimination_order(inst.graph, inst.nodes)
    return list(inst.nodes)


def _plan_dp(inst: IsingInstance, order: list[int]) -> int:
    """Dry run of the sweep; returns the maximum table width in bits."""
    nbrs: dict[int, set[int]] = {n: set() for n in inst.nodes}
    for (i, j) in inst.J:
        nbrs[i].add(j)
        nbrs[j].add(i)
    pending = {n: len(nbrs[n]) for n in inst.nodes}
    introduced: set[int] = set()
    active: set[int] = set()
    width = 0
    for v in order:
        introduced.add(v)
        active.add(v)
        for u in nbrs[v]:
            pending[u] -= 1
        width = max(width, len(active))
        for u in sorted(active):
            if pending[u] == 0:
                active.discard(u)
    if active:
        raise InputError("elimination order does not cover the instance")
    return width


def _check_cap(inst: IsingInstance, order: list[int], max_frontier_bits: int):
    if isinstance(inst.graph, ChimeraGraph):
        bits = inst.graph.r * inst.graph.L
    else:
        bits = _plan_dp(inst, order)
    if bits > max_frontier_bits:
        width = _plan_dp(inst, order)
        need = (2 ** (width + 1)) * 8 / 1e6
        raise ResourceError(
            f"frontier needs {bits} bits (cap {max_frontier_bits}); "
            f"peak table would be about {need:.0f} MB"
        )


def _sweep_dtype(inst: IsingInstance, a: dict):
    if inst.exact_scale is None:
        return np.float64, a["h"], a["J"]
    bound = int(np.abs(a["h_int"]).sum() + np.abs(a["J_int"]).sum())
    if bound < 2 ** 15:
        dt = np.int16
    elif bound < 2 ** 31:
        dt = np.int32
    else:
        dt = np.int64
    return dt, a["h_int"].astype(dt), a["J_int"].astype(dt)


def _frontier_sweep(inst: IsingInstance, order: list[int], record: bool):
    """Min-sum elimination along ``order``.  Returns (best, records) where
    records holds, per eliminated spin, the packed argmin bits keyed by the
    C-order raveling of the surviving table axes.

    Tables ping-pong between two preallocated buffers sized to the peak
    width, so the hot loop never reallocates.  Integer instances run in the
    narrowest dtype that can hold the worst-case |energy|.
    """
    a = inst.arrays()
    dtype, h_vals, j_vals = _sweep_dtype(inst, a)
    pos = a["pos"]
    h_of = {n: h_vals[pos[n]] for n in inst.nodes}
    coupling: dict[int, list] = {n: [] for n in inst.nodes}
    for (i, j), w in zip(a["edges"], j_vals):
        coupling[i].append((j, w))
        coupling[j].append((i, w))

    peak = _plan_dp(inst, order)  # already counts the post-introduction transient
    buffers = (np.zeros(1 << peak, dtype=dtype), np.empty(1 << peak, dtype=dtype))
    cur = 0

    spin_vec = np.array([1, -1], dtype=dtype)
    pending = {n: len(coupling[n]) for n in inst.nodes}
    introduced: set[int] = set()
    axes: list[int] = []
    table = buffers[0][:1].reshape(())
    records = []

    for v in order:
        w = len(axes)
        contrib = h_of[v] * spin_vec.reshape((1,) * w + (2,))
        for u, jw in coupling[v]:
            if u not in introduced:
                continue
            ax = axes.index(u)
            s_u = spin_vec.reshape((1,) * ax + (2,) + (1,) * (w - ax - 1) + (1,))
            contrib = contrib + jw * s_u * spin_vec.reshape((1,) * w + (2,))
        cur ^= 1
        out = buffers[cur][: 1 << (w + 1)].reshape((2,) * (w + 1))
        np.add(table[..., None], contrib, out=out)
        table = out
        axes.append(v)
        introduced.add(v)
        for u, _ in coupling[v]:
            pending[u] -= 1
        for u in sorted(axes):
            if pending[u] != 0:
                continue
            p = axes.index(u)
            view = np.moveaxis(table, p, -1)
            lo = view[..., 0]
            hi = view[..., 1]
            if record:
                bits = hi < lo  # ties keep spin +1, deterministically
                records.append((u, tuple(axes[:p] + axes[p + 1:]),
                                np.packbits(bits.ravel())))
            cur ^= 1
            w = len(axes) - 1
            out = buffers[cur][: 1 << w].reshape((2,) * w)
            np.minimum(lo, hi, out=out)
            table = out
            axes = axes[:p] + axes[p + 1:]

    if table.shape != ():
        raise InputError("elimination order does not cover the instance")
    return table[()], records


def solve_dp_exact(inst: IsingInstance, *,
                   max_frontier_bits: int = DP_DEFAULT_MAX_FRONTIER_BITS
                   ) -> GroundCertificate:
    """Exact minimum by min-sum variable elimination along the frontier order.

    On hardware-shaped problems the steady frontier is ``r*L`` bits, which
    must stay within ``max_frontier_bits``; near-degenerate minima within
    1e-12 of each other may yield either witness.  Intended instances are
    processed in integer arithmetic and adjudicated exactly.
    """
    order = _dp_order(inst)
    if sorted(order) != list(inst.nodes):
        raise InputError("instance nodes do not match its graph")
    _check_cap(inst, order, max_frontier_bits)
    best, records = _frontier_sweep(inst, order, record=True)

    assigned: dict[int, int] = {}  # node -> table bit (0 means spin +1)
    for node, rem_axes, packed in reversed(records):
        idx = 0
        for u in rem_axes:
            idx = (idx << 1) | assigned[u]
        assigned[node] = int((packed[idx >> 3] >> (7 - (idx & 7))) & 1)
    witness = np.array([1 - 2 * assigned[n] for n in inst.nodes], dtype=np.int8)

    exact = inst.exact_scale is not None
    return GroundCertificate(
        instance=inst,
        energy=(int(best) / inst.exact_scale) if exact else float(best),
        witness=witness,
        method="dp",
        energy_scaled=int(best) if exact else None,
    )


def dp_energy_only(inst: IsingInstance, *,
                   max_frontier_bits: int = DP_DEFAULT_MAX_FRONTIER_BITS) -> float:
    """Minimum energy without witness bookkeeping (for timing / big sweeps)."""
    order = _dp_order(inst)
    if sorted(order) != list(inst.nodes):
        raise InputError("instance nodes do not match its graph")
    _check_cap(inst, order, max_frontier_bits)
    best, _ = _frontier_sweep(inst, order, record=False)
    exact = inst.exact_scale is not None
    return (int(best) / inst.exact_scale) if exact else float(best)


# ---------------------------------------------------------------------------
# brute force
# ---------------------------------------------------------------------------

def brute_force(inst: IsingInstance, *, max_spins: int = BRUTE_FORCE_MAX_SPINS
                ) -> GroundCertificate:
    """Exhaustive enumeration; returns the complete set of minimizers."""
    n = inst.num_spins
    if n > max_spins:
        raise ResourceError(f"{n} spins exceeds brute-force cap {max_spins}")
    exact = inst.exact_scale is not None
    total = 1 << n
    chunk = min(total, 1 << 16)
    shifts = np.arange(n, dtype=np.uint32)
    best = None
    keep_configs = []
    keep_energies = []
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.uint32)
        spins = (((idx[:, None] >> shifts) & 1) * 2 - 1).astype(np.int8)
        if exact:
            e = inst_mod.energies_scaled(inst, spins)
            cmin = int(e.min())
            if best is None or cmin < best:
                best = cmin
            mask = e <= cmin  # exact integer ties
        else:
            e = inst_mod.energies(inst, spins)
            cmin = float(e.min())
            if best is None or cmin < best:
                best = cmin
            mask = e <= cmin + NEAR_TIE_TOL
        keep_configs.append(spins[mask])
        keep_energies.append(e[mask])
    configs = np.vstack(keep_configs)
    energies = np.concatenate(keep_energies)
    if exact:
        final = energies == best
    else:
        final = energies <= best + NEAR_TIE_TOL
    ground = configs[final]
    return GroundCertificate(
        instance=inst,
        energy=(best / inst.exact_scale) if exact else best,
        witness=ground[0].copy(),
        method="brute_force",
        energy_scaled=int(best) if exact else None,
        ground_set=ground,
    )


# ---------------------------------------------------------------------------
# adjudication
# ---------------------------------------------------------------------------

def adjudicate_success(samples, cert: GroundCertificate) -> int:
    """Count readouts that hit the certified ground energy of the intended
    instance.  Readouts must already be in the intended frame (un-gauged)."""
    if isinstance(samples, DecodedSet):
        if samples.unusable:
            raise InputError("decoded set is unusable (unresolved logical qubits)")
        nodes, mat = samples.nodes, samples.spins
    elif isinstance(samples, SampleSet):
        nodes, mat = samples.nodes, samples.spins
    else:
        mat = np.asarray(samples, dtype=np.int8)
        if mat.ndim == 1:
            mat = mat[None, :]
        nodes = cert.instance.nodes
    if tuple(nodes) != cert.instance.nodes:
        raise InputError("readout nodes do not match the certified instance")
    inst = cert.instance
    if inst.exact_scale is not None:
        e = inst_mod.energies_scaled(inst, mat)
        return int(np.count_nonzero(e == cert.energy_scaled))
    e = inst_mod.energies(inst, mat)
    return int(np.count_nonzero(np.abs(e - cert.energy) <= FLOAT_ENERGY_ATOL))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _to_pm(row) -> str:
    return "".join("+" if s > 0 else "-" for s in row)


def _from_pm(s: str) -> np.ndarray:
    if set(s) - {"+", "-"}:
        raise ParseError(f"bad readout string {s!r}")
    return np.array([1 if c == "+" else -1 for c in s], dtype=np.int8)


def write_archive(ss: SampleSet, path) -> None:
    """Gzip text archive: headers, then one ``spins energy gauge`` per line."""
    with gzip.open(path, "wt") as fh:
        fh.write(f"# descriptor={json.dumps(ss.descriptor, sort_keys=True)}\n")
        fh.write(f"# nodes={' '.join(str(n) for n in ss.nodes)}\n")
        gid = "none" if ss.gauge_id is None else str(ss.gauge_id)
        fh.write(f"# gauge={gid}\n")
        fh.write(f"# wall_time={ss.wall_time!r}\n")
        for row, e in zip(ss.spins, ss.energies):
            fh.write(f"{_to_pm(row)} {float(e)!r} {gid}\n")


def read_archive(path) -> SampleSet:
    headers = {}
    rows = []
    energies = []
    with gzip.open(path, "rt") as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" not in body:
                    raise ParseError(f"{path}:{ln}: malformed header {line!r}")
                k, v = body.split("=", 1)
                headers[k.strip()] = v
                continue
            toks = line.split()
            if len(toks) != 3:
                raise ParseError(f"{path}:{ln}: expected 'spins energy gauge'")
            rows.append(_from_pm(toks[0]))
            energies.append(float(toks[1]))
    for key in ("descriptor", "nodes", "gauge", "wall_time"):
        if key not in headers:
            raise ParseError(f"{path}: missing '# {key}=' header")
    nodes = tuple(int(t) for t in headers["nodes"].split())
    gauge = None if headers["gauge"] == "none" else int(headers["gauge"])
    return SampleSet(
        nodes=nodes,
        spins=np.array(rows, dtype=np.int8).reshape(len(rows), len(nodes)),
        energies=np.array(energies),
        gauge_id=gauge,
        descriptor=json.loads(headers["descriptor"]),
        wall_time=float(headers["wall_time"]),
    )


def write_certificate(cert: GroundCertificate, path) -> None:
    payload = {
        "method": cert.method,
        "energy": cert.energy,
        "energy_scaled": cert.energy_scaled,
        "witness": _to_pm(cert.witness),
        "nodes": list(cert.instance.nodes),
        "agreement": cert.agreement,
    }
    if cert.ground_set is not None:
        payload["ground_degeneracy"] = int(cert.ground_set.shape[0])
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_certificate(path, inst: IsingInstance) -> GroundCertificate:
    with open(path) as fh:
        payload = json.load(fh)
    if tuple(payload["nodes"]) != inst.nodes:
        raise ParseError(f"{path}: certificate nodes do not match instance")
    return GroundCertificate(
        instance=inst,
        energy=float(payload["energy"]),
        witness=_from_pm(payload["witness"]),
        method=payload["method"],
        energy_scaled=payload["energy_scaled"],
        agreement=dict(payload.get("agreement", {})),
    )
