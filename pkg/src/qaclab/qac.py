"""Repetition encoding with an energy penalty, decoding, and baselines.

``encode`` maps a logical instance onto the physical graph: every logical
spin becomes 3 data copies tied ferromagnetically to one penalty qubit, and
every logical coupler is replicated on its backing physical couplers.  The
implemented physical problem is ``alpha * (problem copies) + gamma * penalty``.

``decode_majority`` votes the 3 data copies down to one logical spin.  The
unencoded baseline ("C") runs the same logical problem as 4 independent
copies; its success probability is combined per ``1 - (1 - p)^k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import rng as rnglib
from .chimera import INACTIVE, OPERATIONAL, LogicalGraph
from .errors import InputError, RangeError
from .instances import Gauge, IsingInstance

C_STRATEGY_COPIES = 4
PENALTY_GRID = (0.1, 0.2, 0.3, 0.4, 0.5)


def _infer_scale(values, base_scale) -> int | None:
    """Smallest integer scale making every value an exact integer multiple."""
    if base_scale is None:
        return None
    scale = int(base_scale)
    for v in values:
        frac = Fraction(v).limit_denominator(10_000)
        if float(frac) != float(v):
            return None
        scale = scale * frac.denominator // np.gcd(scale, frac.denominator)
        if scale > 1_000_000:
            return None
    for v in values:
        if float(round(v * scale)) / scale != float(v):
            return None
    return scale


@dataclass
class QacEncoding:
    """Physical realization of a logical instance at one penalty strength."""

    physical: IsingInstance
    lg: LogicalGraph
    logical_nodes: tuple[int, ...]
    gamma: float
    alpha: float
    backing_counts: dict[tuple[int, int], int]
    penalty_couplers: tuple[tuple[int, int], ...]


def encode(inst: IsingInstance, lg: LogicalGraph, gamma: float,
           alpha: float = 1.0) -> QacEncoding:
    """Build the physical instance implementing ``inst`` under the code.

    Penalty couplers (value ``-gamma``) are placed only where the penalty
    qubit exists; ``gamma = 0`` places none at all.  Logical couplers are
    written on every backing physical coupler without rescaling, so an edge
    backed by fewer than 3 couplers simply carries a weaker encoded weight.
    """
    if inst.kind != "logical":
        raise InputError("encode expects a logical instance")
    if not 0.0 <= gamma <= 1.0:
        raise RangeError(f"penalty strength must be in [0, 1], got {gamma}")
    if not 0.0 < alpha <= 1.0:
        raise RangeError(f"problem scale must be in (0, 1], got {alpha}")
    by_index = {q.index: q for q in lg.qubits}
    for n in inst.nodes:
        q = by_index.get(n)
        if q is None or q.status == INACTIVE:
            raise InputError(f"logical node {n} is not usable on this graph")
    for v in inst.J.values():
        if abs(alpha * v) > 1.0:
            raise RangeError(f"scaled coupler {alpha * v} outside [-1, 1]")
    for v in inst.h.values():
        if abs(alpha * v) > 1.0:
            raise RangeError(f"scaled field {alpha * v} outside [-1, 1]")

    nodes: set[int] = set()
    h: dict[int, float] = {}
    J: dict[tuple[int, int], float] = {}
    penalty_couplers: list[tuple[int, int]] = []
    for n in inst.nodes:
        q = by_index[n]
        nodes.update(q.data)
        for d in q.data:
            h[d] = alpha * inst.h.get(n, 0.0)
        if q.status == OPERATIONAL and gamma > 0.0:
            nodes.add(q.penalty)
            h[q.penalty] = 0.0
            for d in q.data:
                key = (min(d, q.penalty), max(d, q.penalty))
                J[key] = -gamma
                penalty_couplers.append(key)
    backing_counts: dict[tuple[int, int], int] = {}
    for e, v in inst.J.items():
        pairs = lg.edges.get(e)
        if pairs is None:
            raise InputError(f"logical coupler {e} has no backing on this graph")
        backing_counts[e] = len(pairs)
        for key in pairs:
            J[key] = alpha * v
    scale = _infer_scale(
        list(J.values()) + list(h.values()), inst.exact_scale
    )
    physical = IsingInstance(
        kind="physical",
        nodes=tuple(sorted(nodes)),
        h=h,
        J=J,
        exact_scale=scale,
        provenance=dict(inst.provenance, gamma=float(gamma), alpha=float(alpha)),
        graph=lg.physical,
    )
    return QacEncoding(
        physical=physical,
        lg=lg,
        logical_nodes=inst.nodes,
        gamma=float(gamma),
        alpha=float(alpha),
        backing_counts=backing_counts,
        penalty_couplers=tuple(penalty_couplers),
    )


def lift_gauge(enc: QacEncoding, logical_gauge: Gauge) -> Gauge:
    """Lift a logical gauge to the physical instance.

    All 3 data copies and the penalty qubit of a logical spin share its sign,
    so the lifted transform maps the encoding of the problem to the encoding
    of the gauged problem: penalty couplers keep their value ``-gamma``.
    """
    if logical_gauge.nodes != enc.logical_nodes:
        raise InputError("gauge node set does not match the encoded problem")
    sign = dict(zip(logical_gauge.nodes, logical_gauge.assignment))
    by_index = {q.index: q for q in enc.lg.qubits}
    phys_sign: dict[int, int] = {}
    for n in enc.logical_nodes:
        q = by_index[n]
        for d in q.data:
            phys_sign[d] = sign[n]
        phys_sign[q.penalty] = sign[n]
    assignment = tuple(phys_sign.get(p, 1) for p in enc.physical.nodes)
    return Gauge(assignment=assignment, nodes=enc.physical.nodes)


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------

@dataclass
class DecodedSet:
    """Majority-decoded readouts on the logical node set."""

    nodes: tuple[int, ...]
    spins: np.ndarray  # (n_reads, n_logical) int8
    tie_breaks: np.ndarray  # per-read count of coin-flip votes
    unresolved_nodes: tuple[int, ...]
    unusable: bool


def decode_majority(readouts: np.ndarray, enc: QacEncoding, seed: int) -> DecodedSet:
    """Vote data copies down to logical spins.

    3 active copies: strict majority (3 odd votes never tie).  2 active
    copies: agreement wins, disagreement falls back to a deterministic
    pseudo-random coin from ``seed``.  Fewer than 2: the logical qubit is
    unresolved and the decoded set is flagged unusable.  Penalty qubits are
    ignored.
    """
    mat = np.asarray(readouts, dtype=np.int8)
    if mat.ndim == 1:
        mat = mat[None, :]
    n_phys = len(enc.physical.nodes)
    if mat.shape[1] != n_phys:
        raise InputError(f"readout width {mat.shape[1]} != physical size {n_phys}")
    pos = {p: k for k, p in enumerate(enc.physical.nodes)}
    by_index = {q.index: q for q in enc.lg.qubits}
    graph = enc.lg.physical
    n_reads = mat.shape[0]
    out = np.zeros((n_reads, len(enc.logical_nodes)), dtype=np.int8)
    tie_breaks = np.zeros(n_reads, dtype=np.int64)
    unresolved: list[int] = []
    gen = rnglib.stream(seed, "decode")
    for col, n in enumerate(enc.logical_nodes):
        q = by_index[n]
        copies = [pos[d] for d in q.data if graph.is_active(d) and d in pos]
        if len(copies) < 2:
            unresolved.append(n)
            continue
        votes = mat[:, copies].sum(axis=1)
        sign = np.sign(votes).astype(np.int8)
        ties = sign == 0
        if ties.any():
            coin = gen.choice([-1, 1], size=int(ties.sum())).astype(np.int8)
            sign[ties] = coin
            tie_breaks[ties] += 1
        out[:, col] = sign
    return DecodedSet(
        nodes=enc.logical_nodes,
        spins=out,
        tie_breaks=tie_breaks,
        unresolved_nodes=tuple(unresolved),
        unusable=bool(unresolved),
    )


# ---------------------------------------------------------------------------
# baselines and penalty selection
# ---------------------------------------------------------------------------

def c_strategy_success(p: float, k: int = C_STRATEGY_COPIES) -> float:
    """Success of the best of ``k`` independent unencoded copies."""
    if not 0.0 <= p <= 1.0:
        raise RangeError(f"probability must be in [0, 1], got {p}")
    if int(k) != k or k < 1:
        raise InputError(f"copy count must be a positive integer, got {k}")
    return 1.0 - (1.0 - p) ** int(k)


def optimal_penalty(success_by_gamma: dict[float, float]) -> float | None:
    """Penalty strength with the highest success; ties pick the smaller gamma.

    Returns ``None`` (the distinguished "fail" marker) when every penalty
    yields zero success.
    """
    if not success_by_gamma:
        raise InputError("no penalty sweep results")
    for g, p in success_by_gamma.items():
        if p < 0:
            raise RangeError(f"negative success {p} at gamma={g}")
    if all(p == 0 for p in success_by_gamma.values()):
        return None
    best = max(success_by_gamma.values())
    return min(g for g, p in success_by_gamma.items() if p == best)
