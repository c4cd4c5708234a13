"""Ising spin-glass instances, analog control noise, and gauge transforms.

An instance stores fields ``h`` densely over its node set (generated problems
have ``h = 0`` everywhere) and couplers ``J`` sparsely with keys ``(i, j)``,
``i < j``.  Generated values are drawn from ``+/- {1/6, 1/3, 1/2}``; with
``exact_scale = 6`` every term of the energy is an integer multiple of ``1/6``
and ground-state adjudication can use exact integer arithmetic.

Spin configurations are numpy ``int8`` arrays of ``+/-1`` aligned with
``inst.nodes`` (sorted ascending).  ``spins_to_array`` converts mappings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rnglib
from .chimera import ChimeraGraph, LogicalGraph
from .errors import InputError, ParseError, RangeError

COUPLER_MAGNITUDES = (1, 2, 3)  # numerators over EXACT_SCALE
EXACT_SCALE = 6


# ---------------------------------------------------------------------------
# instance container
# ---------------------------------------------------------------------------

@dataclass
class IsingInstance:
    kind: str  # "logical" | "physical"
    nodes: tuple[int, ...]
    h: dict[int, float]
    J: dict[tuple[int, int], float]
    exact_scale: int | None = None
    provenance: dict = field(default_factory=dict)
    graph: object | None = None  # ChimeraGraph or LogicalGraph, when known

    _arrays: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("logical", "physical"):
            raise InputError(f"kind must be 'logical' or 'physical', got {self.kind!r}")
        self.nodes = tuple(sorted(int(n) for n in self.nodes))
        nodeset = set(self.nodes)
        if set(self.h) - nodeset:
            raise InputError("field keys outside the node set")
        for (i, j) in self.J:
            if i >= j:
                raise InputError(f"coupler key ({i}, {j}) not ordered i < j")
            if i not in nodeset or j not in nodeset:
                raise InputError(f"coupler ({i}, {j}) touches a missing node")
        if self.exact_scale is not None:
            s = self.exact_scale
            for v in list(self.h.values()) + list(self.J.values()):
                if abs(v * s - round(v * s)) > 1e-9:
                    raise InputError(
                        f"value {v!r} is not a multiple of 1/{s}; clear exact_scale"
                    )

    # -- array views -------------------------------------------------------

    def arrays(self) -> dict:
        """Cached numpy views used by solvers and batch energy evaluation."""
        if self._arrays is None:
            pos = {n: i for i, n in enumerate(self.nodes)}
            h_vec = np.zeros(len(self.nodes))
            for n, v in self.h.items():
                h_vec[pos[n]] = v
            ekeys = sorted(self.J)
            ei = np.array([pos[i] for i, j in ekeys], dtype=np.int32)
            ej = np.array([pos[j] for i, j in ekeys], dtype=np.int32)
            jv = np.array([self.J[k] for k in ekeys])
            arrs = {"pos": pos, "h": h_vec, "ei": ei, "ej": ej, "J": jv, "edges": ekeys}
            if self.exact_scale is not None:
                s = self.exact_scale
                arrs["h_int"] = np.rint(h_vec * s).astype(np.int64)
                arrs["J_int"] = np.rint(jv * s).astype(np.int64)
            self._arrays = arrs
        return self._arrays

    @property
    def num_spins(self) -> int:
        return len(self.nodes)


def spins_to_array(inst: IsingInstance, spins) -> np.ndarray:
    """Accept a mapping node->+/-1 or an aligned array; validate values."""
    if isinstance(spins, dict):
        try:
            arr = np.array([spins[n] for n in inst.nodes], dtype=np.int8)
        except KeyError as exc:
            raise InputError(f"spin missing for node {exc.args[0]}") from None
    else:
        arr = np.asarray(spins, dtype=np.int8)
        if arr.shape != (inst.num_spins,):
            raise InputError(
                f"spin array shape {arr.shape} != ({inst.num_spins},)"
            )
    if not np.all(np.abs(arr) == 1):
        raise InputError("spins must be +/-1")
    return arr


def energy(inst: IsingInstance, spins) -> float:
    """Classical Ising energy ``sum h_i s_i + sum J_ij s_i s_j``.

    Uses integer arithmetic at ``exact_scale`` when available, so two
    configurations with equal energy compare exactly equal.
    """
    s = spins_to_array(inst, spins)
    if inst.exact_scale is not None:
        return energy_scaled(inst, s) / inst.exact_scale
    a = inst.arrays()
    return float(a["h"] @ s + a["J"] @ (s[a["ei"]] * s[a["ej"]]).astype(np.float64))


def energy_scaled(inst: IsingInstance, spins) -> int:
    """Integer energy at scale ``exact_scale`` (errors when no scale is set)."""
    if inst.exact_scale is None:
        raise InputError("instance has no exact scale")
    s = spins_to_array(inst, spins).astype(np.int64)
    a = inst.arrays()
    return int(a["h_int"] @ s + a["J_int"] @ (s[a["ei"]] * s[a["ej"]]))


def energies(inst: IsingInstance, spin_matrix: np.ndarray) -> np.ndarray:
    """Row-wise energies of an ``(n_reads, num_spins)`` matrix of +/-1."""
    m = np.asarray(spin_matrix)
    if m.ndim != 2 or m.shape[1] != inst.num_spins:
        raise InputError(f"spin matrix shape {m.shape} incompatible")
    a = inst.arrays()
    prod = (m[:, a["ei"]] * m[:, a["ej"]]).astype(np.float64)
    return m.astype(np.float64) @ a["h"] + prod @ a["J"]


def energies_scaled(inst: IsingInstance, spin_matrix: np.ndarray) -> np.ndarray:
    if inst.exact_scale is None:
        raise InputError("instance has no exact scale")
    m = np.asarray(spin_matrix).astype(np.int64)
    a = inst.arrays()
    return m @ a["h_int"] + (m[:, a["ei"]] * m[:, a["ej"]]) @ a["J_int"]


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def _graph_topology(graph) -> tuple[str, list[int], list[tuple[int, int]]]:
    if isinstance(graph, LogicalGraph):
        return "logical", list(graph.nodes), sorted(graph.edges)
    if isinstance(graph, ChimeraGraph):
        return "physical", list(graph.active_qubits), graph.edges()
    raise InputError(f"unsupported graph type {type(graph)!r}")


def generate_instance(graph, seed: int) -> IsingInstance:
    """Random instance: ``h = 0``; each coupler uniform over +/- {1/6, 1/3, 1/2}."""
    kind, nodes, edges = _graph_topology(graph)
    if not edges:
        raise InputError("graph has no couplers to place an instance on")
    gen = rnglib.stream(seed, "instance")
    nums = gen.choice(COUPLER_MAGNITUDES, size=len(edges))
    signs = gen.choice([-1, 1], size=len(edges))
    J = {
        e: float(int(sg) * int(nm)) / EXACT_SCALE
        for e, sg, nm in zip(edges, signs, nums)
    }
    h = {n: 0.0 for n in nodes}
    return IsingInstance(
        kind=kind,
        nodes=tuple(nodes),
        h=h,
        J=J,
        exact_scale=EXACT_SCALE,
        provenance={"seed": int(seed)},
        graph=graph,
    )


# ---------------------------------------------------------------------------
# control noise
# ---------------------------------------------------------------------------

@dataclass
class NoiseDraw:
    """One realization of analog control noise for a given (instance, eta).

    Deltas are recorded before truncation; ``truncation_count`` is the number
    of post-addition values that had to be clipped back into [-1, 1].
    """

    eta: float
    seed: int
    delta_J: dict[tuple[int, int], float]
    delta_h: dict[int, float]
    truncation_count: int = 0


def draw_noise(inst: IsingInstance, eta: float, seed: int,
               noise_on_fields: bool | None = None) -> NoiseDraw:
    """Draw i.i.d. N(0, eta^2) deltas for every coupler (and optionally field).

    ``noise_on_fields=None`` enables field noise only when the instance has a
    nonzero field somewhere; the shipped experiments all use h = 0, which
    matches perturbing couplers only.
    """
    if eta < 0:
        raise RangeError(f"noise scale must be >= 0, got {eta}")
    if noise_on_fields is None:
        noise_on_fields = any(v != 0.0 for v in inst.h.values())
    if eta == 0.0:
        return NoiseDraw(eta=0.0, seed=int(seed), delta_J={}, delta_h={})
    gen = rnglib.stream(seed, "noise")
    ekeys = sorted(inst.J)
    dj = gen.normal(0.0, eta, size=len(ekeys))
    delta_J = {e: float(d) for e, d in zip(ekeys, dj)}
    delta_h = {}
    if noise_on_fields:
        dh = gen.normal(0.0, eta, size=len(inst.nodes))
        delta_h = {n: float(d) for n, d in zip(inst.nodes, dh)}
    return NoiseDraw(eta=float(eta), seed=int(seed), delta_J=delta_J, delta_h=delta_h)


def apply_noise(inst: IsingInstance, noise: NoiseDraw) -> tuple[IsingInstance, int]:
    """Add the deltas and clip to [-1, 1]; returns (instance, truncation count).

    The realized instance drops ``exact_scale`` (deltas are real numbers)
    unless the draw is the eta = 0 identity.
    """
    if noise.eta == 0.0:
        return inst, 0
    truncated = 0
    J = {}
    for e, v in inst.J.items():
        w = v + noise.delta_J.get(e, 0.0)
        if w > 1.0 or w < -1.0:
            truncated += 1
            w = max(-1.0, min(1.0, w))
        J[e] = w
    h = {}
    for n, v in inst.h.items():
        w = v + noise.delta_h.get(n, 0.0)
        if w > 1.0 or w < -1.0:
            truncated += 1
            w = max(-1.0, min(1.0, w))
        h[n] = w
    noise.truncation_count = truncated
    out = IsingInstance(
        kind=inst.kind,
        nodes=inst.nodes,
        h=h,
        J=J,
        exact_scale=None,
        provenance=dict(inst.provenance, noise_eta=noise.eta, noise_seed=noise.seed),
        graph=inst.graph,
    )
    return out, truncated


def perturb(inst: IsingInstance, eta: float, seed: int,
            noise_on_fields: bool | None = None) -> tuple[IsingInstance, NoiseDraw]:
    """Convenience wrapper: draw one noise realization and apply it."""
    noise = draw_noise(inst, eta, seed, noise_on_fields)
    out, _ = apply_noise(inst, noise)
    return out, noise


# ---------------------------------------------------------------------------
# gauges (spin-reversal transforms)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Gauge:
    """Spin-reversal transform ``a``: h -> a_i h_i, J -> a_i a_j J_ij."""

    assignment: tuple[int, ...]  # +/-1 aligned with the instance node order
    nodes: tuple[int, ...]

    def __post_init__(self):
        if len(self.assignment) != len(self.nodes):
            raise InputError("gauge assignment length mismatch")
        if any(a not in (-1, 1) for a in self.assignment):
            raise InputError("gauge entries must be +/-1")


def random_gauge(inst: IsingInstance, seed: int) -> Gauge:
    gen = rnglib.stream(seed, "gauge")
    a = gen.choice([-1, 1], size=inst.num_spins)
    return Gauge(assignment=tuple(int(x) for x in a), nodes=inst.nodes)


def apply_gauge(inst: IsingInstance, gauge: Gauge) -> IsingInstance:
    """Gauged copy; exact_scale survives (signs only).

    The gauged energy satisfies E_gauged(s) = E(a * s), so sampling the
    gauged instance and un-gauging readouts leaves physics unchanged.
    """
    if gauge.nodes != inst.nodes:
        raise InputError("gauge was drawn for a different node set")
    a = dict(zip(inst.nodes, gauge.assignment))
    h = {n: a[n] * v for n, v in inst.h.items()}
    J = {(i, j): a[i] * a[j] * v for (i, j), v in inst.J.items()}
    return IsingInstance(
        kind=inst.kind,
        nodes=inst.nodes,
        h=h,
        J=J,
        exact_scale=inst.exact_scale,
        provenance=dict(inst.provenance, gauged=True),
        graph=inst.graph,
    )


def ungauge_readout(gauge: Gauge, spins) -> np.ndarray:
    """Map readouts of the gauged instance back to the original frame."""
    arr = np.asarray(spins, dtype=np.int8)
    a = np.asarray(gauge.assignment, dtype=np.int8)
    return arr * a  # broadcasts over (n_reads, n) matrices too


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

def write_instance(inst: IsingInstance, path) -> None:
    """Text format: ``# key=value`` headers, then ``i j value`` lines.

    Fields are written densely (``i i value``) so the node set round-trips;
    values use shortest-repr decimal strings, which reparse to identical
    floats.
    """
    lines = [f"# kind={inst.kind}"]
    scale = "none" if inst.exact_scale is None else str(inst.exact_scale)
    lines.append(f"# scale={scale}")
    seed = inst.provenance.get("seed", "none")
    lines.append(f"# seed={seed}")
    for n in inst.nodes:
        lines.append(f"{n} {n} {inst.h.get(n, 0.0)!r}")
    for (i, j) in sorted(inst.J):
        lines.append(f"{i} {j} {inst.J[(i, j)]!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_instance(path, graph=None) -> IsingInstance:
    headers = {}
    h: dict[int, float] = {}
    J: dict[tuple[int, int], float] = {}
    nodes: list[int] = []
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" not in body:
                    raise ParseError(f"{path}:{ln}: malformed header {line!r}")
                k, v = body.split("=", 1)
                headers[k.strip()] = v.strip()
                continue
            toks = line.split()
            if len(toks) != 3:
                raise ParseError(f"{path}:{ln}: expected 'i j value', got {line!r}")
            try:
                i, j, v = int(toks[0]), int(toks[1]), float(toks[2])
            except ValueError:
                raise ParseError(f"{path}:{ln}: bad numeric token in {line!r}") from None
            if i == j:
                if i in h:
                    raise ParseError(f"{path}:{ln}: duplicate field for node {i}")
                h[i] = v
                nodes.append(i)
            else:
                key = (min(i, j), max(i, j))
                if key in J:
                    raise ParseError(f"{path}:{ln}: duplicate coupler {key}")
                J[key] = v
    if "kind" not in headers:
        raise ParseError(f"{path}: missing '# kind=' header")
    kind = headers["kind"]
    scale_tok = headers.get("scale", "none")
    scale = None if scale_tok == "none" else int(scale_tok)
    prov = {}
    if headers.get("seed", "none") != "none":
        prov["seed"] = int(headers["seed"])
    return IsingInstance(
        kind=kind,
        nodes=tuple(nodes),
        h=h,
        J=J,
        exact_scale=scale,
        provenance=prov,
        graph=graph,
    )
