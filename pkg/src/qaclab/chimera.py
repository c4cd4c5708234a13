"""Chimera-style qubit graphs and the encoded logical graph on top of them.

Layout conventions (fixed, relied on by every other module):

* An ``L x L`` grid of unit cells, each a complete bipartite ``K_{r,r}``
  between side 0 and side 1 (``r = 4`` half-cell size by default).
* Qubit index for cell ``(row, col)``, side ``s``, offset ``k``::

      index = (row * L + col) * 2r + s * r + k

  Cells are row-major; within a cell, side varies before offset.
* Side 0 qubits couple to the vertically adjacent cell (same column, same
  offset); side 1 qubits couple horizontally (same row, same offset).
* Encoded logical qubits, two per cell:

  - slot 0: data = side 0 offsets {0, 1, 2}, penalty = side 1 offset 3
  - slot 1: data = side 1 offsets {0, 1, 2}, penalty = side 0 offset 3

  Logical index for cell ``(row, col)``, slot ``t`` is ``2*(row*L+col) + t``.
  Copy ``k`` of one logical qubit couples only to copy ``k`` of a logical
  neighbour, so each logical coupler is backed by up to 3 physical couplers
  and the hole-free logical graph has degree <= 3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InputError, ParseError, UnsupportedCodeError

OPERATIONAL = "operational"
PENALTY_MISSING = "penalty_missing"
INACTIVE = "inactive"


# ---------------------------------------------------------------------------
# physical graph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChimeraGraph:
    """Physical qubit graph: an L x L Chimera grid minus a set of holes."""

    L: int
    r: int
    holes: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.L < 1:
            raise InputError(f"grid size must be >= 1, got L={self.L}")
        if self.r < 1:
            raise InputError(f"half-cell size must be >= 1, got r={self.r}")
        n = self.num_sites
        bad = [q for q in self.holes if not 0 <= q < n]
        if bad:
            raise InputError(f"hole indices out of range [0, {n}): {sorted(bad)}")

    @property
    def num_sites(self) -> int:
        """Total index space, holes included."""
        return 2 * self.r * self.L * self.L

    def index(self, row: int, col: int, side: int, offset: int) -> int:
        L, r = self.L, self.r
        if not (0 <= row < L and 0 <= col < L):
            raise InputError(f"cell ({row}, {col}) outside {L}x{L} grid")
        if side not in (0, 1):
            raise InputError(f"side must be 0 or 1, got {side}")
        if not 0 <= offset < r:
            raise InputError(f"offset must be in [0, {r}), got {offset}")
        return (row * L + col) * 2 * r + side * r + offset

    def coords(self, index: int) -> tuple[int, int, int, int]:
        """Inverse of :meth:`index`: ``(row, col, side, offset)``."""
        if not 0 <= index < self.num_sites:
            raise InputError(f"qubit index {index} outside [0, {self.num_sites})")
        cell, within = divmod(index, 2 * self.r)
        side, offset = divmod(within, self.r)
        row, col = divmod(cell, self.L)
        return row, col, side, offset

    def is_active(self, index: int) -> bool:
        return 0 <= index < self.num_sites and index not in self.holes

    @property
    def active_qubits(self) -> list[int]:
        return [q for q in range(self.num_sites) if q not in self.holes]

    def edges(self) -> list[tuple[int, int]]:
        """Sorted list of couplers (i < j) between active qubits."""
        L, r = self.L, self.r
        out = []
        for row in range(L):
            for col in range(L):
                for k in range(r):
                    a = self.index(row, col, 0, k)
                    # intra-cell bipartite couplers
                    for m in range(r):
                        b = self.index(row, col, 1, m)
                        if self.is_active(a) and self.is_active(b):
                            out.append((a, b))
                    # side 0 couples to the cell below, same offset
                    if row + 1 < L:
                        b = self.index(row + 1, col, 0, k)
                        if self.is_active(a) and self.is_active(b):
                            out.append((a, b))
                    # side 1 couples to the cell to the right, same offset
                    a1 = self.index(row, col, 1, k)
                    if col + 1 < L:
                        b = self.index(row, col + 1, 1, k)
                        if self.is_active(a1) and self.is_active(b):
                            out.append((a1, b))
        out = [(min(a, b), max(a, b)) for a, b in out]
        out.sort()
        return out

    def counts(self) -> tuple[int, int]:
        """(active qubit count, active coupler count)."""
        return len(self.active_qubits), len(self.edges())


def build_chimera(L: int, r: int = 4, holes=()) -> ChimeraGraph:
    """Construct an L x L Chimera graph with the given inactive qubits."""
    return ChimeraGraph(L=L, r=r, holes=frozenset(int(q) for q in holes))


def write_graph(graph: ChimeraGraph, path) -> None:
    """Serialize as a header line ``L r`` plus one inactive index per line."""
    lines = [f"{graph.L} {graph.r}"]
    lines += [str(q) for q in sorted(graph.holes)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_graph(path) -> ChimeraGraph:
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    if not raw:
        raise ParseError(f"{path}: empty graph file")
    head = raw[0].split()
    if len(head) != 2:
        raise ParseError(f"{path}: header must be 'L r', got {raw[0]!r}")
    try:
        L, r = int(head[0]), int(head[1])
        holes = [int(tok) for tok in raw[1:]]
    except ValueError as exc:
        raise ParseError(f"{path}: non-integer token ({exc})") from None
    return build_chimera(L, r, holes)


# ---------------------------------------------------------------------------
# logical graph of the [[3, 1]] repetition encoding with a penalty qubit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogicalQubit:
    index: int
    data: tuple[int, int, int]
    penalty: int
    status: str


@dataclass(frozen=True)
class LogicalGraph:
    """Encoded problem graph: two logical qubits per cell, degree <= 3."""

    L: int
    physical: ChimeraGraph
    qubits: tuple[LogicalQubit, ...]
    # (i, j) with i < j -> tuple of backing physical couplers
    edges: dict[tuple[int, int], tuple[tuple[int, int], ...]]

    @property
    def nodes(self) -> list[int]:
        """Logical qubits usable as problem variables."""
        return [q.index for q in self.qubits if q.status != INACTIVE]

    def status_counts(self) -> dict[str, int]:
        out = {OPERATIONAL: 0, PENALTY_MISSING: 0, INACTIVE: 0}
        for q in self.qubits:
            out[q.status] += 1
        return out


def build_logical_graph(graph: ChimeraGraph) -> LogicalGraph:
    """Derive the encoded logical graph from a physical graph.

    Statuses: all 3 data qubits active -> ``operational`` (or
    ``penalty_missing`` when the penalty qubit is a hole); any data hole
    makes the logical qubit ``inactive``.  A logical coupler is kept when
    both endpoints are usable and at least one backing physical coupler
    survives; the backing list is recorded per edge.
    """
    if graph.r != 4:
        raise UnsupportedCodeError(
            f"encoding needs half-cells of 4 qubits (3 data + 1 penalty), got r={graph.r}"
        )
    L = graph.L
    qubits = []
    for row in range(L):
        for col in range(L):
            for slot in (0, 1):
                data_side, pen_side = (0, 1) if slot == 0 else (1, 0)
                data = tuple(graph.index(row, col, data_side, k) for k in range(3))
                pen = graph.index(row, col, pen_side, 3)
                if all(graph.is_active(q) for q in data):
                    status = OPERATIONAL if graph.is_active(pen) else PENALTY_MISSING
                else:
                    status = INACTIVE
                qubits.append(
                    LogicalQubit(index=2 * (row * L + col) + slot, data=data, penalty=pen, status=status)
                )

    def usable(i):
        return qubits[i].status != INACTIVE

    phys_edges = set(graph.edges())

    def backing(i, j):
        pairs = []
        for k in range(3):
            a, b = qubits[i].data[k], qubits[j].data[k]
            if (min(a, b), max(a, b)) in phys_edges:
                pairs.append((min(a, b), max(a, b)))
        return tuple(pairs)

    edges = {}
    for row in range(L):
        for col in range(L):
            base = 2 * (row * L + col)
            # intra-cell coupler between the two slots
            cand = [(base, base + 1)]
            # slot 0 (data on side 0) couples to the cell below
            if row + 1 < L:
                cand.append((base, 2 * ((row + 1) * L + col)))
            # slot 1 (data on side 1) couples to the cell to the right
            if col + 1 < L:
                cand.append((base + 1, 2 * (row * L + col + 1) + 1))
            for i, j in cand:
                if not (usable(i) and usable(j)):
                    continue
                pairs = backing(i, j)
                if pairs:
                    edges[(i, j)] = pairs
    return LogicalGraph(L=L, physical=graph, qubits=tuple(qubits), edges=edges)


def ideal_logical_coupler_count(L: int) -> int:
    """Hole-free logical coupler count: one per cell plus two inter-cell runs."""
    if L < 1:
        raise InputError(f"L must be >= 1, got {L}")
    return L * (3 * L - 2)


def effective_L(coupler_count: int) -> float:
    """Grid size whose ideal coupler count equals the actual one.

    Positive root of ``L_eff * (3 L_eff - 2) = coupler_count``; 0 maps to 0.
    """
    n = int(coupler_count)
    if n < 0:
        raise InputError(f"coupler count must be >= 0, got {n}")
    if n == 0:
        return 0.0
    return (1.0 + math.sqrt(1.0 + 3.0 * n)) / 3.0


def write_logical_map(lg: LogicalGraph, path) -> None:
    """Sidecar mapping: one line per logical qubit, ``index d0 d1 d2 penalty status``."""
    with open(path, "w") as fh:
        fh.write(f"{lg.L} {lg.physical.r}\n")
        for q in lg.qubits:
            d = " ".join(str(x) for x in q.data)
            fh.write(f"{q.index} {d} {q.penalty} {q.status}\n")
