from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qaclab import chimera
from qaclab.errors import InputError, ParseError, UnsupportedCodeError


def oracle_adjacent(g: chimera.ChimeraGraph, a: int, b: int) -> bool:
    # Independent pairwise rule, used to cross-check the constructive edge list.
    ra, ca, sa, ka = g.coords(a)
    rb, cb, sb, kb = g.coords(b)
    if not (g.is_active(a) and g.is_active(b)):
        return False
    if (ra, ca) == (rb, cb):
        return sa != sb
    if sa != sb or ka != kb:
        return False
    if sa == 0:
        return ca == cb and abs(ra - rb) == 1
    return ra == rb and abs(ca - cb) == 1


def oracle_edges(g: chimera.ChimeraGraph) -> set[tuple[int, int]]:
    n = g.num_sites
    return {
        (a, b)
        for a in range(n)
        for b in range(a + 1, n)
        if oracle_adjacent(g, a, b)
    }


@pytest.mark.parametrize("L,qubits,edges", [(1, 8, 16), (2, 32, 80)])
def test_counts_small_fixtures(L, qubits, edges):
    g = chimera.build_chimera(L)
    assert g.counts() == (qubits, edges)


@pytest.mark.parametrize("L", range(1, 7))
def test_edges_match_pairwise_oracle(L):
    g = chimera.build_chimera(L)
    assert set(g.edges()) == oracle_edges(g)
    assert g.counts() == (8 * L * L, 24 * L * L - 8 * L)


def test_edges_with_holes_match_oracle():
    g = chimera.build_chimera(3, holes=[0, 5, 17, 40, 41, 42, 43, 70])
    assert set(g.edges()) == oracle_edges(g)


def test_index_layout():
    g = chimera.build_chimera(2)
    # row-major cells, side before offset within the cell
    assert g.index(0, 0, 0, 0) == 0
    assert g.index(0, 0, 1, 0) == 4
    assert g.index(0, 1, 0, 0) == 8
    assert g.index(1, 0, 0, 0) == 16
    assert g.index(1, 1, 1, 3) == 31


@given(st.integers(1, 8), st.data())
def test_index_coords_roundtrip(L, data):
    g = chimera.build_chimera(L)
    q = data.draw(st.integers(0, g.num_sites - 1))
    assert g.index(*g.coords(q)) == q


@given(st.integers(1, 4), st.sets(st.integers(0, 31), max_size=10))
@settings(max_examples=60, deadline=None)
def test_holes_only_remove_incident_edges(L, holes):
    holes = {h for h in holes if h < 8 * L * L}
    full = set(chimera.build_chimera(L).edges())
    masked = set(chimera.build_chimera(L, holes=holes).edges())
    assert masked == {e for e in full if e[0] not in holes and e[1] not in holes}


def test_index_validation():
    g = chimera.build_chimera(2)
    with pytest.raises(InputError):
        g.index(2, 0, 0, 0)
    with pytest.raises(InputError):
        g.index(0, 0, 2, 0)
    with pytest.raises(InputError):
        g.coords(32)
    with pytest.raises(InputError):
        chimera.build_chimera(2, holes=[99])
    with pytest.raises(InputError):
        chimera.build_chimera(0)


# ---- logical graph ----

def test_logical_graph_hole_free_counts():
    for L in (1, 2, 3, 4):
        lg = chimera.build_logical_graph(chimera.build_chimera(L))
        assert len(lg.qubits) == 2 * L * L
        assert lg.status_counts() == {
            chimera.OPERATIONAL: 2 * L * L,
            chimera.PENALTY_MISSING: 0,
            chimera.INACTIVE: 0,
        }
        assert len(lg.edges) == chimera.ideal_logical_coupler_count(L)
        deg = {q.index: 0 for q in lg.qubits}
        for (i, j), backing in lg.edges.items():
            assert len(backing) == 3
            deg[i] += 1
            deg[j] += 1
        assert max(deg.values()) <= 3


def test_logical_qubit_layout():
    lg = chimera.build_logical_graph(chimera.build_chimera(2))
    q0 = lg.qubits[0]
    assert q0.data == (0, 1, 2)
    assert q0.penalty == 7
    q1 = lg.qubits[1]
    assert q1.data == (4, 5, 6)
    assert q1.penalty == 3


def test_backing_couplers_pair_same_copy():
    lg = chimera.build_logical_graph(chimera.build_chimera(3))
    g = lg.physical
    for (i, j), backing in lg.edges.items():
        for a, b in backing:
            ka = g.coords(a)[3]
            kb = g.coords(b)[3]
            assert ka == kb and ka < 3


def test_penalty_hole_keeps_qubit_usable():
    # qubit 7 is the penalty of logical 0 in cell (0,0)
    lg = chimera.build_logical_graph(chimera.build_chimera(2, holes=[7]))
    assert lg.qubits[0].status == chimera.PENALTY_MISSING
    assert 0 in lg.nodes
    # all logical edges survive, including those touching logical 0
    assert len(lg.edges) == chimera.ideal_logical_coupler_count(2)


def test_data_hole_deactivates_qubit_and_edges():
    # qubit 1 is a data copy of logical 0
    lg = chimera.build_logical_graph(chimera.build_chimera(2, holes=[1]))
    assert lg.qubits[0].status == chimera.INACTIVE
    assert 0 not in lg.nodes
    touching = [e for e in lg.edges if 0 in e]
    assert touching == []
    full = chimera.ideal_logical_coupler_count(2)
    # logical 0 sits in a corner cell: degree 2 (intra-cell + down)
    assert len(lg.edges) == full - 2


def test_unsupported_half_cell():
    with pytest.raises(UnsupportedCodeError):
        chimera.build_logical_graph(chimera.build_chimera(2, r=3))


# ---- counting helpers ----

def test_ideal_coupler_count_fixtures():
    assert chimera.ideal_logical_coupler_count(1) == 1
    assert chimera.ideal_logical_coupler_count(2) == 8
    assert chimera.ideal_logical_coupler_count(16) == 736


def test_effective_L_fixtures():
    assert chimera.effective_L(8) == pytest.approx(2.0, abs=1e-12)
    assert chimera.effective_L(0) == 0.0
    assert chimera.effective_L(7) == pytest.approx((1 + math.sqrt(22)) / 3, abs=1e-12)


@given(st.integers(1, 40))
def test_effective_L_inverts_ideal_count(L):
    n = chimera.ideal_logical_coupler_count(L)
    assert chimera.effective_L(n) == pytest.approx(L, abs=1e-12)


# ---- file round trip ----

def test_graph_file_roundtrip(tmp_path):
    g = chimera.build_chimera(3, holes=[2, 40, 41])
    p = tmp_path / "g.txt"
    chimera.write_graph(g, p)
    g2 = chimera.read_graph(p)
    assert g2 == g
    # deterministic bytes
    chimera.write_graph(g2, tmp_path / "g2.txt")
    assert (tmp_path / "g.txt").read_bytes() == (tmp_path / "g2.txt").read_bytes()


def test_graph_file_parse_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("2\n")
    with pytest.raises(ParseError):
        chimera.read_graph(p)
    p.write_text("2 4\nxyz\n")
    with pytest.raises(ParseError):
        chimera.read_graph(p)
