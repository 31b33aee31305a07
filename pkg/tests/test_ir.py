import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact.checker import sample_params
from artifact.errors import MissingInput, OutOfBounds, ShapeMismatch, UnsupportedConstruct
from artifact.expr import Cmp, Const, Get, Op, Var
from artifact.frontend import Assign
from artifact.ir import (
    array_extents, build_invariant_graph, dump_graph, dump_ir, interpret_kernel, lower_to_ir,
)
from artifact.lifting import build_scc_dag

from conftest import CORPUS, DATA, kernel, src
from oracles import evc


def graph_of(ast):
    return build_invariant_graph(lower_to_ir(ast))


def ones(ast, **scalars):
    ext = array_extents(ast, scalars)
    arrs = {a: np.ones(tuple(hi - lo + 1 for lo, hi in e)) for a, e in ext.items()}
    return {**arrs, **scalars}


# ------------------------------------------------------------------ lowering


def test_diag_has_two_nested_regions(diag):
    mod = lower_to_ir(diag)
    assert [(r.id, r.level, r.parent) for r in mod.regions] == [(0, 2, None), (1, 1, 0)]
    calls = [op for op in mod.top.ops if op.kind == "Loopcall"]
    assert len(calls) == 1 and calls[0].region == 1


def test_copy_loop_op_kinds():
    ast = src("""
        subroutine copy(A, B, n)
          integer :: n
          real :: A(n), B(n)
          do i = 1, n
            B(i) = A(i)
          end do
        end subroutine
    """)
    kinds = [op.kind for op in lower_to_ir(ast).top.ops]
    assert kinds == ["Input", "Bound", "Phi", "Get", "Set", "Return"]


def test_loop_phi_carries_first_iteration_guard(diag):
    mod = lower_to_ir(diag)
    inner = mod.region(1)
    phi = mod.producer(inner.phi)
    assert phi.attrs["loop"] is True
    assert phi.attrs["conds"] == (Cmp("==", Var("i"), Const(1)), Cmp("!=", Var("i"), Const(1)))
    assert phi.inputs[0] == inner.record_input


def test_if_phi_guards_are_exclusive():
    mod = lower_to_ir(kernel("boundary_1d"))
    phis = [op for op in mod.top.ops if op.kind == "Phi" and not op.attrs["loop"]]
    assert len(phis) == 1
    conds = phis[0].attrs["conds"]
    assert len(conds) == 3 and len(phis[0].inputs) == 3
    for n in range(1, 7):
        for i in range(1, n + 1):
            held = [evc(c, {"i": i, "n": n}) for c in conds]
            assert sum(held) == 1


def test_scalar_temp_read_before_write_is_rejected():
    ast = src("""
        subroutine lag(A, B, n)
          integer :: n
          real :: A(n), B(n), s
          do i = 1, n
            B(i) = s
            s = A(i)
          end do
        end subroutine
    """)
    with pytest.raises(UnsupportedConstruct):
        lower_to_ir(ast)


def test_dump_ir_is_deterministic():
    for name in CORPUS:
        assert dump_ir(lower_to_ir(kernel(name))) == dump_ir(lower_to_ir(kernel(name)))


# ----------------------------------------------------------- invariant graph


def test_diag_level1_vertices(diag):
    g = graph_of(diag)
    (lg,) = g.levels[1]
    names = [g.vertices[v].name for v in lg.vertices]
    assert names == ["B", "A", "i", "phi1_B", "get1_A", "get2_A", "add1", "B_1"]
    # every vertex but phi and the Set is its own component
    assert len(build_scc_dag(lg).components) == 7


def test_diag_cross_edge_and_dual_map(diag):
    g = graph_of(diag)
    outer, inner = g.subgraphs[0], g.subgraphs[1]
    (lc,) = outer.loopcalls
    assert g.cross_edges == [(inner.phi, lc)]
    assert g.dual_map[lc] == [(outer.phi, inner.record_input), (outer.inputs[1], inner.inputs[1])]


@pytest.mark.parametrize("name", CORPUS)
def test_loopcalls_map_to_one_region(name):
    g = graph_of(kernel(name))
    seen = {}
    for lg in g.subgraphs.values():
        for lc in lg.loopcalls:
            v = g.vertices[lc]
            assert v.level >= 2
            seen.setdefault(v.attrs["region"], []).append(lc)
    assert all(len(v) == 1 for v in seen.values())
    assert set(seen) == {rid for rid in g.subgraphs if rid != 0}
    for lc, pairs in g.dual_map.items():
        inner = g.subgraphs[g.vertices[lc].attrs["region"]]
        actuals = [a for a, _ in pairs]
        formals = [f for _, f in pairs]
        assert len(set(actuals)) == len(actuals)
        assert sorted(formals) == sorted(inner.inputs)


def test_single_iteration_loop_has_no_carried_edges():
    ast = src("""
        subroutine once(A, B, n)
          integer :: n
          real :: A(0:n), B(0:n)
          do i = 1, 1
            B(i) = A(i) + A(i-1)
            B(i+1) = B(i)
          end do
        end subroutine
    """)
    g = graph_of(ast)
    assert not any(e.carried for e in g.top.edges)


def test_buffered_cycle_spans_both_writes():
    g = graph_of(kernel("buffered_1d"))
    dag = build_scc_dag(g.top)
    big = [c for c in dag.components if len(c) > 1]
    assert len(big) == 1
    names = {g.vertices[v].name for v in big[0]}
    assert {"phi1_B_T", "T_1", "B_1"} <= names


@pytest.mark.parametrize("name", CORPUS)
def test_scc_dag_is_topological(name):
    g = graph_of(kernel(name))
    for lg in g.subgraphs.values():
        dag = build_scc_dag(lg)
        assert dag.is_topological()
        assert sorted(v for c in dag.components for v in c) == sorted(lg.vertices)


def test_dump_graph_golden(diag):
    expected = (DATA / "diag_2d2p.graph.txt").read_text()
    assert dump_graph(graph_of(diag)) == expected


def test_dump_graph_dot_is_well_formed(diag):
    text = dump_graph(graph_of(diag), "dot")
    assert text.startswith("digraph") and text.rstrip().endswith("}")
    assert text.count("{") == text.count("}")


# --------------------------------------------- graph vs per-iteration unrolling
#
# The invariant graph describes one symbolic iteration.  Unrolling the loop N
# times and recording which earlier definition each write observes must give
# the same def-use relation, with "carried" marking reads of the previous
# iteration.  Sources are (kind, what, carried): an output record write is
# named by its ordinal among the body's writes.

STRAIGHT = ["jacobi_1d3p", "buffered_1d", "unroll2_1d3p", "unroll3_1d3p",
            "diag_2d2p", "heat_2d5p", "multi_output_2d", "unroll2_2d5p"]


def graph_sources(g, lg):
    sets = [v for v in lg.vertices if g.vertices[v].op == "Set"]
    ordinal = {v: k for k, v in enumerate(sets)}

    def trace(v, carried, out):
        vx = g.vertices[v]
        if vx.op == "Set":
            out.add(("set", ordinal[v], carried))
        elif vx.op == "Input":
            out.add(("input", "record" if vx.attrs["type"] == "record" else vx.attrs["name"], False))
        elif vx.op == "Phi" and vx.attrs.get("loop"):
            for p, _ in lg.preds[v]:
                trace(p, True, out)
        else:
            for p, car in lg.preds[v]:
                trace(p, carried or car, out)

    rel = set()
    for s in sets:
        found = set()
        for p, car in lg.preds[s]:
            trace(p, car, found)
        rel |= {(ordinal[s], f) for f in found}
    return rel


def unrolled_sources(body, outputs, n_iter, params=()):
    rel = set()
    last = None  # (ordinal, iteration) of the latest record write
    for it in range(n_iter):
        temps = {}

        def record():
            if last is None:
                return ("input", "record", False)
            return ("set", last[0], last[1] != it)

        def reads(e):
            if isinstance(e, Get):
                return {record()} if e.array in outputs else {("input", e.array, False)}
            if isinstance(e, Var):
                if e.name in params:
                    return {("input", e.name, False)}
                return set(temps.get(e.name, ()))
            if isinstance(e, Op):
                return set().union(*(reads(a) for a in e.args))
            return set()

        k = 0
        for s in body:
            assert isinstance(s, Assign)
            found = reads(s.value)
            if s.index is None:
                temps[s.target] = found
                continue
            found.add(record())
            rel |= {(k, f) for f in found}
            last = (k, it)
            k += 1
    return rel


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(STRAIGHT), st.integers(min_value=2, max_value=4))
def test_graph_matches_unrolled_iterations(name, n_iter):
    ast = kernel(name)
    g = graph_of(ast)
    outputs = {a.name for a in ast.outputs}
    params = {p.name for p in ast.params if p.kind == "float"}
    for lg in g.levels[1]:
        assert all(isinstance(s, Assign) for s in lg.loop.body)
        assert graph_sources(g, lg) == unrolled_sources(lg.loop.body, outputs, n_iter, params)


def test_scalar_temps_follow_the_unrolling():
    ast = src("""
        subroutine tmp(A, B, n)
          integer :: n
          real :: A(0:n+1), B(0:n+1), s
          do i = 1, n
            s = A(i) + B(i-1)
            B(i) = s * 2.0
            B(i+1) = s
          end do
        end subroutine
    """)
    g = graph_of(ast)
    expected = unrolled_sources(ast.loop.body, {"B"}, 3)
    assert graph_sources(g, g.top) == expected
    # s reads the record before this iteration's writes
    assert (0, ("set", 1, True)) in expected


# ---------------------------------------------------------------- interpreter


def test_interpret_diag_all_ones(diag):
    out = interpret_kernel(diag, ones(diag, n=3, m=3))["B"]
    assert out.shape == (4, 4)
    assert np.all(out[1:, 1:] == 2.0)
    assert np.all(out[0, :] == 1.0) and np.all(out[:, 0] == 1.0)


def test_interpret_sequential_semantics():
    # B(i) reads B(i-1) already overwritten in this run: a prefix sum
    ast = src("""
        subroutine scan(A, B, n)
          integer :: n
          integer :: A(0:n), B(0:n)
          do i = 1, n
            B(i) = B(i-1) + A(i)
          end do
        end subroutine
    """)
    a = np.arange(6)
    b = np.zeros(6, dtype=np.int64)
    out = interpret_kernel(ast, {"A": a, "B": b, "n": 5})["B"]
    assert list(out) == [0, 1, 3, 6, 10, 15]
    assert list(b) == [0] * 6  # inputs are not mutated


def test_interpret_empty_iteration_space(diag):
    ins = ones(diag, n=0, m=2)
    out = interpret_kernel(diag, ins)["B"]
    assert np.array_equal(out, ins["B"])


def test_interpret_errors(diag):
    ins = ones(diag, n=2, m=2)
    with pytest.raises(MissingInput):
        interpret_kernel(diag, {k: v for k, v in ins.items() if k != "A"})
    with pytest.raises(ShapeMismatch):
        interpret_kernel(diag, {**ins, "A": np.ones((2, 2))})
    short = src("""
        subroutine over(A, B, n)
          integer :: n
          real :: A(1:n), B(1:n)
          do i = 1, n
            B(i) = A(i+1)
          end do
        end subroutine
    """)
    with pytest.raises(OutOfBounds) as ei:
        interpret_kernel(short, {"A": np.ones(3), "B": np.ones(3), "n": 3})
    assert ei.value.extent == (1, 3)


@pytest.mark.parametrize("name", CORPUS)
def test_interpret_corpus_runs(name):
    ast = kernel(name)
    params = sample_params(ast, np.random.default_rng(0))
    ins = ones(ast, **params)
    for p in ast.params:
        ins.setdefault(p.name, 0.5)
    out = interpret_kernel(ast, ins)
    assert set(out) == {a.name for a in ast.outputs}
