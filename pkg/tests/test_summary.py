from itertools import product
from types import SimpleNamespace

import pytest
from hypothesis import given, settings, strategies as st

from artifact.checker import OracleConfig, prove_equal, verify_against_oracle
from artifact.errors import MissingPostcondition, RuleMismatch
from artifact.expr import (
    INDEX, NUM, Get, Var, add, cmp, conj, const, ivar, negate, normalize, offset, render,
    render_cond,
)
from artifact.lifting import lift_kernel
from artifact.summary import (
    Branch, GenBranch, GeneralizedSummary, RecordSummary, Summary, apply_rule, array_input, merge_phi,
    render_summary, scalar, set_into, shift_time, substitute,
)

from conftest import src
from oracles import evc

i, j, t = ivar("i"), ivar("j"), ivar("t")
x1, x2 = Var("x1", INDEX), Var("x2", INDEX)


def vertex(op_kind, **attrs):
    return SimpleNamespace(op=op_kind, attrs=attrs, name=f"v_{op_kind}")


def bound(index, begin, end, step=1):
    return apply_rule(vertex("Bound", index=index, begin=begin, end=end, step=step), [])


# ------------------------------------------------------------ rules


def test_input_array_is_free_variable():
    s = apply_rule(vertex("Input", type="array", name="A", rank=2, kind="float"), [])
    assert s.branches == () and s.pos == ("x1", "x2")
    assert s.default == Get("A", (x1, x2), "float")
    assert render_summary(s) == "A = A"


def test_input_record_names_initial_values():
    s = apply_rule(vertex("Input", type="record", fields=(("B", 1, "float"), ("C", 1, "int"))), [])
    assert isinstance(s, RecordSummary) and s.names == ("B", "C")
    assert s.get("B").default == Get("B0", (x1,), "float")
    assert s.get("C").default == Get("C0", (x1,), "int")


def test_input_num_scalar():
    s = apply_rule(vertex("Input", type="num", name="c"), [])
    assert s.default == Var("c", NUM)


def test_bound_is_ranged_index():
    s = bound("i", const(1), Var("n"))
    assert s.default == i
    assert render_cond(s.domain) == "1 <= i && i <= n"
    s2 = bound("i", const(1), Var("n"), 2)
    assert "mod(i - 1, 2) == 0" in render_cond(s2.domain)


def test_scalar_add():
    s = apply_rule(vertex("ScalarOp", op="+"), [bound("i", const(1), Var("n")), scalar(const(1))])
    assert normalize(s.default) == normalize(add(i, const(1)))
    assert s.branches == ()


def test_set_overrides_one_position():
    B = array_input("B0", 2, subject="B")
    a = apply_rule(vertex("Get", index=(i, j)), [array_input("A", 2)])
    b = apply_rule(vertex("Get", index=(add(i, const(-1)), add(j, const(-1)))), [array_input("A", 2)])
    val = apply_rule(vertex("ScalarOp", op="+"), [a, b])
    s = apply_rule(vertex("Set", index=(i, j)), [B, val])
    assert len(s.branches) == 1
    (br,) = s.branches
    assert render_cond(br.cond) == "x1 == i && x2 == j"
    assert render(normalize(br.exp)) == "A(i - 1, j - 1) + A(i, j)"
    assert s.default == Get("B0", (x1, x2))


def test_get_reads_through_set():
    s = set_into(array_input("B0", 1, subject="B"), (i,), scalar(Get("A", (i,))))
    at_i = apply_rule(vertex("Get", index=(i,)), [s])
    assert at_i.branches == () and at_i.default == Get("A", (i,))
    before = apply_rule(vertex("Get", index=(add(i, const(-1)),)), [s])
    assert before.branches == () and normalize(before.default) == normalize(Get("B0", (add(i, const(-1)),)))


def test_loop_phi_takes_back_edge():
    a, b = scalar(const(1)), scalar(const(2))
    assert apply_rule(vertex("Phi", loop=True), [a, b]) == b


def test_if_phi_merges_guards():
    c = cmp("==", i, const(1))
    s = apply_rule(vertex("Phi", conds=(c, negate(c))), [scalar(const(0)), scalar(Get("A", (i,)))])
    assert len(s.branches) == 1
    assert s.branches[0].cond == c and s.branches[0].exp == const(0)
    assert s.default == Get("A", (i,))


def test_loopcall_requires_post():
    v = vertex("Loopcall", formals=(("array", "A"),))
    with pytest.raises(MissingPostcondition):
        apply_rule(v, [array_input("A", 1)])


def test_loopcall_substitutes_formals():
    post = Summary((Branch(cmp("<=", x1, Var("n")), Get("Af", (x1,))),), Get("B0", (x1,)), ("x1",), "B")
    v = vertex("Loopcall", formals=(("array", "Af"),))
    out = apply_rule(v, [array_input("A", 1)], post)
    assert out.branches[0].exp == Get("A", (x1,))


def test_rule_mismatch():
    with pytest.raises(RuleMismatch):
        apply_rule(vertex("Frobnicate"), [])
    with pytest.raises(RuleMismatch):
        apply_rule(vertex("Set", index=(i,)), [scalar(const(1)), scalar(const(2))])
    with pytest.raises(RuleMismatch):
        apply_rule(vertex("Get", index=(i, j)), [array_input("A", 1)])


# ------------------------------------------------------------ merge exclusivity


def _exclusive(s: Summary, names, grid=range(-3, 6)):
    for point in product(grid, repeat=len(names)):
        env = dict(zip(names, point))
        hits = [b for b in s.branches if evc(b.cond, env)]
        assert len(hits) <= 1, (env, hits)


guards = st.lists(st.integers(-2, 4), min_size=1, max_size=3, unique=True)


@settings(max_examples=60, deadline=None)
@given(guards, st.integers(0, 3))
def test_merge_preserves_exclusivity(points, nval):
    # guards "i == p" for each p, then the complement as the default path
    conds = [cmp("==", i, const(p)) for p in points]
    rest = conj(*[negate(c) for c in conds])
    inputs = []
    for k, c in enumerate(conds):
        body = Summary((Branch(cmp("==", x1, i), const(k % (nval + 1))),), Get("B0", (x1,)), ("x1",), "B")
        inputs.append((body, c))
    inputs.append((array_input("B0", 1, subject="B"), rest))
    merged = merge_phi(inputs)
    _exclusive(merged, ["i", "x1"])


# ------------------------------------------------------------ shift and substitute


def test_shift_bounds():
    s = Summary((Branch(conj(cmp("<=", const(1), x1), cmp("<=", x1, t)), Get("A", (x1,))),), Get("B0", (x1,)), ("x1",))
    shifted = shift_time(s, -1)
    assert render_cond(shifted.branches[0].cond) == "1 <= x1 && x1 <= t - 1"


def test_shift_without_t_is_identity():
    s = Summary((Branch(cmp("<=", x1, Var("n")), Get("A", (x1,))),), Get("B0", (x1,)), ("x1",))
    assert shift_time(s, -1) == s
    assert shift_time(s, 3) == s


def test_shift_nested_get():
    s = scalar(Get("A", (add(t, const(1)),)))
    assert shift_time(s, -1).default == Get("A", (t,))


def test_shift_generalized():
    g = GeneralizedSummary("t", (GenBranch(Get("A", (x1,)), cmp("<=", x1, t), (("x1", const(1), t),), ()),),
                           array_input("B0", 1, subject="B"))
    back = shift_time(shift_time(g, -1), 1)
    assert back == g


_offs = st.integers(-3, 3)


@settings(max_examples=100, deadline=None)
@given(_offs, _offs, st.integers(-4, 4))
def test_shift_inverse(a, b, d):
    s = Summary(
        (Branch(conj(cmp("<=", offset(t, a), x1), cmp("<=", x1, offset(t, b))), Get("A", (offset(x1, a),))),),
        Get("B0", (x1,)), ("x1",), "B", cmp("<=", t, Var("n")),
    )
    assert shift_time(shift_time(s, d), -d) == s
    assert shift_time(shift_time(s, -1), 1) == s


def test_substitute_array_and_empty():
    post = Summary((Branch(cmp("<=", x1, Var("n")), add(Get("Af", (x1,)), Get("Af", (add(x1, const(1)),)))),),
                   Get("B0", (x1,)), ("x1",), "B")
    assert substitute(post, {}) == post
    out = substitute(post, {"Af": "A"})
    assert render(out.branches[0].exp) == "A(x1) + A(x1 + 1)"


def test_substitute_bound_parameter_against_interpreter():
    # lift with a symbolic lower bound, inline lo = 2 afterwards, and compare
    # with the kernel whose lower bound is literally 2
    generic = src("""
        subroutine s(A, B, lo, n)
          integer :: lo, n
          real :: A(0:n+1), B(0:n+1)
          do i = lo, n
            B(i) = A(i-1) + A(i+1)
          end do
        end subroutine
    """)
    fixed = src("""
        subroutine s(A, B, n)
          integer :: n
          real :: A(0:n+1), B(0:n+1)
          do i = 2, n
            B(i) = A(i-1) + A(i+1)
          end do
        end subroutine
    """)
    post = lift_kernel(generic).post
    inlined = substitute(post, {"lo": const(2)})
    assert "lo" not in render_summary(inlined)
    rep = verify_against_oracle(fixed, inlined, OracleConfig(trials=20))
    assert rep.passed, rep.text()
    assert prove_equal(inlined, lift_kernel(fixed).post).equal


# ------------------------------------------------------------ rendering


def test_render_identity():
    assert render_summary(array_input("B0", 1, subject="B")) == "B = B0"


def test_render_two_cases():
    s = Summary((Branch(cmp("<=", x1, Var("n")), Get("A", (x1,))),), Get("B0", (x1,)), ("x1",), "B")
    assert render_summary(s) == "B(x1) =\n  x1 <= n -> A(x1)\n  otherwise -> B0(x1)"
