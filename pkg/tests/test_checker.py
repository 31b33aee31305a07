import pytest
from hypothesis import given, settings, strategies as st

from artifact.checker import (
    CheckerConfig, OracleConfig, default_limit, is_piecewise_affine, prove_equal, verify_against_oracle,
)
from artifact.errors import DomainTooLarge, ShapeMismatch, UnboundFreeVariable
from artifact.expr import INDEX, Cmp, Const, Get, Op, Var, exp_arrays, map_exp, offset
from artifact.lifting import lift_kernel
from artifact.summary import Branch, RecordSummary, Summary

from conftest import CORPUS, kernel, src
from oracles import ev

I = Var("i", INDEX)
J = Var("j", INDEX)
X1 = Var("x1", INDEX)


def A(*idx):
    return Get("A", tuple(idx))


def plus(a, b):
    return Op("+", (a, b))


# -------------------------------------------------------------- expressions


def test_commuted_sum_is_equal():
    assert prove_equal(plus(A(I), A(offset(I, 1))), plus(A(offset(I, 1)), A(I))).status == "Equal"


def test_distinct_offsets_give_a_witness():
    v = prove_equal(offset(I, 1), offset(I, 2))
    assert v.status == "NotEqual"
    assert v.witness["i"] == 0


def test_shifted_unrolled_update_is_equal_on_its_region():
    # second write of a 2-unrolled body, expressed at x1 = i + 1
    unrolled = plus(A(I), A(offset(I, 2)))
    ctx = Cmp("==", X1, offset(I, 1))
    assert prove_equal(unrolled, plus(A(offset(X1, -1)), A(offset(X1, 1))), ctx).equal


def test_difference_outside_context_is_ignored():
    ctx = Cmp(">=", I, Const(0))
    e1 = Op("max", (I, Const(0)))
    assert prove_equal(e1, I, ctx).equal
    assert prove_equal(e1, I).status == "NotEqual"


def test_domain_too_large():
    xs = [Var(f"k{n}", INDEX) for n in range(7)]
    with pytest.raises(DomainTooLarge):
        prove_equal(Get("A", tuple(xs)), Get("A", tuple(reversed(xs))))


def test_smaller_window_fits_the_budget():
    xs = [Var(f"k{n}", INDEX) for n in range(7)]
    cfg = CheckerConfig(window=(0, 2))
    assert prove_equal(Get("A", tuple(xs)), Get("A", tuple(reversed(xs))), cfg=cfg).status == "NotEqual"


def test_non_affine_subscript_is_unknown():
    sq = A(Op("*", (I, I)))
    assert not is_piecewise_affine(sq)
    assert prove_equal(sq, A(Op("*", (I, I)))).equal  # structurally identical
    v = prove_equal(plus(sq, A(I)), plus(A(I), A(Op("*", (I, I)))))
    assert v.status in ("Equal", "Unknown")


def test_summaries_compare_by_region():
    pos = ("x1",)
    inside = Cmp("<=", Const(1), X1)
    s1 = Summary((Branch(inside, A(X1)),), Get("B0", (X1,)), pos)
    s2 = Summary((Branch(Cmp(">", X1, Const(0)), A(X1)),), Get("B0", (X1,)), pos)
    assert prove_equal(s1, s2).equal
    s3 = Summary((Branch(Cmp(">", X1, Const(1)), A(X1)),), Get("B0", (X1,)), pos)
    v = prove_equal(s1, s3)
    assert v.status == "NotEqual" and v.witness["x1"] == 1


def test_record_field_mismatch():
    s = Summary((), Get("B0", (X1,)), ("x1",))
    a = RecordSummary((("B", s),))
    b = RecordSummary((("C", s),))
    assert prove_equal(a, b).status == "NotEqual"


# ------------------------------------------------------------------ properties

atoms = st.one_of(
    st.integers(-3, 3).map(lambda c: offset(I, c)),
    st.integers(-3, 3).map(lambda c: offset(J, c)),
    st.integers(-2, 2).map(Const),
)
subscripted = st.tuples(atoms).map(lambda t: A(*t))
exps = st.recursive(
    st.one_of(atoms, subscripted),
    lambda inner: st.tuples(st.sampled_from(["+", "-", "*"]), inner, inner).map(lambda t: Op(t[0], t[1:])),
    max_leaves=6,
)


@settings(max_examples=60, deadline=None)
@given(exps, exps)
def test_reflexive_and_symmetric(a, b):
    assert prove_equal(a, a).equal
    ab, ba = prove_equal(a, b), prove_equal(b, a)
    assert ab.status == ba.status
    if ab.status == "NotEqual":
        # the witness separates them; array contents differ from the oracle's
        # hash, so only index-only expressions are re-checked
        if not exp_arrays(a) and not exp_arrays(b):
            env = {k: v for k, v in ab.witness.items() if k != "draw"}
            env.setdefault("i", 0)
            env.setdefault("j", 0)
            assert ev(a, env) != ev(b, env)


# ------------------------------------------------------------------- oracle


def test_copy_kernel_passes():
    ast = src("""
        subroutine copy(A, B, n)
          integer :: n
          real :: A(n), B(n)
          do i = 1, n
            B(i) = A(i)
          end do
        end subroutine
    """)
    rep = verify_against_oracle(ast, lift_kernel(ast).post, OracleConfig(trials=10))
    assert rep.passed and rep.mismatch_count == 0 and rep.max_abs_error == 0.0


@pytest.mark.parametrize("name", CORPUS)
def test_corpus_passes_a_short_oracle_run(name):
    ast = kernel(name)
    rep = verify_against_oracle(ast, lift_kernel(ast).post, OracleConfig(trials=5))
    assert rep.passed, rep.text()


def _corrupt(e):
    # turn every x1 - 1 subscript into x1 + 1
    def fn(x):
        if isinstance(x, Get):
            return Get(x.array, tuple(offset(X1, 1) if i == offset(X1, -1) else i for i in x.index))
        return None
    return map_exp(e, fn)


def test_corrupted_post_is_caught():
    ast = kernel("jacobi_1d3p")
    post = lift_kernel(ast).post
    s = post.get("B")
    bad = RecordSummary((("B", Summary(tuple(Branch(b.cond, _corrupt(b.exp)) for b in s.branches),
                                        s.default, s.pos, s.subject, s.domain)),))
    assert bad != post
    rep = verify_against_oracle(ast, bad, OracleConfig(trials=3))
    assert not rep.passed and rep.mismatch_count > 0 and not rep.errors
    fm = rep.first_mismatch
    assert fm["array"] == "B" and fm["trial"] == 0
    # the first mismatch is inside the written range, not on the halo
    n = rep.shapes[0][0] - 2
    assert 1 <= fm["position"][0] <= n


def test_out_of_extent_read_is_reported(diag):
    post = lift_kernel(diag).post
    s = post.get("B")
    bad = RecordSummary((("B", Summary(tuple(Branch(b.cond, _corrupt(b.exp)) for b in s.branches),
                                        s.default, s.pos, s.subject, s.domain)),))
    rep = verify_against_oracle(diag, bad, OracleConfig(trials=2))
    assert not rep.passed
    assert any("outside its extent" in e for e in rep.errors)


def test_report_is_deterministic(diag):
    post = lift_kernel(diag).post
    r1 = verify_against_oracle(diag, post, OracleConfig(trials=4, seed=3))
    r2 = verify_against_oracle(diag, post, OracleConfig(trials=4, seed=3))
    assert r1.to_json() == r2.to_json()


def test_fixed_shape_is_respected(diag):
    rep = verify_against_oracle(diag, lift_kernel(diag).post, OracleConfig(trials=3, shape=(5, 6)))
    assert all(s[0] <= 5 and s[1] <= 6 for s in rep.shapes)


def test_grid_limits():
    assert [default_limit(r) for r in (1, 2, 3)] == [16, 16, 8]


def test_malformed_posts_are_rejected(diag):
    post = lift_kernel(diag).post
    with pytest.raises(ShapeMismatch):
        verify_against_oracle(diag, RecordSummary((("C", post.get("B")),)))
    s = post.get("B")
    stray = Summary(s.branches, Get("Z", (X1, Var("x2", INDEX))), s.pos)
    with pytest.raises(UnboundFreeVariable):
        verify_against_oracle(diag, RecordSummary((("B", stray),)))
