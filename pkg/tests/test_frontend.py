import pytest
from hypothesis import given, settings, strategies as st

from artifact.errors import (
    KernelSyntaxError, NonAffineSubscript, UndeclaredIdentifier, UnsupportedConstruct,
)
from artifact.expr import render
from artifact.frontend import (
    Assign, LoopNode, analyze_regularity, format_kernel, has_directives, parse_file, parse_kernel,
    strip_directives, tokenize,
)

from conftest import CORPUS, DATA, kernel, src


def test_diagonal_kernel_shape(diag):
    assert diag.depth == 2
    assert diag.loop.index == "j"
    inner = diag.loop.body[0]
    assert isinstance(inner, LoopNode) and inner.index == "i"
    (stmt,) = inner.body
    assert isinstance(stmt, Assign) and stmt.target == "B"
    assert [render(i) for i in stmt.index] == ["i", "j"]
    assert render(stmt.value) == "A(i, j) + A(i - 1, j - 1)"
    assert [a.name for a in diag.arrays] == ["A", "B"]
    assert [a.name for a in diag.outputs] == ["B"]
    assert [p.name for p in diag.params] == ["n", "m"]


def test_empty_body():
    k = src("""
        subroutine e(A, n)
          integer :: n
          real :: A(n)
          do i = 1, n
          end do
        end subroutine
    """)
    assert k.depth == 1 and k.loop.body == ()


def test_missing_end_do_reports_eof():
    with pytest.raises(KernelSyntaxError) as exc:
        src("""
            subroutine e(A, n)
              integer :: n
              real :: A(n)
              do i = 1, n
                A(i) = 1.0
        """)
    assert exc.value.message == "expected 'end do' or 'enddo', found end of file"
    assert exc.value.expected == "'end do' or 'enddo'"
    assert exc.value.span is not None


def test_missing_end_do_before_end_subroutine():
    with pytest.raises(KernelSyntaxError) as exc:
        src("""
            subroutine e(A, n)
              integer :: n
              real :: A(n)
              do i = 1, n
                A(i) = 1.0
            end subroutine
        """)
    assert "do" in exc.value.message and exc.value.span.line == 6


def test_syntax_error_location():
    with pytest.raises(KernelSyntaxError) as exc:
        kernel_text = (DATA / "corrupted.st").read_text()
        parse_kernel(kernel_text, "corrupted.st")
    assert exc.value.render().startswith("corrupted.st:5:")


def test_undeclared_identifier():
    with pytest.raises(UndeclaredIdentifier) as exc:
        src("""
            subroutine e(A, B, n)
              integer :: n
              real :: A(n), B(n)
              do i = 1, n
                B(i) = C(i)
              end do
            end subroutine
        """)
    assert exc.value.span.line == 5


@pytest.mark.parametrize("body", [
    "do while (n > 0)\n  n = n - 1\nend do",
    "do i = 1, n\n  call f(i)\nend do",
    "do 10 i = 1, n\n10 continue",
])
def test_unsupported_constructs(body):
    text = f"subroutine e(A, n)\ninteger :: n\nreal :: A(n)\n{body}\nend subroutine\n"
    with pytest.raises(UnsupportedConstruct) as exc:
        parse_kernel(text)
    assert exc.value.span is not None


def test_non_affine_subscript():
    with pytest.raises(NonAffineSubscript):
        src("""
            subroutine e(A, B, n)
              integer :: n
              real :: A(n*n), B(n)
              do i = 1, n
                B(i) = A(i*i)
              end do
            end subroutine
        """)


def test_zero_step_rejected():
    with pytest.raises(KernelSyntaxError, match="nonzero"):
        src("""
            subroutine e(A, n)
              integer :: n
              real :: A(n)
              do i = 1, n, 0
                A(i) = 1.0
              end do
            end subroutine
        """)


def test_bounds_may_not_use_arrays():
    with pytest.raises(UnsupportedConstruct):
        src("""
            subroutine e(A, K, n)
              integer :: n
              integer :: K(n)
              real :: A(n)
              do i = 1, K(1)
                A(i) = 1.0
              end do
            end subroutine
        """)


def test_continuation_and_semicolons():
    k = src("""
        subroutine e(A, B, n)
          integer :: n; real :: A(0:n+1), B(0:n+1)
          do i = 1, n
            B(i) = A(i-1) + &   ! wrapped
                   A(i+1)
          end do
        end subroutine
    """)
    assert render(k.loop.body[0].value) == "A(i - 1) + A(i + 1)"


def test_tokenizer_reals_and_dot_operators():
    toks = [(t.kind, t.text) for t in tokenize("x = 1.5d0 .and. 2e3 .NE. .TRUE.") if t.kind != "nl"]
    assert ("real", "1.5d0") in toks and ("real", "2e3") in toks
    assert ("op", ".and.") in toks and ("op", "/=") in toks and ("bool", ".true.") in toks


@pytest.mark.parametrize("name", CORPUS)
def test_round_trip_corpus(name):
    k = kernel(name)
    again = parse_kernel(format_kernel(k))
    assert again == k
    assert format_kernel(again) == format_kernel(k)


# random affine kernels for the round trip
_offsets = st.integers(-2, 2)


@st.composite
def kernels(draw):
    rank = draw(st.integers(1, 2))
    idx = ["i", "j"][:rank]
    nterms = draw(st.integers(1, 4))
    terms = []
    for _ in range(nterms):
        offs = [draw(_offsets) for _ in idx]
        sub = ", ".join(f"{v}{o:+d}" if o else v for v, o in zip(idx, offs))
        coef = draw(st.sampled_from(["", "2.0 * ", "0.5 * ", "-"]))
        terms.append(f"{coef}A({sub})")
    rhs = " + ".join(terms)
    ext = ", ".join("-2:n+2" for _ in idx)
    tgt = ", ".join(idx)
    cond = draw(st.sampled_from([None, "i == 1", "i < n .and. i /= 2", ".not. (i > 3)"]))
    stmt = f"B({tgt}) = {rhs}"
    if cond:
        stmt = f"if ({cond}) then\n B({tgt}) = 0.0\nelse\n {stmt}\nend if"
    loops_open = "\n".join(f"do {v} = 1, n" for v in reversed(idx))
    loops_close = "\n".join("end do" for _ in idx)
    return (f"subroutine r(A, B, n)\ninteger :: n\nreal :: A({ext}), B({ext})\n"
            f"{loops_open}\n{stmt}\n{loops_close}\nend subroutine\n")


@settings(max_examples=60, deadline=None)
@given(kernels())
def test_round_trip_random(text):
    k = parse_kernel(text)
    assert parse_kernel(format_kernel(k)) == k


# ---------------------------------------------------------------- directives


def test_strip_directives_parallel_kernel():
    k = kernel("parallel_2d5p")
    assert has_directives(k)
    assert k.loop.directives == ("!$omp parallel do private(i)",)
    inner = k.loop.body[0]
    assert inner.directives == ("!$omp simd",)
    s = strip_directives(k)
    assert not has_directives(s)
    assert s.loop.body[0].body == inner.body
    assert s.loop.index == k.loop.index and s.loop.bound == k.loop.bound


def test_strip_directives_identity_and_idempotent(diag):
    assert strip_directives(diag) == diag
    k = kernel("parallel_2d5p")
    once = strip_directives(k)
    assert strip_directives(once) == once


def test_strip_directives_inner_only():
    k = src("""
        subroutine e(A, B, n, m)
          integer :: n, m
          real :: A(n, m), B(n, m)
          do j = 1, m
            !$omp simd
            do i = 1, n
              B(i, j) = A(i, j)
            end do
          end do
        end subroutine
    """)
    assert k.loop.directives == () and k.loop.body[0].directives == ("!$omp simd",)
    s = strip_directives(k)
    assert s.loop.body[0].directives == ()
    assert s.loop.body[0].body == k.loop.body[0].body


# ---------------------------------------------------------------- regularity


def test_regularity_diagonal(diag):
    rep = analyze_regularity(diag)
    assert rep.regular
    assert [l.atypical for l in rep.levels] == [0, 0]


def test_regularity_boundary_case():
    rep = analyze_regularity(kernel("boundary_1d"))
    lvl = rep.level(1)
    assert lvl.verdict == "regular"
    assert lvl.atypical == 2  # i == 1 and i == n
    assert lvl.deviating == 2 and lvl.common == 1
    assert [s.line for s in lvl.deviating_spans] == [7, 9]


def test_regularity_data_dependent_branch():
    rep = analyze_regularity(kernel_from_data("irregular"))
    lvl = rep.level(1)
    assert lvl.verdict == "irregular"
    assert lvl.breaking_spans and lvl.breaking_spans[0].line == 6


def kernel_from_data(name):
    return parse_file(DATA / f"{name}.st")


def test_regularity_two_interior_arms_irregular():
    k = src("""
        subroutine e(A, B, n)
          integer :: n
          real :: A(n), B(n)
          do i = 1, n
            if (mod(i, 2) == 0) then
              B(i) = A(i)
            else
              B(i) = 0.0
            end if
          end do
        end subroutine
    """)
    assert analyze_regularity(k).level(1).verdict == "irregular"


@pytest.mark.parametrize("name", CORPUS)
def test_regularity_deterministic(name):
    k = kernel(name)
    assert analyze_regularity(k) == analyze_regularity(k)
    assert analyze_regularity(k).regular
