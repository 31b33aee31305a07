"""Element expressions, conditions, linear forms and canonical normalization.

Expressions are immutable trees. Index arithmetic is exact (``Fraction``);
floating point only appears when an expression is evaluated on data.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import gcd
from typing import Callable, Dict, Iterable, Mapping, Optional, Tuple, Union

from .errors import DivisionByZeroConstant

INDEX = "index"  # integer-valued symbol (loop index, int param, position)
NUM = "num"  # float-valued scalar symbol
ARRAY = "array"
COND = "cond"


# ---------------------------------------------------------------- nodes

@dataclass(frozen=True)
class Const:
    value: Fraction
    kind: str = "int"  # int | float

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True)
class Var:
    name: str
    kind: str = INDEX


@dataclass(frozen=True)
class Op:
    """Arithmetic node. ``div``/``mod`` are floor division/modulo on indices;
    ``/`` is numeric division (truncating when both operands are integers)."""

    op: str
    args: Tuple["ElemExp", ...]


@dataclass(frozen=True)
class Get:
    array: str
    index: Tuple["ElemExp", ...]
    kind: str = "float"  # element kind of the array


ElemExp = Union[Const, Var, Op, Get]


@dataclass(frozen=True)
class BoolConst:
    value: bool


@dataclass(frozen=True)
class CondVar:
    name: str


@dataclass(frozen=True)
class Cmp:
    op: str  # == != < <= > >=
    lhs: ElemExp
    rhs: ElemExp


@dataclass(frozen=True)
class And:
    args: Tuple["Cond", ...]


@dataclass(frozen=True)
class Or:
    args: Tuple["Cond", ...]


@dataclass(frozen=True)
class Not:
    arg: "Cond"


Cond = Union[BoolConst, CondVar, Cmp, And, Or, Not]

TRUE = BoolConst(True)
FALSE = BoolConst(False)

NEGATED = {"==": "!=", "!=": "==", "<": ">=", ">=": "<", ">": "<=", "<=": ">"}
FLIPPED = {"==": "==", "!=": "!=", "<": ">", ">": "<", "<=": ">=", ">=": "<="}


# ---------------------------------------------------------- constructors

def const(v, kind: Optional[str] = None) -> Const:
    if kind is None:
        kind = "float" if isinstance(v, float) else "int"
    return Const(Fraction(v), kind)


def ivar(name: str) -> Var:
    return Var(name, INDEX)


def is_const(e: ElemExp, v=None) -> bool:
    return isinstance(e, Const) and (v is None or e.value == v)


def exp_kind(e: ElemExp) -> str:
    """'float' when any leaf is floating point, else 'int'."""
    if isinstance(e, Const):
        return e.kind
    if isinstance(e, Var):
        return "float" if e.kind == NUM else "int"
    if isinstance(e, Get):
        return e.kind
    return "float" if any(exp_kind(a) == "float" for a in e.args) else "int"


def add(a: ElemExp, b: ElemExp) -> ElemExp:
    if is_const(b, 0) and exp_kind(a) == "int":
        return a
    if is_const(a, 0) and exp_kind(b) == "int":
        return b
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value, _join(a.kind, b.kind))
    return Op("+", (a, b))


def sub(a: ElemExp, b: ElemExp) -> ElemExp:
    if is_const(b, 0) and exp_kind(a) == "int":
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value, _join(a.kind, b.kind))
    return Op("-", (a, b))


def mul(a: ElemExp, b: ElemExp) -> ElemExp:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value, _join(a.kind, b.kind))
    return Op("*", (a, b))


def neg(a: ElemExp) -> ElemExp:
    if isinstance(a, Const):
        return Const(-a.value, a.kind)
    return Op("neg", (a,))


def _join(k1: str, k2: str) -> str:
    return "float" if "float" in (k1, k2) else "int"


def offset(e: ElemExp, c: int) -> ElemExp:
    """e + c, folding into a trailing constant when possible."""
    if c == 0:
        return e
    if isinstance(e, Const):
        return Const(e.value + c, e.kind)
    if isinstance(e, Op) and e.op in "+-" and isinstance(e.args[1], Const):
        k = e.args[1].value if e.op == "+" else -e.args[1].value
        k += c
        if k == 0:
            return e.args[0]
        return Op("+", (e.args[0], Const(k))) if k > 0 else Op("-", (e.args[0], Const(-k)))
    return Op("+", (e, Const(c))) if c > 0 else Op("-", (e, Const(-c)))


def cmp(op: str, lhs: ElemExp, rhs: ElemExp) -> Cond:
    """Comparison with constant folding over exact linear forms."""
    d = linearize(Op("-", (lhs, rhs)))
    if d is not None and not d.terms:
        return BoolConst(_holds(op, d.const))
    return Cmp(op, lhs, rhs)


def _holds(op: str, v: Fraction) -> bool:
    return {"==": v == 0, "!=": v != 0, "<": v < 0, "<=": v <= 0, ">": v > 0, ">=": v >= 0}[op]


def conj(*cs: Cond) -> Cond:
    out = []
    for c in cs:
        parts = c.args if isinstance(c, And) else (c,)
        for p in parts:
            if p == TRUE:
                continue
            if p == FALSE:
                return FALSE
            if p not in out:
                out.append(p)
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return And(tuple(out))


def disj(*cs: Cond) -> Cond:
    out = []
    for c in cs:
        parts = c.args if isinstance(c, Or) else (c,)
        for p in parts:
            if p == FALSE:
                continue
            if p == TRUE:
                return TRUE
            if p not in out:
                out.append(p)
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return Or(tuple(out))


def negate(c: Cond) -> Cond:
    """Negation pushed through to the atoms."""
    if isinstance(c, BoolConst):
        return BoolConst(not c.value)
    if isinstance(c, Cmp):
        return Cmp(NEGATED[c.op], c.lhs, c.rhs)
    if isinstance(c, Not):
        return c.arg
    if isinstance(c, And):
        return disj(*(negate(a) for a in c.args))
    if isinstance(c, Or):
        return conj(*(negate(a) for a in c.args))
    return Not(c)


# ------------------------------------------------------------ traversal

def map_exp(e: ElemExp, fn: Callable[[ElemExp], Optional[ElemExp]]) -> ElemExp:
    """Bottom-up rebuild; ``fn`` may return a replacement or None."""
    if isinstance(e, Op):
        args = tuple(map_exp(a, fn) for a in e.args)
        e = Op(e.op, args) if args != e.args else e
    elif isinstance(e, Get):
        idx = tuple(map_exp(a, fn) for a in e.index)
        e = Get(e.array, idx, e.kind) if idx != e.index else e
    r = fn(e)
    return e if r is None else r


def map_cond(c: Cond, fe: Callable[[ElemExp], ElemExp]) -> Cond:
    """Apply ``fe`` to every expression in ``c`` and re-fold constants."""
    if isinstance(c, Cmp):
        return cmp(c.op, fe(c.lhs), fe(c.rhs))
    if isinstance(c, And):
        return conj(*(map_cond(a, fe) for a in c.args))
    if isinstance(c, Or):
        return disj(*(map_cond(a, fe) for a in c.args))
    if isinstance(c, Not):
        return negate(map_cond(c.arg, fe))
    return c


def subst_exp(e: ElemExp, bindings: Mapping[str, ElemExp]) -> ElemExp:
    """Simultaneous substitution of scalar variables (capture free: no binders)."""
    if not bindings:
        return e

    def fn(x):
        if isinstance(x, Var) and x.name in bindings:
            return bindings[x.name]
        return None

    return map_exp(e, fn)


def subst_cond(c: Cond, bindings: Mapping[str, ElemExp]) -> Cond:
    if not bindings:
        return c
    return map_cond(c, lambda e: subst_exp(e, bindings))


def rename_arrays(e: ElemExp, names: Mapping[str, str]) -> ElemExp:
    def fn(x):
        if isinstance(x, Get) and x.array in names:
            return Get(names[x.array], x.index, x.kind)
        return None

    return map_exp(e, fn)


def exp_vars(e: ElemExp, acc: Optional[set] = None) -> set:
    acc = set() if acc is None else acc
    if isinstance(e, Var):
        acc.add(e.name)
    elif isinstance(e, Op):
        for a in e.args:
            exp_vars(a, acc)
    elif isinstance(e, Get):
        for a in e.index:
            exp_vars(a, acc)
    return acc


def exp_arrays(e: ElemExp, acc: Optional[set] = None) -> set:
    acc = set() if acc is None else acc
    if isinstance(e, Op):
        for a in e.args:
            exp_arrays(a, acc)
    elif isinstance(e, Get):
        acc.add(e.array)
        for a in e.index:
            exp_arrays(a, acc)
    return acc


def cond_vars(c: Cond, acc: Optional[set] = None) -> set:
    acc = set() if acc is None else acc
    if isinstance(c, Cmp):
        exp_vars(c.lhs, acc)
        exp_vars(c.rhs, acc)
    elif isinstance(c, (And, Or)):
        for a in c.args:
            cond_vars(a, acc)
    elif isinstance(c, Not):
        cond_vars(c.arg, acc)
    elif isinstance(c, CondVar):
        acc.add(c.name)
    return acc


def cond_atoms(c: Cond) -> Iterable[Cond]:
    if isinstance(c, (And, Or)):
        for a in c.args:
            yield from cond_atoms(a)
    elif isinstance(c, Not):
        yield from cond_atoms(c.arg)
    else:
        yield c


def conjuncts(c: Cond) -> Tuple[Cond, ...]:
    if c == TRUE:
        return ()
    return c.args if isinstance(c, And) else (c,)


def has_condvar(c: Cond) -> bool:
    return any(isinstance(a, CondVar) for a in cond_atoms(c))


# ---------------------------------------------------------- linear forms

@dataclass(frozen=True)
class Lin:
    """sum(coeff * atom) + const over exact rationals; atoms are normalized
    non-linear subterms or variables."""

    terms: Tuple[Tuple[ElemExp, Fraction], ...]
    const: Fraction = Fraction(0)

    @staticmethod
    def of(d: Mapping[ElemExp, Fraction], c) -> "Lin":
        items = tuple(sorted(((k, Fraction(v)) for k, v in d.items() if v != 0), key=lambda kv: sort_key(kv[0])))
        return Lin(items, Fraction(c))

    def as_dict(self) -> Dict[ElemExp, Fraction]:
        return dict(self.terms)

    def coeff(self, atom: ElemExp) -> Fraction:
        for k, v in self.terms:
            if k == atom:
                return v
        return Fraction(0)

    def plus(self, other: "Lin", scale=1) -> "Lin":
        d = self.as_dict()
        for k, v in other.terms:
            d[k] = d.get(k, Fraction(0)) + v * scale
        return Lin.of(d, self.const + other.const * scale)

    def scaled(self, k) -> "Lin":
        return Lin.of({a: v * k for a, v in self.terms}, self.const * k)

    def is_const(self) -> bool:
        return not self.terms

    def to_exp(self) -> ElemExp:
        return lin_to_exp(self)


@lru_cache(maxsize=200_000)
def linearize(e: ElemExp) -> Optional[Lin]:
    """Linear form of an integer-valued index expression, or None when the
    expression involves data (array reads, float symbols)."""
    if isinstance(e, Const):
        if e.kind != "int":
            return None
        return Lin((), e.value)
    if isinstance(e, Var):
        if e.kind != INDEX:
            return None
        return Lin(((e, Fraction(1)),), Fraction(0))
    if isinstance(e, Get):
        return None
    op, args = e.op, e.args
    if op in ("+", "-"):
        a, b = linearize(args[0]), linearize(args[1])
        if a is None or b is None:
            return None
        return a.plus(b, 1 if op == "+" else -1)
    if op == "neg":
        a = linearize(args[0])
        return None if a is None else a.scaled(-1)
    if op == "*":
        a, b = linearize(args[0]), linearize(args[1])
        if a is None or b is None:
            return None
        if a.is_const():
            return b.scaled(a.const)
        if b.is_const():
            return a.scaled(b.const)
        atom = normalize(e)
        return Lin(((atom, Fraction(1)),), Fraction(0))
    if op in ("div", "mod", "min", "max"):
        lins = [linearize(a) for a in args]
        if any(x is None for x in lins):
            return None
        if op in ("div", "mod"):
            a, b = lins
            if b.is_const():
                if b.const == 0:
                    raise DivisionByZeroConstant(f"{op} by constant zero")
                if a.is_const():
                    q = a.const // b.const
                    return Lin((), q if op == "div" else a.const - b.const * q)
            if op == "mod" and b.is_const() and abs(b.const) == 1:
                return Lin((), Fraction(0))
            if op == "div" and b.is_const() and b.const == 1:
                return a
            if b.is_const() and b.const.denominator == 1:
                # terms whose coefficient is a multiple of the divisor leave
                # the remainder alone and pass through the quotient exactly
                d = b.const
                whole = {t: c for t, c in a.terms if (c / d).denominator == 1}
                if whole:
                    rest = Lin.of({t: c for t, c in a.terms if t not in whole}, a.const)
                    inner = linearize(Op(op, (lin_to_exp(rest), Const(d))))
                    if op == "mod":
                        return inner
                    return inner.plus(Lin.of({t: c / d for t, c in whole.items()}, Fraction(0)))
        else:
            if all(x.is_const() for x in lins):
                vals = [x.const for x in lins]
                return Lin((), min(vals) if op == "min" else max(vals))
        atom = Op(op, tuple(lin_to_exp(x) for x in lins))
        return Lin(((atom, Fraction(1)),), Fraction(0))
    if op == "/":
        return None
    raise ValueError(f"unknown op {op}")


def lin_to_exp(lin: Lin) -> ElemExp:
    """Rebuild an expression: terms in canonical order, constant last."""
    out: Optional[ElemExp] = None
    for atom, c in lin.terms:
        mag = abs(c)
        term = atom if mag == 1 else Op("*", (Const(mag), atom))
        if out is None:
            out = term if c > 0 else Op("neg", (term,))
        else:
            out = Op("+" if c > 0 else "-", (out, term))
    if out is None:
        return Const(lin.const)
    if lin.const > 0:
        out = Op("+", (out, Const(lin.const)))
    elif lin.const < 0:
        out = Op("-", (out, Const(-lin.const)))
    return out


# ----------------------------------------------------------- ordering

@lru_cache(maxsize=200_000)
def sort_key(e) -> str:
    """Deterministic total order on expressions (by canonical text)."""
    return render(e)


# --------------------------------------------------------- normalization

Monomial = Tuple[ElemExp, ...]


def _poly(e: ElemExp) -> Dict[Monomial, Fraction]:
    """Polynomial over normalized atoms with exact coefficients."""
    if isinstance(e, Const):
        return {(): e.value} if e.value != 0 else {}
    if isinstance(e, Var):
        return {(e,): Fraction(1)}
    if isinstance(e, Get):
        return {(Get(e.array, tuple(normalize(a) for a in e.index), e.kind),): Fraction(1)}
    op, args = e.op, e.args
    if op in ("+", "-"):
        p = dict(_poly(args[0]))
        for m, c in _poly(args[1]).items():
            p[m] = p.get(m, Fraction(0)) + (c if op == "+" else -c)
        return {m: c for m, c in p.items() if c != 0}
    if op == "neg":
        return {m: -c for m, c in _poly(args[0]).items()}
    if op == "*":
        p1, p2 = _poly(args[0]), _poly(args[1])
        out: Dict[Monomial, Fraction] = {}
        for m1, c1 in p1.items():
            for m2, c2 in p2.items():
                m = tuple(sorted(m1 + m2, key=sort_key))
                out[m] = out.get(m, Fraction(0)) + c1 * c2
        return {m: c for m, c in out.items() if c != 0}
    if op == "/":
        a, b = normalize(args[0]), normalize(args[1])
        if isinstance(b, Const):
            if b.value == 0:
                raise DivisionByZeroConstant("division by constant zero")
            if exp_kind(e) == "float":
                return {m: c / b.value for m, c in _poly(a).items()}
            if isinstance(a, Const):
                q = abs(a.value) // abs(b.value)
                q = q if (a.value >= 0) == (b.value > 0) else -q
                return {(): Fraction(q)} if q else {}
        return {(Op("/", (a, b)),): Fraction(1)}
    if op in ("div", "mod", "min", "max"):
        lin = linearize(e)
        if lin is not None:
            return _poly_from_lin(lin)
        nargs = tuple(normalize(a) for a in args)
        if op in ("min", "max"):
            nargs = tuple(sorted(set(nargs), key=sort_key))
            if len(nargs) == 1:
                return _poly(nargs[0])
        return {(Op(op, nargs),): Fraction(1)}
    raise ValueError(f"unknown op {op}")


def _poly_from_lin(lin: Lin) -> Dict[Monomial, Fraction]:
    out: Dict[Monomial, Fraction] = {}
    for atom, c in lin.terms:
        if isinstance(atom, Op) and atom.op == "*":
            for m, k in _poly(atom).items():
                out[m] = out.get(m, Fraction(0)) + k * c
        else:
            out[(atom,)] = out.get((atom,), Fraction(0)) + c
    if lin.const:
        out[()] = out.get((), Fraction(0)) + lin.const
    return {m: c for m, c in out.items() if c != 0}


@lru_cache(maxsize=200_000)
def normalize(e: ElemExp) -> ElemExp:
    """Canonical form: flattened sums of monomials, operands sorted,
    constants folded exactly, affine index parts collected."""
    kind = exp_kind(e)
    p = _poly(e)
    mons = sorted((m for m in p if m), key=lambda m: tuple(sort_key(a) for a in m))
    out: Optional[ElemExp] = None
    for m in mons:
        c = p[m]
        term: ElemExp = m[0]
        for a in m[1:]:
            term = Op("*", (term, a))
        mag = abs(c)
        if mag != 1:
            term = Op("*", (Const(mag, kind), term))
        if out is None:
            out = term if c > 0 else Op("neg", (term,))
        else:
            out = Op("+" if c > 0 else "-", (out, term))
    k = p.get((), Fraction(0))
    if out is None:
        return Const(k, kind)
    if k > 0:
        out = Op("+", (out, Const(k, kind)))
    elif k < 0:
        out = Op("-", (out, Const(-k, kind)))
    return out


def normalize_cond(c: Cond) -> Cond:
    """Canonical condition: atoms rewritten as ``lin <= 0``, ``lin == 0`` or
    ``lin != 0`` with coprime integer coefficients; connectives flattened,
    sorted and deduplicated."""
    if isinstance(c, Cmp):
        return _norm_cmp(c)
    if isinstance(c, Not):
        return normalize_cond(negate(c.arg)) if not isinstance(c.arg, CondVar) else c
    if isinstance(c, (And, Or)):
        parts = [normalize_cond(a) for a in c.args]
        r = conj(*parts) if isinstance(c, And) else disj(*parts)
        if isinstance(r, (And, Or)):
            args = tuple(sorted(set(r.args), key=sort_key))
            return type(r)(args)
        return r
    return c


def _norm_cmp(c: Cmp) -> Cond:
    lin = linearize(Op("-", (c.lhs, c.rhs)))
    if lin is None:
        return Cmp(c.op, normalize(c.lhs), normalize(c.rhs))
    op = c.op
    if op in (">", ">="):
        lin, op = lin.scaled(-1), FLIPPED[op]
    if op == "<":  # integers: a < 0  <=>  a + 1 <= 0
        lin, op = Lin(lin.terms, lin.const + 1), "<="
    if not lin.terms:
        return BoolConst(_holds(op, lin.const))
    den = 1
    for _, v in lin.terms:
        den = den * v.denominator // gcd(den, v.denominator)
    den = den * lin.const.denominator // gcd(den, lin.const.denominator)
    lin = lin.scaled(den)
    g = 0
    for _, v in lin.terms:
        g = gcd(g, int(v))
    if op == "<=":
        k = -((-lin.const) // g)  # ceil(const / g)
        lin = Lin(tuple((a, v / g) for a, v in lin.terms), Fraction(k))
    else:
        if lin.const % g != 0:
            return BoolConst(op == "!=")
        lin = lin.scaled(Fraction(1, g))
        if lin.terms[0][1] < 0:
            lin = lin.scaled(-1)
    return Cmp(op, lin_to_exp(Lin(lin.terms, Fraction(0))), Const(-lin.const))


# ------------------------------------------------------------- rendering

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3}


def fmt_const(c: Const) -> str:
    v = c.value
    if c.kind != "float":
        return str(v) if v.denominator == 1 else f"({v.numerator}/{v.denominator})"
    d = v.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    if d != 1:
        return f"({v.numerator}.0/{v.denominator}.0)"
    return _exact_decimal(v)


def _exact_decimal(v: Fraction) -> str:
    sign = "-" if v < 0 else ""
    v = abs(v)
    whole = v.numerator // v.denominator
    rest = v - whole
    digits = ""
    while rest:
        rest *= 10
        digit = rest.numerator // rest.denominator
        digits += str(digit)
        rest -= digit
    return f"{sign}{whole}.{digits or '0'}"


def render(e, prec: int = 0) -> str:
    """Canonical infix text for expressions and conditions."""
    if isinstance(e, (BoolConst, CondVar, Cmp, And, Or, Not)):
        return render_cond(e)
    if isinstance(e, Const):
        s = fmt_const(e)
        return f"({s})" if e.value < 0 and prec > 0 else s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Get):
        return f"{e.array}({', '.join(render(a) for a in e.index)})"
    op = e.op
    if op in ("div", "mod", "min", "max"):
        return f"{op}({', '.join(render(a) for a in e.args)})"
    if op == "neg":
        s = "-" + render(e.args[0], 3)
        return f"({s})" if prec >= 1 else s
    p = _PREC[op]
    left = render(e.args[0], p)
    right = render(e.args[1], p + 1)
    s = f"{left} {op} {right}"
    return f"({s})" if prec > p else s


def readable(e: ElemExp) -> ElemExp:
    """Display form: ``-a + b`` becomes ``b - a`` (the same value, exactly)."""
    def fn(x):
        if isinstance(x, Op) and x.op == "+" and _is_neg(x.args[0]) and not _is_neg(x.args[1]):
            return Op("-", (x.args[1], x.args[0].args[0]))
        return None
    return map_exp(e, fn)


def _is_neg(e) -> bool:
    return isinstance(e, Op) and e.op == "neg"


def render_cond(c: Cond, prec: int = 0) -> str:
    if isinstance(c, BoolConst):
        return "true" if c.value else "false"
    if isinstance(c, CondVar):
        return c.name
    if isinstance(c, Cmp):
        return f"{render(c.lhs)} {c.op} {render(c.rhs)}"
    if isinstance(c, Not):
        return "!" + render_cond(c.arg, 3)
    if isinstance(c, And):
        s = " && ".join(render_cond(a, 2) for a in c.args)
        return f"({s})" if prec > 2 else s
    s = " || ".join(render_cond(a, 1) for a in c.args)
    return f"({s})" if prec > 1 else s
