"""A small integer linear-arithmetic oracle over conditions.

Only "unsatisfiable" answers are trusted: every relaxation used here (rational
Fourier-Motzkin, opaque treatment of non-linear atoms) over-approximates the
integer solution set, so a claim of unsatisfiability is sound.
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import gcd
from typing import Dict, List, Optional, Tuple

from .expr import (
    FALSE, TRUE, And, BoolConst, Cmp, Cond, CondVar, ElemExp, Lin, Not, Op, Or, Var,
    conj, conjuncts, linearize, lin_to_exp, negate, subst_exp,
)

DNF_CAP = 256
FM_CAP = 600

Row = Tuple[Dict[str, int], int]  # sum(c*v) + k  (<= 0 or == 0)


def dnf(c: Cond, cap: int = DNF_CAP) -> Optional[List[Tuple[Cond, ...]]]:
    """Disjunctive normal form as a list of atom tuples; None if too large."""
    if isinstance(c, BoolConst):
        return [()] if c.value else []
    if isinstance(c, Not):
        inner = negate(c.arg)
        if isinstance(inner, Not):
            return [(inner,)]
        return dnf(inner, cap)
    if isinstance(c, Or):
        out: List[Tuple[Cond, ...]] = []
        for a in c.args:
            d = dnf(a, cap)
            if d is None:
                return None
            out.extend(d)
            if len(out) > cap:
                return None
        return out
    if isinstance(c, And):
        out = [()]
        for a in c.args:
            d = dnf(a, cap)
            if d is None:
                return None
            out = [x + y for x in out for y in d]
            if len(out) > cap:
                return None
        return out
    return [(c,)]


class _Linearizer:
    """Turns atoms into integer rows, naming non-linear subterms."""

    def __init__(self):
        self.aux: Dict[ElemExp, str] = {}
        self.side: List[Row] = []

    def lin(self, e: ElemExp) -> Optional[Dict[str, Fraction]]:
        lin = linearize(e)
        if lin is None:
            return None
        out: Dict[str, Fraction] = {"": lin.const}
        for atom, c in lin.terms:
            for name, k in self.atom(atom).items():
                out[name] = out.get(name, Fraction(0)) + c * k
        return out

    def atom(self, a: ElemExp) -> Dict[str, Fraction]:
        if isinstance(a, Var):
            return {a.name: Fraction(1)}
        if a in self.aux:
            name = self.aux[a]
            if isinstance(a, Op) and a.op == "mod":
                base = self.lin(a.args[0])
                d = int(linearize(a.args[1]).const)
                r = dict(base)
                r[name] = r.get(name, Fraction(0)) - d
                return r
            return {name: Fraction(1)}
        name = f"_a{len(self.aux)}"
        self.aux[a] = name
        if isinstance(a, Op) and a.op in ("mod", "div"):
            dl = linearize(a.args[1])
            if dl is not None and dl.is_const() and dl.const > 0 and dl.const.denominator == 1:
                d = int(dl.const)
                base = self.lin(a.args[0])
                if base is not None:
                    # d*q <= base <= d*q + d - 1 with q the quotient
                    r = {k: -v for k, v in base.items()}
                    r[name] = r.get(name, Fraction(0)) + d
                    self.side.append(_row(r))
                    r2 = dict(base)
                    r2[name] = r2.get(name, Fraction(0)) - d
                    r2[""] = r2.get("", Fraction(0)) - (d - 1)
                    self.side.append(_row(r2))
                    if a.op == "mod":
                        r3 = dict(base)
                        r3[name] = r3.get(name, Fraction(0)) - d
                        return r3
                    return {name: Fraction(1)}
        if isinstance(a, Op) and a.op in ("min", "max"):
            for arg in a.args:
                al = self.lin(arg)
                if al is None:
                    continue
                r = {k: -v for k, v in al.items()} if a.op == "min" else dict(al)
                r[name] = r.get(name, Fraction(0)) + (1 if a.op == "min" else -1)
                self.side.append(_row(r))
        return {name: Fraction(1)}


def _row(d: Dict[str, Fraction]) -> Row:
    den = 1
    for v in d.values():
        den = den * v.denominator // gcd(den, v.denominator)
    coeffs = {k: int(v * den) for k, v in d.items() if k and v != 0}
    return coeffs, int(d.get("", Fraction(0)) * den)


def _atom_rows(atom: Cond, lz: _Linearizer):
    """Rows for one atom: (ineqs, eqs, neqs) or None when opaque."""
    if not isinstance(atom, Cmp):
        return None
    d = lz.lin(Op("-", (atom.lhs, atom.rhs)))
    if d is None:
        return None
    row = _row(d)
    neg = ({k: -v for k, v in row[0].items()}, -row[1])
    op = atom.op
    if op == "<=":
        return [row], [], []
    if op == "<":
        return [(row[0], row[1] + 1)], [], []
    if op == ">=":
        return [neg], [], []
    if op == ">":
        return [(neg[0], neg[1] + 1)], [], []
    if op == "==":
        return [], [row], []
    return [], [], [row]


@lru_cache(maxsize=100_000)
def is_unsat(c: Cond) -> bool:
    """True only when ``c`` has no integer solution (sound, incomplete)."""
    if c == FALSE:
        return True
    if c == TRUE:
        return False
    d = dnf(c)
    if d is None:
        return False
    return all(_conj_unsat(atoms) for atoms in d)


def _conj_unsat(atoms: Tuple[Cond, ...]) -> bool:
    lz = _Linearizer()
    ineqs: List[Row] = []
    eqs: List[Row] = []
    neqs: List[Row] = []
    for a in atoms:
        if isinstance(a, BoolConst):
            if not a.value:
                return True
            continue
        r = _atom_rows(a, lz)
        if r is None:
            continue
        ineqs += r[0]
        eqs += r[1]
        neqs += r[2]
    ineqs += lz.side
    return _split_neq(ineqs, eqs, neqs, 0)


def _split_neq(ineqs, eqs, neqs, depth) -> bool:
    if not neqs:
        return _fm(list(ineqs), list(eqs))
    if depth > 6:
        return _fm(list(ineqs), list(eqs))
    (co, k), rest = neqs[0], neqs[1:]
    lo = (co, k + 1)  # row < 0
    hi = ({v: -c for v, c in co.items()}, -k + 1)  # row > 0
    return _split_neq(ineqs + [lo], eqs, rest, depth + 1) and _split_neq(ineqs + [hi], eqs, rest, depth + 1)


def _subst(row: Row, var: str, expr: Row) -> Row:
    co, k = row
    c = co.get(var, 0)
    if not c:
        return row
    out = {v: x for v, x in co.items() if v != var}
    for v, x in expr[0].items():
        out[v] = out.get(v, 0) + c * x
    return {v: x for v, x in out.items() if x}, k + c * expr[1]


def _fm(ineqs: List[Row], eqs: List[Row]) -> bool:
    while eqs:
        co, k = eqs.pop()
        co = {v: c for v, c in co.items() if c}
        if not co:
            if k != 0:
                return True
            continue
        g = 0
        for c in co.values():
            g = gcd(g, c)
        if k % g:
            return True
        unit = sorted(v for v, c in co.items() if abs(c) == g)
        if unit:
            v = unit[0]
            c = co[v] // g
            # v = -(rest + k) / c  with c = +-1
            if c == 1:
                expr = ({u: -(x // g) for u, x in co.items() if u != v}, -(k // g))
            else:
                expr = ({u: x // g for u, x in co.items() if u != v}, k // g)
            ineqs = [_subst(r, v, expr) for r in ineqs]
            eqs = [_subst(r, v, expr) for r in eqs]
        else:
            ineqs.append((co, k))
            ineqs.append(({u: -x for u, x in co.items()}, -k))
    while True:
        tight: Dict[Tuple, int] = {}
        for co, k in ineqs:
            co = {v: c for v, c in co.items() if c}
            if not co:
                if k > 0:
                    return True
                continue
            g = 0
            for c in co.values():
                g = gcd(g, c)
            key = tuple(sorted((v, c // g) for v, c in co.items()))
            kk = -((-k) // g)
            if key not in tight or tight[key] < kk:
                tight[key] = kk
        # opposite pairs a <= x and x <= b with a > b
        for key, kk in tight.items():
            opp = tuple((v, -c) for v, c in key)
            if opp in tight and kk + tight[opp] > 0:
                return True
        rows = [(dict(key), kk) for key, kk in tight.items()]
        if not rows:
            return False
        counts: Dict[str, List[int]] = {}
        for co, _ in rows:
            for v, c in co.items():
                counts.setdefault(v, [0, 0])[0 if c > 0 else 1] += 1
        var = min(sorted(counts), key=lambda v: counts[v][0] * counts[v][1])
        pos = [r for r in rows if r[0].get(var, 0) > 0]
        neg = [r for r in rows if r[0].get(var, 0) < 0]
        keep = [r for r in rows if var not in r[0]]
        if len(pos) * len(neg) + len(keep) > FM_CAP:
            return False
        for pc, pk in pos:
            a = pc[var]
            for nc, nk in neg:
                b = -nc[var]
                co: Dict[str, int] = {}
                for v, c in pc.items():
                    co[v] = co.get(v, 0) + b * c
                for v, c in nc.items():
                    co[v] = co.get(v, 0) + a * c
                co.pop(var, None)
                keep.append((co, b * pk + a * nk))
        ineqs = keep


def implies(a: Cond, b: Cond) -> bool:
    """Sound check that ``a`` entails ``b``."""
    if b == TRUE or a == FALSE or a == b:
        return True
    return is_unsat(conj(a, negate(b)))


def simplify(c: Cond, ctx: Cond = TRUE) -> Cond:
    """Fold ``c`` to a constant when the oracle decides it under ``ctx``;
    otherwise drop conjuncts already entailed by the others and ``ctx``."""
    if isinstance(c, BoolConst):
        return c
    if is_unsat(conj(ctx, c)):
        return FALSE
    if is_unsat(conj(ctx, negate(c))):
        return TRUE
    parts = list(conjuncts(c))
    if len(parts) > 1:
        i = 0
        while i < len(parts):
            others = conj(ctx, *(parts[:i] + parts[i + 1:]))
            if implies(others, parts[i]):
                parts.pop(i)
            else:
                i += 1
        return conj(*parts)
    return c


def unit_equalities(c: Cond, order) -> Dict[str, ElemExp]:
    """Solve the unit-coefficient equalities among the conjuncts of ``c``.

    Variables are eliminated greedily by ``order`` (a sort key; smaller keys
    are eliminated first). Returns an idempotent substitution."""
    sol: Dict[str, ElemExp] = {}
    rows = []
    for a in conjuncts(c):
        if isinstance(a, Cmp) and a.op == "==":
            lin = linearize(Op("-", (a.lhs, a.rhs)))
            if lin is not None:
                rows.append(lin)
    changed = True
    while changed and rows:
        changed = False
        best = None
        for idx, lin in enumerate(rows):
            for atom, c in lin.terms:
                if isinstance(atom, Var) and abs(c) == 1:
                    key = order(atom.name)
                    if best is None or key < best[0]:
                        best = (key, idx, atom, c)
        if best is None:
            break
        _, idx, atom, c = best
        lin = rows.pop(idx)
        rest = Lin(tuple((a, v) for a, v in lin.terms if a != atom), lin.const).scaled(-1 / c)
        value = lin_to_exp(rest)
        sol = {k: _sub_lin(v, atom.name, value) for k, v in sol.items()}
        sol[atom.name] = value
        rows = [_sub_lin_row(r, atom, rest) for r in rows]
        rows = [r for r in rows if r.terms]
        changed = True
    return sol


def _sub_lin(e: ElemExp, name: str, value: ElemExp) -> ElemExp:
    return lin_to_exp(linearize(subst_exp(e, {name: value})))


def _sub_lin_row(row: Lin, atom: Var, value: Lin) -> Lin:
    c = row.coeff(atom)
    if not c:
        return row
    base = Lin(tuple((a, v) for a, v in row.terms if a != atom), row.const)
    return base.plus(value, c)
