"""Hierarchical recursive lifting over the invariant graph.

Regions are lifted innermost first. Inside a region the level subgraph is
condensed into strongly connected components, processed in topological
order. A trivial component is one rule application. A cyclic component (the
loop-carried output record) is solved by repeated forward sweeps: after each
sweep the point-wise summary of the start vertex is generalized into region
form over the iteration variable ``t``, and the sweeps stop once two
consecutive generalizations are equal.

Within a sweep the loop index ``i`` stands for the current iteration, so a
read through a loop-carried edge sees the generalized summary at
``t = i - step``.
"""
from __future__ import annotations

import re
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple, Union

from .checker import DEFAULT, CheckerConfig, prove_equal
from .errors import (
    DomainTooLarge, InconsistentOverlap, NoStartVertex, NonAffineBinding, PatternMismatch,
    SweepCapExceeded, UnsupportedConstruct,
)
from .expr import (
    FALSE, INDEX, TRUE, And, BoolConst, Cmp, Cond, Const, ElemExp, Get, Lin, Not, Op, Or, Var,
    cmp, conj, cond_atoms, conjuncts, disj, exp_arrays, exp_vars, linearize, lin_to_exp,
    map_cond, negate, normalize, offset, render, render_cond, sort_key, subst_cond, subst_exp, cond_vars,
)
from .frontend import _fmt_stmt, loop_indices
from .ir import InvariantGraph, LevelGraph, Vertex, build_invariant_graph, lower_to_ir
from .linear import is_unsat, simplify, unit_equalities
from .summary import (
    Branch, GenBranch, GeneralizedSummary, RecordSummary, Summary, apply_rule, initial_name,
    shift_time, substitute,
)

DEFAULT_MAX_SWEEPS = 32


# ------------------------------------------------------------ SCC DAG


@dataclass
class SccDag:
    components: List[Tuple[int, ...]]  # topological order
    edges: Set[Tuple[int, int]]  # between component indices
    index: Dict[int, int]  # vertex -> component
    self_loops: Set[int]

    def trivial(self, c: int) -> bool:
        comp = self.components[c]
        return len(comp) == 1 and comp[0] not in self.self_loops

    def is_topological(self) -> bool:
        return all(a < b for a, b in self.edges)


def build_scc_dag(g: LevelGraph) -> SccDag:
    """Kosaraju's algorithm; the second pass emits components in
    topological order of the condensation."""
    verts = sorted(g.vertices)
    vs = set(verts)
    succ: Dict[int, List[int]] = {v: [] for v in verts}
    pred: Dict[int, List[int]] = {v: [] for v in verts}
    loops = set()
    for e in g.edges:
        if e.src in vs and e.dst in vs:
            succ[e.src].append(e.dst)
            pred[e.dst].append(e.src)
            if e.src == e.dst:
                loops.add(e.src)
    for v in verts:
        succ[v].sort()
        pred[v].sort()
    order: List[int] = []
    seen: Set[int] = set()
    for root in verts:
        if root in seen:
            continue
        seen.add(root)
        stack = [(root, iter(succ[root]))]
        while stack:
            v, it = stack[-1]
            nxt = next((w for w in it if w not in seen), None)
            if nxt is None:
                stack.pop()
                order.append(v)
            else:
                seen.add(nxt)
                stack.append((nxt, iter(succ[nxt])))
    comp: Dict[int, int] = {}
    comps: List[Tuple[int, ...]] = []
    for root in reversed(order):
        if root in comp:
            continue
        members = []
        stack = [root]
        comp[root] = len(comps)
        while stack:
            v = stack.pop()
            members.append(v)
            for w in pred[v]:
                if w not in comp:
                    comp[w] = len(comps)
                    stack.append(w)
        comps.append(tuple(sorted(members)))
    edges = {(comp[e.src], comp[e.dst]) for e in g.edges
             if e.src in vs and e.dst in vs and comp[e.src] != comp[e.dst]}
    return SccDag(comps, edges, comp, loops)


# -------------------------------------------------------------- loops


@dataclass(frozen=True)
class LoopInfo:
    index: str
    init: ElemExp
    bound: ElemExp
    step: int
    tvar: str = "t"
    outer: Cond = TRUE  # ranges of the enclosing loop indices

    @property
    def last(self) -> ElemExp:
        """Index value of the final iteration."""
        if self.step == 1:
            return self.bound
        if self.step == -1:
            return self.bound
        s = abs(self.step)
        if self.step > 0:
            return normalize(Op("-", (self.bound, Op("mod", (Op("-", (self.bound, self.init)), Const(s))))))
        return normalize(Op("+", (self.bound, Op("mod", (Op("-", (self.init, self.bound)), Const(s))))))

    def domain(self, var: Optional[str] = None) -> Cond:
        v = Var(var or self.index, INDEX)
        if self.step > 0:
            c = conj(cmp("<=", self.init, v), cmp("<=", v, self.bound))
        else:
            c = conj(cmp("<=", self.bound, v), cmp("<=", v, self.init))
        if abs(self.step) != 1:
            c = conj(c, Cmp("==", Op("mod", (Op("-", (v, self.init)), Const(abs(self.step)))), Const(0)))
        return c

    def context(self) -> Cond:
        return conj(self.outer, self.domain())


def loop_info(g: LevelGraph, graph: InvariantGraph, tvar: str) -> LoopInfo:
    b = graph.vertices[g.bound].attrs
    return LoopInfo(b["index"], b["begin"], b["end"], b["step"], tvar, _outer_domain(g, graph))


def _outer_domain(g: LevelGraph, graph: InvariantGraph) -> Cond:
    mod = graph.module
    region = mod.regions[g.region]
    out = TRUE
    while region.parent is not None:
        region = mod.regions[region.parent]
        lp = region.loop
        info = LoopInfo(lp.index, lp.init, lp.bound, lp.step)
        out = conj(info.domain(), out)
    return out


# ------------------------------------------------------ generalized record


@dataclass(frozen=True)
class GenRecord:
    fields: Tuple[Tuple[str, GeneralizedSummary], ...]

    @property
    def names(self):
        return tuple(n for n, _ in self.fields)

    def get(self, name: str) -> GeneralizedSummary:
        return dict(self.fields)[name]

    def as_summary(self) -> RecordSummary:
        return RecordSummary(tuple((n, g.as_summary()) for n, g in self.fields))

    @property
    def n_e(self) -> int:
        return sum(g.n_e for _, g in self.fields)


def split_minmax(c: Cond) -> Cond:
    """Rewrite comparisons against min/max into plain affine atoms."""
    def atom(a: Cmp) -> Cond:
        op, l, r = a.op, a.lhs, a.rhs
        if op in (">=", ">"):
            op, l, r = {">=": "<=", ">": "<"}[op], r, l
        if op not in ("<=", "<"):
            return a
        if isinstance(r, Op) and r.op in ("min", "max"):
            parts = [split_minmax(Cmp(op, l, x)) for x in r.args]
            return conj(*parts) if r.op == "min" else disj(*parts)
        if isinstance(l, Op) and l.op in ("min", "max"):
            parts = [split_minmax(Cmp(op, x, r)) for x in l.args]
            return disj(*parts) if l.op == "min" else conj(*parts)
        return a

    if isinstance(c, Cmp):
        return atom(c)
    if isinstance(c, And):
        return conj(*(split_minmax(a) for a in c.args))
    if isinstance(c, Or):
        return disj(*(split_minmax(a) for a in c.args))
    if isinstance(c, Not):
        return negate(split_minmax(c.arg))
    return c


# ------------------------------------------------------ generalization


def _lin_of(atom: Cmp) -> Optional[Lin]:
    return linearize(Op("-", (atom.lhs, atom.rhs)))


def _upper_bounds(c: Cond, var: str) -> Tuple[List[ElemExp], List[ElemExp], bool]:
    """Affine upper and lower bounds on ``var`` among the conjuncts of ``c``.
    The flag reports an occurrence that is not a unit-coefficient bound."""
    ups, lows, odd = [], [], False
    v = Var(var, INDEX)
    for a in conjuncts(c):
        if var not in cond_vars(a):
            continue
        if not isinstance(a, Cmp):
            odd = True
            continue
        lin = _lin_of(a)
        if lin is None:
            odd = True
            continue
        k = lin.coeff(v)
        if k == 0:
            odd = True
            continue
        rest = Lin(tuple((x, q) for x, q in lin.terms if x != v), lin.const)
        # k*v + rest (op) 0
        slack = {"<=": 0, "<": 1, ">=": 0, ">": -1}.get(a.op)
        if a.op == "==":
            if abs(k) != 1:
                odd = True
                continue
            bound = lin_to_exp(rest.scaled(-1 / k))
            ups.append(bound)
            lows.append(bound)
            continue
        if a.op == "!=" or abs(k) != 1:
            odd = True
            continue
        if a.op in ("<=", "<"):
            # k*v <= -rest - slack
            b = lin_to_exp(rest.scaled(-1 / k).plus(Lin((), Fraction(-slack) / k)))
            (ups if k > 0 else lows).append(b)
        else:
            b = lin_to_exp(rest.scaled(-1 / k).plus(Lin((), Fraction(-slack) / k)))
            (lows if k > 0 else ups).append(b)
    return ups, lows, odd


def contiguous_tile(c: Cond, index: str, pos: Sequence[str], step: int):
    """Match ``i + c1 <= x_d <= i + c2`` with ``c2 - c1 + 1 == step``.

    Returns ``(dim, c1, c2, other_conjuncts)`` or None. The remaining
    conjuncts must not mention the loop index."""
    i = Var(index, INDEX)
    for x in pos:
        lows, ups = [], []
        others = []
        for a in conjuncts(c):
            lin = _lin_of(a) if isinstance(a, Cmp) else None
            names = cond_vars(a)
            if index not in names:
                others.append(a)
                continue
            if lin is None or x not in names:
                others.append(a)
                continue
            kx, ki = lin.coeff(Var(x, INDEX)), lin.coeff(i)
            rest = [t for t, _ in lin.terms if t not in (Var(x, INDEX), i)]
            if rest or abs(kx) != 1 or kx != -ki:
                others.append(a)
                continue
            # kx*(x - i) + const (op) 0  ->  x - i (op') -const/kx
            cst = -lin.const / kx
            op = a.op if kx > 0 else {"<=": ">=", "<": ">", ">=": "<=", ">": "<", "==": "==", "!=": "!="}[a.op]
            if op == "==":
                lows.append(cst)
                ups.append(cst)
            elif op == "<=":
                ups.append(cst)
            elif op == "<":
                ups.append(cst - 1)
            elif op == ">=":
                lows.append(cst)
            elif op == ">":
                lows.append(cst + 1)
            else:
                others.append(a)
        if not lows or not ups:
            continue
        c1, c2 = max(lows), min(ups)
        if any(index in cond_vars(o) for o in others):
            continue
        if c1.denominator != 1 or c2.denominator != 1:
            continue
        if c2 - c1 + 1 == step:
            return x, int(c1), int(c2), others
    return None


def _pin(c: Cond, index: str, pos: Sequence[str]):
    """Find ``x_d = a*i + b`` among the equalities of ``c``."""
    i = Var(index, INDEX)
    for atom in conjuncts(c):
        if not (isinstance(atom, Cmp) and atom.op == "=="):
            continue
        lin = _lin_of(atom)
        if lin is None:
            continue
        a = lin.coeff(i)
        if a == 0:
            continue
        for x in pos:
            kx = lin.coeff(Var(x, INDEX))
            if abs(kx) != 1:
                continue
            # kx*x + a*i + rest = 0  ->  x = (-a/kx) i + (-rest/kx)
            rest = Lin(tuple((t, q) for t, q in lin.terms if t not in (i, Var(x, INDEX))), lin.const)
            slope = -a / kx
            if slope.denominator != 1:
                continue
            return x, int(slope), lin_to_exp(rest.scaled(-1 / kx)), atom
    return None


@dataclass
class _Piece:
    tau: ElemExp  # iteration that last writes position x
    region: Cond
    exp: ElemExp
    amap: Optional[Tuple[str, int, ElemExp]]


def _generalize_branch(b: Branch, pos: Sequence[str], info: LoopInfo) -> _Piece:
    i, s, init = info.index, info.step, info.init
    t = Var(info.tvar, INDEX)
    iv = Var(i, INDEX)
    c, e = b.cond, b.exp
    pin = _pin(c, i, pos)
    if pin is not None:
        x, a, off, _ = pin
        xv = Var(x, INDEX)
        extra = TRUE
        if a == 1:
            tau = Op("-", (xv, off))
        elif a == -1:
            tau = Op("-", (off, xv))
        else:
            num = Op("-", (xv, off)) if a > 0 else Op("-", (off, xv))
            tau = Op("div", (num, Const(abs(a))))
            extra = Cmp("==", Op("mod", (num, Const(abs(a)))), Const(0))
        tau = _tidy(tau)
        region = conj(subst_cond(c, {i: tau}), extra, _tau_range(tau, info))
        exp = subst_exp(e, {i: tau})
        return _finish_piece(tau, region, exp, pos, info, (x, a, off))
    if i not in cond_vars(c) and i not in exp_vars(e):
        # every iteration rewrites the same positions with the same value
        first = cmp("<=", init, t) if s > 0 else cmp("<=", t, init)
        return _finish_piece(t, conj(c, first), e, pos, info, None)
    if s < 0:
        raise NonAffineBinding(
            f"cannot bound the writer iteration of a branch in a loop with negative step: {render_cond(c)}"
        )
    tile = contiguous_tile(c, i, pos, s)
    if tile is not None:
        x, c1, c2, others = tile
        xv = Var(x, INDEX)
        u = offset(xv, -c1)
        tau = u if s == 1 else _tidy(Op("-", (u, Op("mod", (Op("-", (u, init)), Const(s))))))
        region = conj(
            cmp("<=", offset(init, c1) if not isinstance(init, Const) else Const(init.value + c1), xv),
            cmp("<=", xv, offset(t, c2)),
            *others,
        )
        exp = subst_exp(e, {i: tau})
        return _finish_piece(tau, region, exp, pos, info, None)
    ups, _, odd = _upper_bounds(c, i)
    if len(ups) != 1 or odd:
        raise NonAffineBinding(
            f"branch condition does not bind the loop index '{i}' affinely: {render_cond(c)}"
        )
    u = ups[0]
    tau = u if s == 1 else _tidy(Op("-", (u, Op("mod", (Op("-", (u, init)), Const(s))))))
    region = conj(subst_cond(c, {i: tau}), _tau_range(tau, info))
    exp = subst_exp(e, {i: tau})
    return _finish_piece(tau, region, exp, pos, info, None)


def _tidy(e: ElemExp) -> ElemExp:
    lin = linearize(e)
    return lin_to_exp(lin) if lin is not None else e


def _tau_range(tau: ElemExp, info: LoopInfo) -> Cond:
    t = Var(info.tvar, INDEX)
    if info.step > 0:
        c = conj(cmp("<=", info.init, tau), cmp("<=", tau, t))
    else:
        c = conj(cmp("<=", t, tau), cmp("<=", tau, info.init))
    if abs(info.step) != 1:
        c = conj(c, Cmp("==", Op("mod", (_tidy(Op("-", (tau, info.init))), Const(abs(info.step)))), Const(0)))
    return c


def _finish_piece(tau, region, exp, pos, info: LoopInfo, amap) -> _Piece:
    region = split_minmax(region)
    keep = set(pos) | {info.tvar}
    sub = unit_equalities(region, lambda n: (n in keep, n))
    sub = {k: v for k, v in sub.items() if k not in keep}
    if sub:
        exp = subst_exp(exp, sub)
    if info.index in exp_vars(exp):
        raise NonAffineBinding(f"expression still depends on the loop index: {render(exp)}")
    return _Piece(tau, region, normalize(exp), amap)


def generalize(point: Summary, info: LoopInfo, base: Summary) -> GeneralizedSummary:
    """Region form of the positions written during iterations ``init..t``.

    Only branches written in the current sweep (``fresh``) carry new
    information; everything else is the initial value ``base``."""
    pieces = [_generalize_branch(b, point.pos, info) for b in point.branches if b.fresh]
    regions: List[Cond] = []
    for k, p in enumerate(pieces):
        r = p.region
        for k2, q in enumerate(pieces):
            if k2 == k:
                continue
            later = conj(q.region, cmp(">", q.tau, p.tau) if info.step > 0 else cmp("<", q.tau, p.tau))
            if is_unsat(conj(r, later)):
                continue
            r = conj(r, negate(later))
        regions.append(r)
    out: List[GenBranch] = []
    for p, r in zip(pieces, regions):
        if is_unsat(conj(info.outer, r)):
            continue
        r = simplify(r)
        out.append(GenBranch(p.exp, r, region_bounds(r, point.pos), p.amap))
    for a in range(len(out)):
        for b in range(a + 1, len(out)):
            if out[a].exp != out[b].exp and not is_unsat(conj(out[a].region, out[b].region)):
                raise InconsistentOverlap(
                    f"regions {render_cond(out[a].region)} and {render_cond(out[b].region)} overlap"
                )
    return GeneralizedSummary(info.tvar, tuple(out), base)


def region_bounds(c: Cond, pos: Sequence[str]):
    """Per-dimension (lower, upper) bounds read off a region, for display."""
    out = []
    for x in pos:
        ups, lows, _ = _upper_bounds(c, x)
        lo = lows[0] if len(lows) == 1 else (Op("max", tuple(lows[:2])) if len(lows) == 2 else None)
        hi = ups[0] if len(ups) == 1 else (Op("min", tuple(ups[:2])) if len(ups) == 2 else None)
        out.append((x, lo, hi))
    return tuple(out)


def format_bounds(g: GeneralizedSummary) -> str:
    parts = []
    for b in g.branches:
        parts.append(render_cond(b.region))
    return "; ".join(parts) if parts else "-"


def generalize_record(point: RecordSummary, info: LoopInfo, base: RecordSummary) -> GenRecord:
    return GenRecord(tuple((n, generalize(point.get(n), info, base.get(n))) for n in point.names))


def check_converged(new, old, ctx: Cond = TRUE, cfg: CheckerConfig = DEFAULT) -> bool:
    """Checker-certified equality; an Unknown verdict counts as not converged."""
    a = new.as_summary() if isinstance(new, (GenRecord, GeneralizedSummary)) else new
    b = old.as_summary() if isinstance(old, (GenRecord, GeneralizedSummary)) else old
    if a == b:
        return True
    try:
        return prove_equal(a, b, ctx, cfg).equal
    except DomainTooLarge:
        return False


# --------------------------------------------------- equivalence checking


def equivalence_check(s: Summary, info: LoopInfo, cfg: CheckerConfig = DEFAULT) -> Tuple[Summary, int]:
    """Merge fresh point branches that differ only by a unit shift of the
    written position into one range branch. Returns the summary and the
    number of branches absorbed."""
    i = info.index
    iv = Var(i, INDEX)
    info_rows = []
    for k, b in enumerate(s.branches):
        if not b.fresh:
            continue
        pin = _pin(b.cond, i, s.pos)
        if pin is None or pin[1] != 1:
            continue
        x, _, off, atom = pin
        lin = linearize(off)
        if lin is None or not lin.is_const():
            continue
        rest = conj(*(a for a in conjuncts(b.cond) if a != atom))
        if i in cond_vars(rest):
            continue
        c = int(lin.const)
        xform = normalize(subst_exp(b.exp, {i: offset(Var(x, INDEX), -c)}))
        info_rows.append((k, x, c, rest, xform))
    groups: Dict[Tuple, List] = {}
    for row in info_rows:
        groups.setdefault((row[1], row[3]), []).append(row)
    replace_at: Dict[int, Branch] = {}
    drop: Set[int] = set()
    merged = 0
    for (x, rest), rows in groups.items():
        rows.sort(key=lambda r: r[2])
        run = [rows[0]]
        runs = []
        for r in rows[1:]:
            prev = run[-1]
            same = r[2] == prev[2] + 1 and (
                r[4] == prev[4] or prove_equal(r[4], prev[4], TRUE, cfg).equal
            )
            if same:
                run.append(r)
            else:
                runs.append(run)
                run = [r]
        runs.append(run)
        for run in runs:
            if len(run) < 2:
                continue
            c1, c2 = run[0][2], run[-1][2]
            xv = Var(x, INDEX)
            cond = conj(rest, cmp("<=", offset(iv, c1), xv), cmp("<=", xv, offset(iv, c2)))
            first = min(r[0] for r in run)
            replace_at[first] = Branch(cond, run[0][4], True)
            drop |= {r[0] for r in run if r[0] != first}
            merged += len(run) - 1
    if not merged:
        return s, 0
    out = []
    for k, b in enumerate(s.branches):
        if k in drop:
            continue
        out.append(replace_at.get(k, b))
    return replace(s, branches=tuple(out)), merged


# ------------------------------------------------------ vertex elimination


def vertex_elimination(g: LevelGraph, graph: InvariantGraph, comp: Sequence[int], inner_post: RecordSummary,
                       info: LoopInfo, base: RecordSummary) -> Tuple[LevelGraph, GenRecord]:
    """Shortcut for tiled loops: when the component is exactly {phi, Loopcall}
    and every inner write covers ``i + c1 .. i + c2`` with a width equal to
    the outer step, the region form follows directly from the inner
    postcondition. Raises PatternMismatch otherwise."""
    verts = [graph.vertices[v] for v in comp]
    ops = sorted(v.op for v in verts)
    if ops != ["Loopcall", "Phi"]:
        raise PatternMismatch(f"component is not {{phi, Loopcall}}: {', '.join(v.name for v in verts)}")
    call = next(v for v in verts if v.op == "Loopcall")
    phi = next(v for v in verts if v.op == "Phi")
    inner_region = graph.module.regions[call.attrs["region"]]
    names = exp_vars(inner_region.loop.init) | exp_vars(inner_region.loop.bound)
    if info.index not in names:
        raise PatternMismatch(
            f"inner loop bounds do not depend on the outer index '{info.index}' (no tiling signature)"
        )
    fields = []
    for n in inner_post.names:
        s = inner_post.get(n)
        init = initial_name(n)
        if not (isinstance(s.default, Get) and s.default.array == init):
            raise PatternMismatch(f"inner postcondition for '{n}' does not default to its initial value")
        branches = []
        for b in s.branches:
            if not b.fresh:
                raise PatternMismatch("inner postcondition carries branches from earlier calls")
            if any(a.startswith(init) and a == init for a in exp_arrays(b.exp)):
                raise PatternMismatch(f"inner update of '{n}' reads the array it writes")
            tile = contiguous_tile(split_minmax(b.cond), info.index, s.pos, info.step)
            if tile is None:
                raise PatternMismatch(f"inner region {render_cond(b.cond)} is not a contiguous tile of width {info.step}")
            x, c1, c2, others = tile
            if info.index in exp_vars(b.exp):
                raise PatternMismatch("inner expression depends on the tile index")
            xv = Var(x, INDEX)
            t = Var(info.tvar, INDEX)
            lo = Const(info.init.value + c1) if isinstance(info.init, Const) else offset(info.init, c1)
            region = simplify(conj(cmp("<=", lo, xv), cmp("<=", xv, offset(t, c2)), *others))
            branches.append(GenBranch(normalize(b.exp), region, region_bounds(region, s.pos), None))
        fields.append((n, GeneralizedSummary(info.tvar, tuple(branches), base.get(n))))
    keep = [v for v in g.vertices if v != phi.id]
    edges = [e for e in g.edges if phi.id not in (e.src, e.dst)]
    if g.record_input is not None:
        edges.append(type(g.edges[0])(g.record_input, call.id, "value", False))
    reduced = LevelGraph(g.region, g.level, g.loop, keep, edges, None, g.record_input, g.bound,
                         g.loopcalls, g.inputs, {})
    return reduced, GenRecord(tuple(fields))


# --------------------------------------------------------------- lifting


@dataclass
class LiftOptions:
    max_sweeps: int = DEFAULT_MAX_SWEEPS
    equiv_check: bool = True
    vertex_elim: bool = True
    check_consistency: bool = True
    checker: CheckerConfig = DEFAULT


@dataclass
class SccLog:
    region: int
    level: int
    scc: int
    vertices: Tuple[str, ...]
    mode: str  # trivial | sweep | eliminated
    start: str = ""
    sweeps: int = 0
    rounds: int = 0
    n_e: List[int] = field(default_factory=list)
    bounds: List[str] = field(default_factory=list)
    merged: int = 0
    seconds: float = 0.0

    def to_json(self) -> dict:
        return {
            "region": self.region, "level": self.level, "scc": self.scc, "vertices": list(self.vertices),
            "mode": self.mode, "start": self.start, "sweeps": self.sweeps, "rounds": self.rounds,
            "nE": list(self.n_e), "bounds": list(self.bounds), "merged": self.merged, "seconds": self.seconds,
        }


@dataclass
class LiftResult:
    post: RecordSummary
    graph: InvariantGraph
    store: Dict[int, object]
    posts: Dict[int, RecordSummary]
    logs: List[SccLog]
    trace: List[str]
    consistency: Dict[str, str] = field(default_factory=dict)
    seconds: float = 0.0  # lifting proper, excluding the consistency re-check
    check_seconds: float = 0.0

    @property
    def sweeps(self) -> int:
        return sum(l.sweeps for l in self.logs)

    @property
    def consistent(self) -> bool:
        return all(v == "Equal" for v in self.consistency.values())

    def nontrivial(self) -> List[SccLog]:
        return [l for l in self.logs if l.mode != "trivial"]


def _reserved_names(graph: InvariantGraph) -> Tuple[str, set]:
    ast = graph.module.kernel
    names = {s.name for s in ast.scalars} | {a.name for a in ast.arrays} | set(ast.args)
    names |= set(loop_indices(ast.loop))
    for n in names:
        if re.fullmatch(r"x\d+", n):
            raise UnsupportedConstruct(f"identifier '{n}' clashes with the position variables of summaries")
    for a in ast.outputs:
        if initial_name(a.name) in names:
            raise UnsupportedConstruct(
                f"identifier '{initial_name(a.name)}' clashes with the initial value of output '{a.name}'"
            )
    tvar = "t"
    while tvar in names:
        tvar += "_"
    return tvar, names


class _Lifter:
    def __init__(self, graph: InvariantGraph, opts: LiftOptions):
        self.g = graph
        self.opts = opts
        self.store: Dict[int, object] = {}
        self.posts: Dict[int, RecordSummary] = {}
        self.memo: Dict[str, int] = {}
        self.logs: List[SccLog] = []
        self.trace: List[str] = []
        self.tvar, _ = _reserved_names(graph)
        self.infos: Dict[int, LoopInfo] = {}

    def info(self, rid: int) -> LoopInfo:
        if rid not in self.infos:
            self.infos[rid] = loop_info(self.g.subgraphs[rid], self.g, self.tvar)
        return self.infos[rid]

    def fingerprint(self, rid: int) -> str:
        region = self.g.module.regions[rid]
        lines: List[str] = []
        _fmt_stmt(region.loop, 0, lines)
        return "|".join(region.enclosing) + "\n" + "\n".join(lines)

    def lift_region(self, rid: int) -> RecordSummary:
        if rid in self.posts:
            return self.posts[rid]
        key = self.fingerprint(rid)
        if key in self.memo:
            orig = self.memo[key]
            for a, b in zip(self.g.subgraphs[orig].vertices, self.g.subgraphs[rid].vertices):
                self.store[b] = self.store[a]
                self.g.vertices[b].summary = self.store[a]
            self.posts[rid] = self.posts[orig]
            self.trace.append(f"region {rid}: reuses the lift of identical region {orig}")
            return self.posts[rid]
        self.memo[key] = rid
        sg = self.g.subgraphs[rid]
        info = self.info(rid)
        dag = build_scc_dag(sg)
        assert dag.is_topological()
        self.trace.append(
            f"region {rid} level {sg.level} loop {info.index} = {render(info.init)}, {render(info.bound)}, {info.step}: "
            f"{len(dag.components)} SCCs"
        )
        for ci, comp in enumerate(dag.components):
            for v in comp:
                if self.g.vertices[v].op == "Loopcall":
                    self.lift_region(self.g.vertices[v].attrs["region"])
            t0 = time.perf_counter()
            names = tuple(self.g.vertices[v].name for v in comp)
            if dag.trivial(ci):
                v = comp[0]
                self.set(v, apply_rule(self.g.vertices[v], self.pred_summaries(v, sg, info), self.post_for(v)))
                self.logs.append(SccLog(rid, sg.level, ci + 1, names, "trivial", seconds=time.perf_counter() - t0))
            else:
                log = SccLog(rid, sg.level, ci + 1, names, "sweep")
                self.extract_within_scc(comp, sg, info, log)
                log.seconds = time.perf_counter() - t0
                self.logs.append(log)
        post = self.compute_post(sg, info)
        self.posts[rid] = post
        return post

    def set(self, v: int, s):
        self.store[v] = s
        self.g.vertices[v].summary = s

    def post_for(self, v: int):
        x = self.g.vertices[v]
        if x.op == "Loopcall":
            return self.posts.get(x.attrs["region"])
        return None

    def carried_view(self, s, info: LoopInfo):
        """The summary as seen from the next iteration."""
        if isinstance(s, (GenRecord, GeneralizedSummary)):
            shifted = shift_time(s.as_summary(), -info.step, info.tvar)
            return substitute(shifted, {info.tvar: Var(info.index, INDEX)})
        return substitute(s, {info.index: offset(Var(info.index, INDEX), -info.step)})

    def pred_summaries(self, v: int, sg: LevelGraph, info: LoopInfo):
        out = []
        for p, carried in sg.preds[v]:
            s = self.store[p]
            if carried:
                s = self.carried_view(s, info)
            elif isinstance(s, (GenRecord, GeneralizedSummary)):
                s = substitute(s.as_summary(), {info.tvar: Var(info.index, INDEX)})
            out.append(s)
        return out

    def extract_within_scc(self, comp: Sequence[int], sg: LevelGraph, info: LoopInfo, log: SccLog):
        start = select_start_vertex(comp, sg, self.g, self.store)
        sv = self.g.vertices[start]
        log.start = sv.name
        ext = [p for p, _ in sg.preds[start] if p not in comp]
        initial = self.store[ext[0]]
        self.trace.append(
            f"  scc {log.scc} {{{', '.join(log.vertices)}}}: start={sv.name} init={_short(initial)}"
        )
        self.set(start, initial)
        if self.opts.vertex_elim and isinstance(initial, RecordSummary):
            call = [v for v in comp if self.g.vertices[v].op == "Loopcall"]
            if call:
                try:
                    post = self.posts[self.g.vertices[call[0]].attrs["region"]]
                    _, gen = vertex_elimination(sg, self.g, comp, post, info, initial)
                except PatternMismatch as exc:
                    self.trace.append(f"    vertex elimination not applicable: {exc.message}")
                else:
                    self.set(start, gen)
                    for v in comp:
                        if v != start:
                            self.set(v, apply_rule(self.g.vertices[v], self.pred_summaries(v, sg, info), self.post_for(v)))
                    log.mode = "eliminated"
                    log.n_e.append(gen.n_e)
                    log.bounds.append(_gen_bounds(gen))
                    self.trace.append(f"    eliminated {sv.name}: N_e={gen.n_e} bounds: {log.bounds[-1]}")
                    return
        order = sweep_order(comp, sg, start)
        old = initial
        history = [initial]
        while True:
            if log.sweeps >= self.opts.max_sweeps:
                raise SweepCapExceeded(
                    f"component {{{', '.join(log.vertices)}}} of region {sg.region} did not converge "
                    f"within {self.opts.max_sweeps} sweeps",
                    log.scc, self.opts.max_sweeps, tuple(_as_text(h) for h in history[-2:]),
                )
            log.sweeps += 1
            point = forward_sweep(order, sg, self, info)
            if isinstance(point, RecordSummary):
                if self.opts.equiv_check:
                    fields = []
                    for n in point.names:
                        f, k = equivalence_check(point.get(n), info, self.opts.checker)
                        log.merged += k
                        fields.append((n, f))
                    point = RecordSummary(tuple(fields))
                new = generalize_record(point, info, initial)
                log.rounds += 1
                log.n_e.append(new.n_e)
                log.bounds.append(_gen_bounds(new))
            else:
                new = point
                log.rounds += 1
                log.n_e.append(0)
                log.bounds.append("-")
            ctx = conj(info.outer, info.domain(info.tvar))
            done = check_converged(new, old, ctx, self.opts.checker)
            self.trace.append(
                f"    sweep {log.sweeps}: N_e={log.n_e[-1]} bounds: {log.bounds[-1]}"
                + (" (converged)" if done else "")
            )
            if done:
                self.set(start, old)
                return
            history.append(new)
            self.set(start, new)
            old = new

    def compute_post(self, sg: LevelGraph, info: LoopInfo) -> RecordSummary:
        if sg.phi is None:
            return RecordSummary(())
        s = self.store[sg.phi]
        last = info.last
        if isinstance(s, GenRecord):
            fields = []
            for n, gsum in s.fields:
                branches = []
                for b in gsum.branches:
                    c = split_minmax(map_cond(subst_cond(b.region, {info.tvar: last}), _tidy))
                    if is_unsat(conj(info.outer, c)):
                        continue
                    branches.append(Branch(simplify(c), b.exp, True))
                base = gsum.base
                covered = disj(*(b.cond for b in branches)) if branches else FALSE
                for b in base.branches:
                    c = conj(negate(covered), b.cond)
                    if not is_unsat(c):
                        branches.append(Branch(c, b.exp, False))
                fields.append((n, replace(base, branches=tuple(branches))))
            return RecordSummary(tuple(fields))
        if isinstance(s, RecordSummary):
            # single-iteration loop: evaluate at the only index value
            out = substitute(s, {info.index: last})
            return out.map(lambda f: replace(f, branches=tuple(
                Branch(split_minmax(b.cond), b.exp, True) for b in f.branches)))
        return s

    # --------------------------------------------------------- checks
    def consistency(self) -> Dict[str, str]:
        """Re-apply every rule to the final summaries and compare."""
        out: Dict[str, str] = {}
        for rid, sg in self.g.subgraphs.items():
            info = self.info(rid)
            ctx = info.context()
            for v in sg.vertices:
                vx = self.g.vertices[v]
                stored = self.store[v]
                if isinstance(stored, (GenRecord, GeneralizedSummary)):
                    stored = substitute(stored.as_summary(), {info.tvar: Var(info.index, INDEX)})
                again = apply_rule(vx, self.pred_summaries(v, sg, info), self.post_for(v))
                if again == stored:
                    out[f"{rid}:{vx.name}"] = "Equal"
                    continue
                try:
                    verdict = prove_equal(again, stored, ctx, self.opts.checker).status
                except DomainTooLarge:
                    verdict = "Unknown"
                out[f"{rid}:{vx.name}"] = verdict
        return out


def _short(s) -> str:
    if isinstance(s, RecordSummary):
        return ", ".join(
            f.default.array if isinstance(f.default, Get) and not f.branches else n for n, f in s.fields
        ) or "{}"
    return "summary"


def _as_text(s) -> str:
    if isinstance(s, GenRecord):
        return str(s.as_summary())
    return str(s)


def _gen_bounds(g: GenRecord) -> str:
    parts = []
    for n, gs in g.fields:
        if gs.branches:
            parts.append(f"{n}: {format_bounds(gs)}")
    return "; ".join(parts) if parts else "-"


def select_start_vertex(comp: Sequence[int], sg: LevelGraph, graph: InvariantGraph, store) -> int:
    """Prefer a phi vertex with an already summarized predecessor outside the
    component; otherwise any such vertex; ties go to the lowest id."""
    members = set(comp)
    fed = [v for v in sorted(comp)
           if any(p not in members and p in store for p, _ in sg.preds.get(v, []))]
    phis = [v for v in fed if graph.vertices[v].op == "Phi"]
    if phis:
        return phis[0]
    if fed:
        return fed[0]
    raise NoStartVertex(
        f"no vertex of {{{', '.join(graph.vertices[v].name for v in comp)}}} has a summarized external predecessor"
    )


def sweep_order(comp: Sequence[int], sg: LevelGraph, start: int) -> List[int]:
    """Reverse postorder of a DFS from ``start`` along edges inside the
    component; ``start`` itself comes last."""
    members = set(comp)
    succ: Dict[int, List[int]] = {v: [] for v in comp}
    for e in sg.edges:
        if e.src in members and e.dst in members and e.dst != start:
            succ[e.src].append(e.dst)
    post: List[int] = []
    seen = {start}
    stack = [(start, iter(sorted(set(succ[start]))))]
    while stack:
        v, it = stack[-1]
        nxt = next((w for w in it if w not in seen), None)
        if nxt is None:
            stack.pop()
            post.append(v)
        else:
            seen.add(nxt)
            stack.append((nxt, iter(sorted(set(succ[nxt])))))
    order = [v for v in reversed(post) if v != start]
    rest = [v for v in sorted(comp) if v not in seen]
    return order + rest + [start]


def forward_sweep(order: Sequence[int], sg: LevelGraph, lifter: "_Lifter", info: LoopInfo):
    """Apply every rule once in ``order``; returns the new start summary."""
    for v in order:
        vx = lifter.g.vertices[v]
        lifter.set(v, apply_rule(vx, lifter.pred_summaries(v, sg, info), lifter.post_for(v)))
    return lifter.store[order[-1]]


def lift(graph: InvariantGraph, opts: Optional[LiftOptions] = None) -> LiftResult:
    """Lift the whole nest; the result's ``post`` is the kernel summary."""
    opts = opts or LiftOptions()
    t0 = time.perf_counter()
    lf = _Lifter(graph, opts)
    post = lf.lift_region(0)
    res = LiftResult(post, graph, lf.store, lf.posts, lf.logs, lf.trace)
    res.seconds = time.perf_counter() - t0
    if opts.check_consistency:
        t1 = time.perf_counter()
        res.consistency = lf.consistency()
        res.check_seconds = time.perf_counter() - t1
    return res


def reset_caches() -> None:
    """Drop memoized solver and normalization results (for fair timings)."""
    for fn in (linearize, normalize, sort_key, is_unsat):
        fn.cache_clear()


def lift_kernel(ast, opts: Optional[LiftOptions] = None) -> LiftResult:
    return lift(build_invariant_graph(lower_to_ir(ast)), opts)
