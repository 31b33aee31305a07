"""Guarded-branch summaries and the rules that compute them.

A :class:`Summary` is an ordered list of ``(cond, exp)`` branches plus a
default expression. Array-valued summaries describe the element at the
symbolic position ``pos`` (``x1 .. xd``); an array written at one position is
its base summary with a leading override branch, never a mutated array.
Several output arrays travel together as a :class:`RecordSummary`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import MissingPostcondition, RuleMismatch
from .expr import (
    FALSE, INDEX, NUM, TRUE, BoolConst, Cmp, Cond, Const, ElemExp, Get, Op, Var,
    cmp, conj, disj, exp_kind, exp_vars, map_cond, map_exp, negate, normalize, offset, readable, render,
    render_cond, subst_cond, subst_exp, sort_key,
)
from .linear import is_unsat, simplify

__all__ = [
    "Branch", "Summary", "RecordSummary", "GeneralizedSummary", "GenBranch",
    "pos_vars", "array_input", "scalar", "combine", "get_from", "set_into",
    "merge_phi", "substitute", "shift_time", "apply_rule", "normalize",
    "render_summary",
]


@dataclass(frozen=True)
class Branch:
    cond: Cond
    exp: ElemExp
    # written during the current loop iteration (bookkeeping for generalization)
    fresh: bool = field(default=False, compare=False)


@dataclass(frozen=True)
class Summary:
    branches: Tuple[Branch, ...] = ()
    default: ElemExp = Const(0)
    pos: Tuple[str, ...] = ()
    subject: str = ""
    domain: Cond = TRUE  # validity assumption, e.g. the range of a loop index

    @property
    def is_array(self) -> bool:
        return bool(self.pos)

    def with_branches(self, branches, default=None) -> "Summary":
        return replace(self, branches=tuple(branches), default=self.default if default is None else default)

    def __str__(self) -> str:
        return render_summary(self)


@dataclass(frozen=True)
class RecordSummary:
    """Unified output record: one array summary per output array."""

    fields: Tuple[Tuple[str, Summary], ...]

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(n for n, _ in self.fields)

    def get(self, name: str) -> Summary:
        for n, s in self.fields:
            if n == name:
                return s
        raise KeyError(name)

    def put(self, name: str, s: Summary) -> "RecordSummary":
        return RecordSummary(tuple((n, s if n == name else old) for n, old in self.fields))

    def map(self, fn) -> "RecordSummary":
        return RecordSummary(tuple((n, fn(s)) for n, s in self.fields))

    def __str__(self) -> str:
        return "\n".join(render_summary(s) for _, s in self.fields)


AnySummary = Union[Summary, RecordSummary]


@dataclass(frozen=True)
class GenBranch:
    """One generalized branch: a t-free expression valid on a region whose
    bounds are affine in the iteration variable."""

    exp: ElemExp
    region: Cond
    bounds: Tuple[Tuple[str, Optional[ElemExp], Optional[ElemExp]], ...] = ()
    amap: Optional[Tuple[str, int, ElemExp]] = None  # (dim, a, b): x_dim = a*t + b


@dataclass(frozen=True)
class GeneralizedSummary:
    var: str
    branches: Tuple[GenBranch, ...]
    base: Summary  # the initial value, used outside every region

    def as_summary(self) -> Summary:
        out = [Branch(b.region, b.exp) for b in self.branches]
        covered = disj(*(b.region for b in self.branches)) if self.branches else FALSE
        for b in self.base.branches:
            c = conj(negate(covered), b.cond) if self.branches else b.cond
            if not is_unsat(c):
                out.append(Branch(c, b.exp))
        return replace(self.base, branches=tuple(out))

    @property
    def n_e(self) -> int:
        return len(self.branches)


# ------------------------------------------------------------- builders

def pos_vars(rank: int) -> Tuple[str, ...]:
    return tuple(f"x{d + 1}" for d in range(rank))


def array_input(name: str, rank: int, kind: str = "float", subject: str = "") -> Summary:
    pos = pos_vars(rank)
    return Summary((), Get(name, tuple(Var(p, INDEX) for p in pos), kind), pos, subject or name)


def scalar(e: ElemExp, subject: str = "") -> Summary:
    return Summary((), e, (), subject)


def _prune(branches: Sequence[Branch], ctx: Cond = TRUE) -> List[Branch]:
    out = []
    for b in branches:
        if b.cond == FALSE:
            continue
        if is_unsat(conj(ctx, b.cond)):
            continue
        out.append(b)
    return out


def _finish(branches: Sequence[Branch], default: ElemExp, like: Summary, ctx: Cond = TRUE) -> Summary:
    """Prune unsatisfiable branches and collapse a valid one into the default."""
    kept = _prune(branches, ctx)
    for i, b in enumerate(kept):
        if b.cond == TRUE:
            return replace(like, branches=tuple(kept[:i]), default=b.exp)
    # trailing branches whose expression equals the default are redundant
    while kept and kept[-1].exp == default and not kept[-1].fresh:
        kept.pop()
    return replace(like, branches=tuple(kept), default=default)


# ------------------------------------------------------ piecewise algebra

def combine(fn, parts: Sequence[Summary], like: Optional[Summary] = None) -> Summary:
    """Apply ``fn`` to the expressions of each feasible branch combination."""
    choices = []
    for s in parts:
        opts = [(b.cond, b.exp) for b in s.branches]
        rest = negate(disj(*(b.cond for b in s.branches))) if s.branches else TRUE
        opts.append((rest, s.default))
        choices.append(opts)
    branches = []
    default = None
    for combo in product(*choices):
        exps = [e for _, e in combo]
        if all(i == len(ch) - 1 for i, ch in zip([_idx(c, o) for c, o in zip(choices, combo)], choices)):
            default = fn(*exps)
            continue
        cond = conj(*(c for c, _ in combo))
        branches.append(Branch(cond, fn(*exps)))
    base = like or Summary()
    return _finish(branches, default, replace(base, pos=(), domain=TRUE))


def _idx(options, chosen) -> int:
    for i, o in enumerate(options):
        if o is chosen:
            return i
    return -1


def get_from(arr: Summary, index: Sequence[ElemExp]) -> Summary:
    """Element read: instantiate the array summary at ``index``."""
    if len(index) != len(arr.pos):
        raise RuleMismatch(f"get arity {len(index)} does not match rank {len(arr.pos)}")
    b = dict(zip(arr.pos, index))
    branches = [Branch(subst_cond(x.cond, b), subst_exp(x.exp, b)) for x in arr.branches]
    return _finish(branches, subst_exp(arr.default, b), Summary(subject=arr.subject))


def position_eq(pos: Sequence[str], index: Sequence[ElemExp]) -> Cond:
    return conj(*(cmp("==", Var(p, INDEX), e) for p, e in zip(pos, index)))


def set_into(arr: Summary, index: Sequence[ElemExp], value: Summary) -> Summary:
    """Array image: ``arr`` with the element at ``index`` overridden."""
    if len(index) != len(arr.pos):
        raise RuleMismatch(f"set arity {len(index)} does not match rank {len(arr.pos)}")
    if value.is_array:
        raise RuleMismatch("cannot store an array into an array element")
    at = position_eq(arr.pos, index)
    new = [Branch(conj(at, b.cond), b.exp, True) for b in value.branches]
    if value.branches:
        new.append(Branch(conj(at, negate(disj(*(b.cond for b in value.branches)))), value.default, True))
    else:
        new.append(Branch(at, value.default, True))
    off = negate(at)
    old = []
    for b in arr.branches:
        c = conj(off, b.cond)
        if is_unsat(c):
            continue
        if is_unsat(conj(b.cond, at)):
            c = b.cond
        old.append(Branch(c, b.exp, b.fresh))
    kept = _prune(new) + old
    return replace(arr, branches=tuple(kept))


def merge_phi(inputs: Sequence[Tuple[Summary, Cond]]) -> Summary:
    """Branch merge of an extended phi. Guards are mutually exclusive and the
    last input is the default path."""
    groups: Dict[Tuple, List] = {}
    order: List[Tuple] = []
    last_default_key = None
    for k, (s, guard) in enumerate(inputs):
        entries = [(b.cond, b.exp, b.fresh) for b in s.branches]
        rest = negate(disj(*(b.cond for b in s.branches))) if s.branches else TRUE
        entries.append((rest, s.default, False))
        for j, (c, e, fr) in enumerate(entries):
            key = (c, e)
            if key not in groups:
                groups[key] = [[], False]
                order.append(key)
            groups[key][0].append(guard)
            groups[key][1] = groups[key][1] or fr
            if k == len(inputs) - 1 and j == len(entries) - 1:
                last_default_key = key
    like = inputs[-1][0]
    branches = []
    for key in order:
        if key == last_default_key:
            continue
        guards, fr = groups[key]
        g = simplify(disj(*guards))
        c = conj(g, key[0])
        branches.append(Branch(c, key[1], fr))
    return _finish(branches, last_default_key[1], like)


# ------------------------------------------------------------ substitution

Binding = Union[ElemExp, Summary, str]


def substitute(s: AnySummary, bindings: Mapping[str, Binding]) -> AnySummary:
    """Capture-avoiding simultaneous substitution.

    Keys name scalar variables or arrays. A scalar may be bound to an
    expression or a (piecewise) scalar summary; an array may be bound to
    another array name or to an array summary, whose branches are then
    merged into the result."""
    if isinstance(s, RecordSummary):
        return s.map(lambda f: substitute(f, bindings))
    if not bindings:
        return s
    idx = {k: v for k, v in bindings.items() if not isinstance(v, (Summary, str))}
    branch_pw = [(subst_cond(b.cond, idx), _subst_pw(b.exp, bindings, idx), b.fresh) for b in s.branches]
    default_pw = _subst_pw(s.default, bindings, idx)
    return _flatten(branch_pw, default_pw, replace(s, domain=subst_cond(s.domain, idx)))


def _subst_pw(e: ElemExp, bindings, idx) -> Summary:
    if isinstance(e, Const):
        return scalar(e)
    if isinstance(e, Var):
        v = bindings.get(e.name)
        if isinstance(v, Summary):
            return v
        if isinstance(v, str):
            return scalar(Var(v, e.kind))
        return scalar(v if v is not None else e)
    if isinstance(e, Get):
        index = tuple(subst_exp(a, idx) for a in e.index)
        v = bindings.get(e.array)
        if isinstance(v, Summary):
            return get_from(v, index)
        name = v if isinstance(v, str) else e.array
        return scalar(Get(name, index, e.kind))
    parts = [_subst_pw(a, bindings, idx) for a in e.args]
    if all(not p.branches for p in parts):
        return scalar(Op(e.op, tuple(p.default for p in parts)))
    return combine(lambda *xs: Op(e.op, tuple(xs)), parts)


def _flatten(branch_pw, default_pw: Summary, like: Summary) -> Summary:
    out: List[Branch] = []
    for cond, pw, fresh in branch_pw:
        if cond == FALSE:
            continue
        for b in pw.branches:
            out.append(Branch(conj(cond, b.cond), b.exp, fresh))
        if pw.branches:
            out.append(Branch(conj(cond, negate(disj(*(b.cond for b in pw.branches)))), pw.default, fresh))
        else:
            out.append(Branch(cond, pw.default, fresh))
    default = default_pw.default
    if default_pw.branches:
        covered = disj(*(c for c, _, _ in branch_pw))
        for b in default_pw.branches:
            out.append(Branch(conj(negate(covered), b.cond), b.exp))
    return _finish(out, default, like)


def shift_time(s, delta: int, var: str = "t"):
    """Replace every occurrence of the iteration variable by ``var + delta``."""
    if delta == 0:
        return s
    b = _Shift(var, delta)
    if isinstance(s, RecordSummary):
        return s.map(lambda f: shift_time(f, delta, var))
    if isinstance(s, GeneralizedSummary):
        return GeneralizedSummary(
            s.var,
            tuple(
                GenBranch(
                    b.apply(g.exp), map_cond(g.region, b.apply),
                    tuple((d, _sx(lo, b), _sx(hi, b)) for d, lo, hi in g.bounds), g.amap,
                )
                for g in s.branches
            ),
            shift_time(s.base, delta, var),
        )
    if isinstance(s, dict):
        return {k: shift_time(v, delta, var) for k, v in s.items()}
    return replace(
        s,
        branches=tuple(Branch(map_cond(x.cond, b.apply), b.apply(x.exp), x.fresh) for x in s.branches),
        default=b.apply(s.default),
        domain=map_cond(s.domain, b.apply),
    )


class _Shift(dict):
    """Substitution ``var := var + delta`` that folds the new constant into an
    enclosing offset, so shifting by ``-d`` then ``+d`` restores the input."""

    def __init__(self, var: str, delta: int):
        super().__init__({var: offset(Var(var, INDEX), delta)})
        self.var = var

    def apply(self, e: ElemExp) -> ElemExp:
        def fn(x):
            if isinstance(x, Var) and x.name == self.var:
                return self[self.var]
            if (isinstance(x, Op) and x.op in ("+", "-") and isinstance(x.args[1], Const)
                    and x.args[1].kind == "int" and isinstance(x.args[0], Op)
                    and x.args[0].op in ("+", "-") and isinstance(x.args[0].args[1], Const)
                    and self.var in exp_vars(x)):
                c = x.args[1].value
                return offset(x.args[0], c if x.op == "+" else -c)
            return None

        return map_exp(e, fn)


def _sx(e, b):
    return None if e is None else b.apply(e)


# ------------------------------------------------------------------ rules

def apply_rule(v, preds: Sequence[AnySummary], post: Optional[AnySummary] = None) -> AnySummary:
    """Summary of vertex ``v`` from its predecessors' summaries.

    ``v`` exposes ``op`` (operation kind) and ``attrs``; ``preds`` follow the
    order of the operation's inputs. ``post`` is the inner postcondition,
    required for Loopcall vertices."""
    op, a = v.op, v.attrs
    if op == "Input":
        return input_summary(a)
    if op == "Bound":
        i = Var(a["index"], INDEX)
        step = a["step"]
        lo, hi = (a["begin"], a["end"]) if step > 0 else (a["end"], a["begin"])
        dom = conj(cmp("<=", lo, i), cmp("<=", i, hi))
        if abs(step) != 1:
            dom = conj(dom, cmp("==", Op("mod", (Op("-", (i, a["begin"])), Const(abs(step)))), Const(0)))
        return Summary((), i, (), a["index"], dom)
    if op == "ScalarOp":
        name = a["op"]
        if name == "const":
            return scalar(a["value"])
        if name == "index":
            return scalar(a["value"])
        if name == "copy":
            return _scalar_pred(preds[0], v)
        parts = [_scalar_pred(p, v) for p in preds]
        if name == "neg":
            if len(parts) != 1:
                raise RuleMismatch(f"neg expects one operand at {v.name}")
        elif len(parts) != 2:
            raise RuleMismatch(f"{name} expects two operands at {v.name}")
        return combine(lambda *xs: Op(name, tuple(xs)), parts)
    if op == "Get":
        arr = _array_pred(preds[0], a.get("field"), v)
        return get_from(arr, a["index"])
    if op == "Set":
        rec = preds[0]
        val = _scalar_pred(preds[1], v)
        fld = a.get("field")
        if isinstance(rec, RecordSummary):
            return rec.put(fld, set_into(rec.get(fld), a["index"], val))
        if isinstance(rec, Summary) and rec.is_array:
            return set_into(rec, a["index"], val)
        raise RuleMismatch(f"set base of {v.name} is not an array")
    if op == "Phi":
        if a.get("loop"):
            # value at the end of the iteration: the back-edge input
            return preds[-1]
        conds = a["conds"]
        if len(conds) != len(preds):
            raise RuleMismatch(f"phi {v.name}: {len(preds)} inputs for {len(conds)} guards")
        if all(isinstance(p, RecordSummary) for p in preds):
            names = preds[0].names
            return RecordSummary(tuple(
                (n, merge_phi([(p.get(n), c) for p, c in zip(preds, conds)])) for n in names
            ))
        if any(isinstance(p, RecordSummary) for p in preds):
            raise RuleMismatch(f"phi {v.name} mixes record and scalar inputs")
        return merge_phi(list(zip(preds, conds)))
    if op == "Loopcall":
        if post is None:
            raise MissingPostcondition(f"loopcall {v.name} applied before its inner loop was lifted")
        bindings: Dict[str, Binding] = {}
        for formal, actual in zip(a["formals"], preds):
            ftype, fname = formal
            if ftype == "record":
                if not isinstance(actual, RecordSummary):
                    raise RuleMismatch(f"loopcall {v.name}: record operand expected")
                for n in actual.names:
                    bindings[initial_name(n)] = actual.get(n)
            else:
                bindings[fname] = actual
        return substitute(post, bindings)
    raise RuleMismatch(f"no rule for operation {op}")


def initial_name(field_name: str) -> str:
    """Free variable naming the value of an output array on loop entry."""
    return f"{field_name}0"


def input_summary(a) -> AnySummary:
    t = a["type"]
    if t == "record":
        return RecordSummary(tuple(
            (n, array_input(initial_name(n), rank, kind, n)) for n, rank, kind in a["fields"]
        ))
    if t == "array":
        return array_input(a["name"], a["rank"], a["kind"])
    if t == "num":
        return scalar(Var(a["name"], NUM), a["name"])
    raise RuleMismatch(f"unknown input type {t}")


def _scalar_pred(p, v) -> Summary:
    if not isinstance(p, Summary) or p.is_array:
        raise RuleMismatch(f"{v.name}: scalar operand expected")
    return p


def _array_pred(p, fld, v) -> Summary:
    if isinstance(p, RecordSummary):
        if fld is None:
            raise RuleMismatch(f"{v.name}: record read without a field")
        return p.get(fld)
    if isinstance(p, Summary) and p.is_array:
        return p
    raise RuleMismatch(f"{v.name}: array operand expected")


# -------------------------------------------------------------- rendering

def render_summary(s: AnySummary, subject: Optional[str] = None) -> str:
    """Canonical text: a header, then one ``cond -> exp`` line per branch and a
    final ``otherwise -> exp`` line. A summary with no branches is one line."""
    if isinstance(s, RecordSummary):
        return "\n".join(render_summary(f, n) for n, f in s.fields)
    name = subject or s.subject or "S"
    head = f"{name}({', '.join(s.pos)})" if s.pos else name
    if not s.branches:
        d = s.default
        if s.pos and isinstance(d, Get) and all(
            isinstance(i, Var) and i.name == p for i, p in zip(d.index, s.pos)
        ) and len(d.index) == len(s.pos):
            return f"{name} = {d.array}"
        return f"{head} = {render(readable(d))}"
    lines = [f"{head} ="]
    for b in s.branches:
        lines.append(f"  {render_cond(b.cond)} -> {render(readable(b.exp))}")
    lines.append(f"  otherwise -> {render(readable(s.default))}")
    return "\n".join(lines)
