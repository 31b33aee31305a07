"""Emit lifted summaries as Halide-style text and as canonical summary text.

The DSL output is one pure function definition per output array, with the
branch regions folded into nested ``select`` calls and the untouched
contents (``B0``) as the final fallback. The text is meant to be read and
diffed, not compiled.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

from .errors import UnrepresentableBranch
from .expr import (
    And, BoolConst, Cmp, Cond, CondVar, Const, ElemExp, Get, Not, Op, Or, Var, exp_arrays, exp_kind,
    fmt_const, has_condvar, linearize, readable,
)
from .summary import RecordSummary, Summary, initial_name, pos_vars, render_summary


@dataclass(frozen=True)
class KernelMeta:
    """What the emitter needs to know about the kernel's interface."""

    name: str
    arrays: Tuple[Tuple[str, str, int], ...]  # (name, kind, rank) in declaration order
    params: Tuple[Tuple[str, str], ...]  # (name, kind)
    outputs: Tuple[str, ...]

    @classmethod
    def from_ast(cls, ast) -> "KernelMeta":
        return cls(
            ast.name,
            tuple((a.name, a.kind, a.rank) for a in ast.arrays),
            tuple((p.name, p.kind) for p in ast.params),
            tuple(a.name for a in ast.outputs),
        )

    def array(self, name: str) -> Tuple[str, str, int]:
        for a in self.arrays:
            if a[0] == name:
                return a
        raise KeyError(name)


_TYPES = {"float": "Float(64)", "int": "Int(32)"}
_SCALARS = {"float": "double", "int": "int"}


def emit_dsl(post: Union[Summary, RecordSummary], meta: KernelMeta) -> str:
    """Halide-style definitions for every output, in declaration order."""
    fields = _fields(post, meta)
    used = set()
    for _, s in fields:
        for e in [b.exp for b in s.branches] + [s.default]:
            used |= exp_arrays(e)
    rank = max((meta.array(n)[2] for n, _ in fields), default=1)
    lines = [f"// {meta.name}"]
    for name, kind, r in meta.arrays:
        if name not in meta.outputs:
            lines.append(f'ImageParam {name}({_TYPES[kind]}, {r}, "{name}");')
    for name in meta.outputs:
        _, kind, r = meta.array(name)
        init = initial_name(name)
        lines.append(f'ImageParam {init}({_TYPES[kind]}, {r}, "{init}");')
    for name, kind in meta.params:
        lines.append(f'Param<{_SCALARS[kind]}> {name}("{name}");')
    xs = pos_vars(rank)
    lines.append("Var " + ", ".join(f'{x}("{x}")' for x in xs) + ";")
    for name, s in fields:
        lines.append("")
        lines.append(f'Func {name}("{name}");')
        lines.extend(_definition(name, s, meta.array(name)[2]))
    return "\n".join(lines) + "\n"


def _fields(post, meta: KernelMeta) -> List[Tuple[str, Summary]]:
    if isinstance(post, RecordSummary):
        by_name = dict(post.fields)
        order = [n for n in meta.outputs if n in by_name] + [n for n in post.names if n not in meta.outputs]
        return [(n, by_name[n]) for n in order]
    return [(post.subject or meta.outputs[0], post)]


def _definition(name: str, s: Summary, rank: int) -> List[str]:
    head = f"{name}({', '.join(pos_vars(rank))})"
    for b in s.branches:
        if has_condvar(b.cond):
            raise UnrepresentableBranch(f"branch of '{name}' is guarded by a free boolean input: {b.cond}")
    if not s.branches:
        return [f"{head} = {dsl_exp(readable(s.default))};"]
    # nested selects, innermost fallback is the default
    pad = " " * (len(head) + 3)
    lines = [f"{head} = select({dsl_cond(s.branches[0].cond)},"]
    depth = 1
    lines.append(f"{pad}{'  ' * (depth - 1)}       {dsl_exp(readable(s.branches[0].exp))},")
    for b in s.branches[1:]:
        lines.append(f"{pad}{'  ' * depth}select({dsl_cond(b.cond)},")
        depth += 1
        lines.append(f"{pad}{'  ' * (depth - 1)}       {dsl_exp(readable(b.exp))},")
    lines.append(f"{pad}{'  ' * (depth - 1)}       {dsl_exp(readable(s.default))}{')' * depth};")
    return lines


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3}


def dsl_exp(e: ElemExp, prec: int = 0) -> str:
    if isinstance(e, Const):
        s = fmt_const(e)
        return f"({s})" if e.value < 0 and prec > 0 else s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Get):
        return f"{e.array}({', '.join(dsl_exp(a) for a in e.index)})"
    op = e.op
    if op in ("min", "max"):
        return f"{op}({', '.join(dsl_exp(a) for a in e.args)})"
    if op in ("div", "mod"):
        return _floor_op(op, e.args[0], e.args[1])
    if op == "neg":
        s = "-" + dsl_exp(e.args[0], 3)
        return f"({s})" if prec >= 1 else s
    if op == "/" and exp_kind(e.args[0]) == "int" and exp_kind(e.args[1]) == "int":
        # integer division truncates toward zero in the source language
        return f"cast<int>(trunc(cast<double>({dsl_exp(e.args[0])}) / cast<double>({dsl_exp(e.args[1])})))"
    p = _PREC[op]
    s = f"{dsl_exp(e.args[0], p)} {op} {dsl_exp(e.args[1], p + 1)}"
    return f"({s})" if prec > p else s


def _floor_op(op: str, a: ElemExp, d: ElemExp) -> str:
    # Halide's integer / and % round toward negative infinity for a positive
    # divisor, which is floor semantics; flip signs for a negative one.
    lin = linearize(d)
    sym = "/" if op == "div" else "%"
    if lin is not None and lin.is_const() and lin.const < 0:
        inner = f"(-({dsl_exp(a)}) {sym} {-lin.const})"
        return inner if op == "div" else f"(-{inner})"
    return f"({dsl_exp(a, 2)} {sym} {dsl_exp(d, 3)})"


def dsl_cond(c: Cond, prec: int = 0) -> str:
    if isinstance(c, BoolConst):
        return "true" if c.value else "false"
    if isinstance(c, CondVar):
        raise UnrepresentableBranch(f"free boolean input '{c.name}' has no DSL counterpart")
    if isinstance(c, Cmp):
        return f"{dsl_exp(c.lhs)} {c.op} {dsl_exp(c.rhs)}"
    if isinstance(c, Not):
        return "!" + dsl_cond(c.arg, 3)
    if isinstance(c, And):
        s = " && ".join(dsl_cond(a, 2) for a in c.args)
        return f"({s})" if prec > 2 else s
    s = " || ".join(dsl_cond(a, 1) for a in c.args)
    return f"({s})" if prec > 1 else s


def emit_summary(post: Union[Summary, RecordSummary], subject: str = "") -> str:
    """Canonical predicate text, one branch per line."""
    return render_summary(post, subject or None) + "\n"


def emit_both(post, meta: KernelMeta) -> Tuple[str, str]:
    return emit_summary(post), emit_dsl(post, meta)
