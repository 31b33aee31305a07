"""SSA regions for a loop nest and the invariant graph built from them.

Each loop becomes one region. A region starts with an ``Input`` op, defines
its loop index with ``Bound``, keeps the output record in a loop ``Phi`` and
ends with ``Return``. Inner loops appear in their parent as ``Loopcall`` ops.

Integer scalars (loop indices of enclosing loops and integer parameters) are
not values: they stay symbolic inside the affine index operands of get/set
ops, which is what makes one region body describe every iteration.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import IrregularLoop, MissingInput, OutOfBounds, ShapeMismatch, UnsupportedConstruct
from .expr import (
    INDEX, NUM, TRUE, And, BoolConst, Cmp, Cond, Const, ElemExp, Get, Op, Var, conj, cond_vars, disj,
    exp_vars, linearize, negate, Not, Or, cond_atoms, render, render_cond,
)
from .frontend import (
    Assign, IfBlock, KernelAst, LoopNode, analyze_regularity, iter_loops, strip_directives, walk,
)

# ------------------------------------------------------------------ IR


@dataclass
class Value:
    id: int
    name: str
    type: str  # record | array | num | index
    var: str  # source variable the value defines


@dataclass
class Operation:
    id: int
    kind: str  # Input Bound ScalarOp Get Set Loopcall Phi Return
    inputs: Tuple[int, ...]  # value operands, in rule order
    outputs: Tuple[int, ...]
    attrs: dict = field(default_factory=dict)
    deps: Tuple[int, ...] = ()  # index operands (Bound values used symbolically)
    carried: Tuple[bool, ...] = ()  # per input: read from the previous iteration
    region: Optional[int] = None  # Loopcall only


@dataclass
class Region:
    id: int
    level: int
    loop: LoopNode
    enclosing: Tuple[str, ...]  # outer loop indices, outermost first
    ops: List[Operation] = field(default_factory=list)
    parent: Optional[int] = None  # region id of the caller
    formals: List[Tuple[str, str]] = field(default_factory=list)  # (type, name) per Input output
    phi: Optional[int] = None  # value id of the loop phi
    bound: Optional[int] = None
    record_input: Optional[int] = None


@dataclass
class IrModule:
    kernel: KernelAst
    regions: List[Region]
    values: Dict[int, Value]
    fields: Tuple[Tuple[str, int, str], ...]  # output record: (name, rank, kind)

    @property
    def top(self) -> Region:
        return self.regions[0]

    def region(self, rid: int) -> Region:
        return self.regions[rid]

    def producer(self, vid: int) -> Operation:
        for r in self.regions:
            for op in r.ops:
                if vid in op.outputs:
                    return op
        raise KeyError(vid)


def record_name(fields) -> str:
    return "_".join(f[0] for f in fields)


class _Lowerer:
    def __init__(self, ast: KernelAst):
        self.ast = ast
        self.values: Dict[int, Value] = {}
        self.regions: List[Region] = []
        self.nop = 0
        self.fields = tuple((a.name, a.rank, a.kind) for a in ast.outputs)
        self.outputs = {f[0] for f in self.fields}
        self.floats = {s.name for s in ast.params if s.kind == "float"}
        self.counters: Dict[str, int] = {}

    def new_value(self, name: str, type_: str, var: str) -> int:
        vid = len(self.values)
        self.values[vid] = Value(vid, name, type_, var)
        return vid

    def fresh(self, stem: str) -> str:
        n = self.counters.get(stem, 0) + 1
        self.counters[stem] = n
        return f"{stem}{n}"

    def emit(self, region: Region, kind: str, inputs, outputs, attrs=None, deps=(), carried=None, sub=None):
        op = Operation(
            self.nop, kind, tuple(inputs), tuple(outputs), dict(attrs or {}), tuple(deps),
            tuple(carried) if carried is not None else tuple(False for _ in inputs), sub,
        )
        self.nop += 1
        region.ops.append(op)
        return op

    # ---------------------------------------------------------- regions
    def lower_loop(self, loop: LoopNode, enclosing: Tuple[str, ...], parent: Optional[int],
                   extra_nums: Sequence[str] = ()) -> Region:
        level = loop.level
        region = Region(len(self.regions), level, loop, enclosing, parent=parent)
        self.regions.append(region)
        reads_arrays, reads_nums = _free_reads(self.ast, loop, self.outputs, self.floats)
        reads_nums = list(reads_nums) + [n for n in extra_nums if n not in reads_nums]
        env = _Env()
        outs = []
        formals: List[Tuple[str, str]] = []
        if self.fields:
            rid = self.new_value(record_name(self.fields), "record", record_name(self.fields))
            outs.append(rid)
            formals.append(("record", record_name(self.fields)))
            region.record_input = rid
        for a in reads_arrays:
            vid = self.new_value(a, "array", a)
            outs.append(vid)
            formals.append(("array", a))
            env.arrays[a] = vid
        for n in reads_nums:
            vid = self.new_value(n, "num", n)
            outs.append(vid)
            formals.append(("num", n))
            if n in self.floats:
                env.params[n] = vid
            else:
                env.temps[n] = vid
        attrs = {"formals": formals, "fields": self.fields}
        self.emit(region, "Input", (), outs, attrs)
        region.formals = formals
        i = self.new_value(loop.index, "index", loop.index)
        self.emit(region, "Bound", (), (i,), {
            "index": loop.index, "begin": loop.init, "end": loop.bound, "step": loop.step,
        }, deps=())
        region.bound = i
        env.bounds[loop.index] = i
        single = _single_iteration(loop)
        phi_op = None
        if self.fields:
            phi = self.new_value(f"phi{level}_{record_name(self.fields)}", "record", record_name(self.fields))
            region.phi = phi
            # back edge patched once the body is lowered
            phi_op = self.emit(region, "Phi", (region.record_input, -1), (phi,), {
                "loop": True,
                "conds": (Cmp("==", Var(loop.index), loop.init), Cmp("!=", Var(loop.index), loop.init)),
            })
            env.record = region.record_input if single else phi
            env.record_carried = not single
        env.scope = enclosing + (loop.index,)
        self.lower_body(region, loop.body, env)
        if phi_op is not None:
            phi_op.inputs = (region.record_input, env.record)
            phi_op.carried = (False, env.record_carried)
        self.emit(region, "Return", (region.phi,) if region.phi is not None else (), ())
        return region

    def lower_body(self, region: Region, body, env: "_Env"):
        for s in body:
            if isinstance(s, Assign):
                self.lower_assign(region, s, env)
            elif isinstance(s, IfBlock):
                self.lower_if(region, s, env)
            elif isinstance(s, LoopNode):
                self.lower_call(region, s, env)

    def lower_assign(self, region: Region, s: Assign, env: "_Env"):
        v = self.lower_exp(region, s.value, env, s)
        if s.index is None:
            env.temps[s.target] = v
            return
        if s.target not in self.outputs:
            raise UnsupportedConstruct(f"write to non-output array '{s.target}'", s.span)
        out = self.new_value(f"{s.target}_{self._count(s.target + '_')}", "record", record_name(self.fields))
        rec, carried = env.take_record()
        self.emit(region, "Set", (rec, v), (out,), {"field": s.target, "index": s.index},
                  deps=self.index_deps(s.index, env), carried=(carried, False))
        env.record = out
        env.record_carried = False

    def _count(self, stem: str) -> int:
        n = self.counters.get(stem, 0) + 1
        self.counters[stem] = n
        return n

    def index_deps(self, exps: Iterable[ElemExp], env: "_Env") -> Tuple[int, ...]:
        names = set()
        for e in exps:
            names |= exp_vars(e)
        return tuple(env.bounds[n] for n in sorted(names) if n in env.bounds)

    def lower_exp(self, region: Region, e: ElemExp, env: "_Env", stmt) -> int:
        if isinstance(e, Const):
            out = self.new_value(self.fresh("const"), "num", "")
            self.emit(region, "ScalarOp", (), (out,), {"op": "const", "value": e})
            return out
        if isinstance(e, Var):
            if e.name in env.temps:
                return env.temps[e.name]
            if e.name in env.params:
                return env.params[e.name]
            if e.kind == NUM or e.name in {t.name for t in self.ast.temps}:
                raise UnsupportedConstruct(
                    f"scalar '{e.name}' is read before it is assigned in the iteration", stmt.span
                )
            out = self.new_value(self.fresh("idx"), "num", e.name)
            self.emit(region, "ScalarOp", (), (out,), {"op": "index", "value": e},
                      deps=self.index_deps([e], env))
            return out
        if isinstance(e, Get):
            if e.array in self.outputs:
                rec, carried = env.take_record()
                src, fld, car = rec, e.array, carried
            else:
                src, fld, car = env.arrays[e.array], None, False
            out = self.new_value(f"get{self._count('get_' + e.array)}_{e.array}", "num", e.array)
            self.emit(region, "Get", (src,), (out,), {"field": fld, "array": e.array, "index": e.index},
                      deps=self.index_deps(e.index, env), carried=(car,))
            return out
        if isinstance(e, Op):
            if e.op in ("min", "max", "mod", "div"):
                lin = linearize(e)
                if lin is not None and not any(k == NUM for k in _kinds(e)):
                    out = self.new_value(self.fresh("idx"), "num", "")
                    self.emit(region, "ScalarOp", (), (out,), {"op": "index", "value": e},
                              deps=self.index_deps([e], env))
                    return out
                raise UnsupportedConstruct(f"'{e.op}' on data values is not supported", stmt.span)
            args = [self.lower_exp(region, a, env, stmt) for a in e.args]
            stem = {"+": "add", "-": "sub", "*": "mul", "/": "div", "neg": "neg"}[e.op]
            out = self.new_value(self.fresh(stem), "num", "")
            self.emit(region, "ScalarOp", args, (out,), {"op": e.op})
            return out
        raise UnsupportedConstruct(f"cannot lower expression {render(e)}", stmt.span)

    def lower_if(self, region: Region, s: IfBlock, env: "_Env"):
        arms = list(s.arms) + [(None, s.orelse or ())]
        taken = None
        guards = []
        results = []
        for c, body in arms:
            if c is None:
                g = negate(taken) if taken is not None else TRUE
            else:
                g = c if taken is None else conj(negate(taken), c)
                taken = c if taken is None else disj(taken, c)
            sub = env.copy()
            self.lower_body(region, body, sub)
            guards.append(g)
            results.append(sub)
        deps = self.index_deps([x for g in guards for x in _cond_exps(g)], env)
        # record merge
        recs = [(r.record, r.record_carried) for r in results]
        if len(set(recs)) > 1:
            out = self.new_value(self.fresh(f"ifphi"), "record", record_name(self.fields))
            self.emit(region, "Phi", [r for r, _ in recs], (out,), {"loop": False, "conds": tuple(guards)},
                      deps=deps, carried=[c for _, c in recs])
            env.record = out
            env.record_carried = False
        # scalar merges
        names = set()
        for r in results:
            names |= set(r.temps)
        for n in sorted(names):
            vals = [r.temps.get(n) for r in results]
            if any(v is None for v in vals):
                env.temps.pop(n, None)
                continue
            if len(set(vals)) == 1:
                env.temps[n] = vals[0]
                continue
            out = self.new_value(self.fresh(f"ifphi_{n}_"), "num", n)
            self.emit(region, "Phi", vals, (out,), {"loop": False, "conds": tuple(guards)}, deps=deps)
            env.temps[n] = out

    def lower_call(self, region: Region, loop: LoopNode, env: "_Env"):
        temps_in = [t for t in _read_temps(self.ast, loop) if t in env.temps]
        inner = self.lower_loop(loop, env.scope, region.id, extra_nums=temps_in)
        actuals: List[int] = []
        carried: List[bool] = []
        for ftype, fname in inner.formals:
            if ftype == "record":
                rec, car = env.take_record()
                actuals.append(rec)
                carried.append(car)
            elif ftype == "array":
                actuals.append(env.arrays[fname])
                carried.append(False)
            else:
                actuals.append(env.params[fname] if fname in env.params else env.temps[fname])
                carried.append(False)
        names = set()
        for e in (loop.init, loop.bound):
            names |= exp_vars(e)
        deps = tuple(env.bounds[n] for n in sorted(names) if n in env.bounds)
        out = self.new_value(f"L{inner.id}", "record" if self.fields else "num", record_name(self.fields))
        self.emit(region, "Loopcall", actuals, (out,), {"formals": list(inner.formals)},
                  deps=deps, carried=carried, sub=inner.id)
        if self.fields:
            env.record = out
            env.record_carried = False


def _kinds(e: ElemExp):
    for v in exp_vars_typed(e):
        yield v.kind


def exp_vars_typed(e: ElemExp):
    if isinstance(e, Var):
        yield e
    elif isinstance(e, Op):
        for a in e.args:
            yield from exp_vars_typed(a)
    elif isinstance(e, Get):
        for a in e.index:
            yield from exp_vars_typed(a)


def _cond_exps(c: Cond):
    for a in cond_atoms(c):
        if isinstance(a, Cmp):
            yield a.lhs
            yield a.rhs


class _Env:
    def __init__(self):
        self.record: Optional[int] = None
        self.record_carried = False
        self.arrays: Dict[str, int] = {}
        self.params: Dict[str, int] = {}
        self.temps: Dict[str, int] = {}
        self.bounds: Dict[str, int] = {}
        self.scope: Tuple[str, ...] = ()

    def copy(self) -> "_Env":
        e = _Env()
        e.record, e.record_carried = self.record, self.record_carried
        e.arrays, e.params = self.arrays, self.params
        e.temps = dict(self.temps)
        e.bounds, e.scope = self.bounds, self.scope
        return e

    def take_record(self) -> Tuple[int, bool]:
        return self.record, self.record_carried


def _single_iteration(loop: LoopNode) -> bool:
    d = linearize(Op("-", (loop.bound, loop.init)))
    return d is not None and d.is_const() and abs(d.const) < abs(loop.step)


def _free_reads(ast: KernelAst, loop: LoopNode, outputs, floats):
    """Input arrays and float parameters read anywhere inside ``loop``."""
    arrays: List[str] = []
    nums: List[str] = []

    def visit_exp(e):
        if isinstance(e, Get):
            if e.array not in outputs and e.array not in arrays:
                arrays.append(e.array)
            for x in e.index:
                visit_exp(x)
        elif isinstance(e, Var):
            if e.name in floats and e.name not in nums:
                nums.append(e.name)
        elif isinstance(e, Op):
            for a in e.args:
                visit_exp(a)

    for s in walk(loop.body):
        if isinstance(s, Assign):
            visit_exp(s.value)
    order = {a.name: k for k, a in enumerate(ast.arrays)}
    arrays.sort(key=lambda n: order[n])
    porder = {p.name: k for k, p in enumerate(ast.scalars)}
    nums.sort(key=lambda n: porder[n])
    return arrays, nums


def _read_temps(ast: KernelAst, loop: LoopNode) -> List[str]:
    temps = {t.name for t in ast.temps}
    out: List[str] = []
    for s in walk([loop]):
        if isinstance(s, Assign):
            for v in exp_vars(s.value):
                if v in temps and v not in out:
                    out.append(v)
    return sorted(out)


def lower_to_ir(ast: KernelAst, check_regular: bool = True) -> IrModule:
    """Lower a kernel to SSA regions, one per loop."""
    ast = strip_directives(ast)
    if check_regular:
        report = analyze_regularity(ast)
        for lv in report.levels:
            if lv.verdict != "regular":
                span = lv.breaking_spans[0] if lv.breaking_spans else None
                why = lv.reasons[0] if lv.reasons else "irregular branch structure"
                raise IrregularLoop(f"loop level {lv.level} is irregular: {why}", lv.level, span, ast.filename)
    low = _Lowerer(ast)
    low.lower_loop(ast.loop, (), None)
    return IrModule(ast, low.regions, low.values, low.fields)


# ------------------------------------------------------------ dumping

def _fmt_attr(op: Operation) -> str:
    a = op.attrs
    if op.kind == "Input":
        return "(" + ", ".join(f"{t} {n}" for t, n in a["formals"]) + ")"
    if op.kind == "Bound":
        return f"[{render(a['begin'])}, {render(a['end'])}, {a['step']}]"
    if op.kind == "ScalarOp":
        if a["op"] in ("const", "index"):
            return f"{a['op']} {render(a['value'])}"
        return a["op"]
    if op.kind in ("Get", "Set"):
        name = a.get("field") or a.get("array")
        return f"{name}[{', '.join(render(i) for i in a['index'])}]"
    if op.kind == "Phi":
        tag = "loop " if a.get("loop") else ""
        return tag + "{" + "; ".join(render_cond(c) for c in a["conds"]) + "}"
    if op.kind == "Loopcall":
        return f"region {op.region}"
    return ""


def dump_ir(mod: IrModule) -> str:
    """Deterministic text form: one op per line."""
    lines = []
    for r in mod.regions:
        lp = r.loop
        par = "-" if r.parent is None else str(r.parent)
        lines.append(
            f"region {r.id} level {r.level} parent {par} loop {lp.index} = "
            f"{render(lp.init)}, {render(lp.bound)}, {lp.step}"
        )
        for op in r.ops:
            outs = ", ".join(f"%{v} {mod.values[v].name}" for v in op.outputs)
            ins = ", ".join(
                ("^" if c else "") + f"%{v}" for v, c in zip(op.inputs, op.carried or [False] * len(op.inputs))
            )
            deps = f" idx({', '.join(f'%{d}' for d in op.deps)})" if op.deps else ""
            lhs = f"{outs} = " if outs else ""
            lines.append(f"  {lhs}{op.kind} {_fmt_attr(op)} ({ins}){deps}".replace("  (", " (").rstrip())
        lines.append("end region")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------- invariant graph


@dataclass
class Vertex:
    id: int
    name: str
    data: Tuple[str, str]  # (type tag, variable)
    op: str
    level: int
    loop: Tuple[Tuple[str, ...], str]  # (call index C, iteration index I), symbolic
    region: int
    attrs: dict = field(default_factory=dict)
    summary: object = None


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    kind: str = "value"  # value | index
    carried: bool = False  # dst reads src from the previous iteration


@dataclass
class LevelGraph:
    region: int
    level: int
    loop: LoopNode
    vertices: List[int]
    edges: List[Edge]
    phi: Optional[int]
    record_input: Optional[int]
    bound: int
    loopcalls: List[int]
    inputs: List[int]  # Input vertices in formal order
    preds: Dict[int, List[Tuple[int, bool]]] = field(default_factory=dict)  # value preds in rule order

    def succs(self, v: int) -> List[int]:
        return [e.dst for e in self.edges if e.src == v]

    def all_preds(self, v: int) -> List[int]:
        return [e.src for e in self.edges if e.dst == v]


@dataclass
class InvariantGraph:
    module: IrModule
    vertices: Dict[int, Vertex]
    subgraphs: Dict[int, LevelGraph]  # by region id
    cross_edges: List[Tuple[int, int]]  # (inner loop phi, outer Loopcall)
    dual_map: Dict[int, List[Tuple[int, int]]]  # Loopcall -> [(actual, inner formal)]

    @property
    def levels(self) -> Dict[int, List[LevelGraph]]:
        out: Dict[int, List[LevelGraph]] = {}
        for g in self.subgraphs.values():
            out.setdefault(g.level, []).append(g)
        return out

    @property
    def top(self) -> LevelGraph:
        return self.subgraphs[0]

    def vertex(self, name: str) -> Vertex:
        for v in self.vertices.values():
            if v.name == name:
                return v
        raise KeyError(name)


def build_invariant_graph(mod: IrModule) -> InvariantGraph:
    vertices: Dict[int, Vertex] = {}
    subgraphs: Dict[int, LevelGraph] = {}
    cross: List[Tuple[int, int]] = []
    dual: Dict[int, List[Tuple[int, int]]] = {}
    for r in mod.regions:
        vids: List[int] = []
        edges: List[Edge] = []
        preds: Dict[int, List[Tuple[int, bool]]] = {}
        calls: List[int] = []
        inputs: List[int] = []
        loop_attr = (r.enclosing, r.loop.index)
        for op in r.ops:
            if op.kind == "Return":
                continue
            for k, out in enumerate(op.outputs):
                val = mod.values[out]
                attrs = dict(op.attrs)
                if op.kind == "Input":
                    ftype, fname = op.attrs["formals"][k]
                    attrs = {"type": ftype, "name": fname}
                    if ftype == "record":
                        attrs["fields"] = mod.fields
                    elif ftype == "array":
                        decl = mod.kernel.array(fname)
                        attrs.update(rank=decl.rank, kind=decl.kind)
                    inputs.append(out)
                if op.kind == "Loopcall":
                    attrs["region"] = op.region
                    calls.append(out)
                vertices[out] = Vertex(out, val.name, (val.type, val.var), op.kind, r.level, loop_attr, r.id, attrs)
                vids.append(out)
                preds[out] = list(zip(op.inputs, op.carried))
                for src, car in zip(op.inputs, op.carried):
                    edges.append(Edge(src, out, "value", car))
                for d in op.deps:
                    edges.append(Edge(d, out, "index", False))
        subgraphs[r.id] = LevelGraph(
            r.id, r.level, r.loop, vids, edges, r.phi, r.record_input, r.bound, calls, inputs, preds,
        )
    for r in mod.regions:
        for op in r.ops:
            if op.kind == "Loopcall":
                inner = subgraphs[op.region]
                lc = op.outputs[0]
                if inner.phi is not None:
                    cross.append((inner.phi, lc))
                dual[lc] = list(zip(op.inputs, inner.inputs))
    return InvariantGraph(mod, vertices, subgraphs, cross, dual)


def dump_graph(g: InvariantGraph, fmt: str = "text") -> str:
    if fmt == "dot":
        return _dot(g)
    lines = []
    for rid in sorted(g.subgraphs):
        sg = g.subgraphs[rid]
        lines.append(f"level {sg.level} region {rid} loop {sg.loop.index}")
        for v in sg.vertices:
            x = g.vertices[v]
            c = ",".join(x.loop[0]) or "-"
            lines.append(f"  v{v} {x.name} op={x.op} data=({x.data[0]},{x.data[1]}) level={x.level} loop=(C={c},I={x.loop[1]})")
        for e in sg.edges:
            tag = " carried" if e.carried else ""
            tag += " index" if e.kind == "index" else ""
            lines.append(f"  e v{e.src} -> v{e.dst}{tag}")
    for src, dst in g.cross_edges:
        lines.append(f"cross v{src} -> v{dst}")
    for lc in sorted(g.dual_map):
        pairs = " ".join(f"v{a}~v{f}" for a, f in g.dual_map[lc])
        lines.append(f"dual v{lc}: {pairs}")
    return "\n".join(lines) + "\n"


def _dot(g: InvariantGraph) -> str:
    lines = ["digraph invariant {", "  rankdir=TB;"]
    for rid in sorted(g.subgraphs):
        sg = g.subgraphs[rid]
        lines.append(f'  subgraph cluster_{rid} {{ label="level {sg.level} ({sg.loop.index})";')
        for v in sg.vertices:
            x = g.vertices[v]
            shape = "doublecircle" if x.op == "Phi" else ("box" if x.op == "Loopcall" else "ellipse")
            lines.append(f'    v{v} [label="{x.name}\\n{x.op}", shape={shape}];')
        lines.append("  }")
        for e in sg.edges:
            style = ' [style=dashed, label="t-1"]' if e.carried else (" [style=dotted]" if e.kind == "index" else "")
            lines.append(f"  v{e.src} -> v{e.dst}{style};")
    for src, dst in g.cross_edges:
        lines.append(f"  v{src} -> v{dst} [color=blue];")
    lines.append("}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------ interpreter


def eval_index(e: ElemExp, env: Dict[str, int]) -> int:
    lin = linearize(e)
    if lin is None:
        raise UnsupportedConstruct(f"not an index expression: {render(e)}")
    return int(_eval_scalar(e, env, {}))


def _eval_scalar(e: ElemExp, env, arrays):
    if isinstance(e, Const):
        return float(e.value) if e.kind == "float" else int(e.value)
    if isinstance(e, Var):
        if e.name not in env:
            raise MissingInput(f"no value for scalar '{e.name}'")
        return env[e.name]
    if isinstance(e, Get):
        idx = tuple(int(_eval_scalar(i, env, arrays)) for i in e.index)
        return _load(arrays, e.array, idx)
    vals = [_eval_scalar(a, env, arrays) for a in e.args]
    return _apply(e.op, vals)


def _apply(op: str, vals):
    if op == "+":
        return vals[0] + vals[1]
    if op == "-":
        return vals[0] - vals[1]
    if op == "*":
        return vals[0] * vals[1]
    if op == "neg":
        return -vals[0]
    if op == "/":
        a, b = vals
        if isinstance(a, (int, np.integer)) and isinstance(b, (int, np.integer)):
            q = abs(a) // abs(b)
            return int(q if (a >= 0) == (b >= 0) else -q)
        return a / b
    if op == "div":
        return vals[0] // vals[1]
    if op == "mod":
        return vals[0] % vals[1]
    if op == "min":
        return min(vals)
    if op == "max":
        return max(vals)
    raise UnsupportedConstruct(f"unknown operator {op}")


class _Arr:
    __slots__ = ("data", "lo", "name")

    def __init__(self, name, data, lo):
        self.name, self.data, self.lo = name, data, lo


def _load(arrays, name, idx):
    a = arrays[name]
    return a.data[_offset(a, idx)]


def _offset(a: _Arr, idx):
    pos = []
    for d, (i, lo) in enumerate(zip(idx, a.lo)):
        k = i - lo
        if k < 0 or k >= a.data.shape[d]:
            hi = lo + a.data.shape[d] - 1
            raise OutOfBounds(
                f"index {tuple(idx)} out of bounds for '{a.name}' (dimension {d + 1} spans {lo}..{hi})",
                index=tuple(idx), extent=(lo, hi),
            )
        pos.append(k)
    return tuple(pos)


def array_extents(ast: KernelAst, scalars: Dict[str, int]) -> Dict[str, Tuple[Tuple[int, int], ...]]:
    out = {}
    for a in ast.arrays:
        out[a.name] = tuple((eval_index(lo, scalars), eval_index(hi, scalars)) for lo, hi in a.extents)
    return out


def interpret_kernel(ast: KernelAst, inputs: Dict[str, object]) -> Dict[str, np.ndarray]:
    """Run the nest eagerly. ``inputs`` maps every argument to a value:
    numpy arrays shaped by the declared extents, numbers for scalars.
    Returns fresh copies of the output arrays."""
    scalars: Dict[str, object] = {}
    for p in ast.params:
        if p.name not in inputs:
            raise MissingInput(f"missing scalar argument '{p.name}'")
        v = inputs[p.name]
        scalars[p.name] = int(v) if p.kind == "int" else float(v)
    ext = array_extents(ast, {k: v for k, v in scalars.items() if isinstance(v, int)})
    arrays: Dict[str, _Arr] = {}
    for a in ast.arrays:
        if a.name not in inputs:
            raise MissingInput(f"missing array argument '{a.name}'")
        data = np.array(inputs[a.name], dtype=np.int64 if a.kind == "int" else np.float64, copy=True)
        shape = tuple(hi - lo + 1 for lo, hi in ext[a.name])
        if data.shape != shape:
            raise ShapeMismatch(f"array '{a.name}' has shape {data.shape}, declared extents give {shape}")
        arrays[a.name] = _Arr(a.name, data, tuple(lo for lo, _ in ext[a.name]))
    run = _compile_stmt(ast.loop, ast)
    env = dict(scalars)
    run(env, arrays)
    return {a.name: arrays[a.name].data for a in ast.outputs}


def _compile_exp(e: ElemExp, ints: set):
    """Closure evaluating ``e``; ``ints`` names the integer-typed scalars."""
    if isinstance(e, Const):
        v = float(e.value) if e.kind == "float" else int(e.value)
        return lambda env, arrs: v
    if isinstance(e, Var):
        name = e.name

        def var(env, arrs):
            try:
                return env[name]
            except KeyError:
                raise MissingInput(f"no value for scalar '{name}'") from None
        return var
    if isinstance(e, Get):
        idx = [_compile_exp(i, ints) for i in e.index]
        name = e.array

        def get(env, arrs):
            a = arrs[name]
            return a.data[_offset(a, [int(f(env, arrs)) for f in idx])]
        return get
    fs = [_compile_exp(a, ints) for a in e.args]
    op = e.op
    if op == "+":
        f, g = fs
        return lambda env, arrs: f(env, arrs) + g(env, arrs)
    if op == "-":
        f, g = fs
        return lambda env, arrs: f(env, arrs) - g(env, arrs)
    if op == "*":
        f, g = fs
        return lambda env, arrs: f(env, arrs) * g(env, arrs)
    if op == "neg":
        f = fs[0]
        return lambda env, arrs: -f(env, arrs)
    return lambda env, arrs: _apply(op, [f(env, arrs) for f in fs])


def _compile_cond(c: Cond, ints):
    if isinstance(c, BoolConst):
        v = c.value
        return lambda env, arrs: v
    if isinstance(c, Cmp):
        f, g = _compile_exp(c.lhs, ints), _compile_exp(c.rhs, ints)
        o = {"==": operator.eq, "!=": operator.ne, "<": operator.lt, "<=": operator.le,
             ">": operator.gt, ">=": operator.ge}[c.op]
        return lambda env, arrs: o(f(env, arrs), g(env, arrs))
    if isinstance(c, And):
        fs = [_compile_cond(a, ints) for a in c.args]
        return lambda env, arrs: all(f(env, arrs) for f in fs)
    if isinstance(c, Or):
        fs = [_compile_cond(a, ints) for a in c.args]
        return lambda env, arrs: any(f(env, arrs) for f in fs)
    if isinstance(c, Not):
        f = _compile_cond(c.arg, ints)
        return lambda env, arrs: not f(env, arrs)
    raise UnsupportedConstruct("condition inputs cannot be interpreted")


def _compile_stmt(s, ast: KernelAst):
    kinds = {x.name: x.kind for x in ast.scalars}
    ints = {n for n, k in kinds.items() if k == "int"}
    return _compile(s, ast, ints, kinds)


def _compile(s, ast, ints, kinds):
    if isinstance(s, LoopNode):
        lo, hi = _compile_exp(s.init, ints), _compile_exp(s.bound, ints)
        step = s.step
        body = [_compile(x, ast, ints, kinds) for x in s.body]
        name = s.index

        def loop(env, arrs):
            a, b = int(lo(env, arrs)), int(hi(env, arrs))
            for i in range(a, b + (1 if step > 0 else -1), step):
                env[name] = i
                for f in body:
                    f(env, arrs)
        return loop
    if isinstance(s, IfBlock):
        arms = [(_compile_cond(c, ints), [_compile(x, ast, ints, kinds) for x in b]) for c, b in s.arms]
        orelse = [_compile(x, ast, ints, kinds) for x in (s.orelse or ())]

        def branch(env, arrs):
            for c, b in arms:
                if c(env, arrs):
                    for f in b:
                        f(env, arrs)
                    return
            for f in orelse:
                f(env, arrs)
        return branch
    val = _compile_exp(s.value, ints)
    if s.index is None:
        name = s.target
        is_int = kinds.get(name) == "int"

        def set_scalar(env, arrs):
            v = val(env, arrs)
            env[name] = int(v) if is_int else float(v)
        return set_scalar
    idx = [_compile_exp(i, ints) for i in s.index]
    target = s.target

    def store(env, arrs):
        a = arrs[target]
        a.data[_offset(a, [int(f(env, arrs)) for f in idx])] = val(env, arrs)
    return store
