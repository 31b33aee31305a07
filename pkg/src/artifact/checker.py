"""Equality checking for summaries and differential testing against the
reference interpreter.

``prove_equal`` tries, in order: structural equality after normalization;
a per-region argument (pair the branches of both sides, drop unsatisfiable
pairs, substitute the unit equalities of each region and compare normal
forms); and finally exhaustive evaluation over a bounded index window with
pseudo-random array contents.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DomainTooLarge, OutOfBounds, ShapeMismatch, UnboundFreeVariable
from .expr import (
    FALSE, INDEX, NUM, TRUE, And, BoolConst, Cmp, Cond, CondVar, Const, ElemExp, Get, Not, Op, Or,
    Var, cond_atoms, cond_vars, conj, disj, exp_vars, linearize, negate, normalize, subst_exp,
)
from .linear import dnf, is_unsat, unit_equalities
from .ir import array_extents, interpret_kernel
from .summary import Branch, RecordSummary, Summary, initial_name

EQUAL, NOT_EQUAL, UNKNOWN = "Equal", "NotEqual", "Unknown"


@dataclass(frozen=True)
class EqualityVerdict:
    status: str
    witness: Optional[Dict[str, object]] = None
    reason: str = ""

    @property
    def equal(self) -> bool:
        return self.status == EQUAL


@dataclass(frozen=True)
class CheckerConfig:
    window: Tuple[int, int] = (-4, 8)
    draws: int = 16
    seed: int = 0
    budget: int = 2_000_000  # evaluation points per exhaustion


DEFAULT = CheckerConfig()

Checkable = Union[ElemExp, Cond, Summary, RecordSummary]


def prove_equal(a: Checkable, b: Checkable, ctx: Cond = TRUE, cfg: CheckerConfig = DEFAULT) -> EqualityVerdict:
    """Decide ``a == b`` for all index values satisfying ``ctx``."""
    if isinstance(a, RecordSummary) or isinstance(b, RecordSummary):
        if not (isinstance(a, RecordSummary) and isinstance(b, RecordSummary)) or a.names != b.names:
            return EqualityVerdict(NOT_EQUAL, {}, "records have different fields")
        worst = EqualityVerdict(EQUAL)
        for n in a.names:
            v = prove_equal(a.get(n), b.get(n), ctx, cfg)
            if v.status == NOT_EQUAL:
                return EqualityVerdict(NOT_EQUAL, dict(v.witness or {}, field=n), v.reason)
            if v.status == UNKNOWN:
                worst = v
        return worst
    if isinstance(a, Summary) or isinstance(b, Summary):
        a = a if isinstance(a, Summary) else Summary((), a)
        b = b if isinstance(b, Summary) else Summary((), b)
        return _summary_equal(a, b, ctx, cfg)
    if _is_cond(a) != _is_cond(b):
        return EqualityVerdict(NOT_EQUAL, {}, "comparing a condition with an expression")
    if _is_cond(a):
        return _cond_equal(a, b, ctx, cfg)
    return _exp_equal_on(a, b, ctx, cfg)


def _is_cond(x) -> bool:
    return isinstance(x, (BoolConst, CondVar, Cmp, And, Or, Not))


def _cond_equal(a: Cond, b: Cond, ctx: Cond, cfg) -> EqualityVerdict:
    if a == b:
        return EqualityVerdict(EQUAL)
    if is_unsat(conj(ctx, a, negate(b))) and is_unsat(conj(ctx, b, negate(a))):
        return EqualityVerdict(EQUAL)
    one = Const(1)
    zero = Const(0)
    return _exhaust(Summary((Branch(a, one),), zero), Summary((Branch(b, one),), zero), ctx, cfg)


def _entries(s: Summary) -> List[Tuple[Cond, ElemExp]]:
    out = [(b.cond, b.exp) for b in s.branches]
    rest = negate(_disj(b.cond for b in s.branches)) if s.branches else TRUE
    out.append((rest, s.default))
    return out


def _disj(cs: Iterable[Cond]) -> Cond:
    return disj(*cs)


def _summary_equal(a: Summary, b: Summary, ctx: Cond, cfg) -> EqualityVerdict:
    if a.pos != b.pos and a.pos and b.pos:
        return EqualityVerdict(NOT_EQUAL, {}, "summaries have different ranks")
    if a.branches == b.branches and a.default == b.default:
        return EqualityVerdict(EQUAL)
    unknown = None
    pos = a.pos or b.pos
    for ca, ea in _entries(a):
        for cb, eb in _entries(b):
            region = conj(ctx, ca, cb)
            if is_unsat(region):
                continue
            v = _exp_equal_on(ea, eb, region, cfg, pos)
            if v.status == NOT_EQUAL:
                return v
            if v.status == UNKNOWN:
                unknown = v
    return unknown or EqualityVerdict(EQUAL)


def _exp_equal_on(ea: ElemExp, eb: ElemExp, region: Cond, cfg, pos: Sequence[str] = ()) -> EqualityVerdict:
    if ea == eb:
        return EqualityVerdict(EQUAL)
    try:
        na, nb = normalize(ea), normalize(eb)
    except Exception:
        na, nb = ea, eb
    if na == nb:
        return EqualityVerdict(EQUAL)
    parts = dnf(region)
    if parts is not None:
        pending = []
        for atoms in parts:
            c = conj(*atoms)
            if is_unsat(c):
                continue
            sub = unit_equalities(c, lambda n: (n in pos, n))
            if sub and normalize(subst_exp(na, sub)) == normalize(subst_exp(nb, sub)):
                continue
            pending.append(c)
        if not pending:
            return EqualityVerdict(EQUAL)
        verdict = EqualityVerdict(EQUAL)
        for c in pending:
            v = _exhaust_exp(ea, eb, c, cfg)
            if v.status == NOT_EQUAL:
                return v
            if v.status == UNKNOWN:
                verdict = v
        return verdict
    return _exhaust_exp(ea, eb, region, cfg)


def _exhaust_exp(ea, eb, region, cfg) -> EqualityVerdict:
    return _exhaust(Summary((), ea), Summary((), eb), region, cfg)


# ------------------------------------------------------------ exhaustion


def is_piecewise_affine(x) -> bool:
    """Index structure (subscripts and conditions) is affine, allowing
    floor division and modulo by constants."""
    ok = True

    def exp_ok(e, index_ctx):
        nonlocal ok
        if isinstance(e, Get):
            for i in e.index:
                lin = linearize(i)
                if lin is None or not all(_affine_atom(t) for t, _ in lin.terms):
                    ok = False
                exp_ok(i, True)
        elif isinstance(e, Op):
            for a in e.args:
                exp_ok(a, index_ctx)

    def cond_ok(c):
        nonlocal ok
        for atom in cond_atoms(c):
            if isinstance(atom, CondVar):
                ok = False
            elif isinstance(atom, Cmp):
                lin = linearize(Op("-", (atom.lhs, atom.rhs)))
                if lin is None or not all(_affine_atom(t) for t, _ in lin.terms):
                    ok = False

    if isinstance(x, Summary):
        for b in x.branches:
            cond_ok(b.cond)
            exp_ok(b.exp, False)
        exp_ok(x.default, False)
    elif _is_cond(x):
        cond_ok(x)
    else:
        exp_ok(x, False)
    return ok


def _affine_atom(t) -> bool:
    if isinstance(t, Var):
        return True
    if isinstance(t, Op) and t.op in ("mod", "div"):
        d = linearize(t.args[1])
        base = linearize(t.args[0])
        return (d is not None and d.is_const() and base is not None
                and all(_affine_atom(a) for a, _ in base.terms))
    if isinstance(t, Op) and t.op in ("min", "max"):
        return all(
            (l := linearize(a)) is not None and all(_affine_atom(x) for x, _ in l.terms) for a in t.args
        )
    return False


def _summary_vars(s: Summary) -> Tuple[set, set, set]:
    """(index vars, numeric vars, arrays) occurring in ``s``."""
    idx, nums, arrays = set(), set(), set()

    def ev(e):
        if isinstance(e, Var):
            (nums if e.kind == NUM else idx).add(e.name)
        elif isinstance(e, Get):
            arrays.add((e.array, e.kind, len(e.index)))
            for i in e.index:
                ev(i)
        elif isinstance(e, Op):
            for a in e.args:
                ev(a)

    def cv(c):
        for atom in cond_atoms(c):
            if isinstance(atom, Cmp):
                ev(atom.lhs)
                ev(atom.rhs)

    for b in s.branches:
        cv(b.cond)
        ev(b.exp)
    ev(s.default)
    for p in s.pos:
        idx.add(p)
    return idx, nums, arrays


def _exhaust(a: Summary, b: Summary, ctx: Cond, cfg: CheckerConfig) -> EqualityVerdict:
    ia, na, _ = _summary_vars(a)
    ib, nb, _ = _summary_vars(b)
    cx, _, _ = _summary_vars(Summary((Branch(ctx, Const(0)),), Const(0)))
    names = sorted(ia | ib | cx)
    nums = sorted(na | nb)
    lo, hi = cfg.window
    width = hi - lo + 1
    npts = width ** len(names)
    if npts > cfg.budget:
        raise DomainTooLarge(
            f"{len(names)} index variables over a window of {width} exceed the budget of {cfg.budget} points"
        )
    axis = np.array(sorted(range(lo, hi + 1), key=lambda v: (abs(v), v < 0)), dtype=np.int64)
    # points nearest the origin come first, so witnesses are small
    grids = np.meshgrid(*[axis] * len(names), indexing="ij") if names else []
    env = {n: g.ravel() for n, g in zip(names, grids)}
    size = npts
    mask = eval_cond(ctx, env, None, size)
    if not mask.any():
        return EqualityVerdict(EQUAL, None, "empty domain")
    env = {n: v[mask] for n, v in env.items()}
    size = int(mask.sum())
    for draw in range(cfg.draws):
        arrays = RandomArrays(cfg.seed, draw)
        numenv = dict(env)
        rng = np.random.default_rng([cfg.seed, draw, 7])
        for n in nums:
            numenv[n] = np.full(size, rng.uniform(-1.0, 1.0))
        va = eval_summary(a, numenv, arrays, size)
        vb = eval_summary(b, numenv, arrays, size)
        diff = ~_close(va, vb)
        if diff.any():
            k = int(np.argmax(diff))
            w = {n: int(env[n][k]) for n in names}
            w["draw"] = draw
            return EqualityVerdict(NOT_EQUAL, w, f"values differ: {va[k]!r} vs {vb[k]!r}")
    if is_piecewise_affine(a) and is_piecewise_affine(b):
        return EqualityVerdict(EQUAL, None, "bounded exhaustion")
    return EqualityVerdict(UNKNOWN, None, "no difference found on the window")


def _close(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if x.dtype.kind in "iub" and y.dtype.kind in "iub":
        return x == y
    x = x.astype(np.float64)
    y = y.astype(np.float64)
    both_nan = np.isnan(x) & np.isnan(y)
    return both_nan | np.isclose(x, y, rtol=1e-9, atol=1e-12)


class RandomArrays:
    """Deterministic pseudo-random array contents addressed by index."""

    def __init__(self, seed: int, draw: int):
        self.seed = seed
        self.draw = draw

    def get(self, name: str, kind: str, idx: Sequence[np.ndarray]) -> np.ndarray:
        with np.errstate(over="ignore"):
            h = np.full(np.shape(idx[0]) if idx else (), np.uint64(zlib.crc32(name.encode()) + 0x9E3779B9), dtype=np.uint64)
            h = h ^ np.uint64((self.seed * 1_000_003 + self.draw) & 0xFFFFFFFF)
            for i in idx:
                h = (h ^ (np.asarray(i).astype(np.int64).astype(np.uint64) + np.uint64(0x632BE59BD9B4E019)))
                h = _mix(h)
            h = _mix(h)
        if kind == "int":
            return (h % np.uint64(21)).astype(np.int64) - 10
        return (h >> np.uint64(11)).astype(np.float64) * (2.0 / 2**53) - 1.0


def _mix(h):
    h = (h ^ (h >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    h = (h ^ (h >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return h ^ (h >> np.uint64(31))


# ------------------------------------------------------------ evaluation


class ConcreteArrays:
    """Real arrays with per-dimension lower bounds; out-of-range reads raise."""

    def __init__(self, data: Mapping[str, np.ndarray], lower: Mapping[str, Sequence[int]]):
        self.data = data
        self.lower = lower

    def get(self, name, kind, idx):
        if name not in self.data:
            raise UnboundFreeVariable(f"array '{name}' has no value")
        a = self.data[name]
        lo = self.lower[name]
        pos = []
        for d, i in enumerate(idx):
            k = np.asarray(i, dtype=np.int64) - lo[d]
            if k.size and (k.min() < 0 or k.max() >= a.shape[d]):
                bad = int(np.argmax((k < 0) | (k >= a.shape[d])))
                raise OutOfBounds(
                    f"summary reads '{name}' outside its extent in dimension {d + 1}",
                    index=int(np.asarray(i).ravel()[bad]), extent=(lo[d], lo[d] + a.shape[d] - 1),
                )
            pos.append(k)
        return a[tuple(pos)]


def eval_exp(e: ElemExp, env: Mapping[str, np.ndarray], arrays, size: int) -> np.ndarray:
    if isinstance(e, Const):
        v = float(e.value) if e.kind == "float" else int(e.value)
        if e.kind == "int" and e.value.denominator != 1:
            v = float(e.value)
        return np.full(size, v)
    if isinstance(e, Var):
        if e.name not in env:
            raise UnboundFreeVariable(f"free variable '{e.name}' has no value")
        v = env[e.name]
        return v if np.ndim(v) else np.full(size, v)
    if isinstance(e, Get):
        idx = [eval_exp(i, env, arrays, size).astype(np.int64) for i in e.index]
        return np.asarray(arrays.get(e.array, e.kind, idx))
    vals = [eval_exp(a, env, arrays, size) for a in e.args]
    op = e.op
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
        if a.dtype.kind in "iu" and b.dtype.kind in "iu":
            with np.errstate(divide="ignore"):
                q = np.abs(a) // np.where(b == 0, 1, np.abs(b))
            return np.where((a >= 0) == (b >= 0), q, -q)
        with np.errstate(divide="ignore", invalid="ignore"):
            return a / b
    if op == "div":
        return np.floor_divide(vals[0], vals[1])
    if op == "mod":
        return np.mod(vals[0], vals[1])
    if op == "min":
        return np.minimum(vals[0], vals[1])
    if op == "max":
        return np.maximum(vals[0], vals[1])
    raise ValueError(f"unknown operator {op}")


def eval_cond(c: Cond, env, arrays, size: int) -> np.ndarray:
    if isinstance(c, BoolConst):
        return np.full(size, c.value)
    if isinstance(c, Cmp):
        l, r = eval_exp(c.lhs, env, arrays, size), eval_exp(c.rhs, env, arrays, size)
        return {"==": np.equal, "!=": np.not_equal, "<": np.less, "<=": np.less_equal,
                ">": np.greater, ">=": np.greater_equal}[c.op](l, r)
    if isinstance(c, And):
        out = np.ones(size, dtype=bool)
        for a in c.args:
            out &= eval_cond(a, env, arrays, size)
        return out
    if isinstance(c, Or):
        out = np.zeros(size, dtype=bool)
        for a in c.args:
            out |= eval_cond(a, env, arrays, size)
        return out
    if isinstance(c, Not):
        return ~eval_cond(c.arg, env, arrays, size)
    if isinstance(c, CondVar):
        if c.name in env:
            return np.asarray(env[c.name], dtype=bool)
        raise UnboundFreeVariable(f"condition input '{c.name}' has no value")
    raise TypeError(c)


def eval_summary(s: Summary, env, arrays, size: int) -> np.ndarray:
    """Evaluate a summary pointwise; each branch expression is only
    evaluated where its branch is taken."""
    out = None
    taken = np.zeros(size, dtype=bool)
    pieces = []
    for b in s.branches:
        m = eval_cond(b.cond, env, arrays, size) & ~taken
        taken |= m
        if m.any():
            pieces.append((m, b.exp))
    rest = ~taken
    if rest.any():
        pieces.append((rest, s.default))
    kinds = []
    for m, e in pieces:
        sub = {k: (v[m] if np.ndim(v) and np.shape(v)[0] == size else v) for k, v in env.items()}
        val = eval_exp(e, sub, arrays, int(m.sum()))
        kinds.append((m, val))
    floaty = any(v.dtype.kind == "f" for _, v in kinds)
    out = np.zeros(size, dtype=np.float64 if floaty or not kinds else np.int64)
    for m, v in kinds:
        out[m] = v
    return out


# ------------------------------------------------------ differential test


@dataclass(frozen=True)
class OracleConfig:
    trials: int = 50
    shape: Optional[Tuple[int, ...]] = None  # max extent per dimension
    seed: int = 0
    tol: float = 1e-12


@dataclass
class VerificationReport:
    kernel: str
    trials: int
    shapes: List[Tuple[int, ...]]
    kind: str  # float | int | mixed
    tolerance: float
    max_abs_error: float = 0.0
    max_rel_error: float = 0.0
    mismatch_count: int = 0
    first_mismatch: Optional[dict] = None
    errors: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.mismatch_count == 0 and not self.errors and self.max_rel_error <= self.tolerance

    def to_json(self) -> dict:
        return {
            "kernel": self.kernel,
            "trials": self.trials,
            "shapes": [list(s) for s in self.shapes],
            "kind": self.kind,
            "tolerance": self.tolerance,
            "maxAbsError": self.max_abs_error,
            "maxRelError": self.max_rel_error,
            "mismatchCount": self.mismatch_count,
            "firstMismatch": self.first_mismatch,
            "errors": list(self.errors),
            "passed": self.passed,
        }

    def text(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        shapes = ", ".join("x".join(map(str, s)) for s in sorted(set(self.shapes))[:4])
        more = "" if len(set(self.shapes)) <= 4 else ", ..."
        line = (
            f"verify {self.kernel}: {verdict} trials={self.trials} shapes=[{shapes}{more}] "
            f"maxAbsError={self.max_abs_error:.3g} mismatches={self.mismatch_count}"
        )
        if self.first_mismatch:
            fm = self.first_mismatch
            line += f" first={fm['array']}{tuple(fm['position'])} expected={fm['expected']} got={fm['got']}"
        if self.errors:
            line += f" error={self.errors[0]}"
        return line


def default_limit(rank: int) -> int:
    return {1: 16, 2: 16, 3: 8}.get(rank, 6)


def sample_params(ast, rng: np.random.Generator, shape: Optional[Sequence[int]] = None) -> Dict[str, int]:
    """Draw integer parameters so every array extent stays within the limit
    (rejection sampling)."""
    ints = [p.name for p in ast.params if p.kind == "int"]
    rank = max((a.rank for a in ast.arrays), default=1)
    limits = {}
    for a in ast.arrays:
        lim = tuple(shape) if shape else (default_limit(rank),) * a.rank
        if len(lim) == 1 and a.rank > 1:
            lim = lim * a.rank
        if len(lim) != a.rank:
            raise ShapeMismatch(f"shape {'x'.join(map(str, shape))} does not match rank {a.rank} of '{a.name}'")
        limits[a.name] = lim
    top = max(max(l) for l in limits.values()) if limits else 8
    best = None
    for _ in range(2000):
        vals = {n: int(rng.integers(1, top + 1)) for n in ints}
        try:
            ext = array_extents(ast, vals)
        except Exception:
            continue
        ok = all(
            1 <= hi - lo + 1 <= lim for name, e in ext.items() for (lo, hi), lim in zip(e, limits[name])
        )
        if ok:
            return vals
        if best is None:
            best = vals
    small = {n: 1 for n in ints}
    return small


def verify_against_oracle(ast, post: RecordSummary, cfg: OracleConfig = OracleConfig()) -> VerificationReport:
    """Compare ``post`` with the interpreter on random inputs."""
    outputs = ast.outputs
    kinds = {a.kind for a in outputs}
    kind = kinds.pop() if len(kinds) == 1 else "mixed"
    if not isinstance(post, RecordSummary):
        raise ShapeMismatch("postcondition must be a record summary")
    if set(post.names) != {a.name for a in outputs}:
        raise ShapeMismatch(
            f"postcondition fields {sorted(post.names)} do not match outputs {sorted(a.name for a in outputs)}"
        )
    for a in outputs:
        if len(post.get(a.name).pos) != a.rank:
            raise ShapeMismatch(f"postcondition for '{a.name}' has rank {len(post.get(a.name).pos)}, array has {a.rank}")
    bound = {p.name for p in ast.params} | {a.name for a in ast.arrays} | {initial_name(a.name) for a in outputs}
    for a in outputs:
        s = post.get(a.name)
        idx, nums, arrays = _summary_vars(s)
        free = (idx - set(s.pos)) | nums | {n for n, _, _ in arrays}
        missing = sorted(free - bound)
        if missing:
            raise UnboundFreeVariable(f"postcondition for '{a.name}' mentions unbound {', '.join(missing)}")
    rep = VerificationReport(ast.name, cfg.trials, [], kind, cfg.tol)
    for trial in range(cfg.trials):
        rng = np.random.default_rng([cfg.seed, trial])
        params = sample_params(ast, rng, cfg.shape)
        ext = array_extents(ast, params)
        inputs: Dict[str, object] = dict(params)
        for p in ast.params:
            if p.kind == "float":
                inputs[p.name] = float(rng.uniform(-1.0, 1.0))
        for a in ast.arrays:
            shape = tuple(hi - lo + 1 for lo, hi in ext[a.name])
            if a.kind == "int":
                inputs[a.name] = rng.integers(-10, 11, size=shape).astype(np.int64)
            else:
                inputs[a.name] = rng.uniform(-1.0, 1.0, size=shape)
        rep.shapes.append(tuple(hi - lo + 1 for lo, hi in ext[outputs[0].name]) if outputs else ())
        try:
            expected = interpret_kernel(ast, inputs)
        except Exception as exc:  # the kernel itself failed on this instance
            rep.errors.append(f"trial {trial}: interpreter: {exc}")
            continue
        data = {a.name: np.asarray(inputs[a.name]) for a in ast.arrays}
        lower = {a.name: [lo for lo, _ in ext[a.name]] for a in ast.arrays}
        for a in outputs:
            data[initial_name(a.name)] = np.asarray(inputs[a.name])
            lower[initial_name(a.name)] = lower[a.name]
        arrays = ConcreteArrays(data, lower)
        for a in outputs:
            s = post.get(a.name)
            e = ext[a.name]
            axes = [np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in e]
            grids = np.meshgrid(*axes, indexing="ij")
            size = int(np.prod([len(x) for x in axes]))
            env: Dict[str, object] = {p: g.ravel() for p, g in zip(s.pos, grids)}
            for p in ast.params:
                env[p.name] = inputs[p.name] if p.kind == "float" else int(inputs[p.name])
            exp_vals = np.asarray(expected[a.name]).ravel()
            try:
                got = eval_summary(s, env, arrays, size)
            except (OutOfBounds, UnboundFreeVariable) as exc:
                rep.errors.append(f"trial {trial}: {a.name}: {exc.message}")
                continue
            _compare(rep, a, exp_vals, got, grids, trial, cfg.tol)
    return rep


def _compare(rep: VerificationReport, decl, expected, got, grids, trial, tol):
    if decl.kind == "int":
        bad = expected != got.astype(np.int64) if got.dtype.kind != "f" else expected != got
        err = np.abs(expected.astype(np.float64) - got.astype(np.float64))
        rel = np.where(bad, np.inf, 0.0)
    else:
        err = np.abs(expected - got)
        scale = np.maximum(1.0, np.abs(expected))
        rel = err / scale
        rel = np.where(np.isnan(rel), np.inf, rel)
        bad = rel > tol
    rep.max_abs_error = max(rep.max_abs_error, float(np.nan_to_num(err, nan=np.inf).max(initial=0.0)))
    if decl.kind != "int":
        rep.max_rel_error = max(rep.max_rel_error, float(rel.max(initial=0.0)))
    n = int(bad.sum())
    if n:
        rep.mismatch_count += n
        if rep.first_mismatch is None:
            k = int(np.argmax(bad))
            pos = [int(g.ravel()[k]) for g in grids]
            rep.first_mismatch = {
                "trial": trial, "array": decl.name, "position": pos,
                "expected": _py(expected[k]), "got": _py(got[k]),
            }


def _py(x):
    x = np.asarray(x).item()
    return x
