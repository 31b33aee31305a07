"""Command-line driver: ``lift``, ``corpus``, ``dump-ir`` and ``dump-graph``.

Settings resolve as flags, then ``ARTIFACT_*`` environment variables, then
built-in defaults. Exit codes: 0 success, 1 the kernel could not be lifted,
2 the lifted summary failed verification.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .checker import OracleConfig, VerificationReport, prove_equal, verify_against_oracle
from .codegen import KernelMeta, emit_dsl, emit_summary
from .errors import LiftError
from .expr import Get, exp_vars
from .frontend import Assign, IfBlock, KernelAst, LoopNode, has_directives, parse_file, walk
from .ir import build_invariant_graph, dump_graph, dump_ir, lower_to_ir
from .lifting import DEFAULT_MAX_SWEEPS, LiftOptions, LiftResult, lift, reset_caches

log = logging.getLogger("artifact")

EXIT_OK, EXIT_LIFT, EXIT_VERIFY = 0, 1, 2
RECORD_VERSION = 1


# ------------------------------------------------------------ settings


def parse_verify_spec(text: str) -> OracleConfig:
    """``trials=N,shape=8x8,seed=S,tol=1e-12``; every key is optional."""
    cfg = OracleConfig()
    if not text or text in ("1", "on", "yes", "true"):
        return cfg
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        key, _, val = part.partition("=")
        key = key.strip()
        try:
            if key == "trials":
                cfg = replace(cfg, trials=int(val))
            elif key == "shape":
                cfg = replace(cfg, shape=tuple(int(v) for v in val.lower().split("x")))
            elif key == "seed":
                cfg = replace(cfg, seed=int(val))
            elif key == "tol":
                cfg = replace(cfg, tol=float(val))
            else:
                raise argparse.ArgumentTypeError(f"unknown verify option '{key}'")
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad value for '{key}': {val}") from exc
    return cfg


def _env(name: str) -> Optional[str]:
    v = os.environ.get("ARTIFACT_" + name)
    return v if v not in (None, "") else None


def _env_flag(name: str) -> bool:
    v = _env(name)
    return v is not None and v.lower() in ("1", "true", "yes", "on")


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from the environment, then from defaults."""
    if getattr(args, "max_sweeps", None) is None:
        args.max_sweeps = int(_env("MAX_SWEEPS") or DEFAULT_MAX_SWEEPS)
    if hasattr(args, "emit") and args.emit is None:
        args.emit = _env("EMIT") or "summary"
    if hasattr(args, "verify") and args.verify is None:
        args.verify = _env("VERIFY")
    if hasattr(args, "out") and args.out is None:
        args.out = _env("OUT")
    if hasattr(args, "no_equiv_check") and not args.no_equiv_check:
        args.no_equiv_check = _env_flag("NO_EQUIV_CHECK")
    if hasattr(args, "no_vertex_elim") and not args.no_vertex_elim:
        args.no_vertex_elim = _env_flag("NO_VERTEX_ELIM")
    return args


def lift_options(args) -> LiftOptions:
    return LiftOptions(
        max_sweeps=args.max_sweeps,
        equiv_check=not args.no_equiv_check,
        vertex_elim=not args.no_vertex_elim,
    )


# ------------------------------------------------------------ pipeline


@dataclass
class RunRecord:
    kernel: str
    file: str
    status: str = "ok"  # ok | lift-failed | verify-failed
    phases: Dict[str, float] = field(default_factory=dict)
    options: Dict[str, object] = field(default_factory=dict)
    sweeps: int = 0
    sccs: List[dict] = field(default_factory=list)
    consistency: str = "skipped"
    verification: Optional[dict] = None
    artifacts: List[str] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def exit_code(self) -> int:
        return {"ok": EXIT_OK, "lift-failed": EXIT_LIFT, "verify-failed": EXIT_VERIFY}[self.status]

    def to_json(self) -> dict:
        return {
            "version": RECORD_VERSION,
            "kernel": self.kernel,
            "file": self.file,
            "status": self.status,
            "exitCode": self.exit_code,
            "phases": self.phases,
            "options": self.options,
            "sweeps": self.sweeps,
            "sccs": self.sccs,
            "consistency": self.consistency,
            "verification": self.verification,
            "artifacts": self.artifacts,
            "error": self.error,
        }


@dataclass
class Pipeline:
    """One kernel through parse, lowering, lifting and (optionally) checking."""

    path: Path
    opts: LiftOptions
    verify: Optional[OracleConfig] = None
    ast: Optional[KernelAst] = None
    result: Optional[LiftResult] = None
    report: Optional[VerificationReport] = None

    def run(self) -> RunRecord:
        rec = RunRecord(self.path.stem, str(self.path))
        rec.options = {
            "maxSweeps": self.opts.max_sweeps,
            "equivCheck": self.opts.equiv_check,
            "vertexElim": self.opts.vertex_elim,
        }
        try:
            with _phase(rec, "parse"):
                self.ast = parse_file(self.path)
                rec.kernel = self.ast.name
            with _phase(rec, "ir"):
                mod = lower_to_ir(self.ast)
            with _phase(rec, "graph"):
                graph = build_invariant_graph(mod)
            reset_caches()
            self.result = lift(graph, self.opts)
            rec.phases["lift"] = round(self.result.seconds, 6)
            rec.phases["consistency"] = round(self.result.check_seconds, 6)
        except LiftError as exc:
            rec.status = "lift-failed"
            rec.error = exc.with_file(exc.filename or str(self.path)).render()
            return rec
        res = self.result
        rec.sweeps = res.sweeps
        rec.sccs = [l.to_json() for l in res.nontrivial()]
        if res.consistency:
            rec.consistency = "Equal" if res.consistent else "Mismatch"
        if not res.consistent:
            bad = ", ".join(f"{k}: {v}" for k, v in res.consistency.items() if v != "Equal")
            rec.status = "lift-failed"
            rec.error = f"{self.path}: summaries are not self-consistent ({bad})"
            return rec
        if self.verify is not None:
            with _phase(rec, "verify"):
                try:
                    self.report = verify_against_oracle(self.ast, res.post, self.verify)
                except LiftError as exc:
                    self.report = VerificationReport(rec.kernel, 0, [], "", self.verify.tol, errors=[exc.render()])
            rec.verification = self.report.to_json()
            if not self.report.passed:
                rec.status = "verify-failed"
        return rec


class _phase:
    def __init__(self, rec: RunRecord, name: str):
        self.rec, self.name = rec, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.rec.phases[self.name] = round(time.perf_counter() - self.t0, 6)
        return False


# ------------------------------------------------------------ lift


def cmd_lift(args) -> int:
    resolve(args)
    verify = parse_verify_spec(args.verify) if args.verify is not None else None
    pipe = Pipeline(Path(args.path), lift_options(args), verify)
    if not pipe.path.exists():
        print(f"{pipe.path}: no such file", file=sys.stderr)
        return EXIT_LIFT
    rec = pipe.run()
    if rec.error:
        print(rec.error, file=sys.stderr)
    if pipe.result is not None and rec.status != "lift-failed":
        t0 = time.perf_counter()
        rec.artifacts = _write_artifacts(pipe, args.emit, args.out, quiet=args.json)
        rec.phases["emit"] = round(time.perf_counter() - t0, 6)
        if args.trace:
            print("\n".join(pipe.result.trace), file=sys.stderr if args.json else sys.stdout)
    if pipe.report is not None and not args.json:
        print(pipe.report.text())
    if args.json:
        print(json.dumps(rec.to_json(), indent=2))
    return rec.exit_code


def _write_artifacts(pipe: Pipeline, emit: str, out: Optional[str], quiet: bool) -> List[str]:
    post = pipe.result.post
    texts = {}
    if emit in ("summary", "both"):
        texts["summary"] = emit_summary(post)
    if emit in ("dsl", "both"):
        try:
            texts["halide"] = emit_dsl(post, KernelMeta.from_ast(pipe.ast))
        except LiftError as exc:
            print(exc.render(), file=sys.stderr)
    written = []
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        for kind, text in texts.items():
            p = d / f"{pipe.ast.name}.{kind}.txt"
            p.write_text(text, encoding="utf-8")
            written.append(str(p))
    elif not quiet:
        sys.stdout.write("\n".join(texts.values()))
    return written


# ------------------------------------------------------------ corpus


def default_corpus() -> Path:
    return Path(str(resources.files("artifact") / "kernels"))


def kernel_features(ast: KernelAst) -> dict:
    """Shape and optimization tags for the corpus table."""
    stmts = list(walk([ast.loop]))
    assigns = [s for s in stmts if isinstance(s, Assign) and s.index is not None]
    outs = {a.name for a in ast.outputs}
    reads_of = {}
    for s in assigns:
        reads_of.setdefault(s.target, []).append(len(_reads(s.value)))
    points = max((max(v) for v in reads_of.values()), default=0)
    opts = []
    if any(isinstance(s, IfBlock) and s.arms for s in stmts):
        opts.append("LF")
    if has_directives(ast):
        opts.append("PD")
    read_arrays = {g.array for s in assigns for g in _reads(s.value)}
    if read_arrays & outs:
        opts.append("IB")
    if _unrolled([ast.loop]):
        opts.append("LU")
    loops = [s for s in stmts if isinstance(s, LoopNode)]
    for lp in loops:
        if (exp_vars(lp.init) | exp_vars(lp.bound)) & {l.index for l in loops}:
            opts.append("LT")
            break
    rank = max((a.rank for a in ast.outputs), default=0)
    return {"shape": f"{rank}d-{points}p-{len(outs)}o", "opts": opts}


def _unrolled(stmts) -> bool:
    """Some straight-line block writes the same array more than once."""
    seen = []
    for s in stmts:
        if isinstance(s, Assign) and s.index is not None:
            seen.append(s.target)
        elif isinstance(s, LoopNode) and _unrolled(s.body):
            return True
        elif isinstance(s, IfBlock):
            if any(_unrolled(body) for _, body in s.arms) or (s.orelse and _unrolled(s.orelse)):
                return True
    return len(seen) != len(set(seen))


def _reads(e) -> List[Get]:
    out: List[Get] = []

    def go(x):
        if isinstance(x, Get):
            if x not in out:
                out.append(x)
            for i in x.index:
                go(i)
        elif hasattr(x, "args"):
            for a in x.args:
                go(a)

    go(e)
    return out


def corpus_row(path: str, opts: LiftOptions, verify: OracleConfig) -> dict:
    pipe = Pipeline(Path(path), opts, verify)
    rec = pipe.run()
    row = {"kernel": rec.kernel, "file": path, "record": rec.to_json(), "shape": "?", "opts": [], "speedup": None}
    if pipe.ast is not None:
        row.update(kernel_features(pipe.ast))
    if rec.status == "ok" and {"LU", "LT"} & set(row["opts"]) and (opts.equiv_check or opts.vertex_elim):
        # informational: the same kernel with both accelerations off
        base = Pipeline(Path(path), replace(opts, equiv_check=False, vertex_elim=False))
        brec = base.run()
        if brec.status == "ok":
            row["speedup"] = brec.phases["lift"] / max(rec.phases["lift"], 1e-9)
            row["baselineSweeps"] = brec.sweeps
            row["baselineEqual"] = prove_equal(pipe.result.post, base.result.post).status
    return row


def cmd_corpus(args) -> int:
    resolve(args)
    root = Path(args.dir) if args.dir else default_corpus()
    files = sorted(str(p) for p in root.glob("*.st")) if root.is_dir() else []
    if not root.is_dir():
        print(f"{root}: not a directory", file=sys.stderr)
        return EXIT_LIFT
    if not files:
        print(f"warning: no .st kernels in {root}", file=sys.stderr)
    verify = parse_verify_spec(args.verify) if args.verify is not None else OracleConfig()
    opts = lift_options(args)
    if args.jobs > 1 and len(files) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            rows = list(ex.map(corpus_row, files, [opts] * len(files), [verify] * len(files)))
    else:
        rows = [corpus_row(f, opts, verify) for f in files]
    failed = [r for r in rows if r["record"]["status"] != "ok"]
    if args.json:
        print(json.dumps({"version": RECORD_VERSION, "corpus": str(root), "rows": rows}, indent=2))
    else:
        print(format_table(rows))
        for r in failed:
            print(r["record"]["error"] or f"{r['file']}: {r['record']['status']}", file=sys.stderr)
    return max((r["record"]["exitCode"] for r in rows), default=EXIT_OK)


def format_table(rows: Sequence[dict]) -> str:
    head = ("kernel", "shape", "opts", "sweeps", "lift (s)", "verify", "speedup")
    body = []
    for r in rows:
        rec = r["record"]
        verdict = {"ok": "pass", "verify-failed": "FAIL", "lift-failed": "ERROR"}[rec["status"]]
        speed = f"{r['speedup']:.2f}x" if r.get("speedup") else "-"
        body.append((
            r["kernel"], r["shape"], ",".join(r["opts"]) or "-", str(rec["sweeps"]),
            f"{rec['phases'].get('lift', 0.0):.3f}", verdict, speed,
        ))
    widths = [max(len(x) for x in col) for col in zip(head, *body)] if body else [len(h) for h in head]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*head), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*b) for b in body]
    speeds = [r["speedup"] for r in rows if r.get("speedup")]
    if speeds:
        lines.append(f"mean lift speedup from accelerations (informational): {sum(speeds) / len(speeds):.2f}x")
    return "\n".join(lines)


# ------------------------------------------------------------ dumps


def _load(path: str):
    ast = parse_file(path)
    return ast, lower_to_ir(ast)


def cmd_dump_ir(args) -> int:
    try:
        _, mod = _load(args.path)
    except LiftError as exc:
        print(exc.render(), file=sys.stderr)
        return EXIT_LIFT
    print(dump_ir(mod))
    return EXIT_OK


def cmd_dump_graph(args) -> int:
    try:
        _, mod = _load(args.path)
    except LiftError as exc:
        print(exc.render(), file=sys.stderr)
        return EXIT_LIFT
    print(dump_graph(build_invariant_graph(mod), fmt=args.format))
    return EXIT_OK


# ------------------------------------------------------------ entry


def _lift_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-sweeps", type=int, default=None, help="sweep cap per SCC")
    p.add_argument("--no-equiv-check", action="store_true", help="do not merge shifted-equal branches")
    p.add_argument("--no-vertex-elim", action="store_true", help="do not short-cut tiled loop levels")
    p.add_argument("--json", action="store_true", help="print a machine-readable run record")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="artifact", description="Lift stencil kernels to summaries and Halide-style text.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("lift", help="lift one kernel")
    p.add_argument("path")
    p.add_argument("--emit", choices=("summary", "dsl", "both"), default=None)
    p.add_argument("--out", default=None, help="directory for <kernel>.summary.txt / <kernel>.halide.txt")
    p.add_argument("--verify", nargs="?", const="", default=None, metavar="trials=N,shape=8x8,seed=S,tol=T")
    p.add_argument("--trace", action="store_true", help="print per-SCC sweep logs")
    _lift_flags(p)
    p.set_defaults(fn=cmd_lift)

    p = sub.add_parser("corpus", help="lift and verify every kernel in a directory")
    p.add_argument("dir", nargs="?", default=None, help="defaults to the bundled kernels")
    p.add_argument("--verify", default=None, metavar="trials=N,shape=8x8,seed=S,tol=T")
    p.add_argument("--jobs", type=int, default=1)
    _lift_flags(p)
    p.set_defaults(fn=cmd_corpus)

    p = sub.add_parser("dump-ir", help="print the lowered IR")
    p.add_argument("path")
    p.set_defaults(fn=cmd_dump_ir)

    p = sub.add_parser("dump-graph", help="print the per-level invariant graph")
    p.add_argument("path")
    p.add_argument("--format", choices=("text", "dot"), default="text")
    p.set_defaults(fn=cmd_dump_graph)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        if getattr(args, "verify", None):
            parse_verify_spec(args.verify)
    except argparse.ArgumentTypeError as exc:
        ap.error(str(exc))
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
