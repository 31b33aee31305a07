"""Lift Fortran-style stencil loop nests into predicate summaries and
Halide-style definitions, with differential checking against an interpreter."""
from .checker import prove_equal, verify_against_oracle
from .codegen import emit_dsl, emit_summary
from .frontend import analyze_regularity, parse_file, parse_kernel, strip_directives
from .ir import build_invariant_graph, interpret_kernel, lower_to_ir
from .lifting import LiftOptions, lift, lift_kernel

__version__ = "0.1.0"

__all__ = [
    "LiftOptions", "analyze_regularity", "build_invariant_graph", "emit_dsl", "emit_summary",
    "interpret_kernel", "lift", "lift_kernel", "lower_to_ir", "parse_file", "parse_kernel",
    "prove_equal", "strip_directives", "verify_against_oracle",
]
