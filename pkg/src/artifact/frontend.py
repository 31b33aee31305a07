"""Parser for the Fortran-like kernel language (``.st`` files).

The accepted subset is documented in ``docs/grammar.md``. Identifiers are
case-sensitive; keywords are not. Expressions are parsed straight into the
symbolic trees of :mod:`artifact.expr`, so the AST and the summaries share
one expression language.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from .errors import (
    KernelSyntaxError, NonAffineSubscript, Span, UndeclaredIdentifier, UnsupportedConstruct,
)
from .expr import (
    FALSE, INDEX, NUM, TRUE, And, BoolConst, Cmp, Cond, Const, ElemExp, Get, Not, Op, Or, Var,
    cmp, conj, cond_atoms, cond_vars, disj, exp_arrays, exp_vars, linearize, negate, render,
    render_cond,
)
from .linear import is_unsat

# ------------------------------------------------------------------- AST


@dataclass(frozen=True)
class ArrayDecl:
    name: str
    kind: str  # int | float
    extents: Tuple[Tuple[ElemExp, ElemExp], ...]  # inclusive (lo, hi) per dimension
    intent: str = ""  # in | out | inout, when declared
    span: Optional[Span] = field(default=None, compare=False)

    @property
    def rank(self) -> int:
        return len(self.extents)


@dataclass(frozen=True)
class ScalarDecl:
    name: str
    kind: str
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class Assign:
    target: str
    index: Optional[Tuple[ElemExp, ...]]  # None for a scalar target
    value: ElemExp
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class IfBlock:
    arms: Tuple[Tuple[Cond, Tuple["Stmt", ...]], ...]
    orelse: Optional[Tuple["Stmt", ...]] = None
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class LoopNode:
    index: str
    init: ElemExp
    bound: ElemExp
    step: int
    body: Tuple["Stmt", ...]
    directives: Tuple[str, ...] = ()
    trailing: Tuple[str, ...] = ()  # directives closing the loop (``!$omp end ...``)
    span: Optional[Span] = field(default=None, compare=False)

    @property
    def level(self) -> int:
        """Innermost loops are level 1."""
        inner = [s.level for s in iter_loops(self.body)]
        return 1 + max(inner, default=0)

    @property
    def children(self) -> List["LoopNode"]:
        return list(iter_loops(self.body))


Stmt = Union[Assign, IfBlock, LoopNode]


@dataclass(frozen=True)
class KernelAst:
    name: str
    args: Tuple[str, ...]
    arrays: Tuple[ArrayDecl, ...]
    scalars: Tuple[ScalarDecl, ...]
    loop: LoopNode
    filename: str = field(default="<string>", compare=False)

    @property
    def depth(self) -> int:
        return self.loop.level

    @property
    def loops(self) -> LoopNode:
        return self.loop

    def array(self, name: str) -> ArrayDecl:
        for a in self.arrays:
            if a.name == name:
                return a
        raise KeyError(name)

    @property
    def params(self) -> Tuple[ScalarDecl, ...]:
        """Scalar arguments."""
        return tuple(s for s in self.scalars if s.name in self.args)

    @property
    def temps(self) -> Tuple[ScalarDecl, ...]:
        idx = set(loop_indices(self.loop))
        return tuple(s for s in self.scalars if s.name not in self.args and s.name not in idx)

    @property
    def outputs(self) -> Tuple[ArrayDecl, ...]:
        """Arrays the nest writes, plus those declared ``intent(out|inout)``."""
        written = set(written_arrays(self.loop))
        return tuple(a for a in self.arrays if a.name in written or a.intent in ("out", "inout"))

    @property
    def inputs(self) -> Tuple[ArrayDecl, ...]:
        out = {a.name for a in self.outputs}
        return tuple(a for a in self.arrays if a.name not in out)


def iter_loops(stmts: Sequence[Stmt]) -> Iterator[LoopNode]:
    """Loops directly nested in ``stmts`` (looking through if-blocks)."""
    for s in stmts:
        if isinstance(s, LoopNode):
            yield s
        elif isinstance(s, IfBlock):
            for _, body in s.arms:
                yield from iter_loops(body)
            if s.orelse:
                yield from iter_loops(s.orelse)


def walk(stmts: Sequence[Stmt]) -> Iterator[Stmt]:
    for s in stmts:
        yield s
        if isinstance(s, LoopNode):
            yield from walk(s.body)
        elif isinstance(s, IfBlock):
            for _, body in s.arms:
                yield from walk(body)
            if s.orelse:
                yield from walk(s.orelse)


def loop_indices(loop: LoopNode) -> List[str]:
    return [s.index for s in walk([loop]) if isinstance(s, LoopNode)]


def written_arrays(loop: LoopNode) -> List[str]:
    out: List[str] = []
    for s in walk([loop]):
        if isinstance(s, Assign) and s.index is not None and s.target not in out:
            out.append(s.target)
    return out


# ----------------------------------------------------------------- lexer

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<directive>![$][^\n]*)
  | (?P<comment>![^\n]*)
  | (?P<cont>&[ \t]*(?:![^\n]*)?\n)
  | (?P<nl>\n|;)
  | (?P<real>(?:\d+\.\d*|\.\d+|\d+)(?:[eEdD][+-]?\d+)|\d+\.\d*(?![a-zA-Z])|\.\d+)
  | (?P<int>\d+)
  | (?P<dotop>\.(?:and|or|not|eq|ne|lt|le|gt|ge|true|false)\.)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>::|==|/=|!=|<=|>=|\*\*|[-+*/(),:=<>])
    """,
    re.VERBOSE | re.IGNORECASE,
)

_DOTOPS = {".eq.": "==", ".ne.": "/=", ".lt.": "<", ".le.": "<=", ".gt.": ">", ".ge.": ">="}


@dataclass(frozen=True)
class Token:
    kind: str  # name int real op nl directive eof
    text: str
    line: int
    col: int

    @property
    def span(self) -> Span:
        return Span(self.line, self.col, self.line, self.col + max(len(self.text), 1) - 1)


def tokenize(source: str, filename: str = "<string>") -> List[Token]:
    toks: List[Token] = []
    pos, line, col = 0, 1, 1
    # a trailing ampersand continues the statement on the next line
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if not m:
            raise KernelSyntaxError(
                f"unexpected character {source[pos]!r}", Span(line, col, line, col), filename=filename
            )
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            toks.append(Token("nl", text, line, col))
        elif kind == "directive":
            toks.append(Token("directive", text.strip(), line, col))
        elif kind == "dotop":
            low = text.lower()
            if low in (".true.", ".false."):
                toks.append(Token("bool", low, line, col))
            else:
                toks.append(Token("op", _DOTOPS.get(low, low), line, col))
        elif kind in ("real", "int", "name", "op"):
            toks.append(Token(kind, text, line, col))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    toks.append(Token("nl", "", line, col))
    toks.append(Token("eof", "", line, col))
    return toks


# ---------------------------------------------------------------- parser

_UNSUPPORTED = {
    "call": "subroutine calls", "goto": "goto", "go": "goto", "function": "functions",
    "while": "while-loops", "recursive": "recursion", "print": "I/O", "write": "I/O",
    "read": "I/O", "allocate": "allocation", "exit": "loop exits", "cycle": "loop cycles",
    "return": "early return", "select": "select case", "where": "where-constructs",
    "forall": "forall", "module": "modules", "use": "modules", "type": "derived types",
    "stop": "stop",
}
_TYPES = {"integer": "int", "real": "float", "double": "float", "doubleprecision": "float"}
_INTRINSICS = {"min", "max", "mod"}


class _Parser:
    def __init__(self, source: str, filename: str):
        self.filename = filename
        self.toks = tokenize(source, filename)
        self.i = 0
        self.arrays: Dict[str, ArrayDecl] = {}
        self.scalars: Dict[str, ScalarDecl] = {}
        self.args: Tuple[str, ...] = ()
        self.scope: List[str] = []  # loop indices in scope, innermost last
        self.written_scalars: set = set()

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def err(self, msg: str, tok: Optional[Token] = None, expected: Optional[str] = None):
        t = tok or self.tok
        where = "end of file" if t.kind == "eof" else repr(t.text or "newline")
        text = f"{msg} (found {where})" if expected is None else f"expected {expected}, found {where}"
        return KernelSyntaxError(text, t.span, filename=self.filename, expected=expected)

    def kw(self, *words: str) -> bool:
        return self.tok.kind == "name" and self.tok.text.lower() in words

    def expect_kw(self, word: str) -> Token:
        if not self.kw(word):
            raise self.err("", expected=f"'{word}'")
        return self.next()

    def accept_op(self, op: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == op:
            self.i += 1
            return True
        return False

    def expect_op(self, op: str) -> Token:
        if self.tok.kind == "op" and self.tok.text == op:
            return self.next()
        raise self.err("", expected=f"'{op}'")

    def expect_name(self) -> Token:
        if self.tok.kind != "name":
            raise self.err("", expected="identifier")
        return self.next()

    def end_stmt(self):
        if self.tok.kind == "eof":
            return
        if self.tok.kind != "nl":
            raise self.err("", expected="end of statement")
        self.skip_nl()

    def skip_nl(self):
        while self.tok.kind == "nl":
            self.i += 1

    def span_from(self, start: Token) -> Span:
        prev = self.toks[max(self.i - 1, 0)]
        return Span(start.line, start.col, prev.line, prev.col + max(len(prev.text), 1) - 1)

    # program structure
    def parse(self) -> KernelAst:
        self.skip_nl()
        while self.tok.kind == "directive":
            self.next()
            self.skip_nl()
        self.unsupported_check()
        start = self.expect_kw("subroutine")
        name = self.expect_name().text
        args: List[str] = []
        self.expect_op("(")
        if not self.accept_op(")"):
            while True:
                args.append(self.expect_name().text)
                if self.accept_op(")"):
                    break
                self.expect_op(",")
        self.args = tuple(args)
        self.end_stmt()
        while self.is_decl():
            self.parse_decl()
        for a in args:
            if a not in self.arrays and a not in self.scalars:
                raise UndeclaredIdentifier(f"argument '{a}' is not declared", start.span, filename=self.filename)
        body = self.parse_block(("end",))
        self.expect_kw("end")
        if self.kw("subroutine"):
            self.next()
            if self.tok.kind == "name":
                self.next()
        self.end_stmt()
        if self.tok.kind != "eof":
            raise self.err("", expected="end of file")
        loops = [s for s in body if isinstance(s, LoopNode)]
        others = [s for s in body if not isinstance(s, LoopNode)]
        if others:
            raise UnsupportedConstruct(
                "statements outside the loop nest are not supported", others[0].span, filename=self.filename
            )
        if len(loops) != 1:
            raise UnsupportedConstruct(
                f"kernel must contain exactly one outermost loop, found {len(loops)}", start.span,
                filename=self.filename,
            )
        for a in self.arrays.values():
            if a.name not in self.args:
                raise UnsupportedConstruct(
                    f"array '{a.name}' must be a subroutine argument", a.span, filename=self.filename
                )
        return KernelAst(
            name, self.args, tuple(self.arrays.values()), tuple(self.scalars.values()), loops[0],
            filename=self.filename,
        )

    def unsupported_check(self):
        if self.tok.kind == "name":
            w = self.tok.text.lower()
            if w in _UNSUPPORTED and not (w == "type" and self.peek().text == "("):
                raise UnsupportedConstruct(
                    f"{_UNSUPPORTED[w]} are not supported", self.tok.span, filename=self.filename
                )

    def is_decl(self) -> bool:
        if self.kw("implicit"):
            while self.tok.kind not in ("nl", "eof"):
                self.next()
            self.skip_nl()
            return self.is_decl()
        return self.tok.kind == "name" and self.tok.text.lower() in _TYPES

    def parse_decl(self):
        start = self.next()
        low = start.text.lower()
        if low == "double":
            self.expect_kw("precision")
        kind = _TYPES[low]
        if self.accept_op("("):  # real(8), real(kind=8)
            while not self.accept_op(")"):
                self.next()
        elif self.accept_op("*"):
            self.next()
        intent = ""
        while self.accept_op(","):  # attributes such as intent(in)
            attr = self.expect_name().text.lower()
            if self.accept_op("("):
                words = []
                depth = 1
                while depth:
                    t = self.next()
                    if t.kind == "eof":
                        raise self.err("", expected="')'")
                    depth += (t.text == "(") - (t.text == ")")
                    if t.kind == "name":
                        words.append(t.text.lower())
                if attr == "intent":
                    intent = "".join(words)
        self.accept_op("::")
        while True:
            nt = self.expect_name()
            name = nt.text
            if name in self.arrays or name in self.scalars:
                raise KernelSyntaxError(f"'{name}' declared twice", nt.span, filename=self.filename)
            if self.accept_op("("):
                extents = []
                while True:
                    a = self.parse_index_expr(allow_params_only=True)
                    if self.accept_op(":"):
                        b = self.parse_index_expr(allow_params_only=True)
                        extents.append((a, b))
                    else:
                        extents.append((Const(1), a))
                    if self.accept_op(")"):
                        break
                    self.expect_op(",")
                self.arrays[name] = ArrayDecl(name, kind, tuple(extents), intent, self.span_from(nt))
            else:
                self.scalars[name] = ScalarDecl(name, kind, nt.span)
            if not self.accept_op(","):
                break
        self.end_stmt()

    def parse_block(self, terminators: Tuple[str, ...]) -> Tuple[Stmt, ...]:
        stmts: List[Stmt] = []
        pending: List[str] = []
        while True:
            self.skip_nl()
            if self.tok.kind == "eof":
                raise self.err("unterminated block", expected=" or ".join(f"'{t}'" for t in terminators))
            if self.tok.kind == "directive":
                pending.append(self.next().text)
                continue
            if self.at_terminator(terminators):
                break
            if self.kw("end", "enddo", "endif", "else", "elseif"):
                raise self.err("", expected=" or ".join(f"'{t}'" for t in terminators))
            if self.kw("do"):
                loop = self.parse_do(tuple(pending))
                pending = []
                stmts.append(loop)
                continue
            if pending:
                self.attach_trailing(stmts, pending)
                pending = []
            stmts.append(self.parse_stmt())
        if pending:
            self.attach_trailing(stmts, pending)
        return tuple(stmts)

    def attach_trailing(self, stmts: List[Stmt], pending: List[str]):
        if stmts and isinstance(stmts[-1], LoopNode):
            last = stmts[-1]
            stmts[-1] = replace(last, trailing=last.trailing + tuple(pending))
        # directives that do not belong to a loop carry no meaning here

    def at_terminator(self, terminators) -> bool:
        if self.tok.kind != "name":
            return False
        w = self.tok.text.lower()
        if w in ("enddo", "endif") and w in terminators:
            return True
        if w == "end":
            return "end" in terminators or any(
                self.peek().kind == "name" and self.peek().text.lower() == t[4:] for t in terminators if t.startswith("end ")
            )
        if w == "else" and "else" in terminators:
            return True
        if w == "elseif" and "else" in terminators:
            return True
        return False

    def parse_do(self, directives: Tuple[str, ...]) -> LoopNode:
        start = self.next()
        if self.kw("while") or self.tok.kind == "int":
            raise UnsupportedConstruct(
                "only counted 'do' loops are supported", self.tok.span, filename=self.filename
            )
        it = self.expect_name()
        index = it.text
        if index in self.arrays or index in self.args:
            raise KernelSyntaxError(f"'{index}' cannot be a loop index", it.span, filename=self.filename)
        if index in self.scope:
            raise KernelSyntaxError(f"loop index '{index}' reused in a nested loop", it.span, filename=self.filename)
        if index in self.scalars and self.scalars[index].kind != "int":
            raise KernelSyntaxError(f"loop index '{index}' must be an integer", it.span, filename=self.filename)
        self.expect_op("=")
        init = self.parse_index_expr()
        self.expect_op(",")
        bound = self.parse_index_expr()
        step = 1
        if self.accept_op(","):
            st = self.tok
            se = self.parse_index_expr()
            lin = linearize(se)
            if lin is None or not lin.is_const() or lin.const.denominator != 1:
                raise UnsupportedConstruct("loop step must be an integer constant", st.span, filename=self.filename)
            step = int(lin.const)
            if step == 0:
                raise KernelSyntaxError("loop step must be nonzero", st.span, filename=self.filename)
        self.end_stmt()
        self.scope.append(index)
        body = self.parse_block(("end do", "enddo"))
        self.scope.pop()
        if self.kw("enddo"):
            self.next()
        else:
            self.expect_kw("end")
            self.expect_kw("do")
        span = self.span_from(start)
        self.end_stmt()
        return LoopNode(index, init, bound, step, body, directives, (), span)

    def parse_stmt(self) -> Stmt:
        self.unsupported_check()
        if self.kw("if"):
            return self.parse_if()
        if self.kw("continue"):
            t = self.next()
            self.end_stmt()
            return IfBlock(((TRUE, ()),), None, t.span)
        return self.parse_assign()

    def parse_if(self) -> IfBlock:
        start = self.next()
        self.expect_op("(")
        c = self.parse_cond()
        self.expect_op(")")
        if not self.kw("then"):
            # one-line logical if
            stmt = self.parse_assign()
            return IfBlock(((c, (stmt,)),), None, self.span_from(start))
        self.next()
        self.end_stmt()
        arms = [(c, self.parse_block(("else", "end if", "endif")))]
        orelse = None
        while True:
            if self.kw("elseif") or (self.kw("else") and self.peek().kind == "name" and self.peek().text.lower() == "if"):
                if self.kw("else"):
                    self.next()
                self.next()
                self.expect_op("(")
                c = self.parse_cond()
                self.expect_op(")")
                self.expect_kw("then")
                self.end_stmt()
                arms.append((c, self.parse_block(("else", "end if", "endif"))))
                continue
            if self.kw("else"):
                self.next()
                self.end_stmt()
                orelse = self.parse_block(("end if", "endif"))
            break
        if self.kw("endif"):
            self.next()
        else:
            self.expect_kw("end")
            self.expect_kw("if")
        span = self.span_from(start)
        self.end_stmt()
        return IfBlock(tuple(arms), orelse, span)

    def parse_assign(self) -> Assign:
        self.unsupported_check()
        start = self.expect_name()
        name = start.text
        if name in self.arrays:
            decl = self.arrays[name]
            self.expect_op("(")
            index = self.parse_subscripts(name, start)
            if len(index) != decl.rank:
                raise KernelSyntaxError(
                    f"'{name}' has rank {decl.rank} but {len(index)} subscripts were given",
                    start.span, filename=self.filename,
                )
            target_index: Optional[Tuple[ElemExp, ...]] = index
        elif name in self.scalars:
            if name in self.args:
                raise UnsupportedConstruct(
                    f"assignment to scalar argument '{name}' is not supported", start.span, filename=self.filename
                )
            if name in self.scope:
                raise UnsupportedConstruct(
                    f"assignment to loop index '{name}' is not supported", start.span, filename=self.filename
                )
            target_index = None
        elif self.tok.kind == "op" and self.tok.text == "(":
            raise UndeclaredIdentifier(f"undeclared array '{name}'", start.span, filename=self.filename)
        else:
            raise UndeclaredIdentifier(f"undeclared variable '{name}'", start.span, filename=self.filename)
        self.expect_op("=")
        value = self.parse_expr()
        span = self.span_from(start)
        self.end_stmt()
        if target_index is None:
            self.written_scalars.add(name)
        return Assign(name, target_index, value, span)

    def parse_subscripts(self, name: str, at: Token) -> Tuple[ElemExp, ...]:
        out = []
        while True:
            st = self.tok
            e = self.parse_expr()
            self.check_affine(e, st, f"subscript of '{name}'")
            out.append(e)
            if self.accept_op(")"):
                return tuple(out)
            self.expect_op(",")

    def check_affine(self, e: ElemExp, at: Token, what: str):
        lin = linearize(e)
        bad = lin is None or any(not isinstance(a, Var) for a, _ in lin.terms)
        if not bad:
            temps = [a.name for a, _ in lin.terms if a.name not in self.scope and a.name not in self.args]
            bad = bool(temps)
        if bad:
            raise NonAffineSubscript(
                f"{what} must be affine in loop indices and integer parameters: {render(e)}",
                at.span, filename=self.filename,
            )

    # expressions
    def parse_index_expr(self, allow_params_only: bool = False) -> ElemExp:
        st = self.tok
        e = self.parse_expr()
        lin = linearize(e)
        names = exp_vars(e)
        ok_names = set(self.args) | (set() if allow_params_only else set(self.scope))
        if lin is None or exp_arrays(e) or not names <= ok_names:
            raise UnsupportedConstruct(
                f"bound expression must use only integer parameters and enclosing loop indices: {render(e)}",
                st.span, filename=self.filename,
            )
        return e

    def parse_cond(self) -> Cond:
        c = self.parse_and()
        while self.accept_op(".or."):
            c = disj(c, self.parse_and())
        return c

    def parse_and(self) -> Cond:
        c = self.parse_not()
        while self.accept_op(".and."):
            c = conj(c, self.parse_not())
        return c

    def parse_not(self) -> Cond:
        if self.accept_op(".not."):
            return negate(self.parse_not())
        return self.parse_rel()

    def parse_rel(self) -> Cond:
        if self.tok.kind == "bool":
            return TRUE if self.next().text == ".true." else FALSE
        if self.tok.kind == "op" and self.tok.text == "(":
            # parenthesized condition or arithmetic; try a condition first
            save = self.i
            self.next()
            try:
                c = self.parse_cond()
                if self.accept_op(")") and not self.is_relop():
                    return c
            except KernelSyntaxError:
                pass
            self.i = save
        lhs = self.parse_expr()
        if not self.is_relop():
            raise self.err("", expected="comparison operator")
        op = self.next().text
        op = "!=" if op == "/=" else op
        rhs = self.parse_expr()
        return Cmp(op, lhs, rhs)

    def is_relop(self) -> bool:
        return self.tok.kind == "op" and self.tok.text in ("==", "/=", "!=", "<", "<=", ">", ">=")

    def parse_expr(self) -> ElemExp:
        e = self.parse_term()
        while self.tok.kind == "op" and self.tok.text in "+-" and self.tok.text:
            op = self.next().text
            e = Op(op, (e, self.parse_term()))
        return e

    def parse_term(self) -> ElemExp:
        e = self.parse_unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.next().text
            e = Op(op, (e, self.parse_unary()))
        return e

    def parse_unary(self) -> ElemExp:
        if self.accept_op("-"):
            x = self.parse_unary()
            if isinstance(x, Const):
                return Const(-x.value, x.kind)
            return Op("neg", (x,))
        if self.accept_op("+"):
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self) -> ElemExp:
        base = self.parse_atom()
        if self.tok.kind == "op" and self.tok.text == "**":
            t = self.next()
            ex = self.parse_unary()
            if not (isinstance(ex, Const) and ex.kind == "int" and 1 <= ex.value <= 4):
                raise UnsupportedConstruct(
                    "only small constant integer powers are supported", t.span, filename=self.filename
                )
            out = base
            for _ in range(int(ex.value) - 1):
                out = Op("*", (out, base))
            return out
        return base

    def parse_atom(self) -> ElemExp:
        t = self.tok
        if t.kind == "int":
            self.next()
            return Const(int(t.text), "int")
        if t.kind == "real":
            self.next()
            return Const(Fraction(t.text.lower().replace("d", "e")), "float")
        if t.kind == "op" and t.text == "(":
            self.next()
            e = self.parse_expr()
            self.expect_op(")")
            return e
        if t.kind != "name":
            raise self.err("", expected="expression")
        self.next()
        name = t.text
        if self.tok.kind == "op" and self.tok.text == "(":
            if name in self.arrays:
                self.next()
                decl = self.arrays[name]
                index = self.parse_subscripts(name, t)
                if len(index) != decl.rank:
                    raise KernelSyntaxError(
                        f"'{name}' has rank {decl.rank} but {len(index)} subscripts were given",
                        t.span, filename=self.filename,
                    )
                return Get(name, index, decl.kind)
            low = name.lower()
            if low in _INTRINSICS and name not in self.scalars:
                self.next()
                args = [self.parse_expr()]
                while self.accept_op(","):
                    args.append(self.parse_expr())
                self.expect_op(")")
                if low == "mod":
                    if len(args) != 2:
                        raise KernelSyntaxError("mod takes two arguments", t.span, filename=self.filename)
                    return Op("mod", tuple(args))
                out = args[0]
                for a in args[1:]:
                    out = Op(low, (out, a))
                if any(linearize(a) is None for a in args):
                    raise UnsupportedConstruct(
                        f"'{low}' is only supported on index expressions", t.span, filename=self.filename
                    )
                return out
            if name in self.scalars:
                raise KernelSyntaxError(f"'{name}' is not an array", t.span, filename=self.filename)
            if low in ("sqrt", "abs", "exp", "sin", "cos", "real", "dble", "int", "float", "sum", "size"):
                raise UnsupportedConstruct(f"intrinsic '{low}' is not supported", t.span, filename=self.filename)
            raise UndeclaredIdentifier(f"undeclared array '{name}'", t.span, filename=self.filename)
        if name in self.scope:
            return Var(name, INDEX)
        if name in self.arrays:
            raise UnsupportedConstruct(
                f"whole-array expression '{name}' is not supported", t.span, filename=self.filename
            )
        if name in self.scalars:
            s = self.scalars[name]
            if name in self.args:
                return Var(name, INDEX if s.kind == "int" else NUM)
            return Var(name, INDEX if s.kind == "int" else NUM)
        raise UndeclaredIdentifier(f"undeclared identifier '{name}'", t.span, filename=self.filename)


def parse_kernel(source: str, filename: str = "<string>") -> KernelAst:
    """Parse kernel source into a :class:`KernelAst`."""
    return _Parser(source, filename).parse()


def parse_file(path) -> KernelAst:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise KernelSyntaxError(f"file is not valid UTF-8: {exc.reason}", Span(1, 1, 1, 1), filename=str(p))
    return parse_kernel(text, str(p))


# ---------------------------------------------------------- directives


def strip_directives(ast: KernelAst) -> KernelAst:
    return replace(ast, loop=_strip_loop(ast.loop))


def _strip_loop(loop: LoopNode) -> LoopNode:
    return replace(loop, directives=(), trailing=(), body=_strip_body(loop.body))


def _strip_body(body):
    out = []
    for s in body:
        if isinstance(s, LoopNode):
            out.append(_strip_loop(s))
        elif isinstance(s, IfBlock):
            out.append(replace(
                s, arms=tuple((c, _strip_body(b)) for c, b in s.arms),
                orelse=None if s.orelse is None else _strip_body(s.orelse),
            ))
        else:
            out.append(s)
    return tuple(out)


def has_directives(ast: KernelAst) -> bool:
    return any(isinstance(s, LoopNode) and (s.directives or s.trailing) for s in walk([ast.loop]))


# ---------------------------------------------------------------- printer


def _expr(e: ElemExp) -> str:
    return render(e)


def _cond(c: Cond, prec: int = 0) -> str:
    if isinstance(c, BoolConst):
        return ".true." if c.value else ".false."
    if isinstance(c, Cmp):
        return f"{_expr(c.lhs)} {'/=' if c.op == '!=' else c.op} {_expr(c.rhs)}"
    if isinstance(c, Not):
        return f".not. {_cond(c.arg, 3)}"
    if isinstance(c, And):
        text = " .and. ".join(_cond(a, 2) for a in c.args)
        return f"({text})" if prec > 2 else text
    if isinstance(c, Or):
        text = " .or. ".join(_cond(a, 1) for a in c.args)
        return f"({text})" if prec > 1 else text
    raise UnsupportedConstruct(f"cannot print condition {render_cond(c)}")


def format_kernel(ast: KernelAst) -> str:
    """Canonical source text; re-parsing it yields an equal AST."""
    lines = [f"subroutine {ast.name}({', '.join(ast.args)})"]
    for s in ast.scalars:
        lines.append(f"  {'integer' if s.kind == 'int' else 'real'} :: {s.name}")
    for a in ast.arrays:
        ext = ", ".join(f"{_expr(lo)}:{_expr(hi)}" for lo, hi in a.extents)
        attr = f", intent({a.intent})" if a.intent else ""
        lines.append(f"  {'integer' if a.kind == 'int' else 'real'}{attr} :: {a.name}({ext})")
    _fmt_stmt(ast.loop, 1, lines)
    lines.append(f"end subroutine {ast.name}")
    return "\n".join(lines) + "\n"


def _fmt_body(body, depth, lines):
    for s in body:
        _fmt_stmt(s, depth, lines)


def _fmt_stmt(s: Stmt, depth: int, lines: List[str]):
    pad = "  " * depth
    if isinstance(s, LoopNode):
        for d in s.directives:
            lines.append(d)
        step = "" if s.step == 1 else f", {s.step}"
        lines.append(f"{pad}do {s.index} = {_expr(s.init)}, {_expr(s.bound)}{step}")
        _fmt_body(s.body, depth + 1, lines)
        lines.append(f"{pad}end do")
        for d in s.trailing:
            lines.append(d)
    elif isinstance(s, IfBlock):
        if s.arms == ((TRUE, ()),) and s.orelse is None:
            lines.append(f"{pad}continue")
            return
        for k, (c, body) in enumerate(s.arms):
            kw = "if" if k == 0 else "else if"
            lines.append(f"{pad}{kw} ({_cond(c)}) then")
            _fmt_body(body, depth + 1, lines)
        if s.orelse is not None:
            lines.append(f"{pad}else")
            _fmt_body(s.orelse, depth + 1, lines)
        lines.append(f"{pad}end if")
    else:
        tgt = s.target if s.index is None else f"{s.target}({', '.join(_expr(i) for i in s.index)})"
        lines.append(f"{pad}{tgt} = {_expr(s.value)}")


# ------------------------------------------------------------ regularity

BOUNDARY_DISTANCE = 4


@dataclass(frozen=True)
class LevelRegularity:
    level: int
    atypical: int  # r_k: boundary-case arms
    deviating: int  # mu_k: statements only executed on atypical iterations
    common: int  # chi_k: statements on the common path
    verdict: str  # regular | irregular
    deviating_spans: Tuple[Span, ...] = ()
    breaking_spans: Tuple[Span, ...] = ()
    reasons: Tuple[str, ...] = ()


@dataclass(frozen=True)
class RegularityReport:
    """Static approximation of loop regularity.

    A branch arm is a boundary case when the loop-index region it guards lies
    within ``BOUNDARY_DISTANCE`` iterations of some enclosing loop's first or
    last iteration. A level is regular when none of its branch conditions
    depend on data and each if-chain has at most one arm that runs on
    interior iterations."""

    levels: Tuple[LevelRegularity, ...]

    @property
    def regular(self) -> bool:
        return all(l.verdict == "regular" for l in self.levels)

    def level(self, k: int) -> LevelRegularity:
        for l in self.levels:
            if l.level == k:
                return l
        raise KeyError(k)


def analyze_regularity(ast: KernelAst) -> RegularityReport:
    acc: Dict[int, dict] = {}
    _reg_loop(ast, ast.loop, [], acc)
    levels = []
    for k in sorted(acc):
        a = acc[k]
        verdict = "irregular" if a["breaking"] else "regular"
        levels.append(LevelRegularity(
            k, a["r"], a["mu"], a["chi"], verdict, tuple(a["dev"]), tuple(a["breaking"]), tuple(a["why"]),
        ))
    return RegularityReport(tuple(levels))


def _range(loop: LoopNode) -> Tuple[Cond, Cond]:
    """(full range, interior range) of a loop index."""
    i = Var(loop.index, INDEX)
    lo, hi = (loop.init, loop.bound) if loop.step > 0 else (loop.bound, loop.init)
    d = BOUNDARY_DISTANCE * abs(loop.step)
    full = conj(Cmp("<=", lo, i), Cmp("<=", i, hi))
    inner = conj(Cmp("<=", Op("+", (lo, Const(d))), i), Cmp("<=", i, Op("-", (hi, Const(d)))))
    return full, inner


def _reg_loop(ast: KernelAst, loop: LoopNode, enclosing: List[LoopNode], acc):
    k = loop.level
    a = acc.setdefault(k, {"r": 0, "mu": 0, "chi": 0, "dev": [], "breaking": [], "why": []})
    chain = enclosing + [loop]
    full = conj(*(_range(l)[0] for l in chain))
    inner = conj(*(_range(l)[1] for l in chain))
    data_names = {s.name for s in ast.scalars if s.kind == "float" or s.name in {t.name for t in ast.temps}}
    _reg_body(loop.body, full, inner, data_names, a, ast, chain, False, acc)


def _count(body) -> int:
    return sum(1 for s in body if isinstance(s, (Assign, LoopNode))) + sum(
        _count(b) for s in body if isinstance(s, IfBlock) for _, b in list(s.arms) + [(None, s.orelse or ())]
    )


def _reg_body(body, path: Cond, inner: Cond, data_names, a, ast, chain, atypical: bool, table):
    for s in body:
        if isinstance(s, Assign):
            if atypical:
                a["mu"] += 1
                if s.span:
                    a["dev"].append(s.span)
            else:
                a["chi"] += 1
        elif isinstance(s, LoopNode):
            _reg_loop(ast, s, chain, table)
            if atypical:
                a["mu"] += 1
            else:
                a["chi"] += 1
        elif isinstance(s, IfBlock):
            data_dep = False
            for c, _ in s.arms:
                if _data_dependent(c, data_names):
                    data_dep = True
            if data_dep:
                a["breaking"].append(s.span)
                a["why"].append("branch condition depends on array values or floating-point scalars")
                _reg_plain(s, a, atypical)
                continue
            taken = FALSE
            common_arms = 0
            arms = list(s.arms) + [(None, s.orelse or ())]
            for c, b in arms:
                guard = conj(negate(taken), c) if c is not None else negate(taken)
                if c is not None:
                    taken = disj(taken, c)
                region = conj(path, guard)
                if is_unsat(region):
                    continue
                boundary = is_unsat(conj(region, inner))
                if c is None and not b and boundary:
                    continue
                if boundary:
                    if not atypical:
                        a["r"] += 1
                else:
                    common_arms += 1
                _reg_body(b, region, inner, data_names, a, ast, chain, atypical or boundary, table)
            if common_arms > 1:
                a["breaking"].append(s.span)
                a["why"].append("several branch arms run on interior iterations")


def _reg_plain(s: IfBlock, a, atypical: bool):
    for _, b in list(s.arms) + [(None, s.orelse or ())]:
        n = _count(b)
        if atypical:
            a["mu"] += n
        else:
            a["chi"] += n


def _data_dependent(c: Cond, data_names) -> bool:
    for atom in cond_atoms(c):
        if not isinstance(atom, Cmp):
            return True
        for side in (atom.lhs, atom.rhs):
            if exp_arrays(side) or linearize(side) is None:
                return True
            if exp_vars(side) & data_names:
                return True
    return False
