"""Reader and writer for the line-oriented knowledge-base format.

Example::

    # declarations
    dim 9.
    pred Sim/2.
    func concat/2.
    const o1, o2, o3.
    ground o1 = [1, 0, 1, 1, 0, 1, 1, 1, 0].
    ground concat = builtin(sum).

    # weighted formulas; the interval defaults to [1,1]
    S(a).
    [0.7, 1.0] forall x: S(x) -> C(x).

Connectives, loosest first: ``->`` (right associative), ``|``, ``&``, ``~``.
A quantifier body extends as far to the right as possible.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .logic import (
    And,
    Apply,
    Atom,
    Const,
    Exists,
    Forall,
    Formula,
    Implies,
    LogicError,
    Not,
    Or,
    Signature,
    Term,
    Var,
    check_formula,
)

HEADER = "# ltn knowledge base"

KEYWORDS = {"pred", "func", "const", "ground", "builtin", "forall", "exists", "dim"}


class ParseError(ValueError):
    """Syntax or well-formedness error with a 1-based source position."""

    def __init__(self, message: str, line: int, column: int, source: str | None = None):
        self.message = message
        self.line = line
        self.column = column
        self.source = source
        super().__init__(f"{line}:{column}: {message}")

    def diagnostic(self) -> str:
        """Message plus the offending line with a caret under the error column."""
        out = f"error at line {self.line}, column {self.column}: {self.message}"
        if self.source is not None:
            lines = self.source.splitlines()
            if 0 < self.line <= len(lines):
                text = lines[self.line - 1]
                out += f"\n  {text}\n  {' ' * (self.column - 1)}^"
        return out


@dataclass(frozen=True)
class Grounding:
    """A user-supplied grounding: either literal vector values or a builtin name."""

    vector: tuple[float, ...] | None = None
    builtin: str | None = None

    def __post_init__(self):
        if (self.vector is None) == (self.builtin is None):
            raise ValueError("a grounding is either a vector or a builtin")
        if self.vector is not None:
            object.__setattr__(self, "vector", tuple(float(x) for x in self.vector))


@dataclass(frozen=True)
class Entry:
    formula: Formula
    interval: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        v, w = (float(x) for x in self.interval)
        object.__setattr__(self, "interval", (v, w))


@dataclass
class KbDocument:
    signature: Signature = field(default_factory=Signature)
    groundings: dict[str, Grounding] = field(default_factory=dict)
    entries: list[Entry] = field(default_factory=list)
    dim: int | None = None

    def merge(self, other: KbDocument) -> KbDocument:
        """Union of two documents (used to compose experiments from several files)."""
        try:
            signature = self.signature.union(other.signature)
        except LogicError as exc:
            raise ValueError(str(exc)) from None
        if self.dim is not None and other.dim is not None and self.dim != other.dim:
            raise ValueError(f"conflicting dim declarations {self.dim} and {other.dim}")
        groundings = dict(self.groundings)
        for sym, g in other.groundings.items():
            if groundings.setdefault(sym, g) != g:
                raise ValueError(f"conflicting groundings for {sym!r}")
        return KbDocument(signature, groundings, self.entries + other.entries,
                          self.dim if self.dim is not None else other.dim)


# ---------------------------------------------------------------------------
# lexer

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<number>[-+]?(?:\d+\.\d+|\.\d+|\d+)(?:[eE][-+]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>->|[~&|().,:/=\[\]])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1, text)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        for i in range(pos, m.end()):
            if text[i] == "\n":
                line, line_start = line + 1, i + 1
        pos = m.end()
    if tokens:
        # report end-of-input right after the last token, where the caret is visible
        last = tokens[-1]
        tokens.append(Token("eof", "", last.line, last.column + len(last.text)))
    else:
        tokens.append(Token("eof", "", 1, 1))
    return tokens


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, text: str, signature: Signature | None = None, allow_free: bool = False):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0
        self.signature = signature or Signature()
        self.allow_free = allow_free

    # token helpers
    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.column, self.text)

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "name") and self.tok.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.advance()

    def advance(self) -> Token:
        tok = self.tok
        self.i += 1
        return tok

    def name(self) -> Token:
        if self.tok.kind != "name" or self.tok.text in KEYWORDS:
            raise self.error(f"expected a name, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def number(self) -> float:
        if self.tok.kind != "number":
            raise self.error(f"expected a number, found {self.tok.text or 'end of input'!r}")
        return float(self.advance().text)

    def integer(self) -> int:
        tok = self.tok
        if tok.kind != "number" or not tok.text.isdigit():
            raise self.error(f"expected an integer, found {tok.text or 'end of input'!r}")
        return int(self.advance().text)

    # document
    def document(self) -> KbDocument:
        doc = KbDocument(signature=self.signature)
        while self.tok.kind != "eof":
            self.statement(doc)
        doc.signature = self.signature
        return doc

    def declare(self, tok: Token, kind: str, arity: int = 0) -> None:
        if tok.text in self.signature:
            raise self.error(f"symbol {tok.text!r} is already declared", tok)
        if kind == "const":
            self.signature = self.signature.with_constant(tok.text)
        elif kind == "func":
            self.signature = self.signature.with_function(tok.text, arity)
        else:
            self.signature = Signature(self.signature.constants, self.signature.functions,
                                       {**self.signature.predicates, tok.text: arity})

    def statement(self, doc: KbDocument) -> None:
        if self.at("pred") or self.at("func"):
            kind = self.advance().text
            tok = self.name()
            self.expect("/")
            arity_tok = self.tok
            arity = self.integer()
            if arity < 1:
                raise self.error("arity must be at least 1", arity_tok)
            self.declare(tok, kind, arity)
            self.expect(".")
        elif self.at("const"):
            self.advance()
            self.declare(self.name(), "const")
            while self.at(","):
                self.advance()
                self.declare(self.name(), "const")
            self.expect(".")
        elif self.at("dim"):
            self.advance()
            tok = self.tok
            n = self.integer()
            if n < 1:
                raise self.error("dim must be at least 1", tok)
            if doc.dim is not None and doc.dim != n:
                raise self.error(f"conflicting dim {n} (already {doc.dim})", tok)
            doc.dim = n
            self.expect(".")
        elif self.at("ground"):
            self.advance()
            tok = self.name()
            if tok.text not in self.signature:
                raise self.error(f"undeclared symbol {tok.text!r}", tok)
            if tok.text in doc.groundings:
                raise self.error(f"symbol {tok.text!r} is already grounded", tok)
            self.expect("=")
            if self.at("builtin"):
                self.advance()
                self.expect("(")
                builtin = self.name().text
                self.expect(")")
                doc.groundings[tok.text] = Grounding(builtin=builtin)
            else:
                self.expect("[")
                values = [self.number()]
                while self.at(","):
                    self.advance()
                    values.append(self.number())
                self.expect("]")
                doc.groundings[tok.text] = Grounding(vector=tuple(values))
            self.expect(".")
        else:
            start = self.tok
            interval = (1.0, 1.0)
            if self.at("["):
                self.advance()
                v_tok = self.tok
                v = self.number()
                self.expect(",")
                w = self.number()
                self.expect("]")
                if not (0.0 <= v <= w <= 1.0):
                    raise self.error(f"interval [{v}, {w}] must satisfy 0 <= v <= w <= 1", v_tok)
                interval = (v, w)
            formula = self.formula(frozenset())
            self.expect(".")
            try:
                check_formula(formula, self.signature)
            except LogicError as exc:
                raise self.error(str(exc), start) from None
            doc.entries.append(Entry(formula, interval))

    # formulas
    def formula(self, scope: frozenset[str]) -> Formula:
        left = self.disjunction(scope)
        if self.at("->"):
            self.advance()
            return Implies(left, self.formula(scope))
        return left

    def disjunction(self, scope):
        left = self.conjunction(scope)
        while self.at("|"):
            self.advance()
            left = Or(left, self.conjunction(scope))
        return left

    def conjunction(self, scope):
        left = self.unary(scope)
        while self.at("&"):
            self.advance()
            left = And(left, self.unary(scope))
        return left

    def unary(self, scope):
        if self.at("~"):
            self.advance()
            return Not(self.unary(scope))
        if self.at("forall") or self.at("exists"):
            kind = Forall if self.advance().text == "forall" else Exists
            names = []
            while self.tok.kind == "name" and not self.at(":"):
                tok = self.name()
                if tok.text in self.signature:
                    raise self.error(f"variable {tok.text!r} clashes with a declared symbol", tok)
                names.append(tok.text)
            if not names:
                raise self.error("quantifier needs at least one variable")
            self.expect(":")
            return kind(tuple(names), self.formula(scope | set(names)))
        if self.at("("):
            self.advance()
            f = self.formula(scope)
            self.expect(")")
            return f
        tok = self.name()
        arity = self.signature.predicates.get(tok.text)
        if arity is None:
            raise self.error(f"undeclared predicate {tok.text!r}", tok)
        args = self.arguments(scope)
        if len(args) != arity:
            raise self.error(f"{tok.text} expects {arity} arguments, got {len(args)}", tok)
        return Atom(tok.text, tuple(args))

    def arguments(self, scope) -> list[Term]:
        self.expect("(")
        args = [self.term(scope)]
        while self.at(","):
            self.advance()
            args.append(self.term(scope))
        self.expect(")")
        return args

    def term(self, scope) -> Term:
        tok = self.name()
        if self.at("("):
            arity = self.signature.functions.get(tok.text)
            if arity is None:
                raise self.error(f"undeclared function {tok.text!r}", tok)
            args = self.arguments(scope)
            if len(args) != arity:
                raise self.error(f"{tok.text} expects {arity} arguments, got {len(args)}", tok)
            return Apply(tok.text, tuple(args))
        if tok.text in scope:
            return Var(tok.text)
        if tok.text in self.signature.constants:
            return Const(tok.text)
        if tok.text in self.signature:
            raise self.error(f"{tok.text!r} is not a constant", tok)
        if self.allow_free:
            return Var(tok.text)
        raise self.error(f"undeclared symbol {tok.text!r}", tok)


def parse_kb(text: str) -> KbDocument:
    """Parse a knowledge-base document; raises ``ParseError`` with a position."""
    return _Parser(text).document()


def parse_formula(text: str, signature: Signature, allow_free: bool = True) -> Formula:
    """Parse a single formula (optional trailing ``.``) against ``signature``.

    Undeclared lowercase names become free variables when ``allow_free`` is set.
    """
    p = _Parser(text, signature, allow_free=allow_free)
    start = p.tok
    f = p.formula(frozenset())
    if p.at("."):
        p.advance()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p.tok.text!r} after formula")
    try:
        check_formula(f, signature)
    except LogicError as exc:
        raise p.error(str(exc), start) from None
    return f


# ---------------------------------------------------------------------------
# writer


def format_term(t: Term) -> str:
    if isinstance(t, Apply):
        return f"{t.function}({', '.join(format_term(a) for a in t.args)})"
    return t.name


def format_formula(f: Formula) -> str:
    if isinstance(f, Atom):
        return f"{f.predicate}({', '.join(format_term(a) for a in f.args)})"
    if isinstance(f, Not):
        return "~" + _wrapped(f.body)
    if isinstance(f, (Forall, Exists)):
        kw = "forall" if isinstance(f, Forall) else "exists"
        return f"{kw} {' '.join(f.variables)}: {format_formula(f.body)}"
    op = {And: "&", Or: "|", Implies: "->"}[type(f)]
    return f"{_wrapped(f.left)} {op} {_wrapped(f.right)}"


def _wrapped(f: Formula) -> str:
    if isinstance(f, (Atom, Not)):
        return format_formula(f)
    return f"({format_formula(f)})"


def _num(x: float) -> str:
    return repr(float(x))


def serialize_kb(doc: KbDocument) -> str:
    lines = [HEADER]
    sig = doc.signature
    if doc.dim is not None:
        lines.append(f"dim {doc.dim}.")
    for name, arity in sig.predicates.items():
        lines.append(f"pred {name}/{arity}.")
    for name, arity in sig.functions.items():
        lines.append(f"func {name}/{arity}.")
    if sig.constants:
        lines.append(f"const {', '.join(sig.constants)}.")
    for sym, g in doc.groundings.items():
        if g.builtin is not None:
            lines.append(f"ground {sym} = builtin({g.builtin}).")
        else:
            lines.append(f"ground {sym} = [{', '.join(_num(x) for x in g.vector)}].")
    for e in doc.entries:
        prefix = "" if e.interval == (1.0, 1.0) else f"[{_num(e.interval[0])}, {_num(e.interval[1])}] "
        lines.append(f"{prefix}{format_formula(e.formula)}.")
    return "\n".join(lines) + "\n"
