"""Symbolic layer: signatures, terms, clauses and clausal normalization.

Formulas are immutable trees.  ``normalize`` turns an arbitrary first-order
formula into a list of clauses (disjunctions of literals whose variables are
implicitly universally closed), introducing Skolem functions for
existentials.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence, Union


class LogicError(ValueError):
    """Raised for ill-formed formulas, signatures or substitutions."""


# ---------------------------------------------------------------------------
# signature


@dataclass(frozen=True)
class Signature:
    """Constants, function symbols and predicate symbols with arities.

    Insertion order is meaningful: it fixes the order in which closed terms
    are enumerated and parameters are initialized.
    """

    constants: tuple[str, ...] = ()
    functions: Mapping[str, int] = field(default_factory=dict)
    predicates: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "constants", tuple(self.constants))
        object.__setattr__(self, "functions", dict(self.functions))
        object.__setattr__(self, "predicates", dict(self.predicates))
        seen = set()
        for name in itertools.chain(self.constants, self.functions, self.predicates):
            if name in seen:
                raise LogicError(f"symbol {name!r} declared more than once")
            seen.add(name)
        for kind, table in (("function", self.functions), ("predicate", self.predicates)):
            for name, arity in table.items():
                if not isinstance(arity, int) or arity < 1:
                    raise LogicError(f"{kind} {name!r} must have arity >= 1, got {arity!r}")

    def __hash__(self):
        return hash((self.constants, tuple(self.functions.items()), tuple(self.predicates.items())))

    def __contains__(self, name: str) -> bool:
        return name in self.functions or name in self.predicates or name in self.constants

    def symbols(self) -> set[str]:
        return set(self.constants) | set(self.functions) | set(self.predicates)

    def with_constant(self, name: str) -> Signature:
        return Signature(self.constants + (name,), self.functions, self.predicates)

    def with_function(self, name: str, arity: int) -> Signature:
        return Signature(self.constants, {**self.functions, name: arity}, self.predicates)

    def union(self, other: Signature) -> Signature:
        """Merge two signatures; shared symbols must agree on kind and arity."""
        constants = list(self.constants)
        constants += [c for c in other.constants if c not in self.constants]
        functions = dict(self.functions)
        predicates = dict(self.predicates)
        for table, theirs, kind in ((functions, other.functions, "function"),
                                    (predicates, other.predicates, "predicate")):
            for name, arity in theirs.items():
                if table.setdefault(name, arity) != arity:
                    raise LogicError(f"{kind} {name!r} declared with arities {table[name]} and {arity}")
        return Signature(tuple(constants), functions, predicates)


# ---------------------------------------------------------------------------
# terms


@dataclass(frozen=True)
class Const:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Apply:
    function: str
    args: tuple[Term, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))

    def __str__(self):
        return f"{self.function}({', '.join(map(str, self.args))})"


Term = Union[Const, Var, Apply]


def term_variables(term: Term) -> Iterator[str]:
    if isinstance(term, Var):
        yield term.name
    elif isinstance(term, Apply):
        for arg in term.args:
            yield from term_variables(arg)


def is_closed(term: Term) -> bool:
    return next(term_variables(term), None) is None


def term_depth(term: Term) -> int:
    """Function-nesting depth: constants and variables have depth 0."""
    if isinstance(term, Apply):
        return 1 + max(term_depth(a) for a in term.args)
    return 0


def substitute_term(term: Term, substitution: Mapping[str, Term]) -> Term:
    if isinstance(term, Var):
        return substitution.get(term.name, term)
    if isinstance(term, Apply):
        return Apply(term.function, tuple(substitute_term(a, substitution) for a in term.args))
    return term


# ---------------------------------------------------------------------------
# formulas


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: tuple[Term, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True)
class Not:
    body: Formula


@dataclass(frozen=True)
class And:
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or:
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies:
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Forall:
    variables: tuple[str, ...]
    body: Formula

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))


@dataclass(frozen=True)
class Exists:
    variables: tuple[str, ...]
    body: Formula

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))


Formula = Union[Atom, Not, And, Or, Implies, Forall, Exists]


def formula_free_variables(formula: Formula) -> list[str]:
    """Free variables in first-occurrence order."""
    out: list[str] = []

    def visit(f, bound):
        if isinstance(f, Atom):
            for arg in f.args:
                for v in term_variables(arg):
                    if v not in bound and v not in out:
                        out.append(v)
        elif isinstance(f, Not):
            visit(f.body, bound)
        elif isinstance(f, (And, Or, Implies)):
            visit(f.left, bound)
            visit(f.right, bound)
        else:
            visit(f.body, bound | set(f.variables))

    visit(formula, frozenset())
    return out


# ---------------------------------------------------------------------------
# clauses


@dataclass(frozen=True)
class Literal:
    predicate: str
    args: tuple[Term, ...]
    positive: bool = True

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))

    def negate(self) -> Literal:
        return Literal(self.predicate, self.args, not self.positive)

    def __str__(self):
        atom = f"{self.predicate}({', '.join(map(str, self.args))})"
        return atom if self.positive else "~" + atom


@dataclass(frozen=True)
class Clause:
    """A disjunction of literals, universally closed over ``free_vars``."""

    literals: tuple[Literal, ...]
    free_vars: tuple[str, ...] = None

    def __post_init__(self):
        literals = tuple(self.literals)
        if not literals:
            raise LogicError("a clause needs at least one literal")
        object.__setattr__(self, "literals", literals)
        actual = _literal_variables(literals)
        if self.free_vars is None:
            object.__setattr__(self, "free_vars", actual)
        elif tuple(self.free_vars) != actual:
            raise LogicError(f"free_vars {tuple(self.free_vars)} do not match clause variables {actual}")
        else:
            object.__setattr__(self, "free_vars", tuple(self.free_vars))

    @property
    def is_ground(self) -> bool:
        return not self.free_vars

    def __str__(self):
        return " | ".join(map(str, self.literals))


def _literal_variables(literals: Iterable[Literal]) -> tuple[str, ...]:
    out: dict[str, None] = {}
    for lit in literals:
        for arg in lit.args:
            for v in term_variables(arg):
                out.setdefault(v)
    return tuple(out)


def free_variables(clause: Clause) -> tuple[str, ...]:
    return _literal_variables(clause.literals)


def clause_to_formula(clause: Clause) -> Formula:
    """The clause as a left-nested disjunction (variables stay free)."""
    parts = [Atom(l.predicate, l.args) if l.positive else Not(Atom(l.predicate, l.args))
             for l in clause.literals]
    out = parts[0]
    for p in parts[1:]:
        out = Or(out, p)
    return out


def instantiate(clause: Clause, substitution: Mapping[str, Term]) -> Clause:
    for v in clause.free_vars:
        if v not in substitution:
            raise LogicError(f"no binding for variable {v!r}")
    for v in clause.free_vars:
        if not is_closed(substitution[v]):
            raise LogicError(f"binding for {v!r} is not a closed term: {substitution[v]}")
    literals = tuple(Literal(l.predicate, tuple(substitute_term(a, substitution) for a in l.args), l.positive)
                     for l in clause.literals)
    return Clause(literals)


def closed_terms(signature: Signature, depth: int) -> list[Term]:
    """All closed terms of nesting depth <= ``depth``.

    Ordered by depth first, then by symbol order in the signature, then
    lexicographically over argument tuples.
    """
    if depth < 0:
        raise LogicError("depth must be >= 0")
    if not signature.constants:
        raise LogicError("signature has no constants: the closed-term universe is empty")
    terms: list[Term] = [Const(c) for c in signature.constants]
    for level in range(1, depth + 1):
        new = []
        for fn, arity in signature.functions.items():
            for args in itertools.product(terms, repeat=arity):
                if max(term_depth(a) for a in args) == level - 1:
                    new.append(Apply(fn, args))
        terms += new
    return terms


def enumerate_instantiations(clause: Clause, signature: Signature, depth: int = 0) -> list[Clause]:
    universe = closed_terms(signature, depth)
    if clause.is_ground:
        return [clause]
    return [instantiate(clause, dict(zip(clause.free_vars, combo)))
            for combo in itertools.product(universe, repeat=len(clause.free_vars))]


# ---------------------------------------------------------------------------
# well-formedness


def check_term(term: Term, signature: Signature, bound: Iterable[str] = ()) -> None:
    if isinstance(term, Const):
        if term.name not in signature.constants:
            raise LogicError(f"unknown constant {term.name!r}")
    elif isinstance(term, Var):
        if term.name in signature:
            raise LogicError(f"variable {term.name!r} clashes with a declared symbol")
    else:
        arity = signature.functions.get(term.function)
        if arity is None:
            raise LogicError(f"unknown function {term.function!r}")
        if arity != len(term.args):
            raise LogicError(f"{term.function} expects {arity} arguments, got {len(term.args)}")
        for a in term.args:
            check_term(a, signature, bound)


def check_atom(predicate: str, args: Sequence[Term], signature: Signature) -> None:
    arity = signature.predicates.get(predicate)
    if arity is None:
        raise LogicError(f"unknown predicate {predicate!r}")
    if arity != len(args):
        raise LogicError(f"{predicate} expects {arity} arguments, got {len(args)}")
    for a in args:
        check_term(a, signature)


def check_clause(clause: Clause, signature: Signature) -> None:
    for lit in clause.literals:
        check_atom(lit.predicate, lit.args, signature)


def check_formula(formula: Formula, signature: Signature) -> None:
    """Well-formedness; every bound variable name may be bound only once."""
    bound_names: set[str] = set()

    def visit(f, scope):
        if isinstance(f, Atom):
            check_atom(f.predicate, f.args, signature)
        elif isinstance(f, Not):
            visit(f.body, scope)
        elif isinstance(f, (And, Or, Implies)):
            visit(f.left, scope)
            visit(f.right, scope)
        elif isinstance(f, (Forall, Exists)):
            if not f.variables:
                raise LogicError("quantifier binds no variables")
            for v in f.variables:
                if v in signature:
                    raise LogicError(f"bound variable {v!r} clashes with a declared symbol")
                if v in scope:
                    raise LogicError(f"variable {v!r} is shadowed by an inner quantifier")
                if v in bound_names:
                    raise LogicError(f"variable {v!r} is bound by more than one quantifier")
                bound_names.add(v)
            visit(f.body, scope | set(f.variables))
        else:
            raise LogicError(f"not a formula: {f!r}")

    free = formula_free_variables(formula)
    visit(formula, frozenset())
    reused = bound_names.intersection(free)
    if reused:
        raise LogicError(f"variable {sorted(reused)[0]!r} occurs both free and bound")


# ---------------------------------------------------------------------------
# normalization


def _eliminate_implications(f: Formula) -> Formula:
    if isinstance(f, Atom):
        return f
    if isinstance(f, Not):
        return Not(_eliminate_implications(f.body))
    if isinstance(f, Implies):
        return Or(Not(_eliminate_implications(f.left)), _eliminate_implications(f.right))
    if isinstance(f, (And, Or)):
        return type(f)(_eliminate_implications(f.left), _eliminate_implications(f.right))
    return type(f)(f.variables, _eliminate_implications(f.body))


def _nnf(f: Formula, negated: bool = False) -> Formula:
    if isinstance(f, Atom):
        return Not(f) if negated else f
    if isinstance(f, Not):
        return _nnf(f.body, not negated)
    if isinstance(f, And):
        op = Or if negated else And
        return op(_nnf(f.left, negated), _nnf(f.right, negated))
    if isinstance(f, Or):
        op = And if negated else Or
        return op(_nnf(f.left, negated), _nnf(f.right, negated))
    if isinstance(f, Forall):
        return (Exists if negated else Forall)(f.variables, _nnf(f.body, negated))
    if isinstance(f, Exists):
        return (Forall if negated else Exists)(f.variables, _nnf(f.body, negated))
    raise LogicError(f"unexpected node {f!r}")


class _Skolemizer:
    def __init__(self, signature: Signature):
        self.signature = signature
        self._next = 0

    def fresh(self, arity: int) -> str:
        while f"_sk{self._next}" in self.signature:
            self._next += 1
        name = f"_sk{self._next}"
        if arity == 0:
            self.signature = self.signature.with_constant(name)
        else:
            self.signature = self.signature.with_function(name, arity)
        return name

    def run(self, f: Formula, universals: tuple[str, ...], subst: dict[str, Term]) -> Formula:
        if isinstance(f, Atom):
            return Atom(f.predicate, tuple(substitute_term(a, subst) for a in f.args))
        if isinstance(f, Not):
            return Not(self.run(f.body, universals, subst))
        if isinstance(f, (And, Or)):
            return type(f)(self.run(f.left, universals, subst), self.run(f.right, universals, subst))
        if isinstance(f, Forall):
            return self.run(f.body, universals + f.variables, subst)
        # Exists: each variable gets its own Skolem symbol over the enclosing universals
        subst = dict(subst)
        for v in f.variables:
            name = self.fresh(len(universals))
            subst[v] = Apply(name, tuple(Var(u) for u in universals)) if universals else Const(name)
        return self.run(f.body, universals, subst)


def _cnf(f: Formula) -> list[list[Literal]]:
    if isinstance(f, Atom):
        return [[Literal(f.predicate, f.args, True)]]
    if isinstance(f, Not):
        return [[Literal(f.body.predicate, f.body.args, False)]]
    if isinstance(f, And):
        return _cnf(f.left) + _cnf(f.right)
    left, right = _cnf(f.left), _cnf(f.right)
    return [a + b for a in left for b in right]


def normalize(formula: Formula, signature: Signature) -> tuple[list[Clause], Signature]:
    """Convert ``formula`` to clauses, returning them with the extended signature.

    Free variables of ``formula`` are read as outermost universals.  Each
    existential variable under ``n`` universals becomes a fresh ``n``-ary
    Skolem function (a fresh constant when ``n == 0``) named ``_sk0``,
    ``_sk1``, ... in formula order, skipping names already in use.
    """
    check_formula(formula, signature)
    free = tuple(formula_free_variables(formula))
    nnf = _nnf(_eliminate_implications(formula))
    sk = _Skolemizer(signature)
    matrix = sk.run(nnf, free, {})
    clauses = [Clause(tuple(lits)) for lits in _cnf(matrix)]
    return clauses, sk.signature
