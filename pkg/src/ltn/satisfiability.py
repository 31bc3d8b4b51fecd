"""Grounded theories, interval loss and knowledge-completion reports.

A theory is a list of clauses, each tagged with a confidence interval
``[v, w]``, together with a grounding environment.  Each clause is
instantiated over the closed terms up to ``depth``; the instance truth
values are combined into one degree with an epsilon-stabilized harmonic
mean, and that degree enters the interval loss once.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .grounding import GroundingConfig, GroundingEnv, init_env, s_norm
from .logic import Apply, Clause, Const, Signature, Term, enumerate_instantiations
from .parser import KbDocument, format_formula
from .logic import normalize

DEFAULT_LAMBDA = 1e-10


@dataclass(frozen=True)
class TheoryEntry:
    clause: Clause
    interval: tuple[float, float] = (1.0, 1.0)
    label: str = ""

    def __post_init__(self):
        v, w = (float(x) for x in self.interval)
        if not 0.0 <= v <= w <= 1.0:
            raise ValueError(f"invalid interval [{v}, {w}]")
        object.__setattr__(self, "interval", (v, w))
        if not self.label:
            object.__setattr__(self, "label", str(self.clause))


@dataclass
class GroundedTheory:
    entries: list[TheoryEntry]
    env: GroundingEnv
    depth: int = 0
    fixed: dict = field(default_factory=dict)
    _plan: _Plan | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be >= 0")

    @property
    def signature(self) -> Signature:
        return self.env.signature

    def with_env(self, env: GroundingEnv) -> GroundedTheory:
        """Same clauses (and compiled plan) under another environment."""
        return GroundedTheory(self.entries, env, self.depth, self.fixed, self._plan)

    def reinitialized(self, seed: int) -> GroundedTheory:
        env = init_env(self.signature, self.env.config, self.fixed, seed)
        return self.with_env(env)

    @property
    def plan(self) -> _Plan:
        if self._plan is None:
            self._plan = _Plan(self.entries, self.signature, self.depth)
        return self._plan


def theory_from_document(doc: KbDocument, config: GroundingConfig, seed: int = 0,
                         depth: int = 0) -> GroundedTheory:
    """Normalize every formula of ``doc`` and ground the resulting signature.

    A formula that normalizes to several clauses contributes one entry per
    clause, each with the formula's interval.
    """
    sig = doc.signature
    entries = []
    for e in doc.entries:
        clauses, sig = normalize(e.formula, sig)
        text = format_formula(e.formula)
        for j, clause in enumerate(clauses):
            label = text if len(clauses) == 1 else f"{text} [clause {j + 1}/{len(clauses)}]"
            entries.append(TheoryEntry(clause, e.interval, label))
    fixed = dict(doc.groundings)
    env = init_env(sig, config, fixed, seed)
    return GroundedTheory(entries, env, depth, fixed)


# ---------------------------------------------------------------------------
# scalar helpers


def clause_loss(truth: float, interval: Sequence[float]) -> float:
    """Distance from ``truth`` to the closed interval ``[v, w]``."""
    v, w = interval
    if truth < v:
        return v - truth
    if truth > w:
        return truth - w
    return 0.0


def interval_loss(truth: T.Tensor, lower, upper) -> T.Tensor:
    """Tape version of :func:`clause_loss`: max(v - t, 0) + max(t - w, 0).

    Exactly zero inside the interval; at a boundary the gradient is zero.
    ``lower`` and ``upper`` may be arrays matching ``truth``.
    """
    v = np.asarray(lower, dtype=np.float64)
    w = np.asarray(upper, dtype=np.float64)
    tape = truth.tape
    zero = tape.constant(np.zeros(truth.shape))
    below = T.maximum(zero, T.sub(tape.constant(v), truth))
    above = T.maximum(zero, T.sub(truth, tape.constant(w)))
    return T.add(below, above)


# ---------------------------------------------------------------------------
# compiled evaluation


@dataclass
class _EntryPlan:
    literal_atoms: list[np.ndarray]   # per literal: atom index for every instance
    polarities: list[bool]
    instances: list[Clause]
    ground: bool


class _Plan:
    """Index tables that evaluate all instances of all entries in batches.

    Every distinct closed term is computed once per forward pass, and every
    distinct ground atom once per predicate batch.
    """

    def __init__(self, entries: Sequence[TheoryEntry], signature: Signature, depth: int):
        self.atoms: dict[str, list[tuple[Term, ...]]] = {p: [] for p in signature.predicates}
        self._atom_index: dict[tuple[str, tuple[Term, ...]], tuple[str, int]] = {}
        self.terms: list[Term] = []
        self._term_index: dict[Term, int] = {}
        self.entries: list[_EntryPlan] = []
        local: list[list[list[tuple[str, int]]]] = []
        for e in entries:
            instances = enumerate_instantiations(e.clause, signature, depth)
            per_lit = [[self._atom(lit.predicate, lit.args) for lit in inst.literals] for inst in instances]
            local.append(per_lit)
            self.entries.append(_EntryPlan([], [l.positive for l in e.clause.literals],
                                           instances, e.clause.is_ground))
        # global atom layout: predicates in signature order, atoms in first-use order
        self.offsets: dict[str, int] = {}
        total = 0
        for p, atoms in self.atoms.items():
            self.offsets[p] = total
            total += len(atoms)
        self.n_atoms = total
        for plan, per_lit in zip(self.entries, local):
            for j in range(len(plan.polarities)):
                plan.literal_atoms.append(np.array([self.offsets[p] + i for p, i in
                                                    (inst[j] for inst in per_lit)], dtype=np.intp))
        self.ground_groups: list[tuple[np.ndarray, list[np.ndarray], tuple[bool, ...]]] = []
        by_pattern: dict[tuple[bool, ...], list[int]] = {}
        for i, plan in enumerate(self.entries):
            if plan.ground:
                by_pattern.setdefault(tuple(plan.polarities), []).append(i)
        for pattern, members in by_pattern.items():
            cols = [np.concatenate([self.entries[i].literal_atoms[j] for i in members])
                    for j in range(len(pattern))]
            self.ground_groups.append((np.array(members, dtype=np.intp), cols, pattern))
        self.open_entries = [i for i, plan in enumerate(self.entries) if not plan.ground]
        order = np.concatenate([g[0] for g in self.ground_groups]
                               + [np.array(self.open_entries, dtype=np.intp)]).astype(np.intp)
        self.unpermute = np.argsort(order, kind="stable")
        self._layout_terms()
        self.atom_args = {p: np.array([[self._term_index[t] for t in args] for args in atoms],
                                      dtype=np.intp).reshape(len(atoms), -1).T
                          for p, atoms in self.atoms.items() if atoms}

    def _add_term(self, t: Term) -> None:
        if t in self._term_index:
            return
        if isinstance(t, Apply):
            for a in t.args:
                self._add_term(a)
        self._term_index[t] = -1
        self.terms.append(t)

    def _atom(self, predicate: str, args: tuple[Term, ...]) -> tuple[str, int]:
        key = (predicate, args)
        found = self._atom_index.get(key)
        if found is None:
            for a in args:
                self._add_term(a)
            found = (predicate, len(self.atoms[predicate]))
            self.atoms[predicate].append(args)
            self._atom_index[key] = found
        return found

    def _layout_terms(self) -> None:
        # constants first, then applications level by level grouped by function
        consts = [t for t in self.terms if isinstance(t, Const)]
        apps = [t for t in self.terms if isinstance(t, Apply)]
        order = list(consts)
        depth_of = {t: 0 for t in consts}
        self.levels: list[list[tuple[str, list[Apply]]]] = []
        remaining = apps
        while remaining:
            ready = [t for t in remaining if all(a in depth_of for a in t.args)]
            by_fn: dict[str, list[Apply]] = {}
            for t in ready:
                by_fn.setdefault(t.function, []).append(t)
            self.levels.append(list(by_fn.items()))
            for fn, ts in by_fn.items():
                order.extend(ts)
            for t in ready:
                depth_of[t] = 0
            ready_set = set(ready)
            remaining = [t for t in remaining if t not in ready_set]
        self.constants = [t.name for t in consts]
        self.terms = order
        self._term_index = {t: i for i, t in enumerate(order)}

    def term_matrix(self, ev) -> T.Tensor | None:
        if not self.terms:
            return None
        rows = T.stack([ev.constant(c) for c in self.constants]) if self.constants else None
        for level in self.levels:
            blocks = []
            for fn, ts in level:
                args = [T.gather(rows, [self._term_index[t.args[j]] for t in ts])
                        for j in range(len(ts[0].args))]
                blocks.append(ev.function(fn, args))
            new = [rows] + blocks if rows is not None else blocks
            rows = T.concat(new, axis=0)
        return rows

    def atom_values(self, ev) -> T.Tensor | None:
        terms = self.term_matrix(ev)
        parts = []
        for p, idx in self.atom_args.items():
            args = [T.gather(terms, idx[j]) for j in range(idx.shape[0])]
            parts.append(ev.atom(p, args))
        if not parts:
            return None
        return parts[0] if len(parts) == 1 else T.concat(parts, axis=0)

    def _literals(self, ev, atoms, columns, polarities) -> T.Tensor:
        lits = []
        for idx, positive in zip(columns, polarities):
            v = T.gather(atoms, idx)
            lits.append(v if positive else T.one_minus(v))
        return s_norm(lits, ev.env.config.s_norm)

    def evaluate(self, ev, atoms) -> tuple[T.Tensor, dict[int, T.Tensor]]:
        """Degree of every entry (entry order) plus instance values of open entries.

        Ground entries sharing a polarity pattern are evaluated as one batch.
        """
        pieces = []
        for _, columns, pattern in self.ground_groups:
            pieces.append(self._literals(ev, atoms, columns, pattern))
        instances = {}
        for i in self.open_entries:
            plan = self.entries[i]
            values = self._literals(ev, atoms, plan.literal_atoms, plan.polarities)
            instances[i] = values
            pieces.append(T.reshape(_aggregate(values), (1,)))
        degrees = pieces[0] if len(pieces) == 1 else T.concat(pieces, axis=0)
        return T.gather(degrees, self.unpermute), instances


def _neg(x: T.Tensor) -> T.Tensor:
    return T.scalar_mul(x, -1.0)


def _aggregate(values: T.Tensor) -> T.Tensor:
    """eps-stabilized harmonic mean, shifted back by eps and kept in [min, max].

    The clip only removes rounding: equal instances aggregate to exactly
    their common value, so a clause whose instances all satisfy its
    interval also has zero loss.
    """
    shifted = T.sub(T.harmonic_mean_eps(values), values.tape.constant(T.HARMONIC_EPS))
    hi = T.max(values)
    lo = _neg(T.max(_neg(values)))
    capped = _neg(T.maximum(_neg(shifted), _neg(hi)))
    return T.maximum(capped, lo)


@dataclass
class Forward:
    """Everything one forward pass produces, all on the same tape."""

    evaluator: object
    degrees: T.Tensor                  # (entries,)
    losses: T.Tensor                   # (entries,)
    open_instances: dict[int, T.Tensor]
    regularizer: T.Tensor | None
    total: T.Tensor

    def instance_values(self, index: int) -> np.ndarray:
        if index in self.open_instances:
            return self.open_instances[index].data
        return self.degrees.data[index:index + 1]


def forward(theory: GroundedTheory, lam: float = DEFAULT_LAMBDA, tape: T.Tape | None = None) -> Forward:
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    ev = theory.env.bind(tape)
    plan = theory.plan
    total = None
    degrees = losses = None
    instances: dict[int, T.Tensor] = {}
    if theory.entries:
        atoms = plan.atom_values(ev)
        degrees, instances = plan.evaluate(ev, atoms)
        lower = [e.interval[0] for e in theory.entries]
        upper = [e.interval[1] for e in theory.entries]
        losses = interval_loss(degrees, lower, upper)
        total = T.sum(losses)
    reg = None
    if ev.params:
        sq = [T.sum(T.square(p)) for p in ev.params.values()]
        reg = sq[0]
        for s in sq[1:]:
            reg = T.add(reg, s)
        reg = T.scalar_mul(reg, lam)
        total = reg if total is None else T.add(total, reg)
    if total is None:
        total = ev.tape.constant(0.0)
    if degrees is None:
        degrees = losses = ev.tape.constant(np.zeros(0))
    return Forward(ev, degrees, losses, instances, reg, total)


def aggregate_clause(clause: Clause, theory: GroundedTheory) -> float:
    """Harmonic-mean degree of ``clause`` over its instantiations in ``theory``."""
    sub = GroundedTheory([TheoryEntry(clause)], theory.env, theory.depth)
    return float(forward(sub, 0.0).degrees.data[0])


def total_loss(theory: GroundedTheory, lam: float = DEFAULT_LAMBDA) -> float:
    return forward(theory, lam).total.item()


def check_satisfied(theory: GroundedTheory) -> tuple[list[bool], bool]:
    """Instance-wise check: an entry holds iff every instance lies in [v, w]."""
    fw = forward(theory, 0.0)
    flags = []
    for i, e in enumerate(theory.entries):
        v, w = e.interval
        data = fw.instance_values(i)
        flags.append(bool(np.all((data >= v) & (data <= w))))
    return flags, all(flags)


# ---------------------------------------------------------------------------
# reports


@dataclass
class EntryReport:
    label: str
    interval: tuple[float, float]
    degree: float
    loss: float
    satisfied: bool
    ground: bool
    groups: dict[str, float] = field(default_factory=dict)


@dataclass
class SatReport:
    constants: list[str]
    atoms: dict[str, np.ndarray]       # predicate -> array of shape (len(constants),) * arity
    entries: list[EntryReport]
    total_loss: float
    groups: dict[str, list[str]]

    @property
    def satisfied(self) -> bool:
        return all(e.satisfied for e in self.entries)

    @property
    def axioms(self) -> list[EntryReport]:
        return [e for e in self.entries if not e.ground]


def constant_groups(theory: GroundedTheory) -> dict[str, list[str]]:
    """Connected components of constants that co-occur in ground entries.

    Constants never mentioned by a ground entry form singleton groups.
    Groups are named by their first and last member, e.g. ``a..h``.
    """
    constants = list(theory.signature.constants)
    parent = {c: c for c in constants}

    def find(c):
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    def consts_of(term):
        if isinstance(term, Const):
            yield term.name
        elif isinstance(term, Apply):
            for a in term.args:
                yield from consts_of(a)

    for e in theory.entries:
        if not e.clause.is_ground:
            continue
        names = [c for lit in e.clause.literals for a in lit.args for c in consts_of(a)]
        for a, b in zip(names, names[1:]):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[rb] = ra
    comps: dict[str, list[str]] = {}
    for c in constants:
        comps.setdefault(find(c), []).append(c)
    out = {}
    for members in comps.values():
        name = members[0] if len(members) == 1 else f"{members[0]}..{members[-1]}"
        out[name] = members
    return out


def _instance_constants(clause: Clause) -> set[str]:
    out = set()

    def visit(t):
        if isinstance(t, Const):
            out.add(t.name)
        elif isinstance(t, Apply):
            for a in t.args:
                visit(a)

    for lit in clause.literals:
        for a in lit.args:
            visit(a)
    return out


def completion_report(theory: GroundedTheory, lam: float = DEFAULT_LAMBDA) -> SatReport:
    """Truth of every ground atom over the constants, plus per-entry degrees.

    Entries with free variables also get a degree per constant group when
    the constants split into more than one multi-member group.
    """
    fw = forward(theory, lam)
    groups = constant_groups(theory)
    multi = {g: set(m) for g, m in groups.items() if len(m) > 1}
    entries = []
    for index, (e, plan) in enumerate(zip(theory.entries, theory.plan.entries)):
        v, w = e.interval
        data = fw.instance_values(index)
        per_group = {}
        if not plan.ground and len(multi) > 1:
            inst = fw.open_instances[index]
            for g, members in multi.items():
                sel = [i for i, c in enumerate(plan.instances) if _instance_constants(c) <= members]
                if sel:
                    per_group[g] = _aggregate(T.gather(inst, sel)).item()
        entries.append(EntryReport(e.label, e.interval, float(fw.degrees.data[index]),
                                   float(fw.losses.data[index]), bool(np.all((data >= v) & (data <= w))),
                                   plan.ground, per_group))
    constants = list(theory.signature.constants)
    atoms = atom_table(theory.env, constants)
    return SatReport(constants, atoms, entries, fw.total.item(), groups)


def atom_table(env: GroundingEnv, constants: Sequence[str]) -> dict[str, np.ndarray]:
    """Every predicate evaluated on every tuple of ``constants``."""
    ev = env.bind()
    out = {}
    if not constants:
        return {p: np.zeros((0,) * m) for p, m in env.signature.predicates.items()}
    rows = T.stack([ev.constant(c) for c in constants])
    for p, m in env.signature.predicates.items():
        combos = np.array(list(itertools.product(range(len(constants)), repeat=m)), dtype=np.intp)
        args = [T.gather(rows, combos[:, j]) for j in range(m)]
        out[p] = ev.atom(p, args).numpy().reshape((len(constants),) * m)
    return out
