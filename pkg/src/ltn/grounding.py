"""Real-valued semantics: vectors for terms, [0,1] truth values for clauses.

Constants map to vectors in R^n, function symbols to affine maps
``M v + N`` on the concatenated argument vectors, and predicates to neural
tensor networks ``sigmoid(u . tanh(v^T W v + V v + B))``.  Any symbol can
instead carry a fixed grounding (literal vector or a named builtin); fixed
groundings never change during training.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from . import tensor as T
from .logic import Apply, Clause, Const, Literal, Signature, Term, Var
from .parser import Grounding

INIT_SCALE = 0.1

S_NORMS = ("lukasiewicz", "product", "goedel")
_S_NORM_ALIASES = {"luk": "lukasiewicz", "prod": "product", "godel": "goedel", "max": "goedel"}


def canonical_s_norm(name: str) -> str:
    name = _S_NORM_ALIASES.get(name, name)
    if name not in S_NORMS:
        raise ValueError(f"unknown s-norm {name!r}; choose from {', '.join(S_NORMS)}")
    return name


@dataclass(frozen=True)
class GroundingConfig:
    n: int = 30
    k: int = 10
    s_norm: str = "lukasiewicz"

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise ValueError(f"n and k must be positive (n={self.n}, k={self.k})")
        object.__setattr__(self, "s_norm", canonical_s_norm(self.s_norm))


@dataclass
class ConstantGrounding:
    vector: np.ndarray
    learnable: bool = True


@dataclass
class FunctionGrounding:
    """Affine map ``M v + N``; ``M`` is (n, m*n).  A builtin replaces both."""

    M: np.ndarray | None = None
    N: np.ndarray | None = None
    builtin: str | None = None
    learnable: bool = True


@dataclass
class PredicateGrounding:
    """Tensor network parameters: W (m*n, m*n, k), V (k, m*n), B (k,), u (k,)."""

    W: np.ndarray | None = None
    V: np.ndarray | None = None
    B: np.ndarray | None = None
    u: np.ndarray | None = None
    builtin: str | None = None
    learnable: bool = True


# ---------------------------------------------------------------------------
# builtins


def _builtin_sum(args: Sequence[T.Tensor]) -> T.Tensor:
    out = args[0]
    for a in args[1:]:
        out = T.add(out, a)
    return out


def _builtin_cosine(args: Sequence[T.Tensor]) -> T.Tensor:
    if len(args) != 2:
        raise ValueError("cosine takes exactly two arguments")
    return T.cosine(args[0], args[1])


FUNCTION_BUILTINS: dict[str, Callable[[Sequence[T.Tensor]], T.Tensor]] = {"sum": _builtin_sum}
PREDICATE_BUILTINS: dict[str, Callable[[Sequence[T.Tensor]], T.Tensor]] = {"cosine": _builtin_cosine}


def register_function_builtin(name: str, fn: Callable[[Sequence[T.Tensor]], T.Tensor]) -> None:
    FUNCTION_BUILTINS[name] = fn


def register_predicate_builtin(name: str, fn: Callable[[Sequence[T.Tensor]], T.Tensor]) -> None:
    """Register a fixed predicate grounding; its raw output is clipped into [0, 1]."""
    PREDICATE_BUILTINS[name] = fn


# ---------------------------------------------------------------------------
# environment


@dataclass
class GroundingEnv:
    config: GroundingConfig
    signature: Signature = field(default_factory=Signature)
    constants: dict[str, ConstantGrounding] = field(default_factory=dict)
    functions: dict[str, FunctionGrounding] = field(default_factory=dict)
    predicates: dict[str, PredicateGrounding] = field(default_factory=dict)

    def parameters(self) -> dict[Hashable, np.ndarray]:
        """Learnable arrays keyed by ``(kind, symbol, field)``, in signature order."""
        out = {}
        for name in self.signature.constants:
            g = self.constants[name]
            if g.learnable:
                out[("const", name, "vector")] = g.vector
        for name in self.signature.functions:
            g = self.functions[name]
            if g.learnable and g.builtin is None:
                out[("func", name, "M")] = g.M
                out[("func", name, "N")] = g.N
        for name in self.signature.predicates:
            g = self.predicates[name]
            if g.learnable and g.builtin is None:
                for attr in ("W", "V", "B", "u"):
                    out[("pred", name, attr)] = getattr(g, attr)
        return out

    def with_parameters(self, params: Mapping[Hashable, np.ndarray]) -> GroundingEnv:
        """A copy with learnable arrays replaced; fixed groundings are shared."""
        env = GroundingEnv(self.config, self.signature,
                           {k: copy.copy(v) for k, v in self.constants.items()},
                           {k: copy.copy(v) for k, v in self.functions.items()},
                           {k: copy.copy(v) for k, v in self.predicates.items()})
        table = {"const": env.constants, "func": env.functions, "pred": env.predicates}
        for (kind, name, attr), value in params.items():
            g = table[kind][name]
            if not g.learnable:
                raise ValueError(f"{name!r} has a fixed grounding")
            old = getattr(g, attr)
            value = np.asarray(value, dtype=np.float64)
            if old.shape != value.shape:
                raise ValueError(f"shape mismatch for {name}.{attr}: {old.shape} vs {value.shape}")
            setattr(g, attr, value)
        return env

    def bind(self, tape: T.Tape | None = None) -> Evaluator:
        return Evaluator(self, tape or T.Tape())


def _check_shape(name: str, array: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    array = np.asarray(array, dtype=np.float64)
    if array.shape != shape:
        raise ValueError(f"grounding of {name!r} has shape {array.shape}, expected {shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"grounding of {name!r} has non-finite values")
    return array


def init_env(signature: Signature, config: GroundingConfig, fixed: Mapping[str, object] | None = None,
             seed: int = 0) -> GroundingEnv:
    """Ground every symbol, drawing unfixed parameters from N(0, 0.1^2).

    ``fixed`` maps symbols to a parser ``Grounding`` (vector or builtin name)
    or to a ready-made Constant/Function/PredicateGrounding.
    """
    fixed = dict(fixed or {})
    unknown = set(fixed) - signature.symbols()
    if unknown:
        raise ValueError(f"fixed groundings for undeclared symbols: {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    n, k = config.n, config.k

    def draw(*shape):
        return rng.normal(0.0, INIT_SCALE, size=shape)

    env = GroundingEnv(config, signature)
    for name in signature.constants:
        g = fixed.get(name)
        if g is None:
            env.constants[name] = ConstantGrounding(draw(n))
        elif isinstance(g, ConstantGrounding):
            env.constants[name] = ConstantGrounding(_check_shape(name, g.vector, (n,)), g.learnable)
        elif isinstance(g, Grounding) and g.vector is not None:
            env.constants[name] = ConstantGrounding(_check_shape(name, g.vector, (n,)), learnable=False)
        else:
            raise ValueError(f"constant {name!r} needs a vector grounding")

    for name, m in signature.functions.items():
        g = fixed.get(name)
        if g is None:
            env.functions[name] = FunctionGrounding(draw(n, m * n), draw(n))
        elif isinstance(g, FunctionGrounding):
            if g.builtin is not None:
                _require_builtin(name, g.builtin, FUNCTION_BUILTINS)
                env.functions[name] = FunctionGrounding(builtin=g.builtin, learnable=False)
            else:
                env.functions[name] = FunctionGrounding(_check_shape(name, g.M, (n, m * n)),
                                                        _check_shape(name, g.N, (n,)), learnable=g.learnable)
        elif isinstance(g, Grounding) and g.builtin is not None:
            _require_builtin(name, g.builtin, FUNCTION_BUILTINS)
            env.functions[name] = FunctionGrounding(builtin=g.builtin, learnable=False)
        else:
            raise ValueError(f"function {name!r} needs a builtin or affine grounding")

    for name, m in signature.predicates.items():
        g = fixed.get(name)
        d = m * n
        if g is None:
            env.predicates[name] = PredicateGrounding(draw(d, d, k), draw(k, d), draw(k), draw(k))
        elif isinstance(g, PredicateGrounding):
            if g.builtin is not None:
                _require_builtin(name, g.builtin, PREDICATE_BUILTINS)
                env.predicates[name] = PredicateGrounding(builtin=g.builtin, learnable=False)
            else:
                env.predicates[name] = PredicateGrounding(
                    _check_shape(name, g.W, (d, d, k)), _check_shape(name, g.V, (k, d)),
                    _check_shape(name, g.B, (k,)), _check_shape(name, g.u, (k,)), learnable=g.learnable)
        elif isinstance(g, Grounding) and g.builtin is not None:
            _require_builtin(name, g.builtin, PREDICATE_BUILTINS)
            env.predicates[name] = PredicateGrounding(builtin=g.builtin, learnable=False)
        else:
            raise ValueError(f"predicate {name!r} needs a builtin or tensor-network grounding")
    return env


def _require_builtin(name: str, builtin: str, registry: Mapping[str, object]) -> None:
    if builtin not in registry:
        raise ValueError(f"unknown builtin {builtin!r} for {name!r}; known: {', '.join(sorted(registry))}")


# ---------------------------------------------------------------------------
# evaluation


class Evaluator:
    """Grounds terms, atoms and clauses of one environment onto a tape.

    Learnable arrays are registered as tape parameters keyed like
    :meth:`GroundingEnv.parameters`, so ``tensor.gradients`` on any value
    computed here yields gradients for every learnable array.
    """

    def __init__(self, env: GroundingEnv, tape: T.Tape):
        self.env = env
        self.tape = tape
        self.params: dict[Hashable, T.Tensor] = {}
        for key, value in env.parameters().items():
            self.params[key] = tape.parameter(key, value)
        self._fixed: dict[Hashable, T.Tensor] = {}
        self._terms: dict[Term, T.Tensor] = {}

    def _array(self, kind: str, name: str, attr: str, value: np.ndarray, learnable: bool) -> T.Tensor:
        key = (kind, name, attr)
        if learnable:
            return self.params[key]
        if key not in self._fixed:
            self._fixed[key] = self.tape.constant(value)
        return self._fixed[key]

    def constant(self, name: str) -> T.Tensor:
        g = self.env.constants.get(name)
        if g is None:
            raise KeyError(f"no grounding for constant {name!r}")
        return self._array("const", name, "vector", g.vector, g.learnable)

    def function(self, name: str, args: Sequence[T.Tensor]) -> T.Tensor:
        """Apply the grounding of ``name``; arguments may carry a leading batch axis."""
        g = self.env.functions.get(name)
        if g is None:
            raise KeyError(f"no grounding for function {name!r}")
        arity = self.env.signature.functions[name]
        if len(args) != arity:
            raise ValueError(f"{name} expects {arity} arguments, got {len(args)}")
        if g.builtin is not None:
            return FUNCTION_BUILTINS[g.builtin](args)
        M = self._array("func", name, "M", g.M, g.learnable)
        N = self._array("func", name, "N", g.N, g.learnable)
        v = args[0] if len(args) == 1 else T.concat(args, axis=-1)
        return T.add(T.matvec(M, v), N)

    def term(self, term: Term) -> T.Tensor:
        cached = self._terms.get(term)
        if cached is not None:
            return cached
        if isinstance(term, Const):
            out = self.constant(term.name)
        elif isinstance(term, Apply):
            out = self.function(term.function, [self.term(a) for a in term.args])
        elif isinstance(term, Var):
            raise ValueError(f"cannot ground open term: variable {term.name!r}")
        else:
            raise TypeError(f"not a term: {term!r}")
        self._terms[term] = out
        return out

    def atom(self, predicate: str, args: Sequence[T.Tensor]) -> T.Tensor:
        """Truth value(s) of ``predicate`` on argument vectors (batched or not)."""
        g = self.env.predicates.get(predicate)
        if g is None:
            raise KeyError(f"no grounding for predicate {predicate!r}")
        arity = self.env.signature.predicates[predicate]
        if len(args) != arity:
            raise ValueError(f"{predicate} expects {arity} arguments, got {len(args)}")
        if g.builtin is not None:
            raw = PREDICATE_BUILTINS[g.builtin](args)
            return T.min_clamp1(T.maximum(raw, self.tape.constant(0.0)))
        W = self._array("pred", predicate, "W", g.W, g.learnable)
        V = self._array("pred", predicate, "V", g.V, g.learnable)
        B = self._array("pred", predicate, "B", g.B, g.learnable)
        u = self._array("pred", predicate, "u", g.u, g.learnable)
        v = args[0] if len(args) == 1 else T.concat(args, axis=-1)
        hidden = T.tanh(T.add(T.add(T.bilinear(v, W), T.matvec(V, v)), B))
        return T.sigmoid(T.sum(T.mul(hidden, u), axis=-1))

    def literal(self, literal: Literal) -> T.Tensor:
        value = self.atom(literal.predicate, [self.term(a) for a in literal.args])
        return value if literal.positive else T.one_minus(value)

    def clause(self, clause: Clause) -> T.Tensor:
        if not clause.is_ground:
            raise ValueError(f"clause has free variables {clause.free_vars}")
        return s_norm([self.literal(l) for l in clause.literals], self.env.config.s_norm)


def s_norm(values: Sequence[T.Tensor], kind: str = "lukasiewicz") -> T.Tensor:
    """Fold an s-norm over same-shaped truth tensors."""
    kind = canonical_s_norm(kind)
    values = list(values)
    if not values:
        raise ValueError("s-norm of no values")
    if len(values) == 1:
        return values[0]
    if kind == "lukasiewicz":
        total = values[0]
        for v in values[1:]:
            total = T.add(total, v)
        return T.min_clamp1(total)
    if kind == "product":
        out = values[0]
        for v in values[1:]:
            out = T.sub(T.add(out, v), T.mul(out, v))
        return out
    out = values[0]
    for v in values[1:]:
        out = T.maximum(out, v)
    return out


# module-level conveniences; each evaluates on a throwaway tape


def ground_term(term: Term, env: GroundingEnv) -> np.ndarray:
    return env.bind().term(term).numpy()


def ground_atom(predicate: str, arg_vectors: Sequence, env: GroundingEnv) -> float:
    ev = env.bind()
    return ev.atom(predicate, [ev.tape.constant(v) for v in arg_vectors]).item()


def ground_literal(literal: Literal, env: GroundingEnv) -> float:
    return env.bind().literal(literal).item()


def ground_clause(clause: Clause, env: GroundingEnv) -> float:
    return env.bind().clause(clause).item()


def predict_skolem(function: str, input_vectors: Sequence, env: GroundingEnv) -> np.ndarray:
    """Features of the object a learned Skolem function associates with the inputs."""
    g = env.functions.get(function)
    if g is None:
        raise KeyError(f"unknown function {function!r}")
    if g.builtin is not None or not g.learnable:
        raise ValueError(f"function {function!r} has a fixed grounding")
    ev = env.bind()
    return ev.function(function, [ev.tape.constant(v) for v in input_vectors]).numpy()


# ---------------------------------------------------------------------------
# persistence


def _array_json(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x) for x in np.asarray(a).ravel()]}


def _array_from_json(d: Mapping) -> np.ndarray:
    return np.asarray(d["data"], dtype=np.float64).reshape(d["shape"])


def env_to_dict(env: GroundingEnv) -> dict:
    sig = env.signature
    out = {
        "config": {"n": env.config.n, "k": env.config.k, "s_norm": env.config.s_norm},
        "signature": {"constants": list(sig.constants), "functions": dict(sig.functions),
                      "predicates": dict(sig.predicates)},
        "constants": {},
        "functions": {},
        "predicates": {},
    }
    for name in sig.constants:
        g = env.constants[name]
        out["constants"][name] = {"learnable": g.learnable, "vector": _array_json(g.vector)}
    for name in sig.functions:
        g = env.functions[name]
        if g.builtin is not None:
            out["functions"][name] = {"builtin": g.builtin}
        else:
            out["functions"][name] = {"learnable": g.learnable, "M": _array_json(g.M), "N": _array_json(g.N)}
    for name in sig.predicates:
        g = env.predicates[name]
        if g.builtin is not None:
            out["predicates"][name] = {"builtin": g.builtin}
        else:
            out["predicates"][name] = {"learnable": g.learnable,
                                       **{a: _array_json(getattr(g, a)) for a in ("W", "V", "B", "u")}}
    return out


def env_from_dict(d: Mapping) -> GroundingEnv:
    c = d["config"]
    config = GroundingConfig(c["n"], c["k"], c["s_norm"])
    s = d["signature"]
    sig = Signature(tuple(s["constants"]), s["functions"], s["predicates"])
    fixed: dict[str, object] = {}
    for name, g in d["constants"].items():
        fixed[name] = ConstantGrounding(_array_from_json(g["vector"]), g["learnable"])
    for name, g in d["functions"].items():
        if "builtin" in g:
            fixed[name] = FunctionGrounding(builtin=g["builtin"], learnable=False)
        else:
            fixed[name] = FunctionGrounding(_array_from_json(g["M"]), _array_from_json(g["N"]),
                                            learnable=g["learnable"])
    for name, g in d["predicates"].items():
        if "builtin" in g:
            fixed[name] = PredicateGrounding(builtin=g["builtin"], learnable=False)
        else:
            fixed[name] = PredicateGrounding(*(_array_from_json(g[a]) for a in ("W", "V", "B", "u")),
                                             learnable=g["learnable"])
    return init_env(sig, config, fixed)
