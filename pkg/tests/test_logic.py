import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltn.logic import (
    And,
    Apply,
    Atom,
    Clause,
    Const,
    Exists,
    Forall,
    Implies,
    Literal,
    LogicError,
    Not,
    Or,
    Signature,
    Var,
    clause_to_formula,
    closed_terms,
    enumerate_instantiations,
    free_variables,
    instantiate,
    normalize,
)

from oracles import TruthTable, classical_clauses, classical_formula, random_formula

x, y = Var("x"), Var("y")
a, b = Const("a"), Const("b")


def lit(p, *args, positive=True):
    return Literal(p, args, positive)


SMOKERS = Signature(("a", "b"), {}, {"S": 1, "C": 1, "F": 2, "A": 1, "R": 2})


class TestSignature:
    def test_duplicate_names_rejected(self):
        with pytest.raises(LogicError):
            Signature(("a",), {}, {"a": 1})

    def test_arity_must_be_positive(self):
        with pytest.raises(LogicError):
            Signature((), {"f": 0}, {})
        with pytest.raises(LogicError):
            Signature((), {}, {"P": 0})

    def test_union_checks_arity(self):
        s1 = Signature(("a",), {}, {"P": 1})
        s2 = Signature(("b",), {}, {"P": 2})
        with pytest.raises(LogicError):
            s1.union(s2)
        assert s1.union(Signature(("b", "a"), {}, {"P": 1})).constants == ("a", "b")


class TestNormalize:
    def test_existential_under_universal_becomes_skolem_function(self):
        f = Forall(("x",), Implies(Atom("A", (x,)), Exists(("y",), Atom("R", (x, y)))))
        clauses, sig = normalize(f, SMOKERS)
        sk = Apply("_sk0", (x,))
        assert clauses == [Clause((lit("A", x, positive=False), lit("R", x, sk)))]
        assert sig.functions == {"_sk0": 1}

    def test_clausal_input_is_fixed_point(self):
        clause = Clause((lit("S", x, positive=False), lit("C", x)))
        clauses, sig = normalize(clause_to_formula(clause), SMOKERS)
        assert clauses == [clause]
        assert sig == SMOKERS

    def test_every_x_has_a_friend(self):
        clauses, sig = normalize(Forall(("x",), Exists(("y",), Atom("F", (x, y)))), SMOKERS)
        assert clauses == [Clause((lit("F", x, Apply("_sk0", (x,))),))]
        assert sig.functions["_sk0"] == 1

    def test_top_level_existential_becomes_constant(self):
        clauses, sig = normalize(Exists(("y",), Atom("S", (y,))), SMOKERS)
        assert clauses == [Clause((lit("S", Const("_sk0")),))]
        assert "_sk0" in sig.constants

    def test_skolem_names_skip_used_ones(self):
        sig = SMOKERS.with_function("_sk0", 1)
        _, out = normalize(Forall(("x",), Exists(("y",), Atom("F", (x, y)))), sig)
        assert set(out.functions) == {"_sk0", "_sk1"}

    def test_skolem_names_follow_formula_order(self):
        f = And(Exists(("y",), Atom("S", (y,))), Forall(("x",), Exists(("z",), Atom("F", (x, Var("z"))))))
        clauses, sig = normalize(f, SMOKERS)
        assert clauses[0].literals[0].args == (Const("_sk0"),)
        assert clauses[1].literals[0].args[1] == Apply("_sk1", (x,))

    def test_negated_universal_is_existential(self):
        clauses, sig = normalize(Not(Forall(("x",), Atom("S", (x,)))), SMOKERS)
        assert clauses == [Clause((lit("S", Const("_sk0"), positive=False),))]

    def test_implication_in_antecedent(self):
        # (A -> B) -> C  ==  (A | C) & (~B | C)
        f = Implies(Implies(Atom("S", (a,)), Atom("C", (a,))), Atom("A", (a,)))
        clauses, _ = normalize(f, SMOKERS)
        assert clauses == [Clause((lit("S", a), lit("A", a))),
                           Clause((lit("C", a, positive=False), lit("A", a)))]

    def test_shadowing_rejected(self):
        f = Forall(("x",), Exists(("x",), Atom("F", (x, x))))
        with pytest.raises(LogicError, match="shadowed"):
            normalize(f, SMOKERS)

    def test_reused_bound_variable_rejected(self):
        f = Or(Forall(("x",), Atom("S", (x,))), Forall(("x",), Atom("C", (x,))))
        with pytest.raises(LogicError, match="more than one"):
            normalize(f, SMOKERS)

    def test_unknown_symbol_rejected(self):
        with pytest.raises(LogicError):
            normalize(Atom("Q", (a,)), SMOKERS)
        with pytest.raises(LogicError):
            normalize(Atom("S", (a, b)), SMOKERS)

    def test_free_variables_are_universal(self):
        f = Exists(("y",), Atom("F", (x, y)))
        clauses, sig = normalize(f, SMOKERS)
        assert clauses == [Clause((lit("F", x, Apply("_sk0", (x,))),))]

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from(["S", "C", "A"]), st.sampled_from(["x", "y", "a", "b"]),
                              st.booleans()), min_size=1, max_size=4))
    def test_idempotent_on_clauses(self, spec):
        lits = tuple(Literal(p, (Var(t) if t in "xy" else Const(t),), pos) for p, t, pos in spec)
        clause = Clause(lits)
        once, sig1 = normalize(clause_to_formula(clause), SMOKERS)
        assert once == [clause]
        twice, sig2 = normalize(clause_to_formula(once[0]), sig1)
        assert twice == once and sig2 == sig1


def test_classical_equivalence_small_random_sample():
    # the exhaustive version lives in the acceptance suite
    rng = random.Random(3)
    preds = {"P": 1, "Q": 1, "R": 1}
    consts = ["a", "b", "c"]
    sig = Signature(tuple(consts), {}, preds)
    table = TruthTable(preds, consts)
    checked = 0
    while checked < 25:
        f = random_formula(rng, preds, consts, depth=3)
        clauses, out = normalize(f, sig)
        if out != sig:
            continue
        assert (classical_clauses(clauses, table) == classical_formula(f, table)).all(), f
        checked += 1


class TestFreeVariables:
    def test_examples(self):
        assert free_variables(Clause((lit("S", x, positive=False), lit("C", x)))) == ("x",)
        assert free_variables(Clause((lit("S", a),))) == ()
        assert free_variables(Clause((lit("F", x, y, positive=False), lit("F", y, x)))) == ("x", "y")

    def test_nested_terms_first_occurrence(self):
        c = Clause((lit("F", Apply("f", (y,)), x),))
        assert free_variables(c) == ("y", "x")

    def test_clause_rejects_wrong_free_vars(self):
        with pytest.raises(LogicError):
            Clause((lit("S", x),), ("y",))
        with pytest.raises(LogicError):
            Clause(())


class TestInstantiate:
    def test_examples(self):
        c = Clause((lit("S", x, positive=False), lit("C", x)))
        assert instantiate(c, {"x": a}) == Clause((lit("S", a, positive=False), lit("C", a)))
        g = Apply("g", (x,))
        assert instantiate(Clause((lit("F", x, g),)), {"x": b}) == Clause((lit("F", b, Apply("g", (b,))),))
        sym = Clause((lit("F", x, y, positive=False), lit("F", y, x)))
        out = instantiate(sym, {"x": a, "y": b})
        assert out == Clause((lit("F", a, b, positive=False), lit("F", b, a)))
        assert out.free_vars == ()

    def test_missing_binding(self):
        with pytest.raises(LogicError, match="no binding"):
            instantiate(Clause((lit("F", x, y),)), {"x": a})

    def test_open_term_rejected(self):
        with pytest.raises(LogicError, match="closed"):
            instantiate(Clause((lit("S", x),)), {"x": Apply("f", (y,))})


class TestEnumerate:
    def test_one_variable_two_constants(self):
        sig = Signature(("a", "b"), {}, {"S": 1})
        assert len(enumerate_instantiations(Clause((lit("S", x),)), sig, 0)) == 2

    def test_two_variables_eight_constants(self):
        sig = Signature(tuple("abcdefgh"), {}, {"F": 2})
        out = enumerate_instantiations(Clause((lit("F", x, y),)), sig, 0)
        brute = {(p, q) for p in "abcdefgh" for q in "abcdefgh"}
        assert len(out) == 64
        assert {(c.literals[0].args[0].name, c.literals[0].args[1].name) for c in out} == brute

    def test_depth_one_with_unary_function(self):
        sig = Signature(("a",), {"f": 1}, {"S": 1})
        out = enumerate_instantiations(Clause((lit("S", x),)), sig, 1)
        assert [c.literals[0].args[0] for c in out] == [a, Apply("f", (a,))]

    def test_no_constants(self):
        with pytest.raises(LogicError):
            enumerate_instantiations(Clause((lit("S", x),)), Signature((), {}, {"S": 1}), 0)

    def test_ground_clause_yields_itself(self):
        c = Clause((lit("S", a),))
        assert enumerate_instantiations(c, Signature(("a",), {}, {"S": 1}), 0) == [c]

    @pytest.mark.parametrize("depth", [0, 1, 2])
    def test_count_matches_universe_power(self, depth):
        sig = Signature(("a", "b"), {"f": 1, "g": 2}, {"F": 2})
        universe = closed_terms(sig, depth)
        out = enumerate_instantiations(Clause((lit("F", x, y),)), sig, depth)
        assert len(out) == len(universe) ** 2
        assert all(c.is_ground for c in out)
        assert len(set(universe)) == len(universe)

    def test_closed_term_counts(self):
        # depth 1 over {a, b} with unary f and binary g: 2 + 2 + 4
        sig = Signature(("a", "b"), {"f": 1, "g": 2}, {})
        assert len(closed_terms(sig, 1)) == 8
        # depth 2 adds f(t) for 6 depth-1 terms and g(s, t) with max depth exactly 1: 8*8 - 2*2
        assert len(closed_terms(sig, 2)) == 8 + 6 + 60

    def test_deterministic_order(self):
        sig = Signature(("b", "a"), {}, {"F": 2})
        out = enumerate_instantiations(Clause((lit("F", x, y),)), sig, 0)
        assert [tuple(t.name for t in c.literals[0].args) for c in out] == \
            [("b", "b"), ("b", "a"), ("a", "b"), ("a", "a")]
