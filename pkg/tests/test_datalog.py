import itertools

import pytest

from dedalus.datalog import (
    GroundProgram,
    NotSemiPositive,
    NotStratifiable,
    Program,
    Rule,
    SchemaError,
    UnsafeRuleError,
    Var,
    atom,
    fact,
    ground,
    immediate_consequence,
    is_stable_model,
    is_valid_stratification,
    one_step,
    reduct,
    reduct_fixpoint,
    semi_positive_fixpoint,
    stable_models_brute_force,
    stratified_eval,
    stratify,
)
from dedalus.syntax import parse_program

U, V, W = Var("U"), Var("V"), Var("W")


def transitive_closure(edges):
    """Reachability by explicit path enumeration."""
    nodes = {n for e in edges for n in e}
    out = set()
    for path_len in range(1, len(nodes) + 1):
        for path in itertools.product(sorted(nodes), repeat=path_len + 1):
            if all((path[i], path[i + 1]) in edges for i in range(path_len)):
                out.add((path[0], path[-1]))
    return out


class TestImmediateConsequence:
    def test_copy_rule(self):
        p = parse_program("t(U, V) <- r(U, V).")
        assert immediate_consequence(p, {fact("r", "a", "b")}) == {fact("r", "a", "b"), fact("t", "a", "b")}

    def test_empty_program_is_identity(self):
        assert immediate_consequence(Program(), {fact("r", "a", "b")}) == {fact("r", "a", "b")}

    def test_negation_blocks_only_valuation(self):
        p = parse_program("t(U, V) <- r(U, V), not s(V).")
        j = {fact("r", "a", "b"), fact("s", "b")}
        assert immediate_consequence(p, j) == j

    def test_schema_mismatch(self):
        p = parse_program("t(U) <- r(U, V).")
        with pytest.raises(SchemaError):
            immediate_consequence(p, {fact("r", "a")})

    def test_one_step_excludes_input(self):
        p = parse_program("t(U) <- t(U).")
        assert one_step(p, {fact("t", "a")}) == {fact("t", "a")}
        assert one_step(Program(), {fact("t", "a")}) == frozenset()


class TestSemiPositive:
    def test_transitive_closure(self):
        p = parse_program("t(U, V) <- r(U, V). t(U, V) <- t(U, W), r(W, V).")
        edges = {("a", "b"), ("b", "c")}
        i = {fact("r", *e) for e in edges}
        want = i | {fact("t", *e) for e in transitive_closure(edges)}
        assert semi_positive_fixpoint(p, i) == want
        assert {fact("t", "a", "c")} <= want

    def test_cycle_closure_matches_oracle(self):
        p = parse_program("t(U, V) <- r(U, V). t(U, V) <- t(U, W), r(W, V).")
        edges = {("a", "b"), ("b", "c"), ("c", "a"), ("c", "d")}
        i = {fact("r", *e) for e in edges}
        got = {f.args for f in semi_positive_fixpoint(p, i) if f.pred == "t"}
        assert got == transitive_closure(edges)

    def test_empty_input(self):
        p = parse_program("t(U, V) <- r(U, V).")
        assert semi_positive_fixpoint(p, set()) == frozenset()

    def test_negated_edb(self):
        p = parse_program("t(U) <- r(U), not s(U).")
        i = {fact("r", "a"), fact("r", "b"), fact("s", "b")}
        assert semi_positive_fixpoint(p, i) == i | {fact("t", "a")}

    def test_rejects_negated_idb(self):
        p = parse_program("t(U) <- r(U), not t(U).")
        with pytest.raises(NotSemiPositive):
            semi_positive_fixpoint(p, set())


class TestStratify:
    def test_hand_condensation(self):
        p = parse_program("t(U) <- r(U). s(U) <- t(U), not q(U). q(U) <- r(U).")
        assert stratify(p) == {"q": 1, "t": 1, "s": 2}

    def test_self_negative_cycle(self):
        p = parse_program("win(U) <- move(U, V), not win(V).")
        with pytest.raises(NotStratifiable) as e:
            stratify(p)
        assert e.value.cycle == ["win"]

    def test_longer_negative_cycle_witness(self):
        p = parse_program("p(U) <- r(U), not q(U). q(U) <- r(U), p(U).")
        with pytest.raises(NotStratifiable) as e:
            stratify(p)
        assert set(e.value.cycle) == {"p", "q"}

    def test_positive_program_single_stratum(self):
        p = parse_program("t(U, V) <- r(U, V). t(U, V) <- t(U, W), r(W, V). s(U) <- t(U, U).")
        assert set(stratify(p).values()) == {1}

    def test_contiguous_and_valid(self):
        p = parse_program("a(U) <- r(U). b(U) <- r(U), not a(U). c(U) <- r(U), not b(U). d(U) <- c(U), a(U).")
        strata = stratify(p)
        assert strata == {"a": 1, "b": 2, "c": 3, "d": 3}
        assert is_valid_stratification(p, strata)


class TestStratifiedEval:
    REACH = """
        marked(V) <- marked(U), r(U, V).
        vert(U) <- r(U, V).
        vert(U) <- r(V, U).
        missing() <- vert(U), not marked(U).
        covered() <- not missing().
    """

    def test_reachability_deductive_rules(self):
        p = parse_program(self.REACH)
        i = {fact("r", "a", "b"), fact("marked", "a")}
        out = stratified_eval(p, i)
        assert out == i | {fact("vert", "a"), fact("vert", "b"), fact("marked", "b"), fact("covered")}

    def test_missing_vertex_blocks_covered(self):
        p = parse_program(self.REACH)
        i = {fact("r", "a", "b"), fact("r", "c", "b"), fact("marked", "a")}
        out = stratified_eval(p, i)
        assert fact("missing") in out and fact("covered") not in out

    def test_empty_program(self):
        assert stratified_eval(Program(), {fact("r", "a")}) == {fact("r", "a")}

    def test_negation_of_empty_lower_stratum(self):
        assert stratified_eval(parse_program("p() <- not q()."), set()) == {fact("p")}

    def test_stratification_choice_irrelevant(self):
        p = parse_program("a(U) <- r(U). b(U) <- r(U), not a(U). c(U) <- s(U), not b(U).")
        i = {fact("r", 1), fact("s", 1), fact("s", 2)}
        alt = {"a": 1, "b": 3, "c": 5}
        assert is_valid_stratification(p, alt)
        assert stratified_eval(p, i) == stratified_eval(p, i, alt)


class TestGroundAndReduct:
    def test_single_valuation(self):
        g = ground(parse_program("p(U) <- r(U)."), {fact("r", "a")})
        assert {str(r) for r in g.rules} == {"p(a) <- r(a)."}

    def test_nullary_on_empty_input(self):
        g = ground(parse_program("p() <- q()."), set())
        assert {str(r) for r in g.rules} == {"p() <- q()."}

    def test_valuations_range_over_active_domain(self):
        g = ground(parse_program("p(U) <- r(U), not s(U)."), {fact("r", "a"), fact("s", "b")})
        assert len(g.rules) == 2

    def test_reduct_keeps_and_drops(self):
        g = ground(parse_program("p() <- not q()."), set())
        assert {str(r) for r in reduct(g, {fact("p")}).rules} == {"p()."}
        assert reduct(g, {fact("q")}).rules == frozenset()

    def test_reduct_of_positive_program_unchanged(self):
        g = ground(parse_program("p(U) <- r(U). q(U) <- p(U)."), {fact("r", "a"), fact("r", "b")})
        for m in [set(), {fact("p", "a")}]:
            assert reduct(g, m).rules == g.rules

    def test_reduct_has_no_negative_atoms(self):
        g = ground(parse_program("p(U) <- r(U), not s(U). s(U) <- r(U), not p(U)."), {fact("r", "a")})
        assert all(not r.neg for r in reduct(g, {fact("p", "a")}).rules)

    def test_filtered_matches_full_grounding(self):
        p = parse_program("p(U) <- r(U), not s(U). s(U) <- r(U), not p(U). q(U, V) <- p(U), r(V).")
        i = {fact("r", "a"), fact("r", "b")}
        g = ground(p, i)
        for m in [i, i | {fact("p", "a")}, i | {fact("s", "a"), fact("p", "b")}]:
            full = semi_positive_fixpoint(reduct(g, m).program, i)
            assert reduct_fixpoint(p, i, m) == full


class TestStableModels:
    def test_single_negation(self):
        p = parse_program("p() <- not q().")
        assert is_stable_model(p, set(), {fact("p")})

    def test_odd_loop_has_none(self):
        p = parse_program("p() <- not p().")
        assert not is_stable_model(p, set(), {fact("p")})
        assert not is_stable_model(p, set(), set())

    def test_diff_reported(self):
        p = parse_program("p() <- not q().")
        res = is_stable_model(p, set(), {fact("q")})
        assert res.missing == {fact("q")} and res.unexpected == frozenset()
        res = is_stable_model(p, set(), set())
        assert res.missing == frozenset() and res.unexpected == {fact("p")}

    def test_stratified_model_is_only_stable_model(self):
        p = parse_program("a(U) <- r(U), not b(U). b(U) <- s(U).")
        i = {fact("r", 1), fact("r", 2), fact("s", 2)}
        atoms = [fact(r, v) for r in ("a", "b") for v in (1, 2)]
        models = stable_models_brute_force(p, i, atoms)
        assert models == [stratified_eval(p, i)]

    def test_even_loop_two_models(self):
        p = parse_program("p() <- not q(). q() <- not p().")
        models = stable_models_brute_force(p, set(), [fact("p"), fact("q")])
        assert sorted(map(sorted, models)) == [[fact("p")], [fact("q")]]

    def test_input_outside_model_rejected(self):
        p = parse_program("p(U) <- r(U).")
        assert not is_stable_model(p, {fact("r", "a")}, {fact("p", "a")})


class TestRuleObjects:
    def test_unsafe_rule(self):
        with pytest.raises(UnsafeRuleError):
            Rule(atom("t", U), (), (atom("s", U),))

    def test_vacuous_rule_is_safe(self):
        Rule(atom("t", U), (atom("s", U),), (atom("s", U),))

    def test_inconsistent_arity(self):
        with pytest.raises(SchemaError):
            parse_program("t(U) <- r(U). t(U, V) <- r(U), r(V).")

    def test_schema_idb_edb(self):
        p = parse_program("t(U) <- r(U, V), not s(V).")
        assert p.schema == {"t": 1, "r": 2, "s": 1}
        assert p.idb == {"t"} and p.edb == {"r", "s"}

    def test_comparison_constants_must_be_timestamps(self):
        with pytest.raises(SchemaError):
            parse_program('t(U) <- r(U), U < "a".')
        parse_program("t(U) <- r(U), U < 3.")

    def test_ground_program_record(self):
        p = parse_program("p(U) <- r(U).")
        g = ground(p, {fact("r", "a")})
        assert isinstance(g, GroundProgram) and g.source == p and g.base == {fact("r", "a")}
