"""Datalog with negation.

Syntax objects (facts, atoms, rules, programs), semi-positive and stratified
evaluation, grounding, the reduct, and stable-model verification.

Instances are plain ``frozenset``/``set`` collections of :class:`Fact`.
Values are ``str`` (node ids and symbols) or ``int`` (timestamps).
"""
from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Iterator, NamedTuple, Union

import networkx as nx

Value = Union[str, int]

# relations that compare timestamps; their facts come from the time instance
LESS = "<"
NOT_EQUAL = "!="
COMPARISONS = frozenset({LESS, NOT_EQUAL})


class DatalogError(ValueError):
    """Base class for errors raised by this module."""


class SchemaError(DatalogError):
    pass


class UnsafeRuleError(DatalogError):
    pass


class NotSemiPositive(DatalogError):
    pass


class NotStratifiable(DatalogError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__("negative dependency cycle: " + " -> ".join(cycle + cycle[:1]))


@dataclass(frozen=True, order=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


Term = Union[Var, Value]


def _is_timestamp(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool) and v >= 0


def value_key(v: Value) -> tuple:
    # ints sort before strings; keeps mixed tuples comparable
    return (0, v, "") if isinstance(v, int) else (1, 0, v)


def format_value(v: Value) -> str:
    if isinstance(v, int):
        return str(v)
    if v and v[0].islower() and v.replace("_", "a").isalnum() and v != "not":
        return v
    return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _format_term(t: Term) -> str:
    return t.name if isinstance(t, Var) else format_value(t)


def _format_call(pred: str, args: tuple) -> str:
    if pred in COMPARISONS and len(args) == 2:
        return f"{_format_term(args[0])} {pred} {_format_term(args[1])}"
    return f"{pred}({', '.join(_format_term(a) for a in args)})"


class Fact(NamedTuple):
    pred: str
    args: tuple

    def __str__(self) -> str:
        return _format_call(self.pred, self.args)

    def sort_key(self) -> tuple:
        return (self.pred, len(self.args), tuple(value_key(a) for a in self.args))


def fact(pred: str, *args: Value) -> Fact:
    return Fact(pred, tuple(args))


def sorted_facts(facts: Iterable[Fact]) -> list[Fact]:
    return sorted(facts, key=Fact.sort_key)


def adom(facts: Iterable[Fact]) -> set:
    """Active domain: every value occurring in ``facts``."""
    return {a for f in facts for a in f.args}


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple = ()

    @property
    def variables(self) -> frozenset:
        return frozenset(a for a in self.args if isinstance(a, Var))

    @property
    def constants(self) -> frozenset:
        return frozenset(a for a in self.args if not isinstance(a, Var))

    @property
    def is_ground(self) -> bool:
        return not self.variables

    def ground(self, binding: dict) -> Fact:
        return Fact(self.pred, tuple(binding[a] if isinstance(a, Var) else a for a in self.args))

    def as_fact(self) -> Fact:
        if not self.is_ground:
            raise DatalogError(f"atom {self} is not ground")
        return Fact(self.pred, self.args)

    def __str__(self) -> str:
        return _format_call(self.pred, self.args)


def atom(pred: str, *args: Term) -> Atom:
    return Atom(pred, tuple(args))


@dataclass(frozen=True)
class Rule:
    """A rule as a triple (head, positive body atoms, negative body atoms).

    Body order is kept for printing only; it carries no meaning.
    """

    head: Atom
    pos: tuple = ()
    neg: tuple = ()

    def __post_init__(self) -> None:
        bound = set().union(*(a.variables for a in self.pos)) if self.pos else set()
        free = self.variables - bound
        if free:
            names = ", ".join(sorted(v.name for v in free))
            raise UnsafeRuleError(f"unsafe rule {self}: {names} not in a positive body atom")
        for a in self.atoms:
            if a.pred in COMPARISONS and not all(_is_timestamp(c) for c in a.constants):
                raise SchemaError(f"comparison {a} applied to a non-timestamp constant")

    @property
    def variables(self) -> frozenset:
        out = set(self.head.variables)
        for a in self.pos + self.neg:
            out |= a.variables
        return frozenset(out)

    @property
    def atoms(self) -> tuple:
        return (self.head,) + self.pos + self.neg

    @property
    def is_positive(self) -> bool:
        return not self.neg

    @property
    def is_ground(self) -> bool:
        return not self.variables

    def substitute(self, binding: dict) -> "Rule":
        def sub(a: Atom) -> Atom:
            return Atom(a.pred, tuple(binding.get(t, t) if isinstance(t, Var) else t for t in a.args))

        return Rule(sub(self.head), tuple(map(sub, self.pos)), tuple(map(sub, self.neg)))

    def __str__(self) -> str:
        body = [str(a) for a in self.pos] + [f"not {a}" for a in self.neg]
        if not body:
            return f"{self.head}."
        return f"{self.head} <- {', '.join(body)}."


@dataclass(frozen=True)
class Program:
    rules: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "rules", tuple(self.rules))
        self.schema  # arity consistency

    @classmethod
    def unchecked(cls, rules: Iterable[Rule]) -> "Program":
        """A program whose heads may use a relation at a different arity than
        its bodies do, as when message heads carry an extra addressee column."""
        p = object.__new__(cls)
        object.__setattr__(p, "rules", tuple(rules))
        return p

    @cached_property
    def schema(self) -> dict:
        """Smallest schema the program is over: relation name -> arity."""
        out: dict[str, int] = {}
        for r in self.rules:
            for a in r.atoms:
                k = out.setdefault(a.pred, len(a.args))
                if k != len(a.args):
                    raise SchemaError(f"relation {a.pred} used with arities {k} and {len(a.args)}")
        return out

    @cached_property
    def idb(self) -> frozenset:
        return frozenset(r.head.pred for r in self.rules)

    @cached_property
    def edb(self) -> frozenset:
        return frozenset(self.schema) - self.idb

    @cached_property
    def constants(self) -> frozenset:
        return frozenset(c for r in self.rules for a in r.atoms for c in a.constants)

    @property
    def is_positive(self) -> bool:
        return all(r.is_positive for r in self.rules)

    @property
    def is_semi_positive(self) -> bool:
        return all(a.pred not in self.idb for r in self.rules for a in r.neg)

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def __str__(self) -> str:
        return "\n".join(str(r) for r in self.rules)


def check_schema(program: Program, facts: Iterable[Fact]) -> None:
    """Raise :class:`SchemaError` if a fact disagrees with the program's arity.

    Facts over relations outside the program's schema are tolerated; they pass
    through evaluation untouched.
    """
    schema = program.schema
    for f in facts:
        if f.pred in COMPARISONS and not all(_is_timestamp(a) for a in f.args):
            raise SchemaError(f"comparison fact {f} over non-timestamp values")
        k = schema.get(f.pred)
        if k is not None and k != len(f.args):
            raise SchemaError(f"fact {f} has arity {len(f.args)}, expected {k}")


# --------------------------------------------------------------------------
# evaluation engine


class _Store:
    """Facts grouped by relation, with hash indexes built on demand."""

    def __init__(self, facts: Iterable[Fact] = ()):
        self.rows: dict[str, set] = defaultdict(set)
        self._indexes: dict[tuple, dict] = {}
        for f in facts:
            self.add(f)

    def add(self, f: Fact) -> bool:
        rows = self.rows[f.pred]
        if f.args in rows:
            return False
        rows.add(f.args)
        for (pred, positions), table in self._indexes.items():
            if pred == f.pred:
                table[tuple(f.args[p] for p in positions)].append(f.args)
        return True

    def __contains__(self, f: Fact) -> bool:
        return f.args in self.rows.get(f.pred, ())

    def size(self, pred: str) -> int:
        return len(self.rows.get(pred, ()))

    def lookup(self, pred: str, positions: tuple, key: tuple):
        if not positions:
            return self.rows.get(pred, ())
        if len(positions) == len(key) and pred in self.rows and len(positions) == self._arity(pred):
            return (key,) if key in self.rows[pred] else ()
        table = self._indexes.get((pred, positions))
        if table is None:
            table = defaultdict(list)
            for args in self.rows.get(pred, ()):
                table[tuple(args[p] for p in positions)].append(args)
            self._indexes[(pred, positions)] = table
        return table.get(key, ())

    def _arity(self, pred: str) -> int:
        for args in self.rows[pred]:
            return len(args)
        return -1

    def facts(self) -> set:
        return {Fact(p, args) for p, rows in self.rows.items() for args in rows}


def _bound_key(a: Atom, binding: dict) -> tuple[tuple, tuple]:
    positions, key = [], []
    for i, t in enumerate(a.args):
        if isinstance(t, Var):
            if t in binding:
                positions.append(i)
                key.append(binding[t])
        else:
            positions.append(i)
            key.append(t)
    return tuple(positions), tuple(key)


def _extend(a: Atom, args: tuple, binding: dict) -> dict | None:
    new = None
    for t, v in zip(a.args, args):
        if isinstance(t, Var):
            cur = binding.get(t) if new is None else new.get(t)
            if cur is None:
                if new is None:
                    new = dict(binding)
                new[t] = v
            elif cur != v:
                return None
        elif t != v:
            return None
    return binding if new is None else new


def _solve(atoms: list, sources: list, binding: dict) -> Iterator[dict]:
    if not atoms:
        yield binding
        return
    # most-bound atom first, smaller relation on ties
    best, best_score = 0, None
    for i, a in enumerate(atoms):
        positions, _ = _bound_key(a, binding)
        score = (-len(positions), sources[i].size(a.pred))
        if best_score is None or score < best_score:
            best, best_score = i, score
    a, src = atoms[best], sources[best]
    rest = atoms[:best] + atoms[best + 1:]
    rest_src = sources[:best] + sources[best + 1:]
    positions, key = _bound_key(a, binding)
    for args in src.lookup(a.pred, positions, key):
        if len(args) != len(a.args):
            continue
        b = _extend(a, args, binding)
        if b is not None:
            yield from _solve(rest, rest_src, b)


NegationOracle = Callable[[Fact], bool]


def _fire(rule: Rule, full: _Store, holds: NegationOracle, delta: _Store | None = None) -> set:
    """Heads of all satisfying valuations of ``rule``.

    Positive atoms match against ``full``; a negative atom blocks a valuation
    when ``holds`` says its ground fact is present. With ``delta`` given, only
    valuations using at least one delta fact are produced.
    """
    out = set()
    pos = list(rule.pos)
    if delta is None:
        plans = [[full] * len(pos)]
    else:
        plans = []
        for i, a in enumerate(pos):
            if delta.size(a.pred):
                plans.append([delta if j == i else full for j in range(len(pos))])
    for sources in plans:
        for b in _solve(pos, sources, {}):
            if any(holds(n.ground(b)) for n in rule.neg):
                continue
            out.add(rule.head.ground(b))
    return out


def least_fixpoint(rules: Iterable[Rule], base: Iterable[Fact], holds: NegationOracle | None = None) -> set:
    """Least fixpoint of the immediate consequence operator, semi-naively.

    ``holds`` decides negative atoms. When omitted, negation is read off the
    instance under construction, which is sound only for negation on relations
    that no rule derives (semi-positive programs).
    """
    rules = list(rules)
    store = _Store(base)
    if holds is None:
        holds = store.__contains__
    new = set()
    for r in rules:
        new |= _fire(r, store, holds)
    delta_facts = [f for f in new if f not in store]
    while delta_facts:
        delta = _Store()
        for f in delta_facts:
            store.add(f)
            delta.add(f)
        new = set()
        for r in rules:
            if r.pos:
                new |= _fire(r, store, holds, delta)
        delta_facts = [f for f in new if f not in store]
    return store.facts()


def one_step(program: Program, instance: Iterable[Fact]) -> frozenset:
    """Facts derived by all satisfying valuations in one step; ``instance`` itself excluded."""
    store = _Store(instance)
    out = set()
    for r in program.rules:
        out |= _fire(r, store, store.__contains__)
    return frozenset(out)


def immediate_consequence(program: Program, instance: Iterable[Fact]) -> frozenset:
    instance = frozenset(instance)
    check_schema(program, instance)
    return instance | one_step(program, instance)


def semi_positive_fixpoint(program: Program, instance: Iterable[Fact]) -> frozenset:
    if not program.is_semi_positive:
        bad = sorted({a.pred for r in program.rules for a in r.neg if a.pred in program.idb})
        raise NotSemiPositive(f"negation on derived relations: {', '.join(bad)}")
    instance = frozenset(instance)
    check_schema(program, instance)
    return frozenset(least_fixpoint(program.rules, instance))


# --------------------------------------------------------------------------
# stratification


def dependency_graph(program: Program) -> nx.DiGraph:
    """Edges body relation -> head relation over idb, labelled ``negative``."""
    g = nx.DiGraph()
    g.add_nodes_from(sorted(program.idb))
    for r in program.rules:
        for a, negative in [(a, False) for a in r.pos] + [(a, True) for a in r.neg]:
            if a.pred not in program.idb:
                continue
            if g.has_edge(a.pred, r.head.pred):
                g[a.pred][r.head.pred]["negative"] |= negative
            else:
                g.add_edge(a.pred, r.head.pred, negative=negative)
    return g


def stratify(program: Program) -> dict[str, int]:
    """Stratum numbers as longest negative-edge distance over the condensed graph.

    The result is deterministic and contiguous from 1.
    """
    g = dependency_graph(program)
    cond = nx.condensation(g)
    members = nx.get_node_attributes(cond, "members")
    for c, nodes in sorted(members.items(), key=lambda kv: sorted(kv[1])):
        for u, v in sorted(g.subgraph(nodes).edges()):
            if g[u][v]["negative"]:
                back = nx.shortest_path(g.subgraph(nodes), v, u)
                raise NotStratifiable([u] + back[:-1])
    level: dict[int, int] = {}
    for c in nx.topological_sort(cond):
        best = 1
        for p in cond.predecessors(c):
            weight = 0
            for u in members[p]:
                for v in members[c]:
                    if g.has_edge(u, v) and g[u][v]["negative"]:
                        weight = 1
            best = max(best, level[p] + weight)
        level[c] = best
    return {r: level[cond.graph["mapping"][r]] for r in sorted(program.idb)}


def is_valid_stratification(program: Program, strata: dict[str, int]) -> bool:
    for r in program.rules:
        t = strata[r.head.pred]
        if any(a.pred in strata and strata[a.pred] > t for a in r.pos):
            return False
        if any(a.pred in strata and strata[a.pred] >= t for a in r.neg):
            return False
    return True


def stratified_eval(program: Program, instance: Iterable[Fact], strata: dict[str, int] | None = None) -> frozenset:
    """Output under the stratified semantics; ``instance`` may already hold idb facts."""
    if strata is None:
        strata = stratify(program)
    current = frozenset(instance)
    check_schema(program, current)
    for k in sorted(set(strata.values())):
        layer = [r for r in program.rules if strata[r.head.pred] == k]
        current = frozenset(least_fixpoint(layer, current))
    return current


# --------------------------------------------------------------------------
# grounding, reduct, stable models


@dataclass(frozen=True)
class GroundProgram:
    rules: frozenset
    source: Program
    base: frozenset


@dataclass(frozen=True)
class Reduct:
    rules: frozenset

    @property
    def program(self) -> Program:
        return Program(tuple(sorted(self.rules, key=str)))


def iter_ground_rules(program: Program, instance: Iterable[Fact]) -> Iterator[Rule]:
    """Every ground rule from valuations into adom(instance) plus program constants."""
    domain = sorted(adom(instance) | set(program.constants), key=value_key)
    for r in program.rules:
        vs = sorted(r.variables)
        for vals in itertools.product(domain, repeat=len(vs)):
            yield r.substitute(dict(zip(vs, vals)))


def ground(program: Program, instance: Iterable[Fact]) -> GroundProgram:
    instance = frozenset(instance)
    return GroundProgram(frozenset(iter_ground_rules(program, instance)), program, instance)


def reduct(g: GroundProgram, model: Iterable[Fact]) -> Reduct:
    model = frozenset(model)
    kept = set()
    for r in g.rules:
        if any(n.as_fact() in model for n in r.neg):
            continue
        kept.add(Rule(r.head, r.pos))
    return Reduct(frozenset(kept))


def reduct_fixpoint(program: Program | Iterable[Rule], instance: Iterable[Fact], model: Iterable[Fact]) -> set:
    """Output of the reduct of the ground program w.r.t. ``model`` on ``instance``.

    Equivalent to grounding over adom(instance) and the program constants,
    but only valuations whose positive body is matched are ever built.
    Negative atoms are decided against ``model``.
    """
    model = model if isinstance(model, (set, frozenset)) else frozenset(model)
    rules = program.rules if isinstance(program, Program) else tuple(program)
    return least_fixpoint(rules, instance, model.__contains__)


@dataclass(frozen=True)
class StabilityResult:
    stable: bool
    missing: frozenset = field(default_factory=frozenset)
    unexpected: frozenset = field(default_factory=frozenset)

    def __bool__(self) -> bool:
        return self.stable


def is_stable_model(program: Program, instance: Iterable[Fact], model: Iterable[Fact]) -> StabilityResult:
    """Check ``model`` against the reduct fixpoint.

    ``missing`` holds facts of the model the fixpoint does not derive,
    ``unexpected`` facts the fixpoint derives outside the model.
    """
    model = frozenset(model)
    derived = reduct_fixpoint(program, instance, model)
    missing = frozenset(model - derived)
    unexpected = frozenset(derived - model)
    return StabilityResult(not missing and not unexpected, missing, unexpected)


def stable_models_brute_force(program: Program, instance: Iterable[Fact], candidates: Iterable[Fact]) -> list[frozenset]:
    """All stable models of the form ``instance`` united with a subset of ``candidates``.

    Exponential; meant for universes of a handful of atoms.
    """
    instance = frozenset(instance)
    pool = sorted(set(candidates) - instance, key=Fact.sort_key)
    out = []
    for k in range(len(pool) + 1):
        for extra in itertools.combinations(pool, k):
            m = instance | frozenset(extra)
            if is_stable_model(program, instance, m):
                out.append(m)
    return out
