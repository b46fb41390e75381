"""Dedalus programs: parsing, validation, subprograms and distributed inputs.

Surface syntax for the three rule kinds::

    reach(V) <- reach(U), edge(U, V).        % deductive
    reach(U)@next <- reach(U).               % inductive
    marked(U)@Y <- start(U), node(Y).        % asynchronous, addressee Y
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

from .datalog import (
    COMPARISONS,
    Atom,
    Fact,
    NotStratifiable,
    Program,
    Rule,
    Var,
    format_value,
    one_step,  # noqa: F401  re-exported for subprogram-level callers
    sorted_facts,
    stratify,
)
from .syntax import ParseError, parse_rules

RESERVED = frozenset({"all", "time", "tsucc", "before", "hasSender", "isSmaller", "hasMax", "rcvInf"}) | COMPARISONS
RESERVED_PREFIXES = ("cand_", "chosen_", "other_")


def is_reserved(pred: str) -> bool:
    return pred in RESERVED or pred.startswith(RESERVED_PREFIXES)


class RuleKind(enum.Enum):
    DEDUCTIVE = "deductive"
    INDUCTIVE = "inductive"
    ASYNC = "async"


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    code: str
    message: str
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.severity}: {self.message} at line {self.line}, column {self.col} [{self.code}]"


class DedalusError(ValueError):
    """Invalid Dedalus program; ``diagnostics`` lists every violation found."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class DedalusRule:
    kind: RuleKind
    head: Atom
    pos: tuple = ()
    neg: tuple = ()
    addressee: Var | None = None
    line: int = field(default=0, compare=False)

    @property
    def body_variables(self) -> frozenset:
        return frozenset().union(*(a.variables for a in self.pos + self.neg))

    def as_rule(self) -> Rule:
        """The rule with its annotation dropped."""
        return Rule(self.head, self.pos, self.neg)

    def __str__(self) -> str:
        head = str(self.head)
        if self.kind is RuleKind.INDUCTIVE:
            head += "@next"
        elif self.kind is RuleKind.ASYNC:
            head += f"@{self.addressee}"
        body = [str(a) for a in self.pos] + [f"not {a}" for a in self.neg]
        return f"{head} <- {', '.join(body)}." if body else f"{head}."


@dataclass(frozen=True)
class DedalusProgram:
    rules: tuple
    warnings: tuple = field(default=(), compare=False)

    @cached_property
    def schema(self) -> dict:
        out: dict[str, int] = {}
        for r in self.rules:
            for a in (r.head,) + r.pos + r.neg:
                out.setdefault(a.pred, len(a.args))
        return out

    @cached_property
    def idb(self) -> frozenset:
        return frozenset(r.head.pred for r in self.rules)

    @cached_property
    def edb(self) -> frozenset:
        return frozenset(self.schema) - self.idb

    def of_kind(self, kind: RuleKind) -> tuple:
        return tuple(r for r in self.rules if r.kind is kind)

    @cached_property
    def async_heads(self) -> tuple:
        """Async head relations in order of first appearance."""
        seen: dict[str, None] = {}
        for r in self.of_kind(RuleKind.ASYNC):
            seen.setdefault(r.head.pred)
        return tuple(seen)

    def __len__(self) -> int:
        return len(self.rules)

    def __str__(self) -> str:
        return "".join(f"{r}\n" for r in self.rules)


def _validate_rule(pr, kind: RuleKind) -> list[Diagnostic]:
    out = []
    where = (pr.line, pr.col)
    for a in (pr.head,) + pr.pos + pr.neg:
        if a.constants:
            out.append(Diagnostic(*where, "constant", f"constant in rule (Dedalus programs are constant-free): {a}"))
            break
    for a in (pr.head,) + pr.pos + pr.neg:
        if is_reserved(a.pred):
            out.append(Diagnostic(*where, "reserved", f"relation name {a.pred!r} is reserved"))
    bound = frozenset().union(*(a.variables for a in pr.pos))
    if kind is RuleKind.ASYNC and pr.annotation not in bound:
        out.append(Diagnostic(*where, "addressee", f"async addressee {pr.annotation} not in positive body"))
    used = frozenset().union(*(a.variables for a in (pr.head,) + pr.neg))
    if used - bound:
        names = ", ".join(sorted(v.name for v in used - bound))
        out.append(Diagnostic(*where, "unsafe", f"unsafe rule at line {pr.line}: {names} not in a positive body atom"))
    if not pr.pos:
        out.append(Diagnostic(*where, "no-positive", "rule has no positive body atom", "warning"))
    return out


def parse_dedalus(text: str) -> DedalusProgram:
    """Parse and validate Dedalus source text.

    Raises :class:`DedalusError` listing every violated invariant.
    """
    try:
        parsed = parse_rules(text)
    except ParseError as e:
        raise DedalusError([Diagnostic(e.line, e.col, "syntax", e.reason)]) from None
    diags: list[Diagnostic] = []
    rules = []
    arity: dict[str, tuple[int, int]] = {}
    for pr in parsed:
        if pr.annotation is None:
            kind = RuleKind.DEDUCTIVE
        elif pr.annotation == "next":
            kind = RuleKind.INDUCTIVE
        else:
            kind = RuleKind.ASYNC
        diags += _validate_rule(pr, kind)
        for a in (pr.head,) + pr.pos + pr.neg:
            k, line = arity.setdefault(a.pred, (len(a.args), pr.line))
            if k != len(a.args):
                diags.append(Diagnostic(pr.line, pr.col, "arity", f"relation {a.pred} used with arity {len(a.args)}, earlier {k} (line {line})"))
        addressee = pr.annotation if kind is RuleKind.ASYNC else None
        rules.append(DedalusRule(kind, pr.head, pr.pos, pr.neg, addressee, pr.line))
    errors = [d for d in diags if d.severity == "error"]
    if not errors:
        deduc = Program(tuple(r.as_rule() for r in rules if r.kind is RuleKind.DEDUCTIVE))
        try:
            stratify(deduc)
        except NotStratifiable as e:
            line = min((r.line for r in rules if r.kind is RuleKind.DEDUCTIVE and r.head.pred in e.cycle), default=1)
            errors.append(Diagnostic(line, 1, "stratification", f"deductive rules are not stratifiable: {e}"))
        deductive_heads = {r.head.pred for r in rules if r.kind is RuleKind.DEDUCTIVE}
        for r in rules:
            if r.kind is RuleKind.ASYNC and r.head.pred in deductive_heads:
                diags.append(Diagnostic(r.line, 1, "async-deductive", f"async head {r.head.pred} is also a deductive head", "warning"))
    if errors:
        raise DedalusError(errors)
    warnings = tuple(d for d in diags if d.severity == "warning")
    return DedalusProgram(tuple(rules), warnings)


def check_dedalus(text: str) -> list[Diagnostic]:
    """All diagnostics for ``text``; empty of errors iff the program is valid."""
    try:
        return list(parse_dedalus(text).warnings)
    except DedalusError as e:
        return e.diagnostics


def split_subprograms(program: DedalusProgram) -> tuple[Program, Program, Program]:
    """Deductive, inductive and asynchronous subprograms.

    Async heads get the addressee prepended: ``T(Y, u) <- body``.
    """
    deduc, induc, asyn = [], [], []
    for r in program.rules:
        if r.kind is RuleKind.DEDUCTIVE:
            deduc.append(r.as_rule())
        elif r.kind is RuleKind.INDUCTIVE:
            induc.append(r.as_rule())
        else:
            head = Atom(r.head.pred, (r.addressee,) + r.head.args)
            asyn.append(Rule(head, r.pos, r.neg))
    return Program(tuple(deduc)), Program(tuple(induc)), Program.unchecked(asyn)


# --------------------------------------------------------------------------
# distributed inputs


class InstanceError(ValueError):
    pass


@dataclass(frozen=True)
class DistributedInstance:
    """A finite instance per node of a nonempty network."""

    nodes: tuple
    facts: Mapping

    def __post_init__(self) -> None:
        if not self.nodes:
            raise InstanceError("network must be nonempty")
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "facts", {x: frozenset(self.facts.get(x, ())) for x in self.nodes})

    def __getitem__(self, node) -> frozenset:
        return self.facts[node]

    def to_json(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "facts": {x: [[f.pred, *f.args] for f in sorted_facts(self.facts[x])] for x in self.nodes},
        }


def parse_instance(doc: str | dict, program: DedalusProgram | None = None) -> DistributedInstance:
    """Build a distributed instance from its JSON document.

    With a program given, every fact must be over its edb relations with the
    right arity.
    """
    if isinstance(doc, str):
        doc = json.loads(doc)
    nodes = doc.get("nodes")
    if not isinstance(nodes, list) or not nodes:
        raise InstanceError("'nodes' must be a nonempty list")
    if len(set(nodes)) != len(nodes):
        raise InstanceError("duplicate node ids")
    raw = doc.get("facts", {})
    for x in raw:
        if x not in nodes:
            raise InstanceError(f"facts given for node {x!r} missing from the network")
    facts = {}
    for x in nodes:
        local = set()
        for entry in raw.get(x, []):
            if not isinstance(entry, list) or not entry or not isinstance(entry[0], str):
                raise InstanceError(f"malformed fact {entry!r} at node {x!r}")
            f = Fact(entry[0], tuple(entry[1:]))
            if program is not None:
                _check_input_fact(f, program)
            local.add(f)
        facts[x] = local
    return DistributedInstance(tuple(nodes), facts)


def _check_input_fact(f: Fact, program: DedalusProgram) -> None:
    if f.pred not in program.schema:
        raise InstanceError(f"unknown relation {f.pred!r} in input fact {f}")
    if f.pred in program.idb:
        raise InstanceError(f"input fact {f} is over idb relation {f.pred!r}")
    k = program.schema[f.pred]
    if len(f.args) != k:
        raise InstanceError(f"arity mismatch for {f}: expected {k}")
    for a in f.args:
        if not isinstance(a, (str, int)) or isinstance(a, bool):
            raise InstanceError(f"unsupported value {a!r} in {f}")


def format_instance_fact(f: Fact) -> str:
    return f"{f.pred}({', '.join(format_value(a) for a in f.args)})"


def node_facts(instance: DistributedInstance) -> Iterable[tuple]:
    for x in instance.nodes:
        for f in sorted_facts(instance[x]):
            yield x, f
