"""Rewriting Dedalus programs into pure Datalog with negation.

Every relation of the source program gains two leading columns, a location
(node id) and a timestamp (local step). Three constructions are provided:

``choice``
    deductive and inductive rules are lifted, every asynchronous rule
    produces candidate arrival timestamps, and a chosen/other pair picks
    exactly one of them under the stable-model semantics.
``causal``
    additionally maintains a happens-before relation and forbids sending a
    message into the causal past of the sender.
``causfin``
    additionally forbids a node step from receiving messages from infinitely
    many send steps of one sender.

Time is bounded: timestamps range over ``0..t_max``.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

from .datalog import LESS, NOT_EQUAL, Atom, Fact, Program, Rule, Var, fact
from .frontend import DedalusProgram, DedalusRule, DistributedInstance, RuleKind

ALL = "all"
TIME = "time"
TSUCC = "tsucc"
BEFORE = "before"
HAS_SENDER = "hasSender"
IS_SMALLER = "isSmaller"
HAS_MAX = "hasMax"
RCV_INF = "rcvInf"


def cand(r: str) -> str:
    return f"cand_{r}"


def chosen(r: str) -> str:
    return f"chosen_{r}"


def other(r: str) -> str:
    return f"other_{r}"


class Mode(str, enum.Enum):
    CHOICE = "choice"
    CAUSAL = "causal"
    CAUSFIN = "causfin"


# --------------------------------------------------------------------------
# time and input encoding


def check_window(t_max: int) -> int:
    if not isinstance(t_max, int) or t_max < 1:
        raise ValueError(f"time window must be an integer >= 1, got {t_max!r}")
    return t_max


def time_instance(t_max: int) -> frozenset:
    """Timestamps ``0..t_max`` with successor, ``<`` and ``!=``."""
    check_window(t_max)
    ts = range(t_max + 1)
    out = {fact(TIME, s) for s in ts}
    out |= {fact(TSUCC, s, s + 1) for s in ts[:-1]}
    for s, t in itertools.product(ts, ts):
        if s < t:
            out.add(fact(LESS, s, t))
        if s != t:
            out.add(fact(NOT_EQUAL, s, t))
    return frozenset(out)


def lift(facts: Iterable[Fact], node, step: int) -> set:
    """Prefix every fact with a location and a timestamp."""
    return {Fact(f.pred, (node, step) + f.args) for f in facts}


def decl_input(h: DistributedInstance, t_max: int) -> frozenset:
    """Input facts replicated at every timestamp, plus network and time facts."""
    out = set(time_instance(t_max))
    for x in h.nodes:
        out.add(fact(ALL, x))
        for s in range(t_max + 1):
            out |= lift(h[x], x, s)
    return frozenset(out)


# --------------------------------------------------------------------------
# rule construction


class _Fresh:
    """Variable names not used by a given rule."""

    def __init__(self, taken: Iterable[Var]):
        self.taken = {v.name for v in taken}

    def __call__(self, base: str) -> Var:
        name = base
        while name in self.taken:
            name += "_"
        self.taken.add(name)
        return Var(name)


def _lift_atom(a: Atom, x: Var, s: Var) -> Atom:
    return Atom(a.pred, (x, s) + a.args)


def _lifted_body(r: DedalusRule, x: Var, s: Var) -> tuple[tuple, tuple]:
    pos = tuple(_lift_atom(a, x, s) for a in r.pos)
    neg = tuple(_lift_atom(a, x, s) for a in r.neg)
    if not pos:
        # keeps the lifted rule safe when the source body is purely negative
        pos = (Atom(ALL, (x,)), Atom(TIME, (s,)))
    return pos, neg


def _rule_vars(r: DedalusRule) -> set:
    out = set(r.head.variables)
    for a in r.pos + r.neg:
        out |= a.variables
    return out


def deductive_rule(r: DedalusRule) -> Rule:
    fresh = _Fresh(_rule_vars(r))
    x, s = fresh("X"), fresh("S")
    pos, neg = _lifted_body(r, x, s)
    return Rule(_lift_atom(r.head, x, s), pos, neg)


def inductive_rule(r: DedalusRule) -> Rule:
    fresh = _Fresh(_rule_vars(r))
    x, s, t = fresh("X"), fresh("S"), fresh("T")
    pos, neg = _lifted_body(r, x, s)
    return Rule(_lift_atom(r.head, x, t), pos + (Atom(TSUCC, (s, t)),), neg)


def candidate_rule(r: DedalusRule, causal: bool) -> Rule:
    fresh = _Fresh(_rule_vars(r))
    x, s, t = fresh("X"), fresh("S"), fresh("T")
    y = r.addressee
    pos, neg = _lifted_body(r, x, s)
    pos += (Atom(ALL, (y,)), Atom(TIME, (t,)))
    if causal:
        neg += (Atom(BEFORE, (y, t, x, s)),)
    return Rule(Atom(cand(r.head.pred), (x, s, y, t) + r.head.args), pos, neg)


def _generic_vars(arity: int) -> tuple:
    x, s, y, t, t1 = (Var(n) for n in ("X", "S", "Y", "T", "T1"))
    w = tuple(Var(f"W{k}") for k in range(1, arity + 1))
    return x, s, y, t, t1, w


def chosen_rule(pred: str, arity: int) -> Rule:
    x, s, y, t, _, w = _generic_vars(arity)
    args = (x, s, y, t) + w
    return Rule(Atom(chosen(pred), args), (Atom(cand(pred), args),), (Atom(other(pred), args),))


def other_rule(pred: str, arity: int) -> Rule:
    x, s, y, t, t1, w = _generic_vars(arity)
    args = (x, s, y, t) + w
    return Rule(
        Atom(other(pred), args),
        (Atom(cand(pred), args), Atom(chosen(pred), (x, s, y, t1) + w), Atom(NOT_EQUAL, (t, t1))),
    )


def delivery_rule(pred: str, arity: int) -> Rule:
    x, s, y, t, _, w = _generic_vars(arity)
    return Rule(Atom(pred, (y, t) + w), (Atom(chosen(pred), (x, s, y, t) + w),))


def step_order_rule() -> Rule:
    x, s, t = Var("X"), Var("S"), Var("T")
    return Rule(Atom(BEFORE, (x, s, x, t)), (Atom(ALL, (x,)), Atom(TSUCC, (s, t))))


def transitive_order_rule() -> Rule:
    x, s, y, t, z, u = (Var(n) for n in ("X", "S", "Y", "T", "Z", "U"))
    return Rule(Atom(BEFORE, (x, s, y, t)), (Atom(BEFORE, (x, s, z, u)), Atom(BEFORE, (z, u, y, t))))


def send_order_rule(pred: str, arity: int) -> Rule:
    x, s, y, t, _, w = _generic_vars(arity)
    return Rule(Atom(BEFORE, (x, s, y, t)), (Atom(chosen(pred), (x, s, y, t) + w),))


def has_sender_rule(pred: str, arity: int) -> Rule:
    x, s, y, t, _, w = _generic_vars(arity)
    return Rule(Atom(HAS_SENDER, (y, t, x, s)), (Atom(chosen(pred), (x, s, y, t) + w),), (Atom(RCV_INF, (y, t)),))


def is_smaller_rule() -> Rule:
    y, t, x, s, s1 = (Var(n) for n in ("Y", "T", "X", "S", "S1"))
    return Rule(
        Atom(IS_SMALLER, (y, t, x, s)),
        (Atom(HAS_SENDER, (y, t, x, s)), Atom(HAS_SENDER, (y, t, x, s1)), Atom(LESS, (s, s1))),
    )


def has_max_rule() -> Rule:
    y, t, x, s = (Var(n) for n in ("Y", "T", "X", "S"))
    return Rule(Atom(HAS_MAX, (y, t, x)), (Atom(HAS_SENDER, (y, t, x, s)),), (Atom(IS_SMALLER, (y, t, x, s)),))


def receive_infinite_rule() -> Rule:
    y, t, x, s = (Var(n) for n in ("Y", "T", "X", "S"))
    return Rule(Atom(RCV_INF, (y, t)), (Atom(HAS_SENDER, (y, t, x, s)),), (Atom(HAS_MAX, (y, t, x)),))


# --------------------------------------------------------------------------
# whole-program constructions


@dataclass(frozen=True)
class TransformedRule:
    rule: Rule
    form: str
    source: DedalusRule | str | None = None

    def __str__(self) -> str:
        return str(self.rule)


@dataclass(frozen=True)
class TransformedProgram:
    mode: Mode
    entries: tuple
    origin: DedalusProgram

    @cached_property
    def program(self) -> Program:
        return Program(tuple(e.rule for e in self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def forms(self) -> dict:
        out: dict[str, int] = {}
        for e in self.entries:
            out[e.form] = out.get(e.form, 0) + 1
        return out

    def text(self) -> str:
        return "".join(f"{e.rule}\n" for e in self.entries)

    def __str__(self) -> str:
        return self.text()


def transform(d: DedalusProgram, mode: Mode | str) -> TransformedProgram:
    mode = Mode(mode)
    causal = mode is not Mode.CHOICE
    entries = []
    for r in d.rules:
        if r.kind is RuleKind.DEDUCTIVE:
            entries.append(TransformedRule(deductive_rule(r), "deductive", r))
        elif r.kind is RuleKind.INDUCTIVE:
            entries.append(TransformedRule(inductive_rule(r), "inductive", r))
        else:
            entries.append(TransformedRule(candidate_rule(r, causal), "candidate", r))
    for pred in d.async_heads:
        k = d.schema[pred]
        entries.append(TransformedRule(chosen_rule(pred, k), "chosen", pred))
        entries.append(TransformedRule(other_rule(pred, k), "other", pred))
        entries.append(TransformedRule(delivery_rule(pred, k), "delivery", pred))
        if causal:
            entries.append(TransformedRule(send_order_rule(pred, k), "send-order", pred))
        if mode is Mode.CAUSFIN:
            entries.append(TransformedRule(has_sender_rule(pred, k), "has-sender", pred))
    if causal:
        entries.append(TransformedRule(step_order_rule(), "step-order"))
        entries.append(TransformedRule(transitive_order_rule(), "transitive-order"))
    if mode is Mode.CAUSFIN:
        entries.append(TransformedRule(is_smaller_rule(), "is-smaller"))
        entries.append(TransformedRule(has_max_rule(), "has-max"))
        entries.append(TransformedRule(receive_infinite_rule(), "receive-infinite"))
    return TransformedProgram(mode, tuple(entries), d)


def transform_choice(d: DedalusProgram) -> TransformedProgram:
    return transform(d, Mode.CHOICE)


def transform_causal(d: DedalusProgram) -> TransformedProgram:
    return transform(d, Mode.CAUSAL)


def transform_causfin(d: DedalusProgram) -> TransformedProgram:
    return transform(d, Mode.CAUSFIN)


def aux_relations(mode: Mode | str, async_heads: Iterable[str]) -> frozenset:
    """Auxiliary relation names a program in ``mode`` may mention."""
    mode = Mode(mode)
    out = {ALL, TIME, TSUCC, LESS, NOT_EQUAL}
    for r in async_heads:
        out |= {cand(r), chosen(r), other(r)}
    if mode is not Mode.CHOICE:
        out.add(BEFORE)
    if mode is Mode.CAUSFIN:
        out |= {HAS_SENDER, IS_SMALLER, HAS_MAX, RCV_INF}
    return frozenset(out)
