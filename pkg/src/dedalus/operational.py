"""Transition-system execution of Dedalus programs.

A configuration holds, per node, a state instance and a buffer of tagged
messages. A transition activates one node: it reads its state plus the
delivered messages, computes the deductive fixpoint, keeps the inductive
consequences (and its input) as next state, and sends the asynchronous
consequences to their addressees, tagged with the transition ordinal.
"""
from __future__ import annotations

import enum
import json
import random
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple

from .datalog import Fact, one_step, sorted_facts, stratified_eval, stratify, value_key
from .frontend import DedalusProgram, DistributedInstance, split_subprograms
from .transform import lift


class TaggedMessage(NamedTuple):
    tag: int
    fact: Fact

    def sort_key(self) -> tuple:
        return (self.tag, self.fact.sort_key())


def _freeze(mapping: Mapping) -> dict:
    return {x: frozenset(v) for x, v in mapping.items()}


@dataclass(frozen=True)
class Configuration:
    state: Mapping
    buffer: Mapping

    def __post_init__(self) -> None:
        object.__setattr__(self, "state", _freeze(self.state))
        object.__setattr__(self, "buffer", _freeze(self.buffer))

    @property
    def nodes(self) -> tuple:
        return tuple(self.state)


class InvalidDelivery(ValueError):
    pass


@dataclass(frozen=True)
class TransitionRecord:
    source: Configuration
    active: object
    delivered: frozenset
    tag: int
    target: Configuration
    deductive_fixpoint: frozenset
    sent: Mapping

    @property
    def is_heartbeat(self) -> bool:
        return not self.delivered


class CompiledProgram:
    """Subprograms of a Dedalus program, ready for repeated transitions."""

    def __init__(self, program: DedalusProgram):
        self.source = program
        self.deductive, self.inductive, self.asynchronous = split_subprograms(program)
        self.strata = stratify(self.deductive)


def _compiled(program) -> CompiledProgram:
    return program if isinstance(program, CompiledProgram) else CompiledProgram(program)


def start_configuration(program: DedalusProgram, h: DistributedInstance) -> Configuration:
    return Configuration({x: h[x] for x in h.nodes}, {x: () for x in h.nodes})


def step(
    program: DedalusProgram | CompiledProgram,
    h: DistributedInstance,
    cnf: Configuration,
    x,
    m: Iterable[TaggedMessage],
    i: int,
) -> TransitionRecord:
    """One transition with active node ``x``, delivered messages ``m`` and send-tag ``i``."""
    cp = _compiled(program)
    m = frozenset(m)
    if not m <= cnf.buffer[x]:
        extra = sorted(m - cnf.buffer[x], key=TaggedMessage.sort_key)
        raise InvalidDelivery(f"messages not in the buffer of {x}: {extra}")
    received = {msg.fact for msg in m}
    d = stratified_eval(cp.deductive, cnf.state[x] | received, cp.strata)
    next_state = h[x] | one_step(cp.inductive, d)
    sent: dict = {}
    for f in one_step(cp.asynchronous, d):
        y = f.args[0]
        if y in cnf.state:  # addressees outside the network are dropped
            sent.setdefault(y, set()).add(TaggedMessage(i, Fact(f.pred, f.args[1:])))
    state = dict(cnf.state)
    state[x] = next_state
    buffer = {y: set(b) for y, b in cnf.buffer.items()}
    buffer[x] -= m
    for y, msgs in sent.items():
        buffer[y] |= msgs
    return TransitionRecord(cnf, x, m, i, Configuration(state, buffer), d, _freeze(sent))


# --------------------------------------------------------------------------
# scheduling


class Policy(str, enum.Enum):
    ROUND_ROBIN = "roundrobin"
    RANDOM = "random"
    SINGLE = "single"


@dataclass(frozen=True)
class Scheduler:
    """Activation and delivery policy, deterministic given the seed.

    Nodes are activated in rounds, each node once per round. ``roundrobin``
    uses one fixed order and delivers every buffered message at once.
    ``random`` shuffles every round and delivers each message with
    probability one half, forcing it once it has waited ``max_delay``
    activations of its addressee. ``single`` delivers one payload per
    transition (all buffered copies of it), preferring overdue payloads.
    """

    policy: Policy = Policy.ROUND_ROBIN
    seed: int = 0
    max_delay: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "policy", Policy(self.policy))
        if self.max_delay < 1:
            raise ValueError("max_delay must be >= 1")


class RunPrefix:
    """A finite sequence of chained transitions starting in the start configuration."""

    def __init__(self, program: DedalusProgram, instance: DistributedInstance, transitions: Iterable[TransitionRecord]):
        self.program = program
        self.instance = instance
        self.transitions = tuple(transitions)

    def __len__(self) -> int:
        return len(self.transitions)

    def __getitem__(self, i: int) -> TransitionRecord:
        return self.transitions[i]

    def __iter__(self):
        return iter(self.transitions)

    @property
    def nodes(self) -> tuple:
        return self.instance.nodes

    @property
    def active(self) -> tuple:
        return tuple(t.active for t in self.transitions)

    @property
    def final(self) -> Configuration:
        return self.transitions[-1].target if self.transitions else start_configuration(self.program, self.instance)

    @cached_property
    def clocks(self) -> "ClockIndex":
        return clocks(self)

    @cached_property
    def arrival(self) -> "ArrivalMap":
        return arrival(self)

    def pending(self) -> dict:
        """Messages still buffered at the end of the prefix, per addressee."""
        return {y: b for y, b in self.final.buffer.items() if b}

    def validate(self) -> None:
        """Check chaining and tag invariants; raises ``ValueError``."""
        cnf = start_configuration(self.program, self.instance)
        for k, t in enumerate(self.transitions):
            if t.tag != k:
                raise ValueError(f"transition {k} carries send-tag {t.tag}")
            if t.source != cnf:
                raise ValueError(f"transition {k} does not start from the previous target")
            if not t.delivered <= cnf.buffer[t.active]:
                raise ValueError(f"transition {k} delivers messages not in the buffer")
            cnf = t.target


def simulate(program: DedalusProgram, h: DistributedInstance, scheduler: Scheduler, n: int) -> RunPrefix:
    if n < 1:
        raise ValueError("transition count must be >= 1")
    cp = CompiledProgram(program)
    rng = random.Random(scheduler.seed)
    nodes = sorted(h.nodes, key=value_key)
    shift = scheduler.seed % len(nodes)
    fixed = nodes[shift:] + nodes[:shift]
    cnf = start_configuration(program, h)
    age: Counter = Counter()
    transitions = []
    order: list = []
    for i in range(n):
        if not order:
            order = list(fixed)
            if scheduler.policy is not Policy.ROUND_ROBIN:
                rng.shuffle(order)
        x = order.pop(0)
        buffered = sorted(cnf.buffer[x], key=TaggedMessage.sort_key)
        for msg in buffered:
            age[(x, msg)] += 1
        m = _select(scheduler, rng, [(msg, age[(x, msg)]) for msg in buffered])
        for msg in m:
            del age[(x, msg)]
        t = step(cp, h, cnf, x, m, i)
        transitions.append(t)
        cnf = t.target
    return RunPrefix(program, h, transitions)


def _select(scheduler: Scheduler, rng: random.Random, aged: list) -> set:
    if scheduler.policy is Policy.ROUND_ROBIN:
        return {msg for msg, _ in aged}
    if scheduler.policy is Policy.RANDOM:
        # one draw per message, in canonical order, keeps runs reproducible
        return {msg for msg, a in aged if rng.random() < 0.5 or a >= scheduler.max_delay}
    if not aged:
        return set()
    oldest: dict = {}
    for msg, a in aged:
        oldest[msg.fact] = max(oldest.get(msg.fact, 0), a)
    payloads = sorted(oldest, key=Fact.sort_key)
    overdue = [f for f in payloads if oldest[f] >= scheduler.max_delay]
    if overdue:
        top = max(oldest[f] for f in overdue)
        pick = rng.choice([f for f in overdue if oldest[f] == top])
    else:
        pick = rng.choice(payloads)
    return {msg for msg, _ in aged if msg.fact == pick}


# --------------------------------------------------------------------------
# clocks, arrival, trace, happens-before


@dataclass(frozen=True)
class ClockIndex:
    loc: tuple
    glob: Mapping

    def steps(self, x) -> int:
        """Number of transitions in which ``x`` was active."""
        return sum(1 for (y, _) in self.glob if y == x)


def clocks(run: RunPrefix) -> ClockIndex:
    seen: Counter = Counter()
    loc, glob = [], {}
    for i, t in enumerate(run.transitions):
        s = seen[t.active]
        seen[t.active] += 1
        loc.append(s)
        glob[(t.active, s)] = i
    return ClockIndex(tuple(loc), glob)


@dataclass(frozen=True)
class ArrivalMap:
    """Delivery ordinal per sent message; ``undelivered`` lists the rest."""

    entries: Mapping
    undelivered: frozenset = frozenset()

    def __getitem__(self, key) -> int:
        return self.entries[key]

    def get(self, key, default=None):
        return self.entries.get(key, default)


def arrival(run: RunPrefix) -> ArrivalMap:
    delivered = {}
    for k, t in enumerate(run.transitions):
        for msg in t.delivered:
            delivered[(msg.tag, t.active, msg.fact)] = k
    entries, undelivered = {}, set()
    for i, t in enumerate(run.transitions):
        for y, msgs in t.sent.items():
            for msg in msgs:
                key = (i, y, msg.fact)
                if key in delivered:
                    entries[key] = delivered[key]
                else:
                    undelivered.add(key)
    return ArrivalMap(entries, frozenset(undelivered))


def trace(run: RunPrefix) -> frozenset:
    loc = run.clocks.loc
    out = set()
    for i, t in enumerate(run.transitions):
        out |= lift(t.deductive_fixpoint, t.active, loc[i])
    return frozenset(out)


LOCAL, MESSAGE, TRANSITIVE = "local", "message", "transitive"


@dataclass(frozen=True)
class HappensBefore:
    """Strict partial order on executed (node, step) pairs.

    ``edges`` maps every ordered pair to the set of reasons it holds.
    """

    edges: Mapping

    def __contains__(self, pair) -> bool:
        return pair in self.edges

    def pairs(self) -> frozenset:
        return frozenset(self.edges)

    def predecessors(self, b) -> frozenset:
        return frozenset(a for (a, c) in self.edges if c == b)


def happens_before(run: RunPrefix) -> HappensBefore:
    loc, glob = run.clocks.loc, run.clocks.glob
    direct: dict = {}
    for (x, s) in glob:
        if (x, s + 1) in glob:
            direct.setdefault(((x, s), (x, s + 1)), set()).add(LOCAL)
    for (i, y, _), k in run.arrival.entries.items():
        a = (run[i].active, loc[i])
        direct.setdefault((a, (y, loc[k])), set()).add(MESSAGE)
    into: dict = {}
    for (a, b) in direct:
        into.setdefault(b, set()).add(a)
    # glob order is a topological order of the direct edges
    below: dict = {}
    for i, t in enumerate(run.transitions):
        b = (t.active, loc[i])
        acc = set()
        for a in into.get(b, ()):
            acc.add(a)
            acc |= below[a]
        below[b] = frozenset(acc)
    edges = {}
    for b, preds in below.items():
        for a in preds:
            labels = set(direct.get((a, b), ()))
            if any(a in below[c] for c in into.get(b, ())):
                labels.add(TRANSITIVE)
            edges[(a, b)] = frozenset(labels)
    return HappensBefore(edges)


def check_happens_before(run: RunPrefix, hb: HappensBefore | None = None) -> list[str]:
    """Violations of irreflexivity, transitivity, glob-monotonicity and arrival order."""
    hb = hb or happens_before(run)
    glob = run.clocks.glob
    out = []
    succ: dict = {}
    for (a, b) in hb.edges:
        if a == b:
            out.append(f"reflexive pair {a}")
        if glob[a] >= glob[b]:
            out.append(f"{a} before {b} but glob {glob[a]} >= {glob[b]}")
        succ.setdefault(a, set()).add(b)
    for (a, b) in hb.edges:
        for c in succ.get(b, ()):
            if (a, c) not in hb.edges:
                out.append(f"not transitive: {a} < {b} < {c}")
    for (i, y, f), k in run.arrival.entries.items():
        if k <= i:
            out.append(f"message {f} sent at {i} arrives at {k}")
    return out


# --------------------------------------------------------------------------
# serialization


def _fact_json(f: Fact) -> list:
    return [f.pred, *f.args]


def _msgs_json(msgs: Iterable[TaggedMessage]) -> list:
    return [[m.tag, _fact_json(m.fact)] for m in sorted(msgs, key=TaggedMessage.sort_key)]


def run_to_json(run: RunPrefix) -> dict:
    loc = run.clocks.loc
    out = []
    for i, t in enumerate(run.transitions):
        out.append(
            {
                "index": i,
                "active": t.active,
                "local_step": loc[i],
                "delivered": _msgs_json(t.delivered),
                "sent": {y: _msgs_json(t.sent[y]) for y in sorted(t.sent, key=value_key)},
                "deductive_fixpoint": [_fact_json(f) for f in sorted_facts(t.deductive_fixpoint)],
            }
        )
    pending = run.pending()
    return {
        "nodes": list(run.nodes),
        "transitions": out,
        "pending": {y: _msgs_json(pending[y]) for y in sorted(pending, key=value_key)},
    }


def trace_to_json(facts: Iterable[Fact]) -> list:
    return [_fact_json(f) for f in sorted_facts(facts)]


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def replay(program: DedalusProgram, h: DistributedInstance, schedule: Iterable[tuple]) -> RunPrefix:
    """Execute ``(active node, delivered messages)`` pairs from the start configuration."""
    cp = CompiledProgram(program)
    cnf = start_configuration(program, h)
    transitions = []
    for i, (x, m) in enumerate(schedule):
        t = step(cp, h, cnf, x, m, i)
        transitions.append(t)
        cnf = t.target
    return RunPrefix(program, h, transitions)


__all__ = [
    "ArrivalMap",
    "ClockIndex",
    "CompiledProgram",
    "Configuration",
    "HappensBefore",
    "InvalidDelivery",
    "Policy",
    "RunPrefix",
    "Scheduler",
    "TaggedMessage",
    "TransitionRecord",
    "arrival",
    "check_happens_before",
    "clocks",
    "dumps",
    "happens_before",
    "replay",
    "run_to_json",
    "simulate",
    "start_configuration",
    "step",
    "trace",
    "trace_to_json",
]
