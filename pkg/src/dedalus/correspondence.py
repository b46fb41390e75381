"""Runs versus stable models of the transformed program.

``run_to_model`` turns a simulated run prefix into a candidate model of the
transformed program, ``windowed_stable_check`` verifies it against the reduct
fixpoint on a time window, and ``model_to_run`` rebuilds a run from a model
by ordering its (node, timestamp) pairs and replaying the transitions.
``verify_theorem`` chains all of these and compares traces.

A run prefix only covers finitely many steps, so every check is confined to
a window. ``t_ground`` bounds the timestamps that are grounded; ``t_check``
bounds the timestamps on which model and fixpoint must agree.
"""
from __future__ import annotations

import enum
import heapq
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import networkx as nx

from .datalog import COMPARISONS, Fact, Program, one_step, reduct_fixpoint, sorted_facts, value_key
from .frontend import DedalusProgram, DistributedInstance, RuleKind
from .operational import (
    CompiledProgram,
    InvalidDelivery,
    RunPrefix,
    Scheduler,
    TaggedMessage,
    happens_before,
    simulate,
    start_configuration,
    step,
    trace,
)
from .transform import (
    ALL,
    BEFORE,
    HAS_MAX,
    HAS_SENDER,
    IS_SMALLER,
    TIME,
    TSUCC,
    Mode,
    TransformedProgram,
    cand,
    chosen,
    decl_input,
    inductive_rule,
    other,
    transform,
)

# --------------------------------------------------------------------------
# fact positions


def _message_relation(pred: str) -> str | None:
    """Source relation of a cand/chosen/other relation name."""
    for prefix in ("cand_", "chosen_", "other_"):
        if pred.startswith(prefix):
            return pred[len(prefix):]
    return None


def positions(pred: str) -> tuple[tuple, tuple]:
    """Argument positions holding node ids and timestamps for a relation."""
    if pred == ALL:
        return (0,), ()
    if pred == TIME:
        return (), (0,)
    if pred == TSUCC or pred in COMPARISONS:
        return (), (0, 1)
    if pred in (BEFORE, HAS_SENDER, IS_SMALLER) or _message_relation(pred) is not None:
        return (0, 2), (1, 3)
    if pred == HAS_MAX:
        return (0, 2), (1,)
    return (0,), (1,)


def timestamps(f: Fact) -> tuple:
    return tuple(f.args[p] for p in positions(f.pred)[1])


def in_window(f: Fact, t_check: int) -> bool:
    return all(t <= t_check for t in timestamps(f))


def restrict(facts: Iterable[Fact], t_check: int) -> frozenset:
    return frozenset(f for f in facts if in_window(f, t_check))


# --------------------------------------------------------------------------
# model candidates


class Origin(str, enum.Enum):
    FROM_RUN = "from-run"
    EXTERNAL = "external"


class IllFormedModel(ValueError):
    pass


class WindowError(ValueError):
    pass


@dataclass(frozen=True)
class ModelCandidate:
    facts: frozenset
    t_ground: int
    t_check: int
    origin: Origin = Origin.EXTERNAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "facts", frozenset(self.facts))
        object.__setattr__(self, "origin", Origin(self.origin))
        if self.t_check > self.t_ground:
            raise IllFormedModel(f"t_check {self.t_check} exceeds t_ground {self.t_ground}")

    @property
    def nodes(self) -> tuple:
        return tuple(sorted((f.args[0] for f in self.facts if f.pred == ALL), key=value_key))

    def lt_facts(self, schema: Iterable[str]) -> frozenset:
        schema = set(schema)
        return frozenset(f for f in self.facts if f.pred in schema)

    def to_json(self) -> dict:
        return {
            "t_ground": self.t_ground,
            "t_check": self.t_check,
            "origin": self.origin.value,
            "facts": [[f.pred, *f.args] for f in sorted_facts(self.facts)],
        }

    @classmethod
    def from_json(cls, doc: str | Mapping) -> "ModelCandidate":
        if isinstance(doc, str):
            doc = json.loads(doc)
        facts = [Fact(e[0], tuple(e[1:])) for e in doc["facts"]]
        return cls(frozenset(facts), doc["t_ground"], doc["t_check"], doc.get("origin", Origin.EXTERNAL))


def check_well_formed(m: ModelCandidate) -> None:
    """Node positions hold network nodes and timestamp positions hold ``0..t_ground``."""
    nodes = set(m.nodes)
    if not nodes:
        raise IllFormedModel("model has no all(...) facts, so no network")
    for f in sorted_facts(m.facts):
        locs, ts = positions(f.pred)
        if max(locs + ts, default=-1) >= len(f.args):
            raise IllFormedModel(f"fact {f} is too short for relation {f.pred}")
        for p in locs:
            if f.args[p] not in nodes:
                raise IllFormedModel(f"fact {f}: {f.args[p]!r} is not a node")
        for p in ts:
            t = f.args[p]
            if not isinstance(t, int) or isinstance(t, bool) or not 0 <= t <= m.t_ground:
                raise IllFormedModel(f"fact {f}: {t!r} is not a timestamp in 0..{m.t_ground}")


# --------------------------------------------------------------------------
# run to model


@dataclass(frozen=True)
class Window:
    t_ground: int
    t_check: int


def compute_window(run: RunPrefix) -> Window:
    """Grounding and comparison horizons for a run prefix.

    ``t_ground`` is the largest step every node has completed such that all
    causal predecessors of steps up to it lie at or below it. ``t_check``
    additionally stays below every step that sent a message not delivered
    by ``t_ground``.
    """
    glob = run.clocks.glob
    loc = run.clocks.loc
    completed = min(sum(1 for (y, _) in glob if y == x) for x in run.nodes)
    hb = happens_before(run)
    preds = defaultdict(set)
    for (a, b) in hb.edges:
        preds[b].add(a)
    t_ground = completed - 1
    while t_ground >= 0:
        if all(a[1] <= t_ground for b, ps in preds.items() if b[1] <= t_ground for a in ps):
            break
        t_ground -= 1
    if t_ground < 1:
        raise WindowError(f"run prefix of {len(run)} transitions leaves no window; simulate more transitions")
    t_check = t_ground
    arr = run.arrival
    late = [key for key, k in arr.entries.items() if loc[k] > t_ground] + list(arr.undelivered)
    for (i, _, _) in late:
        if loc[i] <= t_ground:
            t_check = min(t_check, loc[i] - 1)
    if t_check < 0:
        raise WindowError("a message sent at step 0 is still undelivered; simulate more transitions")
    return Window(t_ground, t_check)


def run_to_model(run: RunPrefix, mode: Mode | str = Mode.CAUSFIN, window: Window | None = None) -> ModelCandidate:
    """The model describing ``run`` truncated to the run's window.

    Messages whose arrival lies beyond ``t_ground`` get ``other`` facts for
    every candidate timestamp and no ``chosen`` fact; ``t_check`` already
    stays below their send step.
    """
    mode = Mode(mode)
    causal = mode is not Mode.CHOICE
    window = window or compute_window(run)
    big_t = window.t_ground
    loc = run.clocks.loc
    arr = run.arrival
    hb = happens_before(run)
    preds = defaultdict(set)
    for (a, b) in hb.edges:
        preds[b].add(a)
    senders = defaultdict(set)
    for (j, _, _), k in arr.entries.items():
        senders[k].add((run[j].active, loc[j]))

    facts = set(decl_input(run.instance, big_t))
    for i, tr in enumerate(run.transitions):
        x, s = tr.active, loc[i]
        if s > big_t:
            continue
        if causal:
            facts |= {Fact(BEFORE, (a[0], a[1], x, s)) for a in preds[(x, s)]}
        if mode is Mode.CAUSFIN:
            for (z, u) in senders[i]:
                facts.add(Fact(HAS_SENDER, (x, s, z, u)))
                facts |= {Fact(IS_SMALLER, (x, s, z, u)) for (z2, u2) in senders[i] if z2 == z and u < u2}
                facts.add(Fact(HAS_MAX, (x, s, z)))
        facts |= {Fact(f.pred, (x, s) + f.args) for f in tr.deductive_fixpoint}
        for y, msgs in tr.sent.items():
            candidates = [t for t in range(big_t + 1) if not (causal and (y, t) in preds[(x, s)])]
            for msg in msgs:
                r, args = msg.fact.pred, msg.fact.args
                k = arr.get((i, y, msg.fact))
                arrive = loc[k] if k is not None and loc[k] <= big_t else None
                for t in candidates:
                    facts.add(Fact(cand(r), (x, s, y, t) + args))
                    if t == arrive:
                        facts.add(Fact(chosen(r), (x, s, y, t) + args))
                    else:
                        facts.add(Fact(other(r), (x, s, y, t) + args))
    return ModelCandidate(frozenset(facts), window.t_ground, window.t_check, Origin.FROM_RUN)


# --------------------------------------------------------------------------
# windowed stability


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    missing: frozenset = frozenset()
    unexpected: frozenset = frozenset()
    t_check: int = 0

    def __bool__(self) -> bool:
        return self.accepted

    def to_json(self) -> dict:
        return {
            "accepted": self.accepted,
            "t_check": self.t_check,
            "missing": [[f.pred, *f.args] for f in sorted_facts(self.missing)],
            "unexpected": [[f.pred, *f.args] for f in sorted_facts(self.unexpected)],
        }


def windowed_stable_check(
    p: TransformedProgram | Program, instance: Iterable[Fact], m: ModelCandidate, *, well_formed: bool = True
) -> Verdict:
    """Compare ``m`` with the reduct fixpoint on facts timestamped at most ``t_check``.

    ``missing`` are model facts the fixpoint does not derive; ``unexpected``
    are derived facts absent from the model.
    """
    if well_formed:
        check_well_formed(m)
    program = p.program if isinstance(p, TransformedProgram) else p
    derived = reduct_fixpoint(program, instance, m.facts)
    have = restrict(m.facts, m.t_check)
    got = restrict(derived, m.t_check)
    missing, unexpected = have - got, got - have
    return Verdict(not missing and not unexpected, frozenset(missing), frozenset(unexpected), m.t_check)


# --------------------------------------------------------------------------
# order read off a model


class OrderExtractionError(ValueError):
    pass


class CycleDetected(OrderExtractionError):
    def __init__(self, witness: list):
        self.witness = witness
        super().__init__("before relation has a cycle: " + " -> ".join(map(str, witness + witness[:1])))


class NotTransitive(OrderExtractionError):
    def __init__(self, witness: tuple):
        self.witness = witness
        a, b, c = witness
        super().__init__(f"before relation not transitive: {a} < {b} < {c} but not {a} < {c}")


@dataclass(frozen=True)
class ModelOrder:
    edges: Mapping

    def pairs(self) -> frozenset:
        return frozenset(self.edges)


def causal_closure(facts: Iterable[Fact]) -> frozenset:
    """before facts generated by local successor steps and chosen messages, transitively closed."""
    facts = frozenset(facts)
    nodes = {f.args[0] for f in facts if f.pred == ALL}
    g = nx.DiGraph()
    for f in facts:
        if f.pred == TSUCC:
            s, t = f.args
            g.add_edges_from(((x, s), (x, t)) for x in nodes)
        elif f.pred.startswith("chosen_"):
            g.add_edge((f.args[0], f.args[1]), (f.args[2], f.args[3]))
    out = set()
    for a in g.nodes:
        for b in nx.descendants(g, a) | ({a} if _on_cycle(g, a) else set()):
            out.add(Fact(BEFORE, (a[0], a[1], b[0], b[1])))
    return frozenset(out)


def _on_cycle(g: nx.DiGraph, a) -> bool:
    return any(a in nx.descendants(g, b) for b in g.successors(a)) or g.has_edge(a, a)


def extract_model_order(m: ModelCandidate | Iterable[Fact]) -> ModelOrder:
    facts = m.facts if isinstance(m, ModelCandidate) else frozenset(m)
    pairs = set()
    for f in facts:
        if f.pred == BEFORE:
            pairs.add(((f.args[0], f.args[1]), (f.args[2], f.args[3])))
    for a, b in sorted(pairs, key=_pair_key):
        if a == b:
            raise CycleDetected([a])
    g = nx.DiGraph(sorted(pairs, key=_pair_key))
    try:
        cycle = nx.find_cycle(g)
        raise CycleDetected([u for u, _ in cycle])
    except nx.NetworkXNoCycle:
        pass
    succ = defaultdict(set)
    for a, b in pairs:
        succ[a].add(b)
    for a, b in sorted(pairs, key=_pair_key):
        for c in sorted(succ[b], key=_node_key):
            if (a, c) not in pairs:
                raise NotTransitive((a, b, c))
    local = {(f.args[0], f.args[1]) for f in facts if f.pred == TSUCC}
    network = {f.args[0] for f in facts if f.pred == ALL}
    message = {((f.args[0], f.args[1]), (f.args[2], f.args[3])) for f in facts if f.pred.startswith("chosen_")}
    edges = {}
    for a, b in pairs:
        labels = set()
        if a[0] == b[0] and a[0] in network and (a[1], b[1]) in local:
            labels.add("local")
        if (a, b) in message:
            labels.add("message")
        if any((c, b) in pairs for c in succ[a]):
            labels.add("transitive")
        edges[(a, b)] = frozenset(labels)
    return ModelOrder(edges)


def _node_key(a) -> tuple:
    return (a[1], value_key(a[0]))


def _pair_key(e) -> tuple:
    return (_node_key(e[0]), _node_key(e[1]))


def linear_extension(order: ModelOrder, nodes: Iterable, t_ground: int) -> list:
    """Pairs ``(node, t)`` for ``t <= t_ground`` in an order extending ``order``.

    Among the currently minimal pairs the smallest ``(t, node)`` goes first.
    """
    universe = [(x, t) for x in nodes for t in range(t_ground + 1)]
    indeg = {a: 0 for a in universe}
    succ = defaultdict(list)
    for a, b in order.edges:
        if a in indeg and b in indeg:
            succ[a].append(b)
            indeg[b] += 1
    heap = [(_node_key(a), a) for a in universe if indeg[a] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        _, a = heapq.heappop(heap)
        out.append(a)
        for b in succ[a]:
            indeg[b] -= 1
            if indeg[b] == 0:
                heapq.heappush(heap, (_node_key(b), b))
    if len(out) != len(universe):
        raise CycleDetected(sorted((a for a in universe if indeg[a] > 0), key=_node_key))
    return out


# --------------------------------------------------------------------------
# model to run


class InvalidTransition(ValueError):
    def __init__(self, ordinal: int, field_name: str, detail: str):
        self.ordinal, self.field = ordinal, field_name
        super().__init__(f"transition {ordinal}: {field_name} mismatch: {detail}")


class FairnessViolation(ValueError):
    pass


@dataclass(frozen=True)
class RebuiltRun:
    run: RunPrefix
    sequence: tuple
    glob: Mapping


def _unlift_at(facts: Iterable[Fact], x, s, schema) -> frozenset:
    return frozenset(
        Fact(f.pred, f.args[2:]) for f in facts if f.pred in schema and f.args[0] == x and f.args[1] == s
    )


def _short(facts: Iterable[Fact], limit: int = 5) -> str:
    items = [str(f) for f in sorted_facts(facts)]
    return ", ".join(items[:limit]) + (" ..." if len(items) > limit else "")


def model_to_run(
    m: ModelCandidate, d: DedalusProgram, h: DistributedInstance, order: ModelOrder | None = None
) -> RebuiltRun:
    """Replay the transitions a model describes and check them against it.

    The pairs ``(node, t)`` with ``t <= t_ground`` are ordered by a linear
    extension of the model's before relation; pair number ``i`` becomes
    transition ``i``. Each transition delivers the messages chosen to arrive
    at its pair, tagged with the ordinal of their sending pair. States and
    deductive fixpoints at timestamps up to ``t_check`` must match the model.
    """
    check_well_formed(m)
    if order is None:
        order = extract_model_order(m)
    nodes = tuple(h.nodes)
    seq = linear_extension(order, nodes, m.t_ground)
    glob = {a: i for i, a in enumerate(seq)}
    _check_fair(seq, nodes)

    schema = set(d.schema)
    by_pair = defaultdict(set)
    for f in m.facts:
        if f.pred in schema:
            by_pair[(f.args[0], f.args[1])].add(Fact(f.pred, f.args[2:]))
    inductive = Program(tuple(inductive_rule(r) for r in d.rules if r.kind is RuleKind.INDUCTIVE))
    m_ind = one_step(inductive, m.facts)
    ind_at = defaultdict(set)
    for f in m_ind:
        ind_at[(f.args[0], f.args[1])].add(Fact(f.pred, f.args[2:]))
    arriving = defaultdict(set)
    for f in m.facts:
        r = f.pred[len("chosen_"):] if f.pred.startswith("chosen_") else None
        if r is not None:
            x, s, y, t = f.args[:4]
            arriving[(y, t)].add(((x, s), Fact(r, f.args[4:])))

    cp = CompiledProgram(d)
    cnf = start_configuration(d, h)
    transitions = []
    for i, (x, s) in enumerate(seq):
        checked = s <= m.t_check
        want_state = h[x] | frozenset(ind_at[(x, s)])
        if checked and cnf.state[x] != want_state:
            detail = f"state of {x} at step {s}: extra {_short(cnf.state[x] - want_state)}; missing {_short(want_state - cnf.state[x])}"
            raise InvalidTransition(i, "state", detail)
        want_buffer = set()
        for (y, t), msgs in arriving.items():
            if y == x and glob[(y, t)] >= i:
                want_buffer |= {TaggedMessage(glob[a], f) for a, f in msgs if glob[a] < i}
        if checked:
            if not want_buffer <= cnf.buffer[x]:
                raise InvalidTransition(i, "buffer", f"{x} lacks {sorted(want_buffer - cnf.buffer[x])}")
            for msg in sorted(cnf.buffer[x] - want_buffer, key=TaggedMessage.sort_key):
                if seq[msg.tag][1] <= m.t_check:
                    raise InvalidTransition(i, "buffer", f"message {msg} sent at {seq[msg.tag]} has no arrival in the model")
        delivered = {TaggedMessage(glob[a], f) for a, f in arriving[(x, s)]}
        try:
            tr = step(cp, h, cnf, x, delivered, i)
        except InvalidDelivery as e:
            raise InvalidTransition(i, "delivered", str(e)) from None
        if checked and tr.deductive_fixpoint != by_pair[(x, s)]:
            got, want = tr.deductive_fixpoint, frozenset(by_pair[(x, s)])
            detail = f"at ({x}, {s}): extra {_short(got - want)}; missing {_short(want - got)}"
            raise InvalidTransition(i, "deductive_fixpoint", detail)
        transitions.append(tr)
        cnf = tr.target
    return RebuiltRun(RunPrefix(d, h, transitions), tuple(seq), glob)


def _check_fair(seq: list, nodes: tuple) -> None:
    counts = Counter({x: 0 for x in nodes})
    for i, (x, _) in enumerate(seq):
        counts[x] += 1
        if max(counts.values()) - min(counts.values()) > 1:
            raise FairnessViolation(f"after transition {i} activation counts are {dict(counts)}")


# --------------------------------------------------------------------------
# choice checks and end-to-end verification


def choice_violations(m: ModelCandidate) -> list[str]:
    """Message groups with a cand fact sent at most at ``t_check`` but not exactly one chosen fact."""
    groups: dict = defaultdict(lambda: [0, 0])
    for f in m.facts:
        r = _message_relation(f.pred)
        if r is None or f.pred.startswith("other_"):
            continue
        x, s, y, _ = f.args[:4]
        key = (r, x, s, y, f.args[4:])
        groups[key][0 if f.pred.startswith("cand_") else 1] += 1
    out = []
    for key, (n_cand, n_chosen) in sorted(groups.items(), key=lambda kv: repr(kv[0])):
        r, x, s, y, args = key
        if n_cand == 0:
            out.append(f"chosen_{r} for {x}@{s} -> {y} {args} without a cand fact")
        elif s <= m.t_check and n_chosen != 1:
            out.append(f"{n_chosen} chosen_{r} facts for {x}@{s} -> {y} {args}")
    return out


@dataclass
class Report:
    program_size: int
    nodes: tuple
    transitions: int
    mode: str
    t_ground: int | None = None
    t_check: int | None = None
    stable: Verdict | None = None
    order_agrees: bool | None = None
    trace_equal: bool | None = None
    choice_violations: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (
            not self.errors
            and bool(self.stable)
            and bool(self.order_agrees)
            and bool(self.trace_equal)
            and not self.choice_violations
        )

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "mode": self.mode,
            "nodes": list(self.nodes),
            "transitions": self.transitions,
            "t_ground": self.t_ground,
            "t_check": self.t_check,
            "stable": None if self.stable is None else self.stable.to_json(),
            "order_agrees": self.order_agrees,
            "trace_equal": self.trace_equal,
            "choice_violations": self.choice_violations,
            "errors": self.errors,
        }

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [
            f"{status}: mode={self.mode} transitions={self.transitions} window t_ground={self.t_ground} t_check={self.t_check}",
            f"  stable on window: {bool(self.stable)}",
            f"  order agrees with happens-before: {self.order_agrees}",
            f"  rebuilt trace equal on window: {self.trace_equal}",
            f"  choice violations: {len(self.choice_violations)}",
        ]
        if self.stable is not None and not self.stable:
            lines.append(f"  missing: {_short(self.stable.missing)}")
            lines.append(f"  unexpected: {_short(self.stable.unexpected)}")
        lines += [f"  error: {e}" for e in self.errors]
        return "\n".join(lines)


def verify_run(run: RunPrefix, mode: Mode | str = Mode.CAUSFIN) -> Report:
    mode = Mode(mode)
    d, h = run.program, run.instance
    report = Report(len(d), tuple(h.nodes), len(run), mode.value)
    try:
        window = compute_window(run)
    except WindowError as e:
        report.errors.append(str(e))
        return report
    report.t_ground, report.t_check = window.t_ground, window.t_check
    m = run_to_model(run, mode, window)
    report.stable = windowed_stable_check(transform(d, mode), decl_input(h, window.t_ground), m)
    report.choice_violations = choice_violations(m)

    order_facts = m.facts if mode is not Mode.CHOICE else m.facts | causal_closure(m.facts)
    try:
        order = extract_model_order(order_facts)
    except OrderExtractionError as e:
        report.errors.append(f"order extraction: {e}")
        return report
    hb = happens_before(run)
    in_range = {(a, b) for (a, b) in hb.edges if a[1] <= window.t_ground and b[1] <= window.t_ground}
    report.order_agrees = order.pairs() == in_range
    try:
        rebuilt = model_to_run(m, d, h, order)
    except (InvalidTransition, FairnessViolation, OrderExtractionError) as e:
        report.errors.append(f"model to run: {e}")
        return report
    original = restrict(trace(run), window.t_check)
    again = restrict(trace(rebuilt.run), window.t_check)
    from_model = restrict(m.lt_facts(d.schema), window.t_check)
    report.trace_equal = original == again == from_model
    return report


def verify_theorem(
    d: DedalusProgram, h: DistributedInstance, sched: Scheduler, n: int, mode: Mode | str = Mode.CAUSFIN
) -> Report:
    """Simulate, build the model, check it, rebuild a run and compare traces."""
    return verify_run(simulate(d, h, sched, n), mode)
