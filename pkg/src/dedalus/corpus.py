"""Bundled example programs, instances, goldens and fixture builders.

The corpus root defaults to the ``corpus`` directory shipped with the
package and can be redirected with the ``DEDALUS_CORPUS`` environment
variable.
"""
from __future__ import annotations

import itertools
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .correspondence import ModelCandidate, Origin, causal_closure
from .datalog import Fact, fact
from .frontend import DedalusProgram, DistributedInstance, parse_dedalus, parse_instance
from .operational import Policy, Scheduler
from .transform import Mode, cand, chosen, decl_input, other, transform

PACKAGED = Path(__file__).with_name("corpus")


def corpus_root() -> Path:
    return Path(os.environ.get("DEDALUS_CORPUS") or PACKAGED)


def resolve(path: str | os.PathLike) -> Path:
    """``path`` itself if it exists, otherwise relative to the corpus root."""
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    return corpus_root() / p


def load_program(path: str | os.PathLike) -> DedalusProgram:
    return parse_dedalus(resolve(path).read_text(encoding="utf-8"))


def load_instance(path: str | os.PathLike, program: DedalusProgram | None = None) -> DistributedInstance:
    return parse_instance(json.loads(resolve(path).read_text(encoding="utf-8")), program)


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    program: str
    instances: tuple
    schedulers: tuple
    seeds: tuple
    transitions: int
    max_delay: int

    def load(self) -> tuple[DedalusProgram, list]:
        d = load_program(self.program)
        return d, [load_instance(i, d) for i in self.instances]

    def golden(self, mode: Mode | str) -> Path:
        return corpus_root() / "goldens" / f"{self.name}.{Mode(mode).value}.txt"

    def cells(self) -> Iterable[tuple]:
        """Every (instance path, scheduler) pair of the entry's matrix."""
        for inst, policy, seed in itertools.product(self.instances, self.schedulers, self.seeds):
            yield inst, Scheduler(Policy(policy), seed, self.max_delay)


def entries() -> list[CorpusEntry]:
    doc = json.loads((corpus_root() / "corpus.json").read_text(encoding="utf-8"))
    out = []
    for e in doc["entries"]:
        mx = e["matrix"]
        entry = CorpusEntry(
            e["name"], e["program"], tuple(e["instances"]), tuple(mx["schedulers"]),
            tuple(mx["seeds"]), mx["transitions"], mx["max_delay"],
        )
        for ref in (entry.program,) + entry.instances:
            if not resolve(ref).exists():
                raise FileNotFoundError(f"corpus entry {entry.name}: missing {ref}")
        out.append(entry)
    return out


def entry(name: str) -> CorpusEntry:
    for e in entries():
        if e.name == name:
            return e
    raise KeyError(name)


# --------------------------------------------------------------------------
# two-phase commit inputs


def two_phase_instance(votes: Mapping[str, Mapping[str, str]], coordinator: str = "c") -> DistributedInstance:
    """Coordinator plus one agent per key of ``votes`` (agent -> transaction -> vote)."""
    agents = sorted(votes)
    transactions = sorted({t for v in votes.values() for t in v})
    coord = [fact("coordRole"), fact("yes", "yes"), fact("no", "no")]
    coord += [fact("trans", t) for t in transactions] + [fact("agent", a) for a in agents]
    facts = {coordinator: coord}
    for a in agents:
        facts[a] = [fact("agentRole"), fact("id", a), fact("coord", coordinator)]
        facts[a] += [fact("myVote", t, v) for t, v in sorted(votes[a].items())]
    return DistributedInstance((coordinator, *agents), facts)


# --------------------------------------------------------------------------
# set ordering output


class OrderError(ValueError):
    pass


def check_set_order(state: Iterable[Fact], elements: Iterable) -> list:
    """The elements listed by ``f``/``n`` facts, validated as a strict total order.

    ``f`` must hold exactly one element, ``n`` must be an injective function
    without cycles, and the chain must stay inside ``elements``.
    """
    state = set(state)
    elements = set(elements)
    first = [f.args[0] for f in state if f.pred == "f"]
    if len(first) != 1:
        raise OrderError(f"expected exactly one first element, found {sorted(first)}")
    nxt: dict = {}
    for f in state:
        if f.pred == "n":
            u, v = f.args
            if u in nxt:
                raise OrderError(f"n is not a function at {u}")
            nxt[u] = v
    if len(set(nxt.values())) != len(nxt):
        raise OrderError("n is not injective")
    chain = [first[0]]
    while chain[-1] in nxt:
        v = nxt[chain[-1]]
        if v in chain:
            raise OrderError(f"n has a cycle through {v}")
        chain.append(v)
    if len(chain) != len(nxt) + 1:
        raise OrderError("n has pairs not reachable from the first element")
    if not set(chain) <= elements:
        raise OrderError(f"chain {chain} leaves the input set")
    return chain


# --------------------------------------------------------------------------
# the non-causal counterexample


def noncausal_counterexample(t_ground: int = 4, t_check: int = 3, with_before: bool = False) -> ModelCandidate:
    """Stable model of the choice encoding of ``noncausal.dedalus`` in which
    b() sent at step 1 arrives at step 0, truncated to ``0..t_ground``.

    Single node ``z`` with input ``id(z)``. ``a()`` sent at step ``s``
    arrives at ``s + 1``; ``b()`` sent at step ``s >= 2`` arrives at
    ``s + 1``. ``b`` holds at every step and ``t`` never does. With
    ``with_before`` the before facts generated by local steps and chosen
    arrivals are added, transitively closed.
    """
    z = "z"
    h = DistributedInstance((z,), {z: [fact("id", z)]})
    ts = range(t_ground + 1)
    facts = set(decl_input(h, t_ground))
    for s, t in itertools.product(ts, ts):
        facts.add(Fact(cand("a"), (z, s, z, t)))
        facts.add(Fact(other("a") if t != s + 1 else chosen("a"), (z, s, z, t)))
        if s >= 1:
            facts.add(Fact(cand("b"), (z, s, z, t)))
            arrive = 0 if s == 1 else s + 1
            facts.add(Fact(other("b") if t != arrive else chosen("b"), (z, s, z, t)))
    facts |= {fact("a", z, s) for s in ts if s >= 1}
    facts |= {fact("b", z, s) for s in ts}
    if with_before:
        facts |= causal_closure(facts)
    return ModelCandidate(frozenset(facts), t_ground, t_check, Origin.EXTERNAL)


def fixture_paths() -> dict:
    root = corpus_root() / "fixtures"
    return {
        "program": "noncausal.dedalus",
        "decl": root / "noncausal_decl.json",
        "choice_program": root / "noncausal.choice.pure",
        "causal_program": root / "noncausal.causal.pure",
        "choice_model": root / "noncausal_model.json",
        "causal_model": root / "noncausal_model_before.json",
    }


def fixture_files(t_ground: int = 4, t_check: int = 3) -> dict:
    """Contents of the counterexample fixture files, keyed like :func:`fixture_paths`."""
    d = load_program("noncausal.dedalus")
    h = load_instance("noncausal.json", d)
    decl = [[f.pred, *f.args] for f in sorted(decl_input(h, t_ground), key=Fact.sort_key)]
    return {
        "decl": json.dumps(decl, sort_keys=True) + "\n",
        "choice_program": transform(d, Mode.CHOICE).text(),
        "causal_program": transform(d, Mode.CAUSAL).text(),
        "choice_model": json.dumps(noncausal_counterexample(t_ground, t_check).to_json(), sort_keys=True) + "\n",
        "causal_model": json.dumps(noncausal_counterexample(t_ground, t_check, True).to_json(), sort_keys=True) + "\n",
    }


def golden_files() -> dict:
    """Expected contents of every golden file, keyed by path."""
    out = {}
    for e in entries():
        d = load_program(e.program)
        for mode in Mode:
            out[e.golden(mode)] = transform(d, mode).text()
    paths = fixture_paths()
    for key, text in fixture_files().items():
        out[paths[key]] = text
    return out
