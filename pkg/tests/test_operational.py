import itertools

import pytest

from dedalus import corpus
from dedalus.datalog import fact, stratified_eval
from dedalus.frontend import DistributedInstance, parse_dedalus, split_subprograms
from dedalus.operational import (
    LOCAL,
    MESSAGE,
    TRANSITIVE,
    InvalidDelivery,
    Policy,
    Scheduler,
    TaggedMessage,
    check_happens_before,
    dumps,
    happens_before,
    replay,
    run_to_json,
    simulate,
    start_configuration,
    step,
    trace,
)

PING = parse_dedalus("p(U)@Y <- s(U), to(Y). got(U) <- p(U). got(U)@next <- got(U).")


def two_nodes(**extra):
    facts = {"x": [fact("s", "a"), fact("to", "y")], "y": []}
    facts.update(extra)
    return DistributedInstance(("x", "y"), facts)


def matrix():
    for e in corpus.entries():
        d, instances = e.load()
        for h, (_, sched) in itertools.product(instances, e.cells()):
            yield e.name, d, h, sched, e.transitions


MATRIX = list(matrix())
SMALL = [c for c in MATRIX if c[3].seed < 2]


class TestStep:
    def test_start_configuration(self):
        h = two_nodes()
        cnf = start_configuration(PING, h)
        assert cnf.state == {"x": h["x"], "y": frozenset()}
        assert cnf.buffer == {"x": frozenset(), "y": frozenset()}

    def test_send_and_tag(self):
        h = two_nodes()
        t = step(PING, h, start_configuration(PING, h), "x", (), 0)
        assert t.sent == {"y": {TaggedMessage(0, fact("p", "a"))}}
        assert t.target.buffer["y"] == {TaggedMessage(0, fact("p", "a"))}
        assert t.is_heartbeat

    def test_delivery_and_persistence(self):
        h = two_nodes()
        t0 = step(PING, h, start_configuration(PING, h), "x", (), 0)
        msg = TaggedMessage(0, fact("p", "a"))
        t1 = step(PING, h, t0.target, "y", {msg}, 1)
        assert fact("got", "a") in t1.deductive_fixpoint
        assert t1.target.state["y"] == {fact("got", "a")}
        assert t1.target.buffer["y"] == frozenset()
        # the delivered message itself is not kept
        assert fact("p", "a") not in t1.target.state["y"]

    def test_duplicate_payloads_keep_distinct_tags(self):
        h = two_nodes()
        run = replay(PING, h, [("x", ()), ("x", ())])
        assert run.final.buffer["y"] == {TaggedMessage(0, fact("p", "a")), TaggedMessage(1, fact("p", "a"))}

    def test_invalid_delivery(self):
        h = two_nodes()
        with pytest.raises(InvalidDelivery):
            step(PING, h, start_configuration(PING, h), "y", {TaggedMessage(0, fact("p", "a"))}, 0)

    def test_addressee_outside_network_dropped(self):
        h = DistributedInstance(("x",), {"x": [fact("s", "a"), fact("to", "nowhere")]})
        t = step(PING, h, start_configuration(PING, h), "x", (), 0)
        assert t.sent == {}

    def test_input_persists(self):
        h = two_nodes()
        run = replay(PING, h, [("x", ())] * 3)
        assert run.final.state["x"] == h["x"]

    def test_self_send(self):
        d = corpus.load_program("set_order.dedalus")
        h = corpus.load_instance("set_order.json", d)
        t = step(d, h, start_configuration(d, h), "x", (), 0)
        assert set(t.sent) == {"x"}
        assert {m.fact for m in t.sent["x"]} == {fact("m", e) for e in "abcd"}

    def test_fixpoint_matches_subprogram(self):
        h = two_nodes()
        t = step(PING, h, start_configuration(PING, h), "x", (), 0)
        deduc = split_subprograms(PING)[0]
        assert t.deductive_fixpoint == stratified_eval(deduc, h["x"])


class TestClocksAndTrace:
    def test_clock_example(self):
        h = two_nodes()
        run = replay(PING, h, [(x, ()) for x in "xyyxx"])
        assert run.clocks.loc == (0, 0, 1, 1, 2)
        assert run.clocks.glob[("y", 1)] == 2
        assert run.clocks.steps("x") == 3

    def test_trace_lifts_fixpoints(self):
        h = two_nodes()
        msg = TaggedMessage(0, fact("p", "a"))
        run = replay(PING, h, [("x", ()), ("y", {msg}), ("y", ())])
        tr = trace(run)
        assert fact("p", "y", 0, "a") in tr
        assert fact("got", "y", 1, "a") in tr
        assert fact("s", "x", 0, "a") in tr

    def test_arrival(self):
        h = two_nodes()
        msg = TaggedMessage(0, fact("p", "a"))
        run = replay(PING, h, [("x", ()), ("x", ()), ("y", {msg})])
        assert run.arrival[(0, "y", fact("p", "a"))] == 2
        assert run.arrival.undelivered == {(1, "y", fact("p", "a"))}

    def test_happens_before_labels(self):
        h = two_nodes()
        msg = TaggedMessage(0, fact("p", "a"))
        run = replay(PING, h, [("x", ()), ("y", ()), ("y", {msg})])
        hb = happens_before(run)
        assert hb.edges[(("x", 0), ("y", 1))] == {MESSAGE}
        assert hb.edges[(("y", 0), ("y", 1))] == {LOCAL}
        assert (("x", 0), ("y", 0)) not in hb
        run = replay(PING, h, [("x", ()), ("x", ()), ("y", {msg})])
        assert happens_before(run).edges.get((("x", 0), ("x", 1))) == {LOCAL}

    def test_transitive_label(self):
        h = DistributedInstance(("x", "y", "z"), {"x": [fact("s", "a"), fact("to", "y")], "y": [fact("s", "b"), fact("to", "z")], "z": []})
        m1 = TaggedMessage(0, fact("p", "a"))
        m2 = TaggedMessage(2, fact("p", "b"))
        run = replay(PING, h, [("x", ()), ("y", {m1}), ("y", ()), ("z", {m2})])
        hb = happens_before(run)
        assert TRANSITIVE in hb.edges[(("x", 0), ("z", 0))]
        assert hb.edges[(("y", 1), ("z", 0))] == {MESSAGE}

    def test_run_validates(self):
        run = simulate(PING, two_nodes(), Scheduler("random", 3), 12)
        run.validate()


class TestSchedulers:
    def test_roundrobin_delivers_by_next_activation(self):
        d = corpus.load_program("reachability.dedalus")
        h = corpus.load_instance("reachability3.json", d)
        run = simulate(d, h, Scheduler("roundrobin", 1), 30)
        n = len(h.nodes)
        for (i, _, _), k in run.arrival.entries.items():
            assert k - i <= n
        for i, y, _ in run.arrival.undelivered:
            assert len(run) - i <= n

    @pytest.mark.parametrize("policy", list(Policy))
    def test_bounded_delay(self, policy):
        d = corpus.load_program("noncausal.dedalus")
        h = corpus.load_instance("noncausal.json", d)
        sched = Scheduler(policy, 2, 3)
        run = simulate(d, h, sched, 40)
        # addressee activations strictly between send and delivery
        for (i, y, _), k in run.arrival.entries.items():
            waited = sum(1 for j in range(i + 1, k) if run[j].active == y)
            if policy is not Policy.SINGLE:
                assert waited < sched.max_delay

    @pytest.mark.parametrize("policy", list(Policy))
    def test_activation_is_cyclic(self, policy):
        d = corpus.load_program("two_phase_commit.dedalus")
        h = corpus.load_instance("two_phase_commit.json", d)
        run = simulate(d, h, Scheduler(policy, 4), 31)
        counts = [run.active.count(x) for x in h.nodes]
        assert max(counts) - min(counts) <= 1
        for k in range(0, 30, 3):
            assert set(run.active[k:k + 3]) == set(h.nodes)

    def test_single_delivers_one_payload(self):
        d = corpus.load_program("set_order.dedalus")
        h = corpus.load_instance("set_order.json", d)
        run = simulate(d, h, Scheduler("single", 0, 3), 20)
        for t in run:
            assert len({m.fact for m in t.delivered}) <= 1

    @pytest.mark.parametrize("policy", list(Policy))
    def test_deterministic(self, policy):
        d = corpus.load_program("set_order.dedalus")
        h = corpus.load_instance("set_order.json", d)
        a = dumps(run_to_json(simulate(d, h, Scheduler(policy, 7, 3), 25)))
        b = dumps(run_to_json(simulate(d, h, Scheduler(policy, 7, 3), 25)))
        assert a == b

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            Scheduler("random", 0, 0)
        with pytest.raises(ValueError):
            simulate(PING, two_nodes(), Scheduler(), 0)


@pytest.mark.parametrize("cell", SMALL, ids=lambda c: f"{c[0]}-{c[3].policy.value}-{c[3].seed}-{c[2].nodes[-1]}")
def test_happens_before_laws(cell):
    _, d, h, sched, n = cell
    run = simulate(d, h, sched, n)
    assert check_happens_before(run) == []


def test_run_json_shape():
    run = simulate(PING, two_nodes(), Scheduler("roundrobin", 0), 3)
    doc = run_to_json(run)
    assert doc["nodes"] == ["x", "y"]
    assert [t["active"] for t in doc["transitions"]] == ["x", "y", "x"]
    assert doc["transitions"][1]["delivered"] == [[0, ["p", "a"]]]
    assert doc["pending"] == {"y": [[2, ["p", "a"]]]}
