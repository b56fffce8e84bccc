import pytest

from cipmc.fixtures import builtin, random_protocol
from cipmc.protocol import parse_protocol
from cipmc.statespace import (
    InStep,
    Join,
    OutStep,
    Scenario,
    ScenarioError,
    TransitionError,
    apply_transition,
    comm_transitions,
    context_summary,
    initial_state,
    is_complete,
    is_terminal,
    join_transitions,
    join_tree,
    step,
    successors,
)
from cipmc.terms import intruder_knowledge, parse_term

T = parse_term


def responder_run(sc):
    s0 = initial_state(sc)
    s1 = apply_transition(s0, Join.make("B", 2), sc)
    s2 = apply_transition(s1, Join.make("A", 1, {"r": T("B_2")}), sc)
    s3 = apply_transition(s2, OutStep(1, T("{na_1, A_1}_{B_2^+}")), sc)
    t4 = next(t for t in comm_transitions(s3)
              if isinstance(t, InStep) and t.substitution == {("x", 2): T("na_1"), ("y", 2): T("A_1")})
    s4 = apply_transition(s3, t4, sc)
    return s0, s1, s2, s3, s4


def test_initial_state(ns2):
    sc, _ = ns2
    s0 = initial_state(sc)
    assert s0.instances == () or not s0.instances
    assert s0.chi == {}
    assert s0.knowledge.base == intruder_knowledge()


def test_bound_zero_rejected(ns2):
    sc, _ = ns2
    with pytest.raises(ScenarioError):
        Scenario(sc.protocol, 0)


def test_join_send_receive_run(ns2):
    sc, _ = ns2
    s0, s1, s2, s3, s4 = responder_run(sc)
    assert s1.knowledge.base == s0.knowledge.base | {T("B_2"), T("B_2^+")}
    assert s2.chi == {("r", 1): T("B_2")}
    assert context_summary(s2) == "{A_1, B_2}"
    assert s3.knowledge.base == s2.knowledge.base | {T("{na_1, A_1}_{B_2^+}")}
    assert s4.chi == {("r", 1): T("B_2"), ("x", 2): T("na_1"), ("y", 2): T("A_1")}
    assert s4.instance(2).pc == 1


def test_initial_joins(ns2):
    sc, _ = ns2
    labels = [j.label() for j in join_transitions(initial_state(sc), sc)]
    assert labels == ["join A_1 [r_1 ↦ I]", "join B_1"]


def test_no_joins_when_bound_reached(ns2):
    sc, _ = ns2
    _, _, s2, _, _ = responder_run(sc)
    assert s2.joins_left == 0 and join_transitions(s2, sc) == []


def test_out_step_applies_once(ns2):
    sc, _ = ns2
    _, _, s2, s3, _ = responder_run(sc)
    with pytest.raises(TransitionError):
        apply_transition(s3, OutStep(1, T("{na_1, A_1}_{B_2^+}")), sc)


def test_underivable_input_rejected(ns2):
    sc, _ = ns2
    _, _, s2, _, _ = responder_run(sc)
    bogus = InStep(2, T("{?x_2, ?y_2}_{B_2^-}"), ((("x", 2), T("nb_9")), (("y", 2), T("A_1"))))
    with pytest.raises(TransitionError):
        apply_transition(s2, bogus, sc)


def test_join_tree_is_a_tree():
    for name, bound in (("ns", 2), ("ns", 3), ("ksl", 2), ("ksl", 3)):
        sc, _ = builtin(name, bound)
        parents: dict = {}
        for s, kids in join_tree(sc):
            for _, child in kids:
                assert child not in parents, f"{name}-{bound}: two join parents"
                parents[child] = s


def _reachable(sc, limit=3000):
    seen = {initial_state(sc)}
    todo = [initial_state(sc)]
    edges = []
    while todo and len(seen) < limit:
        s = todo.pop()
        for t in successors(s, sc):
            n = step(s, t, sc)
            edges.append((s, n))
            if n not in seen:
                seen.add(n)
                todo.append(n)
    return seen, edges


@pytest.mark.parametrize("name", ["ns", "ksl"])
def test_knowledge_and_assignment_monotone(name):
    sc, _ = builtin(name, 2)
    _, edges = _reachable(sc)
    for s, n in edges:
        assert s.knowledge.base <= n.knowledge.base
        assert s.knowledge.analyzed <= n.knowledge.analyzed
        assert all(n.chi.get(k) == v for k, v in s.chi.items())


def test_random_protocols_monotone():
    for seed in range(20):
        sc, _ = random_protocol(seed)
        _, edges = _reachable(sc, 500)
        for s, n in edges:
            assert s.knowledge.analyzed <= n.knowledge.analyzed


def test_terminal_and_complete(ns2):
    sc, _ = ns2
    s0, *_, s4 = responder_run(sc)
    assert not is_terminal(s0) and not is_complete(s0)
    assert not is_terminal(s4)


def test_deadlock_is_terminal_but_not_complete(ns2):
    sc, _ = ns2
    s = initial_state(sc)
    s = apply_transition(s, Join.make("B", 1), sc)
    s = apply_transition(s, Join.make("B", 2), sc)
    # both responders wait for an encryption under their own key, which the intruder can build
    assert comm_transitions(s)
    # a secret symmetric key the intruder never learns
    sc1 = Scenario(parse_protocol("B: ()[\n    in({?x}_{kb})\n]\n"), 1)
    d = apply_transition(initial_state(sc1), Join.make("B", 1), sc1)
    assert comm_transitions(d) == []
    assert is_terminal(d) and not is_complete(d)


def test_interleaved_scheduling_allows_early_communication(ns2):
    sc, _ = ns2
    s = apply_transition(initial_state(sc), Join.make("A", 1, {"r": T("I")}), sc)
    inter = successors(s, sc, interleave_joins=True)
    assert any(isinstance(t, OutStep) for t in inter)
    assert all(isinstance(t, Join) for t in successors(s, sc))


def test_ksl_join_rules_bind_to_responder_keys(ksl2):
    sc, _ = ksl2
    labels = [j.label() for j in join_transitions(initial_state(sc), sc)]
    assert "join A_1 [b_1 ↦ I, sk_1 ↦ kI, tk_1 ↦ kI]" in labels
    assert any("b_1 ↦ B_2" in lab and "kab_2" in lab for lab in labels)


def test_ksl_forward_reference_reserves_slot(ksl2):
    sc, _ = ksl2
    s0 = initial_state(sc)
    fwd = next(j for j in join_transitions(s0, sc) if "B_2" in j.label())
    s1 = apply_transition(s0, fwd, sc)
    assert s1.reservation(2) == "B"
    assert all(not (j.principal == "A" and j.index == 2) for j in join_transitions(s1, sc))
    assert any(j.principal == "B" and j.index == 2 for j in join_transitions(s1, sc))
