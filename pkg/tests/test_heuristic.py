import itertools

import pytest

from oracles import naive_state_weight
from cipmc.dot import to_dot
from cipmc.fixtures import builtin, random_protocol
from cipmc.heuristic import (
    NEG_INF,
    ContractViolation,
    _guards,
    build_weighted_tree,
    show,
    weigh_state,
    weigh_transition,
)
from cipmc.logic import And, Derives, exists, pnf, prefix
from cipmc.statespace import OutStep, initial_state, join_transitions
from cipmc.terms import Nonce


def tree_for(name, bound):
    sc, phi = builtin(name, bound)
    return sc, pnf(phi), build_weighted_tree(sc, pnf(phi))


def test_ns_root_and_edges():
    sc, phi, tree = tree_for("ns", 2)
    assert tree.root.weight == 2
    assert [(e.join.principal, e.weight) for e in tree.root.edges] == [("A", 2), ("B", 1)]
    s0 = initial_state(sc)
    assert weigh_state(s0, phi, sc) == 2
    a1, b1 = join_transitions(s0, sc)
    assert weigh_transition(s0, a1, phi, sc) == 2
    assert weigh_transition(s0, b1, phi, sc) == 1


def test_ns_leaf_paths():
    _, _, tree = tree_for("ns", 2)
    got = [(ws, n.summary) for ws, n in tree.paths()]
    assert got == [
        ((2, 1), "{A_1, A_2}"),
        ((2, 1), "{A_1, A_2}"),
        ((2, 0), "{A_1, B_2}"),
        ((1, 1), "{B_1, A_2}"),
        ((1, 1), "{B_1, A_2}"),
        ((1, NEG_INF), "{B_1, B_2}"),
    ]
    assert tree.pruned_contexts() == {"{B_1, B_2}"}
    assert len(tree.neg_inf_nodes()) == 1


def test_ns_bound_three_only_homogeneous_responders_pruned():
    _, _, tree = tree_for("ns", 3)
    assert tree.root.weight == 3
    assert tree.pruned_contexts() == {"{B_1, B_2, B_3}"}


def test_ksl_bound_two():
    _, _, tree = tree_for("ksl", 2)
    assert tree.pruned_contexts() == {"{A_1, A_2}", "{B_1, B_2}"}
    kinds = {n.summary for n in tree.leaves()}
    assert len(kinds) == 4


def test_ksl_bound_three_two_neg_inf_states():
    _, _, tree = tree_for("ksl", 3)
    assert len(tree.neg_inf_nodes()) == 2
    assert tree.pruned_contexts() == {"{A_1, A_2, A_3}", "{B_1, B_2, B_3}"}


def test_quantifier_free_leaf_weight_zero():
    sc, _ = builtin("ns", 1)
    tree = build_weighted_tree(sc, Derives(Nonce("na", 1)))
    assert all(n.weight == 0 for n in tree.nodes())
    assert all(e.case == 5 for n in tree.nodes() for e in n.edges)


@pytest.mark.parametrize("name,bound", [("ns", 1), ("ns", 2), ("ns", 3), ("ksl", 1), ("ksl", 2)])
def test_weights_match_naive_recursion(name, bound):
    sc, phi, tree = tree_for(name, bound)
    for node in tree.nodes():
        assert node.weight == naive_state_weight(node.state, node.residue, sc)


def test_weights_match_naive_recursion_random():
    for seed in range(30):
        sc, phi = random_protocol(seed)
        phi = pnf(phi)
        tree = build_weighted_tree(sc, phi)
        assert tree.root.weight == naive_state_weight(tree.root.state, phi, sc)


def test_guard_exclusivity():
    phis = [exists("i", "A", Derives(Nonce("na", "i"))), pnf(builtin("ns", 2)[1]), Derives(Nonce("na", 1))]
    for phi, present in itertools.product(phis, (False, True)):
        assert len(_guards(phi, present)) == 1


@pytest.mark.parametrize("name,bound", [("ns", 2), ("ns", 3), ("ksl", 2), ("ksl", 3)])
def test_range_and_residues(name, bound):
    sc, phi, tree = tree_for(name, bound)
    q = len(prefix(phi))
    for node in tree.nodes():
        # each join edge adds at most one, so the joins still available bound the weight
        assert node.weight == NEG_INF or 0 <= node.weight <= node.state.joins_left
    assert tree.root.residue == phi

    def walk(node, consumed):
        assert len(prefix(node.residue)) == q - consumed
        for e in node.edges:
            walk(e.child, consumed + (e.case in (1, 3)))

    walk(tree.root, 0)


def test_existential_steps_can_exceed_prefix_length():
    # an unmatched exists adds one per join without being consumed
    _, phi, tree = tree_for("ns", 3)
    assert tree.root.weight == 3 > len(prefix(phi))


def test_neg_inf_absorbs_increment():
    assert 1 + NEG_INF == NEG_INF
    assert max(NEG_INF, 0) == 0
    assert show(NEG_INF) == "−∞" and show(2) == "2"


def test_non_pnf_is_contract_violation():
    sc, _ = builtin("ns", 2)
    bad = And(exists("i", "A", Derives(Nonce("na", "i"))), Derives(Nonce("na", 1)))
    with pytest.raises(ContractViolation):
        weigh_state(initial_state(sc), bad, sc)
    with pytest.raises(ContractViolation):
        build_weighted_tree(sc, bad)


def test_non_join_is_contract_violation():
    sc, phi = builtin("ns", 2)
    with pytest.raises(ContractViolation):
        weigh_transition(initial_state(sc), OutStep(1, Nonce("na", 1)), pnf(phi), sc)


def test_dot_export():
    _, _, tree = tree_for("ns", 2)
    dot = to_dot(tree)
    assert dot.startswith("digraph")
    assert "{B_1, B_2}\\n−∞" in dot
    assert 'style="dashed"' in dot
    assert dot.count("->") == len(tree.nodes()) - 1
