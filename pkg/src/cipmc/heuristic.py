"""Formula-directed weights for join-tree states and join transitions.

Weights live in ℕ ∪ {−∞}; they are plain ints with ``NEG_INF`` standing in
for −∞, so ``max`` works unchanged and ``1 + NEG_INF`` stays ``NEG_INF``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from cipmc.logic import Formula, Quant, is_pnf, render_formula
from cipmc.statespace import Join, Scenario, State, _apply_join, context_summary, initial_state, join_transitions
from cipmc.terms import Identity

NEG_INF = float("-inf")
HeuristicValue = Union[int, float]


class ContractViolation(ValueError):
    pass


def show(v: HeuristicValue) -> str:
    return "−∞" if v == NEG_INF else str(int(v))


def _has_instance(s: State, principal: str) -> bool:
    return any(isinstance(t, Identity) and t.name == principal and isinstance(t.index, int) for t in s.knowledge.analyzed)


def _guards(phi: Formula, present: bool) -> list[int]:
    q = phi if isinstance(phi, Quant) else None
    fired = [
        q is not None and q.kind == "forall" and present,
        q is not None and q.kind == "exists" and not present,
        q is not None and q.kind == "exists" and present,
        q is not None and q.kind == "forall" and not present,
        q is None,
    ]
    return [i + 1 for i, f in enumerate(fired) if f]


@dataclass
class Edge:
    join: Join
    child: "Node"
    weight: HeuristicValue
    case: int


@dataclass
class Node:
    state: State
    residue: Formula
    weight: HeuristicValue = 0
    edges: list = field(default_factory=list)
    depth: int = 0

    @property
    def summary(self) -> str:
        return context_summary(self.state)

    @property
    def is_leaf(self) -> bool:
        return not self.edges

    def walk(self):
        yield self
        for e in self.edges:
            yield from e.child.walk()


class Weigher:
    """Weights states and join transitions of one scenario, memoised per (state, formula)."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        self.memo: dict = {}
        self.children: dict = {}

    def _kids(self, s: State) -> list:
        kids = self.children.get(s)
        if kids is None:
            kids = [(t, _apply_join(s, self.sc, t)) for t in join_transitions(s, self.sc)]
            self.children[s] = kids
        return kids

    def state(self, s: State, phi: Formula) -> HeuristicValue:
        key = (s, phi)
        if key in self.memo:
            return self.memo[key]
        kids = self._kids(s)
        if kids:
            val = max(self.transition(child, phi)[0] for _, child in kids)
        elif isinstance(phi, Quant) and phi.kind == "forall" and not _has_instance(s, phi.principal):
            val = NEG_INF
        else:
            val = 0
        self.memo[key] = val
        return val

    def transition(self, target: State, phi: Formula) -> tuple[HeuristicValue, int, Formula]:
        """Weight of a join leading to ``target``; also returns the case and the child's residue."""
        present = isinstance(phi, Quant) and _has_instance(target, phi.principal)
        cases = _guards(phi, present)
        if len(cases) != 1:
            raise AssertionError(f"weighting cases overlap: {cases}")
        case = cases[0]
        if case == 1:
            return 1 + self.state(target, phi.body), case, phi.body
        if case == 2:
            return 1 + self.state(target, phi), case, phi
        if case == 3:
            return self.state(target, phi.body), case, phi.body
        if case == 4:
            return self.state(target, phi), case, phi
        return 0, case, phi


def _require_pnf(phi: Formula) -> None:
    if not is_pnf(phi):
        raise ContractViolation(f"formula is not in prenex normal form: {render_formula(phi)}")


def weigh_state(s: State, phi: Formula, sc: Scenario, weigher: Weigher | None = None) -> HeuristicValue:
    _require_pnf(phi)
    return (weigher or Weigher(sc)).state(s, phi)


def weigh_transition(s: State, t: Join, phi: Formula, sc: Scenario, weigher: Weigher | None = None) -> HeuristicValue:
    _require_pnf(phi)
    if not isinstance(t, Join):
        raise ContractViolation("only join transitions carry weights")
    return (weigher or Weigher(sc)).transition(_apply_join(s, sc, t), phi)[0]


@dataclass
class WeightedJoinTree:
    root: Node

    def nodes(self) -> list[Node]:
        return list(self.root.walk())

    def leaves(self) -> list[Node]:
        return [n for n in self.nodes() if n.is_leaf]

    def neg_inf_nodes(self) -> list[Node]:
        return [n for n in self.nodes() if n.weight == NEG_INF]

    def pruned_roots(self) -> list[Node]:
        """Topmost −∞ nodes; everything below them is cut by guided search."""
        out = []

        def go(node):
            if node.weight == NEG_INF:
                out.append(node)
            else:
                for e in node.edges:
                    go(e.child)

        go(self.root)
        return out

    def pruned_leaves(self) -> list[Node]:
        return [n for n in self.leaves() if n.weight == NEG_INF]

    def pruned_contexts(self) -> set[str]:
        return {n.summary for n in self.pruned_leaves()}

    def paths(self) -> list[tuple[tuple, Node]]:
        """(edge weights from the root, leaf) for every leaf, in declaration order."""
        out = []

        def go(node, ws):
            if node.is_leaf:
                out.append((ws, node))
            for e in node.edges:
                go(e.child, ws + (e.weight,))

        go(self.root, ())
        return out


def build_weighted_tree(sc: Scenario, phi: Formula, root: State | None = None) -> WeightedJoinTree:
    _require_pnf(phi)
    w = Weigher(sc)
    start = root or initial_state(sc)

    def build(s: State, residue: Formula, depth: int) -> Node:
        node = Node(s, residue, w.state(s, residue), depth=depth)
        for t, child in w._kids(s):
            weight, case, child_res = w.transition(child, residue)
            node.edges.append(Edge(t, build(child, child_res, depth + 1), weight, case))
        return node

    return WeightedJoinTree(build(start, phi, 0))
