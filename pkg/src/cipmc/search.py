"""Attack search: guided exploration of the weighted join tree, plus BFS/DFS baselines."""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

from cipmc.heuristic import NEG_INF, WeightedJoinTree, build_weighted_tree
from cipmc.knowledge import frontier
from cipmc.logic import EvalContext, Formula, evaluate, pnf
from cipmc.statespace import (
    InStep,
    Join,
    OutStep,
    Scenario,
    State,
    Transition,
    _in_pattern,
    apply_transition,
    comm_transitions,
    context_summary,
    initial_state,
    is_complete,
    is_terminal,
    step,
    successors,
)
from cipmc.protocol import Out
from cipmc.terms import INTRUDER, match, parse_term, render

STRATEGIES = ("guided", "bfs", "dfs")
CHECK_MODES = ("complete", "terminal", "all")


class SoundnessError(AssertionError):
    pass


@dataclass
class SearchConfig:
    strategy: str = "guided"
    check_at: str = "complete"
    interleave_joins: bool = False
    max_states: int = 2_000_000

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.check_at not in CHECK_MODES:
            raise ValueError(f"unknown check mode {self.check_at!r}")
        if self.strategy == "guided" and self.interleave_joins:
            raise ValueError("guided search needs join-first scheduling")


@dataclass
class SearchStats:
    states_generated: int = 0
    states_expanded: int = 0
    join_nodes_pruned: int = 0
    join_leaves: int = 0
    join_leaves_pruned: int = 0
    contexts_explored: int = 0
    context_kinds: int = 0
    context_kinds_pruned: int = 0
    wall_time: float = 0.0

    @property
    def contexts_pruned_fraction(self) -> float:
        return self.join_leaves_pruned / self.join_leaves if self.join_leaves else 0.0

    def as_dict(self) -> dict:
        return {
            "states_generated": self.states_generated,
            "states_expanded": self.states_expanded,
            "join_nodes_pruned": self.join_nodes_pruned,
            "join_leaves": self.join_leaves,
            "join_leaves_pruned": self.join_leaves_pruned,
            "contexts_pruned_fraction": round(self.contexts_pruned_fraction, 6),
            "contexts_explored": self.contexts_explored,
            "context_kinds": self.context_kinds,
            "context_kinds_pruned": self.context_kinds_pruned,
            "wall_time": round(self.wall_time, 6),
        }


@dataclass
class AttackTrace:
    transitions: list
    final_state: State
    violated: Formula
    states: list = field(default_factory=list)  # state before each transition

    @property
    def witness(self) -> str:
        return render_trace(self)

    @property
    def context(self) -> str:
        return context_summary(self.final_state)


@dataclass
class SearchResult:
    verdict: str  # "attack" | "no_attack" | "bound_exhausted"
    trace: AttackTrace | None
    stats: SearchStats
    tree: WeightedJoinTree | None = None

    @property
    def attack(self) -> bool:
        return self.verdict == "attack"


class _Budget(Exception):
    pass


def _checked(s: State, mode: str) -> bool:
    if mode == "all":
        return True
    if mode == "terminal":
        return is_terminal(s)
    return is_complete(s)


def violates(s: State, phi: Formula) -> bool:
    return not evaluate(EvalContext(s.knowledge, s.chi), phi)


class _Run:
    def __init__(self, sc: Scenario, phi: Formula, cfg: SearchConfig):
        self.sc = sc
        self.phi = phi
        self.cfg = cfg
        self.stats = SearchStats()
        self.parent: dict = {}

    def tick(self):
        self.stats.states_expanded += 1
        if self.stats.states_expanded > self.cfg.max_states:
            raise _Budget

    def is_attack(self, s: State) -> bool:
        return _checked(s, self.cfg.check_at) and violates(s, self.phi)

    def trace(self, s: State) -> AttackTrace:
        steps = []
        cur = s
        while cur in self.parent:
            prev, t = self.parent[cur]
            steps.append((prev, t))
            cur = prev
        steps.reverse()
        return AttackTrace([t for _, t in steps], s, self.phi, [p for p, _ in steps])

    def dfs(self, start: State, comm_only: bool) -> State | None:
        seen: set = set()
        stack = [(start, None, None)]
        while stack:
            s, prev, t = stack.pop()
            if s in seen:
                continue
            seen.add(s)
            if prev is not None:
                self.parent[s] = (prev, t)
            if self.is_attack(s):
                return s
            self.tick()
            succ = comm_transitions(s) if comm_only else successors(s, self.sc, self.cfg.interleave_joins)
            self.stats.states_generated += len(succ)
            for tr in reversed(succ):
                nxt = step(s, tr, self.sc)
                if nxt not in seen:
                    stack.append((nxt, s, tr))
        return None

    def bfs(self, start: State) -> State | None:
        seen = {start}
        queue = deque([start])
        while queue:
            s = queue.popleft()
            if self.is_attack(s):
                return s
            self.tick()
            succ = successors(s, self.sc, self.cfg.interleave_joins)
            self.stats.states_generated += len(succ)
            for tr in succ:
                nxt = step(s, tr, self.sc)
                if nxt not in seen:
                    seen.add(nxt)
                    self.parent[nxt] = (s, tr)
                    queue.append(nxt)
        return None


def ordered_leaves(tree: WeightedJoinTree) -> list:
    """Surviving leaves, heaviest edge-weight sequence first; ties keep declaration order."""
    alive = [(ws, n) for ws, n in tree.paths() if n.weight != NEG_INF and NEG_INF not in ws]
    return [n for ws, n in sorted(alive, key=lambda p: tuple(-w for w in p[0]))]


def _guided(run: _Run, tree: WeightedJoinTree) -> State | None:
    stats = run.stats
    nodes = tree.nodes()
    stats.states_generated += len(nodes)
    stats.join_leaves = len(tree.leaves())
    stats.join_leaves_pruned = len(tree.pruned_leaves())
    stats.join_nodes_pruned = len(tree.neg_inf_nodes())
    # leaves grouped by principal/index shape, ignoring open-variable bindings
    kinds = {n.summary for n in tree.leaves()}
    alive = {n.summary for n in tree.leaves() if n.weight != NEG_INF}
    stats.context_kinds = len(kinds)
    stats.context_kinds_pruned = len(kinds - alive)
    # join parents, and the non-pruned internal nodes count as expanded
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node.weight == NEG_INF:
            continue
        if node.edges:
            run.tick()
            if run.cfg.check_at == "all" and run.is_attack(node.state):
                return node.state
        for e in node.edges:
            run.parent.setdefault(e.child.state, (node.state, e.join))
            stack.append(e.child)
    for leaf in ordered_leaves(tree):
        stats.contexts_explored += 1
        hit = run.dfs(leaf.state, comm_only=True)
        if hit is not None:
            return hit
    return None


def find_attack(sc: Scenario, phi: Formula, cfg: SearchConfig | None = None) -> SearchResult:
    cfg = cfg or SearchConfig()
    # weights need prenex form; attacks are judged against the property as written
    phi_n = pnf(phi)
    run = _Run(sc, phi, cfg)
    t0 = time.perf_counter()
    tree = None
    try:
        if cfg.strategy == "guided":
            tree = build_weighted_tree(sc, phi_n)
            hit = _guided(run, tree)
        elif cfg.strategy == "bfs":
            hit = run.bfs(initial_state(sc))
        else:
            hit = run.dfs(initial_state(sc), comm_only=False)
    except _Budget:
        run.stats.wall_time = time.perf_counter() - t0
        return SearchResult("bound_exhausted", None, run.stats, tree)
    run.stats.wall_time = time.perf_counter() - t0
    if hit is None:
        return SearchResult("no_attack", None, run.stats, tree)
    return SearchResult("attack", run.trace(hit), run.stats, tree)


def explore_context(sc: Scenario, phi: Formula, leaf: State, cfg: SearchConfig | None = None,
                    prefix: list | None = None) -> SearchResult:
    """Depth-first search of the communications below one join-tree leaf."""
    cfg = cfg or SearchConfig()
    run = _Run(sc, phi, cfg)
    t0 = time.perf_counter()
    try:
        hit = run.dfs(leaf, comm_only=True)
    except _Budget:
        return SearchResult("bound_exhausted", None, run.stats)
    run.stats.wall_time = time.perf_counter() - t0
    if hit is None:
        return SearchResult("no_attack", None, run.stats)
    tr = run.trace(hit)
    if prefix:
        tr = AttackTrace(list(prefix) + tr.transitions, tr.final_state, tr.violated, tr.states)
    return SearchResult("attack", tr, run.stats)


def compare_strategies(sc: Scenario, phi: Formula, max_states: int = 2_000_000) -> dict:
    guided = find_attack(sc, phi, SearchConfig("guided", max_states=max_states))
    bfs = find_attack(sc, phi, SearchConfig("bfs", max_states=max_states))
    both = "bound_exhausted" not in (guided.verdict, bfs.verdict)
    if both and guided.verdict != bfs.verdict:
        raise SoundnessError(f"guided says {guided.verdict}, bfs says {bfs.verdict}")
    return {
        "verdict": guided.verdict if both else None,
        "guided": guided.stats.as_dict(),
        "bfs": bfs.stats.as_dict(),
        "guided_verdict": guided.verdict,
        "bfs_verdict": bfs.verdict,
        "guided_no_worse": guided.stats.states_expanded <= bfs.stats.states_expanded,
    }


# ------------------------------------------------------------------ traces

def replay(sc: Scenario, transitions: list, start: State | None = None) -> list[State]:
    """States visited when applying ``transitions`` from ``start`` (default: the initial state)."""
    states = [start or initial_state(sc)]
    for t in transitions:
        states.append(apply_transition(states[-1], t, sc))
    return states


def _dedup(items):
    seen = set()
    out = []
    for x in items:
        if x not in seen:
            seen.add(x)
            out.append(x)
    return out


def trace_lines(sc: Scenario | None, tr: AttackTrace) -> list[str]:
    lines = []
    states = tr.states
    for i, t in enumerate(tr.transitions):
        if isinstance(t, Join):
            continue
        before = states[i] if i < len(states) else None
        label = _label(before, t.instance)
        if isinstance(t, OutStep):
            lines.append(f"{label} → {INTRUDER} : {render(t.message)}")
        elif isinstance(t, InStep):
            msg = t.message()
            line = f"{INTRUDER} → {label} : {render(msg)}"
            if before is not None and msg not in before.knowledge.analyzed:
                parts = _dedup(frontier(before.knowledge, msg))
                line += ", κ ▷ " + ", ".join(render(p) for p in parts)
            lines.append(line)
    return [f"{n}. {line}" for n, line in enumerate(lines, 1)]


def _label(s: State | None, index: int) -> str:
    if s is not None:
        for inst in s.instances:
            if inst.index == index:
                return inst.label
    return f"#{index}"


def render_trace(tr: AttackTrace) -> str:
    return "\n".join(trace_lines(None, tr))


def make_trace(sc: Scenario, phi: Formula, transitions: list) -> AttackTrace:
    """Wrap a transition list (e.g. a hand-written trace) as an AttackTrace."""
    states = replay(sc, transitions)
    return AttackTrace(list(transitions), states[-1], phi, states[:-1])


def sweep(sc: Scenario, phi: Formula | None, start: State | None = None, *, check_at: str = "all",
          interleave_joins: bool = False, max_states: int = 2_000_000) -> dict:
    """Visit every state reachable from ``start``.

    Returns the visited count, the states (per ``check_at``) violating ``phi``,
    and the (κ, χ) pairs of terminal states.
    """
    start = start or initial_state(sc)
    seen = {start}
    queue = deque([start])
    bad = []
    terminal = set()
    while queue:
        s = queue.popleft()
        if phi is not None and _checked(s, check_at) and violates(s, phi):
            bad.append(s)
        if is_terminal(s):
            terminal.add((s.knowledge.base, s._chi_items))
        for tr in successors(s, sc, interleave_joins):
            nxt = step(s, tr, sc)
            if nxt not in seen:
                if len(seen) >= max_states:
                    raise RuntimeError(f"sweep exceeded {max_states} states")
                seen.add(nxt)
                queue.append(nxt)
    return {"visited": len(seen), "violations": bad, "terminal": terminal}


def transitions_for(sc: Scenario, joins: list, events: list) -> list:
    """Build a transition list from joins plus message-level events.

    ``events`` holds ``(instance_index, message)`` pairs.  The direction
    follows from the instance's next action; an input's substitution is
    recovered by matching the instance's pattern against the message.
    """
    state = initial_state(sc)
    out = []
    for j in joins:
        state = apply_transition(state, j, sc)
        out.append(j)
    for index, msg in events:
        if isinstance(msg, str):
            msg = parse_term(msg)
        inst = state.instance(index)
        if isinstance(inst.head, Out):
            t = OutStep(index, msg)
        else:
            pattern = _in_pattern(inst, state.chi)
            sigma = match(pattern, msg)
            if sigma is None:
                raise ValueError(f"{inst.label} cannot accept {render(msg)}")
            t = InStep(index, pattern, tuple(sorted(sigma.items(), key=lambda kv: kv[0])))
        state = apply_transition(state, t, sc)
        out.append(t)
    return out
