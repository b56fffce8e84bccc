"""Explicit-state semantics: states, join/out/in transitions, and scenarios."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Mapping

from cipmc.knowledge import Knowledge, analyze, derives, synthesize_matching
from cipmc.protocol import In, Instance, InvalidBinding, Out, PrincipalDef, instantiate
from cipmc.terms import (
    INTRUDER,
    Enc,
    Identity,
    Nonce,
    PrivKey,
    PubKey,
    SymKey,
    Term,
    TermError,
    Tuple,
    apply,
    binders,
    intruder_knowledge,
    is_key,
    render,
    resolve_indices,
    sort_key,
    substitute,
    wire_form,
)


class ScenarioError(ValueError):
    pass


class TransitionError(RuntimeError):
    """A transition was applied to a state that does not enable it."""


@dataclass(frozen=True)
class JoinRule:
    """One admissible binding shape for a principal's open variables.

    ``values`` maps each open variable to a template term whose indices may
    mention ``self`` (the joiner's index) or one of the index variables in
    ``ranges``.  A range ``(m, "B")`` lets ``m`` be any instance of ``B``
    already joined, or a later slot which is then reserved for ``B``.
    """

    values: tuple  # ((var, template), ...)
    ranges: tuple = ()  # ((ivar, principal), ...)


@dataclass
class Scenario:
    protocol: list
    max_instances: int = 2
    initial_knowledge: frozenset = field(default_factory=intruder_knowledge)
    join_rules: Mapping[str, tuple] = field(default_factory=dict)
    allow_self_binding: bool = False

    def __post_init__(self):
        if self.max_instances < 1:
            raise ScenarioError("max_instances must be at least 1")
        self.initial_knowledge = frozenset(self.initial_knowledge)
        names = [d.name for d in self.protocol]
        if len(set(names)) != len(names):
            raise ScenarioError("duplicate principal names")
        for p in self.join_rules:
            if p not in names:
                raise ScenarioError(f"join rule for unknown principal {p}")
        self.defs = {d.name: d for d in self.protocol}

    def principal(self, name: str) -> PrincipalDef:
        try:
            return self.defs[name]
        except KeyError:
            raise ScenarioError(f"unknown principal {name}") from None


# ------------------------------------------------------------ transitions

@dataclass(frozen=True)
class Join:
    principal: str
    index: int
    binding: tuple = ()  # sorted ((var, index), value) pairs

    @classmethod
    def make(cls, principal: str, index: int, binding: Mapping | None = None) -> "Join":
        items = []
        for key, val in (binding or {}).items():
            key = key if isinstance(key, tuple) else (key, index)
            items.append((key, val))
        return cls(principal, index, tuple(sorted(items, key=lambda kv: kv[0])))

    def label(self) -> str:
        b = ", ".join(f"{n}_{i} ↦ {render(v)}" for (n, i), v in self.binding)
        return f"join {self.principal}_{self.index}" + (f" [{b}]" if b else "")


@dataclass(frozen=True)
class OutStep:
    instance: int
    message: Term

    def label(self) -> str:
        return f"out {self.instance}: {render(self.message)}"


@dataclass(frozen=True)
class InStep:
    instance: int
    pattern: Term
    sigma: tuple = ()  # sorted ((var, index), value) pairs

    @property
    def substitution(self) -> dict:
        return dict(self.sigma)

    def message(self) -> Term:
        return apply(wire_form(self.pattern), self.substitution)

    def label(self) -> str:
        return f"in {self.instance}: {render(self.message())}"


Transition = Join | OutStep | InStep


# ------------------------------------------------------------------ state

class State:
    """⟨C, χ, κ⟩ plus the join budget.

    ``reserved`` records slots promised to a principal by a forward reference
    in an earlier join binding.
    """

    __slots__ = ("instances", "chi", "knowledge", "next_index", "joins_left", "reserved", "_chi_items", "_hash")

    def __init__(self, instances, chi: dict, knowledge: Knowledge, next_index: int, joins_left: int,
                 reserved=frozenset(), _chi_items=None, _sorted=False):
        self.instances = tuple(instances) if _sorted else tuple(sorted(instances, key=lambda i: i.index))
        self.chi = chi
        self.knowledge = knowledge
        self.next_index = next_index
        self.joins_left = joins_left
        self.reserved = frozenset(reserved)
        self._chi_items = _chi_items if _chi_items is not None else frozenset(chi.items())
        self._hash = hash((self.instances, self._chi_items, knowledge, next_index, joins_left, self.reserved))

    def _key(self):
        return (self.instances, self._chi_items, self.knowledge, self.next_index, self.joins_left, self.reserved)

    def __eq__(self, other):
        return isinstance(other, State) and self._hash == other._hash and self._key() == other._key()

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"State({context_summary(self)}, joins_left={self.joins_left})"

    def instance(self, index: int) -> Instance:
        for inst in self.instances:
            if inst.index == index:
                return inst
        raise TransitionError(f"no instance with index {index}")

    @property
    def used_indices(self) -> set[int]:
        return {i.index for i in self.instances}

    def reservation(self, index: int) -> str | None:
        for idx, p in self.reserved:
            if idx == index:
                return p
        return None


def context_summary(s: State) -> str:
    return "{" + ", ".join(i.label for i in s.instances) + "}"


def initial_state(sc: Scenario) -> State:
    return State((), {}, analyze(sc.initial_knowledge), 1, sc.max_instances)


# ------------------------------------------------------------------ joins

def _id_order(t: Term):
    # the intruder first, then everything else in the canonical order
    return (0 if t == Identity(INTRUDER) else 1, sort_key(t))


def _open_var_candidates(s: State, sc: Scenario, d: PrincipalDef, index: int) -> list[dict]:
    per_var = []
    for var, sort in d.open_vars:
        if sort == "id":
            cands = [t for t in s.knowledge.analyzed if isinstance(t, Identity)]
            if sc.allow_self_binding:
                cands.append(Identity(d.name, index))
            else:
                cands = [t for t in cands if t != Identity(d.name, index)]
        else:
            cands = [t for t in s.knowledge.analyzed if is_key(t)]
        per_var.append(sorted(set(cands), key=_id_order))
    names = [v for v, _ in d.open_vars]
    return [dict(zip(names, combo)) for combo in product(*per_var)]


def _slot_ok(s: State, index: int, principal: str) -> bool:
    owner = s.reservation(index)
    return owner is None or owner == principal


def _rule_candidates(s: State, sc: Scenario, d: PrincipalDef, index: int) -> list[tuple[dict, set]]:
    """Bindings produced by join rules, each with the slots it reserves."""
    out = []
    used = s.used_indices
    forward = [m for m in range(s.next_index, s.next_index + s.joins_left) if m != index and m not in used]
    for rule in sc.join_rules[d.name]:
        choices = []
        for ivar, q in rule.ranges:
            opts = [(i.index, False) for i in s.instances if i.principal == q and i.index != index]
            opts += [(m, True) for m in forward if _slot_ok(s, m, q)]
            choices.append([(ivar, q, m, fwd) for m, fwd in opts])
        for combo in product(*choices):
            env = {"self": index}
            reserve = {}
            ok = True
            for ivar, q, m, fwd in combo:
                if m in reserve and reserve[m] != q:
                    ok = False
                env[ivar] = m
                if fwd:
                    reserve[m] = q
            if not ok:
                continue
            binding = {var: resolve_indices(tpl, env) for var, tpl in rule.values}
            out.append((binding, {(m, q) for m, q in reserve.items()}))
    return out


def join_transitions(s: State, sc: Scenario) -> list[Join]:
    if s.joins_left <= 0:
        return []
    index = s.next_index
    out = []
    for d in sc.protocol:
        if not _slot_ok(s, index, d.name):
            continue
        if d.name in sc.join_rules:
            bindings = [b for b, _ in _rule_candidates(s, sc, d, index)]
        else:
            bindings = _open_var_candidates(s, sc, d, index)
        for b in bindings:
            out.append(Join.make(d.name, index, b))
    return out


def _forward_refs(s: State, sc: Scenario, t: Join) -> set:
    res = set()
    used = s.used_indices | {t.index}
    for _, val in t.binding:
        for sub in _identities_in(val):
            if isinstance(sub.index, int) and sub.index not in used and sub.name in sc.defs:
                res.add((sub.index, sub.name))
    return res


def _identities_in(t: Term):
    if isinstance(t, Identity):
        yield t
    elif isinstance(t, (PubKey, PrivKey)):
        yield from _identities_in(t.owner)
    elif isinstance(t, Tuple):
        for p in t.parts:
            yield from _identities_in(p)
    elif isinstance(t, Enc):
        yield from _identities_in(t.payload)
        yield from _identities_in(t.key)


def _apply_join(s: State, sc: Scenario, t: Join) -> State:
    if s.joins_left <= 0:
        raise TransitionError("instance budget exhausted")
    if t.index < 1 or t.index in s.used_indices:
        raise TransitionError(f"index {t.index} is not free")
    if not _slot_ok(s, t.index, t.principal):
        raise TransitionError(f"slot {t.index} is reserved for {s.reservation(t.index)}")
    d = sc.principal(t.principal)
    binding = dict(t.binding)
    names = {v for v, _ in d.open_vars}
    if {n for n, _ in binding} != names or any(i != t.index for _, i in binding):
        raise TransitionError(f"binding of {t.principal}_{t.index} must cover exactly {sorted(names)}")
    try:
        inst = instantiate(d, t.index, binding)
    except InvalidBinding as exc:
        raise TransitionError(str(exc)) from exc
    me = Identity(t.principal, t.index)
    chi = dict(s.chi)
    chi.update(binding)
    reserved = {r for r in s.reserved if r[0] != t.index} | _forward_refs(s, sc, t)
    return State(
        s.instances + (inst,),
        chi,
        s.knowledge.add(me, PubKey(me)),
        max(s.next_index, t.index + 1),
        s.joins_left - 1,
        reserved,
    )


# ---------------------------------------------------------- communication

def _out_message(inst: Instance, chi: Mapping) -> Term:
    try:
        return substitute(inst.head.message, chi, binders_too=False, strict=True)
    except TermError as exc:
        raise ScenarioError(f"{inst.label}: output is not ground ({exc})") from exc


def _in_pattern(inst: Instance, chi: Mapping) -> Term:
    try:
        return substitute(inst.head.pattern, chi, binders_too=False, strict=True)
    except TermError as exc:
        raise ScenarioError(f"{inst.label}: input pattern is not ground ({exc})") from exc


def _value_rank(v: Term, receiver: int) -> tuple:
    if isinstance(v, Nonce):
        r = 4 if v.index == receiver else 0
    elif v == Identity(INTRUDER) or (isinstance(v, (PubKey, PrivKey)) and v.owner == Identity(INTRUDER)):
        r = 1
    elif isinstance(v, SymKey) and v.index is None:
        r = 1
    elif isinstance(v, (Tuple, Enc)):
        r = 3
    else:
        r = 2
    return (r, render(v))


_SYNTH_CACHE: dict = {}


def _synthesize(k: Knowledge, pattern: Term, sorts: Mapping) -> list:
    key = (k, pattern, tuple(sorted(sorts.items())))
    hit = _SYNTH_CACHE.get(key)
    if hit is None:
        if len(_SYNTH_CACHE) > 200_000:
            _SYNTH_CACHE.clear()
        hit = _SYNTH_CACHE[key] = synthesize_matching(k, pattern, sorts)
    return hit


def in_steps(s: State, inst: Instance) -> list[InStep]:
    pattern = _in_pattern(inst, s.chi)
    key = (s.knowledge, pattern, inst.index)
    hit = _STEP_CACHE.get(key)
    if hit is None:
        if len(_STEP_CACHE) > 200_000:
            _STEP_CACHE.clear()
        hit = _STEP_CACHE[key] = _in_steps(s.knowledge, pattern, inst)
    return hit


_STEP_CACHE: dict = {}


def _in_steps(k: Knowledge, pattern: Term, inst: Instance) -> list[InStep]:
    sols = _synthesize(k, pattern, inst.binder_sorts)
    steps = []
    for sigma in sols:
        items = tuple(sorted(sigma.items(), key=lambda kv: kv[0]))
        rank = tuple(_value_rank(v, inst.index) for _, v in items)
        steps.append((rank, InStep(inst.index, pattern, items)))
    steps.sort(key=lambda x: x[0])
    return [st for _, st in steps]


def comm_transitions(s: State) -> list[Transition]:
    """Enabled out/in steps, least-advanced instance first."""
    out: list = []
    for inst in sorted(s.instances, key=lambda i: (i.pc, i.index)):
        head = inst.head
        if head is None:
            continue
        if isinstance(head, Out):
            out.append(OutStep(inst.index, _out_message(inst, s.chi)))
        else:
            out.extend(in_steps(s, inst))
    return out


def successors(s: State, sc: Scenario, interleave_joins: bool = False) -> list[Transition]:
    """Join-first: communication starts once the budget is used up."""
    if interleave_joins:
        return join_transitions(s, sc) + comm_transitions(s)
    joins = join_transitions(s, sc)
    if s.joins_left > 0 and joins:
        return joins
    return comm_transitions(s)


def _moved(s: State, inst: Instance) -> tuple:
    return tuple(inst.advance() if i is inst else i for i in s.instances)


def step(s: State, t: Transition, sc: Scenario | None = None) -> State:
    """Apply a transition produced by the generators above, without re-checking it."""
    if isinstance(t, Join):
        return _apply_join(s, sc, t)
    inst = s.instance(t.instance)
    if isinstance(t, OutStep):
        return State(_moved(s, inst), s.chi, s.knowledge.add(t.message), s.next_index, s.joins_left, s.reserved,
                     _chi_items=s._chi_items, _sorted=True)
    chi = dict(s.chi)
    chi.update(t.sigma)
    return State(_moved(s, inst), chi, s.knowledge, s.next_index, s.joins_left, s.reserved,
                 _chi_items=s._chi_items.union(t.sigma), _sorted=True)


def apply_transition(s: State, t: Transition, sc: Scenario | None = None) -> State:
    """Apply ``t`` after checking that ``s`` enables it."""
    if isinstance(t, Join):
        if sc is None:
            raise TransitionError("join transitions need the scenario")
        return _apply_join(s, sc, t)
    inst = s.instance(t.instance)
    head = inst.head
    if isinstance(t, OutStep):
        if not isinstance(head, Out):
            raise TransitionError(f"{inst.label} is not ready to send")
        msg = _out_message(inst, s.chi)
        if msg != t.message:
            raise TransitionError(f"{inst.label} sends {render(msg)}, not {render(t.message)}")
        return step(s, t)
    if isinstance(t, InStep):
        if not isinstance(head, In):
            raise TransitionError(f"{inst.label} is not ready to receive")
        pattern = _in_pattern(inst, s.chi)
        if pattern != t.pattern:
            raise TransitionError(f"{inst.label} expects {render(pattern)}")
        sigma = dict(t.sigma)
        if {(b.name, b.index) for b in binders(pattern)} != set(sigma):
            raise TransitionError("substitution does not cover the pattern's binders")
        for key, val in sigma.items():
            sort = inst.binder_sorts.get(key)
            if (sort == "id" and not isinstance(val, Identity)) or (sort == "key" and not is_key(val)):
                raise TransitionError(f"{key[0]}_{key[1]} cannot hold {render(val)}")
            if key in s.chi:
                raise TransitionError(f"{key[0]}_{key[1]} is already assigned")
        if not derives(s.knowledge, apply(wire_form(pattern), sigma)):
            raise TransitionError("the intruder cannot produce this message")
        return step(s, t)
    raise TransitionError(f"unknown transition {t!r}")


def is_terminal(s: State) -> bool:
    """Budget used and no instance can move (finished or stuck on input)."""
    if s.joins_left > 0:
        return False
    for inst in s.instances:
        head = inst.head
        if head is None:
            continue
        if isinstance(head, Out):
            return False
        if in_steps(s, inst):
            return False
    return True


def is_complete(s: State) -> bool:
    """Budget used and every instance ran to the end."""
    return s.joins_left == 0 and all(i.finished for i in s.instances)


def join_tree(sc: Scenario, root: State | None = None) -> Iterable[tuple[State, list]]:
    """Preorder walk of the join tree: yields (state, [(join, child), ...])."""
    stack = [root or initial_state(sc)]
    while stack:
        s = stack.pop()
        kids = [(t, _apply_join(s, sc, t)) for t in join_transitions(s, sc)]
        yield s, kids
        stack.extend(c for _, c in reversed(kids))
