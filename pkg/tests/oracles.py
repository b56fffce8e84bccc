"""Reference implementations used only by the tests.

Each oracle is written independently of the library code it checks: the
formula evaluator works on bitsets over every context at once, the closure
computes a fixpoint over a finite term universe, and the weigher recomputes
the join-tree weights straight from the case table without memoisation.
"""

from __future__ import annotations

import itertools

from cipmc.heuristic import NEG_INF
from cipmc.logic import And, Derives, Eq, Not, Or, Quant
from cipmc.statespace import join_transitions, step
from cipmc.terms import Enc, Identity, Nonce, PrivKey, PubKey, SymKey, Tuple

# ---------------------------------------------------------------- formulas

UNIVERSE = (Nonce("na", 1), Nonce("na", 2), Nonce("nb", 2))
PRINCIPALS = ("A", "B")
VARIABLES = ("x", "z")
INDICES = (1, 2)
SLOTS = tuple((v, n) for v in VARIABLES for n in INDICES)
VALUES = (None,) + UNIVERSE


class ContextSpace:
    """Every context with at most two instances per principal.

    A context fixes which of A_1, A_2, B_1, B_2 are present, which universe
    atoms the intruder holds, and a value (or nothing) for each of the four
    variable slots.  Formulas are evaluated to a bitmask over all of them.
    """

    def __init__(self):
        doms = list(itertools.product(*[(False, True)] * 4))
        kappas = list(itertools.product(*[(False, True)] * len(UNIVERSE)))
        chis = list(itertools.product(VALUES, repeat=len(SLOTS)))
        self.points = list(itertools.product(doms, kappas, chis))
        self.size = len(self.points)
        self.full = (1 << self.size) - 1
        present = {}
        held = {u: 0 for u in UNIVERSE}
        slot = {(s, u): 0 for s in SLOTS for u in UNIVERSE}
        for (p, n) in itertools.product(PRINCIPALS, INDICES):
            present[(p, n)] = 0
        for c, (dom, kap, chi) in enumerate(self.points):
            bit = 1 << c
            for j, (p, n) in enumerate(itertools.product(PRINCIPALS, INDICES)):
                if dom[j]:
                    present[(p, n)] |= bit
            for u, h in zip(UNIVERSE, kap):
                if h:
                    held[u] |= bit
            for s, val in zip(SLOTS, chi):
                if val is not None:
                    slot[(s, val)] |= bit
        self.present, self.held, self.slot = present, held, slot

    def term_mask(self, t) -> int:
        if isinstance(t, Identity) and t.name in PRINCIPALS:
            return self.present.get((t.name, t.index), 0)
        return self.held.get(t, 0)

    def mask(self, phi, env=None) -> int:
        env = env or {}
        if isinstance(phi, Eq):
            n = env.get(phi.index, phi.index)
            return self.slot.get(((phi.var, n), _resolve(phi.rhs, env)), 0)
        if isinstance(phi, Derives):
            return self.term_mask(_resolve(phi.term, env))
        if isinstance(phi, Not):
            return self.full & ~self.mask(phi.body, env)
        if isinstance(phi, And):
            return self.mask(phi.left, env) & self.mask(phi.right, env)
        if isinstance(phi, Or):
            return self.mask(phi.left, env) | self.mask(phi.right, env)
        if isinstance(phi, Quant):
            acc = self.full if phi.kind == "forall" else 0
            for n in INDICES:
                body = self.mask(phi.body, {**env, phi.ivar: n})
                dom = self.present[(phi.principal, n)]
                if phi.kind == "forall":
                    acc &= (self.full & ~dom) | body
                else:
                    acc |= dom & body
            return acc
        raise TypeError(phi)

    def knowledge_and_chi(self, c: int):
        """The context numbered ``c`` as library inputs (base terms, χ)."""
        from cipmc.terms import intruder_knowledge

        dom, kap, chi = self.points[c]
        base = set(intruder_knowledge())
        for j, (p, n) in enumerate(itertools.product(PRINCIPALS, INDICES)):
            if dom[j]:
                base.add(Identity(p, n))
        base.update(u for u, h in zip(UNIVERSE, kap) if h)
        return base, {s: v for s, v in zip(SLOTS, chi) if v is not None}


def _resolve(t, env):
    if isinstance(t, (Identity, Nonce)) and isinstance(t.index, str):
        return type(t)(t.name, env[t.index])
    return t


# --------------------------------------------------------------- knowledge

def _complement(k):
    if isinstance(k, PubKey):
        return PrivKey(k.owner)
    if isinstance(k, PrivKey):
        return PubKey(k.owner)
    return k


def _sub(t, out):
    out.add(t)
    if isinstance(t, Tuple):
        for x in t.parts:
            _sub(x, out)
    elif isinstance(t, Enc):
        _sub(t.payload, out)
        _sub(t.key, out)
        out.add(_complement(t.key))
    elif isinstance(t, (PubKey, PrivKey)):
        out.add(t.owner)


def closure_derives(base, query) -> bool:
    """Alternate decomposition and composition inside the subterm universe until nothing changes."""
    universe = set()
    for t in list(base) + [query]:
        _sub(t, universe)
    known = set(base)
    changed = True
    while changed:
        changed = False
        for t in universe - known:
            ok = False
            if isinstance(t, Tuple) and all(x in known for x in t.parts):
                ok = True
            elif isinstance(t, Enc) and t.payload in known and t.key in known:
                ok = True
            else:
                for h in known:
                    if isinstance(h, Tuple) and t in h.parts:
                        ok = True
                    elif isinstance(h, Enc) and h.payload == t and _complement(h.key) in known:
                        ok = True
                    if ok:
                        break
            if ok:
                known.add(t)
                changed = True
    return query in known


# --------------------------------------------------------------- heuristic

def _has(state, principal) -> bool:
    return any(isinstance(t, Identity) and t.name == principal and isinstance(t.index, int)
               for t in state.knowledge.analyzed)


def naive_state_weight(state, phi, sc) -> float:
    joins = join_transitions(state, sc)
    if joins:
        return max(naive_edge_weight(state, j, phi, sc) for j in joins)
    if isinstance(phi, Quant) and phi.kind == "forall" and not _has(state, phi.principal):
        return NEG_INF
    return 0


def naive_edge_weight(state, join, phi, sc) -> float:
    child = step(state, join, sc)
    if not isinstance(phi, Quant):
        return 0
    there = _has(child, phi.principal)
    if phi.kind == "forall" and there:
        w = naive_state_weight(child, _instantiate(phi, join), sc)
        return w if w == NEG_INF else 1 + w
    if phi.kind == "exists" and not there:
        w = naive_state_weight(child, phi, sc)
        return w if w == NEG_INF else 1 + w
    if phi.kind == "exists":
        return naive_state_weight(child, _instantiate(phi, join), sc)
    return naive_state_weight(child, phi, sc)


def _instantiate(phi, join):
    # the weights only look at the quantifier prefix, so dropping the leading
    # quantifier is all the residue needs
    return phi.body
