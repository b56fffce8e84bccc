"""Dolev-Yao intruder knowledge.

``analyze`` closes a set of messages under projection and decryption with
known keys.  ``derives`` then decides synthesis by structural recursion,
which is complete here because decryption keys are always atomic.
"""

from __future__ import annotations

from itertools import product
from typing import Iterable

from cipmc.terms import (
    Binder,
    Enc,
    Identity,
    Term,
    Tuple,
    apply,
    complement,
    is_key,
    match,
    render,
    sort_key,
    subterms,
    wire_form,
)


class Knowledge:
    __slots__ = ("base", "analyzed", "_hash")

    def __init__(self, base: frozenset, analyzed: frozenset):
        self.base = base
        self.analyzed = analyzed
        self._hash = hash(base)

    def __eq__(self, other):
        return isinstance(other, Knowledge) and self.base == other.base

    def __hash__(self):
        return self._hash

    def __contains__(self, t: Term) -> bool:
        return t in self.analyzed

    def __repr__(self):
        return f"Knowledge({sorted(render(t) for t in self.base)})"

    def add(self, *terms: Term) -> "Knowledge":
        new = [t for t in terms if t not in self.base]
        if not new:
            return self
        key = (self, tuple(new))
        hit = _ADD_CACHE.get(key)
        if hit is None:
            if len(_ADD_CACHE) > 200_000:
                _ADD_CACHE.clear()
            hit = _ADD_CACHE[key] = _extend(self, new)
        return hit

    def identities(self) -> list[Identity]:
        return sorted((t for t in self.analyzed if isinstance(t, Identity)), key=sort_key)

    def sorted_closure(self) -> list[str]:
        return sorted(render(t) for t in self.analyzed)


_ADD_CACHE: dict = {}


def _close(known: set, pending: list) -> set:
    # blocked: encryptions waiting for their decryption key, keyed by that key
    blocked: dict = {}
    for t in known:
        if isinstance(t, Enc):
            dk = complement(t.key) if is_key(t.key) else None
            if dk is not None and dk not in known:
                blocked.setdefault(dk, []).append(t)
    while pending:
        t = pending.pop()
        if t in known:
            continue
        known.add(t)
        if isinstance(t, Tuple):
            pending.extend(t.parts)
        elif isinstance(t, Enc):
            dk = complement(t.key) if is_key(t.key) else None
            if dk is not None:
                if dk in known:
                    pending.append(t.payload)
                else:
                    blocked.setdefault(dk, []).append(t)
        if t in blocked:
            pending.extend(e.payload for e in blocked.pop(t))
    return known


def analyze(base: Iterable[Term]) -> Knowledge:
    base = frozenset(base)
    return Knowledge(base, frozenset(_close(set(), list(base))))


def _extend(k: Knowledge, new: list) -> Knowledge:
    known = set(k.analyzed)
    return Knowledge(k.base | frozenset(new), frozenset(_close(known, list(new))))


def derives(k: Knowledge, m: Term) -> bool:
    """κ ▷ m for ground ``m``."""
    if m in k.analyzed:
        return True
    if isinstance(m, Tuple):
        return all(derives(k, p) for p in m.parts)
    if isinstance(m, Enc):
        return derives(k, m.key) and derives(k, m.payload)
    return False


def _merge(parts: Iterable[dict]) -> dict | None:
    out: dict = {}
    for p in parts:
        for key, val in p.items():
            if out.setdefault(key, val) != val:
                return None
    return out


def _solutions(k: Knowledge, p: Term, sorts: dict) -> list[dict]:
    """All σ (as dicts) with apply(wire_form(p), σ) derivable.

    Binder values come either from the analysis closure or from matching a
    sub-pattern against a message the intruder holds (and may replay without
    being able to open it).
    """
    found: list[dict] = []
    seen: set = set()

    def push(sigma: dict) -> None:
        key = frozenset(sigma.items())
        if key not in seen:
            seen.add(key)
            found.append(sigma)

    has_binder = any(isinstance(s, Binder) for s in subterms(p))
    if not has_binder:
        if derives(k, wire_form(p)):
            push({})
        return found
    if isinstance(p, Binder):
        sort = sorts.get((p.name, p.index))
        for t in k.analyzed:
            if _sort_ok(sort, t):
                push({(p.name, p.index): t})
        return found
    # replay: a held message matching the pattern as a whole
    for t in k.analyzed:
        if type(t) is type(p):
            sigma = match(p, t)
            if sigma is not None and all(_sort_ok(sorts.get(b), v) for b, v in sigma.items()):
                push(sigma)
    # composition driven by the pattern's shape
    if isinstance(p, Tuple):
        for combo in product(*(_solutions(k, q, sorts) for q in p.parts)):
            merged = _merge(combo)
            if merged is not None:
                push(merged)
    elif isinstance(p, Enc) and derives(k, complement(p.key)):
        for sigma in _solutions(k, p.payload, sorts):
            push(sigma)
    return found


def synthesize_matching(k: Knowledge, p: Term, sorts: dict | None = None) -> list[dict]:
    """Substitutions under which the intruder can produce a message matching ``p``.

    ``sorts`` optionally maps binder keys to ``"id"`` / ``"key"`` and filters
    out ill-sorted values.  Every returned σ satisfies
    ``derives(k, apply(wire_form(p), σ))``.
    """
    return _solutions(k, p, sorts or {})


def _sort_ok(sort: str | None, value: Term) -> bool:
    if sort == "id":
        return isinstance(value, Identity)
    if sort == "key":
        return is_key(value)
    return True


def message_for(p: Term, sigma: dict) -> Term:
    """The concrete message the intruder sends for pattern ``p`` under ``σ``."""
    return apply(wire_form(p), sigma)


def frontier(k: Knowledge, m: Term) -> list[Term]:
    """The held components the intruder combines to build ``m`` (empty for replays)."""
    if m in k.analyzed:
        return [m]
    if isinstance(m, Tuple):
        return [x for p in m.parts for x in frontier(k, p)]
    if isinstance(m, Enc):
        return frontier(k, m.payload)
    return [m]
