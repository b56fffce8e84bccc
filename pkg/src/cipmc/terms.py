"""Message algebra: ground terms, patterns with binders, matching and substitution.

Atoms carry an optional instance index.  Inside formulas and join-rule
templates an index may still be an index *variable* (a ``str``); such terms
are resolved with :func:`resolve_indices` before they meet real states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Union

Index = Union[int, str, None]

INTRUDER = "I"


class TermError(ValueError):
    pass


class MissingBinding(TermError):
    def __init__(self, name: str, index: Index):
        super().__init__(f"no binding for {_atom_text(name, index)}")
        self.name = name
        self.index = index


class Term:
    __slots__ = ()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True, slots=True)
class Identity(Term):
    name: str
    index: Index = None


@dataclass(frozen=True, slots=True)
class Nonce(Term):
    name: str
    index: Index = None


@dataclass(frozen=True, slots=True)
class SymKey(Term):
    name: str
    index: Index = None


@dataclass(frozen=True, slots=True)
class PubKey(Term):
    owner: Term


@dataclass(frozen=True, slots=True)
class PrivKey(Term):
    owner: Term


@dataclass(frozen=True, slots=True)
class Tuple(Term):
    parts: tuple
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.parts) < 2:
            raise TermError("tuples need at least two components")
        object.__setattr__(self, "_hash", hash(("tuple", self.parts)))

    def __hash__(self):
        return self._hash


@dataclass(frozen=True, slots=True)
class Enc(Term):
    payload: Term
    key: Term
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash(("enc", self.payload, self.key)))

    def __hash__(self):
        return self._hash


@dataclass(frozen=True, slots=True)
class Var(Term):
    """Reference to an (open or input-bound) variable of an instance."""

    name: str
    index: Index = None


@dataclass(frozen=True, slots=True)
class Binder(Term):
    """``?x``: a pattern position that binds ``x`` on a successful match."""

    name: str
    index: Index = None


Atom = (Identity, Nonce, SymKey)
KEY_TYPES = (PubKey, PrivKey, SymKey)

# variable key: (name, index)
VarKey = tuple
Substitution = Mapping[VarKey, Term]

INTRUDER_ID = Identity(INTRUDER)


def intruder_knowledge() -> frozenset:
    """The default initial knowledge {I, I^+, I^-}."""
    return frozenset({INTRUDER_ID, PubKey(INTRUDER_ID), PrivKey(INTRUDER_ID)})


def is_key(t: Term) -> bool:
    return isinstance(t, KEY_TYPES)


def complement(key: Term) -> Term:
    if isinstance(key, PrivKey):
        return PubKey(key.owner)
    if isinstance(key, PubKey):
        return PrivKey(key.owner)
    if isinstance(key, SymKey):
        return key
    raise TermError(f"not a key: {render(key)}")


def subterms(t: Term) -> Iterator[Term]:
    yield t
    if isinstance(t, Tuple):
        for p in t.parts:
            yield from subterms(p)
    elif isinstance(t, Enc):
        yield from subterms(t.payload)
        yield from subterms(t.key)
    elif isinstance(t, (PubKey, PrivKey)):
        yield from subterms(t.owner)


def is_ground(t: Term) -> bool:
    for s in subterms(t):
        if isinstance(s, (Var, Binder)):
            return False
        if isinstance(s, Atom) and isinstance(s.index, str):
            return False
    return True


def binders(p: Term) -> list[Binder]:
    return [s for s in subterms(p) if isinstance(s, Binder)]


def variables(t: Term) -> list[Var]:
    return [s for s in subterms(t) if isinstance(s, Var)]


def size(t: Term) -> int:
    return sum(1 for _ in subterms(t))


def wire_form(p: Term) -> Term:
    """Replace every decryption key of a receive pattern by its complement."""
    if isinstance(p, Enc):
        return Enc(wire_form(p.payload), complement(p.key))
    if isinstance(p, Tuple):
        return Tuple(tuple(wire_form(x) for x in p.parts))
    return p


def _rebuild_key(cls, owner: Term) -> Term:
    if not isinstance(owner, (Identity, Var, Binder)):
        raise TermError(f"key owner must be an identity, got {render(owner)}")
    return cls(owner)


def substitute(t: Term, env: Substitution, *, binders_too: bool = True, strict: bool = True) -> Term:
    """Replace variables (and binders) by their values in ``env``.

    With ``strict`` an unbound binder/variable raises :class:`MissingBinding`;
    otherwise it is left in place.
    """
    if isinstance(t, Var) or (binders_too and isinstance(t, Binder)):
        key = (t.name, t.index)
        if key in env:
            return env[key]
        if strict:
            raise MissingBinding(t.name, t.index)
        return t
    if isinstance(t, Tuple):
        return Tuple(tuple(substitute(x, env, binders_too=binders_too, strict=strict) for x in t.parts))
    if isinstance(t, Enc):
        return Enc(
            substitute(t.payload, env, binders_too=binders_too, strict=strict),
            substitute(t.key, env, binders_too=binders_too, strict=strict),
        )
    if isinstance(t, (PubKey, PrivKey)):
        return _rebuild_key(type(t), substitute(t.owner, env, binders_too=binders_too, strict=strict))
    return t


def apply(p: Term, sigma: Substitution) -> Term:
    """Instantiate every binder of ``p``; the result is key-complement-equal to the matched term."""
    return substitute(p, sigma, binders_too=True, strict=True)


def _match(p: Term, t: Term, out: dict) -> bool:
    if isinstance(p, Binder):
        key = (p.name, p.index)
        if key in out:
            return out[key] == t
        out[key] = t
        return True
    if isinstance(p, Enc):
        if not isinstance(t, Enc) or not is_key(p.key):
            return False
        if t.key != complement(p.key):
            return False
        return _match(p.payload, t.payload, out)
    if isinstance(p, Tuple):
        if not isinstance(t, Tuple) or len(p.parts) != len(t.parts):
            return False
        return all(_match(a, b, out) for a, b in zip(p.parts, t.parts))
    return p == t


def match(p: Term, t: Term) -> dict | None:
    """Match a receive pattern against a ground term.

    ``Enc(p', k)`` in the pattern holds the key the receiver decrypts with, so it
    matches ``Enc(t', complement(k))``.  Returns ``None`` on failure.
    """
    out: dict = {}
    return out if _match(p, t, out) else None


def resolve_indices(t: Term, env: Mapping[str, int]) -> Term:
    """Replace index variables in atoms by the instance numbers in ``env``."""
    if isinstance(t, (Identity, Nonce, SymKey, Var, Binder)):
        if isinstance(t.index, str):
            if t.index not in env:
                raise TermError(f"unbound index variable {t.index!r}")
            return type(t)(t.name, env[t.index])
        return t
    if isinstance(t, Tuple):
        return Tuple(tuple(resolve_indices(x, env) for x in t.parts))
    if isinstance(t, Enc):
        return Enc(resolve_indices(t.payload, env), resolve_indices(t.key, env))
    if isinstance(t, (PubKey, PrivKey)):
        return type(t)(resolve_indices(t.owner, env))
    return t


def index_variables(t: Term) -> set[str]:
    return {s.index for s in subterms(t) if isinstance(s, (Identity, Nonce, SymKey, Var, Binder)) and isinstance(s.index, str)}


# ---------------------------------------------------------------- rendering

def _atom_text(name: str, index: Index) -> str:
    if index is None:
        return name
    if isinstance(index, str):
        return f"{name}[{index}]"
    return f"{name}_{index}"


def render(t: Term) -> str:
    if isinstance(t, (Identity, Nonce, SymKey, Var)):
        return _atom_text(t.name, t.index)
    if isinstance(t, Binder):
        return "?" + _atom_text(t.name, t.index)
    if isinstance(t, PubKey):
        return render(t.owner) + "^+"
    if isinstance(t, PrivKey):
        return render(t.owner) + "^-"
    if isinstance(t, Tuple):
        return "(" + ", ".join(render(p) for p in t.parts) + ")"
    if isinstance(t, Enc):
        inner = t.payload.parts if isinstance(t.payload, Tuple) else (t.payload,)
        return "{" + ", ".join(render(p) for p in inner) + "}_{" + render(t.key) + "}"
    raise TypeError(f"not a term: {t!r}")


_KIND_ORDER = {Identity: 0, Nonce: 1, SymKey: 2, PubKey: 3, PrivKey: 4, Tuple: 5, Enc: 6, Var: 7, Binder: 8}


def sort_key(t: Term) -> tuple:
    """Deterministic total order on terms (atoms first, then by rendering)."""
    return (_KIND_ORDER[type(t)], size(t), render(t))


def atom_for(name: str, index: Index) -> Term:
    """Classify a bare name by the naming convention used in all concrete syntaxes.

    Capitalised names are identities, lowercase names starting with ``k`` are
    symmetric keys, every other lowercase name is a nonce.
    """
    if name[0].isupper():
        return Identity(name, index)
    if name[0] == "k":
        return SymKey(name, index)
    return Nonce(name, index)


def parse_term(text: str) -> Term:
    """Parse the canonical rendering produced by :func:`render`."""
    from cipmc.syntax import Lexer, parse_term_expr

    lx = Lexer(text)
    t = parse_term_expr(lx, allow_index_vars=True)
    lx.expect_end()
    return t
