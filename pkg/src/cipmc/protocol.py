"""cIP principals: the protocol DSL, its pretty-printer, and instantiation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from cipmc.syntax import Lexer, SyntaxErr, Token, parse_term_list
from cipmc.terms import (
    INTRUDER,
    Binder,
    Enc,
    Identity,
    Nonce,
    PrivKey,
    PubKey,
    SymKey,
    Term,
    TermError,
    Tuple,
    Var,
    is_key,
    resolve_indices,
    subterms,
    substitute,
)

SELF = "self"  # index placeholder in un-instantiated bodies
SORTS = ("id", "key")


class ProtocolError(ValueError):
    pass


class InvalidBinding(ProtocolError):
    pass


@dataclass(frozen=True)
class Out:
    message: Term

    kind = "out"

    @property
    def term(self) -> Term:
        return self.message


@dataclass(frozen=True)
class In:
    pattern: Term

    kind = "in"

    @property
    def term(self) -> Term:
        return self.pattern


Action = Out | In


@dataclass(frozen=True)
class PrincipalDef:
    name: str
    open_vars: tuple  # ((name, sort), ...)
    actions: tuple
    # sort requirements of input-bound variables: name -> "id" | "key"
    binder_sorts: Mapping[str, str] = field(default_factory=dict, compare=False, hash=False)

    def open_var_sort(self, var: str) -> str:
        return dict(self.open_vars)[var]

    def var_sort(self, var: str) -> str | None:
        sorts = dict(self.open_vars)
        return sorts.get(var) or self.binder_sorts.get(var)


@dataclass(frozen=True, eq=False)
class Instance:
    principal: str
    index: int
    binding: tuple  # sorted ((var, index), value) pairs of the open variables
    actions: tuple
    pc: int = 0
    binder_sorts: Mapping = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash((self.principal, self.index, self.binding, self.pc)))

    @property
    def key(self) -> tuple:
        return (self.principal, self.index, self.binding, self.pc)

    def __eq__(self, other):
        if self is other:
            return True
        return isinstance(other, Instance) and self._hash == other._hash and self.key == other.key

    def __hash__(self):
        return self._hash

    @property
    def remaining(self) -> tuple:
        return self.actions[self.pc:]

    @property
    def head(self) -> Action | None:
        return self.actions[self.pc] if self.pc < len(self.actions) else None

    @property
    def finished(self) -> bool:
        return self.pc >= len(self.actions)

    @property
    def identity(self) -> Identity:
        return Identity(self.principal, self.index)

    @property
    def label(self) -> str:
        return f"{self.principal}_{self.index}"

    def advance(self) -> "Instance":
        if self.finished:
            raise ProtocolError(f"{self.label} has no action left")
        return Instance(self.principal, self.index, self.binding, self.actions, self.pc + 1, self.binder_sorts)


# ------------------------------------------------------------------ parsing

class _BodyScope:
    """Name resolution for one principal body."""

    def __init__(self, name: str, open_vars: dict, principals: set[str]):
        self.name = name
        self.open_vars = open_vars
        self.principals = principals
        self.bound: set[str] = set()
        self.fresh: set[str] = set()

    def classify(self, name: str, index, tok: Token) -> Term:
        if index is not None:
            raise SyntaxErr("indices are assigned by instantiation, not written in protocols", tok.line, tok.col)
        if name in self.open_vars or name in self.bound:
            return Var(name, SELF)
        if name == self.name:
            return Identity(name, SELF)
        if name == INTRUDER:
            return Identity(INTRUDER)
        if name in self.principals:
            raise SyntaxErr(f"{self.name} refers to principal {name}; use an open variable", tok.line, tok.col)
        if name[0].isupper():
            return Identity(name)
        self.fresh.add(name)
        if name[0] == "k":
            return SymKey(name, SELF)
        return Nonce(name, SELF)


def _sort_of_use(t: Term, out: dict[str, str], key_pos: bool = False) -> None:
    if isinstance(t, Var):
        if key_pos:
            out.setdefault(t.name, set()).add("key")
        return
    if isinstance(t, (PubKey, PrivKey)):
        if isinstance(t.owner, Var):
            out.setdefault(t.owner.name, set()).add("id")
        return
    if isinstance(t, Enc):
        _sort_of_use(t.payload, out)
        _sort_of_use(t.key, out, key_pos=True)
    elif isinstance(t, Tuple):
        for p in t.parts:
            _sort_of_use(p, out)


def _parse_principal(lx: Lexer, principals: set[str]) -> PrincipalDef:
    name_tok = lx.expect_name()
    name = name_tok.text
    if name == INTRUDER:
        lx.error("'I' is reserved for the intruder", name_tok)
    if not name[0].isupper():
        lx.error("principal names are capitalised", name_tok)
    lx.expect(":")
    lx.expect("(")
    open_vars: dict[str, str] = {}
    declared: set[str] = set()
    if not lx.at(")"):
        while True:
            vtok = lx.expect_name()
            sort = "id"
            if lx.accept(":"):
                stok = lx.expect_name()
                if stok.text not in SORTS:
                    lx.error("open variable sort must be 'id' or 'key'", stok)
                sort = stok.text
                declared.add(vtok.text)
            if vtok.text in open_vars:
                lx.error(f"duplicate open variable {vtok.text}", vtok)
            open_vars[vtok.text] = sort
            if not lx.accept(","):
                break
    lx.expect(")")
    lx.expect("[")
    scope = _BodyScope(name, open_vars, principals)
    actions = []
    uses: dict[str, set] = {}
    if not lx.at("]"):
        while True:
            kw = lx.expect_name()
            if kw.text not in ("out", "in"):
                lx.error("expected 'out' or 'in'", kw)
            lx.expect("(")
            start = lx.pos
            items = parse_term_list(lx, ")", scope.classify, False)
            term = items[0] if len(items) == 1 else Tuple(tuple(items))
            found = [s for s in subterms(term) if isinstance(s, Binder)]
            for s in subterms(term):
                if isinstance(s, Enc) and isinstance(s.key, (Nonce, Identity)):
                    lx.error(f"{s.key.name} is not a key", lx.tokens[start])
            if kw.text == "out":
                if found:
                    lx.error("binders are only allowed in 'in' actions", lx.tokens[start])
                actions.append(Out(term))
            else:
                names = [b.name for b in found]
                for b in names:
                    if b in open_vars or b in scope.bound or names.count(b) > 1:
                        lx.error(f"variable {b} is bound twice", lx.tokens[start])
                    if b in scope.fresh:
                        lx.error(f"variable {b} is used before it is bound", lx.tokens[start])
                for s in subterms(term):
                    if isinstance(s, Enc) and any(isinstance(x, Binder) for x in subterms(s.key)):
                        lx.error("a receive pattern cannot bind its decryption key", lx.tokens[start])
                term = _rebind(term)
                actions.append(In(term))
                scope.bound.update(names)
            _sort_of_use(term, uses)
            if not (lx.accept(";") or lx.accept(".")):
                break
            if lx.at("]"):
                break
    lx.expect("]")
    binder_sorts: dict[str, str] = {}
    for var, sorts in uses.items():
        if len(sorts) > 1:
            raise SyntaxErr(f"variable {var} is used both as identity and as key", name_tok.line, name_tok.col)
        (sort,) = sorts
        if var in open_vars:
            if var not in declared:
                open_vars[var] = sort
            elif open_vars[var] != sort:
                raise SyntaxErr(f"open variable {var} is declared {open_vars[var]} but used as {sort}", name_tok.line, name_tok.col)
        else:
            binder_sorts[var] = sort
    return PrincipalDef(name, tuple(open_vars.items()), tuple(actions), binder_sorts)


def _rebind(t: Term) -> Term:
    if isinstance(t, Binder):
        return Binder(t.name, SELF)
    if isinstance(t, Tuple):
        return Tuple(tuple(_rebind(p) for p in t.parts))
    if isinstance(t, Enc):
        return Enc(_rebind(t.payload), t.key)
    return t


def _scan_names(text: str) -> set[str]:
    # principal names are the NAME tokens directly followed by ':' '('
    lx = Lexer(text)
    toks = lx.tokens
    return {
        toks[i].text
        for i in range(len(toks) - 2)
        if toks[i].kind == "NAME" and toks[i + 1].text == ":" and toks[i + 2].text == "("
        and (i == 0 or toks[i - 1].text in ("]", ";"))
    }


def parse_protocol(source: str) -> list[PrincipalDef]:
    """Parse every principal declared in ``source``."""
    principals = _scan_names(source)
    lx = Lexer(source)
    defs: list[PrincipalDef] = []
    seen: set[str] = set()
    while lx.peek.kind != "EOF":
        tok = lx.peek
        d = _parse_principal(lx, principals)
        if d.name in seen:
            raise SyntaxErr(f"duplicate principal {d.name}", tok.line, tok.col)
        seen.add(d.name)
        defs.append(d)
        lx.accept(";")
    return defs


# ------------------------------------------------------------- printing

def _print_term(t: Term) -> str:
    if isinstance(t, (Identity, Nonce, SymKey, Var)):
        return t.name
    if isinstance(t, Binder):
        return "?" + t.name
    if isinstance(t, PubKey):
        return _print_term(t.owner) + "+"
    if isinstance(t, PrivKey):
        return _print_term(t.owner) + "-"
    if isinstance(t, Tuple):
        return "(" + ", ".join(_print_term(p) for p in t.parts) + ")"
    if isinstance(t, Enc):
        inner = t.payload.parts if isinstance(t.payload, Tuple) else (t.payload,)
        return "{" + ", ".join(_print_term(p) for p in inner) + "}_{" + _print_term(t.key) + "}"
    raise TypeError(t)


def _print_action(a: Action) -> str:
    t = a.term
    inner = t.parts if isinstance(t, Tuple) else (t,)
    return f"{a.kind}(" + ", ".join(_print_term(p) for p in inner) + ")"


def print_principal(d: PrincipalDef) -> str:
    ov = ", ".join(v if s == "id" else f"{v}:{s}" for v, s in d.open_vars)
    body = ";\n    ".join(_print_action(a) for a in d.actions)
    return f"{d.name}: ({ov})[\n    {body}\n]" if d.actions else f"{d.name}: ({ov})[]"


def print_protocol(defs: list[PrincipalDef]) -> str:
    return "\n\n".join(print_principal(d) for d in defs) + "\n"


# --------------------------------------------------------- instantiation

def _check_sort(var: str, sort: str, value: Term) -> None:
    if sort == "id" and not isinstance(value, Identity):
        raise InvalidBinding(f"open variable {var} expects an identity, got {value}")
    if sort == "key" and not is_key(value):
        raise InvalidBinding(f"open variable {var} expects a key, got {value}")


def instantiate(d: PrincipalDef, index: int, binding: Mapping | None = None) -> Instance:
    """Index every name of ``d`` with ``index`` and plug in the open-variable values.

    ``binding`` maps open-variable names (or ``(name, index)`` pairs) to ground
    terms; variables left out stay free in the body.
    """
    binding = dict(binding or {})
    env: dict = {}
    for var, sort in d.open_vars:
        for key in (var, (var, index)):
            if key in binding:
                _check_sort(var, sort, binding[key])
                env[(var, index)] = binding[key]
    known = {v for v, _ in d.open_vars}
    for key in binding:
        name = key[0] if isinstance(key, tuple) else key
        if name not in known:
            raise InvalidBinding(f"{d.name} has no open variable {name}")
    actions = []
    for a in d.actions:
        t = resolve_indices(a.term, {SELF: index})
        try:
            t = substitute(t, env, binders_too=False, strict=False)
        except TermError as exc:
            raise InvalidBinding(str(exc)) from exc
        actions.append(type(a)(t))
    return Instance(
        principal=d.name,
        index=index,
        binding=tuple(sorted(env.items(), key=lambda kv: kv[0])),
        actions=tuple(actions),
        binder_sorts={(v, index): s for v, s in d.binder_sorts.items()},
    )


def render_instance(inst: Instance) -> str:
    from cipmc.terms import render

    def act(a):
        t = a.term
        inner = t.parts if isinstance(t, Tuple) else (t,)
        return f"{a.kind}(" + ", ".join(render(p) for p in inner) + ")"

    ov = ", ".join(f"{n}_{i} ↦ {render(v)}" for (n, i), v in inst.binding)
    return f"{inst.label}:({ov})[" + ".".join(act(a) for a in inst.remaining) + "]"
