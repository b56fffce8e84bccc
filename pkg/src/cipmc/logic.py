"""PL: formulas over principal instances, the property reader, prenex normal form, and the model relation."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Union

from cipmc.knowledge import Knowledge, analyze, derives
from cipmc.syntax import Lexer, SyntaxErr, parse_term_expr
from cipmc.terms import INTRUDER_ID, Identity, Index, Term, index_variables, render, resolve_indices


@dataclass(frozen=True)
class Eq:
    var: str
    index: Index
    rhs: Term


@dataclass(frozen=True)
class Derives:
    term: Term


@dataclass(frozen=True)
class Quant:
    kind: str  # "forall" | "exists"
    ivar: str
    principal: str
    body: "Formula"


@dataclass(frozen=True)
class Not:
    body: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


Formula = Union[Eq, Derives, Quant, Not, And, Or]

TRUE = Derives(INTRUDER_ID)


def forall(ivar: str, principal: str, body: Formula) -> Quant:
    return Quant("forall", ivar, principal, body)


def exists(ivar: str, principal: str, body: Formula) -> Quant:
    return Quant("exists", ivar, principal, body)


def implies(p: Formula, q: Formula) -> Formula:
    return Or(Not(p), q)


def dual(kind: str) -> str:
    return "exists" if kind == "forall" else "forall"


@dataclass(frozen=True)
class EvalContext:
    knowledge: Knowledge
    chi: Mapping

    @classmethod
    def of(cls, kappa, chi: Mapping | None = None) -> "EvalContext":
        k = kappa if isinstance(kappa, Knowledge) else analyze(kappa)
        return cls(k, dict(chi or {}))


# ------------------------------------------------------------ structure

def is_quantifier_free(phi: Formula) -> bool:
    if isinstance(phi, Quant):
        return False
    if isinstance(phi, Not):
        return is_quantifier_free(phi.body)
    if isinstance(phi, (And, Or)):
        return is_quantifier_free(phi.left) and is_quantifier_free(phi.right)
    return True


def is_pnf(phi: Formula) -> bool:
    while isinstance(phi, Quant):
        phi = phi.body
    return is_quantifier_free(phi)


def prefix(phi: Formula) -> list[Quant]:
    out = []
    while isinstance(phi, Quant):
        out.append(phi)
        phi = phi.body
    return out


def matrix(phi: Formula) -> Formula:
    while isinstance(phi, Quant):
        phi = phi.body
    return phi


def index_vars(phi: Formula) -> set[str]:
    """Every index variable occurring in ``phi``, free or bound."""
    if isinstance(phi, Eq):
        out = index_variables(phi.rhs)
        if isinstance(phi.index, str):
            out.add(phi.index)
        return out
    if isinstance(phi, Derives):
        return index_variables(phi.term)
    if isinstance(phi, Quant):
        return {phi.ivar} | index_vars(phi.body)
    if isinstance(phi, Not):
        return index_vars(phi.body)
    return index_vars(phi.left) | index_vars(phi.right)


def free_index_vars(phi: Formula) -> set[str]:
    if isinstance(phi, (Eq, Derives)):
        return index_vars(phi)
    if isinstance(phi, Quant):
        return free_index_vars(phi.body) - {phi.ivar}
    if isinstance(phi, Not):
        return free_index_vars(phi.body)
    return free_index_vars(phi.left) | free_index_vars(phi.right)


def is_closed(phi: Formula) -> bool:
    return not free_index_vars(phi)


@lru_cache(maxsize=65536)
def subst_index(phi: Formula, ivar: str, value) -> Formula:
    """phi[value/ivar]; ``value`` is an instance number or another index variable."""
    if isinstance(phi, Eq):
        idx = value if phi.index == ivar else phi.index
        return Eq(phi.var, idx, resolve_indices(phi.rhs, _PartialEnv({ivar: value})))
    if isinstance(phi, Derives):
        return Derives(resolve_indices(phi.term, _PartialEnv({ivar: value})))
    if isinstance(phi, Quant):
        if phi.ivar == ivar:
            return phi
        return Quant(phi.kind, phi.ivar, phi.principal, subst_index(phi.body, ivar, value))
    if isinstance(phi, Not):
        return Not(subst_index(phi.body, ivar, value))
    return type(phi)(subst_index(phi.left, ivar, value), subst_index(phi.right, ivar, value))


class _PartialEnv(dict):
    # leaves unrelated index variables untouched
    def __contains__(self, key):
        return True

    def __missing__(self, key):
        return key


# ------------------------------------------------------------ prenex form

def _fresh(base: str, used: set[str]) -> str:
    cand = base + "'"
    while cand in used:
        cand += "'"
    return cand


def pnf(phi: Formula) -> Formula:
    """Pull every quantifier to the front.

    Follows the five defining cases, plus the mirror images of the ∧/∨ cases
    for a quantified right operand, so that the function is total.
    """
    if is_quantifier_free(phi):
        return phi
    if isinstance(phi, Quant):
        return Quant(phi.kind, phi.ivar, phi.principal, pnf(phi.body))
    if isinstance(phi, Not):
        inner = pnf(phi.body)
        if isinstance(inner, Quant):
            return Quant(dual(inner.kind), inner.ivar, inner.principal, pnf(Not(inner.body)))
        return Not(inner)
    left = pnf(phi.left)
    op = type(phi)
    if isinstance(left, Quant):
        used = index_vars(left) | index_vars(phi.right)
        fresh = _fresh(left.ivar, used)
        body = subst_index(left.body, left.ivar, fresh)
        return Quant(left.kind, fresh, left.principal, pnf(op(body, phi.right)))
    right = pnf(phi.right)
    if isinstance(right, Quant):
        used = index_vars(right) | index_vars(left)
        fresh = _fresh(right.ivar, used)
        body = subst_index(right.body, right.ivar, fresh)
        return Quant(right.kind, fresh, right.principal, pnf(op(left, body)))
    return op(left, right)


# ------------------------------------------------------------- semantics

def instances_of(k: Knowledge, principal: str) -> list[int]:
    """Indices n with A_n ∈ κ."""
    return sorted(
        t.index for t in k.analyzed if isinstance(t, Identity) and t.name == principal and isinstance(t.index, int)
    )


def evaluate(ctx: EvalContext, phi: Formula) -> bool:
    """κ ⊨_χ φ for a closed formula."""
    k, chi = ctx.knowledge, ctx.chi
    if isinstance(phi, Eq):
        val = chi.get((phi.var, phi.index))
        return val is not None and val == phi.rhs
    if isinstance(phi, Derives):
        return derives(k, phi.term)
    if isinstance(phi, Quant):
        dom = instances_of(k, phi.principal)
        test = all if phi.kind == "forall" else any
        return test(evaluate(ctx, subst_index(phi.body, phi.ivar, n)) for n in dom)
    if isinstance(phi, Not):
        return not evaluate(ctx, phi.body)
    if isinstance(phi, And):
        return evaluate(ctx, phi.left) and evaluate(ctx, phi.right)
    if isinstance(phi, Or):
        return evaluate(ctx, phi.left) or evaluate(ctx, phi.right)
    raise TypeError(f"not a formula: {phi!r}")


# ---------------------------------------------------------------- reader

class _Reader:
    def __init__(self, text: str):
        self.lx = Lexer(text)
        self.scope: list[str] = []
        self.used: set[str] = set()
        self.renames: list[tuple[str, str]] = []

    def lookup(self, name: str, tok) -> str:
        for orig, new in reversed(self.renames):
            if orig == name:
                return new
        raise SyntaxErr(f"unbound index variable {name!r}", tok.line, tok.col)

    def formula(self) -> Formula:
        lx = self.lx
        if lx.at("forall") or lx.at("exists"):
            return self.quant()
        left = self.disj()
        if lx.accept("->"):
            return implies(left, self.formula())
        return left

    def quant(self) -> Formula:
        lx = self.lx
        kind = lx.next().text
        vtok = lx.expect_name()
        lx.expect(":")
        principal = lx.expect_name().text
        lx.accept(".")
        name = vtok.text
        new = _fresh(name, self.used) if name in self.used else name
        self.used.add(new)
        self.renames.append((name, new))
        body = self.formula()
        self.renames.pop()
        return Quant(kind, new, principal, body)

    def disj(self) -> Formula:
        out = self.conj()
        while self.lx.accept("or"):
            out = Or(out, self.conj())
        return out

    def conj(self) -> Formula:
        out = self.unary()
        while self.lx.accept("and"):
            out = And(out, self.unary())
        return out

    def unary(self) -> Formula:
        lx = self.lx
        if lx.accept("not") or lx.accept("!"):
            return Not(self.unary())
        if lx.at("forall") or lx.at("exists"):
            return self.quant()
        if lx.accept("("):
            inner = self.formula()
            lx.expect(")")
            return inner
        if lx.accept("true"):
            return TRUE
        if lx.accept("false"):
            return Not(TRUE)
        if lx.at("K") and lx.peek_at(1).text == "|>":
            lx.next()
            lx.next()
            return Derives(self.term())
        tok = lx.expect_name()
        idx = self._index(tok)
        lx.expect("=")
        return Eq(tok.text, idx, self.term())

    def _index(self, tok):
        lx = self.lx
        if lx.peek.text == "_" and lx.peek_at(1).kind in ("NUMBER", "NAME"):
            lx.next()
            itok = lx.next()
        elif lx.accept("["):
            itok = lx.next()
            lx.expect("]")
        else:
            lx.error("expected an indexed variable such as x[i]", tok)
        if itok.kind == "NUMBER":
            return int(itok.text)
        return self.lookup(itok.text, itok)

    def term(self) -> Term:
        tok = self.lx.peek
        t = parse_term_expr(self.lx, allow_index_vars=True)
        env = {}
        for v in index_variables(t):
            env[v] = self.lookup(v, tok)
        return resolve_indices(t, env) if env else t


def parse_property(source: str) -> Formula:
    """Read one closed property formula (``#`` comments allowed)."""
    r = _Reader(source)
    phi = r.formula()
    r.lx.expect_end()
    return phi


# ------------------------------------------------------------- rendering

def render_formula(phi: Formula) -> str:
    if isinstance(phi, Eq):
        idx = f"[{phi.index}]" if isinstance(phi.index, str) else f"_{phi.index}"
        return f"{phi.var}{idx} = {_render_ix(phi.rhs)}"
    if isinstance(phi, Derives):
        return f"K |> {_render_ix(phi.term)}"
    if isinstance(phi, Quant):
        return f"{phi.kind} {phi.ivar}:{phi.principal}. {render_formula(phi.body)}"
    if isinstance(phi, Not):
        return f"not {_wrap(phi.body)}"
    op = "and" if isinstance(phi, And) else "or"
    return f"{_wrap(phi.left)} {op} {_wrap(phi.right)}"


def _wrap(phi: Formula) -> str:
    if isinstance(phi, (Eq, Derives)):
        return render_formula(phi)
    return "(" + render_formula(phi) + ")"


def _render_ix(t: Term) -> str:
    return render(t)
