"""Built-in NS and KSL scenarios, golden cases, and seeded random generators."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from cipmc.logic import And, Derives, Eq, Formula, Not, Or, Quant, parse_property
from cipmc.protocol import PrincipalDef, parse_protocol
from cipmc.statespace import JoinRule, Scenario
from cipmc.terms import INTRUDER_ID, Identity, Nonce, PrivKey, PubKey, SymKey, intruder_knowledge, parse_term

NS_PROTOCOL = """\
A: (r)[
    out({na, A}_{r+});
    in({na, ?z}_{A-});
    out({z}_{r+})
]

B: ()[
    in({?x, ?y}_{B-});
    out({x, nb}_{y+});
    in({nb}_{B-})
]
"""

NS_PROPERTY = "forall i:A. exists j:B. (x[j] = na[i] and z[i] = nb[j])\n"

KSL_PROTOCOL = """\
A: (b, sk, tk)[
    out(na, {b, A, sk}_{tk});
    in(?y, {na}_{sk});
    out({y}_{sk})
]

B: (a, sk, tk)[
    in(?x, {B, a, sk}_{tk});
    out(nb, {x}_{sk});
    in({nb}_{sk})
]
"""

KSL_PROPERTY = "forall l:B. forall j:A. (b[j] = B[l] and a[l] = A[j] -> x[l] = na[j] and y[j] = nb[l])\n"

# each A may talk to the intruder or to some B, using that B's session key and ticket key
KSL_JOIN_RULES = {
    "A": [
        {"bind": {"b": "I", "sk": "kI", "tk": "kI"}},
        {"bind": {"b": "B[m]", "sk": "kab[m]", "tk": "kbb[m]"}, "for": {"m": "B"}},
    ],
    "B": [
        {"bind": {"a": "I", "sk": "kI", "tk": "kI"}},
        {"bind": {"a": "A[m]", "sk": "kab[self]", "tk": "kbb[self]"}, "for": {"m": "A"}},
    ],
}

KSL_INITIAL = ["I", "I+", "I-", "kI"]


def parse_join_rules(raw: dict) -> dict:
    """Turn the plain-data rule format (as in scenario files) into JoinRule tuples."""
    out = {}
    for principal, rules in (raw or {}).items():
        parsed = []
        for r in rules:
            values = tuple((var, parse_term(str(tpl))) for var, tpl in r["bind"].items())
            ranges = tuple((ivar, q) for ivar, q in (r.get("for") or {}).items())
            parsed.append(JoinRule(values, ranges))
        out[principal] = tuple(parsed)
    return out


def builtin(name: str, max_instances: int | None = None) -> tuple[Scenario, Formula]:
    if name == "ns":
        sc = Scenario(parse_protocol(NS_PROTOCOL), max_instances or 2)
        return sc, parse_property(NS_PROPERTY)
    if name == "ksl":
        sc = Scenario(
            parse_protocol(KSL_PROTOCOL),
            max_instances or 2,
            initial_knowledge=frozenset(parse_term(t) for t in KSL_INITIAL),
            join_rules=parse_join_rules(KSL_JOIN_RULES),
        )
        return sc, parse_property(KSL_PROPERTY)
    raise KeyError(f"no built-in scenario named {name!r}")


def builtin_sources(name: str) -> dict:
    """Protocol, property and scenario text for ``cipmc builtin --emit``."""
    import yaml

    if name == "ns":
        proto, prop, extra = NS_PROTOCOL, NS_PROPERTY, {}
    elif name == "ksl":
        proto, prop = KSL_PROTOCOL, KSL_PROPERTY
        extra = {"initial_knowledge": KSL_INITIAL, "join_rules": KSL_JOIN_RULES}
    else:
        raise KeyError(f"no built-in scenario named {name!r}")
    scenario = {"protocol": f"{name}.cip", "property": f"{name}.pl", "max_instances": 2, **extra}
    return {
        f"{name}.cip": proto,
        f"{name}.pl": prop,
        f"{name}.yaml": yaml.safe_dump(scenario, sort_keys=False),
    }


@dataclass
class GoldenCase:
    name: str
    scenario: Scenario
    property: Formula
    expected_verdict: str  # "attack" | "no_attack"
    expected_pruned_contexts: set = field(default_factory=set)
    expected_pruned_states: int | None = None


def golden_cases() -> list[GoldenCase]:
    ns2, psi_ns = builtin("ns", 2)
    ksl2, psi_ksl = builtin("ksl", 2)
    ksl3, _ = builtin("ksl", 3)
    return [
        GoldenCase("ns-2", ns2, psi_ns, "attack", {"{B_1, B_2}"}, 1),
        GoldenCase("ksl-2", ksl2, psi_ksl, "no_attack", {"{A_1, A_2}", "{B_1, B_2}"}, 2),
        GoldenCase("ksl-3", ksl3, psi_ksl, "attack", {"{A_1, A_2, A_3}", "{B_1, B_2, B_3}"}, 2),
    ]


# ------------------------------------------------------------- generators

_NONCES = ("na", "nb", "nc")


def random_protocol(seed: int, max_actions: int = 3, max_quantifiers: int = 2, max_instances: int = 2) -> tuple[Scenario, Formula]:
    """A small two-principal protocol plus a ∀-prefixed property over its variables.

    Deterministic in ``seed``.  With ``max_actions=0`` the principals are empty.
    """
    rng = random.Random(seed)
    names = ("A", "B")
    lines = []
    bound: dict[str, list[str]] = {}
    for p in names:
        other_open = rng.random() < 0.6
        open_vars = ["r"] if other_open else []
        acts = []
        mine = []
        nonce = _NONCES[names.index(p)]
        n_act = rng.randint(0, max_actions) if max_actions else 0
        sending = rng.random() < 0.5
        for k in range(n_act):
            peer_key = "r+" if other_open else "I+"
            if sending:
                pieces = [nonce, p] + mine[:1]
                rng.shuffle(pieces)
                body = ", ".join(pieces[: rng.randint(1, len(pieces))])
                acts.append(f"out({{{body}}}_{{{peer_key}}})" if rng.random() < 0.7 else f"out({body})")
            else:
                v = f"v{k}"
                if rng.random() < 0.5:
                    acts.append(f"in({{?{v}, {nonce}}}_{{{p}-}})" if rng.random() < 0.5 else f"in({{?{v}}}_{{{p}-}})")
                else:
                    acts.append(f"in(?{v})")
                mine.append(v)
            sending = not sending
        bound[p] = mine
        head = f"{p}: ({', '.join(open_vars)})["
        lines.append(head + "\n    " + ";\n    ".join(acts) + "\n]" if acts else head + "]")
    src = "\n\n".join(lines) + "\n"
    sc = Scenario(parse_protocol(src), max_instances)
    phi = _random_property(rng, bound, max_quantifiers)
    return sc, phi


def _random_property(rng: random.Random, bound: dict, max_q: int) -> Formula:
    n_q = rng.randint(1, max(1, max_q))
    prefix = []
    for k in range(n_q):
        q = "forall" if k == 0 or rng.random() < 0.5 else "exists"
        prefix.append((q, f"i{k}", rng.choice(("A", "B"))))
    atoms = []
    for q, ivar, p in prefix:
        for v in bound.get(p, []):
            other = rng.choice(prefix)
            atoms.append(Eq(v, ivar, Nonce(rng.choice(_NONCES[:2]), other[1])))
        atoms.append(Derives(Nonce(_NONCES[("A", "B").index(p)], ivar)))
    body: Formula = rng.choice(atoms)
    for _ in range(rng.randint(0, 2)):
        other = rng.choice(atoms)
        body = rng.choice((And, Or))(body, other if rng.random() < 0.7 else Not(other))
    for q, ivar, p in reversed(prefix):
        body = Quant(q, ivar, p, body)
    return body


def random_formula(rng: random.Random, depth: int = 5, max_quantifiers: int = 3, principals=("A", "B"),
                   variables=("x", "z"), atoms=None) -> Formula:
    """A random closed formula with quantifiers anywhere (not necessarily prenex)."""
    atoms = atoms or [Nonce("na", 1), Nonce("nb", 2), Identity("A", 1)]
    budget = [max_quantifiers]
    counter = [0]

    def term(scope):
        t = rng.choice(atoms + [None] * 2) if scope else rng.choice(atoms)
        if t is None:
            ivar = rng.choice(scope)
            return rng.choice((Nonce("na", ivar), Identity(rng.choice(principals), ivar)))
        return t

    def gen(d, scope):
        choices = ["atom"]
        if d > 0:
            choices += ["not", "and", "or"]
            if budget[0] > 0:
                choices += ["quant", "quant"]
        c = rng.choice(choices)
        if c == "atom":
            if scope and rng.random() < 0.6:
                return Eq(rng.choice(variables), rng.choice(scope), term(scope))
            if rng.random() < 0.3:
                return Eq(rng.choice(variables), rng.choice((1, 2)), term(scope))
            return Derives(term(scope))
        if c == "not":
            return Not(gen(d - 1, scope))
        if c in ("and", "or"):
            cls = And if c == "and" else Or
            return cls(gen(d - 1, scope), gen(d - 1, scope))
        budget[0] -= 1
        # deliberately reuse names sometimes so capture avoidance gets exercised
        name = rng.choice(["i", "j", f"k{counter[0]}"])
        counter[0] += 1
        return Quant(rng.choice(("forall", "exists")), name, rng.choice(principals), gen(d - 1, scope + [name]))

    return gen(depth, [])


def random_term(rng: random.Random, depth: int = 3) -> object:
    """Random ground term over a small universe, for knowledge-engine checks."""
    ids = [INTRUDER_ID, Identity("A", 1), Identity("B", 2)]
    leaves = ids + [Nonce("na", 1), Nonce("nb", 2), SymKey("k", 1)] + [PubKey(i) for i in ids] + [PrivKey(i) for i in ids]
    from cipmc.terms import Enc, Tuple

    def gen(d):
        if d <= 1 or rng.random() < 0.4:
            return rng.choice(leaves)
        if rng.random() < 0.5:
            return Tuple(tuple(gen(d - 1) for _ in range(2)))
        key = rng.choice([SymKey("k", 1)] + [PubKey(i) for i in ids] + [PrivKey(i) for i in ids])
        return Enc(gen(d - 1), key)

    return gen(depth)


__all__ = [
    "NS_PROTOCOL",
    "NS_PROPERTY",
    "KSL_PROTOCOL",
    "KSL_PROPERTY",
    "builtin",
    "builtin_sources",
    "golden_cases",
    "random_protocol",
    "random_formula",
    "random_term",
    "parse_join_rules",
    "GoldenCase",
    "intruder_knowledge",
]
