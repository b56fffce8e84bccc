"""Command-line entry point: ``cipmc check|parse|knowledge|builtin``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from cipmc.dot import to_dot
from cipmc.fixtures import builtin, builtin_sources
from cipmc.heuristic import build_weighted_tree
from cipmc.knowledge import analyze
from cipmc.logic import parse_property, pnf, render_formula
from cipmc.protocol import ProtocolError, parse_protocol, print_protocol
from cipmc.scenario import load_scenario
from cipmc.search import CHECK_MODES, STRATEGIES, SearchConfig, find_attack
from cipmc.statespace import Scenario, ScenarioError
from cipmc.syntax import SyntaxErr
from cipmc.terms import TermError, parse_term

EXIT_NO_ATTACK, EXIT_ATTACK, EXIT_INPUT, EXIT_EXHAUSTED = 0, 1, 2, 3

INPUT_ERRORS = (SyntaxErr, ScenarioError, ProtocolError, TermError, OSError, KeyError, ValueError)


def _load(args) -> tuple:
    if args.builtin:
        return builtin(args.builtin, args.max_instances)
    if args.scenario:
        sc, phi = load_scenario(args.scenario)
        if args.max_instances:
            sc = Scenario(sc.protocol, args.max_instances, sc.initial_knowledge, sc.join_rules, sc.allow_self_binding)
        return sc, phi
    if not (args.protocol and args.property):
        raise ScenarioError("give --protocol and --property, --scenario, or --builtin")
    defs = parse_protocol(Path(args.protocol).read_text(encoding="utf-8"))
    phi = parse_property(Path(args.property).read_text(encoding="utf-8"))
    return Scenario(defs, args.max_instances or 2), phi


def cmd_check(args) -> int:
    try:
        sc, phi = _load(args)
        cfg = SearchConfig(args.strategy, args.check_at, args.interleave_joins, args.max_states)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    res = find_attack(sc, phi, cfg)
    if args.emit_dot:
        tree = res.tree or build_weighted_tree(sc, pnf(phi))
        Path(args.emit_dot).write_text(to_dot(tree), encoding="utf-8")
    if args.stats:
        lines = [f"verdict: {res.verdict}", f"strategy: {cfg.strategy}", f"check_at: {cfg.check_at}"]
        lines += [f"{k}: {v}" for k, v in res.stats.as_dict().items()]
        Path(args.stats).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if res.verdict == "attack":
        print(f"attack found in context {res.trace.context}")
        print(res.trace.witness)
        return EXIT_ATTACK
    if res.verdict == "bound_exhausted":
        print(f"bound exhausted after {res.stats.states_expanded} states")
        return EXIT_EXHAUSTED
    print(f"no attack with at most {sc.max_instances} instances")
    return EXIT_NO_ATTACK


def cmd_parse(args) -> int:
    try:
        text = Path(args.file).read_text(encoding="utf-8")
        if args.property:
            print(render_formula(parse_property(text)))
        else:
            sys.stdout.write(print_protocol(parse_protocol(text)))
    except (SyntaxErr, ProtocolError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


def cmd_knowledge(args) -> int:
    try:
        terms = list(args.terms)
        if args.file:
            terms += [ln.strip() for ln in Path(args.file).read_text(encoding="utf-8").splitlines()
                      if ln.strip() and not ln.lstrip().startswith("#")]
        k = analyze(parse_term(t) for t in terms)
    except (SyntaxErr, TermError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for line in k.sorted_closure():
        print(line)
    return 0


def cmd_builtin(args) -> int:
    files = builtin_sources(args.name)
    if args.emit:
        out = Path(args.emit)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text, encoding="utf-8")
            print(out / name)
    else:
        for name, text in files.items():
            print(f"# {name}")
            sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cipmc", description="Heuristic-guided model checker for cIP protocols.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("check", help="search for an attack")
    c.add_argument("--protocol")
    c.add_argument("--property")
    c.add_argument("--scenario")
    c.add_argument("--builtin", choices=("ns", "ksl"))
    c.add_argument("--max-instances", type=int)
    c.add_argument("--strategy", choices=STRATEGIES, default="guided")
    c.add_argument("--check-at", choices=CHECK_MODES, default="complete")
    c.add_argument("--interleave-joins", action="store_true")
    c.add_argument("--max-states", type=int, default=2_000_000)
    c.add_argument("--emit-dot")
    c.add_argument("--stats")
    c.set_defaults(func=cmd_check)

    p = sub.add_parser("parse", help="parse and pretty-print a protocol (or, with --property, a formula)")
    p.add_argument("file")
    p.add_argument("--property", action="store_true")
    p.set_defaults(func=cmd_parse)

    k = sub.add_parser("knowledge", help="print the analysis closure of a set of terms")
    k.add_argument("terms", nargs="*")
    k.add_argument("--file")
    k.set_defaults(func=cmd_knowledge)

    b = sub.add_parser("builtin", help="show or write the built-in scenarios")
    b.add_argument("name", choices=("ns", "ksl"))
    b.add_argument("--emit", metavar="DIR")
    b.set_defaults(func=cmd_builtin)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
