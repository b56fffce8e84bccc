"""Scenario files: YAML documents tying a protocol, a property and a search bound together."""

from __future__ import annotations

from pathlib import Path

import yaml

from cipmc.fixtures import parse_join_rules
from cipmc.logic import Formula, parse_property
from cipmc.protocol import parse_protocol
from cipmc.statespace import Scenario, ScenarioError
from cipmc.terms import intruder_knowledge, parse_term

KEYS = {"protocol", "property", "protocol_text", "property_text", "max_instances", "initial_knowledge",
        "join_rules", "allow_self_binding"}


def scenario_from_dict(data: dict, base: Path | None = None) -> tuple[Scenario, Formula]:
    unknown = set(data) - KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
    base = base or Path(".")

    def text(key: str) -> str:
        if f"{key}_text" in data:
            return data[f"{key}_text"]
        if key not in data:
            raise ScenarioError(f"scenario needs '{key}' or '{key}_text'")
        return (base / data[key]).read_text(encoding="utf-8")

    defs = parse_protocol(text("protocol"))
    phi = parse_property(text("property"))
    init = data.get("initial_knowledge")
    knowledge = frozenset(parse_term(str(t)) for t in init) if init is not None else intruder_knowledge()
    sc = Scenario(
        defs,
        int(data.get("max_instances", 2)),
        initial_knowledge=knowledge,
        join_rules=parse_join_rules(data.get("join_rules") or {}),
        allow_self_binding=bool(data.get("allow_self_binding", False)),
    )
    return sc, phi


def load_scenario(path: str | Path) -> tuple[Scenario, Formula]:
    path = Path(path)
    data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise ScenarioError("a scenario file must be a mapping")
    return scenario_from_dict(data, path.parent)
