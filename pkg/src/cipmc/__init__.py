"""Heuristic-guided model checking of cIP security protocols under a Dolev-Yao intruder."""

from cipmc.fixtures import builtin
from cipmc.logic import evaluate, parse_property, pnf
from cipmc.protocol import instantiate, parse_protocol
from cipmc.search import SearchConfig, find_attack

__version__ = "0.1.0"

__all__ = ["builtin", "evaluate", "find_attack", "instantiate", "parse_property", "parse_protocol", "pnf", "SearchConfig"]
