import random

import pytest

from cipmc.fixtures import builtin, builtin_sources, random_formula, random_protocol, random_term
from cipmc.logic import is_closed, prefix, render_formula
from cipmc.protocol import print_protocol
from cipmc.terms import is_ground


def test_builtin_unknown():
    with pytest.raises(KeyError):
        builtin("tls")


def test_builtin_bounds():
    sc, _ = builtin("ksl", 3)
    assert sc.max_instances == 3 and sc.join_rules


def test_builtin_sources_files():
    files = builtin_sources("ksl")
    assert set(files) == {"ksl.cip", "ksl.pl", "ksl.yaml"}


def test_random_protocol_deterministic():
    a, pa = random_protocol(42)
    b, pb = random_protocol(42)
    assert print_protocol(a.protocol) == print_protocol(b.protocol)
    assert render_formula(pa) == render_formula(pb)


def test_random_properties_are_forall_prefixed():
    for seed in range(50):
        _, phi = random_protocol(seed)
        assert is_closed(phi)
        assert prefix(phi)[0].kind == "forall"


def test_random_formula_depth_and_closure():
    for seed in range(100):
        phi = random_formula(random.Random(seed), depth=5, max_quantifiers=3)
        assert is_closed(phi)
        assert _depth(phi) <= 6


def _depth(phi):
    kids = [getattr(phi, a) for a in ("body", "left", "right") if hasattr(phi, a)]
    return 1 + max((_depth(k) for k in kids), default=0)


def test_random_terms_ground():
    rng = random.Random(3)
    assert all(is_ground(random_term(rng, 3)) for _ in range(100))
