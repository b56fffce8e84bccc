import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cipmc.fixtures import KSL_PROTOCOL, NS_PROTOCOL, random_protocol
from cipmc.protocol import In, InvalidBinding, Out, ProtocolError, instantiate, parse_protocol, print_protocol, render_instance
from cipmc.syntax import SyntaxErr
from cipmc.terms import Identity, Nonce, parse_term


def test_ns_parses():
    a, b = parse_protocol(NS_PROTOCOL)
    assert (a.name, b.name) == ("A", "B")
    assert a.open_vars == (("r", "id"),)
    assert [type(x) for x in a.actions] == [Out, In, Out]
    assert [type(x) for x in b.actions] == [In, Out, In]


def test_ksl_open_var_sorts_inferred():
    a, _ = parse_protocol(KSL_PROTOCOL)
    assert dict(a.open_vars) == {"b": "id", "sk": "key", "tk": "key"}


@pytest.mark.parametrize("src", [NS_PROTOCOL, KSL_PROTOCOL])
def test_print_parse_roundtrip(src):
    defs = parse_protocol(src)
    assert parse_protocol(print_protocol(defs)) == defs
    assert print_protocol(parse_protocol(print_protocol(defs))) == print_protocol(defs)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_random_protocols_roundtrip(seed):
    sc, _ = random_protocol(seed)
    assert parse_protocol(print_protocol(sc.protocol)) == list(sc.protocol)


def test_instantiate_ns_initiator():
    a, _ = parse_protocol(NS_PROTOCOL)
    inst = instantiate(a, 1, {"r": Identity("B", 2)})
    assert render_instance(inst) == (
        "A_1:(r_1 ↦ B_2)[out({na_1, A_1}_{B_2^+}).in({na_1, ?z_1}_{A_1^-}).out({z_1}_{B_2^+})]"
    )
    assert inst.actions[0].term == parse_term("{na_1, A_1}_{B_2^+}")


def test_instantiate_rejects_badly_sorted_binding():
    a, _ = parse_protocol(NS_PROTOCOL)
    with pytest.raises(InvalidBinding):
        instantiate(a, 1, {"r": Nonce("na", 1)})
    with pytest.raises(InvalidBinding):
        instantiate(a, 1, {"q": Identity("B", 2)})


def test_explicit_sort_conflicting_with_use_is_error():
    src = "A: (k:id)[\n    out({na}_{k})\n]\n"
    with pytest.raises((ProtocolError, SyntaxErr)):
        parse_protocol(src)


def test_syntax_error_has_position():
    with pytest.raises(SyntaxErr) as info:
        parse_protocol("A: (r)[\n    out({na, A}_{r+};\n]\n")
    assert info.value.line == 2
