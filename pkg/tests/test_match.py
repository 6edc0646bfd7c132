import pytest
from hypothesis import given
from hypothesis import strategies as st

from ztsim.match import (
    PortRange,
    Selector,
    SelectorSyntaxError,
    host_matches,
    path_matches,
    path_prefix_matches,
    valid_host_pattern,
    wildcard_match,
)

LABELS = {"app": "httpbin", "tier": "1", "env": "prod"}


@pytest.mark.parametrize("expr,expected", [
    ("all()", True),
    ("app == 'httpbin'", True),
    ('app == "sleep"', False),
    ("app=httpbin", True),
    ("app != sleep", True),
    ("has(tier)", True),
    ("!has(owner)", True),
    ("app == httpbin && tier == '2'", False),
    ("app == httpbin, tier == '1'", True),
    ("app == sleep || env == prod", True),
    ("app in {'httpbin', 'sleep'}", True),
    ("app not in {httpbin}", False),
    ("!(app == sleep) && (tier == '1' || tier == '2')", True),
    ("missing != x", True),
])
def test_selector_expressions(expr, expected):
    assert Selector(expr).matches(LABELS) is expected


def test_selector_mapping_is_a_conjunction():
    assert Selector({"app": "httpbin", "tier": "1"}).matches(LABELS)
    assert not Selector({"app": "httpbin", "tier": "2"}).matches(LABELS)
    assert Selector({}).matches({})
    assert Selector().matches({}) and str(Selector()) == "all()"


@pytest.mark.parametrize("expr", ["", "app ==", "app == 'x' &&", "(app == x", "app in {x", "has(", "app ~ x"])
def test_selector_syntax_errors(expr):
    with pytest.raises(SelectorSyntaxError):
        Selector(expr)


def test_selector_equality_by_source():
    assert Selector("app == x") == Selector("app == x")
    assert Selector({"a": "1", "b": "2"}) == Selector({"b": "2", "a": "1"})
    assert Selector("app == x") != Selector({"app": "x"})
    assert len({Selector("a == b"), Selector("a == b")}) == 1


@given(st.dictionaries(st.sampled_from("abc"), st.sampled_from("xyz")), st.dictionaries(st.sampled_from("abc"), st.sampled_from("xyz")))
def test_mapping_selector_matches_expression_form(selector, labels):
    expr = " && ".join(f"{k} == '{v}'" for k, v in selector.items()) or "all()"
    assert Selector(selector).matches(labels) == Selector(expr).matches(labels)


def test_port_range_parse_and_contains():
    assert PortRange.parse(80) == PortRange(80, 80)
    assert PortRange.parse("80-90") == PortRange(80, 90)
    assert PortRange.parse("80:90") == PortRange(80, 90)
    assert 85 in PortRange(80, 90) and 91 not in PortRange(80, 90)
    assert PortRange(80, 90).dump() == "80-90" and PortRange(80, 80).dump() == 80
    for bad in (0, 65536, "90-80", "x", True):
        with pytest.raises(ValueError):
            PortRange.parse(bad)


@pytest.mark.parametrize("pattern,host,expected", [
    ("api.example.com", "api.example.com", True),
    ("api.example.com", "API.example.com", True),
    ("*.example.com", "a.example.com", True),
    ("*.example.com", "a.b.example.com", True),
    ("*.example.com", "example.com", False),
    ("*.example.com", "evil.org", False),
    ("*", "anything", True),
    ("x.org", None, False),
])
def test_host_matches(pattern, host, expected):
    assert host_matches(pattern, host) is expected


def test_valid_host_pattern():
    assert valid_host_pattern("*.example.com") and valid_host_pattern("10.0.0.1") and valid_host_pattern("*")
    assert not valid_host_pattern("a.*.com") and not valid_host_pattern("**.com") and not valid_host_pattern("")


@pytest.mark.parametrize("pattern,value,expected", [
    ("*", "x", True),
    ("cluster.local/ns/foo/*", "cluster.local/ns/foo/sa/sleep", True),
    ("*/sa/sleep", "cluster.local/ns/foo/sa/sleep", True),
    ("cluster.local/ns/bar/*", "cluster.local/ns/foo/sa/sleep", False),
    ("foo", "foo", True),
    ("*", None, False),
])
def test_wildcard_match(pattern, value, expected):
    assert wildcard_match(pattern, value) is expected


def test_paths():
    assert path_matches("/ip", "/ip") and not path_matches("/ip", "/ip/x")
    assert path_matches("/api/*", "/api/v1") and not path_matches("/api/*", "/apix")
    assert not path_matches("/ip", None)
    assert path_prefix_matches("/api", "/api/v1/x") and path_prefix_matches("/api", "/api")
    assert not path_prefix_matches("/api", "/apix") and path_prefix_matches("/", "/anything")
