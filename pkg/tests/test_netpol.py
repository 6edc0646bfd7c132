import ipaddress
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracle import World
from scenario_gen import namespace_names, random_l34_policy, random_l34_rule, random_topology
from ztsim import load_scenario
from ztsim.match import PortRange, Selector
from ztsim.netpol import (
    Direction,
    Endpoint,
    Flow,
    L34Action,
    L34Rule,
    L34Verdict,
    NetworkPolicyL34,
    Peer,
    evaluate_l3l4,
    select_policies,
)
from ztsim.topology import NAME_LABEL


def ep(name, ns, app, address="10.0.0.1", ns_labels=None):
    return Endpoint(name, ns, {"app": app}, {NAME_LABEL: ns, **(ns_labels or {})}, ipaddress.IPv4Address(address))


HTTPBIN_BAR = ep("httpbin", "bar", "httpbin", "10.0.1.20")
SLEEP_FOO = ep("sleep", "foo", "sleep", "10.0.1.11")
SLEEP_LEGACY = ep("sleep", "legacy", "sleep", "10.0.1.31")

FROM_FOO = NetworkPolicyL34(
    "httpbin-from-foo", 10, "bar", Selector("app == 'httpbin'"),
    ingress_rules=(L34Rule(L34Action.ALLOW, "TCP", (PortRange(8000, 8000),), Peer(namespace_selector=Selector({NAME_LABEL: "foo"}))),),
    egress_rules=(),
)


def test_nothing_selected():
    assert select_policies([], HTTPBIN_BAR, Direction.INGRESS) == []
    assert evaluate_l3l4([], Flow(SLEEP_FOO, HTTPBIN_BAR, 8000), Direction.INGRESS).verdict is L34Verdict.NO_POLICY


def test_sort_namespaced_before_global_by_order():
    glob = NetworkPolicyL34("g", 100, None, Selector(), ingress_rules=())
    local = NetworkPolicyL34("n", 50, "bar", Selector(), ingress_rules=())
    assert select_policies([glob, local], HTTPBIN_BAR, Direction.INGRESS) == [local, glob]


def test_equal_order_breaks_on_name():
    a = NetworkPolicyL34("a", 10, None, ingress_rules=())
    b = NetworkPolicyL34("b", 10, "bar", ingress_rules=())
    assert select_policies([b, a], HTTPBIN_BAR, Direction.INGRESS) == [a, b]


def test_label_mismatch_excludes_policy():
    assert select_policies([FROM_FOO], SLEEP_FOO, Direction.INGRESS) == []
    assert select_policies([FROM_FOO], ep("sleep", "bar", "sleep"), Direction.INGRESS) == []


def test_direction_relevance():
    ingress_only = NetworkPolicyL34("i", 1, None, ingress_rules=())
    assert select_policies([ingress_only], HTTPBIN_BAR, Direction.EGRESS) == []
    assert select_policies([ingress_only], HTTPBIN_BAR, Direction.INGRESS) == [ingress_only]


def test_first_match_examples():
    allow = evaluate_l3l4([FROM_FOO], Flow(SLEEP_FOO, HTTPBIN_BAR, 8000), Direction.INGRESS)
    assert (allow.verdict, allow.policy, allow.rule) == (L34Verdict.ALLOW, "bar/httpbin-from-foo", 0)
    deny = evaluate_l3l4([FROM_FOO], Flow(SLEEP_LEGACY, HTTPBIN_BAR, 8000), Direction.INGRESS)
    assert (deny.verdict, deny.policy, deny.subject) == (L34Verdict.DENY, None, "default")
    assert deny.selected == ("bar/httpbin-from-foo",)
    # empty egress list: selected, nothing matches
    assert evaluate_l3l4([FROM_FOO], Flow(HTTPBIN_BAR, SLEEP_FOO, 8000), Direction.EGRESS).verdict is L34Verdict.DENY


def test_http_rule_matches_as_tcp():
    pol = NetworkPolicyL34("p", 1, None, ingress_rules=(L34Rule(L34Action.DENY, "HTTP"),))
    assert evaluate_l3l4([pol], Flow(SLEEP_FOO, HTTPBIN_BAR, 9000, "TCP"), Direction.INGRESS).verdict is L34Verdict.DENY


def test_bare_selector_stays_in_policy_namespace():
    peer = Peer(selector=Selector({"app": "sleep"}))
    local = NetworkPolicyL34("p", 1, "bar", ingress_rules=(L34Rule(L34Action.ALLOW, peer=peer),))
    assert evaluate_l3l4([local], Flow(SLEEP_FOO, HTTPBIN_BAR, 80), Direction.INGRESS).verdict is L34Verdict.DENY
    glob = NetworkPolicyL34("p", 1, None, ingress_rules=(L34Rule(L34Action.ALLOW, peer=peer),))
    assert evaluate_l3l4([glob], Flow(SLEEP_FOO, HTTPBIN_BAR, 80), Direction.INGRESS).verdict is L34Verdict.ALLOW


def test_cidr_peer():
    pol = NetworkPolicyL34("p", 1, None, ingress_rules=(L34Rule(L34Action.ALLOW, peer=Peer(cidr=ipaddress.IPv4Network("10.0.1.0/28"))),))
    assert evaluate_l3l4([pol], Flow(SLEEP_FOO, HTTPBIN_BAR, 80), Direction.INGRESS).verdict is L34Verdict.ALLOW
    assert evaluate_l3l4([pol], Flow(SLEEP_LEGACY, HTTPBIN_BAR, 80), Direction.INGRESS).verdict is L34Verdict.DENY


def test_order_must_be_finite():
    with pytest.raises(ValueError):
        NetworkPolicyL34("p", float("nan"))
    with pytest.raises(ValueError):
        NetworkPolicyL34("p", float("inf"))


# -- properties over random worlds ------------------------------------------------

def world(seed, max_workloads=10, max_policies=8):
    rng = random.Random(seed)
    doc = {"topology": random_topology(rng, max_workloads)}
    namespaces = namespace_names(doc)
    doc["policies"] = {"l3l4": [random_l34_policy(rng, f"p{i}", namespaces) for i in range(rng.randint(0, max_policies))]}
    for p in doc["policies"]["l3l4"]:
        for d in ("ingress_rules", "egress_rules"):
            if d in p:
                del p[d][4:]
    s = load_scenario(doc)
    t = s.topology
    eps = {w.key: Endpoint(w.key, w.namespace, w.labels, t.namespace_of(w).selector_labels, w.address) for w in t.workloads}
    return rng, doc, s, eps


def triples(eps):
    return [(a, b, port) for a in eps for b in eps for port in (80, 8000, 9000)]


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_oracle_equivalence(seed):
    _, doc, s, eps = world(seed)
    naive = World(doc, None)
    for a, b, port in triples(eps):
        src, dst = naive.workloads[a], naive.workloads[b]
        flow = Flow(eps[a], eps[b], port)
        assert evaluate_l3l4(s.policies.l3l4, flow, Direction.EGRESS).verdict.value == naive.l34(src, dst, port, "egress")
        assert evaluate_l3l4(s.policies.l3l4, flow, Direction.INGRESS).verdict.value == naive.l34(dst, src, port, "ingress")


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_permutation_invariance(seed):
    rng, _, s, eps = world(seed)
    policies = list(s.policies.l3l4)
    keys = [p.sort_key for p in policies]
    if len(set(keys)) != len(keys):
        return
    shuffled = policies[:]
    rng.shuffle(shuffled)
    for a, b, port in triples(eps):
        for d in Direction:
            flow = Flow(eps[a], eps[b], port)
            assert evaluate_l3l4(policies, flow, d).verdict == evaluate_l3l4(shuffled, flow, d).verdict


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_adding_deny_never_allows(seed):
    rng, doc, s, eps = world(seed)
    namespaces = namespace_names(doc)
    extra = random_l34_policy(rng, "extra", namespaces)
    direction = rng.choice(("ingress_rules", "egress_rules"))
    extra.pop("ingress_rules", None)
    extra.pop("egress_rules", None)
    extra[direction] = [random_l34_rule(rng, namespaces, action="Deny")]
    doc["policies"]["l3l4"].append(extra)
    tighter = load_scenario(doc).policies.l3l4
    for a, b, port in triples(eps):
        for d in Direction:
            flow = Flow(eps[a], eps[b], port)
            if evaluate_l3l4(s.policies.l3l4, flow, d).verdict is L34Verdict.DENY:
                assert evaluate_l3l4(tighter, flow, d).verdict is L34Verdict.DENY


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_zero_policies_is_no_policy(seed):
    _, _, _, eps = world(seed, max_policies=0)
    for a, b, port in triples(eps):
        for d in Direction:
            assert evaluate_l3l4([], Flow(eps[a], eps[b], port), d).verdict is L34Verdict.NO_POLICY
