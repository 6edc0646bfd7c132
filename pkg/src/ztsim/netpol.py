"""Layer 3/4 network policy: ordered, selector-based allow/deny rules.

Policies are namespaced or global. For a workload and a direction, the
policies that select it are evaluated in ``(order, name)`` order and the first
matching rule decides. A workload selected by at least one policy for that
direction but matched by no rule is denied; a workload selected by nothing
has no policy at all.

L4 sees every flow as TCP, so a rule's ``HTTP`` protocol matches like ``TCP``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from ipaddress import IPv4Address, IPv4Network
from typing import Iterable, Mapping, Sequence

from .match import PortRange, Selector, port_in


class Direction(str, Enum):
    INGRESS = "ingress"
    EGRESS = "egress"


class L34Action(str, Enum):
    ALLOW = "Allow"
    DENY = "Deny"


@dataclass(frozen=True)
class Peer:
    """Remote-side constraint; every present clause must hold."""

    cidr: IPv4Network | None = None
    selector: Selector | None = None
    namespace_selector: Selector | None = None


@dataclass(frozen=True)
class L34Rule:
    action: L34Action
    protocol: str | None = None
    ports: tuple[PortRange, ...] | None = None
    peer: Peer | None = None


@dataclass(frozen=True)
class NetworkPolicyL34:
    name: str
    order: float
    namespace: str | None = None  # None: global
    selector: Selector = field(default_factory=Selector)
    ingress_rules: tuple[L34Rule, ...] | None = None
    egress_rules: tuple[L34Rule, ...] | None = None

    def __post_init__(self) -> None:
        if self.order != self.order or self.order in (float("inf"), float("-inf")):
            raise ValueError(f"policy {self.name}: order must be finite")

    @property
    def is_global(self) -> bool:
        return self.namespace is None

    @property
    def qualified_name(self) -> str:
        return self.name if self.namespace is None else f"{self.namespace}/{self.name}"

    @property
    def sort_key(self) -> tuple[float, str, str]:
        return (self.order, self.name, self.namespace or "")

    def rules(self, direction: Direction) -> tuple[L34Rule, ...] | None:
        return self.ingress_rules if direction is Direction.INGRESS else self.egress_rules


@dataclass(frozen=True)
class Endpoint:
    """One side of a flow as L3/L4 sees it. External hosts have no namespace."""

    name: str
    namespace: str | None = None
    labels: Mapping[str, str] = field(default_factory=dict)
    namespace_labels: Mapping[str, str] = field(default_factory=dict)
    address: IPv4Address | None = None


@dataclass(frozen=True)
class Flow:
    source: Endpoint
    destination: Endpoint
    port: int
    protocol: str = "TCP"


class L34Verdict(str, Enum):
    ALLOW = "Allow"
    DENY = "Deny"
    NO_POLICY = "NoPolicy"


@dataclass(frozen=True)
class L34Result:
    verdict: L34Verdict
    policy: str | None = None  # None: no rule matched (default)
    rule: int | None = None
    selected: tuple[str, ...] = ()

    @property
    def subject(self) -> str:
        return "default" if self.policy is None else f"{self.policy}#{self.rule}"


def select_policies(policies: Iterable[NetworkPolicyL34], w: Endpoint, direction: Direction) -> list[NetworkPolicyL34]:
    selected = [
        p for p in policies
        if p.rules(direction) is not None
        and w.namespace is not None
        and (p.is_global or p.namespace == w.namespace)
        and p.selector.matches(w.labels)
    ]
    selected.sort(key=lambda p: p.sort_key)
    return selected


def peer_matches(policy: NetworkPolicyL34, peer: Peer, remote: Endpoint) -> bool:
    if peer.cidr is not None and (remote.address is None or remote.address not in peer.cidr):
        return False
    if peer.namespace_selector is not None:
        if remote.namespace is None or not peer.namespace_selector.matches(remote.namespace_labels):
            return False
    if peer.selector is not None:
        if remote.namespace is None or not peer.selector.matches(remote.labels):
            return False
        # a bare pod selector in a namespaced policy stays inside that namespace
        if peer.namespace_selector is None and not policy.is_global and remote.namespace != policy.namespace:
            return False
    return True


def rule_matches(policy: NetworkPolicyL34, rule: L34Rule, flow: Flow, direction: Direction) -> bool:
    if rule.ports is not None and not port_in(flow.port, rule.ports):
        return False
    if rule.peer is not None:
        remote = flow.source if direction is Direction.INGRESS else flow.destination
        if not peer_matches(policy, rule.peer, remote):
            return False
    return True


def first_match(selected: Sequence[NetworkPolicyL34], flow: Flow, direction: Direction) -> L34Result:
    """Decide a flow against policies already selected and sorted for the endpoint."""
    if not selected:
        return L34Result(L34Verdict.NO_POLICY)
    for policy in selected:
        for i, rule in enumerate(policy.rules(direction) or ()):
            if rule_matches(policy, rule, flow, direction):
                verdict = L34Verdict.ALLOW if rule.action is L34Action.ALLOW else L34Verdict.DENY
                return L34Result(verdict, policy.qualified_name, i, tuple(p.qualified_name for p in selected))
    return L34Result(L34Verdict.DENY, selected=tuple(p.qualified_name for p in selected))


def evaluate_l3l4(policies: Iterable[NetworkPolicyL34], flow: Flow, direction: Direction) -> L34Result:
    """Egress is judged at ``flow.source``, ingress at ``flow.destination``."""
    endpoint = flow.destination if direction is Direction.INGRESS else flow.source
    return first_match(select_policies(policies, endpoint, direction), flow, direction)
