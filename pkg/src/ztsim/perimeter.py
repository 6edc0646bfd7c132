"""Gateway layer and software defined perimeter.

Gateways sit on declared cross-boundary paths (cluster/cloud to cluster/cloud,
and internet ingress). The SDP checkpoint sees every internet-crossing flow and
trusts nothing by default: a flow passes only when an ordered rule allows it.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from ipaddress import IPv4Address, IPv4Network
from typing import TYPE_CHECKING

from .errors import ResolutionError
from .match import PortRange, host_matches, path_prefix_matches, port_in

if TYPE_CHECKING:
    from .topology import Topology, Workload

INTERNET = "internet"


class GatewayKind(str, Enum):
    INGRESS = "ingress"
    EGRESS = "egress"
    API = "api"


@dataclass(frozen=True)
class Exposure:
    service: str  # "ns/name" or "cluster/ns/name"
    port: int  # service port
    host: str | None = None
    path: str = "/"


@dataclass(frozen=True)
class Gateway:
    name: str
    kind: GatewayKind
    cluster: str | None = None
    vnet: str | None = None
    exposes: tuple[Exposure, ...] = ()
    allowed_destinations: tuple[str, ...] = ()
    encrypts: bool = False

    def __post_init__(self) -> None:
        if (self.cluster is None) == (self.vnet is None):
            raise ValueError(f"gateway {self.name} must attach to exactly one of cluster or vnet")

    def attached_to(self, w: "Workload") -> bool:
        if self.cluster is not None:
            return w.cluster == self.cluster
        return w.vnet == self.vnet

    @property
    def fronts_services(self) -> bool:
        return self.kind in (GatewayKind.INGRESS, GatewayKind.API)


class SdpAction(str, Enum):
    ALLOW = "Allow"
    DENY = "Deny"


class SdpDirection(str, Enum):
    INBOUND = "inbound"
    OUTBOUND = "outbound"


@dataclass(frozen=True)
class SdpRule:
    action: SdpAction
    direction: SdpDirection
    host: str | None = None
    cidr: IPv4Network | None = None
    ports: tuple[PortRange, ...] | None = None

    def matches(self, req: "EdgeRequest") -> bool:
        if self.direction is not req.direction:
            return False
        if self.host is not None and not host_matches(self.host, req.host):
            return False
        if self.cidr is not None and (req.address is None or req.address not in self.cidr):
            return False
        if self.ports is not None and not port_in(req.port, self.ports):
            return False
        return True


@dataclass(frozen=True)
class PerimeterConfig:
    sdp_rules: tuple[SdpRule, ...] = ()
    default_action: SdpAction = SdpAction.DENY

    def __post_init__(self) -> None:
        if SdpAction(self.default_action) is not SdpAction.DENY:
            raise ValueError("the perimeter default action is always Deny")


class Hop(str, Enum):
    LOCAL = "local"
    VNET_PEERING = "vnet-peering"
    GATEWAY = "gateway"
    SDP = "sdp"


@dataclass(frozen=True)
class PathSegment:
    hop: Hop
    gateway: str | None = None
    # ingress-side gateways: the exposure the route enters through
    host: str | None = None
    path: str | None = None

    def __str__(self) -> str:
        return f"gateway({self.gateway})" if self.hop is Hop.GATEWAY else self.hop.value


@dataclass(frozen=True)
class EdgeRequest:
    """What a gateway or the SDP sees of a flow: the remote side and the port."""

    direction: SdpDirection
    host: str | None
    address: IPv4Address | None
    port: int
    path: str = "/"


@dataclass(frozen=True)
class PerimeterResult:
    allowed: bool
    rule: int | None  # None: default action

    @property
    def subject(self) -> str:
        return "default" if self.rule is None else f"sdp_rules[{self.rule}]"


@dataclass(frozen=True)
class GatewayResult:
    forwarded: bool
    service: str | None = None
    port: int | None = None
    matched: int | None = None  # exposure or allowed_destinations index


def _sorted_gateways(t: "Topology", kinds) -> list[Gateway]:
    return sorted((g for g in t.gateways if g.kind in kinds), key=lambda g: g.name)


def _ingress_segment(t: "Topology", dst: "Workload", port: int) -> PathSegment | None:
    for g in _sorted_gateways(t, (GatewayKind.INGRESS, GatewayKind.API)):
        if not g.attached_to(dst):
            continue
        for exp in g.exposes:
            try:
                svc = t.find_service(exp.service, cluster=g.cluster)
            except ResolutionError:
                continue
            if svc.port_map.get(exp.port) != port:
                continue
            if dst in t.backends(svc):
                return PathSegment(Hop.GATEWAY, g.name, exp.host, exp.path)
    return None


def egress_gateway_for(t: "Topology", src: "Workload") -> Gateway | None:
    for g in _sorted_gateways(t, (GatewayKind.EGRESS,)):
        if g.attached_to(src):
            return g
    return None


def route(t: "Topology", src: "Workload | str", dst: "Workload", port: int) -> tuple[PathSegment, ...] | None:
    """Path from ``src`` (a workload or :data:`INTERNET`) to ``dst`` on target ``port``.

    Returns ``None`` when no declared connectivity construct links them.
    """
    if isinstance(src, str):
        if src != INTERNET:
            raise ValueError(f"unknown source {src!r}")
        seg = _ingress_segment(t, dst, port)
        return None if seg is None else (PathSegment(Hop.SDP), seg)
    if src.vnet == dst.vnet:
        return (PathSegment(Hop.LOCAL),)
    if t.peered(src.vnet, dst.vnet):
        return (PathSegment(Hop.VNET_PEERING),)
    egress = egress_gateway_for(t, src)
    ingress = _ingress_segment(t, dst, port)
    if egress is None or ingress is None:
        return None
    return (PathSegment(Hop.GATEWAY, egress.name), ingress)


def outbound_route(t: "Topology", src: "Workload") -> tuple[PathSegment, ...]:
    """Internet-bound flows leave through the source's egress gateway, if any, then the SDP."""
    egress = egress_gateway_for(t, src)
    if egress is None:
        return (PathSegment(Hop.SDP),)
    return (PathSegment(Hop.GATEWAY, egress.name), PathSegment(Hop.SDP))


def gateways_for_host(t: "Topology", host: str) -> list[Gateway]:
    return [
        g for g in _sorted_gateways(t, (GatewayKind.INGRESS, GatewayKind.API))
        if any(exp.host is None or host_matches(exp.host, host) for exp in g.exposes)
    ]


def evaluate_perimeter(cfg: PerimeterConfig, req: EdgeRequest) -> PerimeterResult:
    for i, rule in enumerate(cfg.sdp_rules):
        if rule.matches(req):
            return PerimeterResult(rule.action is SdpAction.ALLOW, i)
    return PerimeterResult(False, None)


def evaluate_gateway(g: Gateway, req: EdgeRequest) -> GatewayResult:
    if g.kind is GatewayKind.EGRESS:
        target = req.host if req.host is not None else (str(req.address) if req.address else None)
        for i, pattern in enumerate(g.allowed_destinations):
            if host_matches(pattern, target):
                return GatewayResult(True, matched=i)
        return GatewayResult(False)
    best: int | None = None
    for i, exp in enumerate(g.exposes):
        if exp.host is not None and not host_matches(exp.host, req.host):
            continue
        if not path_prefix_matches(exp.path, req.path):
            continue
        if best is None or len(exp.path.rstrip("/")) > len(g.exposes[best].path.rstrip("/")):
            best = i
    if best is None:
        return GatewayResult(False)
    exp = g.exposes[best]
    return GatewayResult(True, exp.service, exp.port, best)
