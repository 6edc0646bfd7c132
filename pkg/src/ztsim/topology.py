"""Multi-cloud object model: clouds, virtual networks, clusters, namespaces, workloads.

The nesting mirrors the three segregation tiers of the core network:
virtual network (business function) -> cluster (risk tier) -> namespace
(application). Workloads carry their cluster and namespace names so that the
object graph can be flattened and indexed once, after which a
:class:`Topology` is read-only.
"""

from __future__ import annotations

import ipaddress
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from functools import cached_property
from ipaddress import IPv4Address, IPv4Network
from typing import Any, Mapping

from .errors import ResolutionError, Violation
from .match import Selector, valid_host_pattern
from .perimeter import Gateway, PerimeterConfig

NAME_LABEL = "kubernetes.io/metadata.name"


class RiskTier(str, Enum):
    LOW = "low"
    MODERATE = "moderate"
    HIGH = "high"


class WorkloadKind(str, Enum):
    CONTAINER = "container"
    VM = "vm"


class PortProtocol(str, Enum):
    TCP = "TCP"
    HTTP = "HTTP"


@dataclass(frozen=True)
class Subnet:
    name: str
    cidr: IPv4Network


@dataclass(frozen=True)
class VirtualNetwork:
    name: str
    cidr: IPv4Network
    subnets: tuple[Subnet, ...] = ()
    business_function: str = ""


@dataclass(frozen=True)
class Cloud:
    name: str
    vnets: tuple[VirtualNetwork, ...] = ()


@dataclass(frozen=True)
class CertificateOverride:
    """Simulation knob: issue this workload's certificate from another trust
    domain and/or at another instant (to exercise expiry paths)."""

    trust_domain: str | None = None
    issued_at: datetime | None = None


@dataclass(frozen=True)
class Workload:
    name: str
    cluster: str
    namespace: str
    subnet: str  # "cloud/vnet/subnet"
    address: IPv4Address
    kind: WorkloadKind = WorkloadKind.CONTAINER
    labels: Mapping[str, str] = field(default_factory=dict)
    service_account: str = "default"
    ports: Mapping[int, PortProtocol] = field(default_factory=dict)
    sidecar: bool = False
    cert: CertificateOverride | None = None

    @property
    def key(self) -> str:
        return f"{self.cluster}/{self.namespace}/{self.name}"

    @property
    def vnet(self) -> str:
        return self.subnet.rsplit("/", 1)[0]

    @property
    def sort_key(self) -> tuple[str, str, str]:
        return (self.cluster, self.namespace, self.name)


@dataclass(frozen=True)
class ServiceEndpoint:
    name: str
    cluster: str
    namespace: str
    selector: Selector
    port_map: Mapping[int, int] = field(default_factory=dict)

    @property
    def key(self) -> str:
        return f"{self.cluster}/{self.namespace}/{self.name}"

    @property
    def sort_key(self) -> tuple[str, str, str]:
        return (self.cluster, self.namespace, self.name)


@dataclass(frozen=True)
class Namespace:
    name: str
    cluster: str
    labels: Mapping[str, str] = field(default_factory=dict)
    sidecar_injection_default: bool = False
    workloads: tuple[Workload, ...] = ()
    services: tuple[ServiceEndpoint, ...] = ()

    @property
    def key(self) -> str:
        return f"{self.cluster}/{self.name}"

    @property
    def selector_labels(self) -> dict[str, str]:
        """Labels visible to namespace selectors, including the implicit name label."""
        return {**self.labels, NAME_LABEL: self.name}


@dataclass(frozen=True)
class Cluster:
    name: str
    vnet: str  # "cloud/vnet"
    risk_tier: RiskTier = RiskTier.MODERATE
    namespaces: tuple[Namespace, ...] = ()


@dataclass(frozen=True)
class Topology:
    clouds: tuple[Cloud, ...] = ()
    clusters: tuple[Cluster, ...] = ()
    gateways: tuple[Gateway, ...] = ()
    perimeter: PerimeterConfig = field(default_factory=PerimeterConfig)
    mesh_root_namespace: str = "istio-system"
    peerings: tuple[tuple[str, str], ...] = ()
    trust_domain: str = "cluster.local"
    cert_ttl: timedelta = timedelta(hours=24)

    # -- indexes (built lazily, never mutated afterwards) --

    @cached_property
    def workloads(self) -> tuple[Workload, ...]:
        return tuple(sorted((w for ns in self.namespaces for w in ns.workloads), key=lambda w: w.sort_key))

    @cached_property
    def services(self) -> tuple[ServiceEndpoint, ...]:
        return tuple(sorted((s for ns in self.namespaces for s in ns.services), key=lambda s: s.sort_key))

    @cached_property
    def namespaces(self) -> tuple[Namespace, ...]:
        return tuple(ns for c in self.clusters for ns in c.namespaces)

    @cached_property
    def _namespace_by_key(self) -> dict[str, Namespace]:
        return {ns.key: ns for ns in self.namespaces}

    @cached_property
    def namespace_names(self) -> frozenset[str]:
        return frozenset(ns.name for ns in self.namespaces)

    @cached_property
    def _workload_by_key(self) -> dict[str, Workload]:
        return {w.key: w for w in self.workloads}

    @cached_property
    def _service_by_key(self) -> dict[str, ServiceEndpoint]:
        return {s.key: s for s in self.services}

    @cached_property
    def _workload_by_address(self) -> dict[IPv4Address, Workload]:
        return {w.address: w for w in self.workloads}

    @cached_property
    def vnets(self) -> dict[str, VirtualNetwork]:
        return {f"{c.name}/{v.name}": v for c in self.clouds for v in c.vnets}

    @cached_property
    def subnets(self) -> dict[str, Subnet]:
        return {f"{c.name}/{v.name}/{s.name}": s for c in self.clouds for v in c.vnets for s in v.subnets}

    @cached_property
    def cluster_by_name(self) -> dict[str, Cluster]:
        return {c.name: c for c in self.clusters}

    @cached_property
    def gateway_by_name(self) -> dict[str, Gateway]:
        return {g.name: g for g in self.gateways}

    @cached_property
    def _peer_pairs(self) -> frozenset[frozenset[str]]:
        return frozenset(frozenset(p) for p in self.peerings)

    @cached_property
    def paths(self) -> dict[str, str]:
        """Document path of every named object, keyed by ``kind:key``."""
        out: dict[str, str] = {}
        for ci, cloud in enumerate(self.clouds):
            for vi, vnet in enumerate(cloud.vnets):
                vp = f"topology.clouds[{ci}].vnets[{vi}]"
                out[f"vnet:{cloud.name}/{vnet.name}"] = vp
                for si, sn in enumerate(vnet.subnets):
                    out[f"subnet:{cloud.name}/{vnet.name}/{sn.name}"] = f"{vp}.subnets[{si}]"
        for ki, cluster in enumerate(self.clusters):
            cp = f"topology.clusters[{ki}]"
            out[f"cluster:{cluster.name}"] = cp
            for ni, ns in enumerate(cluster.namespaces):
                np_ = f"{cp}.namespaces[{ni}]"
                out[f"namespace:{ns.key}"] = np_
                for wi, w in enumerate(ns.workloads):
                    out[f"workload:{w.key}"] = f"{np_}.workloads[{wi}]"
                for si, s in enumerate(ns.services):
                    out[f"service:{s.key}"] = f"{np_}.services[{si}]"
        for gi, g in enumerate(self.gateways):
            out[f"gateway:{g.name}"] = f"topology.gateways[{gi}]"
        return out

    # -- lookups --

    def namespace(self, cluster: str, name: str) -> Namespace:
        try:
            return self._namespace_by_key[f"{cluster}/{name}"]
        except KeyError:
            raise ResolutionError("unknown-namespace", f"namespace {cluster}/{name} does not exist") from None

    def namespace_of(self, w: Workload) -> Namespace:
        return self._namespace_by_key[f"{w.cluster}/{w.namespace}"]

    def workload_by_address(self, address: IPv4Address | str) -> Workload | None:
        return self._workload_by_address.get(ipaddress.IPv4Address(str(address)))

    def peered(self, vnet_a: str, vnet_b: str) -> bool:
        return frozenset((vnet_a, vnet_b)) in self._peer_pairs

    def find_workload(self, ref: str) -> Workload:
        return _find(ref, self._workload_by_key, self.workloads, "workload")

    def find_service(self, ref: str, cluster: str | None = None) -> ServiceEndpoint:
        if cluster is not None and ref.count("/") == 1:
            svc = self._service_by_key.get(f"{cluster}/{ref}")
            if svc is not None:
                return svc
        return _find(ref, self._service_by_key, self.services, "service")

    def backends(self, svc: ServiceEndpoint) -> tuple[Workload, ...]:
        ns = self._namespace_by_key.get(f"{svc.cluster}/{svc.namespace}")
        if ns is None:
            return ()
        return tuple(sorted((w for w in ns.workloads if svc.selector.matches(w.labels)), key=lambda w: w.name))


def split_ref(ref: str) -> tuple[str | None, str, str]:
    """Split ``cluster/ns/name``, ``ns/name`` or dotted ``name.ns`` into parts."""
    parts = ref.split("/")
    if len(parts) == 3 and all(parts):
        return parts[0], parts[1], parts[2]
    if len(parts) == 2 and all(parts):
        return None, parts[0], parts[1]
    if len(parts) == 1 and ref.count(".") == 1 and all(ref.split(".")):
        name, ns = ref.split(".")
        return None, ns, name
    raise ResolutionError("bad-reference", f"cannot parse reference {ref!r} (expected ns/name or cluster/ns/name)")


def _find(ref: str, by_key: dict, items, kind: str):
    cluster, ns, name = split_ref(ref)
    if cluster is not None:
        try:
            return by_key[f"{cluster}/{ns}/{name}"]
        except KeyError:
            raise ResolutionError(f"unknown-{kind}", f"{kind} {ref} does not exist") from None
    hits = [o for o in items if o.namespace == ns and o.name == name]
    if not hits:
        raise ResolutionError(f"unknown-{kind}", f"{kind} {ns}/{name} does not exist")
    if len(hits) > 1:
        clusters = ", ".join(o.cluster for o in hits)
        raise ResolutionError("ambiguous-reference", f"{kind} {ns}/{name} exists in several clusters ({clusters}); qualify it")
    return hits[0]


def resolve_service(t: Topology, service: str, namespace: str, port: int, cluster: str | None = None) -> tuple[tuple[Workload, int], ...]:
    """Backends of ``namespace/service`` for a service port, sorted by workload name.

    Raises :class:`ResolutionError` with code ``unknown-service`` or
    ``port-not-exposed``.
    """
    ref = f"{namespace}/{service}" if cluster is None else f"{cluster}/{namespace}/{service}"
    svc = t.find_service(ref)
    if port not in svc.port_map:
        raise ResolutionError("port-not-exposed", f"service {svc.namespace}/{svc.name} does not map port {port}")
    target = svc.port_map[port]
    return tuple((w, target) for w in t.backends(svc))


def load_topology(document: Mapping[str, Any], *, lax: bool = False) -> Topology:
    """Load the topology (with gateways and perimeter) from a scenario document."""
    from .scenario import load_scenario

    return load_scenario(document, lax=lax).topology


def validate_topology(t: Topology) -> list[Violation]:
    out: list[Violation] = []

    def dup_check(names, path_of, what):
        for name, n in Counter(names).items():
            if n > 1:
                out.append(Violation(path_of(name), "duplicate-identifier", f"{what} {name!r} declared {n} times"))

    dup_check([c.name for c in t.clouds], lambda n: "topology.clouds", "cloud")
    for ci, cloud in enumerate(t.clouds):
        cp = f"topology.clouds[{ci}]"
        dup_check([v.name for v in cloud.vnets], lambda n: cp, "vnet")
        for vi, vnet in enumerate(cloud.vnets):
            vp = f"{cp}.vnets[{vi}]"
            dup_check([s.name for s in vnet.subnets], lambda n: vp, "subnet")
            for si, sn in enumerate(vnet.subnets):
                if not sn.cidr.subnet_of(vnet.cidr):
                    out.append(Violation(f"{vp}.subnets[{si}].cidr", "subnet-outside-vnet", f"subnet {sn.name} {sn.cidr} is not inside vnet {vnet.name} {vnet.cidr}"))
                for sj in range(si):
                    other = vnet.subnets[sj]
                    if sn.cidr.overlaps(other.cidr):
                        out.append(Violation(f"{vp}.subnets[{si}].cidr", "subnet-overlap", f"subnet {sn.name} {sn.cidr} overlaps {other.name} {other.cidr}"))

    dup_check([c.name for c in t.clusters], lambda n: "topology.clusters", "cluster")
    for pi, (a, b) in enumerate(t.peerings):
        for side in (a, b):
            if side not in t.vnets:
                out.append(Violation(f"topology.peerings[{pi}]", "dangling-reference", f"peering names unknown vnet {side!r}"))

    root_clusters = [c.name for c in t.clusters if any(ns.name == t.mesh_root_namespace for ns in c.namespaces)]
    if len(root_clusters) > 1:
        out.append(Violation("topology.mesh_root_namespace", "mesh-root-ambiguous", f"mesh root namespace {t.mesh_root_namespace!r} exists in clusters {', '.join(root_clusters)}"))

    seen_addr: dict[IPv4Address, str] = {}
    for ki, cluster in enumerate(t.clusters):
        kp = f"topology.clusters[{ki}]"
        if cluster.vnet not in t.vnets:
            out.append(Violation(f"{kp}.vnet", "dangling-reference", f"cluster {cluster.name} references unknown vnet {cluster.vnet!r}"))
        dup_check([ns.name for ns in cluster.namespaces], lambda n: kp, "namespace")
        for ni, ns in enumerate(cluster.namespaces):
            np_ = f"{kp}.namespaces[{ni}]"
            dup_check([w.name for w in ns.workloads], lambda n: np_, "workload")
            dup_check([s.name for s in ns.services], lambda n: np_, "service")
            for wi, w in enumerate(ns.workloads):
                wp = f"{np_}.workloads[{wi}]"
                sn = t.subnets.get(w.subnet)
                if sn is None:
                    out.append(Violation(f"{wp}.subnet", "dangling-reference", f"workload {w.name} references unknown subnet {w.subnet!r}"))
                else:
                    if w.address not in sn.cidr:
                        out.append(Violation(f"{wp}.address", "address-outside-subnet", f"workload {w.name} address {w.address} is outside subnet {w.subnet} {sn.cidr}"))
                    if w.kind is WorkloadKind.CONTAINER and cluster.vnet in t.vnets and w.vnet != cluster.vnet:
                        out.append(Violation(f"{wp}.subnet", "container-outside-cluster-vnet", f"container workload {w.name} sits in {w.vnet}, not its cluster vnet {cluster.vnet}"))
                if w.address in seen_addr:
                    out.append(Violation(f"{wp}.address", "duplicate-address", f"workload {w.name} reuses address {w.address} of {seen_addr[w.address]}"))
                else:
                    seen_addr[w.address] = w.key
                for port in w.ports:
                    if not 1 <= port <= 65535:
                        out.append(Violation(f"{wp}.ports", "invalid-port", f"workload {w.name} declares port {port}"))
            for si, svc in enumerate(ns.services):
                sp = f"{np_}.services[{si}]"
                backends = t.backends(svc)
                if not backends:
                    out.append(Violation(f"{sp}.selector", "orphan-service", f"service {svc.name} selector {svc.selector} matches no workload in {ns.name}"))
                for sport, target in svc.port_map.items():
                    if not (1 <= sport <= 65535 and 1 <= target <= 65535):
                        out.append(Violation(f"{sp}.port_map", "invalid-port", f"service {svc.name} maps {sport}->{target}"))
                        continue
                    for w in backends:
                        if target not in w.ports:
                            out.append(Violation(f"{sp}.port_map", "service-port-not-exposed", f"service {svc.name} targets port {target} not exposed by workload {w.name}"))

    dup_check([g.name for g in t.gateways], lambda n: "topology.gateways", "gateway")
    for gi, g in enumerate(t.gateways):
        gp = f"topology.gateways[{gi}]"
        if g.cluster is not None and g.cluster not in t.cluster_by_name:
            out.append(Violation(f"{gp}.attachment", "dangling-reference", f"gateway {g.name} attached to unknown cluster {g.cluster!r}"))
        if g.vnet is not None and g.vnet not in t.vnets:
            out.append(Violation(f"{gp}.attachment", "dangling-reference", f"gateway {g.name} attached to unknown vnet {g.vnet!r}"))
        for ei, exp in enumerate(g.exposes):
            try:
                svc = t.find_service(exp.service, cluster=g.cluster)
            except ResolutionError as exc:
                out.append(Violation(f"{gp}.exposes[{ei}].service", "dangling-reference", f"gateway {g.name}: {exc}"))
                continue
            if exp.port not in svc.port_map:
                out.append(Violation(f"{gp}.exposes[{ei}].port", "dangling-reference", f"gateway {g.name} exposes {exp.service}:{exp.port} but the service does not map that port"))
            if exp.host is not None and not valid_host_pattern(exp.host):
                out.append(Violation(f"{gp}.exposes[{ei}].host", "invalid-host-pattern", f"host pattern {exp.host!r}"))
        for di, pattern in enumerate(g.allowed_destinations):
            if not valid_host_pattern(pattern):
                out.append(Violation(f"{gp}.allowed_destinations[{di}]", "invalid-host-pattern", f"host pattern {pattern!r}"))
    for ri, rule in enumerate(t.perimeter.sdp_rules):
        if rule.host is not None and not valid_host_pattern(rule.host):
            out.append(Violation(f"perimeter.sdp_rules[{ri}].match.host", "invalid-host-pattern", f"host pattern {rule.host!r}"))
    return out


def group_by_namespace(workloads) -> dict[tuple[str, str], list[Workload]]:
    groups: dict[tuple[str, str], list[Workload]] = defaultdict(list)
    for w in workloads:
        groups[(w.cluster, w.namespace)].append(w)
    return groups
