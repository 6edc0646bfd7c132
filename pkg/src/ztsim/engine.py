"""Connection evaluation pipeline, reachability matrix and decision narratives.

A request walks the stages in a fixed order and stops at the first failure::

    routing -> egress-l3l4 -> perimeter (when crossed) -> ingress-l3l4
            -> handshake -> authz -> final

Every stage appends a :class:`TraceEvent`; a denied decision ends with the
event of the stage that failed.
"""

from __future__ import annotations

import ipaddress
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Iterable, Mapping

from .errors import ResolutionError
from .identity import Certificate, CertificateAuthority, Channel, Identity, PeerAuthMode, handshake
from .meshpol import (
    AuthorizationPolicy,
    PeerAuthPolicy,
    PeerAuthResolution,
    RequestContext,
    decide,
    policies_in_scope,
    resolve_peer_auth,
)
from .netpol import Direction, Endpoint, Flow, L34Result, L34Verdict, NetworkPolicyL34, first_match, select_policies
from .perimeter import (
    EdgeRequest,
    Gateway,
    Hop,
    SdpDirection,
    evaluate_gateway,
    evaluate_perimeter,
    gateways_for_host,
    outbound_route,
    route,
)
from .topology import PortProtocol, Topology, Workload

DEFAULT_NOW = datetime(2024, 1, 1, tzinfo=timezone.utc)


class Verdict(str, Enum):
    ALLOWED = "ALLOWED"
    DENIED_L3L4 = "DENIED_L3L4"
    DENIED_PERIMETER = "DENIED_PERIMETER"
    DENIED_AUTHN = "DENIED_AUTHN"
    DENIED_AUTHZ = "DENIED_AUTHZ"
    UNREACHABLE = "UNREACHABLE"

    @property
    def status(self) -> str:
        if self is Verdict.ALLOWED:
            return "200"
        if self is Verdict.DENIED_AUTHZ:
            return "403"
        return "000"


class Origin(str, Enum):
    INTERNAL = "internal"
    INTERNET = "internet"


class Stage(str, Enum):
    ROUTING = "routing"
    EGRESS_L3L4 = "egress-l3l4"
    PERIMETER = "perimeter"
    INGRESS_L3L4 = "ingress-l3l4"
    HANDSHAKE = "handshake"
    AUTHZ = "authz"
    FINAL = "final"


STAGE_ORDER = tuple(Stage)
NO_CHANNEL = "none"


@dataclass(frozen=True)
class PolicySet:
    l3l4: tuple[NetworkPolicyL34, ...] = ()
    peer_auth: tuple[PeerAuthPolicy, ...] = ()
    authz: tuple[AuthorizationPolicy, ...] = ()


@dataclass(frozen=True)
class ConnectionRequest:
    """One attempted flow.

    Internal requests name a ``source`` workload and one destination: a
    ``destination`` service, a literal ``address``, or an external ``host``
    (optionally with ``address``). Internet-origin requests have no source
    and name the public ``host`` a gateway exposes.
    """

    source: str | None = None
    destination: str | None = None
    port: int = 80
    protocol: PortProtocol = PortProtocol.HTTP
    method: str | None = None
    path: str | None = None
    origin: Origin = Origin.INTERNAL
    address: str | None = None
    host: str | None = None
    source_address: str | None = None
    name: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "protocol", PortProtocol(self.protocol))
        object.__setattr__(self, "origin", Origin(self.origin))
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port {self.port} out of range")
        if self.protocol is PortProtocol.HTTP and (self.method is None or self.path is None):
            raise ValueError("HTTP requests carry a method and a path")
        if self.origin is Origin.INTERNET:
            if self.source is not None:
                raise ValueError("internet-origin requests have no source workload")
            if self.host is None or self.destination is not None or self.address is not None:
                raise ValueError("internet-origin requests name the public host only")
        else:
            if self.source is None:
                raise ValueError("internal requests need a source workload")
            if self.destination is not None and (self.address is not None or self.host is not None):
                raise ValueError("give a destination service or an address/host, not both")
            if self.destination is None and self.address is None and self.host is None:
                raise ValueError("request has no destination")
        for addr in (self.address, self.source_address):
            if addr is not None:
                ipaddress.IPv4Address(addr)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"port": self.port, "protocol": self.protocol.value, "origin": self.origin.value}
        for key, attr in (("name", "name"), ("from", "source"), ("to", "destination"), ("address", "address"),
                          ("host", "host"), ("source_address", "source_address"), ("method", "method"), ("path", "path")):
            value = getattr(self, attr)
            if value is not None:
                out[key] = value
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ConnectionRequest":
        protocol = d.get("protocol", "HTTP")
        http = protocol == "HTTP"
        return cls(
            source=d.get("from"),
            destination=d.get("to"),
            port=d["port"],
            protocol=protocol,
            method=d.get("method", "GET" if http else None),
            path=d.get("path", "/" if http else None),
            origin=d.get("origin", "internal"),
            address=d.get("address"),
            host=d.get("host"),
            source_address=d.get("source_address"),
            name=d.get("name"),
        )


@dataclass(frozen=True)
class TraceEvent:
    stage: Stage
    subject: str
    outcome: str  # pass | fail | skip
    detail: str

    def to_dict(self) -> dict[str, str]:
        return {"stage": self.stage.value, "subject": self.subject, "outcome": self.outcome, "detail": self.detail}


@dataclass(frozen=True)
class Decision:
    verdict: Verdict
    channel: str = NO_CHANNEL  # MTLS | PLAINTEXT | none
    trace: tuple[TraceEvent, ...] = ()
    destination: str | None = None
    request: ConnectionRequest | None = None

    @property
    def status(self) -> str:
        return self.verdict.status

    @property
    def allowed(self) -> bool:
        return self.verdict is Verdict.ALLOWED

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "status": self.status,
            "channel": self.channel,
            "destination": self.destination,
            "request": self.request.to_dict() if self.request is not None else None,
            "trace": [e.to_dict() for e in self.trace],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Decision":
        verdict = Verdict(d["verdict"])
        if "status" in d and d["status"] != verdict.status:
            raise ValueError(f"status {d['status']} contradicts verdict {verdict.value}")
        return cls(
            verdict=verdict,
            channel=d.get("channel", NO_CHANNEL),
            trace=tuple(TraceEvent(Stage(e["stage"]), e["subject"], e["outcome"], e["detail"]) for e in d.get("trace", ())),
            destination=d.get("destination"),
            request=ConnectionRequest.from_dict(d["request"]) if d.get("request") else None,
        )


def explain(d: Decision) -> str:
    """One line per trace event, ``<stage>: <detail>``."""
    return "\n".join(f"{e.stage.value}: {e.detail}" for e in d.trace)


# -- pipeline ----------------------------------------------------------------

@dataclass
class _Client:
    """The party the destination actually talks to: the source workload, or the
    ingress gateway that proxied the flow."""

    label: str
    endpoint: Endpoint
    workload: Workload | None
    certificate: Certificate | None


class _Denied(Exception):
    def __init__(self, verdict: Verdict, event: TraceEvent, destination: str | None, channel: str = NO_CHANNEL):
        self.verdict = verdict
        self.event = event
        self.destination = destination
        self.channel = channel


def _ep(w: Workload, ns_labels: Mapping[str, str]) -> Endpoint:
    return Endpoint(w.key, w.namespace, w.labels, ns_labels, w.address)


def _l34_detail(res: L34Result, direction: Direction, what: str) -> str:
    if res.verdict is L34Verdict.NO_POLICY:
        return f"no policy selects {what}; allowed"
    if res.policy is None:
        return f"selected by {', '.join(res.selected)}; no rule matched; default deny → 000"
    verb = "allows" if res.verdict is L34Verdict.ALLOW else "denies"
    tail = "" if res.verdict is L34Verdict.ALLOW else " → 000"
    return f"policy {res.policy} rule {res.rule} {verb} {direction.value} for {what}{tail}"


class Evaluator:
    """Evaluates requests against one (topology, policies, instant).

    Everything that depends only on those three is computed up front, so
    :meth:`evaluate` reads shared state only and may run on many threads.
    """

    def __init__(self, t: Topology, p: PolicySet, now: datetime = DEFAULT_NOW):
        self.t = t
        self.p = p
        self.now = now
        self.mesh_root = t.mesh_root_namespace
        # warm the topology's lazy indexes before any concurrent use
        _ = (t.workloads, t.services, t.namespaces, t.vnets, t.subnets, t.cluster_by_name,
             t.gateway_by_name, t.paths, t._workload_by_key, t._service_by_key,
             t._workload_by_address, t._namespace_by_key, t._peer_pairs)

        self._endpoint: dict[str, Endpoint] = {}
        self._egress: dict[str, list[NetworkPolicyL34]] = {}
        self._ingress: dict[str, list[NetworkPolicyL34]] = {}
        self._authz: dict[str, list[AuthorizationPolicy]] = {}
        self._peer_auth: dict[tuple[str, int | None], PeerAuthResolution] = {}
        for w in t.workloads:
            ep = _ep(w, t.namespace_of(w).selector_labels)
            self._endpoint[w.key] = ep
            self._egress[w.key] = select_policies(p.l3l4, ep, Direction.EGRESS)
            self._ingress[w.key] = select_policies(p.l3l4, ep, Direction.INGRESS)
            self._authz[w.key] = policies_in_scope(p.authz, w, self.mesh_root)
            for port in (None, *w.ports):
                self._peer_auth[(w.key, port)] = resolve_peer_auth(p.peer_auth, w, port, self.mesh_root)

        self.certificates: dict[str, Certificate] = {}
        authorities: dict[str, CertificateAuthority] = {}

        def authority(domain: str) -> CertificateAuthority:
            if domain not in authorities:
                authorities[domain] = CertificateAuthority(domain, t.cert_ttl)
            return authorities[domain]

        for w in t.workloads:
            if not w.sidecar:
                continue
            domain = (w.cert.trust_domain if w.cert else None) or t.trust_domain
            issued = (w.cert.issued_at if w.cert else None) or now
            self.certificates[w.key] = authority(domain).issue_identity(w, issued)

        root_labels = {"kubernetes.io/metadata.name": self.mesh_root}
        for ns in t.namespaces:
            if ns.name == self.mesh_root:
                root_labels = ns.selector_labels
        self._gateway_client: dict[str, _Client] = {}
        for g in sorted(t.gateways, key=lambda g: g.name):
            cert = authority(t.trust_domain).issue(Identity(t.trust_domain, self.mesh_root, g.name), now)
            self.certificates[f"gateway:{g.name}"] = cert
            ep = Endpoint(f"gateway:{g.name}", self.mesh_root, {"gateway": g.name}, root_labels, None)
            self._gateway_client[g.name] = _Client(f"gateway {g.name}", ep, None, cert)

    # -- public --

    def evaluate(self, req: ConnectionRequest) -> Decision:
        if req.origin is Origin.INTERNET:
            return self._from_internet(req)
        src = self.t.find_workload(req.source)
        if req.destination is not None:
            svc = self.t.find_service(req.destination, cluster=src.cluster)
            if req.port not in svc.port_map:
                raise ResolutionError("port-not-exposed", f"service {svc.namespace}/{svc.name} does not map port {req.port}")
            backends = self.t.backends(svc)
            if not backends:
                raise ResolutionError("no-backends", f"service {svc.key} selects no workload")
            target = svc.port_map[req.port]
            return _worst([self._run(req, lambda tr, b=b: self._internal(tr, req, src, b, target)) for b in backends])
        dst = self.t.workload_by_address(req.address) if req.address is not None else None
        if dst is not None:
            return self._run(req, lambda tr: self._internal(tr, req, src, dst, req.port))
        return self._run(req, lambda tr: self._outbound(tr, req, src))

    def peer_auth(self, w: Workload, port: int | None) -> PeerAuthResolution:
        res = self._peer_auth.get((w.key, port))
        if res is None:
            res = resolve_peer_auth(self.p.peer_auth, w, port, self.mesh_root)
        return res

    # -- stages --

    def _run(self, req: ConnectionRequest, body) -> Decision:
        trace: list[TraceEvent] = []
        try:
            dest, channel = body(trace)
        except _Denied as d:
            trace.append(d.event)
            return Decision(d.verdict, d.channel, tuple(trace), d.destination, req)
        trace.append(TraceEvent(Stage.FINAL, "decision", "pass", "allowed (200)"))
        return Decision(Verdict.ALLOWED, channel, tuple(trace), dest, req)

    def _deny(self, verdict: Verdict, stage: Stage, subject: str, detail: str, dest: str | None, channel: str = NO_CHANNEL):
        raise _Denied(verdict, TraceEvent(stage, subject, "fail", detail), dest, channel)

    def _internal(self, trace: list[TraceEvent], req: ConnectionRequest, src: Workload, dst: Workload, port: int):
        t = self.t
        segments = route(t, src, dst, port) if port in dst.ports else None
        if segments is None:
            why = (f"{dst.key} does not expose port {port}" if port not in dst.ports
                   else f"no vnet, peering or gateway path from {src.vnet} to {dst.vnet}")
            self._deny(Verdict.UNREACHABLE, Stage.ROUTING, "route", f"{src.key} → {dst.key}: {why} → 000", dst.key)
        path_text = ", ".join(str(s) for s in segments)
        trace.append(TraceEvent(Stage.ROUTING, path_text, "pass", f"{src.key} → {dst.key}:{port} via {path_text}"))

        src_ep, dst_ep = self._endpoint[src.key], self._endpoint[dst.key]
        res = first_match(self._egress[src.key], Flow(src_ep, dst_ep, port), Direction.EGRESS)
        detail = _l34_detail(res, Direction.EGRESS, f"{src.key} → {dst.key}:{port}")
        if res.verdict is L34Verdict.DENY:
            self._deny(Verdict.DENIED_L3L4, Stage.EGRESS_L3L4, res.subject, detail, dst.key)
        trace.append(TraceEvent(Stage.EGRESS_L3L4, res.subject, "pass", detail))

        client = _Client(src.key, src_ep, src, self.certificates.get(src.key))
        gateways = [s for s in segments if s.hop is Hop.GATEWAY]
        if gateways:
            egress_seg, ingress_seg = gateways
            http_path = req.path if req.protocol is PortProtocol.HTTP else None
            host = ingress_seg.host
            eg = t.gateway_by_name[egress_seg.gateway]
            fwd = evaluate_gateway(eg, EdgeRequest(SdpDirection.OUTBOUND, host, None, port, http_path or "/"))
            if not fwd.forwarded:
                self._deny(Verdict.DENIED_PERIMETER, Stage.PERIMETER, eg.name,
                           f"egress gateway {eg.name} does not allow destination {host or '(no host)'} → 000", dst.key)
            trace.append(TraceEvent(Stage.PERIMETER, eg.name, "pass",
                                    f"egress gateway {eg.name} allows {host} ({eg.allowed_destinations[fwd.matched]})"))
            ig = t.gateway_by_name[ingress_seg.gateway]
            self._through_ingress_gateway(trace, ig, EdgeRequest(SdpDirection.INBOUND, host, src.address, port,
                                                                 http_path or ingress_seg.path or "/"), dst, port)
            client = self._gateway_client[ig.name]
        return self._deliver(trace, req, client, dst, port)

    def _through_ingress_gateway(self, trace, g: Gateway, edge: EdgeRequest, dst: Workload | None, port: int | None):
        fwd = evaluate_gateway(g, edge)
        dest = dst.key if dst is not None else None
        if not fwd.forwarded:
            self._deny(Verdict.DENIED_PERIMETER, Stage.PERIMETER, g.name,
                       f"{g.kind.value} gateway {g.name} has no route for {edge.host or '*'}{edge.path} → 000", dest)
        svc = self.t.find_service(fwd.service, cluster=g.cluster)
        target = svc.port_map.get(fwd.port)
        if dst is not None and (target != port or dst not in self.t.backends(svc)):
            self._deny(Verdict.DENIED_PERIMETER, Stage.PERIMETER, g.name,
                       f"{g.kind.value} gateway {g.name} routes {edge.host or '*'}{edge.path} to {svc.key}:{fwd.port}, not {dst.key}:{port} → 000", dest)
        note = "; payload encryption applied" if g.encrypts else ""
        trace.append(TraceEvent(Stage.PERIMETER, g.name, "pass",
                                f"{g.kind.value} gateway {g.name} forwards {edge.host or '*'}{edge.path} to {svc.key}:{fwd.port}{note}"))
        return svc, target

    def _sdp(self, trace, edge: EdgeRequest, dest: str | None):
        res = evaluate_perimeter(self.t.perimeter, edge)
        what = f"{edge.direction.value} {edge.host or edge.address or '?'}:{edge.port}"
        subject = f"sdp/{res.subject}"
        if not res.allowed:
            why = "default deny" if res.rule is None else f"rule {res.rule} denies"
            self._deny(Verdict.DENIED_PERIMETER, Stage.PERIMETER, subject, f"sdp {what}: {why} → 000", dest)
        trace.append(TraceEvent(Stage.PERIMETER, subject, "pass", f"sdp {what}: rule {res.rule} allows"))

    def _from_internet(self, req: ConnectionRequest) -> Decision:
        gws = gateways_for_host(self.t, req.host)
        if not gws:
            return self._run(req, lambda tr: self._deny(
                Verdict.UNREACHABLE, Stage.ROUTING, "route", f"internet → {req.host}: no gateway exposes this host → 000", None))
        g = gws[0]
        path = req.path if req.protocol is PortProtocol.HTTP else "/"
        src_addr = ipaddress.IPv4Address(req.source_address) if req.source_address else None
        edge = EdgeRequest(SdpDirection.INBOUND, req.host, src_addr, req.port, path)

        # resolve the target service once; the perimeter stage re-derives it in order
        fwd = evaluate_gateway(g, edge)
        if not fwd.forwarded:
            return self._run(req, lambda tr: self._internet_prefix(tr, req, g, edge, None, None))
        svc = self.t.find_service(fwd.service, cluster=g.cluster)
        target = svc.port_map[fwd.port]
        if not self.t.backends(svc):
            raise ResolutionError("no-backends", f"service {svc.key} selects no workload")
        return _worst([self._run(req, lambda tr, b=b: self._internet_prefix(tr, req, g, edge, b, target))
                       for b in self.t.backends(svc)])

    def _internet_prefix(self, trace, req, g: Gateway, edge: EdgeRequest, dst: Workload | None, port: int | None):
        dest = dst.key if dst is not None else None
        trace.append(TraceEvent(Stage.ROUTING, f"sdp, gateway({g.name})", "pass",
                                f"internet → {req.host}:{req.port} via sdp, gateway({g.name})"))
        trace.append(TraceEvent(Stage.EGRESS_L3L4, "default", "skip", "internet origin; no source workload"))
        self._sdp(trace, edge, dest)
        self._through_ingress_gateway(trace, g, edge, dst, port)
        return self._deliver(trace, req, self._gateway_client[g.name], dst, port)

    def _outbound(self, trace, req: ConnectionRequest, src: Workload):
        addr = ipaddress.IPv4Address(req.address) if req.address else None
        target = req.host or str(addr)
        dest = f"external:{target}"
        segments = outbound_route(self.t, src)
        path_text = ", ".join(str(s) for s in segments)
        trace.append(TraceEvent(Stage.ROUTING, path_text, "pass", f"{src.key} → {target}:{req.port} via {path_text}, internet"))

        remote = Endpoint(dest, None, {}, {}, addr)
        res = first_match(self._egress[src.key], Flow(self._endpoint[src.key], remote, req.port), Direction.EGRESS)
        detail = _l34_detail(res, Direction.EGRESS, f"{src.key} → {target}:{req.port}")
        if res.verdict is L34Verdict.DENY:
            self._deny(Verdict.DENIED_L3L4, Stage.EGRESS_L3L4, res.subject, detail, dest)
        trace.append(TraceEvent(Stage.EGRESS_L3L4, res.subject, "pass", detail))

        path = req.path if req.protocol is PortProtocol.HTTP else "/"
        edge = EdgeRequest(SdpDirection.OUTBOUND, req.host, addr, req.port, path)
        for seg in segments:
            if seg.hop is Hop.GATEWAY:
                eg = self.t.gateway_by_name[seg.gateway]
                fwd = evaluate_gateway(eg, edge)
                if not fwd.forwarded:
                    self._deny(Verdict.DENIED_PERIMETER, Stage.PERIMETER, eg.name,
                               f"egress gateway {eg.name} does not allow destination {target} → 000", dest)
                trace.append(TraceEvent(Stage.PERIMETER, eg.name, "pass",
                                        f"egress gateway {eg.name} allows {target} ({eg.allowed_destinations[fwd.matched]})"))
            else:
                self._sdp(trace, edge, dest)
        trace.append(TraceEvent(Stage.INGRESS_L3L4, "default", "skip", "external destination"))
        trace.append(TraceEvent(Stage.HANDSHAKE, "default", "skip", "external destination; no mesh peer"))
        trace.append(TraceEvent(Stage.AUTHZ, "default", "skip", "external destination"))
        return dest, NO_CHANNEL

    def _deliver(self, trace, req: ConnectionRequest, client: _Client, dst: Workload, port: int):
        dest = dst.key
        dst_ep = self._endpoint[dst.key]
        res = first_match(self._ingress[dst.key], Flow(client.endpoint, dst_ep, port), Direction.INGRESS)
        detail = _l34_detail(res, Direction.INGRESS, f"{client.label} → {dst.key}:{port}")
        if res.verdict is L34Verdict.DENY:
            self._deny(Verdict.DENIED_L3L4, Stage.INGRESS_L3L4, res.subject, detail, dest)
        trace.append(TraceEvent(Stage.INGRESS_L3L4, res.subject, "pass", detail))

        if dst.sidecar:
            pa = self.peer_auth(dst, port)
            mode, mode_note = pa.mode, f"mode {pa.mode.value} from {pa.subject}"
        else:
            pa = None
            mode, mode_note = PeerAuthMode.DISABLE, "destination has no sidecar; peer authentication not enforced"
        outcome = handshake(client.workload, client.certificate, dst, mode, self.now, self.t.trust_domain)
        subject = pa.subject if pa is not None else "default"
        if outcome.channel is Channel.REJECTED:
            self._deny(Verdict.DENIED_AUTHN, Stage.HANDSHAKE, subject,
                       f"rejected: {outcome.reason.value} ({mode_note}) → 000", dest)
        if outcome.channel is Channel.MTLS:
            detail = f"mTLS with peer {outcome.peer_identity} ({mode_note})"
        else:
            detail = f"plaintext ({mode_note})"
        trace.append(TraceEvent(Stage.HANDSHAKE, subject, "pass", detail))
        channel = outcome.channel.value

        if not dst.sidecar:
            trace.append(TraceEvent(Stage.AUTHZ, "default", "skip", "destination has no sidecar; L7 authorization not enforced"))
            return dest, channel
        peer = outcome.peer_identity
        l7 = req.protocol is PortProtocol.HTTP and dst.ports.get(port) is PortProtocol.HTTP
        ctx = RequestContext(
            destination=dst,
            port=port,
            peer_identity=peer,
            source_namespace=peer.namespace if peer is not None else None,
            method=req.method if l7 else None,
            path=req.path if l7 else None,
        )
        az = decide(self._authz[dst.key], ctx)
        az_subject = az.policy if az.rule is None else f"{az.policy}#{az.rule}"
        if not az.allowed:
            self._deny(Verdict.DENIED_AUTHZ, Stage.AUTHZ, az_subject, az.detail, dest, channel)
        trace.append(TraceEvent(Stage.AUTHZ, az_subject, "pass", az.detail))
        return dest, channel


def _worst(decisions: list[Decision]) -> Decision:
    """Replicas of one service: the first denied backend (by name) speaks for the service."""
    for d in decisions:
        if not d.allowed:
            return d
    return decisions[0]


def evaluate_connection(t: Topology, p: PolicySet, req: ConnectionRequest, now: datetime = DEFAULT_NOW) -> Decision:
    return Evaluator(t, p, now).evaluate(req)


# -- matrix -------------------------------------------------------------------

_CHANNEL_LABEL = {"MTLS": "mTLS", "PLAINTEXT": "plain", NO_CHANNEL: "-"}


@dataclass(frozen=True)
class CellSummary:
    verdict: Verdict
    channel: str

    @property
    def status(self) -> str:
        return self.verdict.status

    @property
    def label(self) -> str:
        return f"{self.status}/{_CHANNEL_LABEL[self.channel]}"

    def to_dict(self) -> dict[str, str]:
        return {"verdict": self.verdict.value, "status": self.status, "channel": self.channel}


@dataclass(frozen=True)
class ReachabilityMatrix:
    port: int
    protocol: str
    rows: tuple[str, ...]
    cols: tuple[str, ...]
    cells: tuple[tuple[CellSummary, ...], ...] = field(repr=False)

    def cell(self, source: str, service: str) -> CellSummary:
        return self.cells[self.rows.index(source)][self.cols.index(service)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "port": self.port,
            "protocol": self.protocol,
            "rows": list(self.rows),
            "cols": list(self.cols),
            "cells": [[c.to_dict() for c in row] for row in self.cells],
        }


def matrix_columns(t: Topology, port: int) -> list[str]:
    return [s.key for s in t.services if port in s.port_map]


def connection_matrix(
    t: Topology,
    p: PolicySet,
    port: int,
    protocol: str = "HTTP",
    *,
    method: str = "GET",
    path: str = "/",
    now: datetime = DEFAULT_NOW,
    workers: int | None = None,
) -> ReachabilityMatrix:
    """Every workload against every service that maps ``port``.

    With ``workers`` > 1 cells are evaluated on a thread pool; the result does
    not depend on it.
    """
    cols = matrix_columns(t, port)
    if not cols:
        raise ResolutionError("port-not-exposed", f"no service exposes port {port}")
    rows = [w.key for w in t.workloads]
    protocol = PortProtocol(protocol)
    http = protocol is PortProtocol.HTTP
    ev = Evaluator(t, p, now)
    requests = [
        ConnectionRequest(source=r, destination=c, port=port, protocol=protocol,
                          method=method if http else None, path=path if http else None)
        for r in rows for c in cols
    ]

    def one(req: ConnectionRequest) -> CellSummary:
        d = ev.evaluate(req)
        return CellSummary(d.verdict, d.channel)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            flat = list(pool.map(one, requests))
    else:
        flat = [one(r) for r in requests]
    n = len(cols)
    cells = tuple(tuple(flat[i * n:(i + 1) * n]) for i in range(len(rows)))
    return ReachabilityMatrix(port, protocol.value, tuple(rows), tuple(cols), cells)


def iter_cells(m: ReachabilityMatrix) -> Iterable[tuple[str, str, CellSummary]]:
    for r, row in zip(m.rows, m.cells):
        for c, cell in zip(m.cols, row):
            yield r, c, cell
