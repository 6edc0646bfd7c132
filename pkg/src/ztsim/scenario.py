"""Scenario documents: reading, schema validation, loading and dumping.

A scenario is one mapping with the keys ``topology``, ``policies``,
``perimeter`` and ``requests``. It may be split across several YAML/JSON
files; they are deep-merged in the order given (directories contribute their
``*.yaml``, ``*.yml`` and ``*.json`` files in name order).
"""

from __future__ import annotations

import copy
import ipaddress
import json
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

import jsonschema
import yaml

from .engine import ConnectionRequest, PolicySet
from .errors import ResolutionError, ScenarioError, Violation, ZtsimError
from .identity import PeerAuthMode
from .match import PortRange, Selector, SelectorSyntaxError, parse_ports
from .meshpol import AuthorizationPolicy, AuthzAction, AuthzRule, PeerAuthPolicy
from .netpol import L34Action, L34Rule, NetworkPolicyL34, Peer
from .perimeter import Exposure, Gateway, GatewayKind, PerimeterConfig, SdpAction, SdpDirection, SdpRule
from .topology import (
    CertificateOverride,
    Cloud,
    Cluster,
    Namespace,
    PortProtocol,
    RiskTier,
    ServiceEndpoint,
    Subnet,
    Topology,
    VirtualNetwork,
    Workload,
    WorkloadKind,
    validate_topology,
)

SCENARIO_SUFFIXES = (".yaml", ".yml", ".json")


@dataclass(frozen=True)
class Scenario:
    topology: Topology
    policies: PolicySet = field(default_factory=PolicySet)
    requests: tuple[ConnectionRequest, ...] = ()

    def request(self, name: str) -> ConnectionRequest:
        for r in self.requests:
            if r.name == name:
                return r
        raise ResolutionError("unknown-request", f"no request named {name!r}")


# -- reading -------------------------------------------------------------------

def deep_merge(base: Any, overlay: Any) -> Any:
    """Mappings merge by key, lists concatenate, anything else is replaced."""
    if isinstance(base, dict) and isinstance(overlay, dict):
        out = dict(base)
        for k, v in overlay.items():
            out[k] = deep_merge(out[k], v) if k in out else copy.deepcopy(v)
        return out
    if isinstance(base, list) and isinstance(overlay, list):
        return base + copy.deepcopy(overlay)
    return copy.deepcopy(overlay)


def scenario_files(paths: Iterable[str | Path]) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(f for f in p.iterdir() if f.is_file() and f.suffix in SCENARIO_SUFFIXES))
        elif p.is_file():
            files.append(p)
        else:
            raise ZtsimError(f"cannot read {p}: no such file or directory")
    return files


def read_document(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ZtsimError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ZtsimError(f"cannot parse {path}: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ZtsimError(f"{path}: a scenario document must be a mapping")
    return doc


def read_scenario_paths(paths: Iterable[str | Path]) -> dict:
    files = scenario_files(paths)
    if not files:
        raise ZtsimError("no scenario files given")
    doc: dict = {}
    for f in files:
        doc = deep_merge(doc, read_document(f))
    return doc


# -- schema --------------------------------------------------------------------

@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files("ztsim").joinpath("schemas", f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _relax(node: Any) -> Any:
    if isinstance(node, dict):
        return {k: _relax(v) for k, v in node.items() if not (k == "additionalProperties" and v is False)}
    if isinstance(node, list):
        return [_relax(v) for v in node]
    return node


@lru_cache(maxsize=None)
def _validator(lax: bool) -> jsonschema.Draft202012Validator:
    schema = load_schema("scenario")
    return jsonschema.Draft202012Validator(_relax(schema) if lax else schema)


def doc_path(parts: Iterable[Any]) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "$"


def schema_violations(doc: Any, lax: bool = False) -> list[Violation]:
    errors = _validator(lax).iter_errors(doc)
    return sorted(Violation(doc_path(e.absolute_path), "schema", e.message) for e in errors)


# -- building ------------------------------------------------------------------

class _Builder:
    """Turns a schema-valid document into objects, collecting violations."""

    def __init__(self) -> None:
        self.violations: list[Violation] = []

    def bad(self, path: str, rule: str, message: str) -> None:
        self.violations.append(Violation(path, rule, message))

    def selector(self, source, path: str) -> Selector | None:
        if source is None:
            return None
        try:
            return Selector(source)
        except SelectorSyntaxError as exc:
            self.bad(path, "invalid-selector", str(exc))
            return None

    def network(self, text: str, path: str) -> ipaddress.IPv4Network | None:
        try:
            return ipaddress.IPv4Network(text)
        except ValueError as exc:
            self.bad(path, "invalid-cidr", str(exc))
            return None

    def address(self, text: str, path: str) -> ipaddress.IPv4Address | None:
        try:
            return ipaddress.IPv4Address(text)
        except ValueError as exc:
            self.bad(path, "invalid-address", str(exc))
            return None

    def ports(self, specs, path: str) -> tuple[PortRange, ...] | None:
        if specs is None:
            return None
        try:
            return parse_ports(specs)
        except ValueError as exc:
            self.bad(path, "invalid-port", str(exc))
            return None

    def timestamp(self, text: str, path: str) -> datetime | None:
        try:
            return parse_timestamp(text)
        except ValueError as exc:
            self.bad(path, "invalid-timestamp", str(exc))
            return None

    # -- topology --

    def clouds(self, docs, path: str) -> tuple[Cloud, ...]:
        clouds = []
        for ci, c in enumerate(docs):
            vnets = []
            for vi, v in enumerate(c.get("vnets", ())):
                vp = f"{path}[{ci}].vnets[{vi}]"
                subnets = []
                for si, s in enumerate(v.get("subnets", ())):
                    cidr = self.network(s["cidr"], f"{vp}.subnets[{si}].cidr")
                    if cidr is not None:
                        subnets.append(Subnet(s["name"], cidr))
                cidr = self.network(v["cidr"], f"{vp}.cidr")
                if cidr is not None:
                    vnets.append(VirtualNetwork(v["name"], cidr, tuple(subnets), v.get("business_function", "")))
            clouds.append(Cloud(c["name"], tuple(vnets)))
        return tuple(clouds)

    def subnet_ref(self, ref: str, cluster_vnet: str, known: set[str]) -> str:
        """Bare subnet names resolve inside the cluster's vnet, then anywhere if unique."""
        if ref.count("/") == 2:
            return ref
        if ref.count("/") == 1:
            cloud = cluster_vnet.split("/")[0]
            return f"{cloud}/{ref}"
        local = f"{cluster_vnet}/{ref}"
        if local in known:
            return local
        hits = [k for k in known if k.rsplit("/", 1)[1] == ref]
        return hits[0] if len(hits) == 1 else local

    def workload(self, d, cluster: Cluster | Mapping, ns_name: str, injection: bool, path: str, known: set[str]) -> Workload | None:
        address = self.address(d["address"], f"{path}.address")
        if address is None:
            return None
        ports = {}
        for k, proto in d.get("ports", {}).items():
            port = int(k)
            if not 1 <= port <= 65535:
                self.bad(f"{path}.ports", "invalid-port", f"port {port} outside 1..65535")
                continue
            ports[port] = PortProtocol(proto)
        cert = None
        if "cert" in d:
            c = d["cert"]
            issued = self.timestamp(c["issued_at"], f"{path}.cert.issued_at") if "issued_at" in c else None
            cert = CertificateOverride(c.get("trust_domain"), issued)
        return Workload(
            name=d["name"],
            cluster=cluster["name"],
            namespace=ns_name,
            subnet=self.subnet_ref(d["subnet"], cluster["vnet"], known),
            address=address,
            kind=WorkloadKind(d.get("kind", "container")),
            labels=dict(d.get("labels", {})),
            service_account=d.get("service_account", "default"),
            ports=dict(sorted(ports.items())),
            sidecar=d.get("sidecar", injection),
            cert=cert,
        )

    def service(self, d, cluster: str, ns: str, path: str) -> ServiceEndpoint | None:
        sel = self.selector(d["selector"], f"{path}.selector")
        if sel is None:
            return None
        port_map = {int(k): int(v) for k, v in sorted(d["port_map"].items(), key=lambda kv: int(kv[0]))}
        return ServiceEndpoint(d["name"], cluster, ns, sel, port_map)

    def clusters(self, docs, path: str, known_subnets: set[str]) -> tuple[Cluster, ...]:
        clusters = []
        for ki, c in enumerate(docs):
            kp = f"{path}[{ki}]"
            namespaces = []
            for ni, n in enumerate(c.get("namespaces", ())):
                np_ = f"{kp}.namespaces[{ni}]"
                injection = n.get("sidecar_injection_default", False)
                workloads = [self.workload(w, c, n["name"], injection, f"{np_}.workloads[{wi}]", known_subnets)
                             for wi, w in enumerate(n.get("workloads", ()))]
                services = [self.service(s, c["name"], n["name"], f"{np_}.services[{si}]")
                            for si, s in enumerate(n.get("services", ()))]
                namespaces.append(Namespace(
                    name=n["name"],
                    cluster=c["name"],
                    labels=dict(n.get("labels", {})),
                    sidecar_injection_default=injection,
                    workloads=tuple(w for w in workloads if w is not None),
                    services=tuple(s for s in services if s is not None),
                ))
            clusters.append(Cluster(c["name"], c["vnet"], RiskTier(c.get("risk_tier", "moderate")), tuple(namespaces)))
        return tuple(clusters)

    def gateways(self, docs, path: str) -> tuple[Gateway, ...]:
        out = []
        for gi, g in enumerate(docs):
            att = g["attachment"]
            exposes = tuple(Exposure(e["service"], e["port"], e.get("host"), e.get("path", "/")) for e in g.get("exposes", ()))
            out.append(Gateway(
                name=g["name"],
                kind=GatewayKind(g["kind"]),
                cluster=att.get("cluster"),
                vnet=att.get("vnet"),
                exposes=exposes,
                allowed_destinations=tuple(g.get("allowed_destinations", ())),
                encrypts=g.get("encrypts", False),
            ))
        return tuple(out)

    def perimeter(self, d, path: str) -> PerimeterConfig:
        rules = []
        for ri, r in enumerate(d.get("sdp_rules", ())):
            m = r.get("match", {})
            rp = f"{path}.sdp_rules[{ri}].match"
            cidr = self.network(m["cidr"], f"{rp}.cidr") if "cidr" in m else None
            rules.append(SdpRule(SdpAction(r["action"]), SdpDirection(r["direction"]), m.get("host"), cidr,
                                 self.ports(m.get("ports"), f"{rp}.ports")))
        return PerimeterConfig(tuple(rules))

    def topology(self, doc: Mapping) -> Topology:
        t = doc.get("topology", {})
        clouds = self.clouds(t.get("clouds", ()), "topology.clouds")
        known = {f"{c.name}/{v.name}/{s.name}" for c in clouds for v in c.vnets for s in v.subnets}
        return Topology(
            clouds=clouds,
            clusters=self.clusters(t.get("clusters", ()), "topology.clusters", known),
            gateways=self.gateways(t.get("gateways", ()), "topology.gateways"),
            perimeter=self.perimeter(doc.get("perimeter", {}), "perimeter"),
            mesh_root_namespace=t.get("mesh_root_namespace", "istio-system"),
            peerings=tuple((a, b) for a, b in t.get("peerings", ())),
            trust_domain=t.get("trust_domain", "cluster.local"),
            cert_ttl=timedelta(seconds=t.get("cert_ttl_seconds", 24 * 3600)),
        )

    # -- policies --

    def l34_rules(self, docs, path: str) -> tuple[L34Rule, ...] | None:
        if docs is None:
            return None
        rules = []
        for i, r in enumerate(docs):
            rp = f"{path}[{i}]"
            peer = None
            if "peer" in r:
                pd = r["peer"]
                peer = Peer(
                    cidr=self.network(pd["cidr"], f"{rp}.peer.cidr") if "cidr" in pd else None,
                    selector=self.selector(pd.get("selector"), f"{rp}.peer.selector"),
                    namespace_selector=self.selector(pd.get("namespace_selector"), f"{rp}.peer.namespace_selector"),
                )
            rules.append(L34Rule(L34Action(r["action"]), r.get("protocol"), self.ports(r.get("ports"), f"{rp}.ports"), peer))
        return tuple(rules)

    def policies(self, doc: Mapping) -> PolicySet:
        p = doc.get("policies", {})
        l3l4 = []
        for i, d in enumerate(p.get("l3l4", ())):
            pp = f"policies.l3l4[{i}]"
            scope = d["scope"]
            sel = self.selector(d.get("selector"), f"{pp}.selector") or Selector()
            try:
                l3l4.append(NetworkPolicyL34(
                    name=d["name"],
                    order=float(d["order"]),
                    namespace=None if scope == "global" else scope["namespaced"],
                    selector=sel,
                    ingress_rules=self.l34_rules(d.get("ingress_rules"), f"{pp}.ingress_rules"),
                    egress_rules=self.l34_rules(d.get("egress_rules"), f"{pp}.egress_rules"),
                ))
            except ValueError as exc:
                self.bad(f"{pp}.order", "invalid-order", str(exc))
        peer_auth = []
        for i, d in enumerate(p.get("peer_auth", ())):
            peer_auth.append(PeerAuthPolicy(
                name=d["name"],
                namespace=d["namespace"],
                mode=PeerAuthMode(d["mode"]),
                selector=self.selector(d.get("selector"), f"policies.peer_auth[{i}].selector"),
                port_overrides={int(k): PeerAuthMode(v) for k, v in sorted(d.get("port_overrides", {}).items(), key=lambda kv: int(kv[0]))},
            ))
        authz = []
        for i, d in enumerate(p.get("authz", ())):
            rules = tuple(
                AuthzRule(**{k: tuple(r[k]) if k in r else None
                             for k in ("from_principals", "from_namespaces", "to_ports", "to_methods", "to_paths")})
                for r in d.get("rules", ())
            )
            authz.append(AuthorizationPolicy(
                name=d["name"],
                namespace=d["namespace"],
                action=AuthzAction(d.get("action", "ALLOW")),
                selector=self.selector(d.get("selector"), f"policies.authz[{i}].selector"),
                rules=rules,
            ))
        return PolicySet(tuple(l3l4), tuple(peer_auth), tuple(authz))

    def requests(self, doc: Mapping) -> tuple[ConnectionRequest, ...]:
        out = []
        for i, d in enumerate(doc.get("requests", ())):
            try:
                out.append(ConnectionRequest.from_dict(d))
            except ValueError as exc:
                self.bad(f"requests[{i}]", "invalid-request", str(exc))
        return tuple(out)


def parse_timestamp(text: str) -> datetime:
    """ISO 8601 with an explicit offset (``Z`` accepted)."""
    value = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if value.tzinfo is None:
        raise ValueError(f"timestamp {text!r} needs a UTC offset")
    return value


# -- semantic checks -------------------------------------------------------------

def validate_policies(t: Topology, p: PolicySet) -> list[Violation]:
    out: list[Violation] = []
    known = t.namespace_names | {t.mesh_root_namespace}

    def names(kind: str, items, key):
        for k, n in Counter(key(x) for x in items).items():
            if n > 1:
                out.append(Violation(f"policies.{kind}", "duplicate-identifier", f"policy {k} declared {n} times"))

    names("l3l4", p.l3l4, lambda x: x.qualified_name)
    names("peer_auth", p.peer_auth, lambda x: x.qualified_name)
    names("authz", p.authz, lambda x: x.qualified_name)

    for i, pol in enumerate(p.l3l4):
        if pol.namespace is not None and pol.namespace not in known:
            out.append(Violation(f"policies.l3l4[{i}].scope", "unknown-namespace", f"policy {pol.name} names unknown namespace {pol.namespace!r}"))
    for kind, items in (("peer_auth", p.peer_auth), ("authz", p.authz)):
        for i, pol in enumerate(items):
            if pol.namespace not in known:
                out.append(Violation(f"policies.{kind}[{i}].namespace", "unknown-namespace", f"policy {pol.name} names unknown namespace {pol.namespace!r}"))

    seen: dict[str, str] = {}
    for i, pol in enumerate(p.peer_auth):
        if pol.selector is not None:
            continue
        if pol.namespace in seen:
            out.append(Violation(f"policies.peer_auth[{i}]", "peer-auth-conflict",
                                 f"namespace {pol.namespace} already has selector-less policy {seen[pol.namespace]}"))
        else:
            seen[pol.namespace] = pol.name
    return out


def validate_requests(t: Topology, requests: Iterable[ConnectionRequest]) -> list[Violation]:
    out: list[Violation] = []
    requests = list(requests)
    for name, n in Counter(r.name for r in requests if r.name).items():
        if n > 1:
            out.append(Violation("requests", "duplicate-identifier", f"request {name!r} declared {n} times"))
    for i, r in enumerate(requests):
        try:
            resolve_request(t, r)
        except ResolutionError as exc:
            out.append(Violation(f"requests[{i}]", "unresolvable-request", str(exc)))
    return out


def resolve_request(t: Topology, r: ConnectionRequest) -> None:
    """Raise :class:`ResolutionError` unless every reference in ``r`` resolves."""
    if r.source is not None:
        src = t.find_workload(r.source)
        if r.destination is not None:
            svc = t.find_service(r.destination, cluster=src.cluster)
            if r.port not in svc.port_map:
                raise ResolutionError("port-not-exposed", f"service {svc.namespace}/{svc.name} does not map port {r.port}")


# -- entry points ------------------------------------------------------------------

def check_scenario(doc: Any, *, lax: bool = False) -> tuple[Scenario | None, list[Violation]]:
    """Load ``doc`` without raising: the scenario (if it could be built) and every violation."""
    violations = schema_violations(doc, lax)
    if violations:
        return None, violations
    b = _Builder()
    t = b.topology(doc)
    p = b.policies(doc)
    reqs = b.requests(doc)
    if b.violations:
        return None, sorted(b.violations)
    violations = validate_topology(t) + validate_policies(t, p) + validate_requests(t, reqs)
    return Scenario(t, p, reqs), sorted(violations)


def load_scenario(doc: Any, *, lax: bool = False) -> Scenario:
    scenario, violations = check_scenario(doc, lax=lax)
    if violations:
        raise ScenarioError(violations)
    assert scenario is not None
    return scenario


def load_scenario_paths(paths: Iterable[str | Path], *, lax: bool = False) -> Scenario:
    return load_scenario(read_scenario_paths(paths), lax=lax)


# -- dumping -------------------------------------------------------------------------

def _selector_doc(s: Selector | None):
    return None if s is None else (dict(s.source) if isinstance(s.source, dict) else s.source)


def _ports_doc(ranges: tuple[PortRange, ...] | None):
    return None if ranges is None else [r.dump() for r in ranges]


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


def _workload_doc(w: Workload) -> dict:
    d = {
        "name": w.name,
        "kind": w.kind.value,
        "subnet": w.subnet,
        "address": str(w.address),
        "labels": dict(w.labels),
        "service_account": w.service_account,
        "ports": {str(k): v.value for k, v in w.ports.items()},
        "sidecar": w.sidecar,
    }
    if w.cert is not None:
        d["cert"] = _drop_none({
            "trust_domain": w.cert.trust_domain,
            "issued_at": w.cert.issued_at.isoformat() if w.cert.issued_at else None,
        })
    return d


def dump_topology(t: Topology) -> dict:
    return {
        "mesh_root_namespace": t.mesh_root_namespace,
        "trust_domain": t.trust_domain,
        "cert_ttl_seconds": int(t.cert_ttl.total_seconds()),
        "clouds": [
            {"name": c.name, "vnets": [
                {"name": v.name, "cidr": str(v.cidr), "business_function": v.business_function,
                 "subnets": [{"name": s.name, "cidr": str(s.cidr)} for s in v.subnets]}
                for v in c.vnets]}
            for c in t.clouds
        ],
        "peerings": [list(p) for p in t.peerings],
        "clusters": [
            {"name": k.name, "vnet": k.vnet, "risk_tier": k.risk_tier.value, "namespaces": [
                {"name": n.name, "labels": dict(n.labels), "sidecar_injection_default": n.sidecar_injection_default,
                 "workloads": [_workload_doc(w) for w in n.workloads],
                 "services": [{"name": s.name, "selector": _selector_doc(s.selector),
                               "port_map": {str(a): b for a, b in s.port_map.items()}} for s in n.services]}
                for n in k.namespaces]}
            for k in t.clusters
        ],
        "gateways": [
            _drop_none({
                "name": g.name,
                "kind": g.kind.value,
                "attachment": {"cluster": g.cluster} if g.cluster is not None else {"vnet": g.vnet},
                "exposes": [_drop_none({"host": e.host, "path": e.path, "service": e.service, "port": e.port}) for e in g.exposes],
                "allowed_destinations": list(g.allowed_destinations),
                "encrypts": g.encrypts,
            })
            for g in t.gateways
        ],
    }


def _l34_rules_doc(rules):
    if rules is None:
        return None
    out = []
    for r in rules:
        d: dict[str, Any] = {"action": r.action.value}
        if r.protocol is not None:
            d["protocol"] = r.protocol
        if r.ports is not None:
            d["ports"] = _ports_doc(r.ports)
        if r.peer is not None:
            d["peer"] = _drop_none({
                "cidr": str(r.peer.cidr) if r.peer.cidr is not None else None,
                "selector": _selector_doc(r.peer.selector),
                "namespace_selector": _selector_doc(r.peer.namespace_selector),
            })
        out.append(d)
    return out


def dump_policies(p: PolicySet) -> dict:
    def order(x: float):
        return int(x) if float(x).is_integer() else x

    return {
        "l3l4": [
            _drop_none({
                "name": pol.name,
                "scope": "global" if pol.namespace is None else {"namespaced": pol.namespace},
                "order": order(pol.order),
                "selector": _selector_doc(pol.selector),
                "ingress_rules": _l34_rules_doc(pol.ingress_rules),
                "egress_rules": _l34_rules_doc(pol.egress_rules),
            })
            for pol in p.l3l4
        ],
        "peer_auth": [
            _drop_none({
                "name": pol.name,
                "namespace": pol.namespace,
                "selector": _selector_doc(pol.selector),
                "mode": pol.mode.value,
                "port_overrides": {str(k): v.value for k, v in pol.port_overrides.items()} or None,
            })
            for pol in p.peer_auth
        ],
        "authz": [
            _drop_none({
                "name": pol.name,
                "namespace": pol.namespace,
                "selector": _selector_doc(pol.selector),
                "action": pol.action.value,
                "rules": [_drop_none({k: list(getattr(r, k)) if getattr(r, k) is not None else None
                                      for k in ("from_principals", "from_namespaces", "to_ports", "to_methods", "to_paths")})
                          for r in pol.rules],
            })
            for pol in p.authz
        ],
    }


def dump_perimeter(cfg: PerimeterConfig) -> dict:
    return {
        "sdp_rules": [
            {"action": r.action.value, "direction": r.direction.value, "match": _drop_none({
                "host": r.host,
                "cidr": str(r.cidr) if r.cidr is not None else None,
                "ports": _ports_doc(r.ports),
            })}
            for r in cfg.sdp_rules
        ],
        "default_action": cfg.default_action.value,
    }


def dump_scenario(s: Scenario) -> dict:
    """Canonical document for ``s``; loading it yields an equal scenario."""
    return {
        "topology": dump_topology(s.topology),
        "policies": dump_policies(s.policies),
        "perimeter": dump_perimeter(s.topology.perimeter),
        "requests": [r.to_dict() for r in s.requests],
    }
