"""Brute-force reference evaluator working directly on scenario documents.

Written against the stated semantics without importing the package, so that
agreement with the engine means something. It covers what the random
generator produces: label-map selectors, vnets with optional peering, no
gateways and no internet traffic.
"""

from __future__ import annotations

import ipaddress
from datetime import datetime, timedelta

NAME_LABEL = "kubernetes.io/metadata.name"


def sel_ok(selector, labels) -> bool:
    if selector is None:
        return True
    return all(labels.get(k) == v for k, v in selector.items())


def in_ports(port, specs) -> bool:
    if specs is None:
        return True
    for s in specs:
        if isinstance(s, int):
            if port == s:
                return True
        else:
            lo, _, hi = str(s).replace(":", "-").partition("-")
            if int(lo) <= port <= int(hi or lo):
                return True
    return False


def wild(pattern, value) -> bool:
    if value is None:
        return False
    if pattern == "*":
        return True
    if pattern.endswith("*"):
        return value.startswith(pattern[:-1])
    if pattern.startswith("*"):
        return value.endswith(pattern[1:])
    return value == pattern


def path_ok(pattern, path) -> bool:
    if path is None:
        return False
    return path.startswith(pattern[:-1]) if pattern.endswith("*") else path == pattern


class World:
    def __init__(self, doc, now: datetime):
        topo = doc["topology"]
        pol = doc.get("policies", {})
        self.now = now
        self.root = topo.get("mesh_root_namespace", "istio-system")
        self.td = topo.get("trust_domain", "cluster.local")
        self.ttl = timedelta(seconds=topo.get("cert_ttl_seconds", 86400))
        self.peerings = [set(p) for p in topo.get("peerings", [])]
        self.l34_policies = pol.get("l3l4", [])
        self.pa = pol.get("peer_auth", [])
        self.az = pol.get("authz", [])
        self.workloads = {}
        self.services = []
        self.ns_labels = {}
        for c in topo["clusters"]:
            cloud = c["vnet"].split("/")[0]
            for ns in c.get("namespaces", []):
                self.ns_labels[ns["name"]] = dict(ns.get("labels", {}), **{NAME_LABEL: ns["name"]})
                for w in ns.get("workloads", []):
                    sub = w["subnet"]
                    if sub.count("/") == 0:
                        vnet = c["vnet"]
                    elif sub.count("/") == 1:
                        vnet = f"{cloud}/{sub.split('/')[0]}"
                    else:
                        vnet = sub.rsplit("/", 1)[0]
                    key = f"{c['name']}/{ns['name']}/{w['name']}"
                    self.workloads[key] = {
                        "key": key, "name": w["name"], "ns": ns["name"], "vnet": vnet,
                        "address": ipaddress.ip_address(w["address"]),
                        "labels": w.get("labels", {}),
                        "sa": w.get("service_account", "default"),
                        "ports": {int(k): v for k, v in w.get("ports", {}).items()},
                        "sidecar": w.get("sidecar", ns.get("sidecar_injection_default", False)),
                        "cert": w.get("cert"),
                    }
                for s in ns.get("services", []):
                    self.services.append({
                        "key": f"{c['name']}/{ns['name']}/{s['name']}", "cluster": c["name"], "ns": ns["name"],
                        "selector": s["selector"], "port_map": {int(k): v for k, v in s["port_map"].items()},
                    })

    # -- L3/L4 --

    def l34(self, me, remote, port, direction):
        key = direction + "_rules"
        chosen = []
        for p in self.l34_policies:
            if key not in p:
                continue
            scope = p["scope"]
            if scope != "global" and scope["namespaced"] != me["ns"]:
                continue
            if not sel_ok(p.get("selector"), me["labels"]):
                continue
            chosen.append(p)
        if not chosen:
            return "NoPolicy"
        chosen.sort(key=lambda p: (p["order"], p["name"], "" if p["scope"] == "global" else p["scope"]["namespaced"]))
        pairs = [(p, r) for p in chosen for r in p[key]]
        for p, r in pairs:
            if not in_ports(port, r.get("ports")):
                continue
            peer = r.get("peer")
            if peer is not None:
                if "cidr" in peer and remote["address"] not in ipaddress.ip_network(peer["cidr"]):
                    continue
                if "namespace_selector" in peer and not sel_ok(peer["namespace_selector"], self.ns_labels[remote["ns"]]):
                    continue
                if "selector" in peer:
                    if not sel_ok(peer["selector"], remote["labels"]):
                        continue
                    if "namespace_selector" not in peer and p["scope"] != "global" and remote["ns"] != p["scope"]["namespaced"]:
                        continue
            return r["action"]
        return "Deny"

    # -- peer auth --

    def mode(self, w, port):
        levels = []
        for p in self.pa:
            if "selector" in p:
                if p["namespace"] == w["ns"] and sel_ok(p["selector"], w["labels"]):
                    levels.append((3, p))
            elif p["namespace"] == w["ns"]:
                levels.append((2, p))
            elif p["namespace"] == self.root:
                levels.append((1, p))
        if not levels:
            return "PERMISSIVE"
        top = max(lv for lv, _ in levels)
        win = min((p for lv, p in levels if lv == top), key=lambda p: p["name"])
        return win.get("port_overrides", {}).get(str(port), win["mode"])

    def cert(self, w):
        """(trust domain, valid now) of the workload's certificate, or None."""
        if not w["sidecar"]:
            return None
        c = w["cert"] or {}
        td = c.get("trust_domain", self.td)
        issued = self.now
        if "issued_at" in c:
            issued = datetime.fromisoformat(c["issued_at"].replace("Z", "+00:00"))
        return td, issued <= self.now < issued + self.ttl

    # -- authz --

    def authz(self, dst, port, peer, method, path):
        scoped = [p for p in self.az
                  if p["namespace"] in (dst["ns"], self.root) and sel_ok(p.get("selector"), dst["labels"])]
        src_ns = peer.split("/")[2] if peer else None

        def hit(rule):
            checks = [
                ("from_principals", lambda v: any(wild(x, peer) for x in v)),
                ("from_namespaces", lambda v: any(wild(x, src_ns) for x in v)),
                ("to_ports", lambda v: port in v),
                ("to_methods", lambda v: method in v),
                ("to_paths", lambda v: any(path_ok(x, path) for x in v)),
            ]
            return all(f(rule[k]) for k, f in checks if k in rule)

        if any(hit(r) for p in scoped if p.get("action", "ALLOW") == "DENY" for r in p.get("rules", [])):
            return False
        allows = [p for p in scoped if p.get("action", "ALLOW") == "ALLOW"]
        if not allows:
            return True
        return any(hit(r) for p in allows for r in p.get("rules", []))

    # -- pipeline --

    def one(self, src, dst, port, protocol, method, path):
        if port not in dst["ports"]:
            return "UNREACHABLE", "none"
        if src["vnet"] != dst["vnet"] and {src["vnet"], dst["vnet"]} not in self.peerings:
            return "UNREACHABLE", "none"
        if self.l34(src, dst, port, "egress") == "Deny":
            return "DENIED_L3L4", "none"
        if self.l34(dst, src, port, "ingress") == "Deny":
            return "DENIED_L3L4", "none"
        mode = self.mode(dst, port) if dst["sidecar"] else "DISABLE"
        cert = self.cert(src)
        peer = None
        if mode == "DISABLE":
            channel = "PLAINTEXT"
        elif cert is None:
            if mode == "STRICT":
                return "DENIED_AUTHN", "none"
            channel = "PLAINTEXT"
        else:
            td, valid = cert
            if td != self.td or not valid:
                return "DENIED_AUTHN", "none"
            channel = "MTLS"
            peer = f"{self.td}/ns/{src['ns']}/sa/{src['sa']}"
        if not dst["sidecar"]:
            return "ALLOWED", channel
        l7 = protocol == "HTTP" and dst["ports"][port] == "HTTP"
        if not self.authz(dst, port, peer, method if l7 else None, path if l7 else None):
            return "DENIED_AUTHZ", channel
        return "ALLOWED", channel

    def service_cell(self, src, svc, port, protocol, method, path):
        target = svc["port_map"][port]
        backends = sorted((w for w in self.workloads.values()
                           if w["ns"] == svc["ns"] and w["key"].split("/")[0] == svc["cluster"]
                           and sel_ok(svc["selector"], w["labels"])), key=lambda w: w["name"])
        results = [self.one(src, b, target, protocol, method, path) for b in backends]
        for r in results:
            if r[0] != "ALLOWED":
                return r
        return results[0]


def oracle_matrix(doc, port, protocol="HTTP", method="GET", path="/", now=None):
    """``{(workload key, service key): (verdict, channel)}`` for every pair."""
    w = World(doc, now)
    cols = [s for s in w.services if port in s["port_map"]]
    return {
        (src["key"], svc["key"]): w.service_cell(src, svc, port, protocol, method, path)
        for src in w.workloads.values() for svc in cols
    }
