"""Zero-trust posture audit over a topology and its policy set.

=======  ========  =============================================================
rule     severity  finding
=======  ========  =============================================================
ZT-001   error     no mesh-wide default-deny authorization policy
ZT-002   warning   workload without sidecar in an injection-enabled namespace
ZT-003   warning   workload whose effective peer-auth mode admits plaintext
ZT-004   warning   namespace whose workloads no L3/L4 policy selects
ZT-005   warning   peer-auth policies tied at the same specificity
ZT-006   info      L3/L4 Allow rule without a peer constraint
ZT-007   warning   STRICT peer-auth on a workload that has no sidecar
=======  ========  =============================================================
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .engine import PolicySet
from .identity import PeerAuthMode
from .meshpol import AuthzAction, resolve_peer_auth
from .netpol import Direction, Endpoint, L34Action, select_policies
from .topology import Topology


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"

    @property
    def rank(self) -> int:
        return _RANK[self]

    def at_least(self, threshold: "Severity") -> bool:
        return self.rank <= threshold.rank


_RANK = {Severity.ERROR: 0, Severity.WARNING: 1, Severity.INFO: 2}


@dataclass(frozen=True)
class Finding:
    rule: str
    severity: Severity
    path: str
    message: str

    @property
    def sort_key(self) -> tuple[int, str, str, str]:
        return (self.severity.rank, self.rule, self.path, self.message)

    def to_dict(self) -> dict[str, str]:
        return {"rule": self.rule, "severity": self.severity.value, "path": self.path, "message": self.message}


def _unconditional(rule) -> bool:
    return all(getattr(rule, k) is None for k in ("from_principals", "from_namespaces", "to_ports", "to_methods", "to_paths"))


def _zt001(t: Topology, p: PolicySet) -> Iterable[Finding]:
    root = t.mesh_root_namespace
    mesh_allows = [a for a in p.authz if a.namespace == root and a.selector is None and a.action is AuthzAction.ALLOW]
    if mesh_allows and not any(_unconditional(r) for a in mesh_allows for r in a.rules):
        return
    if mesh_allows:
        why = "a mesh-wide ALLOW policy has an unconditional rule, so nothing is denied by default"
    else:
        why = f"no selector-less ALLOW policy in {root}; requests are allowed by default"
    yield Finding("ZT-001", Severity.ERROR, "policies.authz", f"no mesh-wide default-deny authorization policy: {why}")


def _zt002(t: Topology, p: PolicySet) -> Iterable[Finding]:
    for ns in t.namespaces:
        if not ns.sidecar_injection_default:
            continue
        for w in ns.workloads:
            if not w.sidecar:
                yield Finding("ZT-002", Severity.WARNING, t.paths[f"workload:{w.key}"],
                              f"workload {w.key} has no sidecar although namespace {ns.name} injects by default")


def _zt003_005_007(t: Topology, p: PolicySet) -> Iterable[Finding]:
    root = t.mesh_root_namespace
    ties: dict[tuple[str, ...], str] = {}
    for w in t.workloads:
        path = t.paths[f"workload:{w.key}"]
        weak: list[str] = []
        strict = False
        for port in (tuple(w.ports) or (None,)):
            res = resolve_peer_auth(p.peer_auth, w, port, root)
            if res.tied:
                group = (res.policy, *res.tied)
                ties.setdefault(group, w.key)
            if res.mode is PeerAuthMode.STRICT:
                strict = True
            else:
                weak.append(f"{port if port is not None else '*'}={res.mode.value}")
        if weak:
            yield Finding("ZT-003", Severity.WARNING, path,
                          f"workload {w.key} accepts plaintext: {', '.join(weak)}")
        if strict and not w.sidecar:
            yield Finding("ZT-007", Severity.WARNING, path,
                          f"workload {w.key} is STRICT but has no sidecar to enforce it")
    index = {pol.qualified_name: i for i, pol in enumerate(p.peer_auth)}
    for group, example in ties.items():
        path = f"policies.peer_auth[{index[group[1]]}]"
        yield Finding("ZT-005", Severity.WARNING, path,
                      f"peer-auth policies {', '.join(group)} tie for {example}; {group[0]} wins by name")


def _zt004(t: Topology, p: PolicySet) -> Iterable[Finding]:
    for ns in t.namespaces:
        if not ns.workloads:
            continue
        labels = ns.selector_labels
        covered = any(
            select_policies(p.l3l4, Endpoint(w.key, w.namespace, w.labels, labels, w.address), d)
            for w in ns.workloads for d in Direction
        )
        if not covered:
            yield Finding("ZT-004", Severity.WARNING, t.paths[f"namespace:{ns.key}"],
                          f"no L3/L4 policy selects any workload in namespace {ns.key}")


def _zt006(t: Topology, p: PolicySet) -> Iterable[Finding]:
    for i, pol in enumerate(p.l3l4):
        for d in Direction:
            for j, rule in enumerate(pol.rules(d) or ()):
                if rule.action is L34Action.ALLOW and rule.peer is None:
                    yield Finding("ZT-006", Severity.INFO, f"policies.l3l4[{i}].{d.value}_rules[{j}]",
                                  f"policy {pol.qualified_name} allows {d.value} from any peer")


CHECKS = (_zt001, _zt002, _zt003_005_007, _zt004, _zt006)


def lint(t: Topology, p: PolicySet) -> list[Finding]:
    findings = [f for check in CHECKS for f in check(t, p)]
    return sorted(findings, key=lambda f: f.sort_key)


def failing(findings: Iterable[Finding], threshold: Severity = Severity.WARNING) -> list[Finding]:
    return [f for f in findings if f.severity.at_least(threshold)]
