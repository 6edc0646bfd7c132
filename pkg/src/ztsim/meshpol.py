"""Mesh (L7) policy: peer-authentication modes and authorization policies.

Scopes follow the mesh convention. A policy with no selector covers its whole
namespace, and in the mesh root namespace the whole mesh. Authorization
policies with a selector in the root namespace apply to matching workloads in
every namespace; peer-authentication selectors only reach workloads in the
policy's own namespace.

Authorization precedence for a request:

1. any matching DENY policy denies;
2. with no ALLOW policy in scope the request is allowed;
3. a matching ALLOW policy allows;
4. otherwise the request is denied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .identity import Identity, PeerAuthMode
from .match import Selector, path_matches, wildcard_match

if TYPE_CHECKING:
    from .topology import Workload

DEFAULT_PEER_AUTH_MODE = PeerAuthMode.PERMISSIVE


@dataclass(frozen=True)
class PeerAuthPolicy:
    name: str
    namespace: str
    mode: PeerAuthMode = PeerAuthMode.PERMISSIVE
    selector: Selector | None = None
    port_overrides: Mapping[int, PeerAuthMode] = field(default_factory=dict)

    @property
    def qualified_name(self) -> str:
        return f"{self.namespace}/{self.name}"


class AuthzAction(str, Enum):
    ALLOW = "ALLOW"
    DENY = "DENY"


@dataclass(frozen=True)
class AuthzRule:
    """``None`` clauses are omitted and match anything; an empty tuple matches nothing."""

    from_principals: tuple[str, ...] | None = None
    from_namespaces: tuple[str, ...] | None = None
    to_ports: tuple[int, ...] | None = None
    to_methods: tuple[str, ...] | None = None
    to_paths: tuple[str, ...] | None = None


@dataclass(frozen=True)
class AuthorizationPolicy:
    name: str
    namespace: str
    action: AuthzAction = AuthzAction.ALLOW
    selector: Selector | None = None
    rules: tuple[AuthzRule, ...] = ()

    @property
    def qualified_name(self) -> str:
        return f"{self.namespace}/{self.name}"


@dataclass(frozen=True)
class RequestContext:
    """What the destination sidecar knows about a request.

    ``peer_identity`` and ``source_namespace`` come from the client
    certificate and are absent on plaintext. ``method``/``path`` are absent
    when the port is not HTTP.
    """

    destination: "Workload"
    port: int
    peer_identity: Identity | None = None
    source_namespace: str | None = None
    method: str | None = None
    path: str | None = None


# -- peer authentication --------------------------------------------------

class Specificity(int, Enum):
    DEFAULT = 0
    MESH = 1
    NAMESPACE = 2
    WORKLOAD = 3


@dataclass(frozen=True)
class PeerAuthResolution:
    mode: PeerAuthMode
    specificity: Specificity
    policy: str | None = None  # qualified name of the winning policy
    tied: tuple[str, ...] = ()  # other policies at the same specificity

    @property
    def subject(self) -> str:
        return self.policy or "default"


def _peer_auth_level(p: PeerAuthPolicy, w: "Workload", mesh_root: str) -> Specificity | None:
    if p.selector is not None:
        if p.namespace == w.namespace and p.selector.matches(w.labels):
            return Specificity.WORKLOAD
        return None
    if p.namespace == w.namespace:
        return Specificity.NAMESPACE
    if p.namespace == mesh_root:
        return Specificity.MESH
    return None


def resolve_peer_auth(policies: Iterable[PeerAuthPolicy], w: "Workload", port: int | None, mesh_root: str) -> PeerAuthResolution:
    best: Specificity | None = None
    winners: list[PeerAuthPolicy] = []
    for p in policies:
        level = _peer_auth_level(p, w, mesh_root)
        if level is None:
            continue
        if best is None or level > best:
            best, winners = level, [p]
        elif level == best:
            winners.append(p)
    if best is None:
        return PeerAuthResolution(DEFAULT_PEER_AUTH_MODE, Specificity.DEFAULT)
    winners.sort(key=lambda p: p.name)
    win = winners[0]
    mode = win.port_overrides.get(port, win.mode) if port is not None else win.mode
    return PeerAuthResolution(mode, best, win.qualified_name, tuple(p.qualified_name for p in winners[1:]))


def effective_peer_auth(policies: Iterable[PeerAuthPolicy], w: "Workload", port: int | None, mesh_root: str) -> PeerAuthMode:
    return resolve_peer_auth(policies, w, port, mesh_root).mode


# -- authorization --------------------------------------------------------

@dataclass(frozen=True)
class AuthzResult:
    allowed: bool
    policy: str  # qualified policy name, or "default"
    rule: int | None = None
    detail: str = ""


def in_scope(p: AuthorizationPolicy, w: "Workload", mesh_root: str) -> bool:
    if p.namespace != w.namespace and p.namespace != mesh_root:
        return False
    return p.selector is None or p.selector.matches(w.labels)


def policies_in_scope(policies: Iterable[AuthorizationPolicy], w: "Workload", mesh_root: str) -> list[AuthorizationPolicy]:
    return sorted((p for p in policies if in_scope(p, w, mesh_root)), key=lambda p: (p.namespace, p.name))


def rule_matches(rule: AuthzRule, ctx: RequestContext) -> bool:
    if rule.from_principals is not None:
        principal = str(ctx.peer_identity) if ctx.peer_identity is not None else None
        if not any(wildcard_match(pat, principal) for pat in rule.from_principals):
            return False
    if rule.from_namespaces is not None:
        if not any(wildcard_match(pat, ctx.source_namespace) for pat in rule.from_namespaces):
            return False
    if rule.to_ports is not None and ctx.port not in rule.to_ports:
        return False
    if rule.to_methods is not None and ctx.method not in rule.to_methods:
        return False
    if rule.to_paths is not None and not any(path_matches(pat, ctx.path) for pat in rule.to_paths):
        return False
    return True


def _first_matching_rule(p: AuthorizationPolicy, ctx: RequestContext) -> int | None:
    for i, rule in enumerate(p.rules):
        if rule_matches(rule, ctx):
            return i
    return None


def decide(scoped: Sequence[AuthorizationPolicy], ctx: RequestContext) -> AuthzResult:
    """Apply the four-step precedence to policies already filtered to the destination."""
    for p in scoped:
        if p.action is AuthzAction.DENY:
            i = _first_matching_rule(p, ctx)
            if i is not None:
                return AuthzResult(False, p.qualified_name, i, f"policy {p.qualified_name} (DENY) rule {i} matched; denied → 403")
    allows = [p for p in scoped if p.action is AuthzAction.ALLOW]
    if not allows:
        return AuthzResult(True, "default", None, "no ALLOW policy in scope; default allow")
    for p in allows:
        i = _first_matching_rule(p, ctx)
        if i is not None:
            return AuthzResult(True, p.qualified_name, i, f"policy {p.qualified_name} rule {i} allowed")
    names = ", ".join(p.qualified_name for p in allows)
    noun = "policy" if len(allows) == 1 else "policies"
    return AuthzResult(False, "default", None, f"{noun} {names} matched nothing; default deny → 403")


def evaluate_authz(policies: Iterable[AuthorizationPolicy], ctx: RequestContext, mesh_root: str) -> AuthzResult:
    return decide(policies_in_scope(policies, ctx.destination, mesh_root), ctx)
