"""Workload identities, simulated certificates, and the transport handshake.

No key material is involved: a certificate is an assertion with a validity
window, checked against the clock passed in by the caller.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from typing import TYPE_CHECKING

from .errors import NoMeshIdentity

if TYPE_CHECKING:
    from .topology import Workload

DEFAULT_TTL = timedelta(hours=24)

IDENTIFIER = r"[A-Za-z0-9](?:[A-Za-z0-9._-]*[A-Za-z0-9])?"
_IDENTIFIER_RE = re.compile(IDENTIFIER)
_IDENTITY_RE = re.compile(rf"({IDENTIFIER})/ns/({IDENTIFIER})/sa/({IDENTIFIER})")


class PeerAuthMode(str, Enum):
    STRICT = "STRICT"
    PERMISSIVE = "PERMISSIVE"
    DISABLE = "DISABLE"


@dataclass(frozen=True, order=True)
class Identity:
    trust_domain: str
    namespace: str
    service_account: str

    def __post_init__(self) -> None:
        for part in (self.trust_domain, self.namespace, self.service_account):
            if not _IDENTIFIER_RE.fullmatch(part):
                raise ValueError(f"invalid identity component {part!r}")

    def __str__(self) -> str:
        return f"{self.trust_domain}/ns/{self.namespace}/sa/{self.service_account}"

    @classmethod
    def parse(cls, text: str) -> "Identity":
        m = _IDENTITY_RE.fullmatch(text)
        if m is None:
            raise ValueError(f"not an identity: {text!r}")
        return cls(*m.groups())


@dataclass(frozen=True)
class Certificate:
    identity: Identity
    serial: int
    not_before: datetime
    not_after: datetime
    issuer: str

    def __post_init__(self) -> None:
        if not self.not_before < self.not_after:
            raise ValueError("certificate validity window is empty")
        if self.serial < 0:
            raise ValueError("serial must be unsigned")

    def valid_at(self, now: datetime) -> bool:
        return self.not_before <= now < self.not_after

    def __str__(self) -> str:
        return (f"{self.identity} serial={self.serial} issuer={self.issuer} "
                f"valid {self.not_before.isoformat()}..{self.not_after.isoformat()}")


class CertificateAuthority:
    """Issues certificates for one trust domain; serials increase by one per issuance."""

    def __init__(self, trust_domain: str, ttl: timedelta = DEFAULT_TTL):
        if ttl <= timedelta(0):
            raise ValueError("certificate TTL must be positive")
        self.trust_domain = trust_domain
        self.ttl = ttl
        self._serial = 0

    def issue_identity(self, w: "Workload", now: datetime) -> Certificate:
        if not w.sidecar:
            raise NoMeshIdentity(f"no-mesh-identity: workload {w.key} has no sidecar")
        return self.issue(Identity(self.trust_domain, w.namespace, w.service_account), now)

    def issue(self, identity: Identity, now: datetime) -> Certificate:
        self._serial += 1
        return Certificate(identity, self._serial, now, now + self.ttl, self.trust_domain)


class Channel(str, Enum):
    MTLS = "MTLS"
    PLAINTEXT = "PLAINTEXT"
    REJECTED = "REJECTED"


class HandshakeReason(str, Enum):
    OK = "ok"
    SERVER_REQUIRES_MTLS = "server_requires_mtls"
    CLIENT_CERT_INVALID = "client_cert_invalid"
    TRUST_DOMAIN_MISMATCH = "trust_domain_mismatch"


@dataclass(frozen=True)
class HandshakeOutcome:
    channel: Channel
    reason: HandshakeReason = HandshakeReason.OK
    peer_identity: Identity | None = None

    def __post_init__(self) -> None:
        if (self.channel is Channel.MTLS) != (self.peer_identity is not None):
            raise ValueError("peer identity is present exactly when the channel is mTLS")


def handshake(
    client: "Workload | None",
    certificate: Certificate | None,
    server: "Workload",
    mode: PeerAuthMode,
    now: datetime,
    trust_domain: str = "cluster.local",
) -> HandshakeOutcome:
    """Outcome of a connection attempt from ``client`` to ``server``.

    ``mode`` is the server's effective peer-authentication mode for the port.
    ``trust_domain`` is the server's (mesh) trust domain. A client presenting
    a certificate always attempts mTLS; a certificate that is expired or from
    a foreign trust domain fails the TLS handshake whenever the server
    terminates mTLS (STRICT or PERMISSIVE).
    """
    if mode is PeerAuthMode.DISABLE:
        return HandshakeOutcome(Channel.PLAINTEXT)
    if certificate is None:
        if mode is PeerAuthMode.STRICT:
            return HandshakeOutcome(Channel.REJECTED, HandshakeReason.SERVER_REQUIRES_MTLS)
        return HandshakeOutcome(Channel.PLAINTEXT)
    if certificate.issuer != trust_domain or certificate.identity.trust_domain != trust_domain:
        return HandshakeOutcome(Channel.REJECTED, HandshakeReason.TRUST_DOMAIN_MISMATCH)
    if not certificate.valid_at(now):
        return HandshakeOutcome(Channel.REJECTED, HandshakeReason.CLIENT_CERT_INVALID)
    return HandshakeOutcome(Channel.MTLS, HandshakeReason.OK, certificate.identity)
