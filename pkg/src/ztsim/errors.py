from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class Violation:
    """One broken invariant, located by a path into the scenario document."""

    path: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: [{self.rule}] {self.message}"

    def to_dict(self) -> dict:
        return {"path": self.path, "rule": self.rule, "message": self.message}


class ZtsimError(Exception):
    """Base class for input errors (CLI exit status 2)."""


class ScenarioError(ZtsimError):
    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        lines = "\n".join(str(v) for v in self.violations)
        super().__init__(f"invalid scenario:\n{lines}")


class ResolutionError(ZtsimError):
    """A reference (workload, service, port, request) that does not resolve."""

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


class NoMeshIdentity(ZtsimError):
    code = "no-mesh-identity"
