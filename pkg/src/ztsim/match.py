"""Label selectors, port ranges and the small pattern languages used by policies.

Selector expressions follow the host-policy style::

    app == 'httpbin' && tier in {'web', 'api'}
    has(version) || !(env != 'prod')
    all()

A bare ``k=v`` or a comma-separated list of terms (``app=httpbin,tier=web``)
is accepted as well, and a mapping is read as a conjunction of equalities.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Union

Labels = Mapping[str, str]
SelectorSource = Union[str, Mapping[str, str]]

_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<op>&&|\|\||==|!=|=|!|\(|\)|\{|\}|,)
      | '(?P<sq>[^']*)'
      | "(?P<dq>[^"]*)"
      | (?P<word>[A-Za-z0-9_./:-]+)
    )""",
    re.VERBOSE,
)


class SelectorSyntaxError(ValueError):
    pass


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens: list[tuple[str, str]] = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise SelectorSyntaxError(f"unexpected character at offset {pos} in {text!r}")
        pos = m.end()
        if m.group("op") is not None:
            tokens.append(("op", m.group("op")))
        elif m.group("sq") is not None:
            tokens.append(("str", m.group("sq")))
        elif m.group("dq") is not None:
            tokens.append(("str", m.group("dq")))
        else:
            tokens.append(("word", m.group("word")))
    return tokens


Predicate = Callable[[Labels], bool]


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self) -> tuple[str, str]:
        tok = self.peek()
        if tok is None:
            raise SelectorSyntaxError(f"unexpected end of selector {self.text!r}")
        self.i += 1
        return tok

    def expect_op(self, op: str) -> None:
        kind, value = self.take()
        if kind != "op" or value != op:
            raise SelectorSyntaxError(f"expected {op!r}, got {value!r} in {self.text!r}")

    def at_op(self, *ops: str) -> bool:
        tok = self.peek()
        return tok is not None and tok[0] == "op" and tok[1] in ops

    def parse(self) -> Predicate:
        pred = self.or_expr()
        if self.peek() is not None:
            raise SelectorSyntaxError(f"trailing input {self.peek()[1]!r} in {self.text!r}")
        return pred

    def or_expr(self) -> Predicate:
        terms = [self.and_expr()]
        while self.at_op("||"):
            self.take()
            terms.append(self.and_expr())
        if len(terms) == 1:
            return terms[0]
        return lambda labels: any(t(labels) for t in terms)

    def and_expr(self) -> Predicate:
        terms = [self.unary()]
        while self.at_op("&&", ","):
            self.take()
            terms.append(self.unary())
        if len(terms) == 1:
            return terms[0]
        return lambda labels: all(t(labels) for t in terms)

    def unary(self) -> Predicate:
        if self.at_op("!"):
            self.take()
            inner = self.unary()
            return lambda labels: not inner(labels)
        return self.primary()

    def value(self) -> str:
        kind, value = self.take()
        if kind not in ("str", "word"):
            raise SelectorSyntaxError(f"expected a value, got {value!r} in {self.text!r}")
        return value

    def value_set(self) -> frozenset[str]:
        self.expect_op("{")
        values: set[str] = set()
        if self.at_op("}"):
            self.take()
            return frozenset()
        values.add(self.value())
        while self.at_op(","):
            self.take()
            values.add(self.value())
        self.expect_op("}")
        return frozenset(values)

    def primary(self) -> Predicate:
        if self.at_op("("):
            self.take()
            inner = self.or_expr()
            self.expect_op(")")
            return inner
        kind, word = self.take()
        if kind != "word":
            raise SelectorSyntaxError(f"expected a label key, got {word!r} in {self.text!r}")
        if word == "all" and self.at_op("("):
            self.take()
            self.expect_op(")")
            return lambda labels: True
        if word == "has" and self.at_op("("):
            self.take()
            key = self.value()
            self.expect_op(")")
            return lambda labels: key in labels
        key = word
        if self.at_op("==", "="):
            self.take()
            val = self.value()
            return lambda labels: labels.get(key) == val
        if self.at_op("!="):
            self.take()
            val = self.value()
            return lambda labels: labels.get(key) != val
        tok = self.peek()
        if tok == ("word", "in"):
            self.take()
            vals = self.value_set()
            return lambda labels: labels.get(key) in vals
        if tok == ("word", "not"):
            self.take()
            if self.take() != ("word", "in"):
                raise SelectorSyntaxError(f"expected 'in' after 'not' in {self.text!r}")
            vals = self.value_set()
            return lambda labels: labels.get(key) not in vals
        raise SelectorSyntaxError(f"label {key!r} needs a comparison in {self.text!r}")


class Selector:
    """Compiled label selector. Compares equal by its source form."""

    __slots__ = ("source", "_pred")

    def __init__(self, source: SelectorSource | None = None):
        if source is None:
            source = "all()"
        if isinstance(source, Mapping):
            source = {str(k): str(v) for k, v in source.items()}
            items = tuple(sorted(source.items()))
            self._pred: Predicate = lambda labels: all(labels.get(k) == v for k, v in items)
        elif isinstance(source, str):
            if not source.strip():
                raise SelectorSyntaxError("empty selector")
            self._pred = _Parser(source).parse()
        else:
            raise SelectorSyntaxError(f"selector must be a string or mapping, not {type(source).__name__}")
        self.source = source

    def matches(self, labels: Labels) -> bool:
        return self._pred(labels)

    def _key(self):
        if isinstance(self.source, dict):
            return ("map", tuple(sorted(self.source.items())))
        return ("expr", self.source)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Selector) and self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __repr__(self) -> str:
        return f"Selector({self.source!r})"

    def __str__(self) -> str:
        if isinstance(self.source, dict):
            return ",".join(f"{k}={v}" for k, v in sorted(self.source.items())) or "all()"
        return self.source


@dataclass(frozen=True, order=True)
class PortRange:
    start: int
    end: int

    def __post_init__(self) -> None:
        if not (1 <= self.start <= self.end <= 65535):
            raise ValueError(f"invalid port range {self.start}-{self.end}")

    @classmethod
    def parse(cls, spec: int | str) -> "PortRange":
        if isinstance(spec, bool):
            raise ValueError(f"invalid port {spec!r}")
        if isinstance(spec, int):
            return cls(spec, spec)
        m = re.fullmatch(r"\s*(\d+)\s*(?:[-:]\s*(\d+)\s*)?", str(spec))
        if m is None:
            raise ValueError(f"invalid port spec {spec!r}")
        lo = int(m.group(1))
        hi = int(m.group(2)) if m.group(2) else lo
        return cls(lo, hi)

    def __contains__(self, port: int) -> bool:
        return self.start <= port <= self.end

    def dump(self) -> int | str:
        return self.start if self.start == self.end else f"{self.start}-{self.end}"


def parse_ports(specs: Iterable[int | str]) -> tuple[PortRange, ...]:
    return tuple(PortRange.parse(s) for s in specs)


def port_in(port: int, ranges: Iterable[PortRange]) -> bool:
    return any(port in r for r in ranges)


_HOST_PATTERN_RE = re.compile(r"(\*\.)?[A-Za-z0-9]([A-Za-z0-9-]*[A-Za-z0-9])?(\.[A-Za-z0-9]([A-Za-z0-9-]*[A-Za-z0-9])?)*")


def valid_host_pattern(pattern: str) -> bool:
    """Exact host or a single leading ``*.`` wildcard (IPv4 literals count as exact)."""
    return pattern == "*" or _HOST_PATTERN_RE.fullmatch(pattern) is not None


def host_matches(pattern: str, host: str | None) -> bool:
    if host is None:
        return False
    pattern = pattern.lower()
    host = host.lower()
    if pattern == "*":
        return True
    if pattern.startswith("*."):
        return host.endswith(pattern[1:]) and len(host) > len(pattern) - 1
    return host == pattern


def wildcard_match(pattern: str, value: str | None) -> bool:
    """Exact, ``*``, ``prefix*`` or ``*suffix`` matching of principals and namespaces."""
    if value is None:
        return False
    if pattern == "*":
        return True
    if pattern.endswith("*"):
        return value.startswith(pattern[:-1])
    if pattern.startswith("*"):
        return value.endswith(pattern[1:])
    return value == pattern


def path_matches(pattern: str, path: str | None) -> bool:
    """Exact path, or prefix when the pattern carries one trailing ``*``."""
    if path is None:
        return False
    if pattern.endswith("*"):
        return path.startswith(pattern[:-1])
    return path == pattern


def path_prefix_matches(prefix: str, path: str) -> bool:
    """Segment-aware prefix test used by gateway routes (``/api`` covers ``/api/x`` but not ``/apix``)."""
    if prefix in ("", "/"):
        return True
    prefix = prefix.rstrip("/")
    return path == prefix or path.startswith(prefix + "/")
