"""JSON reader that keeps source positions and rejects duplicate keys.

The stdlib ``json`` module silently merges duplicate keys and throws away
positions, but protocol diagnostics need a ``line:col`` for every finding
and strict mode must reject a state that is defined twice. This reader
parses the same grammar as strict JSON and returns a tree of ``Node``
objects, each annotated with where it starts in the source.
"""

from __future__ import annotations

import re
from bisect import bisect_right
from dataclasses import dataclass
from typing import Any


@dataclass(frozen=True)
class SourceSpan:
    """1-based position of the first character of a construct."""

    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


@dataclass(frozen=True)
class Node:
    """A parsed JSON value plus its position.

    ``value`` is one of: dict[str, Node], list[Node], str, int, float,
    bool, None. Object members also record where their key sits
    (``key_span``), which is the natural anchor for per-state findings.
    """

    value: Any
    span: SourceSpan
    key_span: SourceSpan | None = None


class JsonReadError(Exception):
    """Malformed document, or a duplicate key in strict mode."""

    def __init__(self, message: str, span: SourceSpan, code: str = "syntax-error",
                 path: tuple[str, ...] = ()):
        super().__init__(f"{message} at {span}")
        self.message = message
        self.span = span
        self.code = code
        self.path = path


_NUMBER_RE = re.compile(r"-?(?:0|[1-9][0-9]*)(\.[0-9]+)?([eE][-+]?[0-9]+)?")
_ESCAPES = {'"': '"', "\\": "\\", "/": "/", "b": "\b", "f": "\f",
            "n": "\n", "r": "\r", "t": "\t"}
_WS = " \t\n\r"


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.n = len(text)
        self.i = 0
        self._line_starts = [0]
        for m in re.finditer("\n", text):
            self._line_starts.append(m.end())

    def span_at(self, idx: int) -> SourceSpan:
        row = bisect_right(self._line_starts, idx) - 1
        return SourceSpan(row + 1, idx - self._line_starts[row] + 1)

    def fail(self, message: str, idx: int | None = None, code: str = "syntax-error",
             path: tuple[str, ...] = ()):
        raise JsonReadError(message, self.span_at(self.i if idx is None else idx),
                            code=code, path=path)

    def skip_ws(self) -> None:
        while self.i < self.n and self.text[self.i] in _WS:
            self.i += 1

    def peek(self) -> str:
        if self.i >= self.n:
            self.fail("unexpected end of document")
        return self.text[self.i]

    def expect(self, ch: str) -> None:
        if self.i >= self.n or self.text[self.i] != ch:
            self.fail(f"expected {ch!r}")
        self.i += 1

    def parse_value(self, path: tuple[str, ...]) -> Node:
        self.skip_ws()
        start = self.i
        ch = self.peek()
        if ch == "{":
            return self.parse_object(path)
        if ch == "[":
            return self.parse_array(path)
        if ch == '"':
            return Node(self.parse_string(), self.span_at(start))
        if ch in "-0123456789":
            return Node(self.parse_number(), self.span_at(start))
        for literal, value in (("true", True), ("false", False), ("null", None)):
            if self.text.startswith(literal, self.i):
                self.i += len(literal)
                return Node(value, self.span_at(start))
        self.fail(f"unexpected character {ch!r}")

    def parse_object(self, path: tuple[str, ...]) -> Node:
        start = self.i
        self.expect("{")
        members: dict[str, Node] = {}
        self.skip_ws()
        if self.peek() == "}":
            self.i += 1
            return Node(members, self.span_at(start))
        while True:
            self.skip_ws()
            key_start = self.i
            if self.peek() != '"':
                self.fail("expected string key")
            key = self.parse_string()
            key_span = self.span_at(key_start)
            if key in members:
                raise JsonReadError(f"duplicate key {key!r}", key_span,
                                    code="duplicate-key", path=path + (key,))
            self.skip_ws()
            self.expect(":")
            value = self.parse_value(path + (key,))
            members[key] = Node(value.value, value.span, key_span=key_span)
            self.skip_ws()
            ch = self.peek()
            if ch == ",":
                self.i += 1
                continue
            if ch == "}":
                self.i += 1
                return Node(members, self.span_at(start))
            self.fail("expected ',' or '}'")

    def parse_array(self, path: tuple[str, ...]) -> Node:
        start = self.i
        self.expect("[")
        items: list[Node] = []
        self.skip_ws()
        if self.peek() == "]":
            self.i += 1
            return Node(items, self.span_at(start))
        while True:
            items.append(self.parse_value(path + (str(len(items)),)))
            self.skip_ws()
            ch = self.peek()
            if ch == ",":
                self.i += 1
                continue
            if ch == "]":
                self.i += 1
                return Node(items, self.span_at(start))
            self.fail("expected ',' or ']'")

    def parse_string(self) -> str:
        self.expect('"')
        out: list[str] = []
        while True:
            if self.i >= self.n:
                self.fail("unterminated string")
            ch = self.text[self.i]
            if ch == '"':
                self.i += 1
                return "".join(out)
            if ch == "\\":
                self.i += 1
                if self.i >= self.n:
                    self.fail("unterminated escape")
                esc = self.text[self.i]
                if esc in _ESCAPES:
                    out.append(_ESCAPES[esc])
                    self.i += 1
                elif esc == "u":
                    out.append(self._parse_unicode_escape())
                else:
                    self.fail(f"invalid escape \\{esc}", idx=self.i - 1)
            elif ord(ch) < 0x20:
                self.fail("unescaped control character in string")
            else:
                out.append(ch)
                self.i += 1

    def _parse_unicode_escape(self) -> str:
        code = self._read_hex4()
        if 0xD800 <= code <= 0xDBFF and self.text.startswith("\\u", self.i):
            save = self.i
            self.i += 2
            low = self._read_hex4()
            if 0xDC00 <= low <= 0xDFFF:
                return chr(0x10000 + ((code - 0xD800) << 10) + (low - 0xDC00))
            self.i = save
        return chr(code)

    def _read_hex4(self) -> int:
        # caller sits on the 'u'
        self.i += 1
        digits = self.text[self.i:self.i + 4]
        if len(digits) < 4 or any(c not in "0123456789abcdefABCDEF" for c in digits):
            self.fail("invalid \\u escape", idx=self.i - 2)
        self.i += 4
        return int(digits, 16)

    def parse_number(self) -> int | float:
        m = _NUMBER_RE.match(self.text, self.i)
        if m is None:
            self.fail("invalid number")
        self.i = m.end()
        if m.group(1) is None and m.group(2) is None:
            return int(m.group(0))
        return float(m.group(0))


def read(text: str) -> Node:
    """Parse ``text`` as strict JSON with positions; duplicate keys are errors."""
    reader = _Reader(text)
    node = reader.parse_value(())
    reader.skip_ws()
    if reader.i != reader.n:
        reader.fail("trailing characters after document")
    return node


def unwrap(node: Node) -> Any:
    """Strip position annotations, returning plain Python data."""
    if isinstance(node.value, dict):
        return {k: unwrap(v) for k, v in node.value.items()}
    if isinstance(node.value, list):
        return [unwrap(v) for v in node.value]
    return node.value
