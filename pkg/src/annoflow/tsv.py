"""Tab-separated value escaping.

Fields may contain tabs, newlines and backslashes; on the wire they are
escaped as ``\\t``, ``\\n`` and ``\\\\`` so that one record is always one
LF-terminated line. Backslash escaping is not optional: without it the
round-trip import of an export would be ambiguous.
"""

from __future__ import annotations


class TsvEscapeError(ValueError):
    pass


def escape_field(value: str) -> str:
    return (value.replace("\\", "\\\\")
                 .replace("\t", "\\t")
                 .replace("\n", "\\n"))


def unescape_field(value: str) -> str:
    out: list[str] = []
    i = 0
    n = len(value)
    while i < n:
        ch = value[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        if i + 1 >= n:
            raise TsvEscapeError("dangling backslash")
        esc = value[i + 1]
        if esc == "t":
            out.append("\t")
        elif esc == "n":
            out.append("\n")
        elif esc == "\\":
            out.append("\\")
        else:
            raise TsvEscapeError(f"invalid escape \\{esc}")
        i += 2
    return "".join(out)


def render_row(fields: list[str]) -> str:
    return "\t".join(escape_field(f) for f in fields)
