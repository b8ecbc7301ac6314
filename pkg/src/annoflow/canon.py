"""Canonical JSON rendering.

Replay fixtures and the determinism checks compare serialized structures
byte-for-byte, so everything that leaves the engine or the compiler goes
through one dump configuration: no whitespace, no ASCII escaping, insertion
order preserved.
"""

from __future__ import annotations

import json
from typing import Any


def canonical_json(data: Any) -> str:
    return json.dumps(data, ensure_ascii=False, separators=(",", ":"))


def pretty_json(data: Any) -> str:
    return json.dumps(data, ensure_ascii=False, indent=2)
