"""Registry of named server-side functions reachable from machine runs.

Handlers take ``(instance_payload, answers_snapshot)`` and return an opaque
JSON-serializable payload. They may consult models or other read-only
resources but must never mutate annotation data; the engine and the HTTP
layer treat them as pure.
"""

from __future__ import annotations

from typing import Any, Callable, Iterator

Handler = Callable[[dict | None, list[dict]], Any]


class ApiRegistry:
    def __init__(self):
        self._handlers: dict[str, Handler] = {}

    def register(self, name: str, handler: Handler | None = None):
        """Register a handler, either directly or as a decorator."""
        if handler is not None:
            self._add(name, handler)
            return handler

        def decorator(fn: Handler) -> Handler:
            self._add(name, fn)
            return fn

        return decorator

    def _add(self, name: str, handler: Handler) -> None:
        if name in self._handlers:
            raise ValueError(f"API function {name!r} is already registered")
        self._handlers[name] = handler

    def get(self, name: str) -> Handler | None:
        return self._handlers.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._handlers

    def __iter__(self) -> Iterator[str]:
        return iter(self._handlers)
