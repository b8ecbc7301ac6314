"""Executable machine produced by compiling a protocol.

A machine is immutable and shareable: sessions hold a reference and never
mutate it. Serialization is canonical so that compiling the same source
twice yields byte-identical output, and so a client can execute the exact
structure the server replays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping

from .canon import canonical_json

# Edge key for transitions taken regardless of the answer value.
DEFAULT_EDGE = "*"

# Terminal pseudo-states materialized by the compiler.
END = "end"
FAILURE = "failure"

FUNCTIONAL_KINDS = frozenset({"loading", "loadingFile", "callAPI"})
ANNOTATION_KINDS = frozenset({
    "read", "select", "checkmark", "label", "boolean", "choosePage",
    "bbox", "bboxLabel",
})
TERMINAL_KINDS = frozenset({END, FAILURE})


@dataclass(frozen=True)
class Edge:
    target: str
    save: bool = False


@dataclass(frozen=True)
class CompiledState:
    name: str
    kind: str
    question: str | None = None
    options: tuple[str, ...] | None = None
    labels: tuple[str, ...] | None = None
    api_call: str | None = None
    edges: Mapping[str, Edge] = field(default_factory=dict)

    @property
    def is_terminal(self) -> bool:
        return self.kind in TERMINAL_KINDS

    @property
    def is_annotation(self) -> bool:
        return self.kind in ANNOTATION_KINDS

    def edge_for(self, answer_value: str | None) -> Edge:
        """Resolve the single outgoing edge for an answer value.

        States compiled from an unconditional transition carry one
        DEFAULT_EDGE; conditional ones carry exactly one edge per
        admissible value, so resolution is always unambiguous.
        """
        if DEFAULT_EDGE in self.edges:
            return self.edges[DEFAULT_EDGE]
        if answer_value is not None and answer_value in self.edges:
            return self.edges[answer_value]
        raise KeyError(f"state {self.name!r} has no edge for {answer_value!r}")


@dataclass(frozen=True)
class MachineDefinition:
    """States in protocol definition order, with `end` and `failure` appended."""

    states: Mapping[str, CompiledState]
    entry: str = "start"

    def __post_init__(self):
        object.__setattr__(self, "states", MappingProxyType(dict(self.states)))
        for state in self.states.values():
            for edge in state.edges.values():
                if edge.target not in self.states:
                    raise ValueError(
                        f"edge of {state.name!r} targets unknown state {edge.target!r}")
        if self.entry not in self.states:
            raise ValueError(f"entry state {self.entry!r} is not defined")

    def state_order(self) -> list[str]:
        return list(self.states)

    def to_dict(self) -> dict[str, Any]:
        states: dict[str, Any] = {}
        for name, st in self.states.items():
            states[name] = {
                "kind": st.kind,
                "question": st.question,
                "options": list(st.options) if st.options is not None else None,
                "labels": list(st.labels) if st.labels is not None else None,
                "api_call": st.api_call,
                "edges": {
                    key: {"target": edge.target, "save": edge.save}
                    for key, edge in st.edges.items()
                },
            }
        return {"entry": self.entry, "states": states}

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MachineDefinition":
        states = {}
        for name, raw in data["states"].items():
            states[name] = CompiledState(
                name=name,
                kind=raw["kind"],
                question=raw.get("question"),
                options=tuple(raw["options"]) if raw.get("options") is not None else None,
                labels=tuple(raw["labels"]) if raw.get("labels") is not None else None,
                api_call=raw.get("api_call"),
                edges={
                    key: Edge(target=e["target"], save=bool(e.get("save", False)))
                    for key, e in raw["edges"].items()
                },
            )
        return cls(states=states, entry=data.get("entry", "start"))
