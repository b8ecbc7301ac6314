"""Session execution: one annotator's pass through a machine for one instance.

A session is single-writer; callers serialize operations on it. Every
mutating operation validates fully before touching the session, so a raised
EngineError never leaves a half-applied step. Answers are buffered in the
session and only become a bundle at `end`; sessions that never get there
persist nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Sequence, Union

from .canon import canonical_json
from .errors import EngineError
from .machine import DEFAULT_EDGE, END, FAILURE, MachineDefinition


class Status(str, Enum):
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


# ---------------------------------------------------------------------------
# answers


@dataclass(frozen=True)
class Ack:
    """Acknowledgement for `read` states."""


@dataclass(frozen=True)
class Selection:
    value: str


@dataclass(frozen=True)
class Selections:
    values: frozenset[str]

    def __init__(self, values):
        object.__setattr__(self, "values", frozenset(values))


@dataclass(frozen=True)
class Bool:
    value: str  # "yes" | "no"


@dataclass(frozen=True)
class Span:
    start: int  # code-point offset into content, inclusive
    end: int    # exclusive
    label: str


@dataclass(frozen=True)
class Spans:
    spans: tuple[Span, ...]

    def __init__(self, spans):
        object.__setattr__(self, "spans", tuple(spans))


@dataclass(frozen=True)
class Page:
    index: int


@dataclass(frozen=True)
class Box:
    x: float  # fractional top-left corner
    y: float
    w: float  # fractional extents, (0, 1]
    h: float
    label: str | None = None


@dataclass(frozen=True)
class Boxes:
    boxes: tuple[Box, ...]

    def __init__(self, boxes):
        object.__setattr__(self, "boxes", tuple(boxes))


Answer = Union[Ack, Selection, Selections, Bool, Spans, Page, Boxes]

_ANSWER_KIND = {
    "read": Ack,
    "select": Selection,
    "checkmark": Selections,
    "boolean": Bool,
    "label": Spans,
    "choosePage": Page,
    "bbox": Boxes,
    "bboxLabel": Boxes,
}


def answer_to_dict(answer: Answer) -> dict[str, Any]:
    """Stable wire form; selections are sorted, span/box order is preserved."""
    if isinstance(answer, Ack):
        return {"type": "ack"}
    if isinstance(answer, Selection):
        return {"type": "selection", "value": answer.value}
    if isinstance(answer, Selections):
        return {"type": "selections", "values": sorted(answer.values)}
    if isinstance(answer, Bool):
        return {"type": "bool", "value": answer.value}
    if isinstance(answer, Spans):
        return {"type": "spans", "spans": [
            {"start": s.start, "end": s.end, "label": s.label} for s in answer.spans]}
    if isinstance(answer, Page):
        return {"type": "page", "index": answer.index}
    if isinstance(answer, Boxes):
        boxes = []
        for b in answer.boxes:
            box: dict[str, Any] = {"x": b.x, "y": b.y, "w": b.w, "h": b.h}
            if b.label is not None:
                box["label"] = b.label
            boxes.append(box)
        return {"type": "boxes", "boxes": boxes}
    raise TypeError(f"not an answer: {answer!r}")


def answer_from_dict(data: Any) -> Answer:
    if not isinstance(data, Mapping) or "type" not in data:
        raise EngineError("bad-answer", "answer must be an object with a 'type' field")
    try:
        kind = data["type"]
        if kind == "ack":
            return Ack()
        if kind == "selection":
            return Selection(value=_req_str(data, "value"))
        if kind == "selections":
            values = data["values"]
            if not isinstance(values, list) or any(not isinstance(v, str) for v in values):
                raise EngineError("bad-answer", "'values' must be a list of strings")
            return Selections(values)
        if kind == "bool":
            return Bool(value=_req_str(data, "value"))
        if kind == "spans":
            return Spans(Span(start=int(s["start"]), end=int(s["end"]),
                              label=str(s["label"])) for s in data["spans"])
        if kind == "page":
            return Page(index=int(data["index"]))
        if kind == "boxes":
            return Boxes(Box(x=float(b["x"]), y=float(b["y"]), w=float(b["w"]),
                             h=float(b["h"]), label=b.get("label"))
                         for b in data["boxes"])
    except EngineError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise EngineError("bad-answer", f"malformed answer payload: {exc}") from exc
    raise EngineError("bad-answer", f"unknown answer type {data['type']!r}")


def _req_str(data: Mapping, key: str) -> str:
    value = data[key]
    if not isinstance(value, str):
        raise EngineError("bad-answer", f"{key!r} must be a string")
    return value


# ---------------------------------------------------------------------------
# instances and sessions


@dataclass(frozen=True)
class Instance:
    """The piece of data a session annotates.

    ``content`` is the text for kind="text", or an ordered tuple of
    page-image references for kind="file".
    """

    id: int
    kind: str
    content: str | tuple[str, ...]
    context: str | None = None
    meta: str = "{}"

    def payload(self, include_meta: bool = True) -> dict[str, Any]:
        data: dict[str, Any] = {
            "id": self.id,
            "kind": self.kind,
            "content": list(self.content) if self.kind == "file" else self.content,
            "context": self.context,
        }
        if include_meta:
            data["meta"] = self.meta
        return data


def instance_from_dict(data: Mapping[str, Any]) -> Instance:
    content = data.get("content")
    if isinstance(content, list):
        content = tuple(content)
    return Instance(id=int(data.get("id", 0)), kind=data.get("kind", "text"),
                    content=content, context=data.get("context"),
                    meta=data.get("meta", "{}"))


@dataclass(frozen=True)
class SavedAnswer:
    state: str
    visit: int  # ordinal of the state's visit that produced this answer, >= 1
    answer: Answer

    def to_dict(self) -> dict[str, Any]:
        return {"state": self.state, "visit": self.visit,
                "answer": answer_to_dict(self.answer)}


@dataclass(frozen=True)
class AnnotationBundle:
    instance_id: int
    answers: tuple[SavedAnswer, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"instance_id": self.instance_id,
                "answers": [a.to_dict() for a in self.answers]}

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


@dataclass(frozen=True)
class Prompt:
    state_name: str
    state_type: str
    question: str | None
    options: tuple[str, ...] | None = None
    labels: tuple[str, ...] | None = None
    prefill: Any = None


@dataclass
class SessionState:
    machine: MachineDefinition
    instance: Instance | None
    current: str
    status: Status = Status.RUNNING
    buffer: list[SavedAnswer] = field(default_factory=list)
    visit_counts: dict[str, int] = field(default_factory=dict)
    api_context: dict[str, Any] = field(default_factory=dict)
    path: list[str] = field(default_factory=list)
    api_pending: bool = False
    diagnostic: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "instance_id": self.instance.id if self.instance else None,
            "current": self.current,
            "status": self.status.value,
            "buffer": [a.to_dict() for a in self.buffer],
            "visits": {k: self.visit_counts[k] for k in sorted(self.visit_counts)},
            "api_context": {k: self.api_context[k] for k in sorted(self.api_context)},
            "path": list(self.path),
            "diagnostic": self.diagnostic,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


# ---------------------------------------------------------------------------
# operations


def start_session(machine: MachineDefinition, instance: Instance | None) -> SessionState:
    """Load an instance and advance past the entry state.

    A missing or malformed instance payload sends the session straight to
    `failure`; there is no exception, the dead state is the contract.
    """
    session = SessionState(machine=machine, instance=instance, current=machine.entry,
                           path=[machine.entry])
    problem = _load_problem(instance)
    if problem is not None:
        return _fail(session, f"instance load failed: {problem}")
    entry = machine.states[machine.entry]
    # Entry edges are unconditional; a save flag there has nothing to save.
    _enter(session, entry.edge_for(None).target)
    return session


def _load_problem(instance: Instance | None) -> str | None:
    if instance is None:
        return "no instance payload"
    if instance.kind == "text":
        if not isinstance(instance.content, str):
            return "text instance without text content"
        return None
    if instance.kind == "file":
        pages = instance.content
        if not isinstance(pages, tuple) or not pages or any(
                not isinstance(p, str) for p in pages):
            return "file instance without page references"
        return None
    return f"unknown instance kind {instance.kind!r}"


def _fail(session: SessionState, diagnostic: str) -> SessionState:
    session.diagnostic = diagnostic
    _enter(session, FAILURE)
    return session


def _enter(session: SessionState, target: str) -> None:
    session.current = target
    session.path.append(target)
    session.visit_counts[target] = session.visit_counts.get(target, 0) + 1
    state = session.machine.states[target]
    if state.kind == END:
        session.status = Status.COMPLETED
    elif state.kind == FAILURE:
        session.status = Status.FAILED
    session.api_pending = state.is_annotation and state.api_call is not None


def _require_running(session: SessionState) -> None:
    if session.status is not Status.RUNNING:
        raise EngineError("session-not-running",
                          f"session is {session.status.value}")


def current_prompt(session: SessionState) -> Prompt:
    _require_running(session)
    state = session.machine.states[session.current]
    return Prompt(state_name=state.name, state_type=state.kind,
                  question=state.question, options=state.options,
                  labels=state.labels, prefill=session.api_context.get(state.name))


def submit_answer(session: SessionState, answer: Answer) -> SessionState:
    """Apply one answer: validate, save if the taken edge says so, move on.

    Raised errors never advance the session or touch the buffer.
    """
    _require_running(session)
    state = session.machine.states[session.current]
    expected = _ANSWER_KIND.get(state.kind)
    if expected is None:
        raise EngineError("answer-type-mismatch",
                          f"state {state.name!r} ({state.kind}) accepts no answer")
    if type(answer) is not expected:
        raise EngineError("answer-type-mismatch",
                          f"state {state.name!r} ({state.kind}) expects "
                          f"{expected.__name__}, got {type(answer).__name__}")
    _check_answer(session, state, answer)

    value = None
    if isinstance(answer, Selection):
        value = answer.value
    elif isinstance(answer, Bool):
        value = answer.value
    edge = state.edge_for(value)

    if edge.save:
        session.buffer.append(SavedAnswer(state=state.name,
                                          visit=session.visit_counts[state.name],
                                          answer=answer))
    _enter(session, edge.target)
    return session


def _check_answer(session: SessionState, state, answer: Answer) -> None:
    options = set(state.options or ())
    labels = set(state.labels or ())
    if isinstance(answer, Selection):
        if answer.value not in options:
            raise EngineError("invalid-option",
                              f"{answer.value!r} is not an option of {state.name!r}")
    elif isinstance(answer, Selections):
        for v in sorted(answer.values):
            if v not in options:
                raise EngineError("invalid-option",
                                  f"{v!r} is not an option of {state.name!r}")
    elif isinstance(answer, Bool):
        if answer.value not in ("yes", "no"):
            raise EngineError("invalid-option",
                              f"boolean answer must be 'yes' or 'no', got {answer.value!r}")
    elif isinstance(answer, Spans):
        content = session.instance.content if session.instance else None
        if not isinstance(content, str):
            raise EngineError("invalid-span", "instance has no text content to label")
        for s in answer.spans:
            if not (0 <= s.start < s.end <= len(content)):
                raise EngineError("invalid-span",
                                  f"span [{s.start}, {s.end}) outside content "
                                  f"of length {len(content)}")
            if s.label not in labels:
                raise EngineError("invalid-span",
                                  f"{s.label!r} is not a label of {state.name!r}")
    elif isinstance(answer, Page):
        if answer.index < 0:
            raise EngineError("invalid-page", "page index must be >= 0")
        if session.instance is not None and session.instance.kind == "file":
            npages = len(session.instance.content)
            if answer.index >= npages:
                raise EngineError("invalid-page",
                                  f"page {answer.index} out of range (instance has "
                                  f"{npages} pages)")
    elif isinstance(answer, Boxes):
        need_label = state.kind == "bboxLabel"
        for b in answer.boxes:
            if not (0 <= b.x and 0 <= b.y and 0 < b.w <= 1 and 0 < b.h <= 1
                    and b.x + b.w <= 1 and b.y + b.h <= 1):
                raise EngineError("invalid-box",
                                  f"box ({b.x}, {b.y}, {b.w}, {b.h}) not within "
                                  "the unit square")
            if need_label:
                if b.label is None:
                    raise EngineError("invalid-box",
                                      f"{state.name!r} requires a label on every box")
                if b.label not in labels:
                    raise EngineError("invalid-box",
                                      f"{b.label!r} is not a label of {state.name!r}")


def run_api_state(session: SessionState, registry) -> SessionState:
    """Invoke the state's server function.

    For a callAPI state the payload is stored for the successor and the
    session advances. For an annotation state carrying an `api_call` option
    the payload prefills the state itself and the session stays put, waiting
    for the answer. A missing or crashing function lands the session in
    `failure`.
    """
    _require_running(session)
    state = session.machine.states[session.current]
    if not state.api_call:
        raise EngineError("no-api-call",
                          f"state {state.name!r} carries no 'api_call'")
    handler = registry.get(state.api_call) if registry is not None else None
    if handler is None:
        return _fail(session, f"unknown API function {state.api_call!r}")
    instance = session.instance.payload() if session.instance else None
    snapshot = [a.to_dict() for a in session.buffer]
    try:
        payload = handler(instance, snapshot)
    except Exception as exc:  # noqa: BLE001 - plugin code is untrusted
        return _fail(session, f"API function {state.api_call!r} failed: {exc}")

    if state.kind == "callAPI":
        successor = state.edge_for(None).target
        session.api_context[successor] = payload
        _enter(session, successor)
    else:
        session.api_context[state.name] = payload
        session.api_pending = False
    return session


def finish_bundle(session: SessionState) -> AnnotationBundle:
    if session.status is not Status.COMPLETED:
        raise EngineError("session-not-completed",
                          f"session is {session.status.value}, not completed")
    return AnnotationBundle(instance_id=session.instance.id,
                            answers=tuple(session.buffer))


# ---------------------------------------------------------------------------
# trace replay


Trace = Sequence[tuple[str, Answer]]


def trace_from_dicts(items: Sequence[Mapping[str, Any]]) -> list[tuple[str, Answer]]:
    trace = []
    for item in items:
        if not isinstance(item, Mapping) or "state" not in item or "answer" not in item:
            raise EngineError("bad-trace",
                              "each trace step needs 'state' and 'answer' fields")
        trace.append((str(item["state"]), answer_from_dict(item["answer"])))
    return trace


def replay_trace(machine: MachineDefinition, instance: Instance | None,
                 trace: Trace, registry=None) -> SessionState:
    """Re-execute an answer trace from a fresh session.

    callAPI states and pending prefill calls run automatically against
    ``registry``; annotation states consume trace steps in order. The state
    name recorded with each answer must match the state the machine is
    actually in, so a client that drifted from the server's machine is
    caught instead of silently reinterpreted.
    """
    session = start_session(machine, instance)
    consumed = 0
    while session.status is Status.RUNNING:
        state = machine.states[session.current]
        if state.kind == "callAPI" or session.api_pending:
            run_api_state(session, registry)
            continue
        if consumed == len(trace):
            raise EngineError("incomplete-trace",
                              f"trace ends while session is at {session.current!r}")
        name, answer = trace[consumed]
        consumed += 1
        if name != session.current:
            raise EngineError("trace-state-mismatch",
                              f"trace step {consumed} is for {name!r} but the "
                              f"session is at {session.current!r}")
        submit_answer(session, answer)
    if session.status is Status.COMPLETED and consumed != len(trace):
        raise EngineError("trace-overrun",
                          f"{len(trace) - consumed} trace steps left after "
                          "the session completed")
    return session
