"""Annotation protocol: parsing, static validation, compilation.

A protocol document is a single JSON object mapping state names to state
definitions::

    {
      "start": {"type": "loading", "transition": "s2"},
      "s2": {
        "type": "select",
        "question": "What is the sentiment of the comment?",
        "options": ["positive", "neutral", "negative"],
        "transition": {
          "positive": {"goto": "s3", "save": true},
          "neutral": {"goto": "s3", "save": true},
          "negative": {"goto": "end", "save": false}
        }
      },
      "s3": {"type": "read", "question": "Done. Continue.", "transition": "end"}
    }

``transition`` is either a plain target name (unconditional) or a map from
answer value to ``{goto, save?}`` (conditional; only single-valued answer
types -- select and boolean -- may branch). ``end`` and ``failure`` are
reserved targets that must not be defined as states; ``start`` must be
defined and must load an instance.

Parsing rejects structural problems (syntax, unknown fields, wrong field
types, duplicate or malformed state names) by raising
:class:`~annoflow.errors.ProtocolParseError`. Everything semantic --
undefined targets, branch coverage, missing per-type fields, reachability --
is reported by :func:`validate`, which never raises. :func:`compile_protocol`
refuses to build a machine while the report has errors.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Union

from . import apjson
from .apjson import Node, SourceSpan
from .canon import pretty_json
from .errors import ProtocolInvalidError, ProtocolParseError
from .machine import DEFAULT_EDGE, END, FAILURE, CompiledState, Edge, MachineDefinition


class StateType(str, Enum):
    LOADING = "loading"
    LOADING_FILE = "loadingFile"
    CALL_API = "callAPI"
    READ = "read"
    SELECT = "select"
    CHECKMARK = "checkmark"
    LABEL = "label"
    BOOLEAN = "boolean"
    CHOOSE_PAGE = "choosePage"
    BBOX = "bbox"
    BBOX_LABEL = "bboxLabel"


FUNCTIONAL_TYPES = frozenset({StateType.LOADING, StateType.LOADING_FILE, StateType.CALL_API})
ANNOTATION_TYPES = frozenset(StateType) - FUNCTIONAL_TYPES
# Per-answer routing is only defined for single-valued answers.
BRANCHABLE_TYPES = frozenset({StateType.SELECT, StateType.BOOLEAN})
# Types whose start-state role is to load the instance.
LOADER_TYPES = frozenset({StateType.LOADING, StateType.LOADING_FILE})

BOOLEAN_VALUES = ("yes", "no")

RESERVED_NAMES = frozenset({END, FAILURE})
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

_KNOWN_FIELDS = frozenset({
    "type", "transition", "question", "options", "labels", "save", "api_call",
})


@dataclass(frozen=True)
class Branch:
    target: str
    save: bool


@dataclass(frozen=True)
class Unconditional:
    target: str


@dataclass(frozen=True)
class Conditional:
    branches: Mapping[str, Branch]

    def __post_init__(self):
        object.__setattr__(self, "branches", dict(self.branches))


TransitionSpec = Union[Unconditional, Conditional]


@dataclass(frozen=True)
class StateDef:
    name: str
    state_type: StateType
    transition: TransitionSpec
    question: str | None = None
    options: tuple[str, ...] | None = None
    labels: tuple[str, ...] | None = None
    save: bool = False
    api_call: str | None = None
    span: SourceSpan = field(default=SourceSpan(0, 0), compare=False)

    def targets(self) -> list[str]:
        if isinstance(self.transition, Unconditional):
            return [self.transition.target]
        return [b.target for b in self.transition.branches.values()]


@dataclass(frozen=True)
class AnnotationProtocol:
    states: Mapping[str, StateDef]

    def __post_init__(self):
        object.__setattr__(self, "states", dict(self.states))

    def __iter__(self):
        return iter(self.states.values())


@dataclass(frozen=True)
class Finding:
    level: str  # "error" | "warning"
    code: str
    state: str
    message: str
    span: SourceSpan = field(default=SourceSpan(0, 0), compare=False)

    def render(self) -> str:
        return (f"{self.level.upper()} {self.code} {self.state} "
                f"{self.message} {self.span.line}:{self.span.col}")


@dataclass
class ValidationReport:
    errors: list[Finding] = field(default_factory=list)
    warnings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def render(self) -> str:
        """One finding per line: ``LEVEL code state message line:col``."""
        return "\n".join(f.render() for f in self.errors + self.warnings)

    def error_codes(self) -> set[tuple[str, str]]:
        return {(f.code, f.state) for f in self.errors}


# ---------------------------------------------------------------------------
# parsing


def parse_protocol(source_text: str) -> AnnotationProtocol:
    """Parse protocol source into a typed document.

    Raises ProtocolParseError for anything that prevents the document from
    being represented at all; use :func:`validate` for semantic findings.
    """
    try:
        root = apjson.read(source_text)
    except apjson.JsonReadError as exc:
        if exc.code == "duplicate-key" and len(exc.path) == 1:
            raise ProtocolParseError("duplicate-state", exc.message,
                                     exc.span.line, exc.span.col) from exc
        raise ProtocolParseError(exc.code, exc.message,
                                 exc.span.line, exc.span.col) from exc

    if not isinstance(root.value, dict):
        raise ProtocolParseError("not-an-object",
                                 "protocol document must be a JSON object",
                                 root.span.line, root.span.col)

    states: dict[str, StateDef] = {}
    for name, node in root.value.items():
        states[name] = _parse_state(name, node)
    return AnnotationProtocol(states=states)


def _fail(code: str, message: str, span: SourceSpan):
    raise ProtocolParseError(code, message, span.line, span.col)


def _parse_state(name: str, node: Node) -> StateDef:
    name_span = node.key_span or node.span
    if not _NAME_RE.match(name):
        _fail("bad-state-name",
              f"state name {name!r} must match [A-Za-z_][A-Za-z0-9_]*", name_span)
    if name in RESERVED_NAMES:
        _fail("reserved-state-name",
              f"{name!r} is reserved and must not be defined as a state", name_span)
    if not isinstance(node.value, dict):
        _fail("bad-state-def", f"state {name!r} must be a JSON object", node.span)

    fields = node.value
    for fname, fnode in fields.items():
        if fname not in _KNOWN_FIELDS:
            _fail("unknown-field", f"state {name!r} has unknown field {fname!r}",
                  fnode.key_span or fnode.span)

    if "type" not in fields:
        _fail("missing-type", f"state {name!r} has no 'type' field", name_span)
    type_node = fields["type"]
    if not isinstance(type_node.value, str):
        _fail("wrong-field-type", f"state {name!r}: 'type' must be a string",
              type_node.span)
    try:
        state_type = StateType(type_node.value)
    except ValueError:
        _fail("unknown-state-type",
              f"state {name!r} has unknown type {type_node.value!r}", type_node.span)

    question = _opt_str(name, fields, "question")
    api_call = _opt_str(name, fields, "api_call")
    options = _opt_str_list(name, fields, "options")
    labels = _opt_str_list(name, fields, "labels")
    save = _opt_bool(name, fields, "save", default=False)

    if "transition" not in fields:
        _fail("missing-transition", f"state {name!r} has no 'transition' field", name_span)
    transition = _parse_transition(name, fields["transition"], default_save=save)

    return StateDef(name=name, state_type=state_type, transition=transition,
                    question=question, options=options, labels=labels,
                    save=save, api_call=api_call, span=name_span)


def _parse_transition(state: str, node: Node, default_save: bool) -> TransitionSpec:
    if isinstance(node.value, str):
        return Unconditional(target=node.value)
    if not isinstance(node.value, dict):
        _fail("wrong-field-type",
              f"state {state!r}: 'transition' must be a target name or a branch map",
              node.span)
    branches: dict[str, Branch] = {}
    for value, branch_node in node.value.items():
        if not isinstance(branch_node.value, dict):
            _fail("wrong-field-type",
                  f"state {state!r}: branch {value!r} must be an object with 'goto'",
                  branch_node.span)
        for fname, fnode in branch_node.value.items():
            if fname not in ("goto", "save"):
                _fail("unknown-field",
                      f"state {state!r}: branch {value!r} has unknown field {fname!r}",
                      fnode.key_span or fnode.span)
        goto = branch_node.value.get("goto")
        if goto is None:
            _fail("missing-goto",
                  f"state {state!r}: branch {value!r} has no 'goto'", branch_node.span)
        if not isinstance(goto.value, str):
            _fail("wrong-field-type",
                  f"state {state!r}: branch {value!r}: 'goto' must be a string", goto.span)
        save_node = branch_node.value.get("save")
        save = default_save
        if save_node is not None:
            if not isinstance(save_node.value, bool):
                _fail("wrong-field-type",
                      f"state {state!r}: branch {value!r}: 'save' must be a boolean",
                      save_node.span)
            save = save_node.value
        branches[value] = Branch(target=goto.value, save=save)
    return Conditional(branches=branches)


def _opt_str(state: str, fields: Mapping[str, Node], fname: str) -> str | None:
    node = fields.get(fname)
    if node is None:
        return None
    if not isinstance(node.value, str):
        _fail("wrong-field-type", f"state {state!r}: {fname!r} must be a string", node.span)
    return node.value


def _opt_bool(state: str, fields: Mapping[str, Node], fname: str, default: bool) -> bool:
    node = fields.get(fname)
    if node is None:
        return default
    if not isinstance(node.value, bool):
        _fail("wrong-field-type", f"state {state!r}: {fname!r} must be a boolean", node.span)
    return node.value


def _opt_str_list(state: str, fields: Mapping[str, Node], fname: str) -> tuple[str, ...] | None:
    node = fields.get(fname)
    if node is None:
        return None
    if not isinstance(node.value, list) or any(
            not isinstance(item.value, str) for item in node.value):
        _fail("wrong-field-type",
              f"state {state!r}: {fname!r} must be a list of strings", node.span)
    return tuple(item.value for item in node.value)


# ---------------------------------------------------------------------------
# serialization


def serialize_protocol(protocol: AnnotationProtocol) -> str:
    """Render a protocol back to canonical source text.

    ``parse_protocol(serialize_protocol(p)) == p`` for every parseable
    protocol; save flags are always written out so branch defaults cannot
    drift.
    """
    doc: dict = {}
    for state in protocol:
        entry: dict = {"type": state.state_type.value}
        if state.question is not None:
            entry["question"] = state.question
        if state.options is not None:
            entry["options"] = list(state.options)
        if state.labels is not None:
            entry["labels"] = list(state.labels)
        if state.api_call is not None:
            entry["api_call"] = state.api_call
        entry["save"] = state.save
        if isinstance(state.transition, Unconditional):
            entry["transition"] = state.transition.target
        else:
            entry["transition"] = {
                value: {"goto": b.target, "save": b.save}
                for value, b in state.transition.branches.items()
            }
        doc[state.name] = entry
    return pretty_json(doc) + "\n"


# ---------------------------------------------------------------------------
# validation


def validate(protocol: AnnotationProtocol) -> ValidationReport:
    """Statically check a parsed protocol. Findings are returned, never raised."""
    report = ValidationReport()
    _check_start(protocol, report)
    for state in protocol:
        _check_fields(state, report)
        _check_transition(state, protocol, report)
    _check_reachability(protocol, report)
    return report


def _error(report: ValidationReport, code: str, state: str, message: str,
           span: SourceSpan) -> None:
    report.errors.append(Finding("error", code, state, message, span))


def _warn(report: ValidationReport, code: str, state: str, message: str,
          span: SourceSpan) -> None:
    report.warnings.append(Finding("warning", code, state, message, span))


def _check_start(protocol: AnnotationProtocol, report: ValidationReport) -> None:
    start = protocol.states.get("start")
    if start is None:
        _error(report, "missing-start", "start",
               "protocol defines no 'start' state", SourceSpan(1, 1))
    elif start.state_type not in LOADER_TYPES:
        _error(report, "start-not-functional", "start",
               "'start' must have type 'loading' or 'loadingFile'", start.span)


def _check_fields(state: StateDef, report: ValidationReport) -> None:
    name, span = state.name, state.span
    if state.state_type in ANNOTATION_TYPES and not state.question:
        _error(report, "missing-question", name,
               f"{state.state_type.value} state needs a non-empty 'question'", span)
    if state.state_type in (StateType.SELECT, StateType.CHECKMARK):
        if not state.options:
            _error(report, "missing-options", name,
                   f"{state.state_type.value} state needs a non-empty 'options' list", span)
        else:
            _check_duplicates(state.options, report, "duplicate-option", name, span)
    if state.state_type in (StateType.LABEL, StateType.BBOX_LABEL):
        if not state.labels:
            _error(report, "missing-labels", name,
                   f"{state.state_type.value} state needs a non-empty 'labels' list", span)
        else:
            _check_duplicates(state.labels, report, "duplicate-label", name, span)
    if state.state_type is StateType.CALL_API:
        if not state.api_call:
            _error(report, "missing-api-call", name,
                   "callAPI state needs a non-empty 'api_call' name", span)
        if state.question is not None:
            _error(report, "unexpected-question", name,
                   "callAPI states present nothing to the annotator", span)
    if state.save and state.state_type in FUNCTIONAL_TYPES:
        _warn(report, "save-on-functional", name,
              "functional states produce no answer; 'save' has no effect", span)


def _check_duplicates(values: Iterable[str], report: ValidationReport, code: str,
                      name: str, span: SourceSpan) -> None:
    seen = set()
    for v in values:
        if v in seen:
            _error(report, code, name, f"value {v!r} appears more than once", span)
        seen.add(v)


def _check_transition(state: StateDef, protocol: AnnotationProtocol,
                      report: ValidationReport) -> None:
    name, span = state.name, state.span
    defined = protocol.states
    for target in state.targets():
        if target not in defined and target not in RESERVED_NAMES:
            _error(report, "undefined-target", name,
                   f"transition targets undefined state {target!r}", span)
    if isinstance(state.transition, Unconditional):
        return

    if state.state_type not in BRANCHABLE_TYPES:
        _error(report, "non-branchable", name,
               f"{state.state_type.value} answers cannot drive conditional transitions",
               span)
        return

    keys = set(state.transition.branches)
    if state.state_type is StateType.SELECT:
        expected = set(state.options or ())
        kind = "option"
    else:
        expected = set(BOOLEAN_VALUES)
        kind = "answer"
    missing = sorted(expected - keys)
    extra = sorted(keys - expected)
    if missing:
        _error(report, "branch-missing", name,
               f"no branch for {kind} values: {', '.join(missing)}", span)
    if extra:
        _error(report, "branch-extra", name,
               f"branches for unknown {kind} values: {', '.join(extra)}", span)


def _adjacency(protocol: AnnotationProtocol) -> dict[str, set[str]]:
    """Edges over defined states plus the reserved terminals.

    Targets that are not defined anywhere are dropped; the undefined-target
    error already covers them and they cannot be traversed.
    """
    defined = set(protocol.states)
    graph: dict[str, set[str]] = {name: set() for name in defined}
    graph[END] = set()
    graph[FAILURE] = set()
    for state in protocol:
        for target in state.targets():
            if target in defined or target in RESERVED_NAMES:
                graph[state.name].add(target)
    return graph


def _check_reachability(protocol: AnnotationProtocol, report: ValidationReport) -> None:
    if "start" not in protocol.states:
        return
    graph = _adjacency(protocol)

    reachable = _bfs(graph, "start")
    reverse: dict[str, set[str]] = {name: set() for name in graph}
    for src, targets in graph.items():
        for dst in targets:
            reverse[dst].add(src)
    reaches_end = _bfs(reverse, END)

    for name, state in protocol.states.items():
        if name not in reachable:
            _warn(report, "unreachable", name,
                  "state is never reached from 'start'", state.span)
        elif name not in reaches_end:
            _error(report, "dead-end", name,
                   "no path from this state to 'end'; annotators would be stuck",
                   state.span)


def _bfs(graph: Mapping[str, set[str]], origin: str) -> set[str]:
    seen = {origin}
    frontier = [origin]
    while frontier:
        node = frontier.pop()
        for nxt in graph.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen


# ---------------------------------------------------------------------------
# compilation


def compile_protocol(protocol: AnnotationProtocol) -> MachineDefinition:
    """Compile a validated protocol into an executable machine.

    The reserved `end` and `failure` states are materialized; every state's
    outgoing edges are fully resolved. Raises ProtocolInvalidError when the
    validation report has errors.
    """
    report = validate(protocol)
    if not report.ok:
        raise ProtocolInvalidError(report)

    states: dict[str, CompiledState] = {}
    for state in protocol:
        if isinstance(state.transition, Unconditional):
            edges = {DEFAULT_EDGE: Edge(state.transition.target, state.save)}
        else:
            edges = {value: Edge(b.target, b.save)
                     for value, b in state.transition.branches.items()}
        states[state.name] = CompiledState(
            name=state.name,
            kind=state.state_type.value,
            question=state.question,
            options=state.options,
            labels=state.labels,
            api_call=state.api_call,
            edges=edges,
        )
    states[END] = CompiledState(name=END, kind=END)
    states[FAILURE] = CompiledState(name=FAILURE, kind=FAILURE)
    return MachineDefinition(states=states, entry="start")


def compile_source(source_text: str) -> MachineDefinition:
    """Parse, validate and compile in one step."""
    return compile_protocol(parse_protocol(source_text))
