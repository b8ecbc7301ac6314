"""Annotation platform driven by a deterministic state machine.

Protocols written in a small JSON-style language compile to an executable
machine; sessions run annotators through it, a datastore assigns instances
and collects bundles, and an HTTP layer plus CLI front the whole thing.
"""

from .engine import (
    Ack,
    AnnotationBundle,
    Bool,
    Box,
    Boxes,
    Instance,
    Page,
    SavedAnswer,
    Selection,
    Selections,
    SessionState,
    Span,
    Spans,
    Status,
    answer_from_dict,
    answer_to_dict,
    current_prompt,
    finish_bundle,
    replay_trace,
    run_api_state,
    start_session,
    submit_answer,
)
from .errors import (
    AnnoflowError,
    EngineError,
    ProtocolInvalidError,
    ProtocolParseError,
    StoreError,
)
from .machine import CompiledState, Edge, MachineDefinition
from .protocol import (
    AnnotationProtocol,
    StateDef,
    StateType,
    ValidationReport,
    compile_protocol,
    compile_source,
    parse_protocol,
    serialize_protocol,
    validate,
)
from .registry import ApiRegistry

__version__ = "0.1.0"

__all__ = [
    "Ack", "AnnotationBundle", "AnnotationProtocol", "AnnoflowError",
    "ApiRegistry", "Bool", "Box", "Boxes", "CompiledState", "Edge",
    "EngineError", "Instance", "MachineDefinition", "Page",
    "ProtocolInvalidError", "ProtocolParseError", "SavedAnswer", "Selection",
    "Selections", "SessionState", "Span", "Spans", "StateDef", "StateType",
    "Status", "StoreError", "ValidationReport", "answer_from_dict",
    "answer_to_dict", "compile_protocol", "compile_source", "current_prompt",
    "finish_bundle", "parse_protocol", "replay_trace", "run_api_state",
    "serialize_protocol", "start_session", "submit_answer", "validate",
]
