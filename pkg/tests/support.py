"""Shared test helpers: fixture paths, generators, independent oracles.

The oracles here deliberately avoid the code paths they check. The graph
oracle works on raw ``json.loads`` output, the step simulator works on the
machine's wire dict, and the TSV checker re-implements the row rules from
scratch.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from annoflow.engine import (
    Ack,
    Bool,
    Box,
    Boxes,
    Page,
    Selection,
    Selections,
    Span,
    Spans,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


# ---------------------------------------------------------------------------
# independent reachability oracle (raw JSON, stdlib parsing, plain BFS)


def oracle_graph_findings(source_text: str) -> tuple[set[str], set[str]]:
    """(unreachable states, dead-end states) by brute-force graph search."""
    doc = json.loads(source_text)
    defined = set(doc)

    def targets(state: dict) -> list[str]:
        tr = state["transition"]
        if isinstance(tr, str):
            hops = [tr]
        else:
            hops = [branch["goto"] for branch in tr.values()]
        return [t for t in hops if t in defined or t in ("end", "failure")]

    forward: dict[str, list[str]] = {name: targets(st) for name, st in doc.items()}
    forward["end"] = []
    forward["failure"] = []

    def bfs(adj: dict[str, list[str]], origin: str) -> set[str]:
        seen, queue = {origin}, [origin]
        while queue:
            node = queue.pop()
            for nxt in adj[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return seen

    reachable = bfs(forward, "start")
    backward: dict[str, list[str]] = {name: [] for name in forward}
    for src, dsts in forward.items():
        for dst in dsts:
            backward[dst].append(src)
    reaches_end = bfs(backward, "end")

    unreachable = {name for name in defined if name not in reachable}
    dead_end = {name for name in defined
                if name in reachable and name not in reaches_end}
    return unreachable, dead_end


# ---------------------------------------------------------------------------
# random protocol generators


def random_reachability_protocol(rng: random.Random, max_states: int = 12) -> str:
    """A structurally well-formed protocol with arbitrary wiring.

    Targets are chosen freely among all states plus end/failure, so
    unreachable and dead-end states occur often. Field-level requirements
    are satisfied; only the graph shape varies.
    """
    n = rng.randint(1, max_states - 1)
    names = [f"s{i}" for i in range(1, n + 1)]
    all_targets = names + ["end", "failure"]
    doc: dict[str, dict] = {
        "start": {"type": "loading", "transition": rng.choice(all_targets)}
    }
    for name in names:
        kind = rng.choice(["read", "boolean", "select"])
        if kind == "read":
            doc[name] = {
                "type": "read",
                "question": f"Question for {name}.",
                "transition": rng.choice(all_targets),
            }
        elif kind == "boolean":
            doc[name] = {
                "type": "boolean",
                "question": f"Yes or no for {name}?",
                "transition": {
                    "yes": {"goto": rng.choice(all_targets), "save": rng.random() < 0.5},
                    "no": {"goto": rng.choice(all_targets), "save": rng.random() < 0.5},
                },
            }
        else:
            options = [f"opt{j}" for j in range(rng.randint(2, 4))]
            doc[name] = {
                "type": "select",
                "question": f"Pick one for {name}.",
                "options": options,
                "transition": {
                    opt: {"goto": rng.choice(all_targets), "save": rng.random() < 0.5}
                    for opt in options
                },
            }
    return json.dumps(doc, indent=2)


def random_valid_protocol(rng: random.Random, max_states: int = 8) -> str:
    """A protocol guaranteed to compile: every state keeps a forward route.

    Back-edges (loops) are allowed as long as at least one branch per state
    moves forward or ends, which rules out dead ends by construction.
    """
    n = rng.randint(1, max_states - 2)
    names = [f"s{i}" for i in range(1, n + 1)]

    def forward_target(i: int) -> str:
        choices = names[i + 1:] + ["end"]
        return rng.choice(choices)

    def any_target(i: int) -> str:
        # Forward-biased; may loop back to an earlier annotation state.
        if i > 0 and rng.random() < 0.3:
            return rng.choice(names[:i + 1])
        return forward_target(i)

    doc: dict[str, dict] = {"start": {"type": "loading", "transition": names[0] if names else "end"}}
    for i, name in enumerate(names):
        kind = rng.choice(["read", "boolean", "select", "checkmark"])
        save = rng.random() < 0.6
        if kind == "read":
            doc[name] = {"type": "read", "question": f"Read step {name}.",
                         "save": save, "transition": forward_target(i)}
        elif kind == "checkmark":
            options = [f"c{j}" for j in range(2)]
            doc[name] = {"type": "checkmark", "question": f"Check all for {name}.",
                         "options": options, "save": save,
                         "transition": forward_target(i)}
        elif kind == "boolean":
            doc[name] = {
                "type": "boolean", "question": f"Yes or no for {name}?",
                "transition": {
                    "yes": {"goto": forward_target(i), "save": save},
                    "no": {"goto": any_target(i), "save": rng.random() < 0.5},
                },
            }
        else:
            options = [f"opt{j}" for j in range(rng.randint(2, 3))]
            branches = {options[0]: {"goto": forward_target(i), "save": save}}
            for opt in options[1:]:
                branches[opt] = {"goto": any_target(i), "save": rng.random() < 0.5}
            doc[name] = {"type": "select", "question": f"Pick one for {name}.",
                         "options": options, "transition": branches}
    return json.dumps(doc, indent=2)


# ---------------------------------------------------------------------------
# independent step simulator (transition rule, re-implemented on the wire dict)


def enumerate_reachable_pairs(machine_dict: dict, max_steps: int) -> set[tuple[str, int]]:
    """All (state, buffer length) pairs reachable within ``max_steps`` answers.

    Implements the transition rule directly: resolve the edge by answer key
    (or the catch-all), bump the buffer when the edge saves, move. Answer
    alphabets: one ack for read, each option for select, yes/no for boolean,
    every subset for checkmark.
    """
    states = machine_dict["states"]

    def answer_keys(state: dict) -> list[str | None]:
        kind = state["kind"]
        if kind == "select":
            return list(state["options"])
        if kind == "boolean":
            return ["yes", "no"]
        if kind in ("read", "checkmark", "label", "choosePage", "bbox", "bboxLabel"):
            return [None]  # answer carries no routing value
        raise AssertionError(f"unsupported kind {kind} in simulator")

    def resolve(state: dict, key: str | None) -> dict:
        edges = state["edges"]
        if "*" in edges:
            return edges["*"]
        return edges[key]

    entry = states[machine_dict["entry"]]
    first = entry["edges"]["*"]["target"]
    pairs: set[tuple[str, int]] = set()
    visited: set[tuple[str, int, int]] = set()
    frontier: list[tuple[str, int, int]] = [(first, 0, 0)]
    while frontier:
        name, buf, depth = frontier.pop()
        if (name, buf, depth) in visited or depth > max_steps:
            continue
        visited.add((name, buf, depth))
        pairs.add((name, buf))
        state = states[name]
        if state["kind"] in ("end", "failure"):
            continue
        if state["kind"] == "checkmark":
            # every subset resolves through the same catch-all edge
            edge = state["edges"]["*"]
            frontier.append((edge["target"], buf + (1 if edge["save"] else 0), depth + 1))
            continue
        for key in answer_keys(state):
            edge = resolve(state, key)
            frontier.append((edge["target"], buf + (1 if edge["save"] else 0), depth + 1))
    return pairs


# ---------------------------------------------------------------------------
# random answers / traces


def random_answer(rng: random.Random, state_dict: dict, content_len: int = 40):
    kind = state_dict["kind"]
    if kind == "read":
        return Ack()
    if kind == "select":
        return Selection(rng.choice(list(state_dict["options"])))
    if kind == "checkmark":
        options = list(state_dict["options"])
        return Selections({o for o in options if rng.random() < 0.5})
    if kind == "boolean":
        return Bool(rng.choice(["yes", "no"]))
    if kind == "label":
        labels = list(state_dict["labels"])
        spans = []
        for _ in range(rng.randint(1, 3)):
            start = rng.randint(0, content_len - 2)
            end = rng.randint(start + 1, content_len)
            spans.append(Span(start, end, rng.choice(labels)))
        return Spans(spans)
    if kind == "choosePage":
        return Page(rng.randint(0, 1))
    if kind in ("bbox", "bboxLabel"):
        boxes = []
        for _ in range(rng.randint(1, 2)):
            x = round(rng.uniform(0, 0.5), 3)
            y = round(rng.uniform(0, 0.5), 3)
            w = round(rng.uniform(0.05, 0.5), 3)
            h = round(rng.uniform(0.05, 0.5), 3)
            label = rng.choice(list(state_dict["labels"])) if kind == "bboxLabel" else None
            boxes.append(Box(x, y, w, h, label))
        return Boxes(boxes)
    raise AssertionError(f"no answer generator for {kind}")


def random_trace(rng: random.Random, machine, instance, max_steps: int = 1000):
    """Random walk over a machine collecting the (state, answer) trace."""
    from annoflow.engine import Status, replay_trace, start_session, submit_answer

    session = start_session(machine, instance)
    trace = []
    steps = 0
    while session.status is Status.RUNNING:
        steps += 1
        assert steps <= max_steps, "random walk did not terminate"
        state = machine.states[session.current]
        content_len = len(instance.content) if isinstance(instance.content, str) else 40
        answer = random_answer(rng, machine.to_dict()["states"][state.name], content_len)
        trace.append((state.name, answer))
        submit_answer(session, answer)
    return trace


# ---------------------------------------------------------------------------
# TSV generation and the independent row checker


def random_tsv_document(rng: random.Random, rows: int, corrupt_rate: float = 0.05):
    """(document text, expected inserted count, expected rejection lines)."""
    lines = ["content\tcontext\tmeta"]
    inserted = 0
    rejects: list[tuple[int, str]] = []
    for i in range(rows):
        line_no = i + 2
        roll = rng.random()
        if roll < corrupt_rate:
            fault = rng.choice(["column-count", "invalid-meta", "empty-content"])
            if fault == "column-count":
                lines.append(f"only one field for row {i}")
            elif fault == "invalid-meta":
                lines.append(f"content {i}\tctx\t{{not json")
            else:
                lines.append(f"\tctx\t{{\"row\": {i}}}")
            rejects.append((line_no, fault))
        else:
            content = f"comment {i} with wörds, a \\t tab and a \\\\ backslash"
            context = f"thread {i % 7}" if rng.random() < 0.8 else ""
            meta = json.dumps({"row": i, "shard": i % 3})
            lines.append(f"{content}\t{context}\t{meta}")
            inserted += 1
    return "\n".join(lines) + "\n", inserted, rejects


def check_tsv_line(line: str) -> str | None:
    """Reason a data line would be rejected, or None. Independent re-check."""
    fields = line.split("\t")
    if len(fields) != 3:
        return "column-count"
    content, _context, meta = fields
    try:
        unescaped_meta = _unescape(meta)
        unescaped_content = _unescape(content)
    except ValueError:
        return "bad-escape"
    if unescaped_content == "":
        return "empty-content"
    try:
        json.loads(unescaped_meta)
    except json.JSONDecodeError:
        return "invalid-meta"
    return None


def _unescape(value: str) -> str:
    out = []
    i = 0
    while i < len(value):
        if value[i] != "\\":
            out.append(value[i])
            i += 1
            continue
        if i + 1 >= len(value):
            raise ValueError("dangling backslash")
        nxt = value[i + 1]
        table = {"t": "\t", "n": "\n", "\\": "\\"}
        if nxt not in table:
            raise ValueError("bad escape")
        out.append(table[nxt])
        i += 2
    return "".join(out)
