#!/usr/bin/env python3
"""Regenerate tests/fixtures/goldens.json.

Walks the fixture machines with a seeded RNG to produce answer traces, then
asks the installed `annoflow simulate --show-path` CLI for the authoritative
state path and bundle of every trace. The browser client's session must
reproduce those paths exactly (the parity test).

Run from the frontend directory: python3 scripts/make_goldens.py
"""

from __future__ import annotations

import json
import random
import subprocess
import sys
import tempfile
from pathlib import Path

FRONTEND = Path(__file__).resolve().parent.parent
FIXTURES = FRONTEND.parent / "fixtures"
OUT = FRONTEND / "tests" / "fixtures" / "goldens.json"

INSTANCES = {
    "sentiment": {"id": 1, "kind": "text",
                  "content": "I completely disagree with this decision.",
                  "context": "Thread: council approves the new bike lanes",
                  "meta": "{}"},
    "review_loop": {"id": 2, "kind": "text",
                    "content": "Typical. Nobody asked the residents first.",
                    "context": "Thread: council approves the new bike lanes",
                    "meta": "{}"},
    "widgets_text": {"id": 3, "kind": "text",
                     "content": "Maria Lopez from the housing office replied calmly.",
                     "context": "",
                     "meta": "{}"},
    "widgets_file": {"id": 4, "kind": "file",
                     "content": ["pages/doc7_p1.png", "pages/doc7_p2.png"],
                     "context": None,
                     "meta": "{}"},
}

PLAN = [("sentiment", 6), ("review_loop", 8), ("widgets_text", 3), ("widgets_file", 3)]


def compile_machine(name: str) -> dict:
    from annoflow.protocol import compile_source

    return json.loads(
        compile_source((FIXTURES / f"{name}.ap.json").read_text()).to_json())


def walk(machine: dict, instance: dict, rng: random.Random) -> list[dict]:
    states = machine["states"]
    current = states[machine["entry"]]["edges"]["*"]["target"]
    trace: list[dict] = []
    for _ in range(500):
        state = states[current]
        kind = state["kind"]
        if kind in ("end", "failure"):
            return trace
        answer = make_answer(state, instance, rng)
        trace.append({"state": current, "answer": answer})
        value = answer.get("value")
        edges = state["edges"]
        edge = edges.get("*") or edges[value]
        current = edge["target"]
    raise RuntimeError("walk did not terminate")


def make_answer(state: dict, instance: dict, rng: random.Random) -> dict:
    kind = state["kind"]
    if kind == "read":
        return {"type": "ack"}
    if kind == "select":
        return {"type": "selection", "value": rng.choice(state["options"])}
    if kind == "checkmark":
        values = sorted(o for o in state["options"] if rng.random() < 0.5)
        return {"type": "selections", "values": values}
    if kind == "boolean":
        return {"type": "bool", "value": rng.choice(["yes", "no"])}
    if kind == "label":
        length = len(instance["content"])
        spans = []
        for _ in range(rng.randint(1, 2)):
            start = rng.randint(0, length - 2)
            end = rng.randint(start + 1, length)
            spans.append({"start": start, "end": end,
                          "label": rng.choice(state["labels"])})
        return {"type": "spans", "spans": spans}
    if kind == "choosePage":
        return {"type": "page", "index": rng.randrange(len(instance["content"]))}
    if kind in ("bbox", "bboxLabel"):
        boxes = []
        for _ in range(rng.randint(1, 2)):
            box = {"x": round(rng.uniform(0, 0.4), 3),
                   "y": round(rng.uniform(0, 0.4), 3),
                   "w": round(rng.uniform(0.05, 0.4), 3),
                   "h": round(rng.uniform(0.05, 0.4), 3)}
            if kind == "bboxLabel":
                box["label"] = rng.choice(state["labels"])
            boxes.append(box)
        return {"type": "boxes", "boxes": boxes}
    raise AssertionError(kind)


def simulate(name: str, instance: dict, trace: list[dict]) -> dict:
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as handle:
        json.dump({"instance": instance, "trace": trace}, handle)
        trace_path = handle.name
    proc = subprocess.run(
        ["annoflow", "simulate", str(FIXTURES / f"{name}.ap.json"), trace_path,
         "--show-path"],
        capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main() -> None:
    rng = random.Random(20260810)
    machines = {name: compile_machine(name) for name, _ in PLAN}
    goldens = []
    for name, count in PLAN:
        for _ in range(count):
            trace = walk(machines[name], INSTANCES[name], rng)
            result = simulate(name, INSTANCES[name], trace)
            goldens.append({"machine": name, "trace": trace,
                            "path": result["path"], "bundle": result["bundle"]})
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps({"machines": machines, "instances": INSTANCES,
                               "goldens": goldens}, indent=2) + "\n")
    print(f"wrote {len(goldens)} goldens to {OUT}", file=sys.stderr)


if __name__ == "__main__":
    main()
