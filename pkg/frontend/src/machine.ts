// Local execution of the compiled machine. The semantics mirror the
// server's replay exactly: same validation, same edge resolution, same
// visit numbering. The server re-executes the submitted trace, so any
// divergence here surfaces as a 422 instead of corrupt data.

import {
  ANNOTATION_KINDS,
  DEFAULT_EDGE,
  type AnswerWire,
  type InstanceWire,
  type MachineWire,
  type StateWire,
  type TraceStepWire,
} from "./types";

export type SessionStatus = "running" | "completed" | "failed";

export interface SavedAnswer {
  state: string;
  visit: number;
  answer: AnswerWire;
}

export interface Prompt {
  stateName: string;
  stateType: string;
  question: string | null;
  options: string[] | null;
  labels: string[] | null;
  prefill: unknown;
}

export class ClientEngineError extends Error {
  constructor(readonly code: string, message: string) {
    super(message);
  }
}

const KIND_TO_ANSWER: Record<string, AnswerWire["type"]> = {
  read: "ack",
  select: "selection",
  checkmark: "selections",
  boolean: "bool",
  label: "spans",
  choosePage: "page",
  bbox: "boxes",
  bboxLabel: "boxes",
};

/** Length of a string in Unicode code points (span offsets are code-point based). */
export function codePointLength(text: string): number {
  let count = 0;
  for (const _ of text) count += 1;
  return count;
}

/** Convert a UTF-16 code-unit offset into a code-point offset. */
export function unitsToCodePoints(text: string, unitOffset: number): number {
  return codePointLength(text.slice(0, unitOffset));
}

export class ClientSession {
  current: string;
  status: SessionStatus = "running";
  readonly buffer: SavedAnswer[] = [];
  readonly visits: Record<string, number> = {};
  readonly path: string[] = [];
  /** Every confirmed answer in order; this is what POST /annotations sends. */
  readonly trace: TraceStepWire[] = [];
  readonly apiContext: Record<string, unknown> = {};
  apiPending = false;
  diagnostic: string | null = null;

  constructor(readonly machine: MachineWire, readonly instance: InstanceWire) {
    this.current = machine.entry;
    this.path.push(machine.entry);
    const entry = this.state();
    const edge = entry.edges[DEFAULT_EDGE];
    if (!edge) {
      this.fail("machine entry state has no outgoing edge");
      return;
    }
    this.enter(edge.target);
  }

  state(name?: string): StateWire {
    const state = this.machine.states[name ?? this.current];
    if (!state) {
      throw new ClientEngineError("bad-machine", `unknown state ${name ?? this.current}`);
    }
    return state;
  }

  prompt(): Prompt {
    this.requireRunning();
    const state = this.state();
    return {
      stateName: this.current,
      stateType: state.kind,
      question: state.question,
      options: state.options,
      labels: state.labels,
      prefill: this.apiContext[this.current],
    };
  }

  /** Name of the server function to call before the session can proceed. */
  needsApiCall(): string | null {
    if (this.status !== "running") return null;
    const state = this.state();
    if (state.kind === "callAPI") return state.api_call;
    if (this.apiPending) return state.api_call;
    return null;
  }

  /** Mirror of the engine's API-state handling for a successful call. */
  applyApiResult(payload: unknown): void {
    this.requireRunning();
    const state = this.state();
    if (state.kind === "callAPI") {
      const edge = state.edges[DEFAULT_EDGE];
      if (!edge) throw new ClientEngineError("bad-machine", "callAPI state has no edge");
      this.apiContext[edge.target] = payload;
      this.enter(edge.target);
    } else {
      this.apiContext[this.current] = payload;
      this.apiPending = false;
    }
  }

  /** A failed or unknown server function sends the session to `failure`. */
  fail(diagnostic: string): void {
    this.diagnostic = diagnostic;
    this.enter("failure");
  }

  submit(answer: AnswerWire): void {
    this.requireRunning();
    const state = this.state();
    const expected = KIND_TO_ANSWER[state.kind];
    if (!expected) {
      throw new ClientEngineError("answer-type-mismatch",
        `state ${this.current} (${state.kind}) accepts no answer`);
    }
    if (answer.type !== expected) {
      throw new ClientEngineError("answer-type-mismatch",
        `state ${this.current} expects ${expected}, got ${answer.type}`);
    }
    validateAnswer(state, this.current, answer, this.instance);

    let value: string | null = null;
    if (answer.type === "selection" || answer.type === "bool") value = answer.value;
    const edge = state.edges[DEFAULT_EDGE] ?? (value !== null ? state.edges[value] : undefined);
    if (!edge) {
      throw new ClientEngineError("bad-machine",
        `state ${this.current} has no edge for ${value}`);
    }
    if (edge.save) {
      this.buffer.push({
        state: this.current,
        visit: this.visits[this.current] ?? 0,
        answer,
      });
    }
    this.trace.push({ state: this.current, answer });
    this.enter(edge.target);
  }

  private enter(target: string): void {
    this.current = target;
    this.path.push(target);
    this.visits[target] = (this.visits[target] ?? 0) + 1;
    const state = this.state(target);
    if (state.kind === "end") this.status = "completed";
    else if (state.kind === "failure") this.status = "failed";
    this.apiPending = ANNOTATION_KINDS.has(state.kind) && state.api_call !== null;
  }

  private requireRunning(): void {
    if (this.status !== "running") {
      throw new ClientEngineError("session-not-running", `session is ${this.status}`);
    }
  }
}

export function validateAnswer(state: StateWire, stateName: string,
                               answer: AnswerWire, instance: InstanceWire): void {
  const options = new Set(state.options ?? []);
  const labels = new Set(state.labels ?? []);
  switch (answer.type) {
    case "selection":
      if (!options.has(answer.value)) {
        throw new ClientEngineError("invalid-option",
          `${answer.value} is not an option of ${stateName}`);
      }
      break;
    case "selections":
      for (const value of answer.values) {
        if (!options.has(value)) {
          throw new ClientEngineError("invalid-option",
            `${value} is not an option of ${stateName}`);
        }
      }
      break;
    case "bool":
      if (answer.value !== "yes" && answer.value !== "no") {
        throw new ClientEngineError("invalid-option", "boolean answer must be yes or no");
      }
      break;
    case "spans": {
      if (typeof instance.content !== "string") {
        throw new ClientEngineError("invalid-span", "instance has no text content");
      }
      const length = codePointLength(instance.content);
      for (const span of answer.spans) {
        if (!(0 <= span.start && span.start < span.end && span.end <= length)) {
          throw new ClientEngineError("invalid-span",
            `span [${span.start}, ${span.end}) outside content of length ${length}`);
        }
        if (!labels.has(span.label)) {
          throw new ClientEngineError("invalid-span",
            `${span.label} is not a label of ${stateName}`);
        }
      }
      break;
    }
    case "page": {
      if (answer.index < 0) {
        throw new ClientEngineError("invalid-page", "page index must be >= 0");
      }
      if (Array.isArray(instance.content) && answer.index >= instance.content.length) {
        throw new ClientEngineError("invalid-page",
          `page ${answer.index} out of range (${instance.content.length} pages)`);
      }
      break;
    }
    case "boxes": {
      const needLabel = state.kind === "bboxLabel";
      for (const box of answer.boxes) {
        const inside = box.x >= 0 && box.y >= 0 && box.w > 0 && box.h > 0
          && box.w <= 1 && box.h <= 1 && box.x + box.w <= 1 && box.y + box.h <= 1;
        if (!inside) {
          throw new ClientEngineError("invalid-box",
            `box (${box.x}, ${box.y}, ${box.w}, ${box.h}) not within the unit square`);
        }
        if (needLabel) {
          if (box.label === undefined) {
            throw new ClientEngineError("invalid-box",
              `${stateName} requires a label on every box`);
          }
          if (!labels.has(box.label)) {
            throw new ClientEngineError("invalid-box",
              `${box.label} is not a label of ${stateName}`);
          }
        }
      }
      break;
    }
    case "ack":
      break;
  }
}
