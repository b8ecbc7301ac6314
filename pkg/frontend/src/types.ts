// Wire types shared with the server. Field names follow the HTTP contract
// exactly; the machine shape is what GET /protocol returns.

export interface EdgeWire {
  target: string;
  save: boolean;
}

export interface StateWire {
  kind: string;
  question: string | null;
  options: string[] | null;
  labels: string[] | null;
  api_call: string | null;
  edges: Record<string, EdgeWire>;
}

export interface MachineWire {
  entry: string;
  states: Record<string, StateWire>;
}

export interface InstanceWire {
  id: number;
  kind: "text" | "file";
  content: string | string[];
  context: string | null;
}

export interface SpanWire {
  start: number;
  end: number;
  label: string;
}

export interface BoxWire {
  x: number;
  y: number;
  w: number;
  h: number;
  label?: string;
}

export type AnswerWire =
  | { type: "ack" }
  | { type: "selection"; value: string }
  | { type: "selections"; values: string[] }
  | { type: "bool"; value: "yes" | "no" }
  | { type: "spans"; spans: SpanWire[] }
  | { type: "page"; index: number }
  | { type: "boxes"; boxes: BoxWire[] };

export interface TraceStepWire {
  state: string;
  answer: AnswerWire;
}

export interface LeaseWire {
  expires_at: number | null;
}

export interface ImportReportWire {
  inserted: number;
  rejected: { line: number; reason: string }[];
}

export interface StatsWire {
  users: { user_id: number; username: string; annotations: number }[];
  instances: { instance_id: number; completions: number }[];
}

export interface OptionsWire {
  annotators_per_instance: number;
  assignment_lease_minutes: number;
}

export const DEFAULT_EDGE = "*";
export const ANNOTATION_KINDS = new Set([
  "read", "select", "checkmark", "boolean", "label", "choosePage",
  "bbox", "bboxLabel",
]);
