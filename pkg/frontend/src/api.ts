// Thin client for the annotation server's HTTP contract.

import type {
  ImportReportWire,
  InstanceWire,
  LeaseWire,
  MachineWire,
  OptionsWire,
  StatsWire,
  TraceStepWire,
} from "./types";

export class ApiError extends Error {
  constructor(readonly status: number, readonly code: string, message: string) {
    super(message);
  }
}

interface LoginResponse {
  token: string;
  user_id: number;
  role: "annotator" | "administrator";
  expires_at: number;
}

export class ApiClient {
  token: string | null = null;
  role: "annotator" | "administrator" | null = null;

  constructor(readonly base: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown,
                           rawBody?: string): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    let payload: string | undefined;
    if (rawBody !== undefined) {
      payload = rawBody;
      headers["Content-Type"] = "text/tab-separated-values";
    } else if (body !== undefined) {
      payload = JSON.stringify(body);
      headers["Content-Type"] = "application/json";
    }
    const response = await fetch(this.base + path, { method, headers, body: payload });
    const text = await response.text();
    if (!response.ok) {
      let code = "error";
      let message = text;
      try {
        const parsed = JSON.parse(text);
        code = parsed.code ?? code;
        message = parsed.message ?? message;
      } catch {
        // non-JSON error body; keep the raw text
      }
      throw new ApiError(response.status, code, message);
    }
    return (text ? JSON.parse(text) : null) as T;
  }

  async register(username: string, password: string, email = "", fullName = "") {
    return this.request<{ id: number; active: boolean }>("POST", "/auth/register", {
      username, password, email, full_name: fullName,
    });
  }

  async login(username: string, password: string): Promise<LoginResponse> {
    const result = await this.request<LoginResponse>("POST", "/auth/login",
      { username, password });
    this.token = result.token;
    this.role = result.role;
    return result;
  }

  async logout(): Promise<void> {
    await this.request("POST", "/auth/logout");
    this.token = null;
    this.role = null;
  }

  protocol(): Promise<MachineWire> {
    return this.request("GET", "/protocol");
  }

  nextInstance(): Promise<{ instance: InstanceWire | null; lease: LeaseWire | null }> {
    return this.request("GET", "/instances/next");
  }

  submitAnnotations(instanceId: number, trace: TraceStepWire[]) {
    return this.request<{ saved_answers: number }>("POST", "/annotations", {
      instance_id: instanceId,
      answer_trace: trace,
    });
  }

  apiCall(name: string, instanceId: number, answers: unknown[]): Promise<unknown> {
    return this.request("POST", `/api/call/${name}`, {
      instance_id: instanceId,
      answers,
    });
  }

  upload(tsv: string): Promise<ImportReportWire> {
    return this.request("POST", "/data/upload", undefined, tsv);
  }

  exportUrl(table?: string): string {
    const suffix = table ? `?table=${encodeURIComponent(table)}` : "";
    return `${this.base}/data/export${suffix}`;
  }

  options(): Promise<OptionsWire> {
    return this.request("GET", "/admin/options");
  }

  setOptions(options: Partial<OptionsWire>): Promise<OptionsWire> {
    return this.request("PUT", "/admin/options", options);
  }

  setUserActive(userId: number, active: boolean) {
    const action = active ? "activate" : "deactivate";
    return this.request<{ id: number; active: boolean }>(
      "POST", `/admin/users/${userId}/${action}`);
  }

  setUserPassword(userId: number, password: string) {
    return this.request("POST", `/admin/users/${userId}/password`, { password });
  }

  stats(): Promise<StatsWire> {
    return this.request("GET", "/admin/stats");
  }
}
