// Annotation page: instance panes on the left (content on top, context
// below when present), the question flow on the right, one prompt at a
// time. Completing a session submits the full answer trace and fetches
// the next instance automatically.

import { ApiClient, ApiError } from "./api";
import { ClientEngineError, ClientSession } from "./machine";
import type { InstanceWire, MachineWire } from "./types";
import { renderPrompt, UnknownStateTypeError, type Widget } from "./widgets";

export class AnnotationPage {
  private machine: MachineWire | null = null;
  private session: ClientSession | null = null;
  private widget: Widget | null = null;

  private contentPane: HTMLElement;
  private contextPane: HTMLElement;
  private questionPane: HTMLElement;
  private statusLine: HTMLElement;

  constructor(private root: HTMLElement, private api: ApiClient) {
    root.innerHTML = "";
    root.className = "annotation-page";
    const left = document.createElement("section");
    left.className = "instance-panes";
    this.contentPane = document.createElement("div");
    this.contentPane.className = "content-pane";
    this.contextPane = document.createElement("div");
    this.contextPane.className = "context-pane";
    left.append(this.contentPane, this.contextPane);

    const right = document.createElement("section");
    right.className = "question-pane";
    this.questionPane = document.createElement("div");
    this.statusLine = document.createElement("p");
    this.statusLine.className = "status-line";
    right.append(this.questionPane, this.statusLine);
    root.append(left, right);
  }

  async start(): Promise<void> {
    try {
      this.machine = await this.api.protocol();
    } catch (error) {
      this.showFailure(error instanceof ApiError && error.status === 503
        ? "No annotation protocol is installed yet."
        : `Could not load the protocol: ${describe(error)}`);
      return;
    }
    await this.fetchNext();
  }

  private async fetchNext(): Promise<void> {
    const { instance } = await this.api.nextInstance();
    if (!instance) {
      this.questionPane.innerHTML = "";
      this.questionPane.append(paragraph(
        "Nothing left to annotate. Thank you!", "done-message"));
      this.contentPane.textContent = "";
      this.contextPane.hidden = true;
      return;
    }
    this.renderInstance(instance);
    this.session = new ClientSession(this.machine!, instance);
    await this.advance();
  }

  private renderInstance(instance: InstanceWire): void {
    this.contentPane.innerHTML = "";
    if (typeof instance.content === "string") {
      this.contentPane.append(paragraph(instance.content, "instance-text"));
    } else {
      for (const page of instance.content) {
        const img = document.createElement("img");
        img.src = page;
        img.className = "instance-page";
        this.contentPane.append(img);
      }
    }
    // An empty context hides the pane entirely.
    const context = instance.context ?? "";
    this.contextPane.hidden = context === "";
    this.contextPane.textContent = context;
  }

  /** Run API states, then render the prompt or finish the session. */
  private async advance(): Promise<void> {
    const session = this.session!;
    while (session.status === "running") {
      const apiName = session.needsApiCall();
      if (apiName === null) break;
      try {
        const payload = await this.api.apiCall(
          apiName, session.instance.id, session.buffer.map((a) => a));
        session.applyApiResult(payload);
      } catch (error) {
        session.fail(`API call ${apiName} failed: ${describe(error)}`);
      }
    }
    if (session.status === "failed") {
      this.showFailure(session.diagnostic ?? "The session failed unexpectedly.");
      return;
    }
    if (session.status === "completed") {
      await this.submitTrace();
      return;
    }
    this.renderPrompt();
  }

  private renderPrompt(): void {
    const session = this.session!;
    const prompt = session.prompt();
    this.questionPane.innerHTML = "";
    if (prompt.question) {
      this.questionPane.append(paragraph(prompt.question, "question-text"));
    }
    let widget: Widget;
    try {
      widget = renderPrompt(prompt, session.instance);
    } catch (error) {
      if (error instanceof UnknownStateTypeError) {
        session.fail(error.message);
        this.showFailure(error.message);
        return;
      }
      throw error;
    }
    this.widget = widget;
    this.questionPane.append(widget.el);

    const submit = document.createElement("button");
    submit.className = "submit-answer";
    submit.textContent = "Continue";
    submit.addEventListener("click", () => void this.confirm());
    this.questionPane.append(submit);
    this.statusLine.textContent = `Question ${session.trace.length + 1}`;
  }

  private async confirm(): Promise<void> {
    const session = this.session!;
    const answer = this.widget?.value() ?? null;
    if (answer === null) {
      this.statusLine.textContent = "Please complete the answer first.";
      return;
    }
    try {
      session.submit(answer);
    } catch (error) {
      if (error instanceof ClientEngineError) {
        this.statusLine.textContent = error.message;
        return;
      }
      throw error;
    }
    await this.advance();
  }

  private async submitTrace(): Promise<void> {
    const session = this.session!;
    this.questionPane.innerHTML = "";
    try {
      const result = await this.api.submitAnnotations(
        session.instance.id, session.trace);
      this.questionPane.append(paragraph(
        `Saved ${result.saved_answers} answer(s). Fetching the next instance…`,
        "done-message"));
      await this.fetchNext();
    } catch (error) {
      this.showFailure(`Could not save the annotation: ${describe(error)}`);
    }
  }

  private showFailure(message: string): void {
    this.questionPane.innerHTML = "";
    const box = paragraph(message, "failure-box");
    this.questionPane.append(box);
  }
}

function paragraph(text: string, className: string): HTMLElement {
  const node = document.createElement("p");
  node.className = className;
  node.textContent = text;
  return node;
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `${error.code}: ${error.message}`;
  return error instanceof Error ? error.message : String(error);
}
