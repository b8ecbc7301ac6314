// One interactive widget per annotation state type. Each widget owns its
// DOM subtree and reports the answer it currently holds; `value()` returns
// null while the input is incomplete (nothing selected yet, a box missing
// its required label), which keeps invalid variants impossible to submit.

import { unitsToCodePoints } from "./machine";
import type { AnswerWire, BoxWire, InstanceWire, SpanWire } from "./types";
import type { Prompt } from "./machine";

export interface Widget {
  el: HTMLElement;
  value(): AnswerWire | null;
}

export class UnknownStateTypeError extends Error {}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className?: string, text?: string): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderPrompt(prompt: Prompt, instance: InstanceWire): Widget {
  switch (prompt.stateType) {
    case "read":
      return new ReadWidget();
    case "select":
      return new ChoiceWidget(prompt.stateName, prompt.options ?? [], false);
    case "checkmark":
      return new ChoiceWidget(prompt.stateName, prompt.options ?? [], true);
    case "boolean":
      return new ChoiceWidget(prompt.stateName, ["yes", "no"], false, true);
    case "label":
      return new SpanLabelWidget(
        typeof instance.content === "string" ? instance.content : "",
        prompt.labels ?? []);
    case "choosePage":
      return new ChoosePageWidget(
        Array.isArray(instance.content) ? instance.content : []);
    case "bbox":
      return new BoxesWidget(null, prompt.prefill);
    case "bboxLabel":
      return new BoxesWidget(prompt.labels ?? [], prompt.prefill);
    default:
      throw new UnknownStateTypeError(
        `no widget for state type ${prompt.stateType}`);
  }
}

class ReadWidget implements Widget {
  el = el("p", "widget widget-read", "Press continue when you have read the content.");

  value(): AnswerWire {
    return { type: "ack" };
  }
}

/** Radio group (select / boolean) or checkbox group (checkmark). */
class ChoiceWidget implements Widget {
  el: HTMLElement;
  private inputs: HTMLInputElement[] = [];

  constructor(name: string, options: string[], private multi: boolean,
              private boolean_ = false) {
    this.el = el("div", `widget widget-${multi ? "checkmark" : "select"}`);
    for (const option of options) {
      const label = el("label", "choice");
      const input = el("input");
      input.type = multi ? "checkbox" : "radio";
      input.name = `choice-${name}`;
      input.value = option;
      label.append(input, el("span", undefined, option));
      this.inputs.push(input);
      this.el.append(label);
    }
  }

  value(): AnswerWire | null {
    const checked = this.inputs.filter((input) => input.checked)
      .map((input) => input.value);
    if (this.multi) {
      return { type: "selections", values: [...new Set(checked)].sort() };
    }
    if (checked.length !== 1) return null;
    if (this.boolean_) {
      return { type: "bool", value: checked[0] as "yes" | "no" };
    }
    return { type: "selection", value: checked[0]! };
  }
}

/** Highlight a text range, then click a label to record the span. */
export class SpanLabelWidget implements Widget {
  el: HTMLElement;
  private spans: SpanWire[] = [];
  private pending: { start: number; end: number } | null = null;
  private contentEl: HTMLElement;
  private listEl: HTMLElement;
  private pendingEl: HTMLElement;

  constructor(private content: string, labels: string[]) {
    this.el = el("div", "widget widget-label");
    this.contentEl = el("div", "label-content", content);
    this.contentEl.addEventListener("mouseup", () => this.captureSelection());
    this.pendingEl = el("div", "label-pending", "Select a passage, then pick a label.");
    const palette = el("div", "label-palette");
    for (const label of labels) {
      const button = el("button", "label-button", label);
      button.type = "button";
      button.addEventListener("click", () => this.applyLabel(label));
      palette.append(button);
    }
    this.listEl = el("ul", "span-list");
    this.el.append(this.contentEl, this.pendingEl, palette, this.listEl);
  }

  /** Read the browser selection and snap it to code-point offsets. */
  private captureSelection(): void {
    const selection = document.getSelection();
    if (!selection || selection.rangeCount === 0 || selection.isCollapsed) return;
    const range = selection.getRangeAt(0);
    const text = this.contentEl.firstChild;
    if (!text || range.startContainer !== text || range.endContainer !== text) return;
    this.selectRange(unitsToCodePoints(this.content, range.startOffset),
                     unitsToCodePoints(this.content, range.endOffset));
  }

  /** Stage a selection given in code-point offsets into `content`. */
  selectRange(start: number, end: number): void {
    if (start >= end) return;
    this.pending = { start, end };
    this.pendingEl.textContent =
      `Selected [${start}, ${end}): choose a label to confirm.`;
  }

  private applyLabel(label: string): void {
    if (!this.pending) return;
    const span = { ...this.pending, label };
    this.spans.push(span);
    this.pending = null;
    this.pendingEl.textContent = "Select a passage, then pick a label.";
    const item = el("li", "span-chip",
      `[${span.start}, ${span.end}) ${span.label} `);
    const remove = el("button", "remove", "remove");
    remove.type = "button";
    remove.addEventListener("click", () => {
      this.spans = this.spans.filter((s) => s !== span);
      item.remove();
    });
    item.append(remove);
    this.listEl.append(item);
  }

  value(): AnswerWire | null {
    return { type: "spans", spans: [...this.spans] };
  }
}

/** Thumbnail picker over the instance's page images. */
export class ChoosePageWidget implements Widget {
  el: HTMLElement;
  private selected: number | null = null;
  private buttons: HTMLButtonElement[] = [];

  constructor(pages: string[]) {
    this.el = el("div", "widget widget-pages");
    pages.forEach((page, index) => {
      const button = el("button", "page-thumb");
      button.type = "button";
      const img = el("img");
      img.src = page;
      img.alt = `page ${index + 1}`;
      button.append(img, el("span", undefined, `page ${index + 1}`));
      button.addEventListener("click", () => this.choose(index));
      this.buttons.push(button);
      this.el.append(button);
    });
  }

  choose(index: number): void {
    this.selected = index;
    this.buttons.forEach((button, i) =>
      button.classList.toggle("selected", i === index));
  }

  value(): AnswerWire | null {
    return this.selected === null ? null : { type: "page", index: this.selected };
  }
}

/** Box editor over the image: drag to draw, fractional coordinates out. */
export class BoxesWidget implements Widget {
  el: HTMLElement;
  private boxes: { box: BoxWire; chip: HTMLElement }[] = [];
  private surface: HTMLElement;
  private listEl: HTMLElement;
  private dragStart: { x: number; y: number } | null = null;

  /** `labels === null` means plain bbox mode: no label controls at all. */
  constructor(private labels: string[] | null, prefill: unknown) {
    this.el = el("div", "widget widget-boxes");
    this.surface = el("div", "box-surface");
    this.surface.addEventListener("pointerdown", (event) => {
      this.dragStart = this.fraction(event);
    });
    this.surface.addEventListener("pointerup", (event) => {
      if (!this.dragStart) return;
      const endPoint = this.fraction(event);
      const x = Math.min(this.dragStart.x, endPoint.x);
      const y = Math.min(this.dragStart.y, endPoint.y);
      const w = Math.abs(endPoint.x - this.dragStart.x);
      const h = Math.abs(endPoint.y - this.dragStart.y);
      this.dragStart = null;
      if (w > 0 && h > 0) this.addBox({ x, y, w, h });
    });
    this.listEl = el("ul", "box-list");
    this.el.append(this.surface, this.listEl);
    for (const box of extractPrefillBoxes(prefill)) {
      this.addBox(box);
    }
  }

  /** Pointer position as fractions of the surface, clamped to the unit square. */
  private fraction(event: PointerEvent): { x: number; y: number } {
    const rect = this.surface.getBoundingClientRect();
    const clamp = (v: number) => Math.min(1, Math.max(0, v));
    return {
      x: clamp((event.clientX - rect.left) / (rect.width || 1)),
      y: clamp((event.clientY - rect.top) / (rect.height || 1)),
    };
  }

  addBox(box: BoxWire): void {
    const copy: BoxWire = { x: box.x, y: box.y, w: box.w, h: box.h };
    if (this.labels !== null && box.label !== undefined) copy.label = box.label;
    const chip = el("li", "box-chip",
      `(${copy.x.toFixed(3)}, ${copy.y.toFixed(3)}, ` +
      `${copy.w.toFixed(3)}, ${copy.h.toFixed(3)}) `);
    const entry = { box: copy, chip };
    if (this.labels !== null) {
      const picker = el("select", "box-label");
      const blank = el("option", undefined, "label…");
      blank.value = "";
      picker.append(blank);
      for (const label of this.labels) {
        const option = el("option", undefined, label);
        option.value = label;
        picker.append(option);
      }
      if (copy.label !== undefined) picker.value = copy.label;
      picker.addEventListener("change", () => {
        if (picker.value === "") delete entry.box.label;
        else entry.box.label = picker.value;
      });
      chip.append(picker);
    }
    const remove = el("button", "remove", "remove");
    remove.type = "button";
    remove.addEventListener("click", () => {
      this.boxes = this.boxes.filter((b) => b !== entry);
      chip.remove();
    });
    chip.append(remove);
    this.boxes.push(entry);
    this.listEl.append(chip);
  }

  setLabel(index: number, label: string): void {
    const entry = this.boxes[index];
    if (entry && this.labels !== null) entry.box.label = label;
  }

  value(): AnswerWire | null {
    if (this.labels !== null
        && this.boxes.some((entry) => entry.box.label === undefined)) {
      return null;  // bboxLabel: every box needs its label first
    }
    return { type: "boxes", boxes: this.boxes.map((entry) => ({ ...entry.box })) };
  }
}

function extractPrefillBoxes(prefill: unknown): BoxWire[] {
  if (Array.isArray(prefill)) return prefill as BoxWire[];
  if (prefill && typeof prefill === "object" && "boxes" in prefill) {
    const boxes = (prefill as { boxes: unknown }).boxes;
    if (Array.isArray(boxes)) return boxes as BoxWire[];
  }
  return [];
}
