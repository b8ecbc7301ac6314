// Administrator console: user activation, password resets, the
// annotators-per-instance setting, and the annotation counts table.

import { ApiClient, ApiError } from "./api";

export class AdminConsole {
  constructor(private root: HTMLElement, private api: ApiClient) {}

  async render(): Promise<void> {
    this.root.innerHTML = "";
    this.root.className = "admin-console";
    try {
      await Promise.all([this.renderOptions(), this.renderStats()]);
    } catch (error) {
      this.root.append(errorBox(error));
    }
  }

  private async renderOptions(): Promise<void> {
    const options = await this.api.options();
    const form = document.createElement("form");
    form.className = "options-form";
    form.innerHTML = `
      <h2>Settings</h2>
      <label>Annotators per instance
        <input name="k" type="number" min="1" value="${options.annotators_per_instance}">
      </label>
      <label>Assignment lease (minutes)
        <input name="lease" type="number" min="1" value="${options.assignment_lease_minutes}">
      </label>
      <button type="submit">Save</button>
      <span class="form-status"></span>`;
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const k = Number((form.elements.namedItem("k") as HTMLInputElement).value);
      const lease = Number((form.elements.namedItem("lease") as HTMLInputElement).value);
      const status = form.querySelector(".form-status")!;
      this.api.setOptions({ annotators_per_instance: k, assignment_lease_minutes: lease })
        .then(() => { status.textContent = "saved"; })
        .catch((error) => { status.textContent = describe(error); });
    });
    this.root.append(form);
  }

  private async renderStats(): Promise<void> {
    const stats = await this.api.stats();
    const section = document.createElement("section");
    section.innerHTML = "<h2>Annotators</h2>";
    const table = document.createElement("table");
    table.className = "stats-table";
    table.innerHTML =
      "<thead><tr><th>id</th><th>username</th><th>annotations</th><th></th></tr></thead>";
    const body = document.createElement("tbody");
    for (const user of stats.users) {
      const row = document.createElement("tr");
      row.innerHTML = `<td>${user.user_id}</td><td>${user.username}</td>` +
        `<td>${user.annotations}</td>`;
      const actions = document.createElement("td");
      actions.append(
        this.actionButton("activate", () => this.api.setUserActive(user.user_id, true)),
        this.actionButton("deactivate", () => this.api.setUserActive(user.user_id, false)),
        this.actionButton("reset password", () => {
          const next = window.prompt(`New password for ${user.username}:`);
          return next ? this.api.setUserPassword(user.user_id, next)
                      : Promise.resolve(null);
        }));
      row.append(actions);
      body.append(row);
    }
    table.append(body);
    section.append(table);

    const completions = document.createElement("section");
    completions.innerHTML = "<h2>Instance completions</h2>";
    const list = document.createElement("ul");
    list.className = "completion-list";
    for (const instance of stats.instances) {
      const item = document.createElement("li");
      item.textContent = `instance ${instance.instance_id}: ${instance.completions}`;
      list.append(item);
    }
    completions.append(list);
    this.root.append(section, completions);
  }

  private actionButton(label: string, action: () => Promise<unknown>): HTMLElement {
    const button = document.createElement("button");
    button.type = "button";
    button.textContent = label;
    button.addEventListener("click", () => {
      action().then(() => this.render())
        .catch((error) => this.root.append(errorBox(error)));
    });
    return button;
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `${error.code}: ${error.message}`;
  return error instanceof Error ? error.message : String(error);
}

function errorBox(error: unknown): HTMLElement {
  const box = document.createElement("p");
  box.className = "failure-box";
  box.textContent = describe(error);
  return box;
}
