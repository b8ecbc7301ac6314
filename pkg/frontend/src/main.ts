// Bootstrap: login/registration, then hash routing between the annotation
// page and (for administrators) the admin and data consoles.

import { AdminConsole } from "./admin";
import { AnnotationPage } from "./annotate";
import { ApiClient, ApiError } from "./api";
import { DataConsole } from "./dataconsole";

const api = new ApiClient("");

function mount(): HTMLElement {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");
  return root;
}

function renderLogin(root: HTMLElement): void {
  root.innerHTML = `
    <div class="login-card">
      <h1>Sign in</h1>
      <form id="login-form">
        <label>Username <input name="username" autocomplete="username"></label>
        <label>Password <input name="password" type="password"
               autocomplete="current-password"></label>
        <button type="submit">Sign in</button>
        <button type="button" id="register-button">Register</button>
        <p class="form-status"></p>
      </form>
    </div>`;
  const form = root.querySelector<HTMLFormElement>("#login-form")!;
  const status = form.querySelector<HTMLElement>(".form-status")!;
  const field = (name: string) =>
    (form.elements.namedItem(name) as HTMLInputElement).value;

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    api.login(field("username"), field("password"))
      .then(() => renderShell(root))
      .catch((error) => {
        status.textContent = error instanceof ApiError && error.code === "inactive"
          ? "Your account is waiting for an administrator to activate it."
          : describe(error);
      });
  });
  form.querySelector("#register-button")!.addEventListener("click", () => {
    api.register(field("username"), field("password"))
      .then(() => {
        status.textContent =
          "Registered. An administrator has to activate your account.";
      })
      .catch((error) => { status.textContent = describe(error); });
  });
}

function renderShell(root: HTMLElement): void {
  root.innerHTML = `
    <nav class="topbar">
      <span class="brand">annotation</span>
      <a href="#annotate">Annotate</a>
      <span class="admin-links" hidden>
        <a href="#admin">Admin</a>
        <a href="#data">Data</a>
      </span>
      <button id="logout" type="button">Sign out</button>
    </nav>
    <main id="view"></main>`;
  if (api.role === "administrator") {
    root.querySelector<HTMLElement>(".admin-links")!.hidden = false;
  }
  root.querySelector("#logout")!.addEventListener("click", () => {
    void api.logout().finally(() => renderLogin(root));
  });
  const view = root.querySelector<HTMLElement>("#view")!;
  const route = () => {
    const hash = window.location.hash || "#annotate";
    if (hash === "#admin" && api.role === "administrator") {
      void new AdminConsole(view, api).render();
    } else if (hash === "#data" && api.role === "administrator") {
      new DataConsole(view, api).render();
    } else {
      void new AnnotationPage(view, api).start();
    }
  };
  window.addEventListener("hashchange", route);
  route();
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `${error.code}: ${error.message}`;
  return error instanceof Error ? error.message : String(error);
}

renderLogin(mount());
