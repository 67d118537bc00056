import { ApiError } from "../api.js";
import { AppState, clear, el } from "../state.js";

export function renderLogin(root: HTMLElement, state: AppState, onLogin: () => void): void {
  clear(root);
  const name = el("input", { id: "login-name", placeholder: "name", autocomplete: "username" });
  const secret = el("input", {
    id: "login-secret",
    placeholder: "secret",
    type: "password",
    autocomplete: "current-password",
  });
  const error = el("p", { id: "login-error", class: "error" });
  const button = el("button", { id: "login-submit" }, ["Sign in"]);
  button.addEventListener("click", async () => {
    error.textContent = "";
    try {
      const session = await state.api.login(
        (name as HTMLInputElement).value,
        (secret as HTMLInputElement).value,
      );
      state.setSession(session);
      onLogin();
    } catch (err) {
      error.textContent = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
  });
  root.append(
    el("div", { class: "login-card" }, [
      el("h1", {}, ["Sensor data hub"]),
      el("p", {}, ["Local household access only."]),
      name,
      secret,
      button,
      error,
    ]),
  );
}
