/**
 * Application shell: login gate, navigation, view routing. The app talks
 * to the hub only through the documented v1 API and holds no state that
 * survives logout.
 */

import { HubApi } from "./api.js";
import { AppState, clear, el } from "./state.js";
import { renderApprovals } from "./views/approvals.js";
import { renderDeletion } from "./views/deletion.js";
import { defaultRange, ExplorerState, renderExplorer } from "./views/explorer.js";
import { renderLifecycle } from "./views/lifecycle.js";
import { renderLive, stopLiveRefresh } from "./views/live.js";
import { renderLogin } from "./views/login.js";
import { renderSettings } from "./views/settings.js";
import { renderSharing } from "./views/sharing.js";

export const VIEWS = [
  ["live", "Live"],
  ["explorer", "Explorer"],
  ["delete", "Delete"],
  ["approvals", "Approvals"],
  ["settings", "Settings"],
  ["sharing", "Sharing"],
  ["lifecycle", "Lifecycle"],
] as const;

export type ViewName = (typeof VIEWS)[number][0];

export class App {
  state: AppState;
  explorer: ExplorerState;
  current: ViewName = "live";

  constructor(
    private root: HTMLElement,
    base = "",
  ) {
    this.state = new AppState(new HubApi(base));
    this.state.api.onUnauthorized = () => {
      // expired or revoked session: drop everything, back to login
      this.state.logout();
      this.resetViewState();
      this.showLogin();
    };
    this.explorer = this.freshExplorerState();
  }

  private freshExplorerState(): ExplorerState {
    const range = defaultRange(Date.now());
    return { selected: [], from: range.from, to: range.to, window: "raw", agg: "mean" };
  }

  private resetViewState(): void {
    this.explorer = this.freshExplorerState(); // no view state survives logout
  }

  start(): void {
    if (!this.state.loggedIn()) {
      this.showLogin();
      return;
    }
    this.showShell();
  }

  showLogin(): void {
    stopLiveRefresh();
    clear(this.root);
    renderLogin(this.root, this.state, () => this.showShell());
  }

  showShell(): void {
    clear(this.root);
    const nav = el("nav", { id: "nav" });
    for (const [name, label] of VIEWS) {
      const button = el("button", { id: `nav-${name}`, "data-view": name }, [label]);
      button.addEventListener("click", () => this.navigate(name));
      nav.append(button);
    }
    const who = el("span", { class: "who" }, [
      `${this.state.session?.display_name ?? ""} (${this.state.role})`,
    ]);
    const logout = el("button", { id: "nav-logout" }, ["Log out"]);
    logout.addEventListener("click", () => {
      this.state.logout(); // drops the token and every cached session field
      this.resetViewState();
      this.showLogin();
    });
    nav.append(who, logout);
    const main = el("main", { id: "view" });
    this.root.append(nav, main);
    this.navigate(this.defaultView());
  }

  defaultView(): ViewName {
    return this.state.role === "guest" ? "explorer" : "live";
  }

  navigate(name: ViewName): void {
    this.current = name;
    stopLiveRefresh();
    const main = document.getElementById("view");
    if (!main) return;
    for (const button of document.querySelectorAll("#nav button[data-view]")) {
      button.classList.toggle("active", button.getAttribute("data-view") === name);
    }
    switch (name) {
      case "live":
        renderLive(main, this.state);
        break;
      case "explorer":
        if (this.state.role === "guest" && this.explorer.window === "raw") {
          this.explorer.window = "1h"; // role cap surfaced in the selector too
        }
        renderExplorer(main, this.state, this.explorer);
        break;
      case "delete":
        renderDeletion(main, this.state);
        break;
      case "approvals":
        renderApprovals(main, this.state);
        break;
      case "settings":
        renderSettings(main, this.state);
        break;
      case "sharing":
        renderSharing(main, this.state);
        break;
      case "lifecycle":
        renderLifecycle(main, this.state);
        break;
    }
  }
}

export function boot(root: HTMLElement, base = ""): App {
  const app = new App(root, base);
  app.start();
  return app;
}

declare global {
  interface Window {
    __hubApp?: App;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  window.__hubApp = boot(document.getElementById("app") as HTMLElement);
}
