/**
 * In-memory session state. Nothing persists past logout: the UI holds no
 * data the API did not return for the current session.
 */

import { HubApi, Session } from "./api.js";

export class AppState {
  session: Session | null = null;

  constructor(public api: HubApi) {}

  get role(): string {
    return this.session?.role ?? "";
  }

  get principalId(): string {
    return this.session?.principal_id ?? "";
  }

  loggedIn(): boolean {
    return this.session !== null;
  }

  setSession(session: Session): void {
    this.session = session;
    this.api.setToken(session.token);
  }

  logout(): void {
    this.session = null;
    this.api.setToken(null);
  }

  /** window choices honoring the role cap: aggregate-only principals get
   * nothing finer than one hour. */
  windowChoices(): Array<{ label: string; value: string }> {
    const coarse = [
      { label: "1 hour", value: "1h" },
      { label: "4 hours", value: "4h" },
      { label: "1 day", value: "1d" },
    ];
    if (this.role === "guest") return coarse;
    return [
      { label: "raw", value: "raw" },
      { label: "1 minute", value: "1m" },
      { label: "10 minutes", value: "600000" },
      ...coarse,
    ];
  }
}

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: Array<Node | string> = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child instanceof Node ? child : document.createTextNode(child));
  }
  return node;
}

export function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

export function fmtTime(ms: number): string {
  return new Date(ms).toISOString().replace("T", " ").slice(0, 19);
}

export function fmtWindow(ms: number | null): string {
  if (ms === null) return "raw";
  if (ms % 86_400_000 === 0) return `${ms / 86_400_000}d`;
  if (ms % 3_600_000 === 0) return `${ms / 3_600_000}h`;
  if (ms % 60_000 === 0) return `${ms / 60_000}m`;
  return `${ms / 1000}s`;
}

export function parseWindow(value: string): number | null {
  if (value === "raw") return null;
  const units: Record<string, number> = { s: 1000, m: 60_000, h: 3_600_000, d: 86_400_000 };
  const unit = value[value.length - 1];
  if (unit in units) return parseInt(value.slice(0, -1), 10) * units[unit];
  return parseInt(value, 10);
}
