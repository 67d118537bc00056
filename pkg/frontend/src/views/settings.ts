/**
 * Settings: retention policy editor with client-side tier validation
 * mirroring the hub's rules (raw first, windows increasing, keep_for
 * non-decreasing).
 */

import { ApiError, RetentionPolicy, RetentionTier } from "../api.js";
import { AppState, clear, el, fmtWindow, parseWindow } from "../state.js";

export function validateTiers(tiers: RetentionTier[]): string | null {
  if (!tiers.length) return "policy needs at least the raw tier";
  if (tiers[0].window_ms !== null) return "the first tier must be raw";
  let prevWindow = 0;
  for (const tier of tiers.slice(1)) {
    if (tier.window_ms === null) return "only the first tier may be raw";
    if (tier.window_ms <= prevWindow) return "tier windows must strictly increase";
    prevWindow = tier.window_ms;
  }
  let prevKeep: number | null = -1;
  for (const tier of tiers) {
    if (prevKeep === null && tier.keep_for_ms !== null) {
      return "keep_for must be non-decreasing across tiers";
    }
    if (tier.keep_for_ms !== null && prevKeep !== null && tier.keep_for_ms < prevKeep) {
      return "keep_for must be non-decreasing across tiers";
    }
    prevKeep = tier.keep_for_ms;
  }
  return null;
}

export function renderSettings(root: HTMLElement, state: AppState): void {
  clear(root);
  root.append(el("h2", {}, ["Retention settings"]));
  const table = el("table", { id: "retention-table", class: "data" });
  const status = el("p", { id: "retention-status" });
  const addTier = el("button", { id: "retention-add" }, ["Add tier"]);
  const save = el("button", { id: "retention-save" }, ["Save policy"]);
  root.append(
    el("p", { class: "muted" }, [
      "Tiers downsample readings into coarser windows; keep_for empty means forever. ",
      "Raw readings older than their keep_for are purged once every tier has summarized them.",
    ]),
    table,
    el("div", { class: "controls" }, [addTier, save]),
    status,
  );

  let tiers: RetentionTier[] = [];

  const render = () => {
    clear(table);
    table.append(
      el("tr", {}, [
        el("th", {}, ["window"]),
        el("th", {}, ["keep for"]),
        el("th", {}, [""]),
      ]),
    );
    tiers.forEach((tier, index) => {
      const windowInput = el("input", {
        class: "tier-window",
        value: fmtWindow(tier.window_ms),
        "data-index": String(index),
      });
      if (index === 0) windowInput.setAttribute("disabled", "disabled"); // raw stays raw
      const keepInput = el("input", {
        class: "tier-keep",
        value: tier.keep_for_ms === null ? "" : fmtWindow(tier.keep_for_ms),
        placeholder: "forever",
        "data-index": String(index),
      });
      const remove = el("button", {}, ["remove"]);
      if (index === 0) remove.setAttribute("disabled", "disabled");
      windowInput.addEventListener("change", () => {
        tiers[index].window_ms = parseWindow((windowInput as HTMLInputElement).value);
      });
      keepInput.addEventListener("change", () => {
        const raw = (keepInput as HTMLInputElement).value.trim();
        tiers[index].keep_for_ms = raw === "" ? null : parseWindow(raw);
      });
      remove.addEventListener("click", () => {
        tiers.splice(index, 1);
        render();
      });
      table.append(el("tr", {}, [el("td", {}, [windowInput]), el("td", {}, [keepInput]), el("td", {}, [remove])]));
    });
  };

  addTier.addEventListener("click", () => {
    const last = tiers[tiers.length - 1];
    tiers.push({ window_ms: (last?.window_ms ?? 0) + 3_600_000 || 3_600_000, keep_for_ms: null });
    render();
  });

  save.addEventListener("click", async () => {
    const problem = validateTiers(tiers);
    if (problem) {
      status.textContent = problem;
      status.className = "error";
      return;
    }
    try {
      await state.api.setRetention({ tiers });
      status.textContent = "policy saved";
      status.className = "muted";
    } catch (err) {
      status.textContent = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
      status.className = "error";
    }
  });

  void state.api
    .retention()
    .then((policy: RetentionPolicy) => {
      tiers = policy.tiers.map((t) => ({ ...t }));
      render();
    })
    .catch((err) => {
      status.textContent = err instanceof Error ? err.message : String(err);
    });
}
