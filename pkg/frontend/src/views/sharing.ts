/**
 * Sharing: grant list plus a creation wizard that enforces a non-empty
 * purpose and >= 1 hour resolution before anything reaches the hub, then
 * routes creation through the four-eyes workflow.
 */

import { ApiError, ShareGrant } from "../api.js";
import { AppState, clear, el, fmtTime, fmtWindow } from "../state.js";

export const MIN_GRANT_RESOLUTION_MS = 3_600_000;

export function renderSharing(root: HTMLElement, state: AppState): void {
  clear(root);
  root.append(el("h2", {}, ["Sharing"]));
  const table = el("table", { id: "grants-table", class: "data" });
  const status = el("p", { id: "grants-status" });

  const grantee = el("input", { id: "grant-grantee", placeholder: "who receives the data" });
  const purpose = el("input", { id: "grant-purpose", placeholder: "purpose (required)" });
  const fromInput = el("input", { id: "grant-from", placeholder: "from (epoch ms)" });
  const toInput = el("input", { id: "grant-to", placeholder: "to (epoch ms)" });
  const resolution = el("select", { id: "grant-resolution" });
  for (const [label, ms] of [
    ["1 hour", 3_600_000],
    ["4 hours", 14_400_000],
    ["1 day", 86_400_000],
  ] as const) {
    resolution.append(el("option", { value: String(ms) }, [label]));
  }
  const create = el("button", { id: "grant-create" }, ["Request grant"]);
  root.append(
    el("p", { class: "muted" }, [
      "External sharing is purpose-bound and never finer than hourly aggregates. ",
      "Creating a grant opens a four-eyes request for a second member to approve.",
    ]),
    el("div", { class: "controls" }, [
      el("label", {}, ["grantee ", grantee]),
      el("label", {}, ["purpose ", purpose]),
      el("label", {}, ["from ", fromInput]),
      el("label", {}, ["to ", toInput]),
      el("label", {}, ["resolution ", resolution]),
      create,
    ]),
    table,
    status,
  );

  create.addEventListener("click", async () => {
    status.className = "error";
    const purposeText = (purpose as HTMLInputElement).value.trim();
    if (!purposeText) {
      status.textContent = "a purpose is required";
      return;
    }
    const res = parseInt((resolution as HTMLSelectElement).value, 10);
    if (res < MIN_GRANT_RESOLUTION_MS) {
      status.textContent = "resolution must be at least one hour";
      return;
    }
    try {
      const request = await state.api.createGrantRequest({
        grantee: (grantee as HTMLInputElement).value || "external party",
        purpose: purposeText,
        selector: null,
        t_from: parseInt((fromInput as HTMLInputElement).value, 10),
        t_to: parseInt((toInput as HTMLInputElement).value, 10),
        max_resolution_ms: res,
      });
      status.className = "muted";
      status.textContent = `grant request ${request.id} pending approval by a second member`;
    } catch (err) {
      status.textContent = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
  });

  const render = (grants: ShareGrant[]) => {
    clear(table);
    table.append(
      el("tr", {}, [
        el("th", {}, ["grantee"]),
        el("th", {}, ["purpose"]),
        el("th", {}, ["resolution"]),
        el("th", {}, ["expires"]),
        el("th", {}, ["state"]),
        el("th", {}, [""]),
      ]),
    );
    for (const grant of grants) {
      const revoke = el("button", { class: "danger" }, ["Revoke"]);
      if (grant.revoked) revoke.setAttribute("disabled", "disabled");
      revoke.addEventListener("click", async () => {
        await state.api.revokeGrant(grant.id);
        render(await state.api.grants());
      });
      table.append(
        el("tr", { "data-grant": grant.id }, [
          el("td", {}, [grant.grantee]),
          el("td", {}, [grant.purpose]),
          el("td", {}, [fmtWindow(grant.max_resolution_ms)]),
          el("td", {}, [fmtTime(grant.expires_at)]),
          el("td", {}, [grant.revoked ? "revoked" : "active"]),
          el("td", {}, [revoke]),
        ]),
      );
    }
  };
  void state.api
    .grants()
    .then(render)
    .catch((err) => {
      status.textContent = err instanceof Error ? err.message : String(err);
    });
}
