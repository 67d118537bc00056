/**
 * Approvals inbox: pending four-eyes requests with approve/reject/execute.
 * The approve control is disabled on the requester's own rows: the
 * four-eyes rule is visible, not just enforced server-side.
 */

import { ApiError, ApprovalRequest } from "../api.js";
import { AppState, clear, el, fmtTime } from "../state.js";

const OPS: Record<string, string> = {
  full_purge: "Delete all readings",
  reinitialize: "Factory reset",
  ownership_transfer: "Transfer ownership",
  share_grant_create: "Create share grant",
};

export function renderApprovals(root: HTMLElement, state: AppState): void {
  clear(root);
  root.append(el("h2", {}, ["Approvals"]));
  const status = el("p", { id: "approvals-status", class: "muted" });
  const table = el("table", { id: "approvals-table", class: "data" });
  root.append(
    el("p", { class: "muted" }, [
      "Sensitive operations need a second household member: the requester cannot approve their own request.",
    ]),
    table,
    status,
  );

  const render = (requests: ApprovalRequest[]) => {
    clear(table);
    table.append(
      el("tr", {}, [
        el("th", {}, ["operation"]),
        el("th", {}, ["requested by"]),
        el("th", {}, ["state"]),
        el("th", {}, ["expires"]),
        el("th", {}, ["actions"]),
      ]),
    );
    for (const request of requests) {
      const mine = request.requested_by === state.principalId;
      const row = el("tr", { "data-request": request.id, "data-state": request.state });
      const approve = el("button", { class: "approve" }, ["Approve"]);
      if (mine || request.state !== "pending") approve.setAttribute("disabled", "disabled");
      if (mine) approve.setAttribute("title", "You requested this; a second member must approve.");
      const reject = el("button", { class: "reject" }, ["Reject"]);
      if (request.state !== "pending") reject.setAttribute("disabled", "disabled");
      const execute = el("button", { class: "execute" }, ["Execute"]);
      if (request.state !== "approved") execute.setAttribute("disabled", "disabled");

      approve.addEventListener("click", () => void act(() => state.api.approve(request.id)));
      reject.addEventListener("click", () => void act(() => state.api.reject(request.id)));
      execute.addEventListener("click", () => void act(() => state.api.execute(request.id)));

      row.append(
        el("td", {}, [OPS[request.op] ?? request.op]),
        el("td", {}, [request.requested_by + (mine ? " (you)" : "")]),
        el("td", { class: `state-${request.state}` }, [request.state]),
        el("td", {}, [fmtTime(request.expires_at)]),
        el("td", {}, [approve, reject, execute]),
      );
      table.append(row);
    }
  };

  const act = async (fn: () => Promise<unknown>) => {
    status.textContent = "";
    try {
      await fn();
      await load();
    } catch (err) {
      status.textContent = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
  };

  const load = async () => {
    try {
      render(await state.api.approvals());
    } catch (err) {
      status.textContent = err instanceof Error ? err.message : String(err);
    }
  };
  void load();
}
