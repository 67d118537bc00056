/**
 * Lifecycle: archive export/import plus the reinit / handover / transfer
 * wizards. Each wizard surfaces the four-eyes approval state and only
 * offers execution once the matching request is approved.
 */

import { ApiError, ApprovalRequest } from "../api.js";
import { AppState, clear, el } from "../state.js";

function download(filename: string, data: ArrayBuffer): void {
  const blob = new Blob([data], { type: "application/octet-stream" });
  const link = document.createElement("a");
  link.href = URL.createObjectURL(blob);
  link.download = filename;
  link.click();
  URL.revokeObjectURL(link.href);
}

export function renderLifecycle(root: HTMLElement, state: AppState): void {
  clear(root);
  root.append(el("h2", {}, ["Lifecycle"]));
  const status = el("p", { id: "lifecycle-status" });

  // export / import ----------------------------------------------------
  const exportButton = el("button", { id: "lifecycle-export" }, ["Download full export"]);
  exportButton.addEventListener("click", async () => {
    try {
      const data = await state.api.exportArchive({ include_annotations: true });
      download("hub-export.skar", data);
      status.textContent = `exported ${data.byteLength} bytes`;
    } catch (err) {
      status.textContent = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
  });
  const importInput = el("input", { id: "lifecycle-import-file", type: "file" });
  const importButton = el("button", { id: "lifecycle-import" }, ["Import (merge)"]);
  importButton.addEventListener("click", async () => {
    const file = (importInput as HTMLInputElement).files?.[0];
    if (!file) {
      status.textContent = "choose an archive file first";
      return;
    }
    try {
      const report = await state.api.importArchive(await file.arrayBuffer());
      status.textContent = `imported: +${report.series_added} series, +${report.points_added} points, ${report.conflicts} conflicts`;
    } catch (err) {
      status.textContent = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
  });

  root.append(
    el("h3", {}, ["Backup & restore"]),
    el("div", { class: "controls" }, [exportButton, importInput, importButton]),
  );

  // wizards -------------------------------------------------------------
  const wizards = el("div", { id: "lifecycle-wizards" });
  root.append(el("h3", {}, ["Reset, handover, legacy"]), wizards, status);

  const renderWizards = async () => {
    const requests = await state.api.approvals();
    clear(wizards);
    for (const [op, title, hint] of [
      ["reinitialize", "Factory reset", "erases every reading, member and setting"],
      ["ownership_transfer", "Transfer ownership", "promotes a pre-registered heir"],
    ] as const) {
      const mine = requests.filter((r) => r.op === op);
      const open = mine.find((r) => r.state === "pending" || r.state === "approved");
      const box = el("div", { class: "wizard", "data-op": op });
      box.append(el("h4", {}, [title]), el("p", { class: "muted" }, [hint]));
      if (!open) {
        box.append(el("p", { class: "muted" }, ["No open request. Create one under Approvals."]));
      } else {
        box.append(requestStateLine(open));
        if (op === "reinitialize") {
          const keepExport = el("input", { type: "checkbox", id: "handover-keep-export" });
          const handover = el("button", { id: "lifecycle-handover" }, ["Handover (export + reset)"]);
          const execute = el("button", { id: "lifecycle-reinit" }, ["Factory reset now"]);
          if (open.state !== "approved") {
            handover.setAttribute("disabled", "disabled");
            execute.setAttribute("disabled", "disabled");
          }
          handover.addEventListener("click", () => void confirmAnd(op, async () => {
            const result = await state.api.handover(open.id, (keepExport as HTMLInputElement).checked);
            if (result instanceof ArrayBuffer) download("handover-export.skar", result);
          }));
          execute.addEventListener("click", () => void confirmAnd(op, () => state.api.reinit(open.id)));
          box.append(
            el("div", { class: "controls" }, [
              el("label", {}, [keepExport, " keep an export"]),
              handover,
              execute,
            ]),
          );
        } else {
          const execute = el("button", { id: "lifecycle-transfer" }, ["Transfer now"]);
          if (open.state !== "approved") execute.setAttribute("disabled", "disabled");
          execute.addEventListener("click", () => void confirmAnd(op, () => state.api.transfer(open.id)));
          box.append(el("div", { class: "controls" }, [execute]));
        }
      }
      wizards.append(box);
    }
  };

  const confirmAnd = async (op: string, fn: () => Promise<unknown>) => {
    // destructive actions always pass an explicit confirm naming the scope
    if (!window.confirm(`Really run ${op}? This affects the whole hub.`)) return;
    try {
      await fn();
      status.textContent = `${op} executed`;
      await renderWizards();
    } catch (err) {
      status.textContent = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
  };

  const requestStateLine = (request: ApprovalRequest): HTMLElement =>
    el("p", { class: `state-${request.state}` }, [
      `request ${request.id}: ${request.state}`,
      request.state === "pending" ? " — waiting for a second member's approval" : "",
    ]);

  void renderWizards().catch((err) => {
    status.textContent = err instanceof Error ? err.message : String(err);
  });
}
