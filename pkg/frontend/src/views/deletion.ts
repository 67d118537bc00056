/**
 * Selective deletion: series picker + range picker, with a mandatory
 * preview of the affected point count before the destructive confirm.
 */

import { ApiError } from "../api.js";
import { AppState, clear, el } from "../state.js";

export function renderDeletion(root: HTMLElement, state: AppState): void {
  clear(root);
  root.append(el("h2", {}, ["Delete data"]));
  const picker = el("select", { id: "delete-series", multiple: "multiple" });
  const fromInput = el("input", { id: "delete-from", placeholder: "from (epoch ms)" });
  const toInput = el("input", { id: "delete-to", placeholder: "to (epoch ms, exclusive)" });
  const previewButton = el("button", { id: "delete-preview" }, ["Preview"]);
  const confirmButton = el("button", {
    id: "delete-confirm",
    disabled: "disabled",
    class: "danger",
  }, ["Delete"]);
  const result = el("p", { id: "delete-result" });
  root.append(
    el("p", { class: "muted" }, [
      "Deletion masks the points immediately and erases them physically at the next compaction. ",
      "Whole-home purges go through the approvals workflow instead.",
    ]),
    el("div", { class: "controls" }, [
      el("label", {}, ["series ", picker]),
      el("label", {}, ["from ", fromInput]),
      el("label", {}, ["to ", toInput]),
      previewButton,
      confirmButton,
    ]),
    result,
  );

  void state.api
    .series()
    .then((inventory) => {
      for (const info of inventory) {
        picker.append(
          el("option", { value: info.series_id }, [
            `${info.metric} ${info.label ? `(${info.label})` : info.series_id}`,
          ]),
        );
      }
    })
    .catch((err) => {
      result.textContent = err instanceof Error ? err.message : String(err);
    });

  const selection = () => ({
    selector: Array.from((picker as HTMLSelectElement).options)
      .filter((o) => o.selected)
      .map((o) => o.value),
    t_from: parseInt((fromInput as HTMLInputElement).value, 10),
    t_to: parseInt((toInput as HTMLInputElement).value, 10),
  });

  let previewed: { selector: string[]; t_from: number; t_to: number } | null = null;

  previewButton.addEventListener("click", async () => {
    const sel = selection();
    confirmButton.setAttribute("disabled", "disabled");
    previewed = null;
    if (!sel.selector.length || isNaN(sel.t_from) || isNaN(sel.t_to)) {
      result.textContent = "pick at least one series and a valid range";
      return;
    }
    try {
      const preview = await state.api.deletionPreview(sel.selector, sel.t_from, sel.t_to);
      previewed = sel;
      result.textContent = `${preview.affected_points} points in ${sel.selector.length} series would be deleted`;
      confirmButton.removeAttribute("disabled");
    } catch (err) {
      result.textContent = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
  });

  confirmButton.addEventListener("click", async () => {
    if (!previewed) return; // confirm is only reachable through preview
    try {
      const outcome = await state.api.deleteRange(
        previewed.selector,
        previewed.t_from,
        previewed.t_to,
      );
      result.textContent = `deleted; tombstone ${outcome.tombstone}`;
      confirmButton.setAttribute("disabled", "disabled");
      previewed = null;
    } catch (err) {
      result.textContent = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
  });
}
