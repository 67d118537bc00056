/**
 * Explorer: multi-series charts with range/window/aggregate controls,
 * annotations overlaid on their time ranges, and drag-to-annotate.
 */

import { ApiError } from "../api.js";
import { renderChart } from "../chart.js";
import { AppState, clear, el } from "../state.js";

export interface ExplorerState {
  selected: string[];
  from: number;
  to: number;
  window: string;
  agg: string;
}

export function defaultRange(now: number): { from: number; to: number } {
  return { from: now - 24 * 3_600_000, to: now };
}

export function renderExplorer(
  root: HTMLElement,
  state: AppState,
  view: ExplorerState,
): void {
  clear(root);
  root.append(el("h2", {}, ["Explorer"]));
  const controls = el("div", { class: "controls" });
  const chartBox = el("div", { id: "explorer-chart" });
  const annotationForm = el("div", { id: "annotation-form", class: "hidden" });
  const status = el("p", { id: "explorer-status", class: "muted" });
  root.append(controls, chartBox, annotationForm, status);

  const seriesSelect = el("select", { id: "explorer-series", multiple: "multiple" });
  const windowSelect = el("select", { id: "explorer-window" });
  for (const choice of state.windowChoices()) {
    const option = el("option", { value: choice.value }, [choice.label]);
    option.selected = choice.value === view.window;
    windowSelect.append(option);
  }
  const aggSelect = el("select", { id: "explorer-agg" });
  for (const agg of ["mean", "min", "max", "count", "sum", "last"]) {
    const option = el("option", { value: agg }, [agg]);
    option.selected = agg === view.agg;
    aggSelect.append(option);
  }
  const fromInput = el("input", { id: "explorer-from", value: String(view.from), size: "14" });
  const toInput = el("input", { id: "explorer-to", value: String(view.to), size: "14" });
  const reload = el("button", { id: "explorer-reload" }, ["Reload"]);
  controls.append(
    el("label", {}, ["series ", seriesSelect]),
    el("label", {}, ["window ", windowSelect]),
    el("label", {}, ["aggregate ", aggSelect]),
    el("label", {}, ["from ", fromInput]),
    el("label", {}, ["to ", toInput]),
    reload,
  );

  const loadSeries = async () => {
    const inventory = await state.api.series();
    clear(seriesSelect);
    for (const info of inventory) {
      const label = `${info.metric} ${info.label ? `(${info.label})` : info.series_id}`;
      const option = el("option", { value: info.series_id }, [label]);
      option.selected = view.selected.includes(info.series_id);
      seriesSelect.append(option);
    }
    if (!view.selected.length && inventory.length) {
      view.selected = [inventory[0].series_id];
      const first = seriesSelect.options[0] as HTMLOptionElement | undefined;
      if (first) first.selected = true;
    }
  };

  const draw = async () => {
    status.textContent = "";
    view.from = parseInt((fromInput as HTMLInputElement).value, 10);
    view.to = parseInt((toInput as HTMLInputElement).value, 10);
    view.window = (windowSelect as HTMLSelectElement).value;
    view.agg = (aggSelect as HTMLSelectElement).value;
    // read the selected property from options: selectedOptions tracks the
    // attribute in some DOM implementations and misses dynamic changes
    const chosen = Array.from((seriesSelect as HTMLSelectElement).options)
      .filter((o) => o.selected)
      .map((o) => o.value);
    if (chosen.length) view.selected = chosen;
    if (!view.selected.length) {
      status.textContent = "no series selected";
      return;
    }
    try {
      const [frames, annotations] = await Promise.all([
        state.api.query(view.selected, view.from, view.to, view.window, view.agg),
        state.api.annotations(view.selected, view.from, view.to),
      ]);
      clear(chartBox);
      chartBox.append(
        renderChart(frames, {
          from: view.from,
          to: view.to,
          annotations,
          onRangeSelect: (t0, t1) => openAnnotationForm(t0, t1),
        }),
      );
      const total = frames.reduce((n, f) => n + f.points.length, 0);
      status.textContent = `${total} points / ${annotations.length} annotations`;
    } catch (err) {
      status.textContent =
        err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
  };

  const openAnnotationForm = (t0: number, t1: number) => {
    clear(annotationForm);
    annotationForm.classList.remove("hidden");
    const text = el("input", { id: "annotation-text", placeholder: "what happened here?" });
    const save = el("button", { id: "annotation-save" }, ["Annotate range"]);
    const cancel = el("button", { id: "annotation-cancel" }, ["Cancel"]);
    const info = el("span", { class: "muted" }, [`[${t0} .. ${t1}) `]);
    save.addEventListener("click", async () => {
      try {
        await state.api.addAnnotation(view.selected, t0, t1, (text as HTMLInputElement).value);
        annotationForm.classList.add("hidden");
        await draw();
      } catch (err) {
        info.textContent =
          err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
      }
    });
    cancel.addEventListener("click", () => annotationForm.classList.add("hidden"));
    annotationForm.append(info, text, save, cancel);
  };

  reload.addEventListener("click", () => void draw());
  void loadSeries()
    .then(draw)
    .catch((err) => {
      status.textContent = err instanceof Error ? err.message : String(err);
    });
}
