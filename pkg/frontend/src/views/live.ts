import { SeriesInfo } from "../api.js";
import { AppState, clear, el, fmtTime } from "../state.js";

let timer: ReturnType<typeof setInterval> | null = null;

export function stopLiveRefresh(): void {
  if (timer !== null) {
    clearInterval(timer);
    timer = null;
  }
}

export function renderLive(root: HTMLElement, state: AppState): void {
  clear(root);
  stopLiveRefresh();
  const table = el("table", { id: "live-table", class: "data" });
  table.append(
    el("tr", {}, [
      el("th", {}, ["series"]),
      el("th", {}, ["room"]),
      el("th", {}, ["value"]),
      el("th", {}, ["when"]),
    ]),
  );
  const note = el("p", { class: "muted" }, [
    state.role === "guest"
      ? "Live raw values are not visible to guests; see the Explorer's hourly view."
      : "Auto-refreshing every 5 seconds.",
  ]);
  root.append(el("h2", {}, ["Live"]), note, table);
  if (state.role === "guest") return;

  const refresh = async () => {
    try {
      const [inventory, values] = await Promise.all([state.api.series(), state.api.latest()]);
      const byId = new Map<string, SeriesInfo>(inventory.map((s) => [s.series_id, s]));
      while (table.rows.length > 1) table.deleteRow(1);
      for (const [sid, point] of Object.entries(values).sort()) {
        const info = byId.get(sid);
        const row = el("tr", { "data-series": sid });
        row.append(
          el("td", {}, [info ? `${info.metric}` : sid]),
          el("td", {}, [info?.label ?? "-"]),
          el("td", { class: "value" }, [`${point.value} ${info?.unit ?? ""}`]),
          el("td", {}, [fmtTime(point.ts)]),
        );
        table.append(row);
      }
    } catch (err) {
      stopLiveRefresh(); // a dead session routes to login via the API hook
      note.textContent = err instanceof Error ? err.message : String(err);
    }
  };
  void refresh();
  timer = setInterval(() => void refresh(), 5000);
}
