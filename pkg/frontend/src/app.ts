/** Browser wiring: forms on the left, live views on the right. All numbers
 * on screen come from service responses; this file only moves them around. */

import { ApiError, ApsClient } from "./client.js";
import { renderEstimates, renderRecommendation, renderWhatIf, StaleViewError } from "./render.js";
import { validateBatchRows, type BatchRowInput } from "./validate.js";
import type { SessionView } from "./types.js";

interface AppState {
  client: ApsClient | null;
  sessionId: string | null;
  view: SessionView | null;
}

const state: AppState = { client: null, sessionId: null, view: null };

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setStatus(message: string, isError = false): void {
  const box = el<HTMLElement>("status");
  box.textContent = message;
  box.className = isError ? "status error" : "status";
}

async function refreshView(): Promise<void> {
  if (!state.client || !state.sessionId) return;
  state.view = await state.client.getSession(state.sessionId);
  try {
    el<HTMLElement>("estimates").innerHTML = renderEstimates(state.view);
  } catch (err) {
    if (err instanceof StaleViewError) {
      el<HTMLElement>("estimates").innerHTML =
        `<p class="status error">${err.message}</p>`;
      return;
    }
    throw err;
  }
  el<HTMLElement>("session-hash").textContent = state.view.state_hash ?? "";
}

function reportApiError(err: unknown): void {
  if (err instanceof ApiError) {
    setStatus(err.field ? `${err.field}: ${err.message}` : err.message, true);
  } else {
    setStatus(String(err), true);
  }
}

function connectHandlers(): void {
  el<HTMLFormElement>("create-form").addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const base = el<HTMLInputElement>("base-url").value.replace(/\/$/, "");
    state.client = new ApsClient(base);
    const budget = Number(el<HTMLInputElement>("budget").value);
    const categories = el<HTMLTextAreaElement>("categories").value
      .split("\n")
      .map((line) => line.trim())
      .filter(Boolean)
      .map((line) => {
        const parts = line.split(",").map((s) => s.trim());
        const theta = parts[2];
        return {
          name: parts[0] ?? "",
          weight: Number(parts[1] ?? NaN),
          ...(theta ? { theta: Number(theta) } : {}),
        };
      });
    const theta0 = el<HTMLInputElement>("theta0").value;
    try {
      const view = await state.client.createSession({
        budget,
        categories,
        ...(theta0 ? { theta0: Number(theta0) } : {}),
      });
      state.sessionId = view.id;
      setStatus(`session ${view.id} created`);
      buildBatchRows(view);
      buildThetaEditors(view);
      await refreshView();
    } catch (err) {
      reportApiError(err);
    }
  });

  el<HTMLFormElement>("batch-form").addEventListener("submit", async (ev) => {
    ev.preventDefault();
    if (!state.client || !state.sessionId || !state.view) return;
    const rows: BatchRowInput[] = state.view.categories.map((c) => ({
      category: c.name,
      samples: el<HTMLInputElement>(`samples-${c.name}`).value || "0",
      positives: el<HTMLInputElement>(`positives-${c.name}`).value || "0",
    }));
    const errors = validateBatchRows(rows);
    const errBox = el<HTMLElement>("batch-errors");
    if (errors.length) {
      errBox.innerHTML = errors
        .map((e) => `<li>${rows[e.row]?.category ?? "?"} ${e.field}: ${e.message}</li>`)
        .join("");
      return;
    }
    errBox.innerHTML = "";
    try {
      await state.client.recordBatch(
        state.sessionId,
        rows.map((r) => ({
          category: r.category,
          samples: Number(r.samples),
          positives: Number(r.positives),
        })),
      );
      setStatus("batch recorded");
      await refreshView();
    } catch (err) {
      reportApiError(err);
    }
  });

  el<HTMLFormElement>("rec-form").addEventListener("submit", async (ev) => {
    ev.preventDefault();
    if (!state.client || !state.sessionId) return;
    try {
      const rec = await state.client.getRecommendation(
        state.sessionId,
        Number(el<HTMLInputElement>("rec-b").value),
      );
      el<HTMLElement>("recommendation").innerHTML = renderRecommendation(rec);
    } catch (err) {
      reportApiError(err);
    }
  });

  el<HTMLFormElement>("whatif-form").addEventListener("submit", async (ev) => {
    ev.preventDefault();
    if (!state.client || !state.sessionId || !state.view) return;
    const theta: Record<string, number> = {};
    for (const c of state.view.categories) {
      const raw = el<HTMLInputElement>(`theta-${c.name}`).value;
      if (raw.trim()) theta[c.name] = Number(raw);
    }
    const theta0Raw = el<HTMLInputElement>("whatif-theta0").value;
    try {
      const res = await state.client.whatIf(state.sessionId, {
        b: Number(el<HTMLInputElement>("whatif-b").value),
        ...(Object.keys(theta).length ? { theta } : {}),
        ...(theta0Raw.trim() ? { theta0: Number(theta0Raw) } : {}),
      });
      el<HTMLElement>("whatif-result").innerHTML = renderWhatIf(res);
    } catch (err) {
      reportApiError(err);
    }
  });
}

function buildBatchRows(view: SessionView): void {
  el<HTMLElement>("batch-rows").innerHTML = view.categories
    .map(
      (c) =>
        `<div class="batch-row"><label>${c.name}</label>` +
        `<input id="samples-${c.name}" type="number" min="0" placeholder="samples">` +
        `<input id="positives-${c.name}" type="number" min="0" placeholder="positives"></div>`,
    )
    .join("");
}

function buildThetaEditors(view: SessionView): void {
  el<HTMLElement>("theta-editors").innerHTML = view.categories
    .map(
      (c) =>
        `<div class="theta-row"><label>θ ${c.name}</label>` +
        `<input id="theta-${c.name}" type="number" step="any" ` +
        `placeholder="${c.theta ?? "unset"}"></div>`,
    )
    .join("");
}

document.addEventListener("DOMContentLoaded", () => {
  connectHandlers();
  el<HTMLElement>("recommendation").innerHTML = renderRecommendation(null);
});
