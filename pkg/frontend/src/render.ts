/** Pure HTML renderers. Every number on screen comes verbatim from a service
 * payload: display text may be rounded for humans, but each value cell also
 * carries a data-exact attribute holding the payload value unmodified, which
 * is what the contract tests pin. */

import type { Recommendation, SessionView, WhatIfResponse } from "./types.js";

export class StaleViewError extends Error {}

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function cell(value: number | string | null, digits = 4): string {
  if (value === null) return `<td class="value" data-exact="null">–</td>`;
  const exact = escapeHtml(String(value));
  const text =
    typeof value === "number" && !Number.isInteger(value)
      ? value.toFixed(digits)
      : String(value);
  return `<td class="value" data-exact="${exact}">${escapeHtml(text)}</td>`;
}

/** Per-category estimates plus the overall positivity line. */
export function renderEstimates(view: SessionView): string {
  const rows = view.categories
    .map((c) => {
      const point = c.empirical ?? c.posterior_mean;
      if (point < c.interval.lower - 1e-12 || point > c.interval.upper + 1e-12) {
        throw new StaleViewError(
          `interval for ${c.name} does not contain its point estimate; refresh the session view`,
        );
      }
      return (
        `<tr data-category="${escapeHtml(c.name)}">` +
        `<th scope="row">${escapeHtml(c.name)}</th>` +
        cell(c.weight) +
        cell(c.samples) +
        cell(c.positives) +
        cell(c.empirical) +
        cell(c.posterior_mean) +
        `<td class="value interval" data-exact-lower="${escapeHtml(String(c.interval.lower))}"` +
        ` data-exact-upper="${escapeHtml(String(c.interval.upper))}">` +
        `[${c.interval.lower.toFixed(4)}, ${c.interval.upper.toFixed(4)}]</td>` +
        `</tr>`
      );
    })
    .join("");
  const overall =
    view.overall.r_hat === null
      ? `<p class="overall" data-exact="null">overall estimate pending: some categories have no samples yet</p>`
      : `<p class="overall" data-exact="${escapeHtml(String(view.overall.r_hat))}">` +
        `overall positivity ${view.overall.r_hat.toFixed(4)}</p>`;
  const note =
    `<p class="interval-note" data-eta="${escapeHtml(String(view.eta))}" ` +
    `data-budget="${view.budget}">intervals from the session's posterior at ` +
    `its per-step failure budget (η=${view.eta}, budget ${view.budget})</p>`;
  return (
    `<section class="estimates" data-session="${escapeHtml(view.id)}" data-n="${view.n}">` +
    `<table><thead><tr><th>category</th><th>weight</th><th>samples</th>` +
    `<th>positives</th><th>observed</th><th>posterior mean</th>` +
    `<th>interval</th></tr></thead><tbody>${rows}</tbody></table>` +
    overall +
    note +
    `</section>`
  );
}

/** Next-batch allocation panel: one bar per category with binding badges.
 * Bar widths are presentation geometry (tau / b); the numbers themselves are
 * passed through untouched. */
export function renderRecommendation(rec: Recommendation | null): string {
  if (rec === null) {
    return (
      `<section class="recommendation empty">` +
      `<p class="call-to-action">No recommendation yet — request one to plan the next batch.</p>` +
      `</section>`
    );
  }
  const bars = rec.categories
    .map((c) => {
      const pct = rec.b > 0 ? (100 * c.tau) / rec.b : 0;
      const badge = c.binding
        ? `<span class="badge binding" title="per-category target binds">binding</span>`
        : "";
      return (
        `<div class="bar-row" data-category="${escapeHtml(c.name)}">` +
        `<span class="label">${escapeHtml(c.name)}</span>` +
        `<div class="bar" style="width:${pct.toFixed(2)}%"></div>` +
        `<span class="value tau" data-exact="${escapeHtml(String(c.tau_int))}">${c.tau_int}</span>` +
        `<span class="value u" data-exact="${escapeHtml(String(c.u))}">u=${c.u.toFixed(4)}</span>` +
        `<span class="value t" data-exact="${escapeHtml(String(c.T))}">T=${c.T}</span>` +
        badge +
        `</div>`
      );
    })
    .join("");
  const overallBadge = rec.binding_overall
    ? `<span class="badge binding" title="overall-estimate target binds">overall binding</span>`
    : "";
  return (
    `<section class="recommendation" data-b="${rec.b}">` +
    bars +
    `<footer><span class="total" data-exact="${rec.b}">batch total ${rec.b}</span>` +
    `<span class="lam" data-exact="${escapeHtml(String(rec.lam))}">λ = ${rec.lam.toFixed(4)}</span>` +
    overallBadge +
    `</footer>` +
    `</section>`
  );
}

/** Side-by-side comparison of the current targets vs an edited scenario. */
export function renderWhatIf(res: WhatIfResponse): string {
  return (
    `<section class="whatif">` +
    `<div class="pane current"><h3>current targets</h3>` +
    renderRecommendation(res.current) +
    `</div>` +
    `<div class="pane hypothetical"><h3>edited targets</h3>` +
    renderRecommendation(res.hypothetical) +
    `</div>` +
    `</section>`
  );
}
