import { SessionView } from "./session.js";
import { CurvesPayload, QueryPayload, Label } from "./types.js";

/** Pure HTML-string renderers; the entry point wires events by id/class. */

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Color for a decision-score badge: red negative, green positive,
 * saturating with magnitude so boundary instances look pale. */
export function scoreColor(score: number): string {
  const strength = Math.min(1, Math.abs(score));
  const alpha = (0.15 + 0.6 * strength).toFixed(2);
  return score >= 0 ? `rgba(46, 125, 50, ${alpha})` : `rgba(198, 40, 40, ${alpha})`;
}

export function renderBagTable(query: QueryPayload, draft: (Label | null)[]): string {
  const dim = query.features[0]?.length ?? 0;
  const header =
    "<tr><th>#</th><th>score</th>" +
    Array.from({ length: dim }, (_, k) => `<th>f${k}</th>`).join("") +
    "<th>label</th></tr>";
  const rows = query.features
    .map((feats, i) => {
      const score = query.scores[i];
      const badge = `<td><span class="badge" style="background:${scoreColor(score)}">${score.toFixed(3)}</span></td>`;
      const cells = feats.map((v) => `<td>${v.toFixed(4)}</td>`).join("");
      const pick = (value: Label, text: string) =>
        `<button class="label-btn${draft[i] === value ? " picked" : ""}" ` +
        `data-index="${i}" data-label="${value}">${text}</button>`;
      return `<tr>${`<td>${i}</td>`}${badge}${cells}<td>${pick(1, "+1")}${pick(-1, "-1")}</td></tr>`;
    })
    .join("");
  return `<table class="bag-table">${header}${rows}</table>`;
}

/** Inline SVG polyline chart of every curve series. */
export function renderCurves(curves: CurvesPayload | null): string {
  if (!curves || Object.keys(curves.series).length === 0) {
    return '<p class="muted">No ground truth on this dataset, so no live curve.</p>';
  }
  const width = 420;
  const height = 160;
  const pad = 24;
  const colors: Record<string, string> = {
    f1_train: "#1565c0",
    auc_pr_train: "#6a1b9a",
    f1_test: "#2e7d32",
    auc_pr_test: "#ef6c00",
  };
  const entries = Object.entries(curves.series);
  const maxLen = Math.max(...entries.map(([, v]) => v.length));
  const x = (i: number) =>
    pad + (maxLen <= 1 ? 0 : (i * (width - 2 * pad)) / (maxLen - 1));
  const y = (v: number) => height - pad - v * (height - 2 * pad);
  const lines = entries
    .map(([name, values]) => {
      const points = values.map((v, i) => `${x(i).toFixed(1)},${y(v).toFixed(1)}`).join(" ");
      const color = colors[name] ?? "#555";
      return `<polyline fill="none" stroke="${color}" stroke-width="2" points="${points}"/>`;
    })
    .join("");
  const legend = entries
    .map(
      ([name]) =>
        `<span class="legend"><span class="swatch" style="background:${colors[name] ?? "#555"}"></span>${esc(name)}</span>`,
    )
    .join(" ");
  const axis =
    `<line x1="${pad}" y1="${height - pad}" x2="${width - pad}" y2="${height - pad}" stroke="#999"/>` +
    `<line x1="${pad}" y1="${pad}" x2="${pad}" y2="${height - pad}" stroke="#999"/>`;
  return (
    `<svg viewBox="0 0 ${width} ${height}" class="curve-chart">${axis}${lines}</svg>` +
    `<div>${legend}</div>`
  );
}

export function renderStatus(view: SessionView): string {
  if (!view.summary) {
    return "";
  }
  const s = view.summary;
  return (
    `<p><strong>${esc(s.dataset)}</strong> / ${esc(s.strategy)} | ` +
    `labeled ${s.queried} bag(s), ${s.remaining_queries} to go | ` +
    `session <code>${esc(s.id)}</code></p>`
  );
}

export function renderSession(view: SessionView): string {
  const parts: string[] = [renderStatus(view)];
  if (view.error) {
    parts.push(`<div class="banner error">${esc(view.error)} <button id="retry">Retry</button></div>`);
  }
  if (view.notice) {
    parts.push(`<div class="banner notice">${esc(view.notice)}</div>`);
  }
  if (view.phase === "working") {
    parts.push('<p class="muted">Retraining...</p>');
  }
  if (view.phase === "labeling" && view.query) {
    const remaining = view.draft.filter((v) => v === null).length;
    const disabled = remaining > 0 ? " disabled" : "";
    parts.push(`<h3>Bag ${esc(view.query.bag_id)}</h3>`);
    parts.push(renderBagTable(view.query, view.draft));
    parts.push(
      `<button id="submit-labels"${disabled}>Submit labels</button>` +
        (remaining > 0 ? `<span class="muted"> ${remaining} instance(s) unlabeled</span>` : ""),
    );
  }
  if (view.phase === "finished") {
    parts.push("<h3>All positive bags labeled</h3><p>The session is complete.</p>");
  }
  parts.push("<h4>Learning curve</h4>");
  parts.push(renderCurves(view.curves));
  return parts.join("\n");
}
