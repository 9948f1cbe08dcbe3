/** Renders a UiSessionView into DOM. Rendering is a pure function of the
 * view, so replaying the same response log repaints the same pixels.
 */

import type { Action } from "./types.js";
import type { DriftPoint, UiSessionView } from "./view.js";

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function pngSrc(base64: string): string {
  return `data:image/png;base64,${base64}`;
}

function describeAction(action: Action): string {
  const parts: string[] = [];
  if (action.move !== 0) parts.push(`move ${action.move > 0 ? "+1" : "-1"}`);
  if (action.strafe !== 0) parts.push(`strafe ${action.strafe > 0 ? "+1" : "-1"}`);
  if (action.turn !== 0) parts.push(`turn ${action.turn > 0 ? "+1" : "-1"}`);
  if (action.jump !== 0) parts.push("jump");
  return parts.length > 0 ? parts.join(", ") : "idle";
}

function stateRows(label: string, state: number[] | null): string {
  if (state === null) {
    return `<tr><th>${label}</th><td colspan="4">-</td></tr>`;
  }
  const cells = state.map((v) => `<td>${v.toFixed(2)}</td>`).join("");
  return `<tr><th>${label}</th>${cells}</tr>`;
}

function renderBanner(view: UiSessionView): string {
  if (view.error === null) {
    return "";
  }
  const hint = view.stale
    ? ' <button class="reconnect" type="button">start a new session</button>'
    : "";
  return `<div class="error-banner" role="alert">${escapeHtml(view.error)}${hint}</div>`;
}

function renderFrames(view: UiSessionView): string {
  if (view.modelFrame === null) {
    return '<section class="frame-panel"><p class="placeholder">no frames yet</p></section>';
  }
  const model = `<figure class="model-frame"><img alt="model frame" src="${pngSrc(view.modelFrame)}"><figcaption>model</figcaption></figure>`;
  const oracle =
    view.oracleFrame !== null
      ? `<figure class="oracle-frame"><img alt="oracle frame" src="${pngSrc(view.oracleFrame)}"><figcaption>oracle</figcaption></figure>`
      : "";
  const badge =
    view.ssimLatest !== null
      ? `<span class="ssim-badge">SSIM ${view.ssimLatest.toFixed(3)}</span>`
      : "";
  return `<section class="frame-panel">${model}${oracle}${badge}</section>`;
}

function renderBuffer(view: UiSessionView): string {
  const cards = view.buffer
    .map((entry) => {
      const hit = view.retrievedHighlights.has(entry.frameIndex);
      const cls = hit ? "buffer-entry retrieved" : "buffer-entry";
      return (
        `<figure class="${cls}" data-frame-index="${entry.frameIndex}">` +
        `<img alt="frame ${entry.frameIndex}" src="${pngSrc(entry.thumbPng)}">` +
        `<figcaption>${entry.frameIndex}</figcaption></figure>`
      );
    })
    .join("");
  return `<section class="buffer-strip">${cards}</section>`;
}

function renderPose(view: UiSessionView): string {
  return (
    '<section class="pose-hud"><table>' +
    "<tr><th></th><th>x</th><th>y</th><th>z</th><th>yaw</th></tr>" +
    stateRows("true", view.trueState) +
    stateRows("predicted", view.predictedState) +
    "</table></section>"
  );
}

const CHART_WIDTH = 320;
const CHART_HEIGHT = 96;

function chartPoints(drift: readonly DriftPoint[]): { x: number; y: number }[] {
  const scored = drift.filter((p) => p.ssim !== null);
  const span = Math.max(drift.length - 1, 1);
  return scored.map((p) => ({
    x: ((p.step - 1) / span) * CHART_WIDTH,
    y: CHART_HEIGHT - (p.ssim as number) * CHART_HEIGHT,
  }));
}

function renderDrift(view: UiSessionView): string {
  const points = chartPoints(view.drift);
  const line =
    points.length > 1
      ? `<polyline fill="none" stroke="currentColor" points="${points
          .map((p) => `${p.x.toFixed(1)},${p.y.toFixed(1)}`)
          .join(" ")}"/>`
      : "";
  const dots = points
    .map(
      (p) =>
        `<circle class="drift-point" cx="${p.x.toFixed(1)}" cy="${p.y.toFixed(1)}" r="1.5"/>`,
    )
    .join("");
  return (
    '<section class="drift-chart">' +
    `<svg viewBox="0 0 ${CHART_WIDTH} ${CHART_HEIGHT}" width="${CHART_WIDTH}" height="${CHART_HEIGHT}">` +
    `${line}${dots}</svg>` +
    `<span class="drift-count">${view.drift.length} actions</span>` +
    "</section>"
  );
}

function renderHistory(view: UiSessionView): string {
  const recent = view.actionHistory.slice(-12);
  const items = recent
    .map(
      (record) =>
        `<li value="${record.step}">${escapeHtml(describeAction(record.action))}</li>`,
    )
    .join("");
  return `<section class="action-log"><ol>${items}</ol></section>`;
}

function renderHeader(view: UiSessionView): string {
  if (view.sessionId === null) {
    return '<header class="session-header">not connected</header>';
  }
  const fields = [
    `session ${escapeHtml(view.sessionId)}`,
    `variant ${escapeHtml(view.variant ?? "?")}`,
    `mode ${escapeHtml(view.mode ?? "?")}`,
    `frame ${view.frameIndex ?? "?"}`,
  ];
  return `<header class="session-header">${fields.join(" | ")}</header>`;
}

export function renderHtml(view: UiSessionView): string {
  return (
    '<div class="play-ui">' +
    renderBanner(view) +
    renderHeader(view) +
    renderFrames(view) +
    renderBuffer(view) +
    renderPose(view) +
    renderDrift(view) +
    renderHistory(view) +
    "</div>"
  );
}

export function render(view: UiSessionView, root: HTMLElement): void {
  root.innerHTML = renderHtml(view);
}
