/** DOM rendering.  Every render reads straight from the store; handlers are
 * injected so this module stays free of transport concerns. */

import { chartGeometry, PADDING } from "./chart.js";
import { Frame } from "./ppm.js";
import { DashboardStore } from "./store.js";
import { Device, unitFor } from "./wire.js";

export interface Handlers {
  toggle(device: Device): void;
  setLevel(device: Device, level: number): void;
  setPoint(device: Device, value: number): void;
  setMode(name: string): void;
  setArmed(on: boolean): void;
  gimbal(axis: "pan" | "tilt", step: number): void;
  setWindow(seconds: number): void;
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function formatValue(device: Device): string {
  if (device.value === null) return "-";
  const unit = unitFor(device.kind);
  const value =
    device.kind === "temperature" ? device.value.toFixed(2) : String(Math.round(device.value));
  return unit ? `${value}${unit}` : value;
}

const TILE_ORDER = ["temperature", "light", "motion", "lamp", "heater", "pan", "tilt"];

export function renderTiles(root: HTMLElement, store: DashboardStore, handlers: Handlers): void {
  const devices = [...store.devices.values()].sort(
    (a, b) => TILE_ORDER.indexOf(a.kind) - TILE_ORDER.indexOf(b.kind) || a.name.localeCompare(b.name),
  );
  root.innerHTML = devices.map((device) => tileHtml(device, store)).join("");
  for (const device of devices) {
    const tile = root.querySelector<HTMLElement>(`[data-device="${CSS.escape(device.name)}"]`);
    if (!tile) continue;
    tile.querySelector<HTMLButtonElement>(".toggle")?.addEventListener("click", () => handlers.toggle(device));
    tile.querySelector<HTMLInputElement>(".level")?.addEventListener("change", (event) => {
      handlers.setLevel(device, Number((event.target as HTMLInputElement).value));
    });
    tile.querySelector<HTMLInputElement>(".set-point")?.addEventListener("change", (event) => {
      handlers.setPoint(device, Number((event.target as HTMLInputElement).value));
    });
  }
}

function tileHtml(device: Device, store: DashboardStore): string {
  const pending = store.isPending(device.name) ? " pending" : "";
  const stateClass = device.state.toLowerCase();
  let controls = "";
  if (device.kind === "lamp") {
    controls = `
      <button class="toggle">${device.state === "On" ? "Turn off" : "Turn on"}</button>
      <input class="level" type="range" min="0" max="100" step="1"
             value="${Math.round(device.value ?? 0)}" title="level">`;
  } else if (device.kind === "heater") {
    const setPoint = device.set_point === null ? "" : `value="${device.set_point}"`;
    controls = `
      <button class="toggle">${device.state === "On" ? "Turn off" : "Turn on"}</button>
      <label class="sp">set point
        <input class="set-point" type="number" step="0.5" ${setPoint}></label>`;
  }
  const shown =
    device.kind === "lamp" && device.state === "Off" && device.value !== null
      ? `level ${Math.round(device.value)}`
      : formatValue(device);
  return `
    <div class="tile ${device.kind}${pending}" data-device="${escapeHtml(device.name)}">
      <div class="tile-head">
        <span class="name">${escapeHtml(device.name)}</span>
        <span class="badge ${stateClass}">${device.state}</span>
      </div>
      <div class="value">${shown}</div>
      <div class="controls">${controls}</div>
    </div>`;
}

export function renderModes(root: HTMLElement, store: DashboardStore, handlers: Handlers): void {
  const buttons = store.modes
    .map((name) => {
      const active = name === store.currentMode ? " active" : "";
      return `<button class="mode${active}" data-mode="${escapeHtml(name)}">${escapeHtml(name)}</button>`;
    })
    .join("");
  root.innerHTML = buttons;
  root.querySelectorAll<HTMLButtonElement>("button.mode").forEach((button) => {
    button.addEventListener("click", () => handlers.setMode(button.dataset.mode ?? ""));
  });
}

export function renderEvents(root: HTMLElement, store: DashboardStore): void {
  const rows = [...store.events]
    .slice(-40)
    .reverse()
    .map((event) => {
      const cls = event.severity === "Alert" ? "alert" : "info";
      const device = event.device ? `<span class="dev">${escapeHtml(event.device)}</span>` : "";
      return `<li class="${cls}"><span class="ts">${event.t.toFixed(1)}s</span>
        <span class="kind">${escapeHtml(event.kind)}</span>${device}
        <span class="msg">${escapeHtml(event.message)}</span></li>`;
    })
    .join("");
  root.innerHTML = rows || `<li class="info empty">no events yet</li>`;
}

export function renderToasts(root: HTMLElement, store: DashboardStore): void {
  root.innerHTML = store.toasts
    .map(
      (toast, index) => `
      <div class="toast ${toast.severity.toLowerCase()}" data-index="${index}">
        <strong>${escapeHtml(toast.kind)}</strong> ${escapeHtml(toast.text)}
      </div>`,
    )
    .join("");
  root.querySelectorAll<HTMLElement>(".toast").forEach((node) => {
    node.addEventListener("click", () => store.dismissToast(Number(node.dataset.index)));
  });
}

export function renderStatus(root: HTMLElement, store: DashboardStore, connected: boolean): void {
  const mode = store.currentMode ?? "-";
  const link = connected ? `<span class="link up">live</span>` : `<span class="link down">reconnecting</span>`;
  root.innerHTML = `
    <span>t = ${store.simTime.toFixed(1)}s</span>
    <span>mode: ${escapeHtml(mode)}</span>
    ${link}
    <span class="user">${escapeHtml(store.user ?? "")}</span>`;
}

const CHART_W = 320;
const CHART_H = 120;

export function renderCharts(
  root: HTMLElement,
  store: DashboardStore,
  windowS: number,
  clockOffset: number,
): void {
  const sensors = [...store.devices.values()].filter((d) => d.kind === "temperature" || d.kind === "light");
  root.innerHTML = sensors
    .map((device) => {
      const series = store.charts.get(device.name) ?? [];
      const geom = chartGeometry(series, store.simTime, windowS, CHART_W, CHART_H, clockOffset);
      const yLabels = geom.yTicks
        .map((tick) => `<text x="2" y="${tick.y + 3}">${tick.label}</text>`)
        .join("");
      const xLabels = geom.xTicks
        .map((tick) => `<text x="${tick.x}" y="${CHART_H - 1}" text-anchor="middle">${tick.label}</text>`)
        .join("");
      return `
      <figure class="chart">
        <figcaption>${escapeHtml(device.name)} (${unitFor(device.kind) || "value"})</figcaption>
        <svg viewBox="0 0 ${CHART_W} ${CHART_H}" preserveAspectRatio="none">
          <rect x="${PADDING}" y="${PADDING}" width="${CHART_W - 2 * PADDING}"
                height="${CHART_H - 2 * PADDING}" class="frame"/>
          <polyline points="${geom.points}" class="series"/>
          ${yLabels}${xLabels}
        </svg>
      </figure>`;
    })
    .join("");
}

export function paintFrame(canvas: HTMLCanvasElement, frame: Frame): void {
  if (canvas.width !== frame.width || canvas.height !== frame.height) {
    canvas.width = frame.width;
    canvas.height = frame.height;
  }
  const context = canvas.getContext("2d");
  if (!context) return;
  context.putImageData(new ImageData(frame.rgba, frame.width, frame.height), 0, 0);
}

export function renderCameraMeta(root: HTMLElement, store: DashboardStore): void {
  root.textContent = `pan ${store.camera.pan.toFixed(1)}°  tilt ${store.camera.tilt.toFixed(1)}°`;
}
