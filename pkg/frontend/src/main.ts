/** Entry point: wires the login form, the store, the push channel, and the
 * camera stream to the page.  All protocol details live in api.ts/store.ts;
 * this file only connects them to DOM events. */

import { CommandError, ServerApi } from "./api.js";
import { DashboardStore } from "./store.js";
import * as ui from "./ui.js";
import { Device } from "./wire.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const api = new ServerApi();
const store = new DashboardStore();

let windowS = 3600;
let clockOffset = 0; // start-of-run clock, so chart ticks show wall time
let connected = false;
let closePush: (() => void) | null = null;
const cameraAbort = new AbortController();

/** Sends one command; reconciles the optimistic tile with the reply. */
async function issue(device: string, property: string, value: string, optimistic: boolean): Promise<void> {
  try {
    const ticket = await api.command(device, property, value);
    if (optimistic) store.confirmTicket(device, ticket);
  } catch (error) {
    if (optimistic) store.revert(device);
    const message = error instanceof CommandError ? error.message : String(error);
    store.toast(store.simTime, "CommandRejected", `${device}: ${message}`, "Alert");
  }
}

function deviceOfKind(kind: string): Device | null {
  for (const device of store.devices.values()) {
    if (device.kind === kind) return device;
  }
  return null;
}

const handlers: ui.Handlers = {
  toggle(device) {
    const value = device.state === "On" ? "off" : "on";
    void issue(device.name, "state", value, store.beginCommand(device.name, "state", value));
  },
  setLevel(device, level) {
    const value = String(Math.round(level));
    void issue(device.name, "level", value, store.beginCommand(device.name, "level", value));
  },
  setPoint(device, value) {
    if (!Number.isFinite(value)) return;
    void issue(device.name, "set_point", String(value), false);
  },
  setMode(name) {
    void issue("system", "mode", name, false);
  },
  setArmed(on) {
    void issue("system", "armed", on ? "on" : "off", false);
  },
  gimbal(axis, step) {
    const device = deviceOfKind(axis);
    if (!device) return;
    const value = String(step);
    void issue(device.name, axis, value, store.beginCommand(device.name, axis, value));
  },
  setWindow(seconds) {
    windowS = seconds;
    el<HTMLButtonElement>("win-1h").classList.toggle("active", seconds === 3600);
    el<HTMLButtonElement>("win-24h").classList.toggle("active", seconds === 86400);
    void refreshHistory().then(render);
  },
};

async function refreshHistory(): Promise<void> {
  const sensors = [...store.devices.values()].filter(
    (device) => device.kind === "temperature" || device.kind === "light",
  );
  const to = store.simTime;
  const from = Math.max(0, to - windowS);
  await Promise.all(
    sensors.map(async (device) => {
      store.loadHistory(device.name, await api.history(device.name, from, to));
    }),
  );
}

let renderQueued = false;

function render(): void {
  ui.renderTiles(el("tiles"), store, handlers);
  ui.renderModes(el("modes"), store, handlers);
  ui.renderEvents(el("events"), store);
  ui.renderToasts(el("toasts"), store);
  ui.renderStatus(el("status"), store, connected);
  ui.renderCharts(el("charts"), store, windowS, clockOffset);
  ui.renderCameraMeta(el("camera-meta"), store);
}

function scheduleRender(): void {
  if (renderQueued) return;
  renderQueued = true;
  requestAnimationFrame(() => {
    renderQueued = false;
    render();
  });
}

async function pumpCamera(canvas: HTMLCanvasElement): Promise<void> {
  for (;;) {
    try {
      await api.streamCamera((frame) => ui.paintFrame(canvas, frame), cameraAbort.signal);
    } catch {
      // fall through to the retry delay
    }
    if (cameraAbort.signal.aborted) return;
    await new Promise((resolve) => setTimeout(resolve, 2000));
    if (cameraAbort.signal.aborted) return;
  }
}

async function bootstrap(): Promise<void> {
  const [devices, modes, events, status] = await Promise.all([
    api.devices(),
    api.modes(),
    api.events(),
    api.status(),
  ]);
  store.loadDevices(devices);
  store.loadModes(modes);
  store.loadEvents(events);
  store.simTime = status.sim_time;
  clockOffset = (((status.time_of_day - status.sim_time) % 86400) + 86400) % 86400;
  await refreshHistory();

  closePush = api.openPushChannel((record) => {
    connected = true;
    store.applyPush(record);
  });
  connected = true;
  void pumpCamera(el<HTMLCanvasElement>("camera"));
  setInterval(() => store.expirePending(Date.now()), 1000);

  store.subscribe(scheduleRender);
  render();
}

function wireStaticControls(): void {
  el<HTMLButtonElement>("win-1h").addEventListener("click", () => handlers.setWindow(3600));
  el<HTMLButtonElement>("win-24h").addEventListener("click", () => handlers.setWindow(86400));
  el<HTMLInputElement>("armed").addEventListener("change", (event) => {
    handlers.setArmed((event.target as HTMLInputElement).checked);
  });
  el<HTMLButtonElement>("pan-left").addEventListener("click", () => handlers.gimbal("pan", -5));
  el<HTMLButtonElement>("pan-right").addEventListener("click", () => handlers.gimbal("pan", 5));
  el<HTMLButtonElement>("tilt-up").addEventListener("click", () => handlers.gimbal("tilt", 5));
  el<HTMLButtonElement>("tilt-down").addEventListener("click", () => handlers.gimbal("tilt", -5));
}

function wireLogin(): void {
  const form = el<HTMLFormElement>("login-form");
  const error = el("login-error");
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const user = el<HTMLInputElement>("login-user").value;
    const password = el<HTMLInputElement>("login-password").value;
    void api.login(user, password).then((result) => {
      if (!result.ok) {
        error.textContent = result.message ?? "login failed";
        return;
      }
      store.user = result.user ?? user;
      el("login").hidden = true;
      el("app").hidden = false;
      void bootstrap();
    });
  });
}

window.addEventListener("beforeunload", () => {
  closePush?.();
  cameraAbort.abort();
});

wireLogin();
wireStaticControls();
