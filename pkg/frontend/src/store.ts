/** All dashboard state, plus the reconciliation rules for server pushes.
 *
 * The server is the source of truth.  Commands show an optimistic pending
 * state immediately, but every tile value ultimately comes from a server
 * message: a STATE push confirms (by ticket) and a DeliveryFailed event
 * reverts to the last server-known state.  One store instance funnels every
 * update so renders never race.
 */

import {
  Device,
  DeviceState,
  EventRow,
  HistoryPoint,
  ModesInfo,
  PushRecord,
  scaleReading,
} from "./wire.js";

export interface ChartPoint {
  t: number;
  value: number;
}

export interface Toast {
  t: number;
  kind: string;
  text: string;
  severity: "Info" | "Alert";
}

interface PendingCommand {
  ticket: number | null; // unknown until the POST reply lands
  shownState: DeviceState;
  shownValue: number | null;
  priorState: DeviceState;
  priorValue: number | null;
  sentAt: number; // wall clock ms
}

const MAX_CHART_POINTS = 5000;
const MAX_EVENTS = 200;
const MAX_TOASTS = 5;

export class DashboardStore {
  user: string | null = null;
  devices = new Map<string, Device>();
  events: EventRow[] = [];
  toasts: Toast[] = [];
  modes: string[] = [];
  currentMode: string | null = null;
  simTime = 0;
  charts = new Map<string, ChartPoint[]>();
  camera = { pan: 0, tilt: 0, counter: -1 };

  private pending = new Map<string, PendingCommand>();
  private listeners: Array<() => void> = [];

  subscribe(listener: () => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((fn) => fn !== listener);
    };
  }

  private changed(): void {
    for (const listener of this.listeners) listener();
  }

  // -- bulk loads from the JSON API ------------------------------------------------

  loadDevices(rows: Device[]): void {
    this.devices = new Map(rows.map((row) => [row.name, { ...row }]));
    this.changed();
  }

  loadModes(info: ModesInfo): void {
    this.modes = info.modes;
    this.currentMode = info.current;
    this.changed();
  }

  loadEvents(rows: EventRow[]): void {
    this.events = rows.slice(-MAX_EVENTS);
    this.changed();
  }

  /** Replaces a chart series; out-of-order rows are dropped, never reordered. */
  loadHistory(device: string, rows: HistoryPoint[]): void {
    const entry = this.devices.get(device);
    const points: ChartPoint[] = [];
    for (const row of rows) {
      if (points.length > 0 && row.t <= points[points.length - 1].t) continue;
      points.push({ t: row.t, value: entry ? scaleReading(entry.kind, row.value) : row.value });
    }
    this.charts.set(device, points);
    this.changed();
  }

  // -- the push channel --------------------------------------------------------------

  applyPush(record: PushRecord): void {
    if (record.push === "reading") this.applyReading(record);
    else if (record.push === "state") this.applyState(record);
    else this.applyEvent(record);
    this.changed();
  }

  private applyReading(record: Extract<PushRecord, { push: "reading" }>): void {
    if (!record.device) return;
    const device = this.devices.get(record.device);
    if (!device) return;
    device.value = scaleReading(device.kind, record.value);
    device.last_update = record.t;
    if (device.kind === "motion") {
      device.state = record.value ? "On" : "Off";
    } else if (device.state === "Unknown") {
      device.state = "On"; // the sensor is alive and reporting
    }
    this.simTime = Math.max(this.simTime, record.t);
    const series = this.charts.get(device.name);
    if (series !== undefined) {
      const last = series[series.length - 1];
      if (last === undefined || record.t > last.t) {
        series.push({ t: record.t, value: device.value });
        if (series.length > MAX_CHART_POINTS) series.shift();
      }
    }
  }

  private applyState(record: Extract<PushRecord, { push: "state" }>): void {
    const device = this.devices.get(record.device);
    if (!device) return;
    device.state = record.state;
    device.value = record.value;
    device.set_point = record.set_point;
    device.last_update = record.t;
    this.simTime = Math.max(this.simTime, record.t);
    if (device.kind === "pan") this.camera.pan = record.value ?? 0;
    if (device.kind === "tilt") this.camera.tilt = record.value ?? 0;
    const entry = this.pending.get(record.device);
    if (entry && (entry.ticket === null || entry.ticket === record.ticket)) {
      this.pending.delete(record.device); // the server confirmed, truth is on screen
    } else if (entry) {
      entry.priorState = record.state; // a revert must land on the newest truth
      entry.priorValue = record.value;
    }
  }

  private applyEvent(record: Extract<PushRecord, { push: "event" }>): void {
    const row: EventRow = {
      t: record.t,
      kind: record.kind,
      device: record.device,
      message: record.message,
      severity: record.severity,
    };
    this.events.push(row);
    if (this.events.length > MAX_EVENTS) this.events.shift();
    this.simTime = Math.max(this.simTime, record.t);
    if (record.kind === "ModeChanged") {
      this.currentMode = record.message;
    }
    if (record.kind === "DeliveryFailed") {
      this.revert(record.device);
    }
    if (record.severity === "Alert") {
      this.toast(row.t, row.kind, row.device ? `${row.device}: ${row.message}` : row.message, "Alert");
    }
  }

  // -- optimistic commands ------------------------------------------------------------

  /** True when logged in; the UI must not issue commands otherwise. */
  get authenticated(): boolean {
    return this.user !== null;
  }

  /**
   * Applies the optimistic effect of a device command and records how to
   * undo it.  Returns false (and does nothing) while unauthenticated or
   * when another command on the same device is still in flight.
   */
  beginCommand(name: string, property: string, value: string): boolean {
    if (!this.authenticated) return false;
    const device = this.devices.get(name);
    if (!device || this.pending.has(name)) return false;
    const entry: PendingCommand = {
      ticket: null,
      shownState: device.state,
      shownValue: device.value,
      priorState: device.state,
      priorValue: device.value,
      sentAt: Date.now(),
    };
    if (property === "state") {
      entry.shownState = value === "on" ? "On" : "Off";
    } else if (property === "level") {
      entry.shownState = "On";
      entry.shownValue = Number(value);
    } else if (property === "pan" || property === "tilt") {
      entry.shownValue = (device.value ?? 0) + Number(value);
    } else {
      return false; // set_point and mode changes are not optimistic
    }
    device.state = entry.shownState;
    device.value = entry.shownValue;
    this.pending.set(name, entry);
    this.changed();
    return true;
  }

  /** Ties the in-flight command to the ticket the server replied with. */
  confirmTicket(name: string, ticket: number): void {
    const entry = this.pending.get(name);
    if (entry) entry.ticket = ticket;
  }

  /** Undoes the optimistic effect after a failure reply or event. */
  revert(name: string): void {
    const entry = this.pending.get(name);
    if (!entry) return;
    this.pending.delete(name);
    const device = this.devices.get(name);
    if (device) {
      device.state = entry.priorState;
      device.value = entry.priorValue;
    }
    this.changed();
  }

  /** Reverts commands whose confirmation never arrived. */
  expirePending(nowMs: number, timeoutMs = 15000): void {
    for (const [name, entry] of [...this.pending]) {
      if (nowMs - entry.sentAt >= timeoutMs) {
        this.revert(name);
        this.toast(this.simTime, "Timeout", `${name}: no confirmation from server`, "Alert");
      }
    }
  }

  isPending(name: string): boolean {
    return this.pending.has(name);
  }

  // -- toasts --------------------------------------------------------------------------

  toast(t: number, kind: string, text: string, severity: "Info" | "Alert"): void {
    this.toasts.push({ t, kind, text, severity });
    if (this.toasts.length > MAX_TOASTS) this.toasts.shift();
    this.changed();
  }

  dismissToast(index: number): void {
    this.toasts.splice(index, 1);
    this.changed();
  }
}
