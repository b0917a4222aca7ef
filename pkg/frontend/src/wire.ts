/** Shapes the home server sends on its JSON API and its push bridge. */

export type DeviceKind =
  | "temperature"
  | "light"
  | "motion"
  | "lamp"
  | "heater"
  | "pan"
  | "tilt";

export type DeviceState = "On" | "Off" | "Unknown";

export interface Device {
  name: string;
  kind: DeviceKind;
  state: DeviceState;
  value: number | null;
  set_point: number | null;
  node: number;
  group: string;
  last_update: number | null;
}

export interface HistoryPoint {
  t: number;
  value: number;
  rssi: number;
}

export interface EventRow {
  t: number;
  kind: string;
  device: string;
  message: string;
  severity: "Info" | "Alert";
}

export interface ModesInfo {
  modes: string[];
  current: string | null;
}

export interface ServerStatus {
  sim_time: number;
  tick: number;
  mode: string | null;
  armed: boolean;
  time_of_day: number;
}

export interface ReadingPush {
  push: "reading";
  t: number;
  node: number;
  sensor: number;
  value: number;
  rssi: number;
  device: string | null;
}

export interface StatePush {
  push: "state";
  t: number;
  device: string;
  state: DeviceState;
  value: number | null;
  set_point: number | null;
  ticket: number;
}

export interface EventPush {
  push: "event";
  t: number;
  kind: string;
  device: string;
  message: string;
  severity: "Info" | "Alert";
}

export type PushRecord = ReadingPush | StatePush | EventPush;

/** Raw readings ride the wire as integers; temperature is hundredths of a degree. */
export function scaleReading(kind: DeviceKind, raw: number): number {
  return kind === "temperature" ? raw / 100 : raw;
}

export function unitFor(kind: DeviceKind): string {
  switch (kind) {
    case "temperature":
      return "°C";
    case "light":
      return "%";
    case "pan":
    case "tilt":
      return "°";
    default:
      return "";
  }
}
