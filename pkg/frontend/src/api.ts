/** Thin client for the home server's JSON API, push bridge, and camera feed. */

import { decodePpm, Frame, MultipartSplitter } from "./ppm.js";
import {
  Device,
  EventRow,
  HistoryPoint,
  ModesInfo,
  PushRecord,
  ServerStatus,
} from "./wire.js";

export class CommandError extends Error {
  constructor(readonly code: string, message: string) {
    super(message);
  }
}

export interface LoginResult {
  ok: boolean;
  user?: string;
  message?: string;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServerApi {
  constructor(
    private readonly base = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.base + path);
    const body = await response.json();
    if (!response.ok) {
      throw new CommandError(String(body.error ?? response.status), String(body.message ?? "request failed"));
    }
    return body as T;
  }

  devices(): Promise<Device[]> {
    return this.getJson("/api/devices");
  }

  history(device: string, from: number, to: number): Promise<HistoryPoint[]> {
    const query = new URLSearchParams({
      device,
      from: String(from),
      to: String(to),
    });
    return this.getJson(`/api/history?${query}`);
  }

  events(since = 0): Promise<EventRow[]> {
    return this.getJson(`/api/events?since=${since}`);
  }

  modes(): Promise<ModesInfo> {
    return this.getJson("/api/modes");
  }

  status(): Promise<ServerStatus> {
    return this.getJson("/api/status");
  }

  /** Session cookie handling is the browser's; we only report the outcome. */
  async login(user: string, password: string): Promise<LoginResult> {
    const response = await this.fetchFn(this.base + "/api/login", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ user, password }),
    });
    const body = await response.json();
    if (!response.ok) return { ok: false, message: String(body.message ?? "login failed") };
    return { ok: true, user: String(body.user) };
  }

  /** Issues one actuator or system command; resolves to the server ticket. */
  async command(device: string, property: string, value: string): Promise<number> {
    const response = await this.fetchFn(this.base + "/api/command", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ device, property, value }),
    });
    const body = await response.json();
    if (!response.ok) {
      throw new CommandError(String(body.error ?? response.status), String(body.message ?? "command failed"));
    }
    return Number(body.ticket);
  }

  /** Opens the push bridge; returns a closer.  Lost connections back off 2 s. */
  openPushChannel(onRecord: (record: PushRecord) => void): () => void {
    let source: EventSource | null = null;
    let retry: ReturnType<typeof setTimeout> | null = null;
    let closed = false;
    const connect = () => {
      source = new EventSource(this.base + "/api/stream");
      source.onmessage = (message) => onRecord(JSON.parse(message.data) as PushRecord);
      source.onerror = () => {
        source?.close();
        if (!closed) retry = setTimeout(connect, 2000);
      };
    };
    connect();
    return () => {
      closed = true;
      if (retry !== null) clearTimeout(retry);
      source?.close();
    };
  }

  /** Reads the camera's multipart stream and decodes each part as a frame. */
  async streamCamera(onFrame: (frame: Frame) => void, signal: AbortSignal): Promise<void> {
    const response = await this.fetchFn(this.base + "/camera/stream", { signal });
    if (!response.ok || response.body === null) {
      throw new Error(`camera stream unavailable (${response.status})`);
    }
    const reader = response.body.getReader();
    const splitter = new MultipartSplitter();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) return;
      for (const part of splitter.feed(value)) {
        onFrame(decodePpm(part));
      }
    }
  }
}
