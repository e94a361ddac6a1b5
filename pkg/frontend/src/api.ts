import { parsePly } from "./ply.js";
import type { Cloud, Command, ServerEvent, SessionSnapshot } from "./types.js";

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface EventSourceLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

/** Thin client over the session API; transports are injectable for tests. */
export class ApiClient {
  constructor(
    readonly base: string,
    private readonly fetchImpl: FetchLike = (u, i) => fetch(u, i),
    private readonly eventSourceFactory: EventSourceFactory = (u) =>
      new EventSource(u) as unknown as EventSourceLike,
  ) {}

  async getSession(): Promise<SessionSnapshot> {
    const resp = await this.fetchImpl(`${this.base}/api/session`);
    if (!resp.ok) throw new ApiError(`session fetch failed`, resp.status);
    return (await resp.json()) as SessionSnapshot;
  }

  async postCommand(command: Command): Promise<SessionSnapshot> {
    const resp = await this.fetchImpl(`${this.base}/api/session/command`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ command }),
    });
    const body = await resp.json();
    if (!resp.ok) {
      throw new ApiError(String(body?.error ?? resp.status), resp.status);
    }
    return body as SessionSnapshot;
  }

  async getCloud(which: "source" | "target" | "current"): Promise<Cloud> {
    const resp = await this.fetchImpl(`${this.base}/api/clouds/${which}`);
    if (!resp.ok) throw new ApiError(`cloud ${which} fetch failed`, resp.status);
    return parsePly(await resp.text());
  }

  /**
   * Subscribe to the server-sent event stream. Reconnects with exponential
   * backoff; onDown/onUp report the stale state for the banner. Returns a
   * disposer.
   */
  subscribe(
    onEvent: (event: ServerEvent) => void,
    onUp: () => void,
    onDown: () => void,
    schedule: (fn: () => void, ms: number) => void = (fn, ms) => setTimeout(fn, ms),
  ): () => void {
    let source: EventSourceLike | null = null;
    let disposed = false;
    let backoff = 500;

    const connect = () => {
      if (disposed) return;
      source = this.eventSourceFactory(`${this.base}/api/events`);
      source.onmessage = (ev) => {
        backoff = 500;
        onUp();
        try {
          onEvent(JSON.parse(ev.data) as ServerEvent);
        } catch {
          /* keepalives and malformed frames are ignored */
        }
      };
      source.onerror = () => {
        onDown();
        source?.close();
        source = null;
        if (!disposed) {
          schedule(connect, backoff);
          backoff = Math.min(backoff * 1.7, 10_000);
        }
      };
    };

    connect();
    return () => {
      disposed = true;
      source?.close();
    };
  }
}
