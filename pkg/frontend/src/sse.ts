// Server-sent-events client over fetch + ReadableStream.
//
// EventSource would almost do, but it cannot set the Last-Event-ID header on
// the *first* request and gives no way to surface HTTP status codes to the
// UI, so the console carries its own small reader. The gateway's stream is
// plain SSE: `id:` carries the event counter used as the resume cursor,
// unnamed events carry one session event as JSON, a comment line is a
// keepalive, and a final `event: end` closes the session.

export interface SseFrame {
  id: number | null;
  event: string; // "" for unnamed message frames
  data: string;
}

// Incremental SSE parser. Feed it raw text chunks in any split; it yields
// complete frames. Kept free of I/O so tests can drive it directly.
export class SseParser {
  private buffer = "";
  private id: number | null = null;
  private event = "";
  private data: string[] = [];

  feed(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    for (;;) {
      const newline = this.buffer.indexOf("\n");
      if (newline < 0) break;
      let line = this.buffer.slice(0, newline);
      this.buffer = this.buffer.slice(newline + 1);
      if (line.endsWith("\r")) line = line.slice(0, -1);

      if (line === "") {
        if (this.data.length > 0 || this.event !== "") {
          frames.push({ id: this.id, event: this.event, data: this.data.join("\n") });
        }
        this.id = null;
        this.event = "";
        this.data = [];
        continue;
      }
      if (line.startsWith(":")) continue; // keepalive comment

      const colon = line.indexOf(":");
      const field = colon < 0 ? line : line.slice(0, colon);
      let value = colon < 0 ? "" : line.slice(colon + 1);
      if (value.startsWith(" ")) value = value.slice(1);

      if (field === "id") {
        const parsed = Number.parseInt(value, 10);
        this.id = Number.isNaN(parsed) ? null : parsed;
      } else if (field === "event") {
        this.event = value;
      } else if (field === "data") {
        this.data.push(value);
      }
      // other fields (retry, ...) are ignored
    }
    return frames;
  }
}

export interface LiveHandlers {
  onFrame: (frame: SseFrame) => void;
  onEnd?: () => void;
  onError?: (problem: string) => void;
  // called before each (re)connect attempt; mainly for tests and status UI
  onConnect?: (lastEventId: number | null) => void;
}

export interface LiveSubscription {
  close: () => void;
}

const RETRY_BASE_MS = 250;
const RETRY_MAX_MS = 2000;

// Follow one session's event stream until it ends. Reconnects survive by
// resuming from the last seen `id:`, and a duplicate-id guard makes resumes
// idempotent even against a misbehaving server.
export function subscribeLive(
  url: string,
  handlers: LiveHandlers,
  fetchImpl: typeof fetch = fetch,
): LiveSubscription {
  let closed = false;
  let lastEventId: number | null = null;
  let retryMs = RETRY_BASE_MS;

  const run = async () => {
    while (!closed) {
      handlers.onConnect?.(lastEventId);
      try {
        const headers: Record<string, string> = { Accept: "text/event-stream" };
        if (lastEventId !== null) headers["Last-Event-ID"] = String(lastEventId);
        const response = await fetchImpl(url, { headers });
        if (response.status === 404) {
          handlers.onError?.("session not found");
          return; // nothing to resume; do not retry
        }
        if (!response.ok || response.body === null) {
          throw new Error(`stream responded ${response.status}`);
        }
        retryMs = RETRY_BASE_MS;
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        const parser = new SseParser();
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const frame of parser.feed(decoder.decode(value, { stream: true }))) {
            if (closed) return;
            if (frame.event === "end") {
              handlers.onEnd?.();
              return;
            }
            if (frame.id !== null) {
              if (lastEventId !== null && frame.id <= lastEventId) continue; // replayed
              lastEventId = frame.id;
            }
            handlers.onFrame(frame);
          }
        }
        // server closed without `end`: fall through to reconnect
      } catch (err) {
        if (closed) return;
        handlers.onError?.(err instanceof Error ? err.message : String(err));
      }
      await new Promise((resolve) => setTimeout(resolve, retryMs));
      retryMs = Math.min(retryMs * 2, RETRY_MAX_MS);
    }
  };

  void run();
  return {
    close: () => {
      closed = true;
    },
  };
}
