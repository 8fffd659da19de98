// Shared test plumbing: fixture loading and scripted fetch doubles.
//
// The fixtures under tests/fixtures/ are a real gateway run captured by
// tools/record_fixtures.py: the raw NDJSON session log plus the state the
// gateway itself reduced from it. Convergence tests replay the former and
// compare against the latter.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { SessionEvent } from "../src/types.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

export function fixtureLog(): SessionEvent[] {
  const text = readFileSync(join(FIXTURES, "session_log.ndjson"), "utf-8");
  return text
    .split("\n")
    .filter((line) => line !== "")
    .map((line) => JSON.parse(line) as SessionEvent);
}

export function fixtureFinalState(): Record<string, unknown> {
  return JSON.parse(readFileSync(join(FIXTURES, "final_state.json"), "utf-8"));
}

// Render events the way the gateway's live endpoint frames them.
export function sseBody(events: SessionEvent[]): string {
  return events.map((e) => `id: ${e.n}\ndata: ${JSON.stringify(e)}\n\n`).join("");
}

export const END_FRAME = 'event: end\ndata: {"session_id": "s0000"}\n\n';

export function sseResponse(text: string, status = 200): Response {
  const encoder = new TextEncoder();
  const stream = new ReadableStream<Uint8Array>({
    start(controller) {
      controller.enqueue(encoder.encode(text));
      controller.close();
    },
  });
  return new Response(stream, {
    status,
    headers: { "Content-Type": "text/event-stream" },
  });
}

export interface SeenRequest {
  url: string;
  method: string;
  lastEventId: string | null;
  body: string | null;
}

// fetch double that serves one scripted response per call (the last one
// repeats) and records what the client asked for.
export function scriptedFetch(
  pages: Array<() => Response>,
  seen: SeenRequest[],
): typeof fetch {
  let calls = 0;
  const impl = async (input: string | URL | Request, init?: RequestInit): Promise<Response> => {
    const headers = new Headers(init?.headers);
    seen.push({
      url: String(input),
      method: init?.method ?? "GET",
      lastEventId: headers.get("Last-Event-ID"),
      body: typeof init?.body === "string" ? init.body : null,
    });
    const page = pages[Math.min(calls, pages.length - 1)];
    calls += 1;
    if (page === undefined) throw new Error("no scripted response");
    return page();
  };
  return impl as typeof fetch;
}

export function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
