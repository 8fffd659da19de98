import { describe, expect, it } from "vitest";

import { ApiError, GatewayApi } from "../src/api.js";
import { scriptedFetch, type SeenRequest } from "./helpers.js";

function jsonResponse(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("GatewayApi", () => {
  it("activates a script with a PUT carrying just the script id", async () => {
    const seen: SeenRequest[] = [];
    const api = new GatewayApi(
      "http://gw.test",
      scriptedFetch([() => jsonResponse({ session_id: "s0000", active_script_id: "story_time" })], seen),
    );
    await api.activateScript("s0000", "story_time");
    expect(seen[0]?.method).toBe("PUT");
    expect(seen[0]?.url).toBe("http://gw.test/sessions/s0000/script");
    expect(JSON.parse(seen[0]?.body ?? "")).toEqual({ script_id: "story_time" });
  });

  it("surfaces the server's own error message verbatim", async () => {
    const seen: SeenRequest[] = [];
    const api = new GatewayApi(
      "http://gw.test",
      scriptedFetch([() => jsonResponse({ error: "unknown script 'nope'" }, 422)], seen),
    );
    const failure = await api.activateScript("s0000", "nope").catch((e: unknown) => e);
    expect(failure).toBeInstanceOf(ApiError);
    expect((failure as ApiError).status).toBe(422);
    expect((failure as ApiError).message).toBe("unknown script 'nope'");
  });

  it("flags non-JSON bodies instead of guessing", async () => {
    const seen: SeenRequest[] = [];
    const api = new GatewayApi(
      "http://gw.test",
      scriptedFetch([() => new Response("<html>proxy error</html>", { status: 200 })], seen),
    );
    const failure = await api.listSessions().catch((e: unknown) => e);
    expect(failure).toBeInstanceOf(ApiError);
    expect((failure as ApiError).message).toContain("non-JSON response");
  });

  it("builds the live stream URL the SSE client consumes", () => {
    const api = new GatewayApi("http://gw.test");
    expect(api.liveUrl("s0042")).toBe("http://gw.test/sessions/s0042/live");
  });

  it("sends preference maps as the whole request body", async () => {
    const seen: SeenRequest[] = [];
    const api = new GatewayApi(
      "http://gw.test",
      scriptedFetch([() => jsonResponse({ child_id: "kid-1", preferences: { color: "blue" } })], seen),
    );
    await api.putPreferences("kid-1", { color: "blue" });
    expect(seen[0]?.url).toBe("http://gw.test/children/kid-1/preferences");
    expect(JSON.parse(seen[0]?.body ?? "")).toEqual({ color: "blue" });
  });
});
