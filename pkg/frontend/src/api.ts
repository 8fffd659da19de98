// Thin wrappers over the gateway's JSON API. Errors are surfaced with the
// server's own status and message; the console never invents its own.

import type { BehaviorScript, SessionSummary } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function request<T>(
  method: string,
  url: string,
  body?: unknown,
  fetchImpl: typeof fetch = fetch,
): Promise<T> {
  const response = await fetchImpl(url, {
    method,
    headers: body === undefined ? {} : { "Content-Type": "application/json" },
    body: body === undefined ? undefined : JSON.stringify(body),
  });
  const text = await response.text();
  let parsed: unknown = null;
  try {
    parsed = text === "" ? null : JSON.parse(text);
  } catch {
    throw new ApiError(response.status, `non-JSON response: ${text.slice(0, 120)}`);
  }
  if (!response.ok) {
    const detail =
      parsed !== null && typeof parsed === "object" && "error" in parsed
        ? String((parsed as { error: unknown }).error)
        : `HTTP ${response.status}`;
    throw new ApiError(response.status, detail);
  }
  return parsed as T;
}

export class GatewayApi {
  constructor(
    private base: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  listSessions(): Promise<SessionSummary[]> {
    return request("GET", `${this.base}/sessions`, undefined, this.fetchImpl);
  }

  getSession(id: string): Promise<SessionSummary & { state: Record<string, unknown> }> {
    return request("GET", `${this.base}/sessions/${id}`, undefined, this.fetchImpl);
  }

  listScripts(): Promise<BehaviorScript[]> {
    return request("GET", `${this.base}/scripts`, undefined, this.fetchImpl);
  }

  putScript(script: BehaviorScript): Promise<BehaviorScript> {
    return request("PUT", `${this.base}/scripts/${script.script_id}`, script, this.fetchImpl);
  }

  activateScript(sessionId: string, scriptId: string): Promise<unknown> {
    return request(
      "PUT",
      `${this.base}/sessions/${sessionId}/script`,
      { script_id: scriptId },
      this.fetchImpl,
    );
  }

  getPreferences(childId: string): Promise<{ child_id: string; preferences: Record<string, string> }> {
    return request("GET", `${this.base}/children/${childId}/preferences`, undefined, this.fetchImpl);
  }

  putPreferences(childId: string, preferences: Record<string, string>): Promise<unknown> {
    return request(
      "PUT",
      `${this.base}/children/${childId}/preferences`,
      preferences,
      this.fetchImpl,
    );
  }

  liveUrl(sessionId: string): string {
    return `${this.base}/sessions/${sessionId}/live`;
  }
}
