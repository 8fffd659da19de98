// The operator console page. One live view at a time; everything rendered
// from the LiveSessionView fold, so what you see is exactly what the event
// log says. User actions are fire-and-confirm: the active-script badge only
// flips once the gateway's operator_action event comes back on the stream.

import { GatewayApi, ApiError } from "./api.js";
import { applyEvent, initialView } from "./reducer.js";
import { subscribeLive, type LiveSubscription } from "./sse.js";
import type { LiveSessionView, SessionEvent, SessionSummary } from "./types.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

let api = new GatewayApi("");
let subscription: LiveSubscription | null = null;
let view: LiveSessionView = initialView();
let pendingScript: string | null = null;
let currentSession: string | null = null;

function banner(text: string, kind: "error" | "info" = "error"): void {
  const el = $("banner");
  el.textContent = text;
  el.className = text ? `banner ${kind}` : "banner hidden";
}

function fmtValence(v: number | null): string {
  return v === null ? "–" : (v >= 0 ? "+" : "") + v.toFixed(2);
}

function renderView(): void {
  $("predominant").textContent = view.predominant_emotion ?? "–";
  $("valence").textContent = fmtValence(view.valence);
  $("sentiment").textContent =
    view.sentiment === null ? "–" : `${view.sentiment.toFixed(2)} ${view.sentiment_band ?? ""}`;
  $("transcript").textContent = view.transcript ?? "–";

  const badge = $("active-script");
  badge.textContent = view.active_script_id ?? "none";
  if (pendingScript !== null && view.active_script_id === pendingScript) {
    pendingScript = null; // the operator_action event round-tripped
  }
  $("script-pending").textContent =
    pendingScript === null ? "" : `activating ${pendingScript}…`;

  $("retry-state").textContent = view.retry_limit_reached ? "retry limit reached" : "";
  $("session-title").textContent = currentSession
    ? `${currentSession} ${view.ended ? "(ended)" : "(live)"}`
    : "no session selected";

  const feed = $("feed");
  feed.replaceChildren(
    ...view.feed
      .slice(-40)
      .reverse()
      .map((event) => {
        const row = document.createElement("tr");
        const n = document.createElement("td");
        n.textContent = String(event.n);
        const kind = document.createElement("td");
        kind.textContent = event.kind;
        const payload = document.createElement("td");
        payload.textContent = JSON.stringify(event.payload);
        row.append(n, kind, payload);
        return row;
      }),
  );
}

function renderSessions(sessions: SessionSummary[]): void {
  const list = $("sessions");
  list.replaceChildren(
    ...sessions.map((s) => {
      const item = document.createElement("li");
      const button = document.createElement("button");
      button.textContent = `${s.session_id} ${s.child_id} ${s.ended === null ? "live" : "ended"}`;
      button.onclick = () => watchSession(s.session_id);
      if (s.session_id === currentSession) button.classList.add("current");
      item.append(button);
      return item;
    }),
  );
}

async function refreshSessions(): Promise<void> {
  try {
    renderSessions(await api.listSessions());
  } catch (err) {
    banner(err instanceof Error ? err.message : String(err));
  }
}

async function refreshScripts(): Promise<void> {
  const select = $<HTMLSelectElement>("script-select");
  try {
    const scripts = await api.listScripts();
    select.replaceChildren(
      ...scripts.map((s) => {
        const option = document.createElement("option");
        option.value = s.script_id;
        option.textContent = `${s.script_id} [${s.mood_range[0]}, ${s.mood_range[1]}]`;
        return option;
      }),
    );
  } catch (err) {
    banner(err instanceof Error ? err.message : String(err));
  }
}

function watchSession(sessionId: string): void {
  subscription?.close();
  view = initialView();
  pendingScript = null;
  currentSession = sessionId;
  banner("");
  renderView();

  subscription = subscribeLive(api.liveUrl(sessionId), {
    onFrame: (frame) => {
      if (frame.data === "") return;
      const event = JSON.parse(frame.data) as SessionEvent;
      view = applyEvent(view, event);
      renderView();
    },
    onEnd: () => {
      view = { ...view, ended: true };
      renderView();
      void refreshSessions();
    },
    onError: (problem) => banner(problem),
  });
  void loadPreferences();
}

async function loadPreferences(): Promise<void> {
  if (view.child_id === null && currentSession !== null) {
    // connect event may not have arrived yet; fall back to the summary
    try {
      const detail = await api.getSession(currentSession);
      view = { ...view, child_id: detail.child_id };
    } catch {
      return;
    }
  }
  if (view.child_id === null) return;
  try {
    const reply = await api.getPreferences(view.child_id);
    $<HTMLTextAreaElement>("preferences").value = JSON.stringify(reply.preferences, null, 2);
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      $<HTMLTextAreaElement>("preferences").value = "{}";
    }
  }
}

function wireActions(): void {
  $("connect-form").onsubmit = (e) => {
    e.preventDefault();
    const base = $<HTMLInputElement>("gateway-url").value.replace(/\/$/, "");
    api = new GatewayApi(base);
    banner("");
    void refreshSessions();
    void refreshScripts();
  };

  $("refresh-sessions").onclick = () => void refreshSessions();

  $("activate-form").onsubmit = (e) => {
    e.preventDefault();
    if (currentSession === null) {
      banner("select a session first");
      return;
    }
    const scriptId = $<HTMLSelectElement>("script-select").value;
    pendingScript = scriptId;
    renderView();
    api.activateScript(currentSession, scriptId).catch((err) => {
      pendingScript = null;
      renderView();
      banner(err instanceof Error ? err.message : String(err)); // 409/422 verbatim
    });
  };

  $("preferences-form").onsubmit = (e) => {
    e.preventDefault();
    if (view.child_id === null) {
      banner("no child for this session yet");
      return;
    }
    let parsed: Record<string, string>;
    try {
      parsed = JSON.parse($<HTMLTextAreaElement>("preferences").value);
    } catch {
      banner("preferences must be a JSON object of strings");
      return;
    }
    api
      .putPreferences(view.child_id, parsed)
      .then(() => banner("preferences saved", "info"))
      .catch((err) => banner(err instanceof Error ? err.message : String(err)));
  };
}

wireActions();
banner("");
