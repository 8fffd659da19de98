// Pure event fold. This mirrors the gateway's own session-state reduction
// field for field, so a console view and the server's `/sessions/{id}`
// state can be compared directly in tests.

import type { BehaviorCommand, LiveSessionView, SessionEvent } from "./types.js";

export const FEED_LIMIT = 200; // rolling tail kept for display

export function initialView(): LiveSessionView {
  return {
    session_id: null,
    child_id: null,
    robot_id: null,
    event_count: 0,
    counts: {},
    predominant_emotion: null,
    valence: null,
    active_script_id: null,
    transcript: null,
    sentiment: null,
    sentiment_band: null,
    behaviors_sent: [],
    retry_limit_reached: false,
    errors: [],
    feed: [],
    last_n: null,
    ended: false,
  };
}

export function applyEvent(view: LiveSessionView, event: SessionEvent): LiveSessionView {
  const next: LiveSessionView = {
    ...view,
    counts: { ...view.counts },
    behaviors_sent: view.behaviors_sent.slice(),
    errors: view.errors.slice(),
    feed: view.feed.slice(),
  };
  if (next.session_id === null) next.session_id = event.session_id;
  next.event_count += 1;
  next.counts[event.kind] = (next.counts[event.kind] ?? 0) + 1;
  next.last_n = event.n;
  next.feed.push(event);
  if (next.feed.length > FEED_LIMIT) next.feed.shift();

  const p = event.payload;
  switch (event.kind) {
    case "connect":
      next.child_id = (p.child_id as string) ?? null;
      next.robot_id = (p.robot_id as string) ?? null;
      if (p.script_id != null) next.active_script_id = p.script_id as string;
      break;
    case "emotion_result":
      if ("predominant" in p) next.predominant_emotion = p.predominant as string;
      if ("valence" in p) next.valence = p.valence as number;
      if (p.script_id != null) next.active_script_id = p.script_id as string;
      break;
    case "operator_action":
      if (p.action === "activate_script" && p.script_id != null) {
        next.active_script_id = p.script_id as string;
      }
      break;
    case "transcript":
      next.transcript = (p.text as string) ?? null;
      break;
    case "sentiment":
      next.sentiment = (p.value as number) ?? null;
      next.sentiment_band = (p.band as string) ?? null;
      break;
    case "behavior_sent":
      next.behaviors_sent.push((p.command as BehaviorCommand) ?? null);
      break;
    case "retry_limit_reached":
      next.retry_limit_reached = true;
      break;
    case "error":
      next.errors.push((p.reason as string) ?? null);
      break;
  }
  return next;
}

export function replay(events: SessionEvent[]): LiveSessionView {
  let view = initialView();
  for (const event of events) view = applyEvent(view, event);
  return view;
}

// Strip the console-side fields so the rest can be compared verbatim with
// the gateway's reduction of the same log.
export function comparableState(view: LiveSessionView): Record<string, unknown> {
  const { feed, last_n, ended, ...server } = view;
  return server;
}
