// Wire shapes from the gateway's HTTP API and event stream. These mirror
// the NDJSON session log format exactly; the console adds nothing on top.

export const EMOTIONS = [
  "happiness",
  "sadness",
  "surprise",
  "fear",
  "anger",
  "disgust",
] as const;

export type Emotion = (typeof EMOTIONS)[number];

export interface SessionEvent {
  session_id: string;
  n: number; // arrival counter; also the SSE resume cursor
  ts: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface BehaviorCommand {
  kind: "animation" | "speech" | "retry_prompt";
  animation_id?: string;
  text?: string;
}

export interface SessionSummary {
  session_id: string;
  child_id: string;
  robot_id: string;
  started: number;
  ended: number | null;
  active_script_id: string | null;
  operator_override: boolean;
  retry_counter: number;
  event_count: number;
}

export interface BehaviorScript {
  script_id: string;
  title: string;
  mood_range: [number, number];
  steps: Array<Record<string, unknown>>;
  last_used: number | null;
}

// The read model every widget renders from. It is a pure fold over the
// events received so far; refreshing the page and replaying the log must
// reconstruct the identical view.
export interface LiveSessionView {
  session_id: string | null;
  child_id: string | null;
  robot_id: string | null;
  event_count: number;
  counts: Record<string, number>;
  predominant_emotion: string | null;
  valence: number | null;
  active_script_id: string | null;
  transcript: string | null;
  sentiment: number | null;
  sentiment_band: string | null;
  behaviors_sent: Array<BehaviorCommand | null>;
  retry_limit_reached: boolean;
  errors: Array<string | null>;
  // console-side additions (derived, not truth): rolling feed tail and the
  // highest event counter seen, used to resume the stream after reconnect.
  feed: SessionEvent[];
  last_n: number | null;
  ended: boolean;
}
