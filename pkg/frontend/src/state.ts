import type { Command, SessionSnapshot } from "./types.js";
import type { ColorMode } from "./colors.js";

/** View-side session state: latest snapshot plus UI flags. */
export interface ViewState {
  snapshot: SessionSnapshot | null;
  stale: boolean;            // no live event stream right now
  commandInFlight: boolean;  // double-click guard
  lastError: string | null;
  colorMode: ColorMode;
  layers: { source: boolean; target: boolean; current: boolean };
}

export function initialState(): ViewState {
  return {
    snapshot: null,
    stale: true,
    commandInFlight: false,
    lastError: null,
    colorMode: "by-part",
    layers: { source: false, target: true, current: true },
  };
}

export type Action =
  | { kind: "snapshot"; snapshot: SessionSnapshot }
  | { kind: "stream-up" }
  | { kind: "stream-down" }
  | { kind: "command-sent" }
  | { kind: "command-acked"; snapshot: SessionSnapshot }
  | { kind: "command-failed"; error: string }
  | { kind: "set-color-mode"; mode: ColorMode }
  | { kind: "toggle-layer"; layer: keyof ViewState["layers"] };

export function reduce(state: ViewState, action: Action): ViewState {
  switch (action.kind) {
    case "snapshot":
      return { ...state, snapshot: action.snapshot };
    case "stream-up":
      return { ...state, stale: false };
    case "stream-down":
      return { ...state, stale: true };
    case "command-sent":
      return { ...state, commandInFlight: true, lastError: null };
    case "command-acked":
      return { ...state, commandInFlight: false, snapshot: action.snapshot };
    case "command-failed":
      return { ...state, commandInFlight: false, lastError: action.error };
    case "set-color-mode":
      return { ...state, colorMode: action.mode };
    case "toggle-layer":
      return {
        ...state,
        layers: { ...state.layers, [action.layer]: !state.layers[action.layer] },
      };
  }
}

/** Commands are enabled only at a checkpoint with no command in flight. */
export function commandsEnabled(state: ViewState): boolean {
  return (
    !state.commandInFlight &&
    state.snapshot !== null &&
    state.snapshot.status === "awaiting-command" &&
    state.snapshot.pending !== null
  );
}

export function canSend(state: ViewState, _command: Command): boolean {
  return commandsEnabled(state);
}

/** Data for the checkpoint panel, or null when nothing is pending. */
export function checkpointPanel(state: ViewState) {
  const pending = state.snapshot?.pending ?? null;
  if (!pending) return null;
  return {
    title: `${pending.part_name} — ${pending.stage.toUpperCase()}`,
    retry: pending.retry_count,
    fitness: pending.candidate.fitness,
    rmse: pending.candidate.rmse,
    inliers: pending.candidate.inlier_count,
  };
}

/** Completion summary once the session is done. */
export function completionSummary(state: ViewState) {
  const snap = state.snapshot;
  if (!snap || snap.status !== "completed" || !snap.metrics) return null;
  return {
    inlierRatio: snap.metrics.inlier_ratio.ratio,
    nfmr: snap.metrics.nfmr.ratio,
    c2cMedian: snap.metrics.c2c.median,
    parts: snap.outcomes.map((o) => ({ name: o.part_name, stage: o.stage })),
  };
}
