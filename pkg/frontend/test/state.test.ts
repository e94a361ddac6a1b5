import { describe, expect, it } from "vitest";
import {
  checkpointPanel,
  commandsEnabled,
  completionSummary,
  initialState,
  reduce,
} from "../src/state.js";
import type { SessionSnapshot } from "../src/types.js";

function snapshot(overrides: Partial<SessionSnapshot> = {}): SessionSnapshot {
  return {
    schema: "partreg/session@1",
    scenario_id: "e2-robot-seed1",
    status: "awaiting-command",
    step: 12,
    parts_total: 10,
    parts_done: 1,
    pending: {
      part_id: 0,
      part_name: "body",
      stage: "ransac",
      retry_count: 0,
      candidate: { fitness: 0.92, rmse: 0.61, inlier_count: 410, transform: [[1]] },
    },
    outcomes: [],
    events: [],
    ...overrides,
  };
}

describe("command gating", () => {
  it("disabled before any snapshot (idle service)", () => {
    expect(commandsEnabled(initialState())).toBe(false);
  });

  it("disabled while idle or running, enabled at a checkpoint", () => {
    let state = reduce(initialState(), {
      kind: "snapshot",
      snapshot: snapshot({ status: "idle", pending: null }),
    });
    expect(commandsEnabled(state)).toBe(false);
    state = reduce(state, { kind: "snapshot", snapshot: snapshot() });
    expect(commandsEnabled(state)).toBe(true);
  });

  it("double-click protection: in-flight command disables buttons", () => {
    let state = reduce(initialState(), { kind: "snapshot", snapshot: snapshot() });
    state = reduce(state, { kind: "command-sent" });
    expect(commandsEnabled(state)).toBe(false);
    state = reduce(state, {
      kind: "command-acked",
      snapshot: snapshot({ step: 13, pending: null, status: "running" }),
    });
    expect(state.commandInFlight).toBe(false);
  });

  it("failed command surfaces the error and re-enables", () => {
    let state = reduce(initialState(), { kind: "snapshot", snapshot: snapshot() });
    state = reduce(state, { kind: "command-sent" });
    state = reduce(state, { kind: "command-failed", error: "409 no checkpoint" });
    expect(state.lastError).toContain("409");
    expect(commandsEnabled(state)).toBe(true); // view state intact
    expect(state.snapshot?.pending?.part_name).toBe("body");
  });
});

describe("stream staleness", () => {
  it("starts stale, clears on stream-up, returns on stream-down", () => {
    let state = initialState();
    expect(state.stale).toBe(true);
    state = reduce(state, { kind: "stream-up" });
    expect(state.stale).toBe(false);
    state = reduce(state, { kind: "stream-down" });
    expect(state.stale).toBe(true);
  });
});

describe("checkpoint panel", () => {
  it("exposes part, stage and fit diagnostics", () => {
    const state = reduce(initialState(), { kind: "snapshot", snapshot: snapshot() });
    const panel = checkpointPanel(state)!;
    expect(panel.title).toBe("body — RANSAC");
    expect(panel.fitness).toBeCloseTo(0.92);
    expect(panel.rmse).toBeCloseTo(0.61);
  });

  it("retry updates the panel with the new candidate", () => {
    let state = reduce(initialState(), { kind: "snapshot", snapshot: snapshot() });
    const retried = snapshot();
    retried.pending!.retry_count = 1;
    retried.pending!.candidate = {
      fitness: 0.97, rmse: 0.44, inlier_count: 433, transform: [[1]],
    };
    state = reduce(state, { kind: "command-acked", snapshot: retried });
    const panel = checkpointPanel(state)!;
    expect(panel.retry).toBe(1);
    expect(panel.fitness).toBeCloseTo(0.97);
  });

  it("null when nothing is pending", () => {
    const state = reduce(initialState(), {
      kind: "snapshot",
      snapshot: snapshot({ pending: null, status: "running" }),
    });
    expect(checkpointPanel(state)).toBeNull();
  });
});

describe("completion summary", () => {
  it("appears only when completed with metrics", () => {
    const done = snapshot({
      status: "completed",
      pending: null,
      outcomes: [
        {
          part_id: 0, part_name: "body", stage: "icp-done",
          fitness: 1, rmse: 0.4, retries: {}, notes: [],
        },
      ],
      metrics: {
        tolerance: 0.7,
        inlier_ratio: { ratio: 0.66 },
        nfmr: { ratio: 0.37 },
        c2c: { mean: 0.5, median: 0.44, max: 3.2 },
      },
    });
    const state = reduce(initialState(), { kind: "snapshot", snapshot: done });
    const summary = completionSummary(state)!;
    expect(summary.c2cMedian).toBeCloseTo(0.44);
    expect(summary.parts[0]).toEqual({ name: "body", stage: "icp-done" });
  });
});

describe("layers and color mode", () => {
  it("toggles are pure view state", () => {
    let state = initialState();
    state = reduce(state, { kind: "toggle-layer", layer: "source" });
    expect(state.layers.source).toBe(true);
    state = reduce(state, { kind: "set-color-mode", mode: "c2c-heat" });
    expect(state.colorMode).toBe("c2c-heat");
  });
});
