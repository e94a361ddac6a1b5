/**
 * Session walkthrough against a scripted mock of the service: checkpoints
 * display, a retry visibly re-poses the candidate, and accepting through to
 * completion surfaces the final summary. Mirrors the flow main.ts drives.
 */

import { describe, expect, it } from "vitest";
import { ApiClient } from "../src/api.js";
import {
  checkpointPanel,
  commandsEnabled,
  completionSummary,
  initialState,
  reduce,
  ViewState,
} from "../src/state.js";
import type { Command, SessionSnapshot } from "../src/types.js";

type Script = { snapshot: SessionSnapshot; cloud: string }[];

function candidate(fitness: number, rmse: number, shift: number) {
  return {
    fitness,
    rmse,
    inlier_count: 40,
    transform: [
      [1, 0, 0, shift],
      [0, 1, 0, 0],
      [0, 0, 1, 0],
      [0, 0, 0, 1],
    ],
  };
}

function ply(x: number): string {
  return [
    "ply", "format ascii 1.0", "element vertex 1",
    "property double x", "property double y", "property double z",
    "end_header", `${x} 0 0`, "",
  ].join("\n");
}

function base(step: number): SessionSnapshot {
  return {
    schema: "partreg/session@1",
    scenario_id: "e2-lander-seed0",
    status: "awaiting-command",
    step,
    parts_total: 2,
    parts_done: 0,
    pending: null,
    outcomes: [],
    events: [],
  };
}

/** Tiny service double: one part, RANSAC then ICP checkpoint, then done. */
class FakeService {
  private stage: "ransac" | "icp" | "done" = "ransac";
  private retry = 0;
  private step = 3;

  snapshot(): SessionSnapshot {
    const snap = base(this.step);
    if (this.stage === "done") {
      snap.status = "completed";
      snap.parts_done = 2;
      snap.outcomes = [
        { part_id: 0, part_name: "body", stage: "icp-done", fitness: 1,
          rmse: 0.4, retries: {}, notes: [] },
        { part_id: 5, part_name: "dish-pole", stage: "icp-done", fitness: 0.9,
          rmse: 0.6, retries: { ransac: 1 }, notes: [] },
      ];
      snap.metrics = {
        tolerance: 0.8,
        inlier_ratio: { ratio: 0.9 },
        nfmr: { ratio: 0.45 },
        c2c: { mean: 0.5, median: 0.45, max: 2.0 },
      };
      return snap;
    }
    snap.pending = {
      part_id: 5,
      part_name: "dish-pole",
      stage: this.stage,
      retry_count: this.retry,
      // retries shift the candidate: visibly re-posed in the preview cloud
      candidate: candidate(0.8 + 0.05 * this.retry, 1.0 - 0.2 * this.retry, this.retry),
    };
    return snap;
  }

  currentCloud(): string {
    return ply(this.stage === "done" ? 99 : this.retry);
  }

  command(cmd: Command): { status: number; body: unknown } {
    if (this.stage === "done") {
      return { status: 409, body: { error: "no checkpoint is awaiting a command" } };
    }
    this.step += 1;
    if (cmd === "retry") {
      this.retry += 1;
    } else {
      this.retry = 0;
      this.stage = this.stage === "ransac" ? "icp" : "done";
    }
    return { status: 200, body: this.snapshot() };
  }
}

function clientFor(service: FakeService): ApiClient {
  return new ApiClient("http://svc", async (url, init) => {
    if (url.endsWith("/api/session")) {
      return new Response(JSON.stringify(service.snapshot()));
    }
    if (url.endsWith("/api/session/command")) {
      const cmd = (JSON.parse(String(init!.body)) as { command: Command }).command;
      const { status, body } = service.command(cmd);
      return new Response(JSON.stringify(body), { status });
    }
    if (url.endsWith("/api/clouds/current")) {
      return new Response(service.currentCloud());
    }
    throw new Error(`unexpected ${url}`);
  });
}

async function issue(
  state: ViewState, client: ApiClient, cmd: Command,
): Promise<ViewState> {
  if (!commandsEnabled(state)) return state;
  state = reduce(state, { kind: "command-sent" });
  try {
    const snapshot = await client.postCommand(cmd);
    return reduce(state, { kind: "command-acked", snapshot });
  } catch (err) {
    return reduce(state, { kind: "command-failed", error: String(err) });
  }
}

describe("session walkthrough", () => {
  it("checkpoint -> retry re-poses -> accept to completion", async () => {
    const service = new FakeService();
    const client = clientFor(service);
    let state = initialState();

    state = reduce(state, { kind: "snapshot", snapshot: await client.getSession() });
    expect(checkpointPanel(state)!.title).toBe("dish-pole — RANSAC");
    expect(commandsEnabled(state)).toBe(true);
    const cloudBefore = await client.getCloud("current");

    state = await issue(state, client, "retry");
    const panel = checkpointPanel(state)!;
    expect(panel.retry).toBe(1);
    expect(panel.fitness).toBeCloseTo(0.85);
    const cloudAfter = await client.getCloud("current");
    // the preview cloud moved with the new candidate
    expect(cloudAfter.positions[0]).not.toBe(cloudBefore.positions[0]);

    state = await issue(state, client, "accept"); // ransac accepted
    expect(checkpointPanel(state)!.title).toBe("dish-pole — ICP");
    state = await issue(state, client, "accept"); // icp accepted -> done
    expect(state.snapshot!.status).toBe("completed");
    const summary = completionSummary(state)!;
    expect(summary.c2cMedian).toBeCloseTo(0.45);
    expect(summary.parts.map((p) => p.stage)).toEqual(["icp-done", "icp-done"]);

    // post-completion commands are rejected and surfaced, view intact
    state = reduce(state, { kind: "snapshot", snapshot: await client.getSession() });
    expect(commandsEnabled(state)).toBe(false);
  });

  it("second click before ack is a no-op", async () => {
    const service = new FakeService();
    const client = clientFor(service);
    let state = initialState();
    state = reduce(state, { kind: "snapshot", snapshot: await client.getSession() });
    state = reduce(state, { kind: "command-sent" });
    // guard blocks while in flight
    const blocked = await issue(state, client, "accept");
    expect(blocked).toBe(state);
  });
});
