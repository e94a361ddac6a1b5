/** Wire types for the partreg session API. */

export type Command = "accept" | "retry" | "skip";

export interface CandidateInfo {
  fitness: number;
  rmse: number;
  inlier_count: number;
  transform: number[][];
}

export interface PendingCheckpoint {
  part_id: number;
  part_name: string;
  stage: "ransac" | "icp";
  retry_count: number;
  candidate: CandidateInfo;
}

export interface PartOutcome {
  part_id: number;
  part_name: string;
  stage: string;
  fitness: number;
  rmse: number;
  retries: Record<string, number>;
  notes: string[];
}

export interface SessionSnapshot {
  schema: string;
  scenario_id: string;
  status: "idle" | "running" | "awaiting-command" | "completed" | "failed";
  step: number;
  parts_total: number;
  parts_done: number;
  pending: PendingCheckpoint | null;
  outcomes: PartOutcome[];
  events: Record<string, unknown>[];
  metrics?: {
    tolerance: number;
    inlier_ratio: { ratio: number };
    nfmr: { ratio: number };
    c2c: { mean: number; median: number; max: number };
  };
}

export interface ServerEvent {
  kind: "hello" | "checkpoint" | "progress" | "completed";
  status: string;
  step: number;
  parts_done?: number;
  pending?: { part_id: number; part_name: string; stage: string; retry_count: number };
}

export interface Cloud {
  positions: Float32Array; // xyz triples
  partIds: Int32Array | null;
  count: number;
}
