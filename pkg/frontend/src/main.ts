import { ApiClient } from "./api.js";
import { buildColors, c2cDistances, ColorMode } from "./colors.js";
import { defaultCamera } from "./camera.js";
import { PointRenderer } from "./renderer.js";
import {
  Action,
  checkpointPanel,
  commandsEnabled,
  completionSummary,
  initialState,
  reduce,
  ViewState,
} from "./state.js";
import type { Cloud, Command } from "./types.js";

const api = new ApiClient(window.location.origin);
let state: ViewState = initialState();
const clouds: { source: Cloud | null; target: Cloud | null; current: Cloud | null } = {
  source: null,
  target: null,
  current: null,
};
let currentC2c: Float32Array | null = null;
let heatScale = 1.0;

const canvas = document.getElementById("viewer") as HTMLCanvasElement;
const renderer = new PointRenderer(canvas, defaultCamera());

const el = (id: string) => document.getElementById(id)!;
const buttons: Record<Command, HTMLButtonElement> = {
  accept: el("btn-accept") as HTMLButtonElement,
  retry: el("btn-retry") as HTMLButtonElement,
  skip: el("btn-skip") as HTMLButtonElement,
};

function dispatch(action: Action): void {
  state = reduce(state, action);
  renderUi();
}

function renderUi(): void {
  const snap = state.snapshot;
  el("status").textContent = snap ? snap.status : "connecting";
  el("scenario").textContent = snap ? snap.scenario_id : "";
  el("progress").textContent = snap ? `${snap.parts_done}/${snap.parts_total} parts` : "";
  el("banner").classList.toggle("hidden", !state.stale);
  el("error").textContent = state.lastError ?? "";

  const panel = checkpointPanel(state);
  el("checkpoint").classList.toggle("hidden", panel === null);
  if (panel) {
    el("cp-title").textContent = panel.title;
    el("cp-retry").textContent = String(panel.retry);
    el("cp-fitness").textContent = panel.fitness.toFixed(3);
    el("cp-rmse").textContent = panel.rmse.toFixed(4);
    el("cp-inliers").textContent = String(panel.inliers);
  }
  const enabled = commandsEnabled(state);
  for (const button of Object.values(buttons)) button.disabled = !enabled;

  const summary = completionSummary(state);
  el("summary").classList.toggle("hidden", summary === null);
  if (summary) {
    el("sum-metrics").textContent =
      `IR ${summary.inlierRatio.toFixed(3)} · NFMR ${summary.nfmr.toFixed(3)} · ` +
      `median C2C ${summary.c2cMedian.toFixed(3)}`;
    el("sum-parts").innerHTML = summary.parts
      .map((p) => `<li>${p.name}: ${p.stage}</li>`)
      .join("");
  }

  const outcomes = snap?.outcomes ?? [];
  el("outcomes").innerHTML = outcomes
    .map((o) => `<li><span class="part">${o.part_name}</span> ${o.stage}</li>`)
    .join("");
}

function repaintClouds(): void {
  const mode = state.colorMode as ColorMode;
  if (clouds.source) {
    renderer.setLayer(
      "source",
      clouds.source,
      buildColors(clouds.source, mode === "c2c-heat" ? "uniform" : mode, [0.45, 0.45, 0.5], null, 1),
      2.0,
    );
  }
  if (clouds.target) {
    renderer.setLayer(
      "target",
      clouds.target,
      buildColors(clouds.target, "uniform", [0.62, 0.62, 0.62], null, 1),
      2.0,
    );
  }
  if (clouds.current) {
    if (mode === "c2c-heat" && clouds.target) {
      currentC2c = c2cDistances(clouds.current, clouds.target, heatScale * 4);
    }
    renderer.setLayer(
      "current",
      clouds.current,
      buildColors(clouds.current, mode, [0.95, 0.75, 0.2], currentC2c, heatScale),
      3.0,
    );
  }
  for (const [name, visible] of Object.entries(state.layers)) {
    renderer.setVisible(name, visible);
  }
  renderer.draw();
}

async function refreshCurrentCloud(): Promise<void> {
  clouds.current = await api.getCloud("current");
  repaintClouds();
}

async function issueCommand(command: Command): Promise<void> {
  if (!commandsEnabled(state)) return; // double-click guard
  dispatch({ kind: "command-sent" });
  try {
    const snapshot = await api.postCommand(command);
    dispatch({ kind: "command-acked", snapshot });
    await refreshCurrentCloud();
  } catch (err) {
    dispatch({ kind: "command-failed", error: String(err) });
  }
}

async function boot(): Promise<void> {
  for (const [command, button] of Object.entries(buttons)) {
    button.addEventListener("click", () => void issueCommand(command as Command));
  }
  (el("color-mode") as HTMLSelectElement).addEventListener("change", (e) => {
    dispatch({ kind: "set-color-mode", mode: (e.target as HTMLSelectElement).value as ColorMode });
    repaintClouds();
  });
  for (const layer of ["source", "target", "current"] as const) {
    (el(`layer-${layer}`) as HTMLInputElement).addEventListener("change", () => {
      dispatch({ kind: "toggle-layer", layer });
      repaintClouds();
    });
    (el(`layer-${layer}`) as HTMLInputElement).checked = state.layers[layer];
  }

  dispatch({ kind: "snapshot", snapshot: await api.getSession() });
  const [source, target, current] = await Promise.all([
    api.getCloud("source"),
    api.getCloud("target"),
    api.getCloud("current"),
  ]);
  clouds.source = source;
  clouds.target = target;
  clouds.current = current;
  if (state.snapshot?.metrics?.tolerance) {
    heatScale = state.snapshot.metrics.tolerance * 2;
  } else {
    heatScale = estimateHeatScale(target);
  }
  repaintClouds();

  api.subscribe(
    (event) => {
      void (async () => {
        dispatch({ kind: "snapshot", snapshot: await api.getSession() });
        if (event.kind === "checkpoint" || event.kind === "progress" || event.kind === "completed") {
          await refreshCurrentCloud();
        }
      })();
    },
    () => dispatch({ kind: "stream-up" }),
    () => dispatch({ kind: "stream-down" }),
  );
}

function estimateHeatScale(cloud: Cloud): number {
  // ~1% of the bounding diagonal: saturates the heat ramp near scan noise
  let min = [Infinity, Infinity, Infinity];
  let max = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < cloud.count; i++) {
    for (let a = 0; a < 3; a++) {
      const v = cloud.positions[3 * i + a];
      min[a] = Math.min(min[a], v);
      max[a] = Math.max(max[a], v);
    }
  }
  return 0.01 * Math.hypot(max[0] - min[0], max[1] - min[1], max[2] - min[2]) + 1e-6;
}

void boot();
