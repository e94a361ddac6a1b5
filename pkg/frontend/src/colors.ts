import type { Cloud } from "./types.js";

export type ColorMode = "by-part" | "c2c-heat" | "uniform";

/** Stable distinct color for a part id (golden-angle hue walk). */
export function partColor(partId: number): [number, number, number] {
  const hue = ((partId * 137.50776405) % 360 + 360) % 360;
  return hslToRgb(hue, 0.62, 0.55);
}

export function hslToRgb(h: number, s: number, l: number): [number, number, number] {
  const c = (1 - Math.abs(2 * l - 1)) * s;
  const x = c * (1 - Math.abs(((h / 60) % 2) - 1));
  const m = l - c / 2;
  let rgb: [number, number, number];
  if (h < 60) rgb = [c, x, 0];
  else if (h < 120) rgb = [x, c, 0];
  else if (h < 180) rgb = [0, c, x];
  else if (h < 240) rgb = [0, x, c];
  else if (h < 300) rgb = [x, 0, c];
  else rgb = [c, 0, x];
  return [rgb[0] + m, rgb[1] + m, rgb[2] + m];
}

/** Blue -> green -> red heat ramp over t in [0, 1]. */
export function heatColor(t: number): [number, number, number] {
  const x = Math.min(1, Math.max(0, t));
  if (x < 0.5) {
    const u = x * 2;
    return [0.1 * (1 - u) + 0.1 * u, 0.2 * (1 - u) + 0.8 * u, 0.9 * (1 - u) + 0.2 * u];
  }
  const u = (x - 0.5) * 2;
  return [0.1 * (1 - u) + 0.9 * u, 0.8 * (1 - u) + 0.15 * u, 0.2 * (1 - u) + 0.1 * u];
}

/**
 * Nearest-neighbor distances from each point of `cloud` into `reference`
 * via a uniform voxel hash; used for the C2C heat coloring. Distances are
 * exact within a 3x3x3 voxel neighborhood and clamped to `clampAt` beyond.
 */
export function c2cDistances(cloud: Cloud, reference: Cloud, clampAt: number): Float32Array {
  const out = new Float32Array(cloud.count).fill(clampAt);
  if (reference.count === 0) return out;
  const cell = clampAt > 0 ? clampAt : 1;
  const key = (x: number, y: number, z: number) =>
    `${Math.floor(x / cell)},${Math.floor(y / cell)},${Math.floor(z / cell)}`;
  const grid = new Map<string, number[]>();
  for (let j = 0; j < reference.count; j++) {
    const k = key(reference.positions[3 * j], reference.positions[3 * j + 1], reference.positions[3 * j + 2]);
    const bucket = grid.get(k);
    if (bucket) bucket.push(j);
    else grid.set(k, [j]);
  }
  for (let i = 0; i < cloud.count; i++) {
    const px = cloud.positions[3 * i];
    const py = cloud.positions[3 * i + 1];
    const pz = cloud.positions[3 * i + 2];
    const cx = Math.floor(px / cell);
    const cy = Math.floor(py / cell);
    const cz = Math.floor(pz / cell);
    let best = clampAt * clampAt;
    for (let dx = -1; dx <= 1; dx++)
      for (let dy = -1; dy <= 1; dy++)
        for (let dz = -1; dz <= 1; dz++) {
          const bucket = grid.get(`${cx + dx},${cy + dy},${cz + dz}`);
          if (!bucket) continue;
          for (const j of bucket) {
            const ax = reference.positions[3 * j] - px;
            const ay = reference.positions[3 * j + 1] - py;
            const az = reference.positions[3 * j + 2] - pz;
            const d2 = ax * ax + ay * ay + az * az;
            if (d2 < best) best = d2;
          }
        }
    out[i] = Math.sqrt(best);
  }
  return out;
}

/** Per-point RGB buffer for a cloud under the given color mode. */
export function buildColors(
  cloud: Cloud,
  mode: ColorMode,
  uniform: [number, number, number],
  c2c: Float32Array | null,
  heatScale: number,
): Float32Array {
  const colors = new Float32Array(cloud.count * 3);
  for (let i = 0; i < cloud.count; i++) {
    let rgb: [number, number, number];
    if (mode === "by-part" && cloud.partIds) {
      rgb = partColor(cloud.partIds[i]);
    } else if (mode === "c2c-heat" && c2c) {
      rgb = heatColor(c2c[i] / heatScale);
    } else {
      rgb = uniform;
    }
    colors[3 * i] = rgb[0];
    colors[3 * i + 1] = rgb[1];
    colors[3 * i + 2] = rgb[2];
  }
  return colors;
}
