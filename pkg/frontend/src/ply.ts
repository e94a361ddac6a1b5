import type { Cloud } from "./types.js";

/** Parse the ASCII PLY flavor the partreg service emits (x y z [part_id]). */
export function parsePly(text: string): Cloud {
  const lines = text.split("\n");
  if (lines.length === 0 || lines[0].trim() !== "ply") {
    throw new Error("not a PLY document");
  }
  let vertexCount = -1;
  const properties: string[] = [];
  let body = -1;
  for (let i = 1; i < lines.length; i++) {
    const tok = lines[i].trim().split(/\s+/);
    if (tok[0] === "element") {
      if (tok[1] !== "vertex") throw new Error(`unsupported element ${tok[1]}`);
      vertexCount = parseInt(tok[2], 10);
    } else if (tok[0] === "property") {
      properties.push(tok[2]);
    } else if (tok[0] === "end_header") {
      body = i + 1;
      break;
    }
  }
  if (body < 0 || vertexCount < 0) throw new Error("malformed PLY header");
  if (properties[0] !== "x" || properties[1] !== "y" || properties[2] !== "z") {
    throw new Error(`expected x y z leading properties, got ${properties.join(",")}`);
  }
  const idColumn = properties.indexOf("part_id");
  const positions = new Float32Array(vertexCount * 3);
  const partIds = idColumn >= 0 ? new Int32Array(vertexCount) : null;
  for (let k = 0; k < vertexCount; k++) {
    const row = lines[body + k];
    if (row === undefined) throw new Error(`vertex row ${k} missing`);
    const tok = row.trim().split(/\s+/);
    positions[3 * k] = parseFloat(tok[0]);
    positions[3 * k + 1] = parseFloat(tok[1]);
    positions[3 * k + 2] = parseFloat(tok[2]);
    if (partIds) partIds[k] = parseInt(tok[idColumn], 10);
    if (Number.isNaN(positions[3 * k])) throw new Error(`bad vertex row ${k}`);
  }
  return { positions, partIds, count: vertexCount };
}

/** Uniform-stride decimation for display; never mutates the input. */
export function decimate(cloud: Cloud, budget: number): Cloud {
  if (cloud.count <= budget) return cloud;
  const stride = Math.ceil(cloud.count / budget);
  const kept = Math.floor((cloud.count + stride - 1) / stride);
  const positions = new Float32Array(kept * 3);
  const partIds = cloud.partIds ? new Int32Array(kept) : null;
  let w = 0;
  for (let i = 0; i < cloud.count; i += stride) {
    positions[3 * w] = cloud.positions[3 * i];
    positions[3 * w + 1] = cloud.positions[3 * i + 1];
    positions[3 * w + 2] = cloud.positions[3 * i + 2];
    if (partIds && cloud.partIds) partIds[w] = cloud.partIds[i];
    w++;
  }
  return { positions, partIds, count: kept };
}
