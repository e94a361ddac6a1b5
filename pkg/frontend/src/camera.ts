/** Orbit camera: spherical coordinates around a focus point, column-major
 * view-projection matrix for WebGL. */

export interface Camera {
  yaw: number;
  pitch: number;
  distance: number;
  focus: [number, number, number];
}

export function defaultCamera(): Camera {
  return { yaw: 0.7, pitch: 0.45, distance: 10, focus: [0, 0, 0] };
}

export function fitCamera(camera: Camera, min: number[], max: number[]): void {
  camera.focus = [
    (min[0] + max[0]) / 2,
    (min[1] + max[1]) / 2,
    (min[2] + max[2]) / 2,
  ];
  const dx = max[0] - min[0];
  const dy = max[1] - min[1];
  const dz = max[2] - min[2];
  camera.distance = Math.max(1e-3, Math.sqrt(dx * dx + dy * dy + dz * dz)) * 1.4;
}

export function orbit(camera: Camera, dYaw: number, dPitch: number): void {
  camera.yaw += dYaw;
  const limit = Math.PI / 2 - 0.01;
  camera.pitch = Math.min(limit, Math.max(-limit, camera.pitch + dPitch));
}

export function zoom(camera: Camera, factor: number): void {
  camera.distance = Math.min(1e6, Math.max(1e-3, camera.distance * factor));
}

export function eyePosition(camera: Camera): [number, number, number] {
  const cp = Math.cos(camera.pitch);
  return [
    camera.focus[0] + camera.distance * cp * Math.cos(camera.yaw),
    camera.focus[1] + camera.distance * Math.sin(camera.pitch),
    camera.focus[2] + camera.distance * cp * Math.sin(camera.yaw),
  ];
}

function sub(a: number[], b: number[]): number[] {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: number[], b: number[]): number[] {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function normalize(a: number[]): number[] {
  const n = Math.hypot(a[0], a[1], a[2]) || 1;
  return [a[0] / n, a[1] / n, a[2] / n];
}

/** Column-major view-projection matrix (perspective, y-up). */
export function viewProjection(camera: Camera, aspect: number): Float32Array {
  const eye = eyePosition(camera);
  const f = normalize(sub(camera.focus as unknown as number[], eye));
  const s = normalize(cross(f, [0, 1, 0]));
  const u = cross(s, f);
  // look-at (column major)
  const view = [
    s[0], u[0], -f[0], 0,
    s[1], u[1], -f[1], 0,
    s[2], u[2], -f[2], 0,
    -(s[0] * eye[0] + s[1] * eye[1] + s[2] * eye[2]),
    -(u[0] * eye[0] + u[1] * eye[1] + u[2] * eye[2]),
    f[0] * eye[0] + f[1] * eye[1] + f[2] * eye[2],
    1,
  ];
  const fovY = Math.PI / 4;
  const near = camera.distance * 1e-3;
  const far = camera.distance * 100;
  const t = 1 / Math.tan(fovY / 2);
  const proj = [
    t / aspect, 0, 0, 0,
    0, t, 0, 0,
    0, 0, (far + near) / (near - far), -1,
    0, 0, (2 * far * near) / (near - far), 0,
  ];
  return multiply4(proj, view);
}

export function multiply4(a: number[], b: number[]): Float32Array {
  const out = new Float32Array(16);
  for (let col = 0; col < 4; col++) {
    for (let row = 0; row < 4; row++) {
      let acc = 0;
      for (let k = 0; k < 4; k++) {
        acc += a[k * 4 + row] * b[col * 4 + k];
      }
      out[col * 4 + row] = acc;
    }
  }
  return out;
}
