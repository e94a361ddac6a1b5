import { Camera, fitCamera, orbit, viewProjection, zoom } from "./camera.js";
import type { Cloud } from "./types.js";

const POINT_BUDGET = 500_000;

const VERTEX_SHADER = `
attribute vec3 position;
attribute vec3 color;
uniform mat4 mvp;
uniform float pointSize;
varying vec3 vColor;
void main() {
  gl_Position = mvp * vec4(position, 1.0);
  gl_PointSize = pointSize;
  vColor = color;
}`;

const FRAGMENT_SHADER = `
precision mediump float;
varying vec3 vColor;
void main() {
  gl_FragColor = vec4(vColor, 1.0);
}`;

interface Layer {
  positions: WebGLBuffer;
  colors: WebGLBuffer;
  count: number;
  visible: boolean;
  pointSize: number;
}

/** Minimal WebGL point-cloud renderer with an orbit camera. */
export class PointRenderer {
  private gl: WebGLRenderingContext;
  private program: WebGLProgram;
  private aPosition: number;
  private aColor: number;
  private uMvp: WebGLUniformLocation;
  private uPointSize: WebGLUniformLocation;
  private layers = new Map<string, Layer>();
  readonly camera: Camera;
  private bounds: { min: number[]; max: number[] } | null = null;

  constructor(private canvas: HTMLCanvasElement, camera: Camera) {
    const gl = canvas.getContext("webgl");
    if (!gl) throw new Error("WebGL unavailable");
    this.gl = gl;
    this.camera = camera;
    this.program = this.compile();
    this.aPosition = gl.getAttribLocation(this.program, "position");
    this.aColor = gl.getAttribLocation(this.program, "color");
    this.uMvp = gl.getUniformLocation(this.program, "mvp")!;
    this.uPointSize = gl.getUniformLocation(this.program, "pointSize")!;
    gl.enable(gl.DEPTH_TEST);
    this.attachControls();
  }

  private compile(): WebGLProgram {
    const gl = this.gl;
    const make = (type: number, src: string) => {
      const shader = gl.createShader(type)!;
      gl.shaderSource(shader, src);
      gl.compileShader(shader);
      if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
        throw new Error(gl.getShaderInfoLog(shader) ?? "shader compile failed");
      }
      return shader;
    };
    const program = gl.createProgram()!;
    gl.attachShader(program, make(gl.VERTEX_SHADER, VERTEX_SHADER));
    gl.attachShader(program, make(gl.FRAGMENT_SHADER, FRAGMENT_SHADER));
    gl.linkProgram(program);
    if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
      throw new Error(gl.getProgramInfoLog(program) ?? "program link failed");
    }
    return program;
  }

  private attachControls(): void {
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    this.canvas.addEventListener("mousedown", (e) => {
      dragging = true;
      lastX = e.clientX;
      lastY = e.clientY;
    });
    window.addEventListener("mouseup", () => (dragging = false));
    window.addEventListener("mousemove", (e) => {
      if (!dragging) return;
      orbit(this.camera, (e.clientX - lastX) * 0.008, (e.clientY - lastY) * 0.008);
      lastX = e.clientX;
      lastY = e.clientY;
      this.draw();
    });
    this.canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      zoom(this.camera, e.deltaY > 0 ? 1.1 : 1 / 1.1);
      this.draw();
    }, { passive: false });
  }

  /** Upload (or replace) a layer; clouds above the budget are decimated
   * display-side only. */
  setLayer(name: string, cloud: Cloud, colors: Float32Array, pointSize = 2.5): void {
    const gl = this.gl;
    let budgetCloud = cloud;
    let budgetColors = colors;
    if (cloud.count > POINT_BUDGET) {
      const stride = Math.ceil(cloud.count / POINT_BUDGET);
      const kept = Math.floor((cloud.count + stride - 1) / stride);
      const pos = new Float32Array(kept * 3);
      const col = new Float32Array(kept * 3);
      let w = 0;
      for (let i = 0; i < cloud.count; i += stride) {
        pos.set(cloud.positions.subarray(3 * i, 3 * i + 3), 3 * w);
        col.set(colors.subarray(3 * i, 3 * i + 3), 3 * w);
        w++;
      }
      budgetCloud = { positions: pos, partIds: null, count: kept };
      budgetColors = col;
    }
    const existing = this.layers.get(name);
    const layer: Layer = existing ?? {
      positions: gl.createBuffer()!,
      colors: gl.createBuffer()!,
      count: 0,
      visible: true,
      pointSize,
    };
    gl.bindBuffer(gl.ARRAY_BUFFER, layer.positions);
    gl.bufferData(gl.ARRAY_BUFFER, budgetCloud.positions, gl.STATIC_DRAW);
    gl.bindBuffer(gl.ARRAY_BUFFER, layer.colors);
    gl.bufferData(gl.ARRAY_BUFFER, budgetColors, gl.STATIC_DRAW);
    layer.count = budgetCloud.count;
    layer.pointSize = pointSize;
    this.layers.set(name, layer);
    this.growBounds(budgetCloud);
  }

  private growBounds(cloud: Cloud): void {
    if (cloud.count === 0) return;
    const min = [Infinity, Infinity, Infinity];
    const max = [-Infinity, -Infinity, -Infinity];
    for (let i = 0; i < cloud.count; i++) {
      for (let a = 0; a < 3; a++) {
        const v = cloud.positions[3 * i + a];
        if (v < min[a]) min[a] = v;
        if (v > max[a]) max[a] = v;
      }
    }
    if (!this.bounds) {
      this.bounds = { min, max };
      fitCamera(this.camera, min, max);
    } else {
      for (let a = 0; a < 3; a++) {
        this.bounds.min[a] = Math.min(this.bounds.min[a], min[a]);
        this.bounds.max[a] = Math.max(this.bounds.max[a], max[a]);
      }
    }
  }

  setVisible(name: string, visible: boolean): void {
    const layer = this.layers.get(name);
    if (layer) layer.visible = visible;
  }

  draw(): void {
    const gl = this.gl;
    const w = this.canvas.clientWidth || this.canvas.width;
    const h = this.canvas.clientHeight || this.canvas.height;
    if (this.canvas.width !== w || this.canvas.height !== h) {
      this.canvas.width = w;
      this.canvas.height = h;
    }
    gl.viewport(0, 0, w, h);
    gl.clearColor(0.09, 0.1, 0.12, 1.0);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    gl.useProgram(this.program);
    const mvp = viewProjection(this.camera, w / Math.max(1, h));
    gl.uniformMatrix4fv(this.uMvp, false, mvp);
    for (const layer of this.layers.values()) {
      if (!layer.visible || layer.count === 0) continue;
      gl.uniform1f(this.uPointSize, layer.pointSize);
      gl.bindBuffer(gl.ARRAY_BUFFER, layer.positions);
      gl.enableVertexAttribArray(this.aPosition);
      gl.vertexAttribPointer(this.aPosition, 3, gl.FLOAT, false, 0, 0);
      gl.bindBuffer(gl.ARRAY_BUFFER, layer.colors);
      gl.enableVertexAttribArray(this.aColor);
      gl.vertexAttribPointer(this.aColor, 3, gl.FLOAT, false, 0, 0);
      gl.drawArrays(gl.POINTS, 0, layer.count);
    }
  }
}
