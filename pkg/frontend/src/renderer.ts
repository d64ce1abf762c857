// Minimal WebGL triangle-mesh viewer with per-vertex colors and an orbit
// camera. No external dependencies; smooth vertex normals are recomputed
// on the CPU each time positions change (meshes here are a few thousand
// vertices).

type Mat4 = Float32Array;

function perspective(fovy: number, aspect: number, near: number,
                     far: number): Mat4 {
  const f = 1.0 / Math.tan(fovy / 2);
  const out = new Float32Array(16);
  out[0] = f / aspect;
  out[5] = f;
  out[10] = (far + near) / (near - far);
  out[11] = -1;
  out[14] = (2 * far * near) / (near - far);
  return out;
}

function lookAt(eye: number[], center: number[], up: number[]): Mat4 {
  const z = norm3(sub3(eye, center));
  const x = norm3(cross3(up, z));
  const y = cross3(z, x);
  const out = new Float32Array(16);
  out[0] = x[0]; out[4] = x[1]; out[8] = x[2];
  out[1] = y[0]; out[5] = y[1]; out[9] = y[2];
  out[2] = z[0]; out[6] = z[1]; out[10] = z[2];
  out[12] = -dot3(x, eye);
  out[13] = -dot3(y, eye);
  out[14] = -dot3(z, eye);
  out[15] = 1;
  return out;
}

function mul4(a: Mat4, b: Mat4): Mat4 {
  const out = new Float32Array(16);
  for (let c = 0; c < 4; c++) {
    for (let r = 0; r < 4; r++) {
      let acc = 0;
      for (let k = 0; k < 4; k++) acc += a[k * 4 + r] * b[c * 4 + k];
      out[c * 4 + r] = acc;
    }
  }
  return out;
}

const sub3 = (a: number[], b: number[]) =>
  [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
const cross3 = (a: number[], b: number[]) => [
  a[1] * b[2] - a[2] * b[1],
  a[2] * b[0] - a[0] * b[2],
  a[0] * b[1] - a[1] * b[0],
];
const dot3 = (a: number[], b: number[]) =>
  a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
function norm3(a: number[]): number[] {
  const n = Math.hypot(a[0], a[1], a[2]) || 1;
  return [a[0] / n, a[1] / n, a[2] / n];
}

const VERT_SRC = `
attribute vec3 aPosition;
attribute vec3 aNormal;
attribute vec3 aColor;
uniform mat4 uMvp;
uniform mat4 uView;
varying vec3 vColor;
varying vec3 vNormal;
void main() {
  gl_Position = uMvp * vec4(aPosition, 1.0);
  vNormal = mat3(uView) * aNormal;
  vColor = aColor;
}`;

const FRAG_SRC = `
precision mediump float;
varying vec3 vColor;
varying vec3 vNormal;
void main() {
  vec3 n = normalize(vNormal);
  float diffuse = 0.35 + 0.65 * abs(n.z);
  gl_FragColor = vec4(vColor * diffuse, 1.0);
}`;

export function computeVertexNormals(
  positions: Float32Array, indices: Uint32Array, out?: Float32Array
): Float32Array {
  const normals = out ?? new Float32Array(positions.length);
  normals.fill(0);
  for (let t = 0; t < indices.length; t += 3) {
    const a = 3 * indices[t], b = 3 * indices[t + 1], c = 3 * indices[t + 2];
    const abx = positions[b] - positions[a];
    const aby = positions[b + 1] - positions[a + 1];
    const abz = positions[b + 2] - positions[a + 2];
    const acx = positions[c] - positions[a];
    const acy = positions[c + 1] - positions[a + 1];
    const acz = positions[c + 2] - positions[a + 2];
    const nx = aby * acz - abz * acy;
    const ny = abz * acx - abx * acz;
    const nz = abx * acy - aby * acx;
    for (const v of [a, b, c]) {
      normals[v] += nx;
      normals[v + 1] += ny;
      normals[v + 2] += nz;
    }
  }
  for (let i = 0; i < normals.length; i += 3) {
    const n = Math.hypot(normals[i], normals[i + 1], normals[i + 2]) || 1;
    normals[i] /= n;
    normals[i + 1] /= n;
    normals[i + 2] /= n;
  }
  return normals;
}

export class MeshViewer {
  private gl: WebGLRenderingContext;
  private program: WebGLProgram;
  private buffers: { position: WebGLBuffer; normal: WebGLBuffer;
                     color: WebGLBuffer; index: WebGLBuffer };
  private indexCount = 0;
  private indices: Uint32Array = new Uint32Array(0);
  private normals: Float32Array = new Float32Array(0);
  private center = [0, 0, 0];
  private radius = 1;
  // orbit state persists across frames
  theta = 0.9;
  phi = 0.7;
  distance = 3;
  private pan = [0, 0, 0];
  private dirty = true;

  constructor(private canvas: HTMLCanvasElement) {
    const gl = canvas.getContext("webgl");
    if (!gl) throw new Error("WebGL unavailable");
    this.gl = gl;
    gl.getExtension("OES_element_index_uint");
    this.program = this.compile();
    this.buffers = {
      position: gl.createBuffer()!,
      normal: gl.createBuffer()!,
      color: gl.createBuffer()!,
      index: gl.createBuffer()!,
    };
    gl.enable(gl.DEPTH_TEST);
    gl.clearColor(0.12, 0.13, 0.16, 1.0);
    this.bindOrbitControls();
    const draw = () => {
      if (this.dirty) {
        this.draw();
        this.dirty = false;
      }
      requestAnimationFrame(draw);
    };
    requestAnimationFrame(draw);
  }

  private compile(): WebGLProgram {
    const gl = this.gl;
    const make = (type: number, src: string) => {
      const sh = gl.createShader(type)!;
      gl.shaderSource(sh, src);
      gl.compileShader(sh);
      if (!gl.getShaderParameter(sh, gl.COMPILE_STATUS)) {
        throw new Error(gl.getShaderInfoLog(sh) ?? "shader error");
      }
      return sh;
    };
    const prog = gl.createProgram()!;
    gl.attachShader(prog, make(gl.VERTEX_SHADER, VERT_SRC));
    gl.attachShader(prog, make(gl.FRAGMENT_SHADER, FRAG_SRC));
    gl.linkProgram(prog);
    if (!gl.getProgramParameter(prog, gl.LINK_STATUS)) {
      throw new Error(gl.getProgramInfoLog(prog) ?? "link error");
    }
    return prog;
  }

  setMesh(positions: Float32Array, triangles: number[][]): void {
    this.indices = new Uint32Array(triangles.length * 3);
    triangles.forEach((tri, i) => {
      this.indices[3 * i] = tri[0];
      this.indices[3 * i + 1] = tri[1];
      this.indices[3 * i + 2] = tri[2];
    });
    this.indexCount = this.indices.length;
    const gl = this.gl;
    gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.buffers.index);
    gl.bufferData(gl.ELEMENT_ARRAY_BUFFER, this.indices, gl.STATIC_DRAW);
    // frame the object once on load; later frames keep the camera
    const lo = [Infinity, Infinity, Infinity];
    const hi = [-Infinity, -Infinity, -Infinity];
    for (let i = 0; i < positions.length; i += 3) {
      for (let k = 0; k < 3; k++) {
        lo[k] = Math.min(lo[k], positions[i + k]);
        hi[k] = Math.max(hi[k], positions[i + k]);
      }
    }
    this.center = [0, 1, 2].map(k => (lo[k] + hi[k]) / 2);
    this.radius = Math.max(1e-6, Math.hypot(
      hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]) / 2);
    this.distance = this.radius * 3.2;
    this.pan = [0, 0, 0];
    this.updatePositions(positions);
  }

  updatePositions(positions: Float32Array): void {
    const gl = this.gl;
    this.normals = computeVertexNormals(positions, this.indices,
                                        this.normals.length
                                        === positions.length
                                        ? this.normals : undefined);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.buffers.position);
    gl.bufferData(gl.ARRAY_BUFFER, positions, gl.DYNAMIC_DRAW);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.buffers.normal);
    gl.bufferData(gl.ARRAY_BUFFER, this.normals, gl.DYNAMIC_DRAW);
    this.dirty = true;
  }

  setColors(colors: Float32Array): void {
    const gl = this.gl;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.buffers.color);
    gl.bufferData(gl.ARRAY_BUFFER, colors, gl.DYNAMIC_DRAW);
    this.dirty = true;
  }

  private bindOrbitControls(): void {
    let dragging = false;
    let panning = false;
    let lastX = 0, lastY = 0;
    this.canvas.addEventListener("mousedown", (e) => {
      dragging = true;
      panning = e.button === 2 || e.shiftKey;
      lastX = e.clientX;
      lastY = e.clientY;
    });
    window.addEventListener("mouseup", () => { dragging = false; });
    window.addEventListener("mousemove", (e) => {
      if (!dragging) return;
      const dx = e.clientX - lastX;
      const dy = e.clientY - lastY;
      lastX = e.clientX;
      lastY = e.clientY;
      if (panning) {
        const s = this.distance * 0.0015;
        this.pan[0] -= dx * s * Math.cos(this.theta);
        this.pan[1] += dy * s;
        this.pan[2] += dx * s * Math.sin(this.theta);
      } else {
        this.theta -= dx * 0.008;
        this.phi = Math.min(Math.PI - 0.05,
                            Math.max(0.05, this.phi - dy * 0.008));
      }
      this.dirty = true;
    });
    this.canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.distance *= Math.exp(e.deltaY * 0.001);
      this.distance = Math.max(this.radius * 0.3,
                               Math.min(this.radius * 30, this.distance));
      this.dirty = true;
    }, { passive: false });
    this.canvas.addEventListener("contextmenu", (e) => e.preventDefault());
  }

  private draw(): void {
    const gl = this.gl;
    const w = this.canvas.clientWidth || this.canvas.width;
    const h = this.canvas.clientHeight || this.canvas.height;
    if (this.canvas.width !== w || this.canvas.height !== h) {
      this.canvas.width = w;
      this.canvas.height = h;
    }
    gl.viewport(0, 0, w, h);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    if (!this.indexCount) return;

    const target = [
      this.center[0] + this.pan[0],
      this.center[1] + this.pan[1],
      this.center[2] + this.pan[2],
    ];
    const eye = [
      target[0] + this.distance * Math.sin(this.phi) * Math.cos(this.theta),
      target[1] + this.distance * Math.cos(this.phi),
      target[2] + this.distance * Math.sin(this.phi) * Math.sin(this.theta),
    ];
    const view = lookAt(eye, target, [0, 1, 0]);
    const proj = perspective(0.9, w / Math.max(1, h),
                             this.radius * 0.01, this.radius * 100);
    const mvp = mul4(proj, view);

    gl.useProgram(this.program);
    gl.uniformMatrix4fv(
      gl.getUniformLocation(this.program, "uMvp"), false, mvp);
    gl.uniformMatrix4fv(
      gl.getUniformLocation(this.program, "uView"), false, view);
    for (const [name, buffer] of [
      ["aPosition", this.buffers.position],
      ["aNormal", this.buffers.normal],
      ["aColor", this.buffers.color],
    ] as const) {
      const loc = gl.getAttribLocation(this.program, name);
      gl.bindBuffer(gl.ARRAY_BUFFER, buffer);
      gl.enableVertexAttribArray(loc);
      gl.vertexAttribPointer(loc, 3, gl.FLOAT, false, 0, 0);
    }
    gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.buffers.index);
    gl.drawElements(gl.TRIANGLES, this.indexCount, gl.UNSIGNED_INT, 0);
  }
}
