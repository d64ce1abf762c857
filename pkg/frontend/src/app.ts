// Browser client: model selection and import, live parameter editing with
// pending/acknowledged states, start/pause/reset, stress view toggle and
// the deforming 3D view. Reconnects with backoff and reloads the last
// model after a drop.

import { fillVertexColors, uniformColors } from "./colors.js";
import { DirectionGizmo } from "./gizmo.js";
import { controlMessage, decodeFrame, isFrameMessage, ModelInfo,
         ServerResponse } from "./protocol.js";
import { MeshViewer } from "./renderer.js";
import { normalizeDirection, validateMaterialField } from "./validate.js";

const BASE_COLOR: [number, number, number] = [0.55, 0.62, 0.7];

interface PendingCommand {
  id: number;
  cmd: string;
  onAck: (resp: ServerResponse) => void;
}

class App {
  private ws: WebSocket | null = null;
  private viewer: MeshViewer;
  private gizmo: DirectionGizmo;
  private nextId = 1;
  private pending: PendingCommand[] = [];
  private model: ModelInfo | null = null;
  private lastModelName: string | null = null;
  private stressView = false;
  private colors = new Float32Array(0);
  private lastFrame: ReturnType<typeof decodeFrame> | null = null;
  private acked = {
    material: {} as Record<string, number>,
    direction: [0, 0, 1] as [number, number, number],
    magnitude: 0,
  };
  private reconnectDelay = 500;

  constructor() {
    this.viewer = new MeshViewer(
      document.getElementById("view") as HTMLCanvasElement);
    this.gizmo = new DirectionGizmo(
      document.getElementById("gizmo") as HTMLCanvasElement,
      (dir) => this.sendField(dir, this.magnitudeInput()));
    this.bindUi();
    this.connect();
  }

  // -- connection -------------------------------------------------------

  private connect(): void {
    const url = `${location.protocol === "https:" ? "wss" : "ws"}://` +
      `${location.host}/sim`;
    this.setStatus("connecting…", "warn");
    const ws = new WebSocket(url);
    ws.binaryType = "arraybuffer";
    ws.onopen = () => {
      this.ws = ws;
      this.reconnectDelay = 500;
      this.setStatus("connected", "ok");
      this.send("list_models", {}, (resp) => {
        this.renderModelList((resp.models as string[]) ?? []);
        if (this.lastModelName) this.loadModel(this.lastModelName);
      });
    };
    ws.onmessage = (e) => this.onMessage(e);
    ws.onclose = () => {
      this.ws = null;
      this.setStatus(
        `disconnected — retrying in ${this.reconnectDelay / 1000}s`, "err");
      setTimeout(() => this.connect(), this.reconnectDelay);
      this.reconnectDelay = Math.min(this.reconnectDelay * 2, 15000);
    };
    ws.onerror = () => ws.close();
  }

  private send(cmd: string, fields: Record<string, unknown>,
               onAck: (resp: ServerResponse) => void = () => {}): void {
    if (!this.ws || this.ws.readyState !== WebSocket.OPEN) return;
    const id = this.nextId++;
    this.pending.push({ id, cmd, onAck });
    this.ws.send(controlMessage(cmd, fields, id));
  }

  private onMessage(e: MessageEvent): void {
    if (e.data instanceof ArrayBuffer) {
      if (!isFrameMessage(e.data)) return;
      try {
        this.onFrame(decodeFrame(e.data));
      } catch (err) {
        console.warn("dropped malformed frame:", err);
      }
      return;
    }
    const resp = JSON.parse(e.data as string) as ServerResponse;
    if (resp.event) {
      this.onEvent(resp);
      return;
    }
    const idx = this.pending.findIndex((p) => p.id === resp.id);
    const entry = idx >= 0 ? this.pending.splice(idx, 1)[0]
                           : this.pending.shift();
    entry?.onAck(resp);
  }

  private onEvent(ev: ServerResponse): void {
    if (ev.event === "quasistatic_progress") {
      this.setStatus(
        `solving… stage ${ev.stage}/${ev.stages}, residual ` +
        `${Number(ev.residual).toExponential(1)}`, "warn");
    } else if (ev.event === "quasistatic_done") {
      this.setStatus(
        `equilibrium ${ev.converged ? "reached" : "NOT reached"} ` +
        `(${ev.newton_iters} Newton iters)`, ev.converged ? "ok" : "err");
    } else if (ev.event === "step_failed") {
      this.setStatus(`step failed: ${ev.message}`, "err");
    }
  }

  // -- frames -------------------------------------------------------------

  private onFrame(frame: ReturnType<typeof decodeFrame>): void {
    this.lastFrame = frame;
    this.viewer.updatePositions(frame.positions);
    this.recolor();
    const fmt = (v: number) => v.toPrecision(3);
    this.text("legend-min", `${fmt(frame.vmMin)} Pa`);
    this.text("legend-max", `${fmt(frame.vmMax)} Pa`);
    this.text("sim-time", `t = ${frame.simTime.toFixed(2)} s  ·  frame ` +
      `${frame.frame}`);
  }

  recolor(): void {
    const frame = this.lastFrame;
    if (!frame) return;
    if (this.colors.length !== frame.positions.length) {
      this.colors = new Float32Array(frame.positions.length);
    }
    if (this.stressView) {
      fillVertexColors(this.colors, frame.vonMises, frame.vmMin,
                       frame.vmMax);
    } else {
      uniformColors(this.colors, BASE_COLOR);
    }
    this.viewer.setColors(this.colors);
  }

  // -- models ---------------------------------------------------------------

  private renderModelList(names: string[]): void {
    const list = document.getElementById("models")!;
    list.innerHTML = "";
    for (const name of names) {
      const btn = document.createElement("button");
      btn.textContent = name;
      btn.className = "model-btn";
      btn.onclick = () => this.loadModel(name);
      list.appendChild(btn);
    }
  }

  private loadModel(name: string): void {
    this.send("load_model", { name }, (resp) => {
      if (!resp.ok) {
        this.setStatus(`load failed: ${resp.error?.message}`, "err");
        return;
      }
      const model = resp.model as ModelInfo;
      this.model = model;
      this.lastModelName = model.name;
      this.text("model-name", `${model.name} — ${model.node_count} nodes, ` +
        `${model.tet_count} tets`);
      const pos = new Float32Array(model.positions);
      this.viewer.setMesh(pos, model.triangles);
      this.colors = new Float32Array(pos.length);
      uniformColors(this.colors, BASE_COLOR);
      this.viewer.setColors(this.colors);
      this.lastFrame = null;
      // mirror server-acknowledged parameters into the form; edits still
      // pending (e.g. typed while disconnected) keep their values
      for (const [key, value] of Object.entries(model.material)) {
        this.acked.material[key] = value;
        const input = document.getElementById(
          `mat-${key}`) as HTMLInputElement | null;
        if (input && !input.classList.contains("pending")) {
          input.value = String(value);
          input.classList.remove("invalid");
        }
      }
      const mag = Math.hypot(model.field[0], model.field[1],
                             model.field[2]);
      const dir = normalizeDirection(
        model.field as [number, number, number]) ?? [0, 0, 1];
      this.acked.direction = dir;
      this.acked.magnitude = mag;
      this.syncFieldInputs(dir, mag);
      this.setStatus(`loaded ${model.name}`, "ok");
    });
  }

  // -- parameter edits -------------------------------------------------------

  private bindUi(): void {
    for (const key of ["young_modulus", "poisson_ratio", "density",
                       "rayleigh_mass", "rayleigh_stiffness"]) {
      const input = document.getElementById(
        `mat-${key}`) as HTMLInputElement;
      input.onchange = () => this.sendMaterial(key, input);
    }
    (document.getElementById("btn-start") as HTMLButtonElement).onclick =
      () => this.send("start", {}, () => this.setStatus("running", "ok"));
    (document.getElementById("btn-pause") as HTMLButtonElement).onclick =
      () => this.send("pause", {}, () => this.setStatus("paused", "ok"));
    (document.getElementById("btn-reset") as HTMLButtonElement).onclick =
      () => this.send("reset", {}, () => this.setStatus("reset", "ok"));
    (document.getElementById("btn-solve") as HTMLButtonElement).onclick =
      () => this.send("solve_quasistatic", {});
    const stress = document.getElementById("stress-view") as
      HTMLInputElement;
    stress.onchange = () => {
      this.stressView = stress.checked;
      this.recolor();
    };
    const magnitude = document.getElementById("field-mag") as
      HTMLInputElement;
    const magnitudeNum = document.getElementById("field-mag-num") as
      HTMLInputElement;
    const sync = (v: string) => {
      magnitude.value = v;
      magnitudeNum.value = v;
      this.sendField(this.directionInputs(), parseFloat(v));
    };
    magnitude.oninput = () => { magnitudeNum.value = magnitude.value; };
    magnitude.onchange = () => sync(magnitude.value);
    magnitudeNum.onchange = () => sync(magnitudeNum.value);
    for (const axis of ["x", "y", "z"]) {
      (document.getElementById(`dir-${axis}`) as HTMLInputElement)
        .onchange = () =>
          this.sendField(this.directionInputs(), this.magnitudeInput());
    }
    this.bindUpload();
  }

  private magnitudeInput(): number {
    return parseFloat((document.getElementById("field-mag-num") as
      HTMLInputElement).value) || 0;
  }

  private directionInputs(): [number, number, number] {
    return ["x", "y", "z"].map((a) => parseFloat(
      (document.getElementById(`dir-${a}`) as HTMLInputElement).value)
      || 0) as [number, number, number];
  }

  private syncFieldInputs(dir: [number, number, number],
                          magnitude: number): void {
    (document.getElementById("field-mag") as HTMLInputElement).value =
      String(magnitude);
    (document.getElementById("field-mag-num") as HTMLInputElement).value =
      String(magnitude);
    ["x", "y", "z"].forEach((a, i) => {
      (document.getElementById(`dir-${a}`) as HTMLInputElement).value =
        dir[i].toFixed(3);
    });
    this.gizmo.setDirection(dir);
  }

  private sendMaterial(key: string, input: HTMLInputElement): void {
    const value = parseFloat(input.value);
    const problem = validateMaterialField(key, value);
    const errBox = document.getElementById(`mat-${key}-err`)!;
    if (problem) {
      // blocked client-side: nothing is sent, state reverts to acked
      input.classList.add("invalid");
      errBox.textContent = problem;
      input.value = String(this.acked.material[key] ?? "");
      setTimeout(() => {
        input.classList.remove("invalid");
        errBox.textContent = "";
      }, 2500);
      return;
    }
    input.classList.add("pending");
    errBox.textContent = "";
    this.send("set_material", { material: { [key]: value } }, (resp) => {
      input.classList.remove("pending");
      if (resp.ok) {
        this.acked.material[key] = value;
      } else {
        input.classList.add("invalid");
        errBox.textContent = resp.error?.message ?? "rejected";
        input.value = String(this.acked.material[key] ?? "");
      }
    });
  }

  private sendField(dirRaw: [number, number, number],
                    magnitude: number): void {
    const dir = normalizeDirection(dirRaw);
    const errBox = document.getElementById("field-err")!;
    if (!dir || !Number.isFinite(magnitude)) {
      errBox.textContent = "direction must be a nonzero vector";
      this.syncFieldInputs(this.acked.direction, this.acked.magnitude);
      return;
    }
    errBox.textContent = "";
    this.syncFieldInputs(dir, magnitude);
    this.send("set_field", { direction: dir, magnitude }, (resp) => {
      if (resp.ok) {
        this.acked.direction = dir;
        this.acked.magnitude = magnitude;
      } else {
        errBox.textContent = resp.error?.message ?? "rejected";
        this.syncFieldInputs(this.acked.direction, this.acked.magnitude);
      }
    });
  }

  // -- mesh import ------------------------------------------------------------

  private bindUpload(): void {
    const drop = document.getElementById("dropzone")!;
    const stlInput = document.getElementById("file-stl") as HTMLInputElement;
    const mshInput = document.getElementById("file-msh") as HTMLInputElement;
    (document.getElementById("btn-upload") as HTMLButtonElement).onclick =
      () => {
        const stl = stlInput.files?.[0];
        const msh = mshInput.files?.[0];
        if (!msh) {
          this.setStatus("pick at least a MSH volume mesh", "err");
          return;
        }
        this.uploadPair(msh, stl ?? null);
      };
    drop.ondragover = (e) => { e.preventDefault(); };
    drop.ondrop = (e) => {
      e.preventDefault();
      const files = Array.from(e.dataTransfer?.files ?? []);
      const msh = files.find((f) => f.name.toLowerCase().endsWith(".msh"));
      const stl = files.find((f) => f.name.toLowerCase().endsWith(".stl"));
      if (msh) this.uploadPair(msh, stl ?? null);
      else this.setStatus("drop a .msh (and optionally a .stl)", "err");
    };
  }

  private async uploadPair(msh: File, stl: File | null): Promise<void> {
    const toB64 = async (f: File) => {
      const bytes = new Uint8Array(await f.arrayBuffer());
      let s = "";
      for (let i = 0; i < bytes.length; i += 0x8000) {
        s += String.fromCharCode(...bytes.subarray(i, i + 0x8000));
      }
      return btoa(s);
    };
    const name = msh.name.replace(/\.msh$/i, "");
    const fields: Record<string, unknown> = {
      name, msh_base64: await toB64(msh),
    };
    if (stl) fields.stl_base64 = await toB64(stl);
    this.send("upload_mesh", fields, (resp) => {
      if (resp.ok) {
        this.setStatus(`uploaded ${name}`, "ok");
        this.send("list_models", {}, (r) =>
          this.renderModelList((r.models as string[]) ?? []));
      } else {
        this.setStatus(`upload failed: ${resp.error?.message}`, "err");
      }
    });
  }

  // -- chrome -------------------------------------------------------------------

  private setStatus(text: string, kind: "ok" | "warn" | "err"): void {
    const el = document.getElementById("status")!;
    el.textContent = text;
    el.className = `status ${kind}`;
  }

  private text(id: string, value: string): void {
    document.getElementById(id)!.textContent = value;
  }
}

new App();
