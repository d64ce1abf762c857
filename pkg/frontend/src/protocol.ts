// Wire protocol shared with the simulation service.
//
// One socket carries UTF-8 JSON control text (first byte '{') and binary
// frames (first byte 0x01). Frame layout, little-endian:
//   u8 type=0x01, u32 frame, f32 simTime, u32 vertexCount,
//   vertexCount*3 f32 positions, vertexCount f32 von Mises,
//   f32 min, f32 max            -- total 21 + 16*vertexCount bytes.

export const FRAME_TYPE = 0x01;
export const FRAME_HEADER_BYTES = 13;
export const FRAME_TRAILER_BYTES = 8;

export interface Frame {
  frame: number;
  simTime: number;
  vertexCount: number;
  positions: Float32Array;   // xyz interleaved, length 3*vertexCount
  vonMises: Float32Array;    // length vertexCount
  vmMin: number;
  vmMax: number;
}

export function frameByteLength(vertexCount: number): number {
  return 21 + 16 * vertexCount;
}

export function decodeFrame(buf: ArrayBuffer): Frame {
  if (buf.byteLength < FRAME_HEADER_BYTES) {
    throw new Error(`frame shorter than header: ${buf.byteLength} bytes`);
  }
  const view = new DataView(buf);
  const type = view.getUint8(0);
  if (type !== FRAME_TYPE) {
    throw new Error(`not a frame message (type ${type})`);
  }
  const frame = view.getUint32(1, true);
  const simTime = view.getFloat32(5, true);
  const vertexCount = view.getUint32(9, true);
  const expected = frameByteLength(vertexCount);
  if (buf.byteLength !== expected) {
    throw new Error(
      `frame length ${buf.byteLength} != expected ${expected}`);
  }
  let off = FRAME_HEADER_BYTES;
  const positions = new Float32Array(3 * vertexCount);
  for (let i = 0; i < positions.length; i++, off += 4) {
    positions[i] = view.getFloat32(off, true);
  }
  const vonMises = new Float32Array(vertexCount);
  for (let i = 0; i < vertexCount; i++, off += 4) {
    vonMises[i] = view.getFloat32(off, true);
  }
  const vmMin = view.getFloat32(off, true);
  const vmMax = view.getFloat32(off + 4, true);
  return { frame, simTime, vertexCount, positions, vonMises, vmMin, vmMax };
}

export function isFrameMessage(data: ArrayBuffer): boolean {
  return data.byteLength > 0 && new Uint8Array(data, 0, 1)[0] === FRAME_TYPE;
}

// ---------------------------------------------------------------------------
// Control messages
// ---------------------------------------------------------------------------

export interface ModelInfo {
  name: string;
  node_count: number;
  tet_count: number;
  vertex_count: number;
  triangles: number[][];
  positions: number[];
  material: Record<string, number>;
  field: number[];
  fixed_nodes: number[];
}

export interface ServerResponse {
  ok?: boolean;
  cmd?: string;
  id?: number;
  error?: { code: string; message: string };
  path?: string;
  event?: string;
  models?: string[];
  model?: ModelInfo | string;
  mode?: string;
  [key: string]: unknown;
}

export function controlMessage(
  cmd: string, fields: Record<string, unknown> = {}, id?: number
): string {
  const msg: Record<string, unknown> = { cmd, ...fields };
  if (id !== undefined) msg.id = id;
  return JSON.stringify(msg);
}
