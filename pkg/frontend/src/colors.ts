// Linear blue-to-red stress colormap, matching the server's convention:
// normalize over [min, max] of the current frame (or a fixed range); a
// degenerate range maps everything to mid-scale 0.5.

export function colorScale(value: number, lo: number, hi: number): number {
  const span = hi - lo;
  if (!(span > 0)) return 0.5;
  const t = (value - lo) / span;
  return t < 0 ? 0 : t > 1 ? 1 : t;
}

export function scalarToRgb(
  value: number, lo: number, hi: number
): [number, number, number] {
  const t = colorScale(value, lo, hi);
  return [t, 0.0, 1.0 - t];
}

export function fillVertexColors(
  out: Float32Array, scalars: Float32Array, lo: number, hi: number
): Float32Array {
  for (let i = 0; i < scalars.length; i++) {
    const t = colorScale(scalars[i], lo, hi);
    out[3 * i] = t;
    out[3 * i + 1] = 0.0;
    out[3 * i + 2] = 1.0 - t;
  }
  return out;
}

export function uniformColors(
  out: Float32Array, rgb: [number, number, number]
): Float32Array {
  for (let i = 0; i < out.length; i += 3) {
    out[i] = rgb[0];
    out[i + 1] = rgb[1];
    out[i + 2] = rgb[2];
  }
  return out;
}

export function allEqual(colors: Float32Array): boolean {
  for (let i = 3; i < colors.length; i += 3) {
    if (colors[i] !== colors[0] || colors[i + 1] !== colors[1]
        || colors[i + 2] !== colors[2]) {
      return false;
    }
  }
  return true;
}
