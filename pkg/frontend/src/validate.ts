// Client-side parameter validation, mirroring the server's bounds so bad
// edits are blocked before a round-trip (the server re-checks anyway).

export interface Bounds {
  min: number;
  max: number;
  minExclusive?: boolean;
  maxExclusive?: boolean;
}

export const MATERIAL_BOUNDS: Record<string, Bounds> = {
  young_modulus: { min: 0, max: Infinity, minExclusive: true },
  poisson_ratio: { min: -1, max: 0.5, minExclusive: true,
                   maxExclusive: true },
  density: { min: 0, max: Infinity, minExclusive: true },
  rayleigh_mass: { min: 0, max: Infinity },
  rayleigh_stiffness: { min: 0, max: Infinity },
};

export const SOLVER_BOUNDS: Record<string, Bounds> = {
  dt: { min: 0, max: Infinity, minExclusive: true },
  cg_max_iters: { min: 1, max: Infinity },
  cg_tolerance: { min: 0, max: 1, minExclusive: true, maxExclusive: true },
  newton_max_iters: { min: 1, max: Infinity },
  newton_tolerance: { min: 0, max: 1, minExclusive: true,
                      maxExclusive: true },
  ramp_steps: { min: 1, max: Infinity },
};

export function checkBounds(bounds: Bounds, value: number): string | null {
  if (!Number.isFinite(value)) return "must be a finite number";
  const lowBad = bounds.minExclusive ? value <= bounds.min
                                     : value < bounds.min;
  const highBad = bounds.maxExclusive ? value >= bounds.max
                                      : value > bounds.max;
  if (lowBad || highBad) {
    const lo = `${bounds.minExclusive ? "(" : "["}${bounds.min}`;
    const hi = `${bounds.max}${bounds.maxExclusive ? ")" : "]"}`;
    return `must be in ${lo}, ${hi}`;
  }
  return null;
}

export function validateMaterialField(
  name: string, value: number
): string | null {
  const bounds = MATERIAL_BOUNDS[name];
  if (!bounds) return `unknown material field ${name}`;
  return checkBounds(bounds, value);
}

export function validateSolverField(
  name: string, value: number
): string | null {
  const bounds = SOLVER_BOUNDS[name];
  if (!bounds) return `unknown solver field ${name}`;
  return checkBounds(bounds, value);
}

// Field direction is always normalized before sending.
export function normalizeDirection(
  v: [number, number, number]
): [number, number, number] | null {
  const n = Math.hypot(v[0], v[1], v[2]);
  if (!Number.isFinite(n) || n === 0) return null;
  return [v[0] / n, v[1] / n, v[2] / n];
}
