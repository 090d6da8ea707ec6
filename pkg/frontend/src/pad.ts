// Four-corner blend pad: a point (u, v) in the unit square maps to bilinear
// corner weights.  The four weights are each in [0, 1] and sum to 1
// identically, which is exactly the convexity contract the server enforces.

export interface PadPoint {
  u: number;
  v: number;
}

function clamp01(x: number): number {
  return Math.min(1, Math.max(0, x));
}

/** Corner order: top-left, top-right, bottom-left, bottom-right. */
export function cornerWeights(point: PadPoint): [number, number, number, number] {
  const u = clamp01(point.u);
  const v = clamp01(point.v);
  return [(1 - u) * (1 - v), u * (1 - v), (1 - u) * v, u * v];
}

/** Weight map for four corner styles at pad position (u, v). */
export function padWeights(
  styles: [string, string, string, string],
  point: PadPoint,
): Record<string, number> {
  const weights = cornerWeights(point);
  const out: Record<string, number> = {};
  styles.forEach((name, i) => {
    out[name] = weights[i];
  });
  return out;
}
