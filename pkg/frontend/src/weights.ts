// Blend-weight bookkeeping.
//
// The server rejects weight maps that are not convex, and its response
// cache is keyed on the exact weights received, so the UI quantizes to
// 3 decimals in a way that still sums to exactly 1.  The quantized map is
// both what gets sent and what gets displayed — never two different values.

/**
 * Normalize and quantize to 3 decimals with the largest-remainder method,
 * so the returned values are non-negative multiples of 0.001 summing to
 * exactly 1 (in scaled-integer arithmetic, so no float dust).
 */
export function quantizeWeights(raw: Record<string, number>): Record<string, number> {
  const names = Object.keys(raw);
  if (names.length === 0) throw new Error("no weights to quantize");
  let total = 0;
  for (const name of names) {
    const w = raw[name];
    if (!Number.isFinite(w) || w < 0) {
      throw new Error(`weight for ${name} is ${w}; weights must be non-negative`);
    }
    total += w;
  }
  if (total <= 0) throw new Error("weights sum to 0");

  const scaled = names.map((name) => (raw[name] / total) * 1000);
  const floors = scaled.map(Math.floor);
  let missing = 1000 - floors.reduce((a, b) => a + b, 0);
  // Hand the leftover units to the largest fractional remainders; ties by
  // name order so the result is deterministic.
  const order = names
    .map((_, i) => i)
    .sort((a, b) => scaled[b] - floors[b] - (scaled[a] - floors[a]) || a - b);
  for (const i of order) {
    if (missing <= 0) break;
    floors[i] += 1;
    missing -= 1;
  }
  const out: Record<string, number> = {};
  names.forEach((name, i) => {
    out[name] = floors[i] / 1000;
  });
  return out;
}

/** Sum of a weight map (for display checks; quantized maps sum to 1). */
export function weightSum(weights: Record<string, number>): number {
  return Object.values(weights).reduce((a, b) => a + b, 0);
}

/** "A=0.500, B=0.500" — the display form, same values as sent. */
export function formatWeights(weights: Record<string, number>): string {
  return Object.keys(weights)
    .map((name) => `${name}=${weights[name].toFixed(3)}`)
    .join(", ");
}

/** Two-style slider: alpha is the weight of the first style. */
export function sliderWeights(styleA: string, styleB: string, alpha: number): Record<string, number> {
  const a = Math.min(1, Math.max(0, alpha));
  return quantizeWeights({ [styleA]: a, [styleB]: 1 - a });
}
