// Heatmap decoding and client-side colorization.
//
// The service ships heatmaps as base64 little-endian float16, already
// min-max normalized to [0, 1]; the client only decodes and colorizes.

import { HeatmapPayload, Point } from "./types";

export function decodeFloat16(bits: number): number {
  const sign = bits & 0x8000 ? -1 : 1;
  const exp = (bits >> 10) & 0x1f;
  const frac = bits & 0x3ff;
  if (exp === 0) return sign * frac * 2 ** -24;
  if (exp === 31) return frac ? NaN : sign * Infinity;
  return sign * (1 + frac / 1024) * 2 ** (exp - 15);
}

function base64ToBytes(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  // Node fallback for test environments without atob
  const nodeBuffer = (
    globalThis as { Buffer?: { from(s: string, enc: string): Uint8Array } }
  ).Buffer;
  if (!nodeBuffer) throw new Error("no base64 decoder available");
  return new Uint8Array(nodeBuffer.from(b64, "base64"));
}

export function decodeHeatmap(payload: HeatmapPayload): Float32Array {
  if (payload.dtype !== "float16") {
    throw new Error(`unsupported heatmap dtype ${payload.dtype}`);
  }
  const bytes = base64ToBytes(payload.data);
  const n = payload.width * payload.height;
  if (bytes.length !== 2 * n) {
    throw new Error(`heatmap payload is ${bytes.length} bytes, expected ${2 * n}`);
  }
  const u16 = new Uint16Array(bytes.buffer, bytes.byteOffset, n); // LE host assumed
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) out[i] = decodeFloat16(u16[i]);
  return out;
}

/** First-occurrence row-major argmax, matching the service's tie-break. */
export function argmaxCell(
  values: Float32Array,
  width: number
): { row: number; col: number } {
  let best = -Infinity;
  let idx = 0;
  for (let i = 0; i < values.length; i++) {
    if (values[i] > best) {
      best = values[i];
      idx = i;
    }
  }
  return { row: Math.floor(idx / width), col: idx % width };
}

/** Center of grid cell (row, col) in image pixel coordinates. */
export function cellToPixel(
  row: number,
  col: number,
  grid: { width: number; height: number },
  image: { width: number; height: number }
): Point {
  return {
    x: ((col + 0.5) * image.width) / grid.width - 0.5,
    y: ((row + 0.5) * image.height) / grid.height - 0.5,
  };
}

// Fixed perceptual colormap (magma-like stops), lerped per value.
const STOPS: [number, number, number][] = [
  [0, 0, 4],
  [81, 18, 124],
  [183, 55, 121],
  [252, 137, 97],
  [252, 253, 191],
];

export function colorValue(v: number): [number, number, number] {
  const t = Math.min(1, Math.max(0, v)) * (STOPS.length - 1);
  const i = Math.min(STOPS.length - 2, Math.floor(t));
  const f = t - i;
  const [r0, g0, b0] = STOPS[i];
  const [r1, g1, b1] = STOPS[i + 1];
  return [r0 + (r1 - r0) * f, g0 + (g1 - g0) * f, b0 + (b1 - b0) * f];
}

/** Colorize a decoded heatmap into an RGBA buffer with global opacity. */
export function colorize(
  values: Float32Array,
  width: number,
  height: number,
  opacity: number
): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(width * height * 4);
  const alpha = Math.round(255 * Math.min(1, Math.max(0, opacity)));
  for (let i = 0; i < width * height; i++) {
    const [r, g, b] = colorValue(values[i]);
    out[4 * i] = r;
    out[4 * i + 1] = g;
    out[4 * i + 2] = b;
    out[4 * i + 3] = alpha;
  }
  return out;
}
