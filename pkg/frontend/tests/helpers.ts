import { HeatmapPayload } from "../src/types";

/** Little-endian float16 values -> base64, for building payloads by hand. */
export function encodePayload(
  values: number[],
  width: number,
  height: number
): HeatmapPayload {
  const bits = values.map((v) => {
    if (v === 0) return 0x0000;
    if (v === 0.5) return 0x3800;
    if (v === 1) return 0x3c00;
    if (v === 0.25) return 0x3400;
    throw new Error(`test helper only encodes exact values, got ${v}`);
  });
  const u16 = new Uint16Array(bits);
  const b64 = Buffer.from(u16.buffer).toString("base64");
  return {
    data: b64,
    width,
    height,
    dtype: "float16",
    raw_min: 0,
    raw_max: 1,
  };
}
