// Brush stroke state and rasterization into an edit layer + mask.

import { Point } from "./types";

export interface Stroke {
  points: Point[]; // image pixel space
  radius: number;
  color: [number, number, number]; // 0..255
  alpha: number; // 0..1
}

export interface RasterizedEdit {
  rgba: Uint8ClampedArray<ArrayBuffer>; // width*height*4
  mask: Uint8Array; // width*height, 0 or 255
  pixelCount: number;
}

function stamp(
  raster: RasterizedEdit,
  width: number,
  height: number,
  cx: number,
  cy: number,
  stroke: Stroke
): void {
  const r = stroke.radius;
  const x0 = Math.max(0, Math.floor(cx - r));
  const x1 = Math.min(width - 1, Math.ceil(cx + r));
  const y0 = Math.max(0, Math.floor(cy - r));
  const y1 = Math.min(height - 1, Math.ceil(cy + r));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      if ((x - cx) ** 2 + (y - cy) ** 2 > r * r) continue;
      const i = y * width + x;
      if (raster.mask[i] === 0) {
        raster.mask[i] = 255;
        raster.pixelCount++;
      }
      raster.rgba[4 * i] = stroke.color[0];
      raster.rgba[4 * i + 1] = stroke.color[1];
      raster.rgba[4 * i + 2] = stroke.color[2];
      raster.rgba[4 * i + 3] = Math.round(255 * stroke.alpha);
    }
  }
}

/** Rasterize strokes: a disk stamped at each point plus interpolated steps. */
export function rasterizeStrokes(
  strokes: Stroke[],
  width: number,
  height: number
): RasterizedEdit {
  const raster: RasterizedEdit = {
    rgba: new Uint8ClampedArray(width * height * 4),
    mask: new Uint8Array(width * height),
    pixelCount: 0,
  };
  for (const stroke of strokes) {
    for (let i = 0; i < stroke.points.length; i++) {
      const p = stroke.points[i];
      stamp(raster, width, height, p.x, p.y, stroke);
      if (i > 0) {
        const q = stroke.points[i - 1];
        const dist = Math.hypot(p.x - q.x, p.y - q.y);
        const steps = Math.ceil(dist / Math.max(1, stroke.radius / 2));
        for (let s = 1; s < steps; s++) {
          const f = s / steps;
          stamp(
            raster,
            width,
            height,
            q.x + (p.x - q.x) * f,
            q.y + (p.y - q.y) * f,
            stroke
          );
        }
      }
    }
  }
  return raster;
}
