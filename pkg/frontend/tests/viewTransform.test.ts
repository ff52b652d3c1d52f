import { describe, expect, it } from "vitest";

import {
  MAX_ZOOM,
  MIN_ZOOM,
  canvasToImage,
  clampZoom,
  identityView,
  imageToCanvas,
  panBy,
  zoomAt,
} from "../src/viewTransform";

describe("view transform", () => {
  it("round trips image -> canvas -> image within 1e-6 across the zoom range", () => {
    const zooms = [0.25, 0.31, 0.5, 1, 1.7, 2, 3.99, 8];
    const pans = [
      [0, 0],
      [5, 5],
      [-123.25, 47.5],
      [1000, -1000],
    ];
    for (const zoom of zooms) {
      for (const [panX, panY] of pans) {
        const view = { zoom, panX, panY };
        for (const p of [
          { x: 0, y: 0 },
          { x: 10, y: 20 },
          { x: 511.5, y: 0.25 },
          { x: 1e4, y: 3.14159 },
        ]) {
          const back = canvasToImage(imageToCanvas(p, view), view);
          expect(Math.abs(back.x - p.x)).toBeLessThanOrEqual(1e-6);
          expect(Math.abs(back.y - p.y)).toBeLessThanOrEqual(1e-6);
        }
      }
    }
  });

  it("inverts the documented example by hand: 2x zoom, pan (5,5)", () => {
    const view = { zoom: 2, panX: 5, panY: 5 };
    // image (10, 20) renders at canvas (25, 45); clicking there must
    // recover (10, 20) exactly
    expect(imageToCanvas({ x: 10, y: 20 }, view)).toEqual({ x: 25, y: 45 });
    expect(canvasToImage({ x: 25, y: 45 }, view)).toEqual({ x: 10, y: 20 });
  });

  it("clamps zoom to the documented range", () => {
    expect(clampZoom(0.01)).toBe(MIN_ZOOM);
    expect(clampZoom(100)).toBe(MAX_ZOOM);
    expect(clampZoom(1.5)).toBe(1.5);
  });

  it("zoomAt keeps the anchor point fixed on canvas", () => {
    let view = identityView();
    const anchor = { x: 120, y: 80 };
    const imageAtAnchor = canvasToImage(anchor, view);
    view = zoomAt(view, anchor, 2.5);
    const after = imageToCanvas(imageAtAnchor, view);
    expect(after.x).toBeCloseTo(anchor.x, 9);
    expect(after.y).toBeCloseTo(anchor.y, 9);
  });

  it("panBy shifts canvas coordinates only", () => {
    const view = panBy({ zoom: 2, panX: 1, panY: 1 }, 10, -4);
    expect(view).toEqual({ zoom: 2, panX: 11, panY: -3 });
  });
});
