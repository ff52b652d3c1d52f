// Zoom/pan view transform between image pixel space and canvas space.
//
// canvas = image * zoom + pan. The inverse is exact up to float rounding,
// which keeps click coordinates faithful at any zoom in [MIN_ZOOM, MAX_ZOOM].

import { Point } from "./types";

export const MIN_ZOOM = 0.25;
export const MAX_ZOOM = 8;

export interface ViewState {
  zoom: number;
  panX: number;
  panY: number;
}

export function identityView(): ViewState {
  return { zoom: 1, panX: 0, panY: 0 };
}

export function clampZoom(zoom: number): number {
  return Math.min(MAX_ZOOM, Math.max(MIN_ZOOM, zoom));
}

export function imageToCanvas(p: Point, view: ViewState): Point {
  return { x: p.x * view.zoom + view.panX, y: p.y * view.zoom + view.panY };
}

export function canvasToImage(p: Point, view: ViewState): Point {
  return { x: (p.x - view.panX) / view.zoom, y: (p.y - view.panY) / view.zoom };
}

/** Zoom by a factor while keeping the canvas point `anchor` fixed. */
export function zoomAt(view: ViewState, anchor: Point, factor: number): ViewState {
  const zoom = clampZoom(view.zoom * factor);
  const scale = zoom / view.zoom;
  return {
    zoom,
    panX: anchor.x - (anchor.x - view.panX) * scale,
    panY: anchor.y - (anchor.y - view.panY) * scale,
  };
}

export function panBy(view: ViewState, dx: number, dy: number): ViewState {
  return { zoom: view.zoom, panX: view.panX + dx, panY: view.panY + dy };
}
