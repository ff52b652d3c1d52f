// DOM wiring: two canvases (source, target), config controls, banners.

import { ApiClient } from "./api";
import { RasterizedEdit } from "./brush";
import { argmaxCell, cellToPixel, colorize, decodeHeatmap } from "./heatmap";
import { CanvasSession, PngEncoder } from "./session";
import { MatchMarker, Point } from "./types";
import { imageToCanvas, panBy, zoomAt } from "./viewTransform";

const api = new ApiClient("");

const canvasPngEncoder: PngEncoder = (raster, width, height) => {
  const toPng = (rgba: Uint8ClampedArray<ArrayBuffer>): string => {
    const cnv = document.createElement("canvas");
    cnv.width = width;
    cnv.height = height;
    const ctx = cnv.getContext("2d");
    if (!ctx) throw new Error("2d context unavailable");
    ctx.putImageData(new ImageData(rgba, width, height), 0, 0);
    return cnv.toDataURL("image/png").split(",")[1];
  };
  const maskRgba = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    const v = raster.mask[i];
    maskRgba[4 * i] = v;
    maskRgba[4 * i + 1] = v;
    maskRgba[4 * i + 2] = v;
    maskRgba[4 * i + 3] = 255;
  }
  return { editPng: toPng(raster.rgba), maskPng: toPng(maskRgba) };
};

const session = new CanvasSession(api, canvasPngEncoder);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const sourceCanvas = el<HTMLCanvasElement>("source-canvas");
const targetCanvas = el<HTMLCanvasElement>("target-canvas");
const banner = el<HTMLDivElement>("banner");
const presetSelect = el<HTMLSelectElement>("preset-select");
const tInput = el<HTMLInputElement>("t-input");
const blockInput = el<HTMLInputElement>("block-input");
const promptInput = el<HTMLInputElement>("prompt-input");
const opacityInput = el<HTMLInputElement>("opacity-input");

const bitmaps: { source: ImageBitmap | null; target: ImageBitmap | null } = {
  source: null,
  target: null,
};

function showBanner(message: string): void {
  banner.textContent = message;
  banner.style.display = "block";
}

banner.addEventListener("click", () => {
  session.dismissBanner();
  banner.style.display = "none";
});

function drawMarker(ctx: CanvasRenderingContext2D, p: Point): void {
  const c = imageToCanvas(p, session.view);
  ctx.beginPath();
  ctx.arc(c.x, c.y, 6, 0, 2 * Math.PI);
  ctx.strokeStyle = "red";
  ctx.lineWidth = 2;
  ctx.stroke();
}

function drawHeatmap(ctx: CanvasRenderingContext2D, marker: MatchMarker): void {
  const hm = marker.heatmap;
  const values = decodeHeatmap(hm);
  const rgba = colorize(values, hm.width, hm.height, Number(opacityInput.value));
  const off = document.createElement("canvas");
  off.width = hm.width;
  off.height = hm.height;
  const offCtx = off.getContext("2d");
  if (!offCtx) return;
  offCtx.putImageData(new ImageData(rgba, hm.width, hm.height), 0, 0);
  if (!session.target) return;
  const origin = imageToCanvas({ x: -0.5, y: -0.5 }, session.view);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(
    off,
    origin.x,
    origin.y,
    session.target.width * session.view.zoom,
    session.target.height * session.view.zoom
  );
  // sanity overlay: outline the argmax cell, which coincides with the marker
  const peak = argmaxCell(values, hm.width);
  const px = cellToPixel(peak.row, peak.col, hm, session.target);
  drawMarker(ctx, px);
}

function render(): void {
  for (const [canvas, bitmap] of [
    [sourceCanvas, bitmaps.source],
    [targetCanvas, bitmaps.target],
  ] as const) {
    const ctx = canvas.getContext("2d");
    if (!ctx) continue;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (bitmap) {
      const origin = imageToCanvas({ x: -0.5, y: -0.5 }, session.view);
      ctx.imageSmoothingEnabled = session.view.zoom < 1;
      ctx.drawImage(
        bitmap,
        origin.x,
        origin.y,
        bitmap.width * session.view.zoom,
        bitmap.height * session.view.zoom
      );
    }
  }
  const tctx = targetCanvas.getContext("2d");
  const sctx = sourceCanvas.getContext("2d");
  if (session.marker && tctx && sctx) {
    drawHeatmap(tctx, session.marker);
    drawMarker(tctx, session.marker.targetPoint);
    drawMarker(sctx, session.marker.sourcePoint);
  }
  for (const pin of session.pinned) {
    if (tctx) drawMarker(tctx, pin.targetPoint);
  }
}

async function uploadTo(slot: "source" | "target", file: File): Promise<void> {
  try {
    const info = await api.uploadImage(file, file.name);
    if (slot === "source") session.setSource(info);
    else session.setTarget(info);
    bitmaps[slot] = await createImageBitmap(file);
    render();
  } catch (err) {
    showBanner(String(err));
  }
}

for (const slot of ["source", "target"] as const) {
  el<HTMLInputElement>(`${slot}-file`).addEventListener("change", (ev) => {
    const input = ev.target as HTMLInputElement;
    if (input.files && input.files[0]) void uploadTo(slot, input.files[0]);
  });
}

sourceCanvas.addEventListener("click", async (ev) => {
  const rect = sourceCanvas.getBoundingClientRect();
  const marker = await session.clickToMatch({
    x: ev.clientX - rect.left,
    y: ev.clientY - rect.top,
  });
  if (session.banner) showBanner(session.banner);
  if (marker) render();
});

for (const canvas of [sourceCanvas, targetCanvas]) {
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    const rect = canvas.getBoundingClientRect();
    const anchor = { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
    session.view = zoomAt(session.view, anchor, ev.deltaY < 0 ? 1.25 : 0.8);
    render();
  });
}

window.addEventListener("keydown", (ev) => {
  const step = 20;
  const moves: Record<string, [number, number]> = {
    ArrowLeft: [step, 0],
    ArrowRight: [-step, 0],
    ArrowUp: [0, step],
    ArrowDown: [0, -step],
  };
  const move = moves[ev.key];
  if (move) {
    session.view = panBy(session.view, move[0], move[1]);
    render();
  }
});

function syncConfig(): void {
  session.config = {
    t: Number(tInput.value),
    block: Number(blockInput.value),
    prompt: promptInput.value || undefined,
  };
}
for (const input of [tInput, blockInput, promptInput]) {
  input.addEventListener("change", syncConfig);
}

async function loadPresets(): Promise<void> {
  try {
    const presets = await api.presets();
    for (const name of Object.keys(presets).sort()) {
      const option = document.createElement("option");
      option.value = name;
      option.textContent = name;
      presetSelect.appendChild(option);
    }
    presetSelect.addEventListener("change", () => {
      const preset = presets[presetSelect.value];
      if (!preset) return;
      if (typeof preset.t === "number") tInput.value = String(preset.t);
      if (typeof preset.block === "number") blockInput.value = String(preset.block);
      if (typeof preset.prompt_template === "string") {
        promptInput.value = preset.prompt_template;
      }
      syncConfig();
    });
  } catch (err) {
    showBanner(`failed to load presets: ${String(err)}`);
  }
}

el<HTMLButtonElement>("propagate-button").addEventListener("click", async () => {
  if (!session.target) return;
  const response = await session.propagateEdit([session.target.id]);
  if (session.banner) showBanner(session.banner);
  if (!response) return;
  const preview = el<HTMLImageElement>("preview-image");
  const first = response.results[0];
  if (first && first.composite_png) {
    preview.src = `data:image/png;base64,${first.composite_png}`;
  } else if (first && first.error) {
    showBanner(`propagation failed: ${first.error}`);
  }
});

el<HTMLButtonElement>("clear-button").addEventListener("click", () => {
  session.clearStrokes();
  render();
});

void loadPresets();
render();

export { session, render, canvasPngEncoder };
export type { RasterizedEdit };
