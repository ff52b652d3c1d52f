// Session state: loaded images, current config, markers, brush strokes.
//
// Concurrency: single event loop; every match request carries a monotone
// sequence number and a response is rendered only if no newer request has
// been issued since (stale responses are discarded, not merged).

import { ApiClient, ApiError } from "./api";
import { RasterizedEdit, Stroke, rasterizeStrokes } from "./brush";
import {
  EditPropagateResponse,
  EditPropagateResult,
  MatchConfig,
  MatchMarker,
  Point,
  UploadResponse,
} from "./types";
import { ViewState, canvasToImage, identityView } from "./viewTransform";

export interface ImageHandle {
  id: string;
  width: number;
  height: number;
}

/** Encodes a rasterized layer to base64 PNG; injected so tests skip canvas. */
export type PngEncoder = (
  raster: RasterizedEdit,
  width: number,
  height: number
) => { editPng: string; maskPng: string };

export class CanvasSession {
  source: ImageHandle | null = null;
  target: ImageHandle | null = null;
  view: ViewState = identityView();
  config: MatchConfig = { t: 0, block: 0 };
  marker: MatchMarker | null = null;
  pinned: MatchMarker[] = [];
  strokes: Stroke[] = [];
  banner: string | null = null;
  previews: EditPropagateResult[] = [];
  accepted: EditPropagateResult[] = [];

  private seq = 0;
  private renderedSeq = 0;

  constructor(private api: ApiClient, private encodePng: PngEncoder) {}

  setSource(info: UploadResponse): void {
    this.source = { id: info.id, width: info.width, height: info.height };
  }

  setTarget(info: UploadResponse): void {
    this.target = { id: info.id, width: info.width, height: info.height };
  }

  dismissBanner(): void {
    this.banner = null;
  }

  /**
   * Handle a canvas click: invert the view transform, query the service,
   * and render the marker unless a newer click superseded this one.
   * Resolves to the marker, or null when the response went stale.
   */
  async clickToMatch(canvasPoint: Point): Promise<MatchMarker | null> {
    if (!this.source || !this.target) {
      throw new Error("source and target must be loaded before matching");
    }
    const imagePoint = canvasToImage(canvasPoint, this.view);
    const seq = ++this.seq;
    let response;
    try {
      response = await this.api.match(
        this.source.id,
        this.target.id,
        [imagePoint.x, imagePoint.y],
        this.config
      );
    } catch (err) {
      if (seq === this.seq) {
        this.banner = err instanceof ApiError ? err.message : String(err);
      }
      return null;
    }
    if (seq < this.seq || seq <= this.renderedSeq) {
      return null; // superseded while in flight
    }
    this.renderedSeq = seq;
    const marker: MatchMarker = {
      sourcePoint: { x: response.source_point[0], y: response.source_point[1] },
      targetPoint: { x: response.target_point[0], y: response.target_point[1] },
      similarity: response.similarity,
      heatmap: response.heatmap,
      seq,
    };
    this.marker = marker;
    return marker;
  }

  pinCurrentMarker(): void {
    if (this.marker) this.pinned.push(this.marker);
  }

  addStroke(stroke: Stroke): void {
    this.strokes.push(stroke);
  }

  clearStrokes(): void {
    this.strokes = [];
  }

  /**
   * Rasterize the brushed region and propagate it to the targets. An empty
   * region (no strokes, or strokes covering zero pixels) sends no request
   * and resolves to null.
   */
  async propagateEdit(targetIds: string[]): Promise<EditPropagateResponse | null> {
    if (!this.source) {
      throw new Error("source must be loaded before propagating");
    }
    const { width, height } = this.source;
    const raster = rasterizeStrokes(this.strokes, width, height);
    if (raster.pixelCount === 0) return null;
    const { editPng, maskPng } = this.encodePng(raster, width, height);
    try {
      const response = await this.api.editPropagate(
        this.source.id,
        targetIds,
        editPng,
        maskPng,
        this.config
      );
      this.previews = response.results;
      return response;
    } catch (err) {
      this.banner = err instanceof ApiError ? err.message : String(err);
      return null;
    }
  }

  /** Accepting a preview pins it verbatim; rejecting just drops it. */
  acceptPreview(targetId: string): EditPropagateResult | null {
    const idx = this.previews.findIndex((r) => r.target_id === targetId);
    if (idx < 0) return null;
    const [result] = this.previews.splice(idx, 1);
    this.accepted.push(result);
    return result;
  }

  rejectPreview(targetId: string): void {
    this.previews = this.previews.filter((r) => r.target_id !== targetId);
  }
}
