// Shared types mirroring the service's JSON envelopes.

export interface Point {
  x: number;
  y: number;
}

/** Extraction settings forwarded verbatim in every request body. */
export interface MatchConfig {
  t: number;
  block: number;
  prompt?: string;
  ensemble_size?: number;
  rng_seed?: number;
}

export interface UploadResponse {
  id: string;
  width: number;
  height: number;
}

export interface HeatmapPayload {
  data: string; // base64 little-endian float16, min-max normalized
  width: number;
  height: number;
  dtype: string;
  raw_min: number;
  raw_max: number;
}

export interface MatchResponse {
  source_point: [number, number];
  target_point: [number, number];
  similarity: number;
  heatmap: HeatmapPayload;
}

export interface EditPropagateResult {
  target_id: string;
  composite_png?: string;
  homography?: number[][];
  diagnostics?: {
    sampled_points: [number, number][];
    matches: [[number, number], [number, number], number][];
    inlier_mask: boolean[];
  };
  error?: string;
}

export interface EditPropagateResponse {
  results: EditPropagateResult[];
}

export type PresetMap = Record<string, Record<string, unknown>>;

/** A rendered marker; every field traces to a stored service response. */
export interface MatchMarker {
  sourcePoint: Point; // image pixel space
  targetPoint: Point; // image pixel space, from the response
  similarity: number;
  heatmap: HeatmapPayload;
  seq: number;
}
