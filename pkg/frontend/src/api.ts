// Thin typed client for the correspondence service. The UI never computes
// correspondences locally; everything it displays comes through here.

import {
  EditPropagateResponse,
  MatchConfig,
  MatchResponse,
  PresetMap,
  UploadResponse,
} from "./types";

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args)
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  private postJson<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  healthz(): Promise<{ status: string; backend: string }> {
    return this.request("/healthz");
  }

  presets(): Promise<PresetMap> {
    return this.request("/presets");
  }

  uploadImage(file: Blob, name = "image.png"): Promise<UploadResponse> {
    const form = new FormData();
    form.append("file", file, name);
    return this.request("/images", { method: "POST", body: form });
  }

  match(
    sourceId: string,
    targetId: string,
    point: [number, number],
    config: MatchConfig
  ): Promise<MatchResponse> {
    return this.postJson("/match", {
      source_id: sourceId,
      target_id: targetId,
      point,
      config,
    });
  }

  editPropagate(
    sourceId: string,
    targetIds: string[],
    editPng: string,
    maskPng: string,
    config: MatchConfig
  ): Promise<EditPropagateResponse> {
    return this.postJson("/edit-propagate", {
      source_id: sourceId,
      target_ids: targetIds,
      edit_png: editPng,
      mask_png: maskPng,
      config,
    });
  }
}
