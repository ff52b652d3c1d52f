import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { rasterizeStrokes } from "../src/brush";
import { CanvasSession } from "../src/session";
import { EditPropagateResponse, MatchConfig } from "../src/types";

interface EditCall {
  targetIds: string[];
  editPng: string;
  maskPng: string;
  config: MatchConfig;
}

class FakeApi {
  editCalls: EditCall[] = [];
  nextResponse: EditPropagateResponse = { results: [] };

  editPropagate(
    _src: string,
    targetIds: string[],
    editPng: string,
    maskPng: string,
    config: MatchConfig
  ): Promise<EditPropagateResponse> {
    this.editCalls.push({ targetIds, editPng, maskPng, config: { ...config } });
    return Promise.resolve(this.nextResponse);
  }
}

function makeSession(api: FakeApi): CanvasSession {
  const session = new CanvasSession(api as unknown as ApiClient, (raster) => ({
    editPng: `edit:${raster.pixelCount}`,
    maskPng: `mask:${raster.pixelCount}`,
  }));
  session.setSource({ id: "src", width: 32, height: 32 });
  session.setTarget({ id: "tgt", width: 32, height: 32 });
  return session;
}

const stroke = {
  points: [{ x: 10, y: 10 }, { x: 16, y: 12 }],
  radius: 3,
  color: [255, 0, 0] as [number, number, number],
  alpha: 0.8,
};

describe("brush rasterization", () => {
  it("stamps a disk around each point and along the segment", () => {
    const raster = rasterizeStrokes([stroke], 32, 32);
    const at = (x: number, y: number) => raster.mask[y * 32 + x];
    expect(at(10, 10)).toBe(255);
    expect(at(16, 12)).toBe(255);
    expect(at(13, 11)).toBe(255); // midpoint covered by interpolation
    expect(at(0, 0)).toBe(0);
    expect(raster.pixelCount).toBeGreaterThan(20);
    const i = 10 * 32 + 10;
    expect(raster.rgba[4 * i]).toBe(255);
    expect(raster.rgba[4 * i + 3]).toBe(Math.round(255 * 0.8));
  });

  it("clips stamps at the image border", () => {
    const edge = { ...stroke, points: [{ x: 0, y: 0 }] };
    const raster = rasterizeStrokes([edge], 32, 32);
    expect(raster.mask[0]).toBe(255);
    expect(raster.pixelCount).toBeLessThan(Math.PI * 9); // quarter disk only
  });
});

describe("edit propagation flow", () => {
  let api: FakeApi;
  let session: CanvasSession;

  beforeEach(() => {
    api = new FakeApi();
    session = makeSession(api);
  });

  it("brush then immediate clear sends no request", async () => {
    session.addStroke(stroke);
    session.clearStrokes();
    expect(await session.propagateEdit(["tgt"])).toBeNull();
    expect(api.editCalls).toHaveLength(0);
  });

  it("an untouched canvas sends no request", async () => {
    expect(await session.propagateEdit(["tgt"])).toBeNull();
    expect(api.editCalls).toHaveLength(0);
  });

  it("a config change is carried by the next request", async () => {
    session.addStroke(stroke);
    session.config = { t: 261, block: 1, prompt: "a photo of a cat" };
    api.nextResponse = { results: [{ target_id: "tgt", composite_png: "abc" }] };
    await session.propagateEdit(["tgt"]);
    expect(api.editCalls[0].config.t).toBe(261);
    expect(api.editCalls[0].config.block).toBe(1);
    expect(api.editCalls[0].targetIds).toEqual(["tgt"]);
  });

  it("accepting a preview pins the returned composite verbatim", async () => {
    session.addStroke(stroke);
    api.nextResponse = {
      results: [{ target_id: "tgt", composite_png: "PNGBYTESB64" }],
    };
    await session.propagateEdit(["tgt"]);
    const pinned = session.acceptPreview("tgt");
    expect(pinned!.composite_png).toBe("PNGBYTESB64");
    expect(session.accepted).toEqual([pinned]);
    expect(session.previews).toHaveLength(0);
  });

  it("rejecting a preview discards it without pinning", async () => {
    session.addStroke(stroke);
    api.nextResponse = {
      results: [{ target_id: "tgt", composite_png: "X" }],
    };
    await session.propagateEdit(["tgt"]);
    session.rejectPreview("tgt");
    expect(session.previews).toHaveLength(0);
    expect(session.accepted).toHaveLength(0);
  });

  it("keeps failure diagnostics so the user can adjust the region", async () => {
    session.addStroke(stroke);
    api.nextResponse = {
      results: [{ target_id: "tgt", error: "too few confident matches" }],
    };
    const res = await session.propagateEdit(["tgt"]);
    expect(res!.results[0].error).toMatch(/too few/);
    expect(session.previews[0].error).toMatch(/too few/);
  });
});
