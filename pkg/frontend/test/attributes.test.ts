import { describe, expect, it } from "vitest";

import { ApiClient, type ModelInfo } from "../src/api.js";
import {
  accumulatedSet,
  applyChange,
  buildControls,
  isValidState,
  snapToValid,
} from "../src/attributes.js";
import { fixtureFetch } from "./helpers.js";

async function recordedInfo(): Promise<ModelInfo> {
  const api = new ApiClient("", fixtureFetch().impl);
  return api.modelInfo();
}

describe("buildControls", () => {
  it("produces one control per group plus one per free attribute", async () => {
    const info = await recordedInfo();
    const state = snapToValid(info, new Array(info.c_dim).fill(0.4));
    const controls = buildControls(info, state);
    const selects = controls.filter((c) => c.kind === "select");
    expect(selects.map((c) => c.kind === "select" && c.group)).toEqual(
      ["slot1", "slot2"],
    );
    expect(controls).toHaveLength(info.groups.length + info.free_attributes.length);
  });

  it("mirrors the current state into control values", async () => {
    const info = await recordedInfo();
    const state = [0, 0, 1, 0, 1, 0, 0, 0, 1, 0.3];
    const controls = buildControls(info, state);
    expect(controls[0]).toMatchObject({ kind: "select", group: "slot1", selected: 2 });
    expect(controls[1]).toMatchObject({ kind: "select", group: "slot2", selected: 0 });
    expect(controls[2]).toMatchObject({ kind: "toggle", index: 8, on: true });
    expect(controls[3]).toMatchObject({ kind: "slider", index: 9, value: 0.3 });
  });

  it("rejects a state of the wrong width", async () => {
    const info = await recordedInfo();
    expect(() => buildControls(info, [0, 1])).toThrow(/expected 10/);
  });
});

describe("snapToValid", () => {
  it("turns probabilities into a valid one-hot state", async () => {
    const info = await recordedInfo();
    const snapped = snapToValid(info, [0.2, 0.7, 0.4, 0.1, 0.5, 0.1, 0.6, 0.2, 0.9, 1.4]);
    expect(snapped.slice(0, 4)).toEqual([0, 1, 0, 0]);
    expect(snapped.slice(4, 8)).toEqual([0, 0, 1, 0]);
    expect(snapped[9]).toBe(1); // clipped into [0, 1]
    expect(isValidState(info, snapped)).toBe(true);
  });
});

describe("applyChange", () => {
  it("keeps one-hot groups complete when selecting a class", async () => {
    const info = await recordedInfo();
    const state = snapToValid(info, new Array(info.c_dim).fill(0.4));
    const next = applyChange(info, state, { key: "slot2", value: 3 });
    expect(next.slice(4, 8)).toEqual([0, 0, 0, 1]);
    expect(isValidState(info, next)).toBe(true);
    // untouched group unchanged
    expect(next.slice(0, 4)).toEqual(state.slice(0, 4));
  });

  it("validates group classes and free values", async () => {
    const info = await recordedInfo();
    const state = snapToValid(info, new Array(info.c_dim).fill(0.4));
    expect(() => applyChange(info, state, { key: "slot1", value: 4 })).toThrow(
      /out of range/,
    );
    expect(() => applyChange(info, state, { key: "9", value: 1.5 })).toThrow(
      /outside \[0, 1\]/,
    );
    expect(() => applyChange(info, state, { key: "3", value: 1 })).toThrow(
      /unknown attribute/,
    );
  });
});

describe("accumulatedSet", () => {
  it("keeps the latest value per key", () => {
    const set = accumulatedSet([
      { key: "slot1", value: 1 },
      { key: "8", value: 1 },
      { key: "slot1", value: 3 },
    ]);
    expect(set).toEqual({ slot1: 3, "8": 1 });
  });
});
