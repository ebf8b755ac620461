/** Attribute-state logic: control descriptors from model metadata, valid
 * state transitions, and the accumulated /edit payload. The UI never invents
 * values: state is always snap(c_hat) plus explicitly recorded changes. */

import type { AttributeSet, ModelInfo } from "./api.js";

export type Control =
  | { kind: "select"; group: string; start: number; size: number; selected: number }
  | { kind: "toggle"; index: number; on: boolean }
  | { kind: "slider"; index: number; value: number };

/** One-hot groups become selectors; free attributes become toggles when the
 * current value is already binary, sliders otherwise. */
export function buildControls(info: ModelInfo, attributes: number[]): Control[] {
  if (attributes.length !== info.c_dim) {
    throw new Error(`expected ${info.c_dim} attributes, got ${attributes.length}`);
  }
  const controls: Control[] = [];
  for (const g of info.groups) {
    const slice = attributes.slice(g.start, g.start + g.size);
    controls.push({
      kind: "select",
      group: g.name,
      start: g.start,
      size: g.size,
      selected: slice.indexOf(Math.max(...slice)),
    });
  }
  for (const index of info.free_attributes) {
    const value = attributes[index] ?? 0;
    if (value === 0 || value === 1) {
      controls.push({ kind: "toggle", index, on: value === 1 });
    } else {
      controls.push({ kind: "slider", index, value });
    }
  }
  return controls;
}

/** Snap recognizer probabilities to a valid state: argmax per one-hot group,
 * free attributes clipped to [0, 1]. Mirrors the server's base state. */
export function snapToValid(info: ModelInfo, cHat: number[]): number[] {
  const out = cHat.map((v) => Math.min(1, Math.max(0, v)));
  for (const g of info.groups) {
    const slice = out.slice(g.start, g.start + g.size);
    const winner = slice.indexOf(Math.max(...slice));
    for (let k = 0; k < g.size; k++) out[g.start + k] = k === winner ? 1 : 0;
  }
  return out;
}

export interface AttributeChange {
  key: string; // group name or free-attribute index as string
  value: number;
}

/** Apply one change to a valid state, keeping it valid: selecting class k in
 * a group zeroes its siblings; free values are clamped. */
export function applyChange(
  info: ModelInfo,
  attributes: number[],
  change: AttributeChange,
): number[] {
  const out = attributes.slice();
  const group = info.groups.find((g) => g.name === change.key);
  if (group) {
    const cls = Math.trunc(change.value);
    if (cls < 0 || cls >= group.size) {
      throw new Error(`class ${cls} out of range for group ${group.name}`);
    }
    for (let k = 0; k < group.size; k++) out[group.start + k] = k === cls ? 1 : 0;
    return out;
  }
  const index = Number(change.key);
  if (!info.free_attributes.includes(index)) {
    throw new Error(`unknown attribute ${change.key}`);
  }
  if (change.value < 0 || change.value > 1) {
    throw new Error(`attribute value ${change.value} outside [0, 1]`);
  }
  out[index] = change.value;
  return out;
}

/** The /edit payload is the accumulated explicit changes, latest wins. */
export function accumulatedSet(changes: AttributeChange[]): AttributeSet {
  const set: AttributeSet = {};
  for (const change of changes) set[change.key] = change.value;
  return set;
}

export function isValidState(info: ModelInfo, attributes: number[]): boolean {
  if (attributes.length !== info.c_dim) return false;
  if (attributes.some((v) => v < 0 || v > 1)) return false;
  for (const g of info.groups) {
    const slice = attributes.slice(g.start, g.start + g.size);
    const sum = slice.reduce((a, b) => a + b, 0);
    if (Math.abs(sum - 1) > 1e-6) return false;
    if (!slice.every((v) => v === 0 || v === 1)) return false;
  }
  return true;
}
