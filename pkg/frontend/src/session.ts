/** Edit-session state machine. One in-flight request at a time; a failed
 * request leaves the session exactly as it was. History is append-only and
 * undo replays a recorded state rather than recomputing it. */

import { ApiClient, type ModelInfo } from "./api.js";
import {
  accumulatedSet,
  applyChange,
  snapToValid,
  type AttributeChange,
} from "./attributes.js";

export interface HistoryEntry {
  change: AttributeChange;
  attributes: number[]; // state after the change
  changes: AttributeChange[]; // accumulated changes after the change
  imageB64: string; // edited image returned by the server
}

export class EditSession {
  readonly sourceImage: string;
  readonly info: ModelInfo;
  readonly z: number[];
  readonly cHat: number[];
  /** current valid attribute state: snap(cHat) + accumulated changes */
  attributes: number[];
  /** reconstruction under the unedited base state */
  reconstruction: string | null = null;
  readonly history: HistoryEntry[] = [];
  pending = false;

  private changes: AttributeChange[] = [];
  private readonly api: ApiClient;

  private constructor(api: ApiClient, info: ModelInfo, sourceImage: string,
                      z: number[], cHat: number[]) {
    this.api = api;
    this.info = info;
    this.sourceImage = sourceImage;
    this.z = z;
    this.cHat = cHat;
    this.attributes = snapToValid(info, cHat);
  }

  /** Encode a source image and start a session: the recognizer's estimate
   * becomes the editable attribute state, and an identity edit fetches the
   * reconstruction shown next to the original. */
  static async load(api: ApiClient, info: ModelInfo,
                    imageB64: string): Promise<EditSession> {
    const encoded = await api.encode(imageB64);
    const session = new EditSession(api, info, imageB64, encoded.z, encoded.c_hat);
    const recon = await api.edit(imageB64, {});
    session.reconstruction = recon.image;
    return session;
  }

  /** Alternate source: a dataset sample served statically as
   * `<base>/images/<index 0-padded to 4>.png`; same flow as an upload. */
  static async loadDatasetIndex(
    api: ApiClient, info: ModelInfo, datasetBase: string, index: number,
    fetchImpl: (url: string) => Promise<Response> = (url) => fetch(url),
  ): Promise<EditSession> {
    const name = String(index).padStart(4, "0");
    const resp = await fetchImpl(`${datasetBase}/images/${name}.png`);
    if (!resp.ok) {
      throw new Error(`dataset image ${name}.png not found (HTTP ${resp.status})`);
    }
    const bytes = new Uint8Array(await resp.arrayBuffer());
    let binary = "";
    for (const byte of bytes) binary += String.fromCharCode(byte);
    return EditSession.load(api, info, btoa(binary));
  }

  /** Current /edit payload; derivable from cHat plus recorded changes. */
  currentSet() {
    return accumulatedSet(this.changes);
  }

  async applyEdit(change: AttributeChange): Promise<HistoryEntry> {
    if (this.pending) {
      throw new Error("an edit is already in flight");
    }
    // validate locally first so invalid changes never reach the wire
    const nextAttributes = applyChange(this.info, this.attributes, change);
    const nextChanges = [...this.changes, change];
    this.pending = true;
    try {
      const resp = await this.api.edit(this.sourceImage, accumulatedSet(nextChanges));
      this.attributes = nextAttributes;
      this.changes = nextChanges;
      const entry: HistoryEntry = {
        change,
        attributes: nextAttributes.slice(),
        changes: nextChanges.slice(),
        imageB64: resp.image,
      };
      this.history.push(entry);
      return entry;
    } finally {
      this.pending = false;
    }
  }

  /** Restore the state recorded at history step index (0-based). */
  undoTo(index: number): void {
    const entry = this.history[index];
    if (!entry) {
      throw new Error(`no history entry ${index}`);
    }
    this.attributes = entry.attributes.slice();
    this.changes = entry.changes.slice();
  }

  /** Back to the unedited state (snap of the recognizer estimate). */
  reset(): void {
    this.attributes = snapToValid(this.info, this.cHat);
    this.changes = [];
  }

  get currentImage(): string | null {
    const last = this.history[this.history.length - 1];
    return last ? last.imageB64 : this.reconstruction;
  }
}
