/** Wiring: connect to the API, let the user pick a PNG, drive the session. */

import { ApiClient, ApiError, type ModelInfo } from "./api.js";
import type { AttributeChange } from "./attributes.js";
import { EditSession } from "./session.js";
import { render, renderError } from "./ui.js";

const apiBase = new URLSearchParams(location.search).get("api") ?? "";
const api = new ApiClient(apiBase);

const root = document.getElementById("app")!;
let info: ModelInfo;
let session: EditSession | null = null;

function redraw(): void {
  if (!session) return;
  render(root, info, session, {
    onEdit: (change: AttributeChange) => {
      session!
        .applyEdit(change)
        .then(redraw)
        .catch((e) => renderError(root, e instanceof ApiError
          ? `edit rejected: ${e.message}` : String(e)));
    },
    onUndo: (index: number) => {
      session!.undoTo(index);
      redraw();
    },
  });
}

async function loadFile(file: File): Promise<void> {
  const buf = new Uint8Array(await file.arrayBuffer());
  let binary = "";
  for (const byte of buf) binary += String.fromCharCode(byte);
  const b64 = btoa(binary);
  try {
    session = await EditSession.load(api, info, b64);
    redraw();
  } catch (e) {
    renderError(root, e instanceof ApiError
      ? `could not load image: ${e.message}` : String(e));
  }
}

async function boot(): Promise<void> {
  try {
    info = await api.modelInfo();
  } catch (e) {
    renderError(root, `server unreachable: ${e instanceof Error ? e.message : e}`);
    return;
  }
  const picker = document.getElementById("file") as HTMLInputElement;
  picker.onchange = () => {
    const file = picker.files?.[0];
    if (file) void loadFile(file);
  };
  const indexInput = document.getElementById("dataset-index") as HTMLInputElement;
  indexInput.onchange = async () => {
    const index = Number(indexInput.value);
    if (!Number.isInteger(index) || index < 0) return;
    try {
      session = await EditSession.loadDatasetIndex(api, info, "dataset", index);
      redraw();
    } catch (e) {
      renderError(root, String(e instanceof Error ? e.message : e));
    }
  };
  const status = document.getElementById("status")!;
  status.textContent =
    `model: ${info.image_size}x${info.image_size}, ` +
    `${info.c_dim} attributes (${info.groups.map((g) => g.name).join(", ")}), ` +
    `step ${info.step}`;
}

void boot();
