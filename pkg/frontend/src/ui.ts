/** DOM rendering: three image panels, grouped attribute controls, history
 * strip. Pure view layer over EditSession; all state changes go through the
 * session so the tests can drive the same logic headlessly. */

import type { ModelInfo } from "./api.js";
import { buildControls, type AttributeChange } from "./attributes.js";
import type { EditSession } from "./session.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function imagePanel(title: string, b64: string | null, size: number): HTMLElement {
  const panel = el("figure", "panel");
  const img = el("img");
  img.width = size * 4;
  img.height = size * 4;
  img.style.imageRendering = "pixelated";
  if (b64) img.src = `data:image/png;base64,${b64}`;
  panel.append(img, el("figcaption", undefined, title));
  return panel;
}

export interface RenderCallbacks {
  onEdit: (change: AttributeChange) => void;
  onUndo: (index: number) => void;
}

export function render(root: HTMLElement, info: ModelInfo,
                       session: EditSession, cb: RenderCallbacks): void {
  root.replaceChildren();

  const panels = el("div", "panels");
  panels.append(imagePanel("original", session.sourceImage, info.image_size));
  panels.append(imagePanel("reconstruction", session.reconstruction, info.image_size));
  if (session.history.length > 0) {
    panels.append(imagePanel("edited", session.currentImage, info.image_size));
  }
  root.append(panels);

  const controls = el("div", "controls");
  for (const control of buildControls(info, session.attributes)) {
    const row = el("label", "control");
    if (control.kind === "select") {
      row.append(el("span", "name", control.group));
      const select = el("select");
      for (let k = 0; k < control.size; k++) {
        const option = el("option", undefined, `class ${k}`);
        option.value = String(k);
        option.selected = k === control.selected;
        select.append(option);
      }
      select.disabled = session.pending;
      select.onchange = () =>
        cb.onEdit({ key: control.group, value: Number(select.value) });
      row.append(select);
    } else if (control.kind === "toggle") {
      row.append(el("span", "name", `attribute ${control.index}`));
      const box = el("input");
      box.type = "checkbox";
      box.checked = control.on;
      box.disabled = session.pending;
      box.onchange = () =>
        cb.onEdit({ key: String(control.index), value: box.checked ? 1 : 0 });
      row.append(box);
    } else {
      row.append(el("span", "name", `attribute ${control.index}`));
      const slider = el("input");
      slider.type = "range";
      slider.min = "0";
      slider.max = "1";
      slider.step = "0.01";
      slider.value = String(control.value);
      slider.disabled = session.pending;
      slider.onchange = () =>
        cb.onEdit({ key: String(control.index), value: Number(slider.value) });
      row.append(slider);
    }
    controls.append(row);
  }
  root.append(controls);

  const strip = el("div", "history");
  session.history.forEach((entry, i) => {
    const thumb = el("button", "thumb");
    const img = el("img");
    img.width = info.image_size * 2;
    img.height = info.image_size * 2;
    img.src = `data:image/png;base64,${entry.imageB64}`;
    thumb.append(img, el("span", undefined,
                         `${entry.change.key}=${entry.change.value}`));
    thumb.onclick = () => cb.onUndo(i);
    strip.append(thumb);
  });
  root.append(strip);
}

export function renderError(root: HTMLElement, message: string): void {
  const banner = el("div", "error", message);
  root.prepend(banner);
}
