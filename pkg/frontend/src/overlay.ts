/**
 * Overlay rendering: one DOM node per element over the photo.
 *
 * Each element becomes its own absolutely-positioned <canvas> carrying a
 * category class ("overlay-bright" for clutter, "overlay-transparent"
 * for normal), so the painted set is countable and styleable without
 * reading pixels back. Stacking order is by descending area — small
 * elements sit on top and stay clickable. Elements whose mask failed to
 * decode render as a warning badge instead of a mask.
 */

import type { OverlayElement, OverlayState } from "./state.js";
import { DEFAULT_THEME, type OverlayTheme } from "./theme.js";

export const BRIGHT_CLASS = "overlay-bright";
export const TRANSPARENT_CLASS = "overlay-transparent";
export const BADGE_CLASS = "overlay-decode-warning";

function hexToRgb(hex: string): [number, number, number] {
  const n = parseInt(hex.replace("#", ""), 16);
  return [(n >> 16) & 0xff, (n >> 8) & 0xff, n & 0xff];
}

function paintMask(
  canvas: HTMLCanvasElement,
  element: OverlayElement,
  state: OverlayState,
  theme: OverlayTheme,
): void {
  const context = canvas.getContext("2d");
  if (!context || !element.mask) {
    return; // headless test DOM: geometry and classes still apply
  }
  const bright = element.category === "clutter";
  const [r, g, b] = hexToRgb(bright ? theme.clutterFill : theme.normalFill);
  const alpha = Math.round((bright ? theme.clutterOpacity : theme.normalOpacity) * 255);
  const imageData = context.createImageData(state.width, state.height);
  for (let i = 0; i < element.mask.length; i++) {
    if (element.mask[i]) {
      imageData.data[i * 4] = r;
      imageData.data[i * 4 + 1] = g;
      imageData.data[i * 4 + 2] = b;
      imageData.data[i * 4 + 3] = alpha;
    }
  }
  context.putImageData(imageData, 0, 0);
  if (bright) {
    const [r0, c0, r1, c1] = element.bbox;
    context.strokeStyle = theme.clutterOutline;
    context.lineWidth = 2;
    context.strokeRect(c0 + 0.5, r0 + 0.5, c1 - c0 + 1, r1 - r0 + 1);
  }
}

function overlayNode(
  element: OverlayElement,
  state: OverlayState,
  zIndex: number,
  theme: OverlayTheme,
  doc: Document,
): HTMLElement {
  if (element.decodeFailed) {
    const badge = doc.createElement("div");
    badge.className = BADGE_CLASS;
    badge.dataset.index = String(element.index);
    badge.textContent = `element ${element.index}: mask unavailable`;
    badge.style.zIndex = String(zIndex);
    return badge;
  }
  const canvas = doc.createElement("canvas");
  canvas.width = state.width;
  canvas.height = state.height;
  canvas.className = element.category === "clutter" ? BRIGHT_CLASS : TRANSPARENT_CLASS;
  canvas.dataset.index = String(element.index);
  canvas.style.position = "absolute";
  canvas.style.left = "0";
  canvas.style.top = "0";
  canvas.style.zIndex = String(zIndex);
  if (state.selectedIndex === element.index) {
    canvas.classList.add("overlay-selected");
  }
  paintMask(canvas, element, state, theme);
  return canvas;
}

/**
 * Replace the container's overlay nodes with the current state's.
 * Returns the nodes in stacking order (bottom first).
 */
export function renderOverlays(
  state: OverlayState,
  container: HTMLElement,
  theme: OverlayTheme = DEFAULT_THEME,
): HTMLElement[] {
  const doc = container.ownerDocument;
  container.querySelectorAll(`.${BRIGHT_CLASS}, .${TRANSPARENT_CLASS}, .${BADGE_CLASS}`)
    .forEach((node) => node.remove());
  if (!state.masksVisible) {
    return [];
  }
  const byAreaDescending = [...state.elements].sort((a, b) => b.area - a.area);
  const nodes: HTMLElement[] = [];
  byAreaDescending.forEach((element, position) => {
    const node = overlayNode(element, state, position + 1, theme, doc);
    container.appendChild(node);
    nodes.push(node);
  });
  return nodes;
}
