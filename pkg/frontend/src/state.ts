/**
 * Overlay state as a pure function of server payloads + local toggles.
 *
 * Nothing here touches the DOM or the network: given the same session
 * payload and the same booleans, the derived state is identical, so
 * replaying recorded payloads reproduces the exact overlay set. The only
 * local-first mutation the UI ever makes is the eye toggle; category
 * changes go through the server and re-derive.
 */

import { decodeRle, maskArea } from "./rle.js";
import type { Category, SessionElement, SessionView } from "./types.js";

export interface OverlayElement {
  index: number;
  labelName: string;
  category: Category;
  q: number;
  bbox: [number, number, number, number];
  /** Row-major 0/1 mask; null when the wire string failed to decode. */
  mask: Uint8Array | null;
  area: number;
  decodeFailed: boolean;
}

export interface OverlayState {
  sessionId: string;
  width: number;
  height: number;
  elements: OverlayElement[];
  masksVisible: boolean;
  selectedIndex: number | null;
}

function decodeElement(e: SessionElement, height: number, width: number): OverlayElement {
  let mask: Uint8Array | null = null;
  let area = 0;
  let decodeFailed = false;
  try {
    mask = decodeRle(e.rle_mask, height, width);
    area = maskArea(mask);
  } catch {
    decodeFailed = true;
  }
  return {
    index: e.index,
    labelName: e.label_name,
    category: e.category,
    q: e.q,
    bbox: e.bbox,
    mask,
    area,
    decodeFailed,
  };
}

export function buildOverlayState(
  session: SessionView,
  masksVisible = true,
  selectedIndex: number | null = null,
): OverlayState {
  return {
    sessionId: session.id,
    width: session.width,
    height: session.height,
    elements: session.elements.map((e) => decodeElement(e, session.height, session.width)),
    masksVisible,
    selectedIndex,
  };
}

/** New state with one element's category replaced (no other field moves). */
export function withCategory(
  state: OverlayState,
  index: number,
  category: Category,
): OverlayState {
  return {
    ...state,
    elements: state.elements.map((e) => (e.index === index ? { ...e, category } : e)),
  };
}

/** New state with every category taken from a server acknowledgment. */
export function withCategories(state: OverlayState, categories: Category[]): OverlayState {
  if (categories.length !== state.elements.length) {
    throw new Error(
      `server sent ${categories.length} categories for ${state.elements.length} elements`,
    );
  }
  return {
    ...state,
    elements: state.elements.map((e, i) => ({ ...e, category: categories[i] })),
  };
}

export function elementAt(state: OverlayState, index: number): OverlayElement | undefined {
  return state.elements.find((e) => e.index === index);
}

/**
 * Topmost element covering a pixel. Smaller elements win ties because
 * they are stacked above larger ones (the same order the renderer uses),
 * keeping small clutter clickable inside big regions.
 */
export function hitTest(state: OverlayState, row: number, col: number): OverlayElement | null {
  if (row < 0 || col < 0 || row >= state.height || col >= state.width) {
    return null;
  }
  const covering = state.elements.filter(
    (e) => e.mask !== null && e.mask[row * state.width + col] === 1,
  );
  if (covering.length === 0) {
    return null;
  }
  covering.sort((a, b) => a.area - b.area);
  return covering[0];
}
