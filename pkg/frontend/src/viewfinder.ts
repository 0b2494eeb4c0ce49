/**
 * Viewfinder controller: clicks, category flips, the eye, and clean.
 *
 * Pointer rules: a click selects an element and loads its contribution
 * and suggestions; a double click (two pointers within 250 ms) flips its
 * category — restyled optimistically, then reconciled with the server's
 * acknowledgment, reverted if the server refuses. The eye toggle is the
 * single purely-local action. Clean runs at most once concurrently; a
 * 503 disables the button behind a retry countdown.
 */

import { ApiError, ViewfinderApi } from "./api.js";
import { fnv1a32Hex } from "./checksum.js";
import { renderOverlays } from "./overlay.js";
import {
  buildOverlayState,
  elementAt,
  hitTest,
  withCategories,
  withCategory,
  type OverlayState,
} from "./state.js";
import { DEFAULT_THEME, type OverlayTheme } from "./theme.js";
import type { Category, SessionView, Suggestion } from "./types.js";

export const DOUBLE_CLICK_WINDOW_MS = 250;
export const CLEAN_RETRY_SECONDS = 5;

export interface DetailPanel {
  index: number;
  q: number;
  category: Category;
  /** "negative" paints the badge red, "nonnegative" green. */
  qSign: "negative" | "nonnegative";
  suggestions: Suggestion[];
}

export interface CleanView {
  status: "cleaned" | "nothing-to-remove";
  iterationsUsed: number;
  selectedIndices: number[];
  previewBytes: Uint8Array;
  /** FNV-1a of previewBytes, surfaced in the debug readout. */
  checksum: string;
  confidenceUrl: string | null;
}

export interface Toast {
  message: string;
  retriable: boolean;
}

export class Viewfinder {
  state: OverlayState;
  panel: DetailPanel | null = null;
  cleanView: CleanView | null = null;
  toast: Toast | null = null;
  sessionExpired = false;
  cleanPending = false;
  cleanRetryCountdown = 0;

  private pendingClick: ReturnType<typeof setTimeout> | null = null;

  constructor(
    session: SessionView,
    private readonly api: ViewfinderApi,
    private readonly container: HTMLElement,
    private readonly theme: OverlayTheme = DEFAULT_THEME,
  ) {
    this.state = buildOverlayState(session);
    this.render();
  }

  render(): void {
    renderOverlays(this.state, this.container, this.theme);
  }

  /** Eye toggle: purely local, no server round trip. */
  toggleMasks(): void {
    this.state = { ...this.state, masksVisible: !this.state.masksVisible };
    this.render();
  }

  get cleanDisabled(): boolean {
    return this.cleanPending || this.cleanRetryCountdown > 0;
  }

  /** One-second countdown step for the 503 retry state. */
  tickRetry(): void {
    if (this.cleanRetryCountdown > 0) {
      this.cleanRetryCountdown -= 1;
    }
  }

  /**
   * Route a pointer-down at mask coordinates. The first pointer waits
   * one disambiguation window; a second pointer inside the window makes
   * the pair a double click.
   */
  pointerAt(row: number, col: number): void {
    const element = hitTest(this.state, row, col);
    if (!element) {
      return; // empty canvas area: no panel change
    }
    if (this.pendingClick !== null) {
      clearTimeout(this.pendingClick);
      this.pendingClick = null;
      void this.flipCategory(element.index);
      return;
    }
    this.pendingClick = setTimeout(() => {
      this.pendingClick = null;
      void this.inspect(element.index);
    }, DOUBLE_CLICK_WINDOW_MS);
  }

  /** Single click: select and load the element's detail panel. */
  async inspect(index: number): Promise<void> {
    const element = elementAt(this.state, index);
    if (!element) {
      return;
    }
    this.state = { ...this.state, selectedIndex: index };
    this.render();
    try {
      const response = await this.api.suggestions(this.state.sessionId, index);
      this.panel = {
        index,
        q: element.q,
        category: response.category,
        qSign: element.q < 0 ? "negative" : "nonnegative",
        suggestions: response.suggestions,
      };
      this.toast = null;
    } catch (error) {
      // keep whatever panel was showing; offer a retry
      this.toast = { message: `could not load suggestions: ${String(error)}`, retriable: true };
    }
  }

  /** Double click: optimistic category flip, reconciled with the server. */
  async flipCategory(index: number): Promise<void> {
    const element = elementAt(this.state, index);
    if (!element) {
      return;
    }
    const previous = element.category;
    const flipped: Category = previous === "clutter" ? "normal" : "clutter";
    this.state = withCategory(this.state, index, flipped);
    this.render();
    try {
      const ack = await this.api.postOverride(this.state.sessionId, index, flipped);
      this.state = withCategories(this.state, ack.categories);
      if (this.panel?.index === index) {
        this.panel = { ...this.panel, category: flipped };
      }
    } catch (error) {
      this.state = withCategory(this.state, index, previous);
      if (error instanceof ApiError && error.status === 404) {
        this.sessionExpired = true;
      } else {
        this.toast = { message: `override rejected: ${String(error)}`, retriable: false };
      }
    }
    this.render();
  }

  /** Clean button: at most one in-flight request per session. */
  async clean(): Promise<void> {
    if (this.cleanDisabled) {
      return;
    }
    this.cleanPending = true;
    try {
      const result = await this.api.clean(this.state.sessionId);
      const previewBytes = await this.api.fetchBytes(result.preview_url);
      this.cleanView = {
        status: result.status,
        iterationsUsed: result.iterations_used,
        selectedIndices: result.selected_indices,
        previewBytes,
        checksum: fnv1a32Hex(previewBytes),
        confidenceUrl: result.confidence_url ?? null,
      };
      this.toast = null;
    } catch (error) {
      if (error instanceof ApiError && error.status === 503) {
        this.cleanRetryCountdown = CLEAN_RETRY_SECONDS;
      } else {
        this.toast = { message: `clean failed: ${String(error)}`, retriable: true };
      }
    } finally {
      this.cleanPending = false;
    }
  }
}
