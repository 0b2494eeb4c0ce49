/**
 * Wire types for the declutter session service.
 *
 * These mirror the JSON the service emits field-for-field; the UI never
 * invents state that is not derivable from one of these payloads plus
 * its local toggle booleans.
 */

export type Category = "clutter" | "normal";

export interface SessionElement {
  index: number;
  label: number;
  label_name: string;
  /** Inclusive pixel bounds: [row0, col0, row1, col1]. */
  bbox: [number, number, number, number];
  /** Column-major run-length mask, starting with the zero-run count. */
  rle_mask: string;
  /** Signed contribution to overall quality; negative means clutter. */
  q: number;
  category: Category;
  score_aes?: number;
  score_content?: number;
}

export interface OverallScores {
  aes: number | null;
  content: number | null;
}

export interface CleanRecord {
  status: "cleaned" | "nothing-to-remove";
  iterations_used: number;
  selected_indices: number[];
}

export interface SessionView {
  id: string;
  k: number;
  width: number;
  height: number;
  created_at: number;
  updated_at: number;
  overall: OverallScores;
  elements: SessionElement[];
  last_clean: CleanRecord | null;
}

export interface OverrideAck {
  id: string;
  categories: Category[];
}

export interface CleanResponse extends CleanRecord {
  preview_url: string;
  confidence_url?: string;
}

export interface Suggestion {
  kind: "zoom-in" | "reposition-camera" | "change-orientation" | "inpaint";
  rationale: string;
}

export interface SuggestionResponse {
  index: number;
  category: Category;
  suggestions: Suggestion[];
}
