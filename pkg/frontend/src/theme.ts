/**
 * Overlay styling: clutter shouts, normal whispers.
 *
 * Clutter elements get a saturated fill at high opacity with a solid
 * outline; normal elements get a barely-there tint so they stay
 * discoverable without competing with the photo.
 */

export interface OverlayTheme {
  clutterFill: string;
  clutterOpacity: number;
  clutterOutline: string;
  normalFill: string;
  normalOpacity: number;
}

export const DEFAULT_THEME: OverlayTheme = {
  clutterFill: "#ff3b30",
  clutterOpacity: 0.55,
  clutterOutline: "#ff3b30",
  normalFill: "#4da3ff",
  normalOpacity: 0.12,
};
