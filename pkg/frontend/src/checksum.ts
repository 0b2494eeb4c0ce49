/**
 * FNV-1a 32-bit checksum for preview verification.
 *
 * The debug panel shows this over the preview bytes the UI actually
 * rendered, so a mismatched or truncated download is visible at a glance
 * when compared with the same hash of the service's file.
 */

const FNV_OFFSET = 0x811c9dc5;
const FNV_PRIME = 0x01000193;

export function fnv1a32(bytes: Uint8Array): number {
  let hash = FNV_OFFSET;
  for (let i = 0; i < bytes.length; i++) {
    hash ^= bytes[i];
    hash = Math.imul(hash, FNV_PRIME) >>> 0;
  }
  return hash >>> 0;
}

export function fnv1a32Hex(bytes: Uint8Array): string {
  return fnv1a32(bytes).toString(16).padStart(8, "0");
}
