/**
 * Browser entry point: bind the viewfinder to the page chrome.
 *
 * Expects the ids laid out in index.html. All interesting behavior
 * lives in Viewfinder; this file only adapts DOM events to it.
 */

import { ViewfinderApi } from "./api.js";
import { Viewfinder } from "./viewfinder.js";

function maskCoordinates(event: MouseEvent, stage: HTMLElement): [number, number] {
  const rect = stage.getBoundingClientRect();
  return [Math.floor(event.clientY - rect.top), Math.floor(event.clientX - rect.left)];
}

export async function boot(doc: Document = document): Promise<void> {
  const stage = doc.getElementById("stage") as HTMLElement;
  const upload = doc.getElementById("upload") as HTMLInputElement;
  const eye = doc.getElementById("eye-toggle") as HTMLButtonElement;
  const cleanButton = doc.getElementById("clean") as HTMLButtonElement;
  const api = new ViewfinderApi();

  // bound once; re-uploads swap the controller, not the listeners
  let viewfinder: Viewfinder | null = null;

  stage.addEventListener("pointerdown", (event) => {
    const [row, col] = maskCoordinates(event as MouseEvent, stage);
    viewfinder?.pointerAt(row, col);
  });
  eye.addEventListener("click", () => viewfinder?.toggleMasks());
  cleanButton.addEventListener("click", () => {
    const active = viewfinder;
    if (!active) {
      return;
    }
    cleanButton.disabled = true;
    void active.clean().finally(() => {
      cleanButton.disabled = active.cleanDisabled;
    });
  });

  upload.addEventListener("change", async () => {
    const file = upload.files?.[0];
    if (!file) {
      return;
    }
    const session = await api.createSession(file, file.name);
    const photo = doc.getElementById("photo") as HTMLImageElement;
    photo.src = URL.createObjectURL(file);
    viewfinder = new Viewfinder(session, api, stage);
  });
}

if (typeof document !== "undefined" && document.getElementById("stage")) {
  void boot();
}
