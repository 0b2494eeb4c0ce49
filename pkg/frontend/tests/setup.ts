// jsdom ships no canvas 2d backend: getContext logs a noisy
// "Not implemented" through the virtual console before returning null.
// Return null quietly so the renderer's no-context guard stays silent.
HTMLCanvasElement.prototype.getContext = (() =>
  null) as typeof HTMLCanvasElement.prototype.getContext;
