/**
 * Controller behavior against recorded payloads and a stubbed network:
 * click-to-inspect, double-click category flips with optimistic
 * reconcile/revert, the purely local eye toggle, and the clean flow
 * with checksum verification.
 */

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { BRIGHT_CLASS, TRANSPARENT_CLASS } from "../src/overlay.js";
import { ViewfinderApi } from "../src/api.js";
import { Viewfinder } from "../src/viewfinder.js";
import {
  cleanFixture,
  previewBytes,
  previewFixture,
  sessionTwoElements,
  suggestionFixtures,
} from "./fixtures.js";
import { FakeFetch } from "./stubs.js";

let container: HTMLElement;

beforeEach(() => {
  container = document.createElement("div");
  document.body.replaceChildren(container);
});

afterEach(() => {
  vi.useRealTimers();
});

function makeViewfinder(fake: FakeFetch): Viewfinder {
  const api = new ViewfinderApi("", fake.fetch);
  return new Viewfinder(sessionTwoElements(), api, container);
}

function brightCount(): number {
  return container.querySelectorAll(`.${BRIGHT_CLASS}`).length;
}

function transparentCount(): number {
  return container.querySelectorAll(`.${TRANSPARENT_CLASS}`).length;
}

describe("initial render", () => {
  it("replays the recorded payload into one bright and one transparent overlay", () => {
    makeViewfinder(new FakeFetch());
    expect(brightCount()).toBe(1);
    expect(transparentCount()).toBe(1);
  });
});

describe("inspect (single click)", () => {
  it("loads q and service suggestions into the panel", async () => {
    const fixtures = suggestionFixtures();
    const fake = new FakeFetch().on("GET", "/elements/1/suggestions", {
      status: 200,
      json: fixtures["1"],
    });
    const vf = makeViewfinder(fake);
    await vf.inspect(1);
    expect(vf.state.selectedIndex).toBe(1);
    expect(vf.panel?.q).toBeCloseTo(sessionTwoElements().elements[0].q, 12);
    expect(vf.panel?.qSign).toBe("nonnegative");
    // suggestions appear verbatim, straight off the wire
    expect(vf.panel?.suggestions).toEqual(fixtures["1"].suggestions);
    expect(vf.panel?.suggestions.length).toBeGreaterThan(0);
  });

  it("shows no removal suggestions for a normal element", async () => {
    const fixtures = suggestionFixtures();
    const fake = new FakeFetch().on("GET", "/elements/2/suggestions", {
      status: 200,
      json: fixtures["2"],
    });
    const vf = makeViewfinder(fake);
    await vf.inspect(2);
    expect(vf.panel?.category).toBe("normal");
    expect(vf.panel?.suggestions).toEqual([]);
  });

  it("keeps the previous panel and offers a retry on network failure", async () => {
    const fixtures = suggestionFixtures();
    const fake = new FakeFetch().on("GET", "/elements/1/suggestions", {
      status: 200,
      json: fixtures["1"],
    });
    const vf = makeViewfinder(fake);
    await vf.inspect(1);
    const panelBefore = vf.panel;
    await vf.inspect(2); // no stub: fetch throws
    expect(vf.panel).toBe(panelBefore);
    expect(vf.toast?.retriable).toBe(true);
  });
});

describe("flipCategory (double click)", () => {
  it("flips optimistically and keeps the acknowledged category", async () => {
    const fake = new FakeFetch().on("POST", "/overrides", {
      status: 200,
      json: { id: "x", categories: ["normal", "normal"] },
    });
    const vf = makeViewfinder(fake);
    await vf.flipCategory(1);
    expect(fake.calls[0].body).toEqual({ index: 1, category: "normal" });
    expect(vf.state.elements[0].category).toBe("normal");
    expect(brightCount()).toBe(0);
    expect(transparentCount()).toBe(2);
  });

  it("restores the original style after a double flip", async () => {
    const fake = new FakeFetch();
    let call = 0;
    fake.on("POST", "/overrides", { status: 200, json: {} });
    // swap the ack per call
    const base = fake.fetch;
    const api = new ViewfinderApi("", async (url, init) => {
      call += 1;
      const categories = call === 1 ? ["normal", "normal"] : ["clutter", "normal"];
      await base(url, init);
      return {
        ok: true,
        status: 200,
        json: async () => ({ id: "x", categories }),
      } as unknown as Response;
    });
    const vf = new Viewfinder(sessionTwoElements(), api, container);
    await vf.flipCategory(1);
    await vf.flipCategory(1);
    expect(vf.state.elements[0].category).toBe("clutter");
    expect(brightCount()).toBe(1);
    expect(transparentCount()).toBe(1);
  });

  it("reverts and toasts when the server refuses", async () => {
    const fake = new FakeFetch().on("POST", "/overrides", {
      status: 400,
      json: { detail: "category must be one of ..." },
    });
    const vf = makeViewfinder(fake);
    await vf.flipCategory(1);
    expect(vf.state.elements[0].category).toBe("clutter");
    expect(brightCount()).toBe(1);
    expect(vf.toast?.message).toContain("override rejected");
    expect(vf.sessionExpired).toBe(false);
  });

  it("reverts and flags the session expired on 404", async () => {
    const fake = new FakeFetch().on("POST", "/overrides", {
      status: 404,
      json: { detail: "no session x" },
    });
    const vf = makeViewfinder(fake);
    await vf.flipCategory(1);
    expect(vf.state.elements[0].category).toBe("clutter");
    expect(vf.sessionExpired).toBe(true);
  });
});

describe("pointer disambiguation", () => {
  it("one pointer inside the window becomes an inspect", async () => {
    vi.useFakeTimers();
    const fixtures = suggestionFixtures();
    const fake = new FakeFetch().on("GET", "/elements/1/suggestions", {
      status: 200,
      json: fixtures["1"],
    });
    const vf = makeViewfinder(fake);
    vf.pointerAt(10, 10); // inside element 1's rect
    await vi.advanceTimersByTimeAsync(250);
    expect(fake.callsTo("/suggestions")).toHaveLength(1);
    expect(vf.state.selectedIndex).toBe(1);
  });

  it("two pointers inside the window become a category flip", async () => {
    vi.useFakeTimers();
    const fake = new FakeFetch().on("POST", "/overrides", {
      status: 200,
      json: { id: "x", categories: ["normal", "normal"] },
    });
    const vf = makeViewfinder(fake);
    vf.pointerAt(10, 10);
    await vi.advanceTimersByTimeAsync(100);
    vf.pointerAt(10, 10);
    await vi.advanceTimersByTimeAsync(300);
    expect(fake.callsTo("/overrides")).toHaveLength(1);
    expect(fake.callsTo("/suggestions")).toHaveLength(0);
  });

  it("a pointer on empty canvas changes nothing", async () => {
    vi.useFakeTimers();
    const fake = new FakeFetch();
    const vf = makeViewfinder(fake);
    vf.pointerAt(40, 2); // background pixel
    await vi.advanceTimersByTimeAsync(300);
    expect(fake.calls).toHaveLength(0);
    expect(vf.panel).toBeNull();
    expect(vf.state.selectedIndex).toBeNull();
  });
});

describe("eye toggle", () => {
  it("hides and restores overlays without any network traffic", () => {
    const fake = new FakeFetch();
    const vf = makeViewfinder(fake);
    vf.toggleMasks();
    expect(container.children).toHaveLength(0);
    vf.toggleMasks();
    expect(brightCount()).toBe(1);
    expect(transparentCount()).toBe(1);
    expect(fake.calls).toHaveLength(0);
  });
});

describe("clean", () => {
  it("shows the preview with a checksum matching the service bytes", async () => {
    const bytes = previewBytes();
    const fake = new FakeFetch()
      .on("POST", "/clean", { status: 200, json: cleanFixture() })
      .on("GET", "/preview.png", { status: 200, bytes });
    const vf = makeViewfinder(fake);
    await vf.clean();
    expect(vf.cleanView?.status).toBe("cleaned");
    expect(vf.cleanView?.iterationsUsed).toBe(cleanFixture().iterations_used);
    expect(vf.cleanView?.previewBytes).toEqual(bytes);
    // the checksum the UI displays equals the one recorded server-side
    expect(vf.cleanView?.checksum).toBe(previewFixture().fnv1a32_hex);
    expect(vf.cleanView?.confidenceUrl).toContain("confidence.png");
    expect(vf.cleanDisabled).toBe(false);
  });

  it("handles the nothing-to-remove state", async () => {
    const fake = new FakeFetch()
      .on("POST", "/clean", {
        status: 200,
        json: {
          status: "nothing-to-remove",
          iterations_used: 0,
          selected_indices: [],
          preview_url: "/v1/sessions/x/preview.png",
        },
      })
      .on("GET", "/preview.png", { status: 200, bytes: previewBytes() });
    const vf = makeViewfinder(fake);
    await vf.clean();
    expect(vf.cleanView?.status).toBe("nothing-to-remove");
    expect(vf.cleanView?.iterationsUsed).toBe(0);
    expect(vf.cleanView?.confidenceUrl).toBeNull();
  });

  it("disables the button behind a countdown on 503", async () => {
    const fake = new FakeFetch().on("POST", "/clean", {
      status: 503,
      json: { detail: "segmentation backend unreachable" },
    });
    const vf = makeViewfinder(fake);
    await vf.clean();
    expect(vf.cleanDisabled).toBe(true);
    expect(vf.cleanRetryCountdown).toBe(5);
    for (let i = 0; i < 5; i++) {
      vf.tickRetry();
    }
    expect(vf.cleanDisabled).toBe(false);
  });

  it("allows at most one in-flight clean", async () => {
    const fake = new FakeFetch()
      .on("POST", "/clean", { status: 200, json: cleanFixture() })
      .on("GET", "/preview.png", { status: 200, bytes: previewBytes() });
    const vf = makeViewfinder(fake);
    const first = vf.clean();
    const second = vf.clean(); // guard: pending flag set synchronously
    await Promise.all([first, second]);
    expect(fake.callsTo("/clean")).toHaveLength(1);
  });

  it("toasts on non-503 failures", async () => {
    const fake = new FakeFetch().on("POST", "/clean", {
      status: 500,
      json: { detail: "boom" },
    });
    const vf = makeViewfinder(fake);
    await vf.clean();
    expect(vf.toast?.retriable).toBe(true);
    expect(vf.cleanView).toBeNull();
    expect(vf.cleanDisabled).toBe(false);
  });
});
