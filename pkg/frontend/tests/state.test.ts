import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { MAX_IMAGE_BYTES, App } from "../src/state.js";
import { totalSeconds } from "../src/orbital.js";
import { makeStubApi, type StubOptions } from "./stub.js";

function makeApp(options: StubOptions = {}) {
  const stub = makeStubApi(options);
  const app = new App(new ApiClient("http://api", stub.fetch));
  return { app, stub };
}

describe("text submission", () => {
  it("renders 3-6 orbital nodes whose durations sum to the cycle length", async () => {
    const { app } = makeApp();
    await app.submitText("a slice of pizza");
    const state = app.getState();
    expect(state.phase).toBe("ready");
    expect(state.nodes.length).toBeGreaterThanOrEqual(3);
    expect(state.nodes.length).toBeLessThanOrEqual(6);
    expect(totalSeconds(state.nodes)).toBeCloseTo(60, 10);
    expect(state.justification).toBe("initial composition");
  });

  it("allows only one in-flight mutation", async () => {
    const { app, stub } = makeApp();
    const first = app.submitText("pizza");
    const second = app.submitText("salad"); // fired while first is in flight
    await Promise.all([first, second]);
    const posts = stub.calls.filter((c) => c.path === "/sessions");
    expect(posts).toHaveLength(1);
  });
});

describe("feedback", () => {
  it("re-renders the ring and exposes the per-node diff", async () => {
    const { app } = makeApp();
    await app.submitText("pizza");
    await app.submitFeedback("less savory");
    const state = app.getState();
    expect(state.nodes.find((n) => n.name === "Onion")!.ratio).toBe("0.20");
    expect(state.diff.map((d) => d.name)).toEqual(["Onion", "Thyme"]);
    expect(totalSeconds(state.nodes)).toBeCloseTo(60, 10);
  });

  it("surfaces API validation errors inline with their code", async () => {
    const { app } = makeApp();
    await app.submitText("pizza");
    await app.submitFeedback("");
    const state = app.getState();
    expect(state.error).toMatchObject({ code: "validation" });
    expect(state.phase).toBe("ready"); // still usable
  });
});

describe("image submission", () => {
  it("rejects oversized images locally without a request", async () => {
    const { app, stub } = makeApp();
    await app.submitImage(new Uint8Array(MAX_IMAGE_BYTES + 1));
    expect(app.getState().error).toMatchObject({ code: "validation" });
    expect(stub.calls).toHaveLength(0);
  });

  it("base64-encodes an accepted image", async () => {
    const { app, stub } = makeApp();
    await app.submitImage(new Uint8Array([1, 2, 3]));
    const post = stub.calls.find((c) => c.path === "/sessions")!;
    expect((post.body as { image_base64: string }).image_base64).toBe("AQID");
  });
});

describe("play", () => {
  it("records the dispense report on success", async () => {
    const { app } = makeApp();
    await app.submitText("pizza");
    await app.play();
    const state = app.getState();
    expect(state.lastReport!.completed).toBe(true);
    expect(state.lastReport!.total_ms).toBe(60000);
    expect(state.deviceBusy).toBe(false);
  });

  it("renders the busy state on a 409 instead of an error", async () => {
    const { app } = makeApp({ playBusy: true });
    await app.submitText("pizza");
    await app.play();
    const state = app.getState();
    expect(state.deviceBusy).toBe(true);
    expect(state.error).toBeNull();
    expect(app.playEnabled).toBe(false); // no duplicate request loop
  });
});

describe("satisfied", () => {
  it("disables further input once marked satisfied", async () => {
    const { app, stub } = makeApp();
    await app.submitText("pizza");
    await app.submitFeedback("less savory");
    await app.markSatisfied();
    const state = app.getState();
    expect(state.phase).toBe("satisfied");
    expect(state.refinementTurns).toBe(1);
    expect(app.inputEnabled).toBe(false);
    expect(app.satisfyVisible).toBe(false);

    // subsequent submissions are ignored entirely
    const before = stub.calls.length;
    await app.submitText("salad");
    await app.submitFeedback("more");
    expect(stub.calls.length).toBe(before);
  });

  it("converges the UI when the server reports it is already satisfied", async () => {
    const { app } = makeApp({ satisfiedConflict: true });
    await app.submitText("pizza");
    await app.markSatisfied();
    const state = app.getState();
    expect(state.phase).toBe("satisfied");
    expect(state.error).toBeNull();
  });

  it("is hidden before any generation", () => {
    const { app } = makeApp();
    expect(app.satisfyVisible).toBe(false);
  });
});
