import { describe, expect, it } from "vitest";

import { IDLE_ACTION, isBoundKey, isIdle, KeyTracker, normalizeKey } from "../src/actions.js";

describe("key bindings", () => {
  it.each([
    ["w", { move: 1, strafe: 0, turn: 0, jump: 0 }],
    ["s", { move: -1, strafe: 0, turn: 0, jump: 0 }],
    ["a", { move: 0, strafe: -1, turn: 0, jump: 0 }],
    ["d", { move: 0, strafe: 1, turn: 0, jump: 0 }],
    ["ArrowLeft", { move: 0, strafe: 0, turn: -1, jump: 0 }],
    ["ArrowRight", { move: 0, strafe: 0, turn: 1, jump: 0 }],
    [" ", { move: 0, strafe: 0, turn: 0, jump: 1 }],
  ])("maps %s onto one axis", (key, expected) => {
    const tracker = new KeyTracker();
    expect(tracker.keyDown(key)).toBe(true);
    expect(tracker.compose()).toEqual(expected);
  });

  it("composes W plus ArrowRight into move +1 turn +1", () => {
    const tracker = new KeyTracker();
    tracker.keyDown("W");
    tracker.keyDown("ArrowRight");
    expect(tracker.compose()).toEqual({ move: 1, strafe: 0, turn: 1, jump: 0 });
  });

  it("cancels opposing keys per axis", () => {
    const tracker = new KeyTracker();
    tracker.keyDown("w");
    tracker.keyDown("s");
    expect(tracker.compose()).toEqual(IDLE_ACTION);
    expect(isIdle(tracker.compose())).toBe(true);
  });

  it("releases keys on keyUp", () => {
    const tracker = new KeyTracker();
    tracker.keyDown("w");
    tracker.keyDown("d");
    tracker.keyUp("w");
    expect(tracker.compose()).toEqual({ move: 0, strafe: 1, turn: 0, jump: 0 });
  });

  it("ignores unbound keys", () => {
    const tracker = new KeyTracker();
    expect(tracker.keyDown("x")).toBe(false);
    expect(tracker.keyDown("Escape")).toBe(false);
    expect(tracker.anyPressed()).toBe(false);
    expect(tracker.compose()).toEqual(IDLE_ACTION);
  });

  it("treats the space character as the space key", () => {
    expect(normalizeKey(" ")).toBe("space");
    expect(isBoundKey(" ")).toBe(true);
    expect(isBoundKey("Spacebar".toLowerCase())).toBe(false);
  });

  it("is idempotent under key repeat", () => {
    const tracker = new KeyTracker();
    tracker.keyDown("w");
    tracker.keyDown("w");
    tracker.keyDown("w");
    expect(tracker.compose()).toEqual({ move: 1, strafe: 0, turn: 0, jump: 0 });
    tracker.keyUp("w");
    expect(tracker.compose()).toEqual(IDLE_ACTION);
  });
});
