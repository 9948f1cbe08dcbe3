/** Keyboard state and its composition into a single world action.
 *
 * Bindings: W/S drive move +1/-1, A/D drive strafe -1/+1, the arrow keys
 * drive turn -1/+1, and Space sets jump. Keys held together sum per axis,
 * clamped to the action range, so W plus ArrowRight composes into one
 * action with move=+1 and turn=+1.
 */

import type { Action } from "./types.js";

export const IDLE_ACTION: Action = Object.freeze({
  move: 0,
  strafe: 0,
  turn: 0,
  jump: 0,
});

const KEY_EFFECTS: ReadonlyMap<string, Partial<Action>> = new Map([
  ["w", { move: 1 }],
  ["s", { move: -1 }],
  ["a", { strafe: -1 }],
  ["d", { strafe: 1 }],
  ["arrowleft", { turn: -1 }],
  ["arrowright", { turn: 1 }],
  ["space", { jump: 1 }],
]);

function clamp(value: number, low: number, high: number): number {
  return Math.max(low, Math.min(high, value));
}

/** Map a KeyboardEvent.key value onto the binding table's key names. */
export function normalizeKey(key: string): string {
  const lower = key.toLowerCase();
  return lower === " " ? "space" : lower;
}

export function isBoundKey(key: string): boolean {
  return KEY_EFFECTS.has(normalizeKey(key));
}

export function isIdle(action: Action): boolean {
  return (
    action.move === 0 &&
    action.strafe === 0 &&
    action.turn === 0 &&
    action.jump === 0
  );
}

export class KeyTracker {
  private pressed = new Set<string>();

  /** Record a key press; returns true when the key is bound to an action. */
  keyDown(key: string): boolean {
    const name = normalizeKey(key);
    if (!KEY_EFFECTS.has(name)) {
      return false;
    }
    this.pressed.add(name);
    return true;
  }

  keyUp(key: string): void {
    this.pressed.delete(normalizeKey(key));
  }

  clear(): void {
    this.pressed.clear();
  }

  anyPressed(): boolean {
    return this.pressed.size > 0;
  }

  /** Compose every held key into one action, summing and clamping per axis. */
  compose(): Action {
    let move = 0;
    let strafe = 0;
    let turn = 0;
    let jump = 0;
    for (const name of this.pressed) {
      const effect = KEY_EFFECTS.get(name);
      if (effect === undefined) {
        continue;
      }
      move += effect.move ?? 0;
      strafe += effect.strafe ?? 0;
      turn += effect.turn ?? 0;
      jump += effect.jump ?? 0;
    }
    return {
      move: clamp(move, -1, 1),
      strafe: clamp(strafe, -1, 1),
      turn: clamp(turn, -1, 1),
      jump: clamp(jump, 0, 1),
    };
  }
}
