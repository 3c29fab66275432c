/** Single-session application state.
 *
 * One mutation may be in flight at a time; controls are derived from the
 * state so the view can simply disable anything `inputEnabled` forbids.
 * A satisfied session locks all composition input for good.
 */

import {
  ApiClient,
  ApiError,
  type DiffEntry,
  type PaletteDoc,
  type PlayReport,
  type TurnPayload,
} from "./api.js";
import { buildOrbital, type OrbitalNode } from "./orbital.js";

export const MAX_IMAGE_BYTES = 4 * 1024 * 1024;

export type Phase =
  | "idle" // nothing generated yet
  | "working" // a mutation is in flight
  | "ready" // composition on screen, accepting feedback
  | "satisfied"; // session closed by the user

export interface AppState {
  phase: Phase;
  sessionId: string | null;
  nodes: OrbitalNode[];
  justification: string | null;
  changesMade: string | null;
  diff: DiffEntry[];
  lastReport: PlayReport | null;
  deviceBusy: boolean;
  refinementTurns: number | null;
  error: { code: string; message: string } | null;
}

type Listener = (state: AppState) => void;

export class App {
  private state: AppState = {
    phase: "idle",
    sessionId: null,
    nodes: [],
    justification: null,
    changesMade: null,
    diff: [],
    lastReport: null,
    deviceBusy: false,
    refinementTurns: null,
    error: null,
  };
  private palette: PaletteDoc | null = null;
  private listeners: Listener[] = [];

  constructor(private readonly api: ApiClient) {}

  getState(): AppState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private update(partial: Partial<AppState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) listener(this.state);
  }

  /** Text/image/feedback entry is allowed only between mutations and
   * before the session is closed. */
  get inputEnabled(): boolean {
    return this.state.phase === "idle" || this.state.phase === "ready";
  }

  get playEnabled(): boolean {
    return this.state.phase === "ready" && !this.state.deviceBusy;
  }

  get satisfyVisible(): boolean {
    return this.state.phase === "ready";
  }

  private async loadPalette(): Promise<PaletteDoc> {
    if (!this.palette) this.palette = await this.api.getPalette();
    return this.palette;
  }

  private applyTurn(turn: TurnPayload, palette: PaletteDoc): void {
    this.update({
      phase: "ready",
      nodes: buildOrbital(palette, turn),
      justification: turn.justification,
      changesMade: turn.changes_made,
      error: null,
    });
  }

  /** Run one mutation; rejects re-entry while another is in flight. */
  private async mutate(operation: () => Promise<void>): Promise<void> {
    if (this.state.phase === "working") return; // control should be disabled
    const previous = this.state.phase;
    this.update({ phase: "working", error: null });
    try {
      await operation();
      if (this.getState().phase === "working") this.update({ phase: previous });
    } catch (error) {
      const body =
        error instanceof ApiError
          ? { code: error.code, message: error.message }
          : { code: "network", message: String(error) };
      this.update({ phase: previous, error: body });
    }
  }

  async submitText(text: string): Promise<void> {
    if (!this.inputEnabled) return;
    await this.mutate(async () => {
      const palette = await this.loadPalette();
      const response = await this.api.createSession({ text });
      this.update({ sessionId: response.session_id, diff: [] });
      this.applyTurn(response.turn, palette);
    });
  }

  async submitImage(bytes: Uint8Array): Promise<void> {
    if (!this.inputEnabled) return;
    if (bytes.length > MAX_IMAGE_BYTES) {
      // validation stays local: no request is sent for oversized uploads
      this.update({
        error: {
          code: "validation",
          message: `image exceeds ${MAX_IMAGE_BYTES} bytes`,
        },
      });
      return;
    }
    await this.mutate(async () => {
      const palette = await this.loadPalette();
      const response = await this.api.createSession({
        image_base64: encodeBase64(bytes),
      });
      this.update({ sessionId: response.session_id, diff: [] });
      this.applyTurn(response.turn, palette);
    });
  }

  async submitFeedback(feedback: string): Promise<void> {
    const sessionId = this.state.sessionId;
    if (!this.inputEnabled || !sessionId) return;
    await this.mutate(async () => {
      const palette = await this.loadPalette();
      const response = await this.api.refine(sessionId, feedback);
      this.update({ diff: response.diff });
      this.applyTurn(response.turn, palette);
    });
  }

  async play(): Promise<void> {
    const sessionId = this.state.sessionId;
    if (!this.playEnabled || !sessionId) return;
    await this.mutate(async () => {
      try {
        const report = await this.api.play(sessionId);
        this.update({ lastReport: report, deviceBusy: false });
      } catch (error) {
        if (error instanceof ApiError && error.code === "device_busy") {
          this.update({ deviceBusy: true });
          return; // busy is a state, not an error banner
        }
        throw error;
      }
    });
  }

  clearBusy(): void {
    this.update({ deviceBusy: false });
  }

  async markSatisfied(): Promise<void> {
    const sessionId = this.state.sessionId;
    if (!this.satisfyVisible || !sessionId) return;
    await this.mutate(async () => {
      try {
        const response = await this.api.markSatisfied(sessionId);
        this.update({
          phase: "satisfied",
          refinementTurns: response.refinement_turns,
        });
      } catch (error) {
        // already satisfied on the server: converge the UI, don't complain
        if (error instanceof ApiError && error.status === 409) {
          this.update({ phase: "satisfied" });
          return;
        }
        throw error;
      }
    });
  }

  /** Re-sync from the server, e.g. after a refresh mid-cycle. */
  async resync(): Promise<void> {
    const sessionId = this.state.sessionId;
    if (!sessionId) return;
    const palette = await this.loadPalette();
    const session = await this.api.getSession(sessionId);
    const latest = session.turns[session.turns.length - 1];
    if (!latest) return;
    this.applyTurn(latest, palette);
    if (session.status === "satisfied") this.update({ phase: "satisfied" });
  }
}

export function encodeBase64(bytes: Uint8Array): string {
  let binary = "";
  for (const byte of bytes) binary += String.fromCharCode(byte);
  // btoa in the browser; Buffer under node-based tests
  if (typeof btoa === "function") return btoa(binary);
  const nodeBuffer = (
    globalThis as {
      Buffer?: { from(b: Uint8Array): { toString(encoding: string): string } };
    }
  ).Buffer;
  if (!nodeBuffer) throw new Error("no base64 encoder available");
  return nodeBuffer.from(bytes).toString("base64");
}
