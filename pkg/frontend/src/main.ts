/** DOM wiring for the single-page client.
 *
 * All behavior lives in App (state.ts); this file only maps state to
 * elements and element events to App methods.
 */

import { ApiClient } from "./api.js";
import { App } from "./state.js";
import { totalSeconds } from "./orbital.js";

const RING_RADIUS = 160;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function mount(root: HTMLElement, baseUrl: string): App {
  const app = new App(new ApiClient(baseUrl));

  const textInput = el("input");
  textInput.placeholder = "Describe a food or drink…";
  const generateButton = el("button", "", "Generate");
  const feedbackInput = el("input");
  feedbackInput.placeholder = "Feedback, e.g. “less sweet”";
  const refineButton = el("button", "", "Refine");
  const playButton = el("button", "", "Play on Device");
  const satisfyButton = el("button", "", "Satisfied");
  const imageInput = el("input");
  imageInput.type = "file";
  imageInput.accept = "image/*";

  const ring = el("div", "ring");
  ring.style.position = "relative";
  const justification = el("p", "justification");
  const status = el("p", "status");
  const errorBanner = el("p", "error");

  root.append(
    textInput, imageInput, generateButton,
    ring, justification,
    feedbackInput, refineButton,
    playButton, satisfyButton,
    status, errorBanner,
  );

  generateButton.onclick = () => void app.submitText(textInput.value);
  refineButton.onclick = () => void app.submitFeedback(feedbackInput.value);
  playButton.onclick = () => void app.play();
  satisfyButton.onclick = () => void app.markSatisfied();
  imageInput.onchange = async () => {
    const file = imageInput.files?.[0];
    if (!file) return;
    const bytes = new Uint8Array(await file.arrayBuffer());
    void app.submitImage(bytes);
  };

  app.subscribe((state) => {
    const lock = !app.inputEnabled;
    textInput.disabled = lock;
    imageInput.disabled = lock;
    generateButton.disabled = lock;
    feedbackInput.disabled = lock || state.sessionId === null;
    refineButton.disabled = lock || state.sessionId === null;
    playButton.disabled = !app.playEnabled;
    satisfyButton.hidden = !app.satisfyVisible;

    ring.replaceChildren();
    const changed = new Set(state.diff.map((entry) => entry.name));
    for (const node of state.nodes) {
      const item = el(
        "div",
        changed.has(node.name) ? "node changed" : "node",
        `${node.name} ${node.ratio} · ${node.durationSeconds.toFixed(1)} s`,
      );
      item.style.position = "absolute";
      item.style.left = `${RING_RADIUS + RING_RADIUS * Math.cos(node.angleRadians)}px`;
      item.style.top = `${RING_RADIUS + RING_RADIUS * Math.sin(node.angleRadians)}px`;
      item.style.borderColor = node.color;
      ring.append(item);
    }
    if (state.nodes.length > 0) {
      ring.title = `cycle: ${totalSeconds(state.nodes).toFixed(0)} s`;
    }

    justification.textContent = state.justification ?? "";
    if (state.phase === "satisfied") {
      status.textContent =
        state.refinementTurns === null
          ? "Session closed."
          : `Session closed after ${state.refinementTurns} refinement turn(s).`;
    } else if (state.deviceBusy) {
      status.textContent = "Device busy — a cycle is already running.";
    } else if (state.lastReport) {
      status.textContent = `Dispensed ${state.lastReport.total_ms / 1000} s over ${state.lastReport.steps.length} step(s).`;
    } else {
      status.textContent = "";
    }
    errorBanner.textContent = state.error
      ? `${state.error.code}: ${state.error.message}`
      : "";
  });

  return app;
}

declare global {
  interface Window {
    AROMA_API_BASE?: string;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mount(
    document.getElementById("app") as HTMLElement,
    window.AROMA_API_BASE ?? "http://127.0.0.1:8000",
  );
}
