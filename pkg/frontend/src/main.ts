/** DOM wiring for the painting studio; all logic lives in the modules. */

import { fetchStylizedFrame, fetchTransport, getStatus, putMask } from "./api.js";
import { browserCodec } from "./browser-codec.js";
import { makeStroke, renderStroke, type StrokePoint } from "./brush.js";
import { CanvasDocument } from "./document.js";
import { KeyframeCommitter, type CommitterState } from "./committer.js";
import { PreviewChannel, previewUrl, type PreviewState } from "./preview.js";
import type { PixelBuffer, Rgb } from "./pixels.js";

function element<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

const sessionInput = element<HTMLInputElement>("session-id");
const keyframeInput = element<HTMLInputElement>("keyframe-index");
const frameCountInput = element<HTMLInputElement>("frame-count");
const fileInput = element<HTMLInputElement>("base-file");
const fetchBaseButton = element<HTMLButtonElement>("fetch-base");
const connectButton = element<HTMLButtonElement>("connect");
const undoButton = element<HTMLButtonElement>("undo");
const maskUploadButton = element<HTMLButtonElement>("upload-mask");
const colorInput = element<HTMLInputElement>("brush-color");
const radiusInput = element<HTMLInputElement>("brush-radius");
const opacityInput = element<HTMLInputElement>("brush-opacity");
const hardnessInput = element<HTMLInputElement>("brush-hardness");
const maskModeInput = element<HTMLInputElement>("mask-mode");
const scrubInput = element<HTMLInputElement>("scrub");
const paintCanvas = element<HTMLCanvasElement>("paint");
const previewImage = element<HTMLImageElement>("preview");
const statusLine = element<HTMLElement>("status-line");
const uploadBadge = element<HTMLElement>("upload-badge");
const staleBadge = element<HTMLElement>("stale-badge");
const previewLine = element<HTMLElement>("preview-line");

let doc: CanvasDocument | null = null;
let committer: KeyframeCommitter | null = null;
let channel: PreviewChannel | null = null;
let previewObjectUrl: string | null = null;
let livePoints: StrokePoint[] | null = null;

function brushColor(): Rgb {
  const hex = colorInput.value;
  return [
    parseInt(hex.slice(1, 3), 16),
    parseInt(hex.slice(3, 5), 16),
    parseInt(hex.slice(5, 7), 16),
  ];
}

function paint(buffer: PixelBuffer): void {
  paintCanvas.width = buffer.width;
  paintCanvas.height = buffer.height;
  const context = paintCanvas.getContext("2d")!;
  context.putImageData(new ImageData(buffer.data, buffer.width, buffer.height), 0, 0);
}

function repaint(): void {
  if (!doc) return;
  const flattened = maskModeInput.checked ? doc.flattenMask() : doc.flatten();
  if (livePoints && livePoints.length > 0) {
    const stroke = currentStroke(livePoints);
    if (stroke) {
      const preview = { ...flattened.buffer, data: new Uint8ClampedArray(flattened.buffer.data) };
      renderStroke(preview, stroke);
      paint(preview);
      return;
    }
  }
  paint(flattened.buffer);
}

function currentStroke(points: StrokePoint[]) {
  if (points.length === 0) return null;
  return makeStroke(
    points,
    maskModeInput.checked ? ([0, 0, 0] as Rgb) : brushColor(),
    Number(radiusInput.value),
    Number(opacityInput.value),
    Number(hardnessInput.value),
  );
}

function canvasPoint(event: PointerEvent): StrokePoint {
  const rect = paintCanvas.getBoundingClientRect();
  return {
    x: ((event.clientX - rect.left) / rect.width) * paintCanvas.width,
    y: ((event.clientY - rect.top) / rect.height) * paintCanvas.height,
  };
}

paintCanvas.addEventListener("pointerdown", (event) => {
  if (!doc) return;
  paintCanvas.setPointerCapture(event.pointerId);
  livePoints = [canvasPoint(event)];
  repaint();
});

paintCanvas.addEventListener("pointermove", (event) => {
  if (!doc || !livePoints) return;
  livePoints.push(canvasPoint(event));
  repaint();
});

paintCanvas.addEventListener("pointerup", () => {
  if (!doc || !livePoints) return;
  const stroke = currentStroke(livePoints);
  livePoints = null;
  if (!stroke) return;
  if (maskModeInput.checked) {
    doc.addMaskStroke(stroke);
  } else {
    doc.addStroke(stroke);
    committer?.commit(doc);
  }
  repaint();
});

undoButton.addEventListener("click", () => {
  if (!doc) return;
  doc.undoStroke();
  committer?.commit(doc);
  repaint();
});

async function loadBase(bytes: Uint8Array): Promise<void> {
  const buffer = await browserCodec.decode(bytes);
  doc = new CanvasDocument(bytes, buffer, {
    sessionId: sessionInput.value,
    keyframeIndex: Number(keyframeInput.value),
  });
  repaint();
}

fileInput.addEventListener("change", async () => {
  const file = fileInput.files?.[0];
  if (file) await loadBase(new Uint8Array(await file.arrayBuffer()));
});

fetchBaseButton.addEventListener("click", async () => {
  try {
    await loadBase(
      await fetchStylizedFrame("", sessionInput.value, Number(keyframeInput.value)),
    );
  } catch (error) {
    statusLine.textContent = String(error);
  }
});

maskUploadButton.addEventListener("click", async () => {
  if (!doc) return;
  try {
    const png = await browserCodec.encode(doc.flattenMask().buffer);
    await putMask(fetchTransport(""), doc.binding.sessionId, doc.binding.keyframeIndex, png);
    doc.maskDirty = false;
    statusLine.textContent = "mask uploaded";
  } catch (error) {
    statusLine.textContent = String(error);
  }
});

function showCommitState(state: CommitterState): void {
  uploadBadge.textContent =
    state.status === "idle" && !state.pending
      ? "synced"
      : `${state.status}${state.lastError ? `: ${state.lastError}` : ""}`;
  uploadBadge.className = state.lastError ? "badge error" : "badge";
}

function showPreview(state: PreviewState): void {
  staleBadge.hidden = !state.stale;
  previewLine.textContent =
    state.frameIndex === null
      ? "waiting for previews"
      : `frame ${state.frameIndex} @ step ${state.step ?? "?"}`;
  if (state.image) {
    const blob = new Blob([state.image as unknown as BlobPart], { type: "image/png" });
    const url = URL.createObjectURL(blob);
    if (previewObjectUrl) URL.revokeObjectURL(previewObjectUrl);
    previewObjectUrl = url;
    previewImage.src = url;
  }
}

connectButton.addEventListener("click", () => {
  const sessionId = sessionInput.value;
  channel?.close();
  committer?.dispose();
  committer = new KeyframeCommitter({
    transport: fetchTransport(""),
    codec: browserCodec,
    onState: showCommitState,
  });
  channel = new PreviewChannel(previewUrl(location.origin, sessionId), {
    onUpdate: showPreview,
  });
  channel.connect();
  scrubInput.max = String(Math.max(0, Number(frameCountInput.value) - 1));
});

scrubInput.addEventListener("input", () => {
  channel?.scrub(Number(scrubInput.value));
});

setInterval(async () => {
  if (!sessionInput.value || !channel) return;
  try {
    const status = await getStatus("", sessionInput.value);
    const loss = status.loss ? ` loss ${status.loss.total.toFixed(4)}` : "";
    statusLine.textContent =
      `${status.running ? "training" : "stopped"} · step ${status.step}${loss}` +
      (status.error ? ` · error: ${status.error}` : "");
  } catch {
    statusLine.textContent = "status unavailable";
  }
}, 1000);
