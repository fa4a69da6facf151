import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { PreviewChannel, previewUrl, type PreviewState } from "../src/preview.js";
import { buffersEqual } from "../src/pixels.js";
import { gradientBuffer, MockSocket, nodeCodec, pngBase64 } from "./helpers.js";

describe("PreviewChannel", () => {
  let sockets: MockSocket[];
  let updates: PreviewState[];

  function makeChannel(options: Record<string, unknown> = {}): PreviewChannel {
    return new PreviewChannel("ws://test/sessions/s1/preview", {
      makeSocket: () => {
        const socket = new MockSocket();
        sockets.push(socket);
        return socket;
      },
      onUpdate: (state) => updates.push(state),
      ...options,
    });
  }

  beforeEach(() => {
    vi.useFakeTimers();
    vi.setSystemTime(0);
    sockets = [];
    updates = [];
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("derives the push URL from the HTTP origin", () => {
    expect(previewUrl("http://localhost:8000", "abc")).toBe(
      "ws://localhost:8000/sessions/abc/preview",
    );
    expect(previewUrl("https://studio.example", "abc")).toBe(
      "wss://studio.example/sessions/abc/preview",
    );
  });

  it("renders every push from a 2 Hz backend", () => {
    const channel = makeChannel();
    channel.connect();
    sockets[0].open();
    const frame = gradientBuffer(8, 8);
    for (let i = 1; i <= 6; i += 1) {
      vi.advanceTimersByTime(500);
      sockets[0].push({ frame: 0, step: i, png: pngBase64(frame) });
    }
    const state = channel.snapshot();
    expect(state.updatesReceived).toBe(6);
    expect(state.stale).toBe(false);
    expect(state.step).toBe(6);
  });

  it("decodes pushed previews into frame, step, and image", () => {
    const channel = makeChannel();
    channel.connect();
    sockets[0].open();
    const frame = gradientBuffer(12, 10);
    sockets[0].push({ frame: 7, step: 42, png: pngBase64(frame) });

    const state = channel.snapshot();
    expect(state.frameIndex).toBe(7);
    expect(state.step).toBe(42);
    expect(state.imageSize).toEqual({ width: 12, height: 10 });
    expect(buffersEqual(nodeCodec.decode(state.image!), frame)).toBe(true);
  });

  it("scrubs over the live socket without reconnecting", () => {
    const channel = makeChannel();
    channel.connect();
    sockets[0].open();
    channel.scrub(9);
    expect(sockets[0].sent).toContain(JSON.stringify({ frame: 9 }));
    sockets[0].push({ frame: 9, step: 1, png: pngBase64(gradientBuffer(4, 4)) });
    const state = channel.snapshot();
    expect(state.frameIndex).toBe(9);
    expect(state.scrubPosition).toBe(9);
    expect(state.socketsOpened).toBe(1);
  });

  it("replays a scrub requested before the socket opened", () => {
    const channel = makeChannel();
    channel.connect();
    channel.scrub(4);
    expect(sockets[0].sent).toHaveLength(0);
    sockets[0].open();
    expect(sockets[0].sent).toContain(JSON.stringify({ frame: 4 }));
  });

  it("raises the stale badge within the timeout when the backend is silent", () => {
    const channel = makeChannel();
    channel.connect();
    sockets[0].open();
    vi.advanceTimersByTime(2999);
    expect(channel.snapshot().stale).toBe(false);
    vi.advanceTimersByTime(1);
    expect(channel.snapshot().stale).toBe(true);

    sockets[0].push({ frame: 0, step: 1, png: pngBase64(gradientBuffer(4, 4)) });
    expect(channel.snapshot().stale).toBe(false);
  });

  it("goes stale even when the backend never accepts the connection", () => {
    const channel = makeChannel();
    channel.connect();
    vi.advanceTimersByTime(3000);
    expect(channel.snapshot().stale).toBe(true);
  });

  it("reconnects with backoff after a drop and re-requests the scrubbed frame", () => {
    const channel = makeChannel();
    channel.connect();
    sockets[0].open();
    channel.scrub(2);
    sockets[0].drop();
    expect(channel.snapshot().connected).toBe(false);

    vi.advanceTimersByTime(499);
    expect(sockets).toHaveLength(1);
    vi.advanceTimersByTime(1);
    expect(sockets).toHaveLength(2);
    sockets[1].open();
    expect(sockets[1].sent).toContain(JSON.stringify({ frame: 2 }));
    expect(channel.snapshot().connected).toBe(true);
    expect(channel.snapshot().socketsOpened).toBe(2);
  });

  it("rejects previews whose dimensions do not match the sequence", () => {
    const channel = makeChannel({ expectedSize: { width: 8, height: 8 } });
    channel.connect();
    sockets[0].open();
    sockets[0].push({ frame: 0, step: 1, png: pngBase64(gradientBuffer(4, 4)) });
    const state = channel.snapshot();
    expect(state.updatesReceived).toBe(0);
    expect(state.image).toBeNull();
    expect(state.lastError).toContain("4x4");
  });

  it("surfaces server error payloads and keeps the channel alive", () => {
    const channel = makeChannel();
    channel.connect();
    sockets[0].open();
    sockets[0].push({ error: "unknown frame" });
    expect(channel.snapshot().lastError).toBe("unknown frame");
    sockets[0].push({ frame: 1, step: 2, png: pngBase64(gradientBuffer(4, 4)) });
    expect(channel.snapshot().updatesReceived).toBe(1);
    expect(channel.snapshot().lastError).toBeNull();
  });

  it("tolerates malformed messages", () => {
    const channel = makeChannel();
    channel.connect();
    sockets[0].open();
    sockets[0].onmessage?.({ data: "not json" });
    expect(channel.snapshot().lastError).toBe("malformed preview message");
  });

  it("close() stops reconnection for good", () => {
    const channel = makeChannel();
    channel.connect();
    sockets[0].open();
    channel.close();
    expect(sockets[0].closed).toBe(true);
    vi.advanceTimersByTime(60000);
    expect(sockets).toHaveLength(1);
  });
});
