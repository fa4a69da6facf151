/** Thin fetch-based client for the orchestrator's HTTP API. */

import { maskPath, type Transport, type TransportReply } from "./committer.js";

export interface SessionStatus {
  id: string;
  running: boolean;
  step: number;
  elapsed_seconds: number;
  loss: { l1: number; adv_g: number; adv_d: number; perceptual: number; total: number } | null;
  preview_frame: number;
  keyframes: number[];
  error: string | null;
}

export function fetchTransport(baseUrl = ""): Transport {
  return {
    async put(path: string, body: Uint8Array): Promise<TransportReply> {
      const response = await fetch(baseUrl + path, {
        method: "PUT",
        headers: { "content-type": "image/png" },
        body: body as unknown as BodyInit,
      });
      return { ok: response.ok, status: response.status };
    },
  };
}

export async function getStatus(baseUrl: string, sessionId: string): Promise<SessionStatus> {
  const response = await fetch(`${baseUrl}/sessions/${sessionId}/status`);
  if (!response.ok) throw new Error(`status request failed: ${response.status}`);
  return (await response.json()) as SessionStatus;
}

export async function fetchStylizedFrame(
  baseUrl: string,
  sessionId: string,
  frameIndex: number,
): Promise<Uint8Array> {
  const response = await fetch(`${baseUrl}/sessions/${sessionId}/frames/${frameIndex}/stylized`);
  if (!response.ok) throw new Error(`stylized frame not ready: ${response.status}`);
  return new Uint8Array(await response.arrayBuffer());
}

export async function putMask(
  transport: Transport,
  sessionId: string,
  keyframeIndex: number,
  png: Uint8Array,
): Promise<void> {
  const reply = await transport.put(maskPath(sessionId, keyframeIndex), png);
  if (!reply.ok) throw new Error(`mask upload rejected with status ${reply.status}`);
}
