"""HTTP/WebSocket service exposing interactive sessions.

Endpoints:
  POST /sessions {frames, masks?, guidance?, keyframes, config} -> {id}
  GET /sessions/{id}/status
  PUT /sessions/{id}/keyframes/{k}/style (PNG body)
  PUT /sessions/{id}/keyframes/{k}/mask (PNG body)
  GET /sessions/{id}/frames/{i}/stylized -> PNG
  GET /sessions/{id}/checkpoint -> zip archive
  POST /sessions/{id}/stop
  WS /sessions/{id}/preview: pushes {"frame", "step", "png"} (base64 PNG);
    accepts {"frame": i} messages to scrub the previewed frame.

Images travel as PNG bodies; everything else is JSON.  When a static
directory is given (the studio bundle), it is served at /.
"""

from __future__ import annotations

import asyncio
import base64
import io
import json
import queue
import tempfile
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Request, Response, WebSocket
from fastapi.staticfiles import StaticFiles
from starlette.websockets import WebSocketDisconnect

from .data import (
    KeyframeSpec,
    Mask,
    array_to_image,
    image_to_array,
    load_keyframe_spec,
    load_keyframes,
    load_sequence,
)
from .errors import PatchstyleError
from .inference import stylize_frame
from .session import Session, run_session
from .training import TrainConfig, save_checkpoint

_POLL_SECONDS = 0.1


def _png_bytes(pixels: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    array_to_image(pixels).save(buffer, format="PNG")
    return buffer.getvalue()


def _decode_png(body: bytes) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(io.BytesIO(body)) as image:
            return image_to_array(image)
    except Exception as exc:
        raise HTTPException(status_code=400, detail=f"invalid PNG body: {exc}") from exc


def create_app(static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="patchstyle")
    app.state.sessions = {}

    def get_session(session_id: str) -> Session:
        session = app.state.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return session

    @app.exception_handler(PatchstyleError)
    async def domain_error(request: Request, exc: PatchstyleError):
        return Response(
            content=json.dumps({"detail": str(exc)}),
            status_code=400,
            media_type="application/json",
        )

    @app.post("/sessions")
    async def create_session(payload: dict = Body(...)):
        frames_dir = payload.get("frames")
        if not frames_dir:
            raise HTTPException(status_code=400, detail="missing 'frames' directory")
        sequence = load_sequence(frames_dir, payload.get("masks"), payload.get("guidance"))
        keyframes_field = payload.get("keyframes")
        if isinstance(keyframes_field, str):
            specs = load_keyframe_spec(keyframes_field)
        elif isinstance(keyframes_field, list) and keyframes_field:
            specs = [
                KeyframeSpec(
                    index=int(entry["index"]),
                    style=Path(entry["style"]),
                    mask=Path(entry["mask"]) if entry.get("mask") else None,
                )
                for entry in keyframes_field
            ]
        else:
            raise HTTPException(status_code=400, detail="missing 'keyframes' spec")
        keyframes = load_keyframes(sequence, specs)
        config = TrainConfig.from_json_dict(payload.get("config") or {})
        session = run_session(sequence, keyframes, config)
        app.state.sessions[session.id] = session
        return {"id": session.id}

    @app.get("/sessions/{session_id}/status")
    async def status(session_id: str):
        return get_session(session_id).status()

    @app.put("/sessions/{session_id}/keyframes/{index}/style")
    async def put_style(session_id: str, index: int, request: Request):
        session = get_session(session_id)
        pixels = _decode_png(await request.body())
        session.update_keyframe_style(index, pixels)
        return {"ok": True, "keyframe": index}

    @app.put("/sessions/{session_id}/keyframes/{index}/mask")
    async def put_mask(session_id: str, index: int, request: Request):
        session = get_session(session_id)
        pixels = _decode_png(await request.body())
        bits = (pixels.mean(axis=2) * 255.0) >= 128
        session.update_keyframe_mask(index, Mask(bits).bits)
        return {"ok": True, "keyframe": index}

    @app.get("/sessions/{session_id}/frames/{index}/stylized")
    async def stylized(session_id: str, index: int):
        session = get_session(session_id)
        checkpoint = session.latest_checkpoint
        if checkpoint is None:
            raise HTTPException(status_code=503, detail="no checkpoint emitted yet")
        if not 0 <= index < len(session.sequence):
            raise HTTPException(status_code=404, detail=f"frame {index} outside sequence")
        frame = session.sequence.frames[index]
        guidance = session.sequence.guidance[index] if session.sequence.guidance else None
        result = await asyncio.to_thread(stylize_frame, checkpoint, frame, guidance)
        return Response(content=_png_bytes(result.pixels), media_type="image/png")

    @app.get("/sessions/{session_id}/checkpoint")
    async def checkpoint(session_id: str):
        session = get_session(session_id)
        snapshot = session.latest_checkpoint
        if snapshot is None:
            raise HTTPException(status_code=503, detail="no checkpoint emitted yet")
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "checkpoint.zip"
            save_checkpoint(snapshot, path)
            body = path.read_bytes()
        return Response(content=body, media_type="application/zip")

    @app.post("/sessions/{session_id}/stop")
    async def stop(session_id: str):
        session = get_session(session_id)
        await asyncio.to_thread(session.stop)
        return {"ok": True, "running": session.running}

    @app.websocket("/sessions/{session_id}/preview")
    async def preview(websocket: WebSocket, session_id: str):
        session = app.state.sessions.get(session_id)
        if session is None:
            await websocket.close(code=1008)
            return
        await websocket.accept()
        sink = session.subscribe()

        def poll():
            try:
                return sink.get(timeout=_POLL_SECONDS)
            except queue.Empty:
                return None

        recv_task = asyncio.create_task(websocket.receive_json())
        try:
            while True:
                poll_task = asyncio.create_task(asyncio.to_thread(poll))
                await asyncio.wait({recv_task, poll_task}, return_when=asyncio.FIRST_COMPLETED)
                if recv_task.done():
                    try:
                        message = recv_task.result()
                    except (WebSocketDisconnect, RuntimeError):
                        poll_task.cancel()
                        return
                    if isinstance(message, dict) and "frame" in message:
                        try:
                            session.set_preview_frame(int(message["frame"]))
                        except (PatchstyleError, ValueError) as exc:
                            await websocket.send_json({"error": str(exc)})
                    recv_task = asyncio.create_task(websocket.receive_json())
                update = await poll_task
                if update is not None:
                    await websocket.send_json(
                        {
                            "frame": update.frame_index,
                            "step": update.step,
                            "png": base64.b64encode(_png_bytes(update.pixels)).decode(),
                        }
                    )
        except WebSocketDisconnect:
            pass
        finally:
            session.unsubscribe(sink)
            recv_task.cancel()

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="studio")

    return app
