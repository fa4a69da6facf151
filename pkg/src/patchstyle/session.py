"""Interactive training sessions for the service layer.

A session owns exactly one training thread.  Checkpoints emitted by the
trainer are stored as immutable snapshots; each emission also re-stylizes
the current preview frame and broadcasts it to subscriber queues.  Keyframe
updates swap the training target warm (no weight reset) and are recorded as
history events by the trainer.
"""

from __future__ import annotations

import math
import queue
import threading
import uuid
from dataclasses import dataclass, replace

import numpy as np

from .data import Frame, Keyframe, Mask, Sequence
from .errors import ConfigError, PairingError
from .inference import stylize_frame
from .training import Checkpoint, TrainConfig, train

_QUEUE_CAPACITY = 8


@dataclass
class PreviewUpdate:
    """One pushed preview: the stylized frame at a training step."""

    frame_index: int
    step: int
    pixels: np.ndarray


class _Control:
    """Adapter handing keyframe swaps and stop requests to the train loop."""

    def __init__(self, session: "Session"):
        self._session = session

    def poll(self):
        return self._session._take_pending_keyframes()

    def should_stop(self) -> bool:
        return self._session._stop.is_set()


class Session:
    """One sequence + mutable keyframes + at most one training loop."""

    def __init__(self, sequence: Sequence, keyframes: list[Keyframe], config: TrainConfig):
        if not keyframes:
            raise ConfigError("session needs at least one keyframe")
        if config.budget_steps is not None:
            raise ConfigError("sessions run on wall-clock budgets (use budget_seconds)")
        self.id = uuid.uuid4().hex[:12]
        self.sequence = sequence
        self.config = config
        self._keyframes = list(keyframes)
        self._pending_keyframes: list[Keyframe] | None = None
        self._latest: Checkpoint | None = None
        self._preview_index = keyframes[0].index
        self._subscribers: list[queue.Queue] = []
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._error: str | None = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        with self._lock:
            if self._thread is not None and self._thread.is_alive():
                raise ConfigError(f"session {self.id} already has a training loop")
            self._stop.clear()
            self._thread = threading.Thread(target=self._run, name=f"train-{self.id}", daemon=True)
            self._thread.start()

    def stop(self, timeout: float = 60.0) -> None:
        self._stop.set()
        thread = self._thread
        if thread is not None:
            thread.join(timeout=timeout)

    @property
    def running(self) -> bool:
        thread = self._thread
        return thread is not None and thread.is_alive()

    def _run(self) -> None:
        try:
            with self._lock:
                keyframes = list(self._keyframes)
            train(keyframes, self.config, checkpoint_sink=self._on_checkpoint, control=_Control(self))
        except Exception as exc:  # noqa: BLE001 - surfaced through status
            self._error = f"{type(exc).__name__}: {exc}"

    # -- trainer callbacks -------------------------------------------------

    def _take_pending_keyframes(self):
        with self._lock:
            pending = self._pending_keyframes
            self._pending_keyframes = None
            return pending

    def _on_checkpoint(self, checkpoint: Checkpoint) -> None:
        with self._lock:
            self._latest = checkpoint
            preview_index = self._preview_index
            subscribers = list(self._subscribers)
        if not subscribers:
            return
        frame = self.sequence.frames[preview_index]
        guidance = self.sequence.guidance[preview_index] if self.sequence.guidance else None
        stylized = stylize_frame(checkpoint, frame, guidance=guidance)
        update = PreviewUpdate(frame_index=preview_index, step=checkpoint.step, pixels=stylized.pixels)
        for sink in subscribers:
            try:
                sink.put_nowait(update)
            except queue.Full:
                try:
                    sink.get_nowait()  # drop the oldest preview
                except queue.Empty:
                    pass
                try:
                    sink.put_nowait(update)
                except queue.Full:
                    pass

    # -- interaction -------------------------------------------------------

    @property
    def latest_checkpoint(self) -> Checkpoint | None:
        with self._lock:
            return self._latest

    def keyframe(self, index: int) -> Keyframe:
        with self._lock:
            for keyframe in self._keyframes:
                if keyframe.index == index:
                    return keyframe
        raise PairingError(f"session has no keyframe {index}")

    def update_keyframe_style(self, index: int, style_pixels: np.ndarray) -> None:
        """Replaces one keyframe's style target; training continues warm."""
        with self._lock:
            keyframes = list(self._keyframes)
        found = False
        for i, keyframe in enumerate(keyframes):
            if keyframe.index == index:
                style = Frame(index=index, pixels=style_pixels.astype(np.float32))
                keyframes[i] = replace(keyframe, style=style)
                found = True
        if not found:
            raise PairingError(f"session has no keyframe {index}")
        with self._lock:
            self._keyframes = keyframes
            self._pending_keyframes = keyframes

    def update_keyframe_mask(self, index: int, bits: np.ndarray) -> None:
        with self._lock:
            keyframes = list(self._keyframes)
        found = False
        for i, keyframe in enumerate(keyframes):
            if keyframe.index == index:
                keyframes[i] = replace(keyframe, mask=Mask(bits.astype(bool)))
                found = True
        if not found:
            raise PairingError(f"session has no keyframe {index}")
        with self._lock:
            self._keyframes = keyframes
            self._pending_keyframes = keyframes

    def set_preview_frame(self, index: int) -> None:
        if not 0 <= index < len(self.sequence):
            raise PairingError(f"frame {index} outside sequence")
        with self._lock:
            self._preview_index = index

    def subscribe(self) -> queue.Queue:
        sink: queue.Queue = queue.Queue(maxsize=_QUEUE_CAPACITY)
        with self._lock:
            self._subscribers.append(sink)
        return sink

    def unsubscribe(self, sink: queue.Queue) -> None:
        with self._lock:
            if sink in self._subscribers:
                self._subscribers.remove(sink)

    def status(self) -> dict:
        with self._lock:
            latest = self._latest
            preview = self._preview_index
            keyframes = [k.index for k in self._keyframes]
        last_row = latest.history.rows[-1] if latest and latest.history.rows else None
        return {
            "id": self.id,
            "running": self.running,
            "step": latest.step if latest else 0,
            "elapsed_seconds": latest.elapsed_seconds if latest else 0.0,
            "loss": (
                {
                    "l1": last_row.l1,
                    "adv_g": last_row.adv_g,
                    "adv_d": last_row.adv_d,
                    "perceptual": last_row.perceptual,
                    "total": last_row.total,
                }
                if last_row
                else None
            ),
            "preview_frame": preview,
            "keyframes": keyframes,
            "events": list(latest.history.events) if latest else [],
            "error": self._error,
        }


def run_session(sequence: Sequence, keyframes: list[Keyframe], config: TrainConfig) -> Session:
    """Creates and starts an interactive session (unbounded unless budgeted)."""
    if config.budget_seconds is None:
        config = replace(config, budget_steps=None, budget_seconds=math.inf)
    session = Session(sequence, keyframes, config)
    session.start()
    return session
