"""Adapter that drives a third-party segmenter in a child process.

Wire protocol: newline-delimited JSON over the child's stdin/stdout. On
startup the child emits the handshake ``{"protocol": "clickseg-ext",
"version": 1}``. Each request carries an id, image dimensions, and base64
payloads (raw RGB8 image, u8 click maps, f32-LE previous mask); the response
echoes the id with a base64 f32-LE probability map.
"""

from __future__ import annotations

import base64
import json
import queue
import shlex
import subprocess
import threading

import numpy as np

from .core import ProbabilityMap
from .encoding import ModelInput

PROTOCOL_NAME = "clickseg-ext"
PROTOCOL_VERSION = 1

DEFAULT_CALL_TIMEOUT = 30.0


class ExternalSegmenterError(RuntimeError):
    """Base class for failures of the external-process adapter."""


class ExternalProcessExit(ExternalSegmenterError):
    """The child process exited (or never started) mid-conversation."""


class ExternalTimeout(ExternalSegmenterError):
    """The child did not answer within the per-call timeout."""


class ExternalProtocolError(ExternalSegmenterError):
    """The child sent something the protocol does not allow."""


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"))


class ExternalSegmenter:
    """One child process, one in-flight request at a time.

    Distinct adapters (each with its own child) may run in parallel; a single
    adapter serializes its calls internally.
    """

    def __init__(self, command, timeout: float = DEFAULT_CALL_TIMEOUT):
        if isinstance(command, str):
            command = shlex.split(command)
        self.command = list(command)
        self.timeout = timeout
        self._lock = threading.Lock()
        self._next_id = 0
        self._eof = False
        self._lines: queue.Queue[str | None] = queue.Queue()
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
            )
        except OSError as exc:
            raise ExternalProcessExit(f"cannot start {self.command}: {exc}") from exc
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self._handshake()

    def _read_loop(self) -> None:
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF sentinel

    def _next_line(self) -> str:
        if self._eof:
            raise ExternalProcessExit(
                f"child process exited (code {self._proc.poll()})"
            )
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise ExternalTimeout(
                f"no response from child within {self.timeout}s"
            ) from None
        if line is None:
            self._eof = True
            code = self._proc.poll()
            raise ExternalProcessExit(f"child process exited (code {code})")
        return line

    def _handshake(self) -> None:
        try:
            msg = json.loads(self._next_line())
        except json.JSONDecodeError as exc:
            self.close()
            raise ExternalProtocolError(f"handshake is not JSON: {exc}") from exc
        except ExternalSegmenterError:
            self.close()
            raise
        if msg.get("protocol") != PROTOCOL_NAME or msg.get("version") != PROTOCOL_VERSION:
            self.close()
            raise ExternalProtocolError(f"unexpected handshake {msg!r}")

    def predict(self, model_input: ModelInput) -> ProbabilityMap:
        with self._lock:
            if self._eof or self._proc.poll() is not None:
                raise ExternalProcessExit(
                    f"child process already exited (code {self._proc.poll()})"
                )
            self._next_id += 1
            request = {
                "id": self._next_id,
                "width": model_input.width,
                "height": model_input.height,
                "image": _b64(model_input.image.pixels.tobytes()),
                "pos_map": _b64(
                    model_input.click_maps.positive.values.astype(np.uint8).tobytes()
                ),
                "neg_map": _b64(
                    model_input.click_maps.negative.values.astype(np.uint8).tobytes()
                ),
                "prev_mask": _b64(
                    model_input.previous_mask.values.astype("<f4").tobytes()
                ),
            }
            try:
                self._proc.stdin.write(json.dumps(request) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ExternalProcessExit(f"cannot write to child: {exc}") from exc
            return self._parse_response(
                self._next_line(), self._next_id, model_input.width, model_input.height
            )

    def _parse_response(
        self, line: str, request_id: int, width: int, height: int
    ) -> ProbabilityMap:
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ExternalProtocolError(f"response is not JSON: {exc}") from exc
        if msg.get("id") != request_id:
            raise ExternalProtocolError(
                f"response id {msg.get('id')!r} != request id {request_id}"
            )
        if "prob_map" not in msg:
            raise ExternalProtocolError("response lacks prob_map")
        try:
            raw = _unb64(msg["prob_map"])
        except Exception as exc:
            raise ExternalProtocolError(f"prob_map is not base64: {exc}") from exc
        vals = np.frombuffer(raw, dtype="<f4")
        if vals.size != width * height:
            raise ExternalProtocolError(
                f"prob_map has {vals.size} values, expected {width}x{height}"
            )
        vals = vals.reshape(height, width).astype(np.float64)
        if not np.isfinite(vals).all() or (vals < 0).any() or (vals > 1).any():
            raise ExternalProtocolError("prob_map values outside [0, 1]")
        return ProbabilityMap(vals)

    def close(self) -> None:
        proc = getattr(self, "_proc", None)
        if proc is None:
            return
        if proc.poll() is None:
            proc.terminate()
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
        if proc.stdin:
            proc.stdin.close()

    def __enter__(self) -> "ExternalSegmenter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
