"""Client for detectors living behind the line-delimited JSON protocol.

One request per connection: the client sends a single JSON object holding
the base64 PNG crop and segment metadata, reads one JSON line back, and
validates the echo, the box bounds, and the probability range before
handing boxes to the ensemble.
"""

from __future__ import annotations

import itertools
import json
import socket
from urllib.parse import urlparse

from .detection import DetBox, DetectorContract, FRAME_REGION
from .image import RasterImage
from .io import encode_png_base64

DEFAULT_TIMEOUT = 30.0
_MAX_LINE = 64 * 1024 * 1024  # refuse unbounded responses


class DetectorError(RuntimeError):
    """The external detector failed, timed out, or broke the protocol."""


def parse_endpoint(url: str) -> tuple[str, int]:
    parsed = urlparse(url)
    if parsed.scheme != "tcp" or not parsed.hostname or not parsed.port:
        raise ValueError(f"expected tcp://host:port, got {url!r}")
    return parsed.hostname, parsed.port


class ExternalDetector(DetectorContract):
    """Ensemble member that forwards crops to a remote detector service."""

    concurrent_safe = True  # fresh connection per request

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        self.host, self.port = parse_endpoint(endpoint)
        self.endpoint = endpoint
        self.timeout = timeout
        self._counter = itertools.count()

    def detect(self, region: RasterImage, segment_id: str = "seg-0") -> list[DetBox]:
        request = {
            "request_id": f"{segment_id}#{next(self._counter)}",
            "image": encode_png_base64(region),
            "meta": {
                "segment_id": segment_id,
                "width": region.width,
                "height": region.height,
            },
        }
        reply = self._roundtrip(request)
        return self._parse_boxes(reply, request, region)

    def _roundtrip(self, request: dict) -> dict:
        payload = (json.dumps(request) + "\n").encode("utf-8")
        try:
            with socket.create_connection(
                (self.host, self.port), timeout=self.timeout
            ) as conn:
                conn.settimeout(self.timeout)
                conn.sendall(payload)
                line = self._read_line(conn)
        except (OSError, socket.timeout) as exc:
            raise DetectorError(f"{self.endpoint}: {exc}") from exc
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DetectorError(f"{self.endpoint}: invalid JSON reply") from exc
        if not isinstance(reply, dict):
            raise DetectorError(f"{self.endpoint}: reply is not an object")
        return reply

    def _read_line(self, conn: socket.socket) -> bytes:
        chunks = []
        total = 0
        while True:
            chunk = conn.recv(65536)
            if not chunk:
                raise DetectorError(f"{self.endpoint}: connection closed mid-reply")
            chunks.append(chunk)
            total += len(chunk)
            if b"\n" in chunk:
                break
            if total > _MAX_LINE:
                raise DetectorError(f"{self.endpoint}: oversized reply")
        return b"".join(chunks).split(b"\n", 1)[0]

    def _parse_boxes(
        self, reply: dict, request: dict, region: RasterImage
    ) -> list[DetBox]:
        if reply.get("request_id") != request["request_id"]:
            raise DetectorError(f"{self.endpoint}: request_id echo mismatch")
        if reply.get("error") is not None:
            if reply.get("boxes"):
                raise DetectorError(
                    f"{self.endpoint}: reply carries both boxes and an error"
                )
            raise DetectorError(f"{self.endpoint}: {reply['error']}")
        boxes = reply.get("boxes")
        if not isinstance(boxes, list):
            raise DetectorError(f"{self.endpoint}: reply has no box list")
        out: list[DetBox] = []
        for i, bx in enumerate(boxes):
            try:
                x1, y1 = float(bx["x1"]), float(bx["y1"])
                x2, y2 = float(bx["x2"]), float(bx["y2"])
                prob = float(bx["prob"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DetectorError(
                    f"{self.endpoint}: malformed box {i}: {bx!r}"
                ) from exc
            if not (0 <= x1 <= x2 <= region.width and 0 <= y1 <= y2 <= region.height):
                raise DetectorError(
                    f"{self.endpoint}: box {i} outside the region extent"
                )
            if not 0.0 <= prob <= 1.0:
                raise DetectorError(f"{self.endpoint}: box {i} prob out of range")
            out.append(DetBox(x1, y1, x2, y2, prob=prob, frame=FRAME_REGION))
        return out
