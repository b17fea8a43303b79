"""Depth maps: storage, alignment checks and depth sources.

A depth map is a ``float64`` array of shape ``(H, W)`` holding relative depth
in ``[0, 1]``.  On disk it is a 16-bit single-channel PNG with
``q = floor(v * 65535 + 0.5)``.

Three depth sources are supported through :class:`DepthBackendSpec`:

``synthetic``
    :func:`synthetic_depth_oracle`, a deterministic stand-in for a monocular
    estimator.  Dividing luminance by its mean makes it insensitive to a
    global exposure change as long as nothing saturates.
``precomputed``
    16-bit PNGs already on disk.
``external``
    A child process speaking the framed binary protocol below.

Wire protocol (version 1), over the child's stdin/stdout::

    message  := length:u32be type:u8 payload      (length = 1 + len(payload))
    HELLO 01 := version:u8 model_variant:utf8
    FRAME 02 := frame_id:u32be width:u32be height:u32be rgb8[height*width*3]
    DEPTH 03 := frame_id:u32be depth:u16be[height*width]
    ERROR 7F := message:utf8

The client sends HELLO and expects a HELLO echoing version 1.  Frames are then
sent one at a time; each FRAME must be answered by a DEPTH with the same id
(or an ERROR) within the per-frame timeout.
"""

from __future__ import annotations

import io
import os
import select
import shlex
import struct
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import uniform_filter

from augpipe.errors import (
    AlignmentError,
    BackendTimeout,
    ConfigError,
    FormatError,
    InvalidParameterError,
    ProtocolError,
    ShapeError,
)
from augpipe.imagecore import as_rgb, exact_mean, luminance, to_uint8

DEPTH_SCALE = 65535
PROTOCOL_VERSION = 1

MSG_HELLO = 0x01
MSG_FRAME = 0x02
MSG_DEPTH = 0x03
MSG_ERROR = 0x7F

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
# a constant luminance may pick up rounding noise in the blur; below this
# relative spread the map is treated as flat
_FLAT_RTOL = 1e-12


def as_depth(d) -> np.ndarray:
    arr = np.ascontiguousarray(d, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected an (H, W) depth map, got shape {arr.shape}")
    if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0):
        raise InvalidParameterError("depth values must lie in [0, 1]")
    return arr


def verify_alignment(rgb, depth, frame_index=None, view=None) -> None:
    """Raise :class:`AlignmentError` unless ``rgb`` and ``depth`` share H and W."""
    rgb_shape = np.shape(rgb)[:2]
    depth_shape = np.shape(depth)
    where = ""
    if view is not None or frame_index is not None:
        where = f" (view {view}, frame {frame_index})"
    if len(rgb_shape) < 2 or 0 in rgb_shape or len(depth_shape) != 2 or 0 in depth_shape:
        raise AlignmentError(
            f"degenerate shapes rgb={tuple(rgb_shape)} depth={tuple(depth_shape)}{where}", frame_index, view
        )
    if tuple(rgb_shape) != tuple(depth_shape):
        raise AlignmentError(
            f"rgb is {rgb_shape[0]}x{rgb_shape[1]} (HxW) but depth is {depth_shape[0]}x{depth_shape[1]}{where}",
            frame_index,
            view,
        )


# -- 16-bit PNG --------------------------------------------------------------


def quantize_depth(d) -> np.ndarray:
    return np.floor(as_depth(d) * DEPTH_SCALE + 0.5).astype(np.uint16)


def encode_depth_png16(d) -> bytes:
    q = quantize_depth(d)
    if q.size == 0:
        raise ShapeError("cannot encode an empty depth map")
    buf = io.BytesIO()
    Image.fromarray(q).save(buf, format="PNG")
    return buf.getvalue()


def _png_header(data: bytes):
    if len(data) < 33 or not data.startswith(_PNG_SIGNATURE) or data[12:16] != b"IHDR":
        raise FormatError("not a PNG file")
    width, height, bit_depth, color_type = struct.unpack(">IIBB", data[16:26])
    return width, height, bit_depth, color_type


def decode_depth_png16(data: bytes) -> np.ndarray:
    width, height, bit_depth, color_type = _png_header(data)
    if color_type != 0:
        raise FormatError(f"depth PNG must be single-channel grayscale (color type {color_type})")
    if bit_depth != 16:
        raise FormatError(f"depth PNG must be 16-bit, got {bit_depth}-bit")
    try:
        im = Image.open(io.BytesIO(data))
        im.load()
    except Exception as exc:
        raise FormatError(f"cannot decode depth PNG: {exc}") from exc
    q = np.asarray(im).astype(np.uint16)
    if q.shape != (height, width):
        raise FormatError(f"decoded shape {q.shape} disagrees with header {height}x{width}")
    return q.astype(np.float64) / DEPTH_SCALE


def read_depth_png(path) -> np.ndarray:
    path = Path(path)
    try:
        return decode_depth_png16(path.read_bytes())
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_depth_png(path, d) -> None:
    Path(path).write_bytes(encode_depth_png16(d))


# -- synthetic oracle --------------------------------------------------------


def synthetic_depth_oracle(img, blur_radius: int = 2) -> np.ndarray:
    """Exposure-normalized, box-blurred, min-max scaled luminance.

    A constant image has no structure and maps to all zeros.
    """
    if blur_radius < 0 or int(blur_radius) != blur_radius:
        raise InvalidParameterError(f"blur_radius must be a non-negative integer, got {blur_radius!r}")
    x = as_rgb(img)
    lum = luminance(x)
    m = exact_mean(lum)
    if m <= 0.0 or lum.max() == lum.min():
        return np.zeros(lum.shape)
    rel = lum / m
    if blur_radius:
        rel = uniform_filter(rel, size=2 * int(blur_radius) + 1, mode="nearest")
    lo, hi = rel.min(), rel.max()
    if hi - lo <= _FLAT_RTOL * hi:
        return np.zeros(lum.shape)
    return np.clip((rel - lo) / (hi - lo), 0.0, 1.0)


# -- backends ----------------------------------------------------------------

SYNTHETIC = "synthetic"
PRECOMPUTED = "precomputed"
EXTERNAL = "external"


@dataclass(frozen=True)
class DepthBackendSpec:
    """Where depth maps come from.

    ``model_variant`` is a free-form tag recorded with the run (for instance
    a heavier variant for offline preprocessing and a lighter one for
    inference); for external backends it is sent in the handshake.
    """

    kind: str = SYNTHETIC
    directory: str | None = None
    command: tuple | str | None = None
    model_variant: str = ""
    blur_radius: int = 2
    timeout: float = 30.0

    def __post_init__(self):
        if self.kind == SYNTHETIC:
            if self.directory is not None or self.command is not None:
                raise ConfigError("synthetic backend takes neither directory nor command")
            if self.blur_radius < 0:
                raise ConfigError("blur_radius must be >= 0")
        elif self.kind == PRECOMPUTED:
            if self.directory is None or self.command is not None:
                raise ConfigError("precomputed backend needs a directory and no command")
        elif self.kind == EXTERNAL:
            if self.command is None or self.directory is not None:
                raise ConfigError("external backend needs a command and no directory")
            if not self.timeout > 0:
                raise ConfigError("timeout must be positive")
        else:
            raise ConfigError(f"unknown depth backend kind {self.kind!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "DepthBackendSpec":
        d = dict(d)
        known = {"kind", "directory", "command", "model_variant", "blur_radius", "timeout"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown depth keys: {sorted(unknown)}")
        if isinstance(d.get("command"), list):
            d["command"] = tuple(d["command"])
        return cls(**d)

    def argv(self) -> list[str]:
        if isinstance(self.command, str):
            return shlex.split(self.command)
        return list(self.command)


def _frame_payload(frame_id: int, img: np.ndarray) -> bytes:
    h, w, _ = img.shape
    return struct.pack(">III", frame_id, w, h) + to_uint8(img).tobytes()


def pack_message(msg_type: int, payload: bytes = b"") -> bytes:
    return struct.pack(">IB", len(payload) + 1, msg_type) + payload


def read_message(stream) -> tuple[int, bytes]:
    """Blocking read of one message from a binary file object."""
    header = _read_exact(stream.read, 5)
    length, msg_type = struct.unpack(">IB", header)
    if length < 1:
        raise ProtocolError(f"bad message length {length}")
    return msg_type, _read_exact(stream.read, length - 1)


def _read_exact(read, n: int) -> bytes:
    chunks = []
    while n:
        chunk = read(n)
        if not chunk:
            raise ProtocolError("unexpected end of stream")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


class ExternalDepthBackend:
    """Client side of the depth wire protocol.  Use as a context manager."""

    def __init__(self, spec: DepthBackendSpec):
        if spec.kind != EXTERNAL:
            raise ConfigError("ExternalDepthBackend needs an external backend spec")
        self.spec = spec
        self.proc = None
        self.server_variant = None

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.close()

    def start(self):
        try:
            self.proc = subprocess.Popen(
                self.spec.argv(),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
                bufsize=0,
            )
        except OSError as exc:
            raise ProtocolError(f"cannot start depth backend {self.spec.command!r}: {exc}") from exc
        self._send(MSG_HELLO, bytes([PROTOCOL_VERSION]) + self.spec.model_variant.encode("utf-8"))
        msg_type, payload = self._recv(self.spec.timeout, "handshake")
        if msg_type == MSG_ERROR:
            raise ProtocolError(f"backend refused handshake: {payload.decode('utf-8', 'replace')}")
        if msg_type != MSG_HELLO or not payload:
            raise ProtocolError(f"expected HELLO, got message type {msg_type:#04x}")
        if payload[0] != PROTOCOL_VERSION:
            raise ProtocolError(f"backend speaks protocol version {payload[0]}, expected {PROTOCOL_VERSION}")
        self.server_variant = payload[1:].decode("utf-8", "replace")

    def close(self):
        if self.proc is None:
            return
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()
        self.proc.stdout.close()
        self.proc = None

    def _send(self, msg_type, payload):
        try:
            self.proc.stdin.write(pack_message(msg_type, payload))
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"depth backend closed its input: {exc}") from exc

    def _read_exact(self, n, deadline_s, what):
        fd = self.proc.stdout.fileno()
        chunks = []
        while n:
            ready, _, _ = select.select([fd], [], [], deadline_s)
            if not ready:
                self.proc.kill()
                raise BackendTimeout(f"depth backend timed out after {deadline_s:g} s ({what})")
            chunk = os.read(fd, n)
            if not chunk:
                raise ProtocolError(f"depth backend exited during {what}")
            chunks.append(chunk)
            n -= len(chunk)
        return b"".join(chunks)

    def _recv(self, timeout, what):
        length, msg_type = struct.unpack(">IB", self._read_exact(5, timeout, what))
        if length < 1:
            raise ProtocolError(f"bad message length {length} during {what}")
        return msg_type, self._read_exact(length - 1, timeout, what)

    def estimate(self, img, frame_id: int) -> np.ndarray:
        x = as_rgb(img)
        h, w, _ = x.shape
        self._send(MSG_FRAME, _frame_payload(frame_id, x))
        msg_type, payload = self._recv(self.spec.timeout, f"frame {frame_id}")
        if msg_type == MSG_ERROR:
            raise ProtocolError(f"backend error at frame {frame_id}: {payload.decode('utf-8', 'replace')}")
        if msg_type != MSG_DEPTH or len(payload) < 4:
            raise ProtocolError(f"expected DEPTH for frame {frame_id}, got message type {msg_type:#04x}")
        (got_id,) = struct.unpack(">I", payload[:4])
        if got_id != frame_id:
            raise ProtocolError(f"backend answered frame {got_id} while frame {frame_id} was pending")
        body = payload[4:]
        if len(body) != 2 * h * w:
            raise AlignmentError(
                f"depth for frame {frame_id} has {len(body) // 2} values, expected {h}x{w} = {h * w}",
                frame_index=frame_id,
            )
        q = np.frombuffer(body, dtype=">u2").reshape(h, w)
        return q.astype(np.float64) / DEPTH_SCALE


def run_external_backend(spec: DepthBackendSpec, frames) -> list[np.ndarray]:
    """Estimate depth for ``frames`` through an external process, in order."""
    if spec.kind != EXTERNAL:
        raise ConfigError(f"run_external_backend needs an external backend, got {spec.kind!r}")
    out = []
    with ExternalDepthBackend(spec) as backend:
        for i, frame in enumerate(frames):
            d = backend.estimate(frame, i)
            verify_alignment(frame, d, frame_index=i)
            out.append(d)
    return out


def estimate_depth(spec: DepthBackendSpec, frames, source: str | None = None) -> list[np.ndarray]:
    """Depth for each frame from any backend kind.

    For precomputed backends ``source`` names a subdirectory of
    ``spec.directory`` holding ``frame_%06d.png`` files.
    """
    frames = list(frames)
    if spec.kind == SYNTHETIC:
        return [synthetic_depth_oracle(f, spec.blur_radius) for f in frames]
    if spec.kind == EXTERNAL:
        return run_external_backend(spec, frames)
    base = Path(spec.directory)
    if source is not None:
        base = base / source
    out = []
    for i, frame in enumerate(frames):
        d = read_depth_png(base / f"frame_{i:06d}.png")
        verify_alignment(frame, d, frame_index=i)
        out.append(d)
    return out


# -- reference server ----------------------------------------------------------


def serve(estimator, model_variant: str = "", stdin=None, stdout=None) -> None:
    """Run the server side of the protocol until stdin closes.

    ``estimator(rgb) -> depth`` receives float RGB in ``[0, 1]`` and must
    return an ``(H, W)`` array in ``[0, 1]``.  Wrap a real depth network this
    way to plug it into the pipeline.
    """
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer

    def send(msg_type, payload):
        stdout.write(pack_message(msg_type, payload))
        stdout.flush()

    try:
        msg_type, payload = read_message(stdin)
    except ProtocolError:
        return
    if msg_type != MSG_HELLO or not payload or payload[0] != PROTOCOL_VERSION:
        send(MSG_ERROR, b"unsupported handshake")
        return
    send(MSG_HELLO, bytes([PROTOCOL_VERSION]) + model_variant.encode("utf-8"))
    while True:
        try:
            msg_type, payload = read_message(stdin)
        except ProtocolError:
            return
        if msg_type != MSG_FRAME or len(payload) < 12:
            send(MSG_ERROR, f"unexpected message type {msg_type:#04x}".encode())
            continue
        frame_id, w, h = struct.unpack(">III", payload[:12])
        pixels = payload[12:]
        if len(pixels) != w * h * 3:
            send(MSG_ERROR, f"frame {frame_id}: payload size mismatch".encode())
            continue
        rgb = np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3) / 255.0
        depth = np.floor(np.clip(estimator(rgb), 0.0, 1.0) * DEPTH_SCALE + 0.5).astype(">u2")
        send(MSG_DEPTH, struct.pack(">I", frame_id) + depth.tobytes())


def main(argv=None) -> int:
    """``python -m augpipe.depthio``: serve the synthetic oracle over the wire protocol."""
    import argparse

    parser = argparse.ArgumentParser(prog="python -m augpipe.depthserver", description=main.__doc__)
    parser.add_argument("--blur-radius", type=int, default=2)
    parser.add_argument("--variant", default="synthetic")
    args = parser.parse_args(argv)
    serve(lambda rgb: synthetic_depth_oracle(rgb, args.blur_radius), args.variant)
    return 0


if __name__ == "__main__":
    sys.exit(main())
