"""Observation windows and RGB+depth fused observations.

A fused observation holds, per view, an ``(N, 4, H, W)`` block with channels
``R, G, B, depth`` and an ``(N, 7)`` low-dim block.  Views are always ordered
``(front, wrist)``.  Blocks are ``float32`` so they survive the binary export
bit for bit.

Binary export (all little-endian)::

    magic    4s   b"FOBS"
    version  u32  1
    n        u32  observation steps
    views    u32  number of views (2)
    height   u32
    width    u32
    then one f32[n, 4, height, width] block per view in view order,
    then f32[n, 7] low-dim states.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from augpipe.augblender import AugBlenderConfig, augblend
from augpipe.dataset import VIEWS, Episode
from augpipe.depthio import verify_alignment
from augpipe.errors import AlignmentError, FormatError, PreconditionError, ShapeError

FUSED_MAGIC = b"FOBS"
FUSED_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")


@dataclass
class ObservationWindow:
    episode_id: str
    indices: list
    frames: list

    @property
    def n(self) -> int:
        return len(self.frames)


@dataclass
class FusedObservation:
    views: dict
    lowdim: np.ndarray

    @property
    def n(self) -> int:
        return self.lowdim.shape[0]

    def flat(self) -> np.ndarray:
        """All packed values as one vector, views first then low-dim."""
        return np.concatenate([self.views[v].ravel() for v in VIEWS] + [self.lowdim.ravel()])


def window_indices(t_index: int, n: int) -> list[int]:
    """``t_index - n + 1 .. t_index``, with negative indices clamped to frame 0."""
    return [max(0, t_index - n + 1 + j) for j in range(n)]


def assemble_window(episode: Episode, t_index: int, n: int, augment: AugBlenderConfig | None = None) -> ObservationWindow:
    """Collect the last ``n`` frames up to ``t_index``.

    With ``augment`` every RGB view goes through AugBlender keyed by
    ``(episode.id, frame index)``; depth maps are passed through untouched.
    """
    if not 0 <= t_index < len(episode):
        raise PreconditionError(f"t_index {t_index} outside episode {episode.id} of {len(episode)} frames")
    if n < 1:
        raise PreconditionError(f"window length must be >= 1, got {n}")
    if not episode.has_depth:
        raise PreconditionError(f"episode {episode.id} has no depth; run precompute_depth first")
    idx = window_indices(t_index, n)
    frames = []
    for i in idx:
        f = episode.frames[i]
        if augment is not None:
            views = {v: augblend(f.views[v], augment, (episode.id, i)) for v in VIEWS}
            f = replace(f, views=views)
        frames.append(f)
    return ObservationWindow(episode.id, idx, frames)


def pack_fused_observation(window: ObservationWindow) -> FusedObservation:
    blocks = {}
    for view in VIEWS:
        planes = []
        shape = None
        for f, i in zip(window.frames, window.indices):
            rgb = f.views.get(view)
            depth = f.depths.get(view)
            if rgb is None or depth is None:
                missing = "RGB" if rgb is None else "depth"
                raise AlignmentError(f"frame {i} has no {view} {missing}", frame_index=i, view=view)
            verify_alignment(rgb, depth, frame_index=i, view=view)
            if shape is None:
                shape = depth.shape
            elif depth.shape != shape:
                raise ShapeError(f"{view} frames change size inside the window: {shape} vs {depth.shape}")
            block = np.empty((4,) + depth.shape, dtype=np.float32)
            block[:3] = np.moveaxis(rgb, -1, 0)
            block[3] = depth
            planes.append(block)
        blocks[view] = np.stack(planes)
    lowdim = np.stack([f.state.as_array() for f in window.frames]).astype(np.float32)
    return FusedObservation(blocks, lowdim)


def export_fused(obs: FusedObservation) -> bytes:
    shapes = {obs.views[v].shape for v in VIEWS}
    if len(shapes) != 1:
        raise ShapeError(f"binary export needs equal-sized views, got {sorted(shapes)}")
    n, c, h, w = shapes.pop()
    if c != 4 or obs.lowdim.shape != (n, 7):
        raise ShapeError("fused observation blocks have the wrong layout")
    parts = [_HEADER.pack(FUSED_MAGIC, FUSED_VERSION, n, len(VIEWS), h, w)]
    parts += [np.ascontiguousarray(obs.views[v], dtype="<f4").tobytes() for v in VIEWS]
    parts.append(np.ascontiguousarray(obs.lowdim, dtype="<f4").tobytes())
    return b"".join(parts)


def import_fused(data: bytes) -> FusedObservation:
    if len(data) < _HEADER.size:
        raise FormatError("truncated fused observation header")
    magic, version, n, nviews, h, w = _HEADER.unpack_from(data)
    if magic != FUSED_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != FUSED_VERSION:
        raise FormatError(f"unsupported fused observation version {version}")
    if nviews != len(VIEWS):
        raise FormatError(f"expected {len(VIEWS)} views, file has {nviews}")
    block = n * 4 * h * w
    expected = _HEADER.size + 4 * (nviews * block + n * 7)
    if len(data) != expected:
        raise FormatError(f"payload is {len(data)} bytes, header implies {expected}")
    off = _HEADER.size
    views = {}
    for v in VIEWS:
        views[v] = np.frombuffer(data, dtype="<f4", count=block, offset=off).reshape(n, 4, h, w).astype(np.float32)
        off += 4 * block
    lowdim = np.frombuffer(data, dtype="<f4", count=n * 7, offset=off).reshape(n, 7).astype(np.float32)
    return FusedObservation(views, lowdim)


def write_fused(path, obs: FusedObservation) -> None:
    Path(path).write_bytes(export_fused(obs))


def read_fused(path) -> FusedObservation:
    return import_fused(Path(path).read_bytes())
