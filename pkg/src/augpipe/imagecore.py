"""Color-only image operations on normalized RGB frames.

Images are ``float64`` arrays of shape ``(H, W, 3)`` with every channel in
``[0, 1]``.  Every op here is spatially non-displacing: the output at a pixel
depends only on that pixel and on permutation-invariant global statistics
(mean luminance, channel histograms).  That property is what keeps augmented
RGB aligned with its depth map, so geometric transforms do not belong here.

8-bit conversion happens only at the PNG boundary, with round-half-up
quantization ``v8 = floor(v * 255 + 0.5)``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from PIL import Image

from augpipe import _kernels
from augpipe.errors import FormatError, InvalidParameterError, ShapeError

# Rec. 601 luma weights, applied to stored (display-referred) values.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

EQUALIZE_BINS = 256


def as_rgb(img, copy=False) -> np.ndarray:
    """Validate ``img`` as an RGB frame and return it as C-contiguous float64."""
    if copy:
        arr = np.array(img, dtype=np.float64, order="C")
    else:
        arr = np.ascontiguousarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ShapeError(f"image has zero size: {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise InvalidParameterError("image channels must lie in [0, 1]")
    return arr


def constant_image(height: int, width: int, value) -> np.ndarray:
    out = np.empty((height, width, 3), dtype=np.float64)
    out[...] = value
    return out


def luminance(img: np.ndarray) -> np.ndarray:
    # Explicit ufunc chain instead of a matmul so the per-pixel result does not
    # depend on memory layout or BLAS accumulation order.
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    return r * LUMA_WEIGHTS[0] + g * LUMA_WEIGHTS[1] + b * LUMA_WEIGHTS[2]


_FIX_BITS = 30


def exact_mean(values: np.ndarray) -> float:
    """Mean that does not depend on element order.

    Each value is truncated onto a 2**-60 grid and summed as integers, so the
    result is identical for any permutation of ``values``.
    """
    flat = np.asarray(values, dtype=np.float64).ravel()
    scaled = flat * float(1 << _FIX_BITS)
    hi = np.floor(scaled)
    lo = np.floor((scaled - hi) * float(1 << _FIX_BITS))
    total = int(hi.astype(np.int64).sum()) * (1 << _FIX_BITS) + int(lo.astype(np.int64).sum())
    return total / (flat.size << (2 * _FIX_BITS))


def mean_luminance(img: np.ndarray) -> float:
    return exact_mean(luminance(img))


# -- HSV (hexcone model, hue in turns) -------------------------------------


def rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    """Hexcone RGB -> HSV.  Hue is in turns ``[0, 1)``; grays get hue 0."""
    return _kernels.rgb_to_hsv(np.ascontiguousarray(img, dtype=np.float64))


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    return _kernels.hsv_to_rgb(np.ascontiguousarray(hsv, dtype=np.float64))


# -- ops -------------------------------------------------------------------


def _hue_shift(img, delta):
    return _kernels.hsv_adjust(img, float(delta), 1.0)


def _saturation(img, scale):
    return _kernels.hsv_adjust(img, 0.0, float(scale))


def _brightness(img, factor):
    return img * factor


def _contrast(img, factor):
    m = mean_luminance(img)
    return (img - m) * factor + m


def _solarize(img, threshold):
    return _kernels.solarize(img, float(threshold))


def _gamma(img, g):
    return np.power(img, g)


def _posterize(img, bits):
    # floor(v * 2**bits), capped at the top level, rescaled to [0, 1]
    return _kernels.posterize(img, 1 << int(bits))


def _equalize(img, _param=None):
    # lut[bin] = (cdf[bin] - cdf_min) / (n - cdf_min); a channel occupying a
    # single bin is passed through unchanged
    return _kernels.equalize(img, EQUALIZE_BINS)


@dataclass(frozen=True)
class OpSpec:
    """Registry entry for one ColorOp kind."""

    func: Callable
    check: Callable[[object], bool] | None
    identity: object = None
    integer: bool = False
    description: str = ""


def _in(lo, hi, lo_open=False, hi_open=False):
    def check(x):
        if x is None or not math.isfinite(x):
            return False
        if x < lo or (lo_open and x == lo):
            return False
        if hi is not None and (x > hi or (hi_open and x == hi)):
            return False
        return True

    return check


OP_REGISTRY: dict[str, OpSpec] = {
    "hue_shift": OpSpec(_hue_shift, _in(0.0, 1.0, hi_open=True), 0.0, description="delta in turns, [0, 1)"),
    "saturation": OpSpec(_saturation, _in(0.0, None), 1.0, description="scale >= 0"),
    "brightness": OpSpec(_brightness, _in(0.0, None), 1.0, description="factor >= 0"),
    "contrast": OpSpec(_contrast, _in(0.0, None), 1.0, description="factor >= 0"),
    "solarize": OpSpec(_solarize, _in(0.0, 1.0), None, description="threshold in [0, 1]"),
    "gamma": OpSpec(_gamma, _in(0.0, None, lo_open=True), 1.0, description="exponent > 0"),
    "posterize": OpSpec(_posterize, _in(1, 8), None, integer=True, description="bits in 1..8"),
    "equalize": OpSpec(_equalize, None, None, description="no parameter"),
}


def register_op(kind: str, func, check=None, identity=None, integer=False, description=""):
    """Add a new color op kind.  ``func(img, param)`` must be spatially non-displacing."""
    if kind in OP_REGISTRY:
        raise InvalidParameterError(f"op kind {kind!r} already registered")
    OP_REGISTRY[kind] = OpSpec(func, check, identity, integer, description)


@dataclass(frozen=True)
class ColorOp:
    kind: str
    param: float | int | None = None

    def __post_init__(self):
        spec = OP_REGISTRY.get(self.kind)
        if spec is None:
            raise InvalidParameterError(f"unknown color op {self.kind!r}")
        if spec.check is None:
            if self.param is not None:
                raise InvalidParameterError(f"{self.kind} takes no parameter")
            return
        p = self.param
        if spec.integer:
            if isinstance(p, float) and p.is_integer():
                object.__setattr__(self, "param", int(p))
                p = int(p)
            if not isinstance(p, (int, np.integer)) or isinstance(p, bool):
                raise InvalidParameterError(f"{self.kind} needs an integer parameter, got {p!r}")
        elif not isinstance(p, (int, float, np.integer, np.floating)) or isinstance(p, bool):
            raise InvalidParameterError(f"{self.kind} needs a numeric parameter, got {p!r}")
        if not spec.check(p):
            raise InvalidParameterError(f"{self.kind} parameter {p!r} out of range ({spec.description})")

    @classmethod
    def _trusted(cls, kind: str, param) -> "ColorOp":
        # for parameters already known to be valid (drawn from a checked OpRange)
        op = object.__new__(cls)
        object.__setattr__(op, "kind", kind)
        object.__setattr__(op, "param", param)
        return op

    def is_identity(self) -> bool:
        spec = OP_REGISTRY[self.kind]
        return spec.identity is not None and self.param == spec.identity


def apply_color_op(img, op: ColorOp) -> np.ndarray:
    """Apply one color op and clamp the result to ``[0, 1]``.

    Identity parameters (``gamma(1)``, ``hue_shift(0)``, ...) return an exact
    copy rather than a floating-point round trip.
    """
    return _apply(as_rgb(img), op)


def _apply(x, op):
    if op.is_identity():
        return x.copy()
    out = OP_REGISTRY[op.kind].func(x, op.param)
    return np.clip(out, 0.0, 1.0, out=out if out is not x else None)


def apply_chain(img, ops) -> np.ndarray:
    x = as_rgb(img)
    if not ops:
        return x.copy()
    for op in ops:
        x = _apply(x, op)
    return x


def blend(a, b, t: float) -> np.ndarray:
    """Per-channel ``t*a + (1-t)*b``, clamped to ``[0, 1]``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"cannot blend images of shape {a.shape} and {b.shape}")
    if not 0.0 <= t <= 1.0:
        raise InvalidParameterError(f"blend factor must be in [0, 1], got {t}")
    return np.clip(t * a + (1.0 - t) * b, 0.0, 1.0)


# -- 8-bit PNG boundary ------------------------------------------------------


def to_uint8(img) -> np.ndarray:
    x = np.asarray(img, dtype=np.float64)
    return np.floor(np.clip(x, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def from_uint8(arr) -> np.ndarray:
    return np.asarray(arr, dtype=np.float64) / 255.0


def encode_png(img) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_uint8(as_rgb(img))).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    try:
        im = Image.open(io.BytesIO(data))
        im.load()
    except Exception as exc:  # Pillow raises a zoo of types here
        raise FormatError(f"cannot decode PNG: {exc}") from exc
    if im.format != "PNG":
        raise FormatError(f"expected PNG, got {im.format}")
    if im.mode != "RGB":
        raise FormatError(f"expected an 8-bit RGB PNG, got mode {im.mode}")
    return from_uint8(np.asarray(im))


def read_png(path) -> np.ndarray:
    path = Path(path)
    try:
        return decode_png(path.read_bytes())
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_png(path, img) -> None:
    Path(path).write_bytes(encode_png(img))
