"""Camera exposure simulation for evaluation sweeps.

Exposure time scales the light a sensor integrates, so the simulator decodes
the stored frame to linear light with a 2.2 gamma, multiplies by
``level / reference`` and re-encodes.  Values saturate at 1 in linear light.
This is evaluation-only corruption; training-time augmentation lives in
:mod:`augpipe.augblender`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from augpipe.errors import InvalidParameterError
from augpipe.imagecore import as_rgb

MIN_EXPOSURE = 10
MAX_EXPOSURE = 170
TRAINING_EXPOSURE = 120
DISPLAY_GAMMA = 2.2

SWEEP_LEVELS = (10, 20, 40, 60, 80, 100, 120, 140, 160, 170)


def check_exposure(value) -> int:
    """Validate an exposure duration in milliseconds and return it as ``int``."""
    if isinstance(value, bool) or int(value) != value:
        raise InvalidParameterError(f"exposure must be an integer number of ms, got {value!r}")
    value = int(value)
    if not MIN_EXPOSURE <= value <= MAX_EXPOSURE:
        raise InvalidParameterError(f"exposure {value} outside [{MIN_EXPOSURE}, {MAX_EXPOSURE}]")
    return value


def sweep_levels() -> list[int]:
    return list(SWEEP_LEVELS)


@dataclass(frozen=True)
class ExposureConfig:
    reference: int = TRAINING_EXPOSURE
    sigma: float = 0.0

    def __post_init__(self):
        check_exposure(self.reference)
        if not self.sigma >= 0:
            raise InvalidParameterError(f"shot-noise sigma must be >= 0, got {self.sigma!r}")


def to_linear(img: np.ndarray) -> np.ndarray:
    return np.power(img, DISPLAY_GAMMA)


def from_linear(lin: np.ndarray) -> np.ndarray:
    return np.power(lin, 1.0 / DISPLAY_GAMMA)


def simulate_exposure(img, level: int, reference: int = TRAINING_EXPOSURE, sigma: float = 0.0, rng=None) -> np.ndarray:
    """Re-expose ``img`` (captured at ``reference`` ms) as if captured at ``level`` ms.

    With ``sigma > 0`` Gaussian shot noise of std ``sigma * sqrt(linear)`` is
    added in linear light; ``rng`` (a ``numpy.random.Generator``) is then
    required so the result stays reproducible.
    """
    x = as_rgb(img)
    level = check_exposure(level)
    reference = check_exposure(reference)
    if sigma < 0:
        raise InvalidParameterError(f"shot-noise sigma must be >= 0, got {sigma!r}")
    lin = to_linear(x)
    if level != reference:
        lin = lin * (level / reference)
    if sigma > 0:
        if rng is None:
            raise InvalidParameterError("shot noise needs an explicit generator")
        lin = lin + rng.standard_normal(lin.shape) * (sigma * np.sqrt(lin))
    np.clip(lin, 0.0, 1.0, out=lin)
    return np.clip(from_linear(lin), 0.0, 1.0)


def clips_at(img, level: int, reference: int = TRAINING_EXPOSURE) -> bool:
    """True if re-exposing ``img`` at ``level`` saturates any channel."""
    return bool(np.any(to_linear(as_rgb(img)) * (check_exposure(level) / check_exposure(reference)) > 1.0))
