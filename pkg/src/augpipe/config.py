"""TOML experiment configuration.

Every numeric knob of a run lives here; the command line only carries paths,
seeds and the verb.  All sections are optional::

    [augblender]
    k = 3
    alpha = 1.0
    beta = 0.16
    lambda = 0.5
    accumulation = "literal"      # or "normalized"
    master_seed = 0
    [[augblender.ops]]            # omit to use the default pool
    kind = "gamma"
    low = 0.4
    high = 2.5

    [exposure]
    reference = 120
    sigma = 0.0

    [depth]
    kind = "synthetic"            # "precomputed" | "external"
    blur_radius = 2
    # directory = "depth/"        # precomputed
    # command = ["python", "-m", "augpipe.depthserver"]   # external
    model_variant = ""
    timeout = 30.0

    [window]
    n = 2

    [compose]
    fixed_fraction = 0.625
    target_count = 16

    [sweep]
    task = "PickBig"
    method = "rgb+depth+augblender"
    trials_per_level = 20
    tolerance = 5.0
    pool_size = 24
    augment_copies = 24
    jitter = 1
    n_obs = 1
    blur_radius = 1
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from augpipe.augblender import AugBlenderConfig
from augpipe.corruption import ExposureConfig
from augpipe.depthio import DepthBackendSpec
from augpipe.errors import ConfigError

SECTIONS = ("augblender", "exposure", "depth", "window", "compose", "sweep")

SWEEP_DEFAULTS = {
    "task": "PickBig",
    "method": "rgb+depth+augblender",
    "trials_per_level": 20,
    "tolerance": 5.0,
    "pool_size": 24,
    "augment_copies": 24,
    "jitter": 1,
    "n_obs": 1,
    "blur_radius": 1,
}
COMPOSE_DEFAULTS = {"fixed_fraction": 0.625, "target_count": None}
WINDOW_DEFAULTS = {"n": 2}


@dataclass
class Config:
    augblender: AugBlenderConfig = field(default_factory=AugBlenderConfig)
    exposure: ExposureConfig = field(default_factory=ExposureConfig)
    depth: DepthBackendSpec = field(default_factory=DepthBackendSpec)
    window: dict = field(default_factory=lambda: dict(WINDOW_DEFAULTS))
    compose: dict = field(default_factory=lambda: dict(COMPOSE_DEFAULTS))
    sweep: dict = field(default_factory=lambda: dict(SWEEP_DEFAULTS))
    sections: frozenset = frozenset()  # sections present in the file


def _merge(defaults: dict, given: dict, section: str) -> dict:
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    out = dict(defaults)
    out.update(given)
    return out


def parse_config(data: dict) -> Config:
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    try:
        cfg = Config(
            augblender=AugBlenderConfig.from_dict(data.get("augblender", {})),
            exposure=ExposureConfig(**data.get("exposure", {})),
            depth=DepthBackendSpec.from_dict(data.get("depth", {})),
            window=_merge(WINDOW_DEFAULTS, data.get("window", {}), "window"),
            compose=_merge(COMPOSE_DEFAULTS, data.get("compose", {}), "compose"),
            sweep=_merge(SWEEP_DEFAULTS, data.get("sweep", {}), "sweep"),
            sections=frozenset(data),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path=None) -> Config:
    if path is None:
        return Config()
    try:
        with open(Path(path), "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)
