"""AugBlender: gated mixing of color-augmentation chains.

Each call draws a gate value ``xi``.  Below the threshold ``beta`` the frame
gets a direct sequential chain of ``k`` ops with the blend factor forced to 1,
which produces strongly out-of-distribution images.  Otherwise ``k`` chains
are applied to copies of the input, accumulated with Dirichlet weights and
blended back with the original by ``lam``.

Two accumulation modes exist because the algorithm as written seeds the
accumulator with the input image:

* ``literal``: ``x_t = x + sum(w_i * chain_i(x))``, final result clamped.
* ``normalized``: ``x_t = sum(w_i * chain_i(x))`` (a convex mix, as in AugMix).

Randomness is always explicit.  :func:`augblend` derives a per-frame generator
from ``(master_seed, episode_id, frame_index)`` so results do not depend on
processing order or parallelism.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from augpipe.errors import ConfigError, InvalidParameterError
from augpipe.imagecore import OP_REGISTRY, ColorOp, apply_chain, as_rgb

MIXED = "mixed"
DIRECT = "direct"

LITERAL = "literal"
NORMALIZED = "normalized"
ACCUMULATION_MODES = (LITERAL, NORMALIZED)

_MASK64 = (1 << 64) - 1
# splitmix64 increment (golden-ratio constant)
SEED_MIX_CONSTANT = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class OpRange:
    """One entry of the op pool: a kind and a uniform parameter range.

    Integer-valued kinds (posterize) draw from ``{low, ..., high}``; continuous
    kinds from ``[low, high)``, or exactly ``low`` when ``low == high``.
    """

    kind: str
    low: float | int | None = None
    high: float | int | None = None

    def __post_init__(self):
        spec = OP_REGISTRY.get(self.kind)
        if spec is None:
            raise ConfigError(f"unknown op kind {self.kind!r} in op pool")
        if spec.check is None:
            if self.low is not None or self.high is not None:
                raise ConfigError(f"{self.kind} takes no parameter range")
            return
        if self.low is None or self.high is None or self.low > self.high:
            raise ConfigError(f"{self.kind}: bad range [{self.low}, {self.high}]")
        try:
            ColorOp(self.kind, self.low)
            # half-open ranges (hue_shift) may name their excluded upper end
            if self.high != self.low and not (spec.check(self.high) or spec.check(np.nextafter(self.high, -np.inf))):
                raise InvalidParameterError(self.high)
        except InvalidParameterError as exc:
            raise ConfigError(f"{self.kind}: range [{self.low}, {self.high}] leaves the valid domain") from exc

    def sample(self, rng: np.random.Generator) -> ColorOp:
        return self.from_unit(float(rng.random()))

    def from_unit(self, u: float) -> ColorOp:
        """Map ``u`` in ``[0, 1)`` onto the range: the op for a uniform draw."""
        spec = OP_REGISTRY[self.kind]
        if spec.check is None:
            return ColorOp._trusted(self.kind, None)
        if spec.integer:
            return ColorOp._trusted(self.kind, min(int(self.low + (u * (self.high - self.low + 1)) // 1), int(self.high)))
        if self.low == self.high:
            return ColorOp._trusted(self.kind, float(self.low))
        value = float(self.low + u * (self.high - self.low))
        if not spec.check(value):  # rounding can land on an excluded upper end
            value = float(self.low)
        return ColorOp._trusted(self.kind, value)


DEFAULT_OP_POOL = (
    OpRange("hue_shift", 0.0, 1.0),
    OpRange("saturation", 0.0, 2.0),
    OpRange("brightness", 0.2, 1.8),
    OpRange("contrast", 0.2, 1.8),
    OpRange("solarize", 0.0, 1.0),
    OpRange("gamma", 0.4, 2.5),
    OpRange("posterize", 2, 8),
    OpRange("equalize"),
)


@dataclass(frozen=True)
class AugBlenderConfig:
    k: int = 3
    alpha: float = 1.0
    beta: float = 0.16
    lam: float = 0.5
    op_pool: tuple = DEFAULT_OP_POOL
    accumulation: str = LITERAL
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "op_pool", tuple(self.op_pool))
        if not isinstance(self.k, (int, np.integer)) or self.k < 1:
            raise ConfigError(f"k must be a positive integer, got {self.k!r}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must be in [0, 1], got {self.beta!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must be in [0, 1], got {self.lam!r}")
        if self.accumulation not in ACCUMULATION_MODES:
            raise ConfigError(f"accumulation must be one of {ACCUMULATION_MODES}, got {self.accumulation!r}")
        if not 0 <= self.master_seed <= _MASK64:
            raise ConfigError("master_seed must fit in 64 unsigned bits")

    @classmethod
    def from_dict(cls, d: dict) -> "AugBlenderConfig":
        d = dict(d)
        kwargs = {}
        for key in ("k", "alpha", "beta", "accumulation", "master_seed"):
            if key in d:
                kwargs[key] = d.pop(key)
        if "lambda" in d:
            kwargs["lam"] = d.pop("lambda")
        if "ops" in d:
            ops = d.pop("ops")
            kwargs["op_pool"] = tuple(OpRange(o["kind"], o.get("low"), o.get("high")) for o in ops)
        if d:
            raise ConfigError(f"unknown augblender keys: {sorted(d)}")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        ops = []
        for o in self.op_pool:
            entry = {"kind": o.kind}
            if o.low is not None:
                entry["low"] = o.low
                entry["high"] = o.high
            ops.append(entry)
        return {
            "k": self.k,
            "alpha": self.alpha,
            "beta": self.beta,
            "lambda": self.lam,
            "accumulation": self.accumulation,
            "master_seed": self.master_seed,
            "ops": ops,
        }


@dataclass(frozen=True)
class AugmentationPlan:
    """One concrete realization of the algorithm for a single frame.

    ``chains`` holds ``k`` chains for the mixed branch and exactly one chain
    of ``k`` ops for the direct branch.  ``chain_lengths`` records the sampled
    ``L`` per mixed chain (the chain keeps only its first ``L`` ops).
    """

    xi: float
    mode: str
    lambda_effective: float
    chains: tuple
    weights: np.ndarray | None = None
    chain_lengths: tuple = field(default=())


def dirichlet_sample(alpha: float, k: int, rng: np.random.Generator) -> np.ndarray:
    """Dirichlet(alpha, ..., alpha) draw via normalized Gamma(alpha, 1) variates."""
    if not alpha > 0:
        raise InvalidParameterError(f"alpha must be positive, got {alpha!r}")
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k!r}")
    g = rng.standard_gamma(alpha, size=k)
    total = g.sum()
    if total == 0.0:
        # every draw underflowed (tiny alpha); the limit is a random vertex
        w = np.zeros(k)
        w[rng.integers(k)] = 1.0
        return w
    return g / total


def sample_plan(config: AugBlenderConfig, rng: np.random.Generator, xi: float | None = None) -> AugmentationPlan:
    """Draw a full plan.  Pass ``xi`` to force the gate value."""
    pool = config.op_pool
    if not pool:
        raise ConfigError("op pool is empty")
    k = config.k
    if xi is None:
        xi = float(rng.random())
    elif not 0.0 <= xi <= 1.0:
        raise InvalidParameterError(f"xi must be in [0, 1], got {xi!r}")
    weights = dirichlet_sample(config.alpha, k, rng)

    # All remaining randomness comes from one block of uniforms per plan: an
    # op index from u is floor(u * n), a parameter from u is OpRange.from_unit.
    n = len(pool)
    if xi < config.beta:
        u = rng.random((2, k))
        picks = np.minimum((u[0] * n).astype(np.int64), n - 1)
        chain = tuple(pool[int(j)].from_unit(v) for j, v in zip(picks, u[1]))
        return AugmentationPlan(xi=xi, mode=DIRECT, lambda_effective=1.0, chains=(chain,))

    # each chain draws k ops (distinct when the pool allows) and keeps the first L
    width = max(n, k)
    u = rng.random((k, width + 1 + k))
    if n >= k:
        picks = np.argsort(u[:, :n], axis=1, kind="stable")[:, :k]
    else:
        picks = np.minimum((u[:, :k] * n).astype(np.int64), n - 1)
    lengths = np.minimum((u[:, width] * k).astype(np.int64), k - 1) + 1
    units = u[:, width + 1 :]
    chains = tuple(
        tuple(pool[int(j)].from_unit(v) for j, v in zip(picks[c, :L], units[c, :L])) for c, L in enumerate(lengths)
    )
    return AugmentationPlan(
        xi=xi,
        mode=MIXED,
        lambda_effective=float(config.lam),
        chains=chains,
        weights=weights,
        chain_lengths=tuple(int(L) for L in lengths),
    )


def accumulate(img, plan: AugmentationPlan, accumulation: str = LITERAL) -> np.ndarray:
    """Pre-blend accumulator ``x_t`` of a mixed plan (unclamped)."""
    x = as_rgb(img)
    if plan.mode != MIXED:
        raise InvalidParameterError("accumulate() only applies to mixed plans")
    if accumulation == LITERAL:
        acc = x.copy()
    elif accumulation == NORMALIZED:
        acc = np.zeros_like(x)
    else:
        raise InvalidParameterError(f"unknown accumulation mode {accumulation!r}")
    for w, chain in zip(plan.weights, plan.chains):
        acc += w * apply_chain(x, chain)
    return acc


def execute_plan(img, plan: AugmentationPlan, accumulation: str = LITERAL) -> np.ndarray:
    x = as_rgb(img)
    if plan.mode == DIRECT:
        return apply_chain(x, plan.chains[0])
    lam = plan.lambda_effective
    acc = accumulate(x, plan, accumulation)
    return np.clip(lam * acc + (1.0 - lam) * x, 0.0, 1.0)


def _splitmix64(x: int) -> int:
    x = (x + SEED_MIX_CONSTANT) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def frame_seed(master_seed: int, episode_id: str, frame_index: int) -> int:
    """64-bit per-frame seed: splitmix64 chained over seed, FNV-1a(id), index."""
    h = _splitmix64(master_seed & _MASK64)
    h = _splitmix64(h ^ _fnv1a64(str(episode_id)))
    return _splitmix64(h ^ (int(frame_index) & _MASK64))


def _pcg_state(seed: int) -> dict:
    """PCG64 state for a 64-bit seed: four splitmix64 outputs form state and increment."""
    a = _splitmix64(seed)
    b = _splitmix64(a)
    c = _splitmix64(b)
    d = _splitmix64(c)
    return {
        "bit_generator": "PCG64",
        "state": {"state": (a << 64) | b, "inc": ((c << 64) | d) | 1},
        "has_uint32": 0,
        "uinteger": 0,
    }


def frame_rng(master_seed: int, episode_id: str, frame_index: int) -> np.random.Generator:
    """Fresh generator for one frame key."""
    bitgen = np.random.PCG64(0)
    bitgen.state = _pcg_state(frame_seed(master_seed, episode_id, frame_index))
    return np.random.Generator(bitgen)


_local = threading.local()


def _reseeded(master_seed: int, episode_id: str, frame_index: int) -> np.random.Generator:
    # Same stream as frame_rng() without building a generator per frame.
    # One generator per thread, only used inside this module.
    g = getattr(_local, "rng", None)
    if g is None:
        g = _local.rng = np.random.Generator(np.random.PCG64(0))
    g.bit_generator.state = _pcg_state(frame_seed(master_seed, episode_id, frame_index))
    return g


def plan_for_frame(config: AugBlenderConfig, frame_key) -> AugmentationPlan:
    episode_id, frame_index = frame_key
    return sample_plan(config, _reseeded(config.master_seed, episode_id, frame_index))


def augblend(img, config: AugBlenderConfig, frame_key) -> np.ndarray:
    """Augment one frame deterministically from ``(episode_id, frame_index)``."""
    plan = plan_for_frame(config, frame_key)
    return execute_plan(img, plan, config.accumulation)
