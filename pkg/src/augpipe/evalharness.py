"""Exposure-sweep evaluation on a synthetic desk-scale pick task.

The physical setup (a robot arm, two cameras and human judges) is replaced by
a small rendered scene with known ground truth and a nearest-neighbour replay
policy:

* :func:`generate_scene` draws a tabletop with colored boxes and renders a
  front view plus a 2x "wrist" close-up of the workspace center.
* A pipeline (:class:`SweepPipeline`) decides how training observations are
  built: with or without depth, with or without AugBlender copies.
* :class:`NearestNeighborPolicy` answers a query with the target of the
  closest training observation (mean squared distance over every packed
  value, ties to the lowest index).
* :func:`run_sweep` re-exposes fresh trial scenes at each sweep level and
  scores predictions with a pixel tolerance instead of human evaluators.

Objects are deliberately low-contrast against a per-scene background level,
so raw RGB is dominated by global brightness while normalized depth keeps
the layout; this is the regime where exposure shifts hurt RGB-only policies.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from augpipe.augblender import AugBlenderConfig, OpRange, augblend, frame_rng, frame_seed
from augpipe.corruption import TRAINING_EXPOSURE, ExposureConfig, simulate_exposure, sweep_levels
from augpipe.dataset import Frame, LowDimState, round_half_up
from augpipe.depthio import synthetic_depth_oracle
from augpipe.errors import ConfigError, InvalidParameterError, ShapeError
from augpipe.obswindow import FusedObservation, ObservationWindow, pack_fused_observation

PICK_BIG = "PickBig"
PICK_SMALL = "PickSmall"
CUP_STACK = "CupStackProxy"
TASKS = (PICK_BIG, PICK_SMALL, CUP_STACK)

CANVAS_W = 64
CANVAS_H = 48
BIG_SIDE = 12
SMALL_SIDE = 6
CUP_SIDE = 8
MARGIN = 2
# cup order for the stacking proxy: the first one is the next pick
CUP_COLORS = ((0.55, 0.2, 0.2), (0.2, 0.5, 0.25), (0.2, 0.3, 0.6))

HOME_STATE = LowDimState(0.3, 0.0, 0.2, 0.0, math.pi, 0.0, 0)
GRASP = 1


@dataclass(frozen=True)
class SceneObject:
    x: int  # top-left column
    y: int  # top-left row
    w: int
    h: int
    color: tuple
    size: str

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True)
class Truth:
    position: tuple  # (x, y) in front-view pixels
    gripper: int = GRASP


@dataclass(frozen=True)
class Prediction:
    position: tuple
    gripper: int


@dataclass(frozen=True)
class SyntheticScene:
    task: str
    width: int
    height: int
    background: tuple
    objects: tuple
    target: int  # index into objects

    @property
    def truth(self) -> Truth:
        return Truth(self.objects[self.target].center, GRASP)

    def shifted(self, dx: int, dy: int) -> "SyntheticScene":
        """Move every object by (dx, dy), clamped to stay on the canvas."""
        objs = tuple(
            replace(
                o,
                x=min(max(o.x + dx, 0), self.width - o.w),
                y=min(max(o.y + dy, 0), self.height - o.h),
            )
            for o in self.objects
        )
        return replace(self, objects=objs)


def _overlaps(a, b, gap=1):
    return not (a.x + a.w + gap <= b.x or b.x + b.w + gap <= a.x or a.y + a.h + gap <= b.y or b.y + b.h + gap <= a.y)


def _place(rng, w, h, placed, width, height):
    for _ in range(1000):
        x = int(rng.integers(MARGIN, width - w - MARGIN + 1))
        y = int(rng.integers(MARGIN, height - h - MARGIN + 1))
        cand = SceneObject(x, y, w, h, (0, 0, 0), "")
        if not any(_overlaps(cand, p) for p in placed):
            return x, y
    raise RuntimeError("could not place object")  # unreachable at the default canvas size


def _low_contrast_color(rng, bg, contrast):
    sign = 1.0 if rng.random() < 0.5 else -1.0
    tint = rng.uniform(-0.03, 0.03, size=3)
    return tuple(float(np.clip(b + sign * contrast + t, 0.0, 1.0)) for b, t in zip(bg, tint))


def make_scene(task: str, seed: int, width: int = CANVAS_W, height: int = CANVAS_H) -> SyntheticScene:
    if task not in TASKS:
        raise InvalidParameterError(f"unknown task {task!r}; expected one of {TASKS}")
    rng = np.random.default_rng(seed)
    level = rng.uniform(0.3, 0.7)
    bg = tuple(float(level + t) for t in rng.uniform(-0.02, 0.02, size=3))
    placed = []
    if task == CUP_STACK:
        order = rng.permutation(3)
        for k in order:
            x, y = _place(rng, CUP_SIDE, CUP_SIDE, placed, width, height)
            placed.append(SceneObject(x, y, CUP_SIDE, CUP_SIDE, CUP_COLORS[k], f"cup{k}"))
        target = next(i for i, o in enumerate(placed) if o.size == "cup0")
    else:
        sizes = [("big", BIG_SIDE), ("small", SMALL_SIDE)]
        for name, side in sizes:
            x, y = _place(rng, side, side, placed, width, height)
            color = _low_contrast_color(rng, bg, rng.uniform(0.06, 0.12))
            placed.append(SceneObject(x, y, side, side, color, name))
        target = 0 if task == PICK_BIG else 1
    return SyntheticScene(task, width, height, bg, tuple(placed), target)


def render_front(scene: SyntheticScene) -> np.ndarray:
    img = np.empty((scene.height, scene.width, 3))
    img[...] = scene.background
    for o in scene.objects:
        img[o.y : o.y + o.h, o.x : o.x + o.w] = o.color
    return img


def render_wrist(scene: SyntheticScene) -> np.ndarray:
    """2x close-up of the canvas center, same size as the front view."""
    front = render_front(scene)
    h, w = scene.height, scene.width
    y0, x0 = h // 4, w // 4
    crop = front[y0 : y0 + h // 2, x0 : x0 + w // 2]
    return np.repeat(np.repeat(crop, 2, axis=0), 2, axis=1)


def render_frame(scene: SyntheticScene) -> Frame:
    return Frame(0, {"front": render_front(scene), "wrist": render_wrist(scene)}, HOME_STATE)


def generate_scene(task: str, seed: int) -> tuple[SyntheticScene, Frame]:
    """Deterministic scene and its rendered front/wrist frame for ``seed``."""
    scene = make_scene(task, seed)
    return scene, render_frame(scene)


# -- pipelines ---------------------------------------------------------------------

# Brightness and tone ops dominate what exposure changes look like; the pool
# still draws from the full set of color ops.
SWEEP_OP_POOL = (
    OpRange("brightness", 0.25, 1.6),
    OpRange("gamma", 0.6, 2.5),
    OpRange("contrast", 0.5, 1.5),
    OpRange("saturation", 0.0, 2.0),
    OpRange("hue_shift", 0.0, 1.0),
    OpRange("solarize", 0.7, 1.0),
    OpRange("posterize", 4, 8),
    OpRange("equalize"),
)


@dataclass(frozen=True)
class SweepPipeline:
    """How training and query observations are built for one method."""

    name: str
    use_depth: bool = False
    augment: AugBlenderConfig | None = None
    augment_copies: int = 24
    pool_size: int = 24
    pool_seed: int = 0
    jitter: int = 1
    tolerance: float = 5.0
    n_obs: int = 1
    blur_radius: int = 1
    exposure: ExposureConfig = field(default_factory=ExposureConfig)

    def __post_init__(self):
        if self.pool_size < 1 or self.augment_copies < 0 or self.n_obs < 1 or self.jitter < 0:
            raise ConfigError("pool_size, n_obs must be >= 1; augment_copies, jitter >= 0")
        if not self.tolerance >= 0:
            raise ConfigError("tolerance must be >= 0")

    def pool_scene_seed(self, i: int) -> int:
        return frame_seed(self.pool_seed, "scene-pool", i)


def preset_pipelines(master_seed: int = 0, **overrides) -> dict[str, SweepPipeline]:
    """The four ablation arms: baseline, +depth, +AugBlender, +both."""
    aug = AugBlenderConfig(k=3, alpha=1.0, beta=0.16, lam=0.5, op_pool=SWEEP_OP_POOL, master_seed=master_seed)
    return {
        "rgb": SweepPipeline("rgb", **overrides),
        "rgb+depth": SweepPipeline("rgb+depth", use_depth=True, **overrides),
        "rgb+augblender": SweepPipeline("rgb+augblender", augment=aug, **overrides),
        "rgb+depth+augblender": SweepPipeline("rgb+depth+augblender", use_depth=True, augment=aug, **overrides),
    }


def _depth_for(rgb, pipeline: SweepPipeline):
    if pipeline.use_depth:
        return synthetic_depth_oracle(rgb, pipeline.blur_radius)
    return np.zeros(rgb.shape[:2])


def observe(frame: Frame, pipeline: SweepPipeline) -> FusedObservation:
    """Fuse one static frame into an observation of ``n_obs`` repeated steps."""
    depths = {v: _depth_for(img, pipeline) for v, img in frame.views.items()}
    f = replace(frame, depths=depths)
    window = ObservationWindow("scene", [0] * pipeline.n_obs, [f] * pipeline.n_obs)
    return pack_fused_observation(window)


def build_training_set(task: str, pipeline: SweepPipeline) -> list[tuple[FusedObservation, Truth]]:
    """Demonstrations captured at the training exposure, plus augmented copies.

    Depth is always computed from the clean frame, so augmented copies pair
    corrupted RGB with uncorrupted depth.
    """
    out = []
    for i in range(pipeline.pool_size):
        scene, frame = generate_scene(task, pipeline.pool_scene_seed(i))
        depths = {v: _depth_for(img, pipeline) for v, img in frame.views.items()}
        clean = replace(frame, depths=depths)
        copies = [clean]
        if pipeline.augment is not None:
            for c in range(pipeline.augment_copies):
                key = (f"{task}/scene{i}", c)
                views = {v: augblend(img, pipeline.augment, key) for v, img in frame.views.items()}
                copies.append(replace(clean, views=views))
        for f in copies:
            window = ObservationWindow(f"{task}/scene{i}", [0] * pipeline.n_obs, [f] * pipeline.n_obs)
            out.append((pack_fused_observation(window), scene.truth))
    return out


# -- policy ------------------------------------------------------------------------


def nn_policy_predict(training, query: FusedObservation) -> Truth:
    """Target of the training observation closest to ``query`` (lowest index on ties)."""
    training = list(training)
    if not training:
        raise InvalidParameterError("nearest-neighbour policy needs a non-empty training set")
    q = query.flat().astype(np.float64)
    best, best_d = None, math.inf
    for obs, truth in training:
        x = obs.flat()
        if x.shape != q.shape:
            raise ShapeError(f"training observation has {x.size} values, query has {q.size}")
        d = float(np.mean((x.astype(np.float64) - q) ** 2))
        if d < best_d:
            best, best_d = truth, d
    return best


class NearestNeighborPolicy:
    """Vectorized :func:`nn_policy_predict` over a fixed training set."""

    def __init__(self, training):
        training = list(training)
        if not training:
            raise InvalidParameterError("nearest-neighbour policy needs a non-empty training set")
        self.truths = [t for _, t in training]
        self.matrix = np.stack([obs.flat() for obs, _ in training]).astype(np.float32)

    def distances(self, query: FusedObservation) -> np.ndarray:
        q = query.flat().astype(np.float32)
        if q.shape[0] != self.matrix.shape[1]:
            raise ShapeError(f"query has {q.shape[0]} values, training observations have {self.matrix.shape[1]}")
        diff = self.matrix - q
        return np.einsum("ij,ij->i", diff, diff).astype(np.float64) / q.shape[0]

    def predict(self, query: FusedObservation) -> Prediction:
        i = int(np.argmin(self.distances(query)))  # argmin keeps the first minimum
        t = self.truths[i]
        return Prediction(t.position, t.gripper)


class ConstantPolicy:
    """Always predicts the same position; useful as a degenerate reference."""

    def __init__(self, position=(CANVAS_W / 2.0, CANVAS_H / 2.0), gripper=GRASP):
        self.position = tuple(position)
        self.gripper = gripper

    def predict(self, query: FusedObservation) -> Prediction:
        return Prediction(self.position, self.gripper)


# -- scoring -----------------------------------------------------------------------


def trial_success(prediction, truth, tolerance: float) -> bool:
    dx = prediction.position[0] - truth.position[0]
    dy = prediction.position[1] - truth.position[1]
    return math.hypot(dx, dy) <= tolerance and prediction.gripper == truth.gripper


def success_rate(trials) -> float:
    """Percentage of ``(prediction, truth, tolerance)`` trials that succeed."""
    trials = list(trials)
    if not trials:
        raise InvalidParameterError("success_rate needs at least one trial")
    hits = sum(trial_success(p, t, tol) for p, t, tol in trials)
    return 100.0 * hits / len(trials)


@dataclass
class SweepReport:
    task: str
    method: str
    rates: dict  # exposure level -> success rate in percent
    average: float = None

    def __post_init__(self):
        self.rates = {int(k): float(v) for k, v in self.rates.items()}
        if sorted(self.rates) != sweep_levels():
            raise InvalidParameterError(f"report needs exactly the levels {sweep_levels()}")
        for level, r in self.rates.items():
            if not 0.0 <= r <= 100.0:
                raise InvalidParameterError(f"rate {r} at level {level} outside [0, 100]")
        mean = math.fsum(self.rates[lv] for lv in sweep_levels()) / len(self.rates)
        if self.average is None:
            self.average = mean
        elif abs(self.average - mean) > 1e-9:
            raise InvalidParameterError(f"stored average {self.average} is not the mean {mean} of the rates")

    def curve(self) -> list[float]:
        return [self.rates[lv] for lv in sweep_levels()]

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "method": self.method,
            "rates": {str(lv): self.rates[lv] for lv in sweep_levels()},
            "average": self.average,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepReport":
        return cls(d["task"], d["method"], d["rates"], d.get("average"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SweepReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def trial_scene(task: str, pipeline: SweepPipeline, seed: int, level: int, j: int) -> SyntheticScene:
    """Scene for trial ``j`` at ``level``: a pool scene nudged by up to ``jitter`` px."""
    rng = frame_rng(seed, f"{task}/trial/{level}", j)
    i = int(rng.integers(pipeline.pool_size))
    dx, dy = (int(v) for v in rng.integers(-pipeline.jitter, pipeline.jitter + 1, size=2))
    return make_scene(task, pipeline.pool_scene_seed(i)).shifted(dx, dy)


def run_sweep(policy, task: str, trials_per_level: int, pipeline: SweepPipeline, seed: int = 0) -> SweepReport:
    """Score ``policy`` at each sweep level on ``trials_per_level`` fresh scenes."""
    if trials_per_level < 1:
        raise InvalidParameterError("trials_per_level must be >= 1")
    ref = pipeline.exposure.reference
    sigma = pipeline.exposure.sigma
    rates = {}
    for level in sweep_levels():
        trials = []
        for j in range(trials_per_level):
            scene = trial_scene(task, pipeline, seed, level, j)
            frame = render_frame(scene)
            noise_rng = frame_rng(seed, f"{task}/noise/{level}", j) if sigma > 0 else None
            views = {v: simulate_exposure(img, level, ref, sigma, noise_rng) for v, img in frame.views.items()}
            obs = observe(replace(frame, views=views), pipeline)
            trials.append((policy.predict(obs), scene.truth, pipeline.tolerance))
        rates[level] = success_rate(trials)
    return SweepReport(task, pipeline.name, rates)


def evaluate_pipeline(task: str, pipeline: SweepPipeline, trials_per_level: int = 20, seed: int = 0) -> SweepReport:
    """Train the nearest-neighbour policy for ``pipeline`` and sweep it."""
    policy = NearestNeighborPolicy(build_training_set(task, pipeline))
    return run_sweep(policy, task, trials_per_level, pipeline, seed)


# -- reporting ---------------------------------------------------------------------

CSV_COLUMNS = ["task", "method"] + [f"e{lv}" for lv in sweep_levels()] + ["avg"]


def _fmt_rate(r: float) -> str:
    return str(int(r)) if float(r).is_integer() else f"{r:.1f}"


def aggregate_and_render(reports, fmt: str = "markdown") -> str:
    """Table of per-level success rates with a round-half-up integer AVG column."""
    reports = list(reports)
    if not reports:
        raise InvalidParameterError("nothing to report")
    rows = []
    for r in reports:
        rows.append([r.task, r.method] + [_fmt_rate(x) for x in r.curve()] + [str(round_half_up(r.average))])
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "markdown":
        header = ["Task", "Method"] + [str(lv) for lv in sweep_levels()] + ["AVG"]
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(row) + " |" for row in rows]
        return "\n".join(lines) + "\n"
    raise InvalidParameterError(f"unknown report format {fmt!r}")


def parse_report_csv(text: str) -> list[dict]:
    """Read back a CSV produced by :func:`aggregate_and_render`."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_COLUMNS:
        raise InvalidParameterError(f"unexpected CSV columns {reader.fieldnames}")
    return list(reader)
