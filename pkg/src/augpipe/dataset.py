"""Episode datasets: in-memory model, on-disk layout, composition, validation.

Layout of a dataset root::

    manifest.json
    episodes/<id>/episode.json            id, exposure, rate_hz, frame_count
    episodes/<id>/front/frame_000000.png  8-bit RGB
    episodes/<id>/wrist/frame_000000.png
    episodes/<id>/depth_front/frame_000000.png   16-bit gray (optional)
    episodes/<id>/depth_wrist/frame_000000.png
    episodes/<id>/lowdim.csv              x,y,z,roll,pitch,yaw,gripper

Frame ``i`` is sampled at ``i / 30`` s.  Times are kept as frame indices (and
exposed as :class:`fractions.Fraction`) because 1/30 has no exact float.

An episode checksum is the SHA-256 over its data files (frames, depth maps,
``lowdim.csv``) in sorted path order, each contributing its relative path,
a NUL byte, its byte length and its bytes.  ``episode.json`` is metadata and
is checked field by field instead.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from augpipe.corruption import TRAINING_EXPOSURE, check_exposure
from augpipe.depthio import (
    DepthBackendSpec,
    decode_depth_png16,
    encode_depth_png16,
    estimate_depth,
    verify_alignment,
)
from augpipe.errors import AlignmentError, AugpipeError, CompositionError, FormatError, IngestionError
from augpipe.imagecore import as_rgb, decode_png, encode_png

RATE_HZ = 30
VIEWS = ("front", "wrist")
LOWDIM_COLUMNS = ("x", "y", "z", "roll", "pitch", "yaw", "gripper")

FIXED120 = "fixed120"
VARIED = "varied"
COMBINED = "combined"
VARIANTS = (FIXED120, VARIED, COMBINED)
VARIED_RANGE = (50, 160)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


def frame_name(index: int) -> str:
    return f"frame_{index:06d}.png"


@dataclass(frozen=True)
class LowDimState:
    """End-effector pose in the robot base frame plus a binary gripper flag."""

    x: float
    y: float
    z: float
    roll: float
    pitch: float
    yaw: float
    gripper: int

    def __post_init__(self):
        for name in LOWDIM_COLUMNS[:6]:
            v = getattr(self, name)
            if not math.isfinite(v):
                raise IngestionError(f"low-dim {name} is not finite: {v!r}")
        if self.gripper not in (0, 1) or isinstance(self.gripper, float) and not self.gripper.is_integer():
            raise IngestionError(f"gripper must be 0 or 1, got {self.gripper!r}")
        object.__setattr__(self, "gripper", int(self.gripper))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.roll, self.pitch, self.yaw, float(self.gripper)])

    @classmethod
    def from_sequence(cls, values) -> "LowDimState":
        values = list(values)
        if len(values) != 7:
            raise IngestionError(f"low-dim state needs 7 values, got {len(values)}")
        return cls(*(float(v) for v in values[:6]), values[6])


@dataclass
class Frame:
    index: int
    views: dict
    state: LowDimState
    depths: dict = field(default_factory=dict)

    @property
    def timestamp(self) -> Fraction:
        return Fraction(self.index, RATE_HZ)


@dataclass
class Episode:
    id: str
    frames: list
    exposure: int = TRAINING_EXPOSURE
    rate_hz: int = RATE_HZ

    def __post_init__(self):
        self.exposure = check_exposure(self.exposure)
        self.validate()

    def __len__(self):
        return len(self.frames)

    @property
    def has_depth(self) -> bool:
        return all(set(f.depths) >= set(VIEWS) for f in self.frames)

    def validate(self) -> None:
        if not self.id or "/" in self.id or self.id in (".", ".."):
            raise IngestionError(f"bad episode id {self.id!r}")
        if self.rate_hz != RATE_HZ:
            raise IngestionError(f"episodes are sampled at {RATE_HZ} Hz, got {self.rate_hz}")
        if len(self.frames) < 2:
            raise IngestionError(f"episode {self.id} has {len(self.frames)} frames, need at least 2")
        for i, f in enumerate(self.frames):
            if f.index != i:
                raise IngestionError(f"episode {self.id}: frame {i} carries index {f.index}")
            missing = set(VIEWS) - set(f.views)
            if missing:
                raise IngestionError(f"episode {self.id}: frame {i} is missing views {sorted(missing)}")
            for view, d in f.depths.items():
                verify_alignment(f.views[view], d, frame_index=i, view=view)


# -- low-dim CSV ---------------------------------------------------------------


def read_lowdim_csv(path) -> list[LowDimState]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(c.strip() for c in rows[0]) != LOWDIM_COLUMNS:
        raise IngestionError(f"{path}: header must be {','.join(LOWDIM_COLUMNS)}")
    states = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            values = [float(v) for v in row]
        except ValueError as exc:
            raise IngestionError(f"{path}:{lineno}: {exc}") from exc
        try:
            states.append(LowDimState.from_sequence(values))
        except IngestionError as exc:
            raise IngestionError(f"{path}:{lineno}: {exc}") from exc
    return states


def format_lowdim_csv(states) -> str:
    lines = [",".join(LOWDIM_COLUMNS)]
    for s in states:
        # repr() is the shortest string that round-trips a float exactly
        lines.append(",".join([repr(float(v)) for v in s.as_array()[:6]] + [str(s.gripper)]))
    return "\n".join(lines) + "\n"


# -- ingestion -----------------------------------------------------------------


def _list_pngs(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise IngestionError(f"frame directory {directory} does not exist")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")


def ingest_episode(frame_dirs, lowdim_file, exposure: int, episode_id: str) -> Episode:
    """Build an :class:`Episode` from per-view PNG sequences and a low-dim CSV.

    ``frame_dirs`` maps each view name to a directory; files are taken in
    sorted name order.
    """
    missing = set(VIEWS) - set(frame_dirs)
    if missing:
        raise IngestionError(f"no frame directory for views {sorted(missing)}")
    paths = {view: _list_pngs(Path(frame_dirs[view])) for view in VIEWS}
    states = read_lowdim_csv(lowdim_file)
    counts = {f"{view} frames": len(p) for view, p in paths.items()}
    counts["lowdim rows"] = len(states)
    if len(set(counts.values())) != 1:
        expected = max(counts.values())
        bad = [f"{name} ({n})" for name, n in counts.items() if n != expected]
        raise IngestionError(f"episode {episode_id}: stream length mismatch, {', '.join(bad)} vs {expected}")
    frames = []
    for i, state in enumerate(states):
        views = {}
        for view in VIEWS:
            p = paths[view][i]
            try:
                views[view] = decode_png(p.read_bytes())
            except (OSError, FormatError) as exc:
                raise IngestionError(f"cannot read image {p}: {exc}") from exc
        frames.append(Frame(i, views, state))
    return Episode(episode_id, frames, exposure)


def precompute_depth(episode: Episode, backend: DepthBackendSpec) -> Episode:
    """Return a copy of ``episode`` with a depth map for every frame and view.

    RGB arrays are shared, not copied or modified.
    """
    per_view = {}
    for view in VIEWS:
        rgb = [f.views[view] for f in episode.frames]
        try:
            maps = estimate_depth(backend, rgb, source=f"{episode.id}/depth_{view}")
        except AlignmentError as exc:
            raise AlignmentError(
                f"episode {episode.id}, view {view}: {exc}", frame_index=exc.frame_index, view=view
            ) from exc
        except AugpipeError as exc:
            raise type(exc)(f"episode {episode.id}, view {view}: {exc}") from exc
        for i, (img, d) in enumerate(zip(rgb, maps)):
            verify_alignment(img, d, frame_index=i, view=view)
        per_view[view] = maps
    frames = [
        replace(f, depths={view: per_view[view][i] for view in VIEWS}) for i, f in enumerate(episode.frames)
    ]
    return Episode(episode.id, frames, episode.exposure, episode.rate_hz)


# -- serialization ---------------------------------------------------------------


def episode_files(episode: Episode) -> dict[str, bytes]:
    """Canonical data files of an episode, keyed by path relative to its directory."""
    files = {}
    for f in episode.frames:
        for view in VIEWS:
            files[f"{view}/{frame_name(f.index)}"] = encode_png(as_rgb(f.views[view]))
            if view in f.depths:
                files[f"depth_{view}/{frame_name(f.index)}"] = encode_depth_png16(f.depths[view])
    files["lowdim.csv"] = format_lowdim_csv([f.state for f in episode.frames]).encode()
    return files


def checksum_files(files: dict[str, bytes]) -> str:
    h = hashlib.sha256()
    for rel in sorted(files):
        data = files[rel]
        h.update(rel.encode("utf-8") + b"\0" + len(data).to_bytes(8, "big"))
        h.update(data)
    return h.hexdigest()


def episode_checksum(episode: Episode, rgb_only: bool = False) -> str:
    files = episode_files(episode)
    if rgb_only:
        files = {k: v for k, v in files.items() if k.split("/")[0] in VIEWS}
    return checksum_files(files)


def _episode_meta(episode: Episode) -> dict:
    return {
        "id": episode.id,
        "exposure": episode.exposure,
        "rate_hz": episode.rate_hz,
        "frame_count": len(episode),
    }


def write_episode(root, episode: Episode) -> str:
    """Write ``episode`` under ``root/episodes/<id>`` and return its checksum."""
    base = Path(root) / "episodes" / episode.id
    files = episode_files(episode)
    for rel, data in files.items():
        p = base / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(data)
    (base / "episode.json").write_text(json.dumps(_episode_meta(episode), indent=2) + "\n")
    return checksum_files(files)


def _read_episode_files(base: Path) -> dict[str, bytes]:
    files = {}
    for p in sorted(base.rglob("*")):
        rel = p.relative_to(base).as_posix()
        if p.is_file() and rel != "episode.json":
            files[rel] = p.read_bytes()
    return files


def load_episode(root, episode_id: str) -> Episode:
    base = Path(root) / "episodes" / episode_id
    try:
        meta = json.loads((base / "episode.json").read_text())
    except (OSError, ValueError) as exc:
        raise IngestionError(f"{base / 'episode.json'}: {exc}") from exc
    states = read_lowdim_csv(base / "lowdim.csv")
    frames = []
    for i, state in enumerate(states):
        views, depths = {}, {}
        for view in VIEWS:
            p = base / view / frame_name(i)
            try:
                views[view] = decode_png(p.read_bytes())
            except (OSError, FormatError) as exc:
                raise IngestionError(f"cannot read image {p}: {exc}") from exc
            dp = base / f"depth_{view}" / frame_name(i)
            if dp.exists():
                try:
                    depths[view] = decode_depth_png16(dp.read_bytes())
                except FormatError as exc:
                    raise IngestionError(f"cannot read depth {dp}: {exc}") from exc
        frames.append(Frame(i, views, state, depths))
    return Episode(meta["id"], frames, meta["exposure"], meta.get("rate_hz", RATE_HZ))


# -- manifest ---------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    exposure: int
    frame_count: int
    checksum: str
    source: str | None = None  # "fixed" or "varied" inside a combined dataset


@dataclass
class DatasetManifest:
    variant: str
    episodes: list
    split: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise CompositionError(f"unknown dataset variant {self.variant!r}")

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.episodes]

    def to_dict(self) -> dict:
        eps = []
        for e in self.episodes:
            d = {"id": e.id, "exposure": e.exposure, "frame_count": e.frame_count, "checksum": e.checksum}
            if e.source is not None:
                d["source"] = e.source
            eps.append(d)
        return {"version": MANIFEST_VERSION, "variant": self.variant, "split": self.split, "episodes": eps}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        if d.get("version") != MANIFEST_VERSION:
            raise FormatError(f"unsupported manifest version {d.get('version')!r}")
        entries = [
            ManifestEntry(e["id"], int(e["exposure"]), int(e["frame_count"]), e["checksum"], e.get("source"))
            for e in d["episodes"]
        ]
        return cls(d["variant"], entries, dict(d.get("split", {})))

    def save(self, root) -> None:
        Path(root).mkdir(parents=True, exist_ok=True)
        (Path(root) / MANIFEST_NAME).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, root) -> "DatasetManifest":
        return cls.from_dict(json.loads((Path(root) / MANIFEST_NAME).read_text()))


def _entry(episode: Episode, source=None) -> ManifestEntry:
    return ManifestEntry(episode.id, episode.exposure, len(episode), episode_checksum(episode), source)


def _exposure_ok(variant: str, exposure: int, source=None) -> bool:
    lo, hi = VARIED_RANGE
    if variant == FIXED120 or source == "fixed":
        return exposure == TRAINING_EXPOSURE
    if variant == VARIED or source == "varied":
        return lo <= exposure <= hi
    return False


def make_manifest(episodes, variant: str) -> DatasetManifest:
    """Manifest for a single-source (fixed120 or varied) dataset."""
    if variant not in (FIXED120, VARIED):
        raise CompositionError("use compose_mixed_split for combined datasets")
    episodes = list(episodes)
    for ep in episodes:
        if not _exposure_ok(variant, ep.exposure):
            raise CompositionError(f"episode {ep.id} (exposure {ep.exposure}) does not belong in a {variant} dataset")
    return DatasetManifest(variant, [_entry(ep) for ep in episodes])


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def compose_mixed_split(fixed, varied, fixed_fraction: float, target_count: int, seed: int) -> DatasetManifest:
    """Pick ``round(fixed_fraction * target_count)`` fixed episodes, the rest varied.

    Selection is without replacement from each pool using a generator seeded
    by ``seed``; chosen episodes keep their pool order.
    """
    if not 0.0 <= fixed_fraction <= 1.0:
        raise CompositionError(f"fixed_fraction must be in [0, 1], got {fixed_fraction}")
    if target_count < 1:
        raise CompositionError(f"target_count must be positive, got {target_count}")
    fixed, varied = list(fixed), list(varied)
    n_fixed = round_half_up(fixed_fraction * target_count)
    n_varied = target_count - n_fixed
    short = []
    if n_fixed > len(fixed):
        short.append(f"need {n_fixed} fixed-exposure episodes, have {len(fixed)} (short by {n_fixed - len(fixed)})")
    if n_varied > len(varied):
        short.append(f"need {n_varied} varied-exposure episodes, have {len(varied)} (short by {n_varied - len(varied)})")
    if short:
        raise CompositionError("; ".join(short))
    for ep in fixed:
        if not _exposure_ok(FIXED120, ep.exposure):
            raise CompositionError(f"episode {ep.id} in the fixed pool has exposure {ep.exposure}")
    for ep in varied:
        if not _exposure_ok(VARIED, ep.exposure):
            raise CompositionError(f"episode {ep.id} in the varied pool has exposure {ep.exposure}")
    rng = np.random.default_rng(seed)
    pick_f = sorted(rng.choice(len(fixed), size=n_fixed, replace=False).tolist())
    pick_v = sorted(rng.choice(len(varied), size=n_varied, replace=False).tolist())
    entries = [_entry(fixed[i], "fixed") for i in pick_f] + [_entry(varied[i], "varied") for i in pick_v]
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        raise CompositionError("episode ids must be unique across both pools")
    split = {"fixed_fraction": fixed_fraction, "target_count": target_count, "seed": seed}
    return DatasetManifest(COMBINED, entries, split)


def write_dataset(root, manifest: DatasetManifest, episodes) -> None:
    """Materialize the episodes named in ``manifest`` (looked up by id) and the manifest."""
    pool = {ep.id: ep for ep in episodes}
    for entry in manifest.episodes:
        if entry.id not in pool:
            raise CompositionError(f"manifest names episode {entry.id} which was not provided")
        checksum = write_episode(root, pool[entry.id])
        if checksum != entry.checksum:
            raise CompositionError(f"episode {entry.id} changed since the manifest was built")
    manifest.save(root)


def load_dataset(root) -> tuple[DatasetManifest, list[Episode]]:
    manifest = DatasetManifest.load(root)
    return manifest, [load_episode(root, e.id) for e in manifest.episodes]


# -- validation -------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


@dataclass
class ValidationReport:
    root: str
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, path, message):
        self.violations.append(Violation(str(path), message))


def _validate_episode(report: ValidationReport, root: Path, entry: ManifestEntry, variant: str) -> None:
    base = root / "episodes" / entry.id
    if not base.is_dir():
        report.add(base, "episode directory missing")
        return
    n_before = len(report.violations)

    meta_path = base / "episode.json"
    try:
        meta = json.loads(meta_path.read_text())
    except (OSError, ValueError) as exc:
        report.add(meta_path, f"unreadable episode metadata: {exc}")
        meta = {}
    tagged = meta.get("exposure")
    if meta and meta.get("id") != entry.id:
        report.add(meta_path, f"episode id {meta.get('id')!r} does not match manifest id {entry.id!r}")
    if meta and tagged != entry.exposure:
        report.add(
            meta_path,
            f"variant consistency: manifest records exposure {entry.exposure} but episode is tagged {tagged}",
        )
    if not _exposure_ok(variant, entry.exposure, entry.source):
        want = "120" if variant == FIXED120 or entry.source == "fixed" else f"in [{VARIED_RANGE[0]}, {VARIED_RANGE[1]}]"
        report.add(root / MANIFEST_NAME, f"variant consistency: {entry.id} has exposure {entry.exposure}, {variant} requires {want}")
    if meta and meta.get("frame_count") != entry.frame_count:
        report.add(meta_path, f"frame_count {meta.get('frame_count')} disagrees with manifest {entry.frame_count}")
    if meta and meta.get("rate_hz", RATE_HZ) != RATE_HZ:
        report.add(meta_path, f"rate_hz must be {RATE_HZ}")

    n = entry.frame_count
    if n < 2:
        report.add(base, f"episode has {n} frames, need at least 2")
    try:
        states = read_lowdim_csv(base / "lowdim.csv")
        if len(states) != n:
            report.add(base / "lowdim.csv", f"{len(states)} rows, expected {n}")
    except IngestionError as exc:
        report.add(base / "lowdim.csv", str(exc))

    for view in VIEWS:
        vdir = base / view
        expected = {frame_name(i) for i in range(n)}
        present = {p.name for p in vdir.glob("*.png")} if vdir.is_dir() else set()
        for name in sorted(expected - present):
            report.add(vdir / name, "missing frame")
        for name in sorted(present - expected):
            report.add(vdir / name, "unexpected frame (timestamps must be consecutive)")
        ddir = base / f"depth_{view}"
        dpresent = {p.name for p in ddir.glob("*.png")} if ddir.is_dir() else set()
        if ddir.is_dir():
            for name in sorted(expected - dpresent):
                report.add(ddir / name, "missing depth map")
            for name in sorted(dpresent - expected):
                report.add(ddir / name, "unexpected depth map")
        for i in range(n):
            name = frame_name(i)
            if name not in present:
                continue
            try:
                rgb = decode_png((vdir / name).read_bytes())
            except (OSError, FormatError) as exc:
                report.add(vdir / name, f"undecodable frame: {exc}")
                continue
            if name in dpresent:
                try:
                    depth = decode_depth_png16((ddir / name).read_bytes())
                    verify_alignment(rgb, depth, frame_index=i, view=view)
                except (OSError, FormatError, AlignmentError) as exc:
                    report.add(ddir / name, str(exc))

    if len(report.violations) == n_before:
        # only blame the checksum when no specific file was already flagged
        actual = checksum_files(_read_episode_files(base))
        if actual != entry.checksum:
            report.add(base, "checksum mismatch")


def validate_dataset(root) -> ValidationReport:
    """Check a dataset on disk; every problem becomes a report entry."""
    root = Path(root)
    report = ValidationReport(str(root))
    mpath = root / MANIFEST_NAME
    try:
        manifest = DatasetManifest.load(root)
    except FileNotFoundError:
        report.add(mpath, "manifest missing")
        return report
    except (ValueError, KeyError, TypeError, AugpipeError) as exc:
        report.add(mpath, f"malformed manifest: {exc}")
        return report

    ids = manifest.ids
    if len(set(ids)) != len(ids):
        report.add(mpath, "duplicate episode ids")
    if manifest.variant == COMBINED:
        split = manifest.split
        try:
            n_fixed = round_half_up(split["fixed_fraction"] * split["target_count"])
            if len(manifest.episodes) != split["target_count"]:
                report.add(mpath, f"{len(manifest.episodes)} episodes, split targets {split['target_count']}")
            got = sum(1 for e in manifest.episodes if e.source == "fixed")
            if got != n_fixed:
                report.add(mpath, f"{got} fixed-exposure episodes, split requires {n_fixed}")
        except (KeyError, TypeError):
            report.add(mpath, "combined manifest lacks fixed_fraction/target_count")
        for e in manifest.episodes:
            if e.source not in ("fixed", "varied"):
                report.add(mpath, f"episode {e.id} has no fixed/varied source tag")

    for entry in manifest.episodes:
        _validate_episode(report, root, entry, manifest.variant)

    listed = set(ids)
    edir = root / "episodes"
    if edir.is_dir():
        for p in sorted(edir.iterdir()):
            if p.name not in listed:
                report.add(p, "episode not listed in manifest")
    return report
