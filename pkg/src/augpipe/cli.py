"""``augpipe`` command line.

Exit status: 0 on success, 1 when validation or processing fails, 2 on usage
errors.  The master seed comes from ``--seed``, else ``$AUGPIPE_SEED``, else
the config file.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from augpipe.augblender import augblend
from augpipe.config import load_config
from augpipe.corruption import TRAINING_EXPOSURE
from augpipe.dataset import (
    FIXED120,
    VARIED,
    DatasetManifest,
    ManifestEntry,
    compose_mixed_split,
    episode_checksum,
    ingest_episode,
    load_dataset,
    load_episode,
    make_manifest,
    precompute_depth,
    validate_dataset,
    write_dataset,
    write_episode,
)
from augpipe.errors import AugpipeError
from augpipe.evalharness import SweepReport, aggregate_and_render, evaluate_pipeline, preset_pipelines
from augpipe.imagecore import read_png, write_png
from augpipe.obswindow import assemble_window, pack_fused_observation, write_fused

log = logging.getLogger("augpipe")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _seed(args, cfg) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("AUGPIPE_SEED")
    if env:
        try:
            return int(env, 0)
        except ValueError:
            raise UsageError(f"AUGPIPE_SEED must be an integer, got {env!r}")
    return cfg.augblender.master_seed


def _frame_jobs(src: Path, dst: Path):
    """(input, output, episode id, frame index) for every PNG under ``src``.

    The episode id is the frame's parent directory relative to ``src``; the
    index is the file's position in that directory's sorted listing.
    """
    by_dir = {}
    for p in sorted(src.rglob("*.png")):
        by_dir.setdefault(p.parent, []).append(p)
    jobs = []
    for d, files in sorted(by_dir.items()):
        episode_id = d.relative_to(src).as_posix() or "."
        for i, p in enumerate(files):
            jobs.append((p, dst / p.relative_to(src), episode_id, i))
    return jobs


def _augment_one(job, config):
    src, dst, episode_id, index = job
    dst.parent.mkdir(parents=True, exist_ok=True)
    write_png(dst, augblend(read_png(src), config, (episode_id, index)))
    return str(dst)


def cmd_augment(args, cfg):
    src, dst = Path(args.input), Path(args.out)
    if not src.is_dir():
        raise UsageError(f"--in {src} is not a directory")
    config = replace(cfg.augblender, master_seed=_seed(args, cfg))
    jobs = _frame_jobs(src, dst)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(_augment_one, jobs, [config] * len(jobs)))
    else:
        for job in jobs:
            _augment_one(job, config)
    log.info("augmented %d frames into %s", len(jobs), dst)
    return EXIT_OK


def cmd_depth(args, cfg):
    src = Path(args.input)
    dst = Path(args.out) if args.out else src
    manifest, episodes = load_dataset(src)
    done = [precompute_depth(ep, cfg.depth) for ep in episodes]
    if dst != src:
        dst.mkdir(parents=True, exist_ok=True)
    entries = [replace(e, checksum=episode_checksum(ep)) for e, ep in zip(manifest.episodes, done)]
    write_dataset(dst, DatasetManifest(manifest.variant, entries, manifest.split), done)
    log.info("depth computed for %d episodes (%s backend)", len(done), cfg.depth.kind)
    return EXIT_OK


def cmd_ingest(args, cfg):
    ep = ingest_episode({"front": args.front, "wrist": args.wrist}, args.lowdim, args.exposure, args.id)
    root = Path(args.out)
    checksum = write_episode(root, ep)
    variant = args.variant or (FIXED120 if ep.exposure == TRAINING_EXPOSURE else VARIED)
    if (root / "manifest.json").exists():
        manifest = DatasetManifest.load(root)
        if manifest.variant != variant:
            raise UsageError(f"dataset at {root} is {manifest.variant}, not {variant}")
        manifest.episodes = [e for e in manifest.episodes if e.id != ep.id]
        manifest.episodes.append(ManifestEntry(ep.id, ep.exposure, len(ep), checksum))
    else:
        manifest = make_manifest([ep], variant)
    manifest.save(root)
    log.info("ingested %s (%d frames) into %s", ep.id, len(ep), root)
    return EXIT_OK


def cmd_compose(args, cfg):
    target = cfg.compose["target_count"]
    if target is None:
        raise UsageError("[compose] target_count must be set in the config file")
    _, fixed = load_dataset(args.fixed)
    _, varied = load_dataset(args.varied)
    manifest = compose_mixed_split(fixed, varied, cfg.compose["fixed_fraction"], target, _seed(args, cfg))
    write_dataset(args.out, manifest, fixed + varied)
    log.info("composed %d episodes into %s", len(manifest.episodes), args.out)
    return EXIT_OK


def cmd_validate(args, cfg):
    report = validate_dataset(args.input)
    for v in report.violations:
        print(v)
    if report.ok:
        print(f"{args.input}: ok")
        return EXIT_OK
    print(f"{args.input}: {len(report.violations)} violation(s)", file=sys.stderr)
    return EXIT_FAILURE


def cmd_pack(args, cfg):
    ep = load_episode(args.input, args.episode)
    augment = replace(cfg.augblender, master_seed=_seed(args, cfg)) if args.augment else None
    window = assemble_window(ep, args.t, int(cfg.window["n"]), augment)
    write_fused(args.out, pack_fused_observation(window))
    return EXIT_OK


def cmd_sweep(args, cfg):
    s = cfg.sweep
    seed = _seed(args, cfg)
    pipelines = preset_pipelines(
        master_seed=seed,
        augment_copies=s["augment_copies"],
        pool_size=s["pool_size"],
        pool_seed=seed,
        jitter=s["jitter"],
        tolerance=s["tolerance"],
        n_obs=s["n_obs"],
        blur_radius=s["blur_radius"],
        exposure=cfg.exposure,
    )
    if s["method"] not in pipelines:
        raise UsageError(f"unknown sweep method {s['method']!r}; choose from {sorted(pipelines)}")
    pipe = pipelines[s["method"]]
    if pipe.augment is not None and "augblender" in cfg.sections:
        pipe = replace(pipe, augment=replace(cfg.augblender, master_seed=seed))
    report = evaluate_pipeline(s["task"], pipe, int(s["trials_per_level"]), seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    report.save(args.out)
    print(aggregate_and_render([report], "markdown"), end="")
    return EXIT_OK


def cmd_report(args, cfg):
    src = Path(args.input)
    files = sorted(src.glob("*.json")) if src.is_dir() else [src]
    if not files:
        raise UsageError(f"no sweep reports (*.json) in {src}")
    text = aggregate_and_render([SweepReport.load(p) for p in files], args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="augpipe", description="Robust visuomotor perception data pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", metavar="VERB", required=True)

    def verb(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--seed", type=lambda s: int(s, 0), help="master seed (falls back to $AUGPIPE_SEED)")
        p.set_defaults(func=func)
        return p

    p = verb("augment", cmd_augment, "AugBlender every PNG under a directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)

    p = verb("depth", cmd_depth, "precompute depth for every episode of a dataset")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", help="write to a new dataset root instead of in place")

    p = verb("ingest", cmd_ingest, "import one episode from image sequences and a low-dim CSV")
    p.add_argument("--front", required=True)
    p.add_argument("--wrist", required=True)
    p.add_argument("--lowdim", required=True)
    p.add_argument("--exposure", type=int, required=True, help="exposure (ms) the episode was recorded at")
    p.add_argument("--id", required=True)
    p.add_argument("--out", required=True, help="dataset root")
    p.add_argument("--variant", choices=[FIXED120, VARIED])

    p = verb("compose", cmd_compose, "build a combined fixed/varied dataset")
    p.add_argument("--fixed", required=True)
    p.add_argument("--varied", required=True)
    p.add_argument("--out", required=True)

    p = verb("validate", cmd_validate, "check a dataset on disk")
    p.add_argument("--in", dest="input", required=True)

    p = verb("pack", cmd_pack, "export one fused observation window")
    p.add_argument("--in", dest="input", required=True, help="dataset root")
    p.add_argument("--episode", required=True)
    p.add_argument("--t", type=int, required=True, help="frame index closing the window")
    p.add_argument("--augment", action="store_true", help="apply AugBlender to RGB")
    p.add_argument("--out", required=True)

    p = verb("sweep", cmd_sweep, "run an exposure sweep on the synthetic task")
    p.add_argument("--out", required=True, help="sweep report (.json)")

    p = verb("report", cmd_report, "render sweep reports as a table")
    p.add_argument("--in", dest="input", required=True, help="directory of sweep reports or a single file")
    p.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"augpipe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AugpipeError, OSError) as exc:
        print(f"augpipe: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
