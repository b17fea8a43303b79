# %% [markdown]
# # From episodes to fused observations
#
# Build a few episodes, attach depth, compose a combined fixed/varied
# dataset, validate it on disk and export one fused RGB+depth window.

# %%
import tempfile
from pathlib import Path

import numpy as np

from augpipe.augblender import AugBlenderConfig
from augpipe.dataset import Episode, Frame, LowDimState, compose_mixed_split, load_dataset, precompute_depth, validate_dataset, write_dataset
from augpipe.depthio import DepthBackendSpec
from augpipe.obswindow import assemble_window, pack_fused_observation, read_fused, write_fused

rng = np.random.default_rng(4)


def episode(ep_id, exposure, n=5):
    frames = []
    for i in range(n):
        views = {v: rng.integers(0, 256, (48, 64, 3)) / 255 for v in ("front", "wrist")}
        state = LowDimState(0.3 + 0.01 * i, 0.0, 0.2, 0.0, np.pi, 0.0, int(i >= n // 2))
        frames.append(Frame(i, views, state))
    return Episode(ep_id, frames, exposure)


fixed = [precompute_depth(episode(f"fixed_{i:02d}", 120), DepthBackendSpec()) for i in range(10)]
varied = [precompute_depth(episode(f"varied_{i:02d}", int(rng.integers(50, 161))), DepthBackendSpec()) for i in range(6)]
print("timestamps of one episode:", [str(f.timestamp) for f in fixed[0].frames])

# %% [markdown]
# 62.5 % of 16 episodes gives 10 fixed-exposure and 6 varied-exposure ones.

# %%
manifest = compose_mixed_split(fixed, varied, 0.625, 16, seed=0)
print({s: sum(e.source == s for e in manifest.episodes) for s in ("fixed", "varied")})

root = Path(tempfile.mkdtemp()) / "combined"
write_dataset(root, manifest, fixed + varied)
report = validate_dataset(root)
print("violations on a fresh dataset:", report.violations)

# %% [markdown]
# A window of N = 3 steps closing at frame 1 is left-padded with frame 0.
# AugBlender changes only the RGB planes.

# %%
_, episodes = load_dataset(root)
ep = episodes[1]
plain = pack_fused_observation(assemble_window(ep, 1, 3))
aug = pack_fused_observation(assemble_window(ep, 1, 3, AugBlenderConfig(master_seed=1)))
print("front block", plain.views["front"].shape, "lowdim", plain.lowdim.shape)
print("depth planes untouched:", np.array_equal(plain.views["front"][:, 3], aug.views["front"][:, 3]))

path = root / "window.bin"
write_fused(path, aug)
print(path.stat().st_size, "bytes; round trip exact:", np.array_equal(read_fused(path).views["wrist"], aug.views["wrist"]))

# %% [markdown]
# Corrupt one frame and validate again.

# %%
bad = root / "episodes" / manifest.ids[0] / "front" / "frame_000002.png"
bad.write_bytes(b"not a png")
for v in validate_dataset(root).violations:
    print(v)
