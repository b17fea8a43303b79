import numpy as np

from augpipe.dataset import Episode, Frame, LowDimState


def make_episode(episode_id="ep0", n=3, exposure=120, h=6, w=8, seed=0):
    """Small random episode with 8-bit-representable RGB (so PNG round trips are exact)."""
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n):
        views = {v: rng.integers(0, 256, (h, w, 3)) / 255.0 for v in ("front", "wrist")}
        pose = rng.normal(size=6)
        state = LowDimState(*pose.tolist(), int(rng.integers(2)))
        frames.append(Frame(i, views, state))
    return Episode(episode_id, frames, exposure)
