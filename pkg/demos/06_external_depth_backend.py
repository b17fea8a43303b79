# %% [markdown]
# # Plugging in an external depth estimator
#
# External estimators run as a child process and speak a small
# length-prefixed protocol on stdin/stdout. The library ships a server that
# wraps any `rgb -> depth` callable; here it serves the synthetic oracle. A
# real model is wired the same way:
#
# ```python
# from augpipe.depthio import serve
# serve(lambda rgb: my_model(rgb), model_variant="vit-s")
# ```

# %%
import sys

import numpy as np

from augpipe.depthio import DepthBackendSpec, ExternalDepthBackend, run_external_backend, synthetic_depth_oracle

spec = DepthBackendSpec(
    kind="external",
    command=(sys.executable, "-m", "augpipe.depthserver", "--variant", "oracle-r2"),
    model_variant="oracle-r2",
    timeout=30.0,
)

with ExternalDepthBackend(spec) as backend:
    print("server announced variant:", backend.server_variant)

# %%
rng = np.random.default_rng(6)
frames = [rng.integers(0, 256, (48, 64, 3)) / 255 for _ in range(5)]
maps = run_external_backend(spec, frames)
for i, (f, d) in enumerate(zip(frames, maps)):
    print(i, d.shape, f"max diff to in-process oracle {np.abs(d - synthetic_depth_oracle(f)).max():.1e}")
