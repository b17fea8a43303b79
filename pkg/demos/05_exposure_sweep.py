# %% [markdown]
# # Exposure sweep on the synthetic pick task
#
# A nearest-neighbour replay policy is trained on scenes captured at 120 ms
# and queried on fresh scenes re-exposed at each sweep level. The four arms
# add depth, AugBlender training copies, or both.

# %%
import sys

from augpipe.evalharness import PICK_BIG, aggregate_and_render, evaluate_pipeline, generate_scene, preset_pipelines

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 10

scene, frame = generate_scene(PICK_BIG, 0)
print("objects:", [(o.size, o.x, o.y, o.w) for o in scene.objects], "target at", scene.truth.position)

# %%
reports = []
for name, pipe in preset_pipelines(master_seed=0).items():
    reports.append(evaluate_pipeline(PICK_BIG, pipe, trials_per_level=trials, seed=0))
    print(f"{name:<22} average {reports[-1].average:5.1f}")

# %% [markdown]
# The RGB-only policy does well near 120 ms and degrades away from it; depth
# and augmentation flatten the curve.

# %%
print(aggregate_and_render(reports, "markdown"))
