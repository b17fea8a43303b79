# %% [markdown]
# # Color operations
#
# Every augmentation in the library is a color-only op on float RGB in
# [0, 1]. None of them move pixels, so a depth map rendered for the original
# frame still lines up after augmentation.

# %%
import numpy as np

from augpipe.imagecore import OP_REGISTRY, ColorOp, apply_chain, apply_color_op, blend, mean_luminance

rng = np.random.default_rng(0)
img = rng.random((48, 64, 3))

for kind, spec in OP_REGISTRY.items():
    print(f"{kind:<11} {spec.description}")

# %% [markdown]
# A few ops on one frame. Contrast pivots around the global mean luminance,
# equalize remaps each channel through its 256-bin histogram.

# %%
for op in [ColorOp("gamma", 2.2), ColorOp("contrast", 0.5), ColorOp("solarize", 0.6), ColorOp("posterize", 2), ColorOp("equalize")]:
    out = apply_color_op(img, op)
    print(f"{op.kind:<10} mean luma {mean_luminance(img):.3f} -> {mean_luminance(out):.3f}")

# %% [markdown]
# Half a turn of hue takes pure red to cyan.

# %%
red = np.array([[[1.0, 0.0, 0.0]]])
print(apply_color_op(red, ColorOp("hue_shift", 0.5))[0, 0])

# %% [markdown]
# Flipping and then augmenting gives exactly the same bits as augmenting and
# then flipping, even for ops that use global statistics.

# %%
chain = [ColorOp("contrast", 1.4), ColorOp("equalize"), ColorOp("hue_shift", 0.2)]
a = apply_chain(img[:, ::-1], chain)
b = apply_chain(img, chain)[:, ::-1]
print("flip commutes:", np.array_equal(a, b))

# %%
mid = blend(np.full((2, 2, 3), 0.2), np.full((2, 2, 3), 0.6), 0.5)
print("blend midpoint:", mid[0, 0])
