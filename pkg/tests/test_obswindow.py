import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from augpipe.augblender import AugBlenderConfig
from augpipe.dataset import precompute_depth
from augpipe.depthio import DepthBackendSpec
from augpipe.errors import AlignmentError, FormatError, PreconditionError
from augpipe.obswindow import (
    FusedObservation,
    assemble_window,
    export_fused,
    import_fused,
    pack_fused_observation,
    read_fused,
    window_indices,
    write_fused,
)
from helpers import make_episode


@pytest.fixture(scope="module")
def episode():
    return precompute_depth(make_episode(n=6, h=48, w=64), DepthBackendSpec())


def test_window_indices():
    assert window_indices(5, 2) == [4, 5]
    assert window_indices(1, 4) == [0, 0, 0, 1]
    assert window_indices(0, 1) == [0]


def test_assemble(episode):
    w = assemble_window(episode, 5, 2)
    assert w.indices == [4, 5]
    assert [f.index for f in w.frames] == [4, 5]
    w = assemble_window(episode, 1, 4)
    assert [f.index for f in w.frames] == [0, 0, 0, 1]


def test_assemble_preconditions(episode):
    with pytest.raises(PreconditionError):
        assemble_window(episode, 6, 2)
    with pytest.raises(PreconditionError):
        assemble_window(episode, -1, 2)
    with pytest.raises(PreconditionError):
        assemble_window(episode, 2, 0)
    with pytest.raises(PreconditionError):
        assemble_window(make_episode(n=3), 1, 2)


def test_shapes(episode):
    obs = pack_fused_observation(assemble_window(episode, 4, 3))
    assert obs.views["front"].shape == (3, 4, 48, 64)
    assert obs.views["wrist"].shape == (3, 4, 48, 64)
    assert obs.lowdim.shape == (3, 7)
    assert obs.views["front"].dtype == np.float32


def test_channel_layout(episode):
    obs = pack_fused_observation(assemble_window(episode, 2, 1))
    f = episode.frames[2]
    np.testing.assert_array_equal(obs.views["wrist"][0, :3], np.moveaxis(f.views["wrist"], -1, 0).astype(np.float32))
    np.testing.assert_array_equal(obs.views["wrist"][0, 3], f.depths["wrist"].astype(np.float32))
    assert obs.lowdim[0, 6] == f.state.gripper


def test_augment_leaves_depth(episode):
    plain = pack_fused_observation(assemble_window(episode, 5, 3))
    for seed in range(5):
        aug = pack_fused_observation(assemble_window(episode, 5, 3, AugBlenderConfig(master_seed=seed, beta=0.5)))
        for v in ("front", "wrist"):
            assert np.array_equal(aug.views[v][:, 3], plain.views[v][:, 3])
        assert not np.array_equal(aug.views["front"][:, :3], plain.views["front"][:, :3])
        assert np.array_equal(aug.lowdim, plain.lowdim)


def test_augment_deterministic(episode):
    cfg = AugBlenderConfig(master_seed=3)
    a = pack_fused_observation(assemble_window(episode, 3, 2, cfg))
    b = pack_fused_observation(assemble_window(episode, 3, 2, cfg))
    assert export_fused(a) == export_fused(b)


def test_missing_wrist_depth(episode):
    w = assemble_window(episode, 3, 2)
    f = w.frames[1]
    w.frames[1] = type(f)(f.index, f.views, f.state, {"front": f.depths["front"]})
    with pytest.raises(AlignmentError) as err:
        pack_fused_observation(w)
    assert err.value.view == "wrist"


def test_gripper_round_trip(episode):
    obs = pack_fused_observation(assemble_window(episode, 5, 6))
    assert [int(g) for g in obs.lowdim[:, 6]] == [f.state.gripper for f in episode.frames]


def test_binary_round_trip(episode, tmp_path):
    obs = pack_fused_observation(assemble_window(episode, 5, 2))
    data = export_fused(obs)
    assert data[:4] == b"FOBS"
    assert len(data) == 24 + 4 * (2 * 2 * 4 * 48 * 64 + 2 * 7)
    back = import_fused(data)
    for v in ("front", "wrist"):
        assert back.views[v].tobytes() == obs.views[v].tobytes()
    assert back.lowdim.tobytes() == obs.lowdim.tobytes()
    write_fused(tmp_path / "o.bin", obs)
    assert export_fused(read_fused(tmp_path / "o.bin")) == data


def test_binary_errors(episode):
    data = export_fused(pack_fused_observation(assemble_window(episode, 1, 1)))
    with pytest.raises(FormatError):
        import_fused(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        import_fused(data[:-4])
    with pytest.raises(FormatError):
        import_fused(data[:10])


@given(st.integers(1, 4), st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**16))
def test_shape_law(n, h, w, seed):
    rng = np.random.default_rng(seed)
    views = {v: rng.random((n, 4, h, w)).astype(np.float32) for v in ("front", "wrist")}
    obs = FusedObservation(views, rng.random((n, 7)).astype(np.float32))
    back = import_fused(export_fused(obs))
    for v in views:
        assert back.views[v].size == n * 4 * h * w
        assert np.array_equal(back.views[v], views[v])
