import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from augpipe.corruption import (
    TRAINING_EXPOSURE,
    ExposureConfig,
    check_exposure,
    clips_at,
    from_linear,
    simulate_exposure,
    sweep_levels,
    to_linear,
)
from augpipe.errors import InvalidParameterError
from augpipe.imagecore import constant_image, mean_luminance
from conftest import images, random_image


def test_sweep_levels():
    levels = sweep_levels()
    assert levels == [10, 20, 40, 60, 80, 100, 120, 140, 160, 170]
    assert len(levels) == 10 and levels[0] == 10 and levels[-1] == 170
    levels.append(5)
    assert len(sweep_levels()) == 10


def test_reference_is_round_trip(rng):
    img = random_image(rng)
    out = simulate_exposure(img, 120, 120)
    assert np.max(np.abs(out - img)) <= 1e-6
    np.testing.assert_allclose(from_linear(to_linear(img)), out, rtol=0, atol=0)


def test_linear_scaling():
    # display value whose linear light is 0.3
    v = 0.3 ** (1 / 2.2)
    out = simulate_exposure(constant_image(1, 1, v), 160, 80)
    np.testing.assert_allclose(to_linear(out), 0.6, atol=1e-12)


def test_linear_light_clips():
    out = simulate_exposure(constant_image(1, 1, 0.9), 170, 10)
    assert out.max() == 1.0
    assert clips_at(constant_image(1, 1, 0.9), 170, 10)
    assert not clips_at(constant_image(1, 1, 0.1), 140)


@given(images(), st.sampled_from(sweep_levels()))
def test_output_in_range(img, level):
    out = simulate_exposure(img, level)
    assert out.shape == img.shape and out.min() >= 0 and out.max() <= 1


@given(images())
def test_monotone_in_level(img):
    lums = [mean_luminance(simulate_exposure(img, lv)) for lv in sweep_levels()]
    assert all(a <= b for a, b in zip(lums, lums[1:]))


def test_pixelwise_monotone(rng):
    img = random_image(rng)
    outs = [simulate_exposure(img, lv) for lv in sweep_levels()]
    for a, b in zip(outs, outs[1:]):
        assert np.all(a <= b)


def test_noise_reproducible_with_seed(rng):
    img = random_image(rng)
    a = simulate_exposure(img, 60, sigma=0.05, rng=np.random.default_rng(3))
    b = simulate_exposure(img, 60, sigma=0.05, rng=np.random.default_rng(3))
    c = simulate_exposure(img, 60, sigma=0.05, rng=np.random.default_rng(4))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.min() >= 0 and a.max() <= 1


def test_noise_needs_generator(rng):
    with pytest.raises(InvalidParameterError):
        simulate_exposure(random_image(rng), 60, sigma=0.1)


def test_noiseless_is_deterministic(rng):
    img = random_image(rng)
    assert np.array_equal(simulate_exposure(img, 40), simulate_exposure(img, 40))


@pytest.mark.parametrize("bad", [9, 171, 0, 100.5, True])
def test_exposure_range(bad):
    with pytest.raises(InvalidParameterError):
        check_exposure(bad)


def test_exposure_config():
    assert ExposureConfig().reference == TRAINING_EXPOSURE == 120
    with pytest.raises(InvalidParameterError):
        ExposureConfig(reference=200)
    with pytest.raises(InvalidParameterError):
        ExposureConfig(sigma=-1)
