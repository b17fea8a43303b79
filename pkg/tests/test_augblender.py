import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from augpipe.augblender import (
    DEFAULT_OP_POOL,
    DIRECT,
    LITERAL,
    MIXED,
    NORMALIZED,
    SEED_MIX_CONSTANT,
    AugBlenderConfig,
    AugmentationPlan,
    OpRange,
    accumulate,
    augblend,
    dirichlet_sample,
    execute_plan,
    frame_rng,
    frame_seed,
    plan_for_frame,
    sample_plan,
)
from augpipe.errors import ConfigError, InvalidParameterError
from augpipe.imagecore import ColorOp, apply_chain, constant_image
from conftest import random_image

MASK = (1 << 64) - 1


def test_dirichlet_k1():
    assert dirichlet_sample(0.3, 1, np.random.default_rng(0)).tolist() == [1.0]


@given(st.floats(0.05, 20.0), st.integers(1, 8), st.integers(0, 2**32))
def test_dirichlet_support(alpha, k, seed):
    w = dirichlet_sample(alpha, k, np.random.default_rng(seed))
    assert w.shape == (k,)
    assert np.all(w >= 0)
    assert abs(w.sum() - 1.0) <= 1e-9


def test_dirichlet_is_normalized_gamma():
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    g = b.standard_gamma(2.0, size=4)
    np.testing.assert_array_equal(dirichlet_sample(2.0, 4, a), g / g.sum())


def test_dirichlet_variance_matches_theory():
    rng = np.random.default_rng(11)
    w = np.array([dirichlet_sample(1.0, 3, rng) for _ in range(20000)])
    # Var(w_i) = (1/k)(1 - 1/k) / (k*alpha + 1) = 2/36
    np.testing.assert_allclose(w.var(axis=0), 2 / 36, atol=0.003)


@pytest.mark.parametrize("alpha,k", [(0.0, 3), (-1.0, 3), (1.0, 0)])
def test_dirichlet_errors(alpha, k):
    with pytest.raises(InvalidParameterError):
        dirichlet_sample(alpha, k, np.random.default_rng(0))


def test_forced_low_xi_is_direct():
    plan = sample_plan(AugBlenderConfig(beta=0.16), np.random.default_rng(0), xi=0.10)
    assert plan.mode == DIRECT
    assert plan.lambda_effective == 1.0
    assert len(plan.chains) == 1 and len(plan.chains[0]) == 3


def test_forced_high_xi_is_mixed():
    plan = sample_plan(AugBlenderConfig(beta=0.16, lam=0.4), np.random.default_rng(0), xi=0.90)
    assert plan.mode == MIXED
    assert plan.lambda_effective == 0.4
    assert len(plan.chains) == 3
    assert abs(plan.weights.sum() - 1) <= 1e-9


def test_xi_equal_beta_is_mixed():
    plan = sample_plan(AugBlenderConfig(beta=0.5), np.random.default_rng(0), xi=0.5)
    assert plan.mode == MIXED


def test_beta_zero_never_direct():
    cfg = AugBlenderConfig(beta=0.0)
    rng = np.random.default_rng(3)
    assert all(sample_plan(cfg, rng).mode == MIXED for _ in range(10_000))


def test_beta_one_always_direct():
    cfg = AugBlenderConfig(beta=1.0)
    rng = np.random.default_rng(3)
    assert all(sample_plan(cfg, rng).mode == DIRECT for _ in range(500))


@given(st.integers(1, 6), st.integers(0, 2**32), st.floats(0.0, 1.0))
def test_plan_invariants(k, seed, beta):
    cfg = AugBlenderConfig(k=k, beta=beta, lam=0.3)
    plan = sample_plan(cfg, np.random.default_rng(seed))
    assert (plan.mode == DIRECT) == (plan.xi < beta)
    if plan.mode == DIRECT:
        assert plan.lambda_effective == 1.0
        assert len(plan.chains[0]) == k
    else:
        assert plan.lambda_effective == 0.3
        assert len(plan.chains) == k
        assert all(1 <= L <= k for L in plan.chain_lengths)
        assert [len(c) for c in plan.chains] == list(plan.chain_lengths)
        assert np.all(plan.weights >= 0) and abs(plan.weights.sum() - 1) <= 1e-9


def test_chain_length_is_uniform():
    cfg = AugBlenderConfig(k=3, beta=0.0)
    rng = np.random.default_rng(8)
    lengths = np.array([L for _ in range(3000) for L in sample_plan(cfg, rng).chain_lengths])
    counts = np.bincount(lengths, minlength=4)[1:] / lengths.size
    np.testing.assert_allclose(counts, 1 / 3, atol=0.02)


def test_ops_drawn_uniformly_from_pool():
    cfg = AugBlenderConfig(k=1, beta=1.0)
    rng = np.random.default_rng(2)
    kinds = [sample_plan(cfg, rng).chains[0][0].kind for _ in range(8000)]
    freq = {k: kinds.count(k) / len(kinds) for k in {o.kind for o in DEFAULT_OP_POOL}}
    for f in freq.values():
        assert abs(f - 1 / 8) < 0.02


def test_parameters_within_ranges():
    cfg = AugBlenderConfig(k=4, beta=0.5)
    rng = np.random.default_rng(4)
    ranges = {o.kind: o for o in DEFAULT_OP_POOL}
    for _ in range(300):
        for chain in sample_plan(cfg, rng).chains:
            for op in chain:
                r = ranges[op.kind]
                if r.low is not None:
                    assert r.low <= op.param <= r.high


def test_empty_pool_is_config_error():
    with pytest.raises(ConfigError):
        sample_plan(AugBlenderConfig(op_pool=()), np.random.default_rng(0))


@pytest.mark.parametrize(
    "kwargs",
    [{"k": 0}, {"alpha": 0.0}, {"beta": 1.2}, {"lam": -0.1}, {"accumulation": "sum"}, {"master_seed": -1}],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        AugBlenderConfig(**kwargs)


@pytest.mark.parametrize("bad", [("gamma", 0.0, 2.0), ("posterize", 0, 4), ("hue_shift", 0.5, 1.5), ("equalize", 0, 1), ("nope", 0, 1)])
def test_op_range_validation(bad):
    with pytest.raises(ConfigError):
        OpRange(*bad)


def test_config_dict_round_trip():
    cfg = AugBlenderConfig(k=2, alpha=0.5, beta=0.2, lam=0.7, op_pool=(OpRange("gamma", 0.5, 2.0), OpRange("equalize")), accumulation=NORMALIZED, master_seed=9)
    assert AugBlenderConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        AugBlenderConfig.from_dict({"kk": 1})


def test_literal_hand_evaluation():
    # x = 0.5, w = [1], chain = [gamma(1)], lambda = 0.5:
    # x_t = 0.5 + 1 * 0.5 = 1.0 and y = 0.5 * 1.0 + 0.5 * 0.5 = 0.75
    img = constant_image(1, 1, 0.5)
    plan = AugmentationPlan(xi=0.9, mode=MIXED, lambda_effective=0.5, chains=((ColorOp("gamma", 1.0),),), weights=np.array([1.0]), chain_lengths=(1,))
    assert accumulate(img, plan, LITERAL)[0, 0, 0] == 1.0
    assert execute_plan(img, plan, LITERAL)[0, 0, 0] == 0.75
    # normalized starts from zero: x_t = 0.5, y = 0.5
    assert execute_plan(img, plan, NORMALIZED)[0, 0, 0] == 0.5


def test_literal_clamps_final_output():
    img = constant_image(2, 2, 0.9)
    plan = AugmentationPlan(xi=0.9, mode=MIXED, lambda_effective=1.0, chains=((ColorOp("gamma", 1.0),),), weights=np.array([1.0]), chain_lengths=(1,))
    assert accumulate(img, plan, LITERAL).max() > 1.0
    assert execute_plan(img, plan, LITERAL).max() == 1.0


def test_mixed_matches_formula(rng):
    img = random_image(rng)
    plan = sample_plan(AugBlenderConfig(beta=0.0, lam=0.35), rng)
    xt = img + sum(w * apply_chain(img, c) for w, c in zip(plan.weights, plan.chains))
    np.testing.assert_allclose(execute_plan(img, plan, LITERAL), np.clip(0.35 * xt + 0.65 * img, 0, 1), atol=1e-12)


def test_direct_applies_sequentially(rng):
    img = random_image(rng)
    plan = sample_plan(AugBlenderConfig(beta=1.0), rng)
    assert np.array_equal(execute_plan(img, plan), apply_chain(img, plan.chains[0]))


def test_direct_identity_chain(rng):
    img = random_image(rng)
    plan = AugmentationPlan(xi=0.0, mode=DIRECT, lambda_effective=1.0, chains=((ColorOp("gamma", 1.0), ColorOp("hue_shift", 0.0)),))
    assert np.array_equal(execute_plan(img, plan), img)


@given(st.integers(0, 2**32))
def test_lambda_zero_is_identity(seed):
    rng = np.random.default_rng(seed)
    img = random_image(rng, 5, 6)
    plan = sample_plan(AugBlenderConfig(lam=0.0), rng, xi=0.99)
    for mode in (LITERAL, NORMALIZED):
        assert np.array_equal(execute_plan(img, plan, mode), img)


@given(st.integers(0, 2**32))
def test_normalized_accumulator_in_range(seed):
    rng = np.random.default_rng(seed)
    img = random_image(rng, 5, 6)
    plan = sample_plan(AugBlenderConfig(beta=0.0, k=4), rng)
    acc = accumulate(img, plan, NORMALIZED)
    assert acc.min() >= 0.0 and acc.max() <= 1.0 + 1e-12


def test_augblend_deterministic(rng):
    img = random_image(rng)
    cfg = AugBlenderConfig(master_seed=42)
    assert np.array_equal(augblend(img, cfg, ("ep", 3)), augblend(img, cfg, ("ep", 3)))


def test_augblend_lambda_zero_beta_zero(rng):
    cfg = AugBlenderConfig(lam=0.0, beta=0.0)
    for i in range(20):
        img = random_image(rng, 4, 5)
        assert np.array_equal(augblend(img, cfg, ("e", i)), img)


def test_augblend_commutes_with_permutation(rng):
    img = random_image(rng, 10, 12)
    cfg = AugBlenderConfig(master_seed=7)
    for i in range(30):
        plan = plan_for_frame(cfg, ("ep", i))
        out = execute_plan(img, plan, LITERAL)
        assert np.array_equal(execute_plan(img[:, ::-1], plan, LITERAL), out[:, ::-1])
        assert np.array_equal(execute_plan(img.transpose(1, 0, 2), plan, LITERAL), out.transpose(1, 0, 2))


def _splitmix_ref(x):
    # reference splitmix64 step, written independently from the library one
    z = (x + 0x9E3779B97F4A7C15) % 2**64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % 2**64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % 2**64
    return z ^ (z >> 31)


def test_splitmix_known_vector():
    # first outputs of the reference splitmix64 generator seeded with 0
    assert _splitmix_ref(0) == 0xE220A8397B1DCDAF
    assert SEED_MIX_CONSTANT == 0x9E3779B97F4A7C15


def test_frame_seed_against_reference():
    def fnv(s):
        h = 0xCBF29CE484222325
        for b in s.encode():
            h = ((h ^ b) * 0x100000001B3) % 2**64
        return h

    for seed, ep, idx in [(0, "a", 0), (42, "episode_0007", 19), (MASK, "é", 2**40)]:
        expected = _splitmix_ref(_splitmix_ref(_splitmix_ref(seed) ^ fnv(ep)) ^ idx)
        assert frame_seed(seed, ep, idx) == expected


def test_frame_seeds_distinct_and_order_free():
    keys = [("ep", i) for i in range(200)] + [("other", i) for i in range(200)]
    seeds = [frame_seed(1, *k) for k in keys]
    assert len(set(seeds)) == len(seeds)
    cfg = AugBlenderConfig(master_seed=1)
    forward = [plan_for_frame(cfg, k).xi for k in keys]
    backward = [plan_for_frame(cfg, k).xi for k in reversed(keys)][::-1]
    assert forward == backward


def test_gate_law_small():
    cfg = AugBlenderConfig(beta=0.3)
    n = 4000
    direct = sum(plan_for_frame(cfg, ("g", i)).mode == DIRECT for i in range(n))
    assert abs(direct / n - 0.3) <= 4 * math.sqrt(0.3 * 0.7 / n)


def test_cached_generator_matches_fresh_one():
    cfg = AugBlenderConfig(master_seed=17)
    for i in range(50):
        a = sample_plan(cfg, frame_rng(17, "ep", i))
        b = plan_for_frame(cfg, ("ep", i))
        assert a.xi == b.xi and a.chains == b.chains


def test_plans_identical_across_threads():
    from concurrent.futures import ThreadPoolExecutor

    cfg = AugBlenderConfig(master_seed=2)
    keys = [("t", i) for i in range(200)]
    serial = [plan_for_frame(cfg, k).chains for k in keys]
    with ThreadPoolExecutor(4) as pool:
        threaded = list(pool.map(lambda k: plan_for_frame(cfg, k).chains, keys))
    assert serial == threaded
