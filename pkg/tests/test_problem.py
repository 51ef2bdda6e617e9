import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dense_tridiag
from subgradfed import problem as P
from subgradfed.linalg import SymTridiagMatrix, average, eig_extremes

configs = st.builds(
    P.GenConfig,
    n=st.integers(1, 6),
    d=st.integers(1, 30),
    mu=st.sampled_from([1e-6, 1e-3, 0.5]),
    noise_scale=st.sampled_from([0.0, 0.1, 1.0, 10.0]),
    seed=st.integers(0, 2**64 - 1),
)


def _dense_f(p, x):
    return np.mean([np.abs(dense_tridiag(p.d, m.scale, m.shift) @ x).sum() for m in p.matrices])


def test_noise_free_matrices_are_identical_and_shifted_to_mu():
    for n, d in ((1, 1), (4, 10), (10, 200)):
        p = P.generate(P.GenConfig(n=n, d=d, noise_scale=0.0, seed=1))
        assert len({(m.scale, m.shift) for m in p.matrices}) == 1
        assert p.constants.sigma_A == 0.0
        for m in p.matrices:
            # exact in real arithmetic; rounding of shift = mu - lambda_min costs a few ulps of lambda_min
            assert abs(eig_extremes(m)[0] - 1e-6) <= 1e-15


def test_one_by_one_hand_case():
    p = P.generate(P.GenConfig(n=1, d=1, noise_scale=0.0, seed=0))
    (m,) = p.matrices
    assert m.scale == 0.25
    assert 2 * m.scale == 0.5
    assert p.lipschitz_i[0] == pytest.approx(1e-6, abs=1e-16)


@given(configs)
def test_generator_invariants(cfg):
    p = P.generate(cfg)
    assert p.n == cfg.n and p.d == cfg.d
    lam_avg = eig_extremes(average(p.matrices))[0]
    assert abs(lam_avg - cfg.mu) <= 1e-12 * max(1.0, max(abs(m.scale) for m in p.matrices))
    c = p.constants
    assert c.L_bar <= c.L_tilde * (1 + 1e-15)
    assert c.L0 == c.L_bar
    assert c.sigma_A >= 0
    assert c.R0_sq == pytest.approx(float(p.x0 @ p.x0), rel=1e-12)
    assert P.f_value(p, p.x_star) == 0.0
    assert all(P.f_i_value(p, i, p.x_star) == 0.0 for i in range(p.n))


@given(configs)
def test_generation_is_deterministic(cfg):
    a, b = P.generate(cfg), P.generate(cfg)
    assert a.matrices == b.matrices
    assert np.array_equal(a.x0, b.x0)
    assert a.constants == b.constants


def test_f_value_examples():
    p = P.build_problem([SymTridiagMatrix(1, 0.0, 2.0)], [-3.0])
    assert P.f_value(p, [-3.0]) == 6.0
    q = P.generate(P.GenConfig(n=3, d=7, noise_scale=1.0, seed=4))
    x = np.random.default_rng(0).normal(size=7)
    assert P.f_value(q, 2 * x) == pytest.approx(2 * P.f_value(q, x), rel=1e-14)
    assert P.f_value(q, x) == pytest.approx(_dense_f(q, x), rel=1e-12)
    with pytest.raises(ValueError):
        P.f_value(q, np.zeros(6))


def test_subgradient_examples():
    p = P.build_problem([SymTridiagMatrix(2, 0.0, 1.0)], [0.0, 0.0])
    assert P.subgradient_i(p, 0, [1.0, -2.0]).tolist() == [1.0, -1.0]
    q = P.generate(P.GenConfig(n=2, d=5, noise_scale=0.3, seed=2))
    for i, m in enumerate(q.matrices):
        want = dense_tridiag(5, m.scale, m.shift) @ np.ones(5)
        np.testing.assert_allclose(P.subgradient_i(q, i, np.zeros(5)), want, atol=1e-15)


def test_subgradient_inequality_and_norm_bound():
    p = P.generate(P.GenConfig(n=4, d=20, noise_scale=1.0, seed=5))
    rng = np.random.default_rng(1)
    for i in range(p.n):
        bound = math.sqrt(p.d) * p.lipschitz_i[i]
        for _ in range(10):
            x = rng.normal(size=p.d)
            g = P.subgradient_i(p, i, x)
            fx = P.f_i_value(p, i, x)
            for y in rng.normal(size=(100, p.d)):
                lhs = P.f_i_value(p, i, y)
                assert lhs >= fx + g @ (y - x) - 1e-9 * max(1.0, abs(lhs))
    for _ in range(1000):
        x = rng.normal(size=p.d) * rng.uniform(0.01, 100)
        for i in range(p.n):
            assert np.linalg.norm(P.subgradient_i(p, i, x)) <= math.sqrt(p.d) * p.lipschitz_i[i] * (1 + 1e-12)


def test_mean_subgradient_matches_workers():
    p = P.generate(P.GenConfig(n=3, d=9, noise_scale=1.0, seed=6))
    x = np.random.default_rng(2).normal(size=9)
    want = np.mean([P.subgradient_i(p, i, x) for i in range(3)], axis=0)
    np.testing.assert_allclose(P.subgradient(p, x), want, atol=1e-14)


@given(configs, st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_convexity(cfg, seed, theta):
    p = P.generate(cfg)
    x, y = np.random.default_rng(seed).normal(size=(2, p.d))
    for i in range(p.n):
        mid = P.f_i_value(p, i, theta * x + (1 - theta) * y)
        assert mid <= theta * P.f_i_value(p, i, x) + (1 - theta) * P.f_i_value(p, i, y) + 1e-9


def test_sigma_A_examples():
    assert P.sigma_A_from_norms([1.0, 3.0]) == 1.0
    assert P.sigma_A_from_norms([2.5]) == 0.0
    assert P.sigma_A_from_norms([0.1] * 7) == 0.0
    p = P.generate(P.GenConfig(n=1, d=10, noise_scale=5.0, seed=3))
    assert P.sigma_A(p) == 0.0
    q = P.generate(P.GenConfig(n=6, d=10, noise_scale=1.0, seed=3))
    norms = [np.max(np.abs(np.linalg.eigvalsh(dense_tridiag(10, m.scale, m.shift)))) for m in q.matrices]
    assert P.sigma_A(q) == pytest.approx(np.std(norms), rel=1e-9)


def test_json_round_trip_is_bitwise(tmp_path):
    p = P.generate(P.GenConfig(n=4, d=16, noise_scale=1.0, seed=77))
    path = tmp_path / "p.json"
    P.save(p, path)
    q = P.load(path)
    assert q.matrices == p.matrices
    assert np.array_equal(q.x0, p.x0)
    assert q.constants == p.constants
    assert q.config == p.config
    data = json.loads(path.read_text())
    assert set(data) == {"n", "d", "mu", "noise_scale", "seed", "scales", "shift", "x0"}


def test_json_rejects_bad_files():
    p = P.generate(P.GenConfig(n=2, d=4, seed=1))
    data = P.to_json_dict(p)
    with pytest.raises(ValueError):
        P.from_json_dict({**data, "extra": 1})
    with pytest.raises(ValueError):
        P.from_json_dict({k: v for k, v in data.items() if k != "x0"})
    with pytest.raises(ValueError):
        P.from_json_dict({**data, "scales": [1.0]})


def test_gen_config_validation():
    for bad in (dict(n=0, d=1), dict(n=1, d=0), dict(n=1, d=1, mu=0.0), dict(n=1, d=1, noise_scale=-1.0)):
        with pytest.raises(ValueError):
            P.GenConfig(**bad)
