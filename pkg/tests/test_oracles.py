import math

import numpy as np
import pytest
from scipy.linalg import null_space

from blockcert.errors import KernelTooLarge, TooLarge
from blockcert.oracles import (
    OracleConfig, oracle_f_s, oracle_omega, oracle_rho, oracle_s_star, sphere_directions,
)

from conftest import gaussian


def test_config_validation():
    with pytest.raises(ValueError):
        OracleConfig(direction_samples=4)
    with pytest.raises(ValueError):
        OracleConfig(restarts=0)


def test_directions_nested_and_unit():
    small = sphere_directions(3, 16)
    big = sphere_directions(3, 40)
    np.testing.assert_array_equal(big[:len(small)], small)
    np.testing.assert_allclose(np.linalg.norm(big, axis=1), 1.0)
    np.testing.assert_array_equal(sphere_directions(1, 32), [[1.0], [-1.0]])


def test_f_s_examples():
    assert oracle_f_s(np.eye(3), 1, 2.0, 0.0) == 0.0
    assert oracle_f_s(np.eye(3), 1, 2.0, 10.0) == pytest.approx(1.0, abs=1e-6)


def test_f_s_monotone_and_linear_start():
    A = gaussian(4, 2, 3, seed=1)
    s = 1.5
    vals = [oracle_f_s(A, 2, s, eta) for eta in (1e-4, 0.1, 0.5, 1.0, 2.0)]
    assert all(b >= a - 1e-7 for a, b in zip(vals, vals[1:]))
    assert vals[0] >= s * 1e-4 * (1 - 1e-6)


def test_f_s_refines_with_directions():
    A = gaussian(4, 2, 3, seed=2)
    coarse = oracle_f_s(A, 2, 1.5, 0.7, cfg=OracleConfig(direction_samples=8))
    fine = oracle_f_s(A, 2, 1.5, 0.7, cfg=OracleConfig(direction_samples=32))
    assert fine >= coarse - 1e-7


def test_size_caps():
    with pytest.raises(TooLarge):
        oracle_f_s(np.eye(14), 2, 2.0, 1.0)
    with pytest.raises(KernelTooLarge):
        oracle_s_star(np.ones((1, 8)), 1)


def test_s_star_hand_instances():
    assert oracle_s_star(np.array([[1.0, 1.0]]), 1) == pytest.approx(2.0, abs=1e-9)
    assert math.isinf(oracle_s_star(np.eye(3), 1))
    z = np.array([2.0, -1.0, -1.0, 0.5])
    A = null_space(z[None, :]).T
    assert oracle_s_star(A, 1) == pytest.approx(4.5 / 2.0, abs=1e-6)


def test_omega_direct_matches_bisection():
    A = gaussian(5, 2, 4, seed=3)
    for target in ("omega2", "omegabinf"):
        a = oracle_omega(A, 2, 1.5, target)
        b = oracle_omega(A, 2, 1.5, target, OracleConfig(method="bisection", tol=1e-9))
        assert a == pytest.approx(b, rel=1e-5)


def test_omega_scalar_grid_crosscheck():
    # n = 1: min ||Az||_2 / ||z||_inf over ||z||_1 <= s ||z||_inf by a fine grid
    A = gaussian(2, 1, 3, seed=4)
    s = 1.5
    best = math.inf
    grid = np.linspace(-1, 1, 401)
    for i in range(3):
        others = [j for j in range(3) if j != i]
        for a in grid:
            for b in grid:
                z = np.zeros(3)
                z[i] = 1.0
                z[others] = a, b
                if np.abs(z).sum() <= s and np.abs(z).max() <= 1.0:
                    best = min(best, np.linalg.norm(A @ z))
    assert oracle_omega(A, 1, s) == pytest.approx(best, abs=5e-3)
    assert oracle_omega(A, 1, s) <= best + 1e-7


def test_omega_vanishes_near_kernel_ratio():
    A = gaussian(3, 1, 5, seed=5)
    s_up = oracle_s_star(A, 1)
    assert oracle_omega(A, 1, s_up * 1.001) == pytest.approx(0.0, abs=1e-5)
    assert oracle_omega(A, 1, 0.5 * (1 + s_up)) > 1e-3


def test_rho_examples():
    Q = np.linalg.qr(np.random.default_rng(6).standard_normal((8, 6)))[0]
    assert oracle_rho(Q, 2, 2.0) == pytest.approx(1.0, abs=1e-6)
    A = gaussian(5, 2, 3, seed=7)
    per_block = min(np.linalg.svd(A[:, 2 * i:2 * i + 2], compute_uv=False)[-1] for i in range(3))
    assert oracle_rho(A, 2, 1.0) == pytest.approx(per_block, abs=1e-9)


def test_reproducible():
    A = gaussian(4, 2, 5, seed=8)
    assert oracle_s_star(A, 2) == oracle_s_star(A, 2)
    assert oracle_rho(A, 2, 2.0) == oracle_rho(A, 2, 2.0)
