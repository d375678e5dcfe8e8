"""Initialization tests.

Covers:
  - exact rank-1 recovery and the zero-matrix case
  - determinism (bit-identical repeats) and nonnegativity
  - the seed never fits worse than the zero factorization
  - beats a mean-scaled all-ones baseline on random data
  - AR weight seeding: exact recovery, normal-equation oracle, scale
    invariance, zero rows, empty lag sets
"""

import numpy as np
import pytest

from ttnmf.errors import ConfigError
from ttnmf.factors import LagSet, build_lag_design_matrix
from ttnmf.initialization import init_factors_svd, init_lag_weights


# ------------------------------------------------------------- factor seed

def test_rank1_matrix_recovered_exactly():
    rng = np.random.default_rng(0)
    u = rng.random(8) + 0.1
    v = rng.random(15) + 0.1
    x = np.outer(u, v)
    w, h = init_factors_svd(x, 1)
    rel = np.linalg.norm(x - w @ h) / np.linalg.norm(x)
    assert rel <= 1e-10
    assert w.min() >= 0 and h.min() >= 0


def test_zero_matrix_gives_zero_factors():
    w, h = init_factors_svd(np.zeros((4, 6)), 2)
    assert not w.any() and not h.any()
    assert w.shape == (4, 2) and h.shape == (2, 6)


def test_rank_bounds():
    x = np.ones((3, 5))
    with pytest.raises(ConfigError):
        init_factors_svd(x, 0)
    with pytest.raises(ConfigError):
        init_factors_svd(x, 4)


def test_seed_never_worse_than_zero_factorization():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(2, 12))
        T = int(rng.integers(2, 20))
        k = int(rng.integers(1, min(n, T) + 1))
        x = rng.random((n, T)) * rng.uniform(0.1, 50)
        w, h = init_factors_svd(x, k)
        assert w.min() >= 0 and h.min() >= 0
        assert np.linalg.norm(x - w @ h) <= np.linalg.norm(x) * (1 + 1e-12)


def test_seed_beats_flat_baseline():
    rng = np.random.default_rng(2)
    x = rng.random((20, 50))
    w, h = init_factors_svd(x, 4)
    rel = np.linalg.norm(x - w @ h) / np.linalg.norm(x)
    baseline = np.full_like(x, x.mean())
    rel_baseline = np.linalg.norm(x - baseline) / np.linalg.norm(x)
    assert rel < rel_baseline


def test_seed_deterministic():
    rng = np.random.default_rng(3)
    x = rng.random((9, 13))
    w1, h1 = init_factors_svd(x, 3)
    w2, h2 = init_factors_svd(x, 3)
    assert np.array_equal(w1, w2) and np.array_equal(h1, h2)


# ---------------------------------------------------------- AR weight seed

def test_lag_weights_recover_exact_ar():
    ls = LagSet([1, 2])
    true = np.array([[0.6, 0.3], [0.2, 0.5]])
    rng = np.random.default_rng(4)
    T = 40
    latent = np.zeros((2, T))
    latent[:, :2] = rng.uniform(0.5, 2.0, size=(2, 2))
    for t in range(2, T):
        latent[:, t] = true[:, 0] * latent[:, t - 1] \
            + true[:, 1] * latent[:, t - 2]
    got = init_lag_weights(latent, ls)
    np.testing.assert_allclose(got, true, atol=1e-8)


def test_lag_weights_match_normal_equation_oracle():
    latent = np.array([[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]])
    ls = LagSet([1])
    design = build_lag_design_matrix(latent, 0, ls)
    # one regressor: omega = <h, d> / <d, d>, then clipped at 0
    oracle = max(float(latent[0] @ design[0]) / float(design[0] @ design[0]), 0.0)
    got = init_lag_weights(latent, ls)
    assert got.shape == (1, 1)
    assert got[0, 0] == pytest.approx(oracle, rel=1e-12)
    assert oracle == pytest.approx(70.0 / 55.0)


def test_lag_weights_zero_row_and_empty_set():
    assert not init_lag_weights(np.zeros((2, 6)), LagSet([1, 2])).any()
    out = init_lag_weights(np.ones((3, 6)), LagSet())
    assert out.shape == (3, 0)


def test_lag_weights_nonnegative():
    # an anti-correlated row would fit a negative weight; projection clips it
    latent = np.array([[1.0, -0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]])
    got = init_lag_weights(latent, LagSet([1]))
    assert got.min() >= 0.0


def test_lag_weights_scale_invariant():
    rng = np.random.default_rng(5)
    latent = rng.random((2, 25))
    ls = LagSet([1, 3])
    base = init_lag_weights(latent, ls)
    scaled = init_lag_weights(7.3 * latent, ls)
    np.testing.assert_allclose(scaled, base, atol=1e-10)


def test_lag_weights_rejects_long_lag():
    with pytest.raises(ConfigError):
        init_lag_weights(np.ones((1, 4)), LagSet([4]))
