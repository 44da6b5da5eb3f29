import numpy as np
import pytest

from selflab import distribution


def test_init_from_corpus_counting():
    maps = [np.array([[0, 1]]), np.array([[1, 1]])]
    assert np.allclose(distribution.init_from_corpus(maps, 2), [0.25, 0.75])


def test_init_from_corpus_single_class():
    assert np.allclose(distribution.init_from_corpus([np.zeros((2, 2), int)], 3), [1, 0, 0])


def test_init_from_corpus_matches_global_histogram():
    rng = np.random.default_rng(20)
    maps = [rng.integers(0, 6, size=(8, 8)) for _ in range(20)]
    got = distribution.init_from_corpus(maps, 6)
    flat = np.concatenate([m.ravel() for m in maps])
    expected = np.array([(flat == c).sum() for c in range(6)]) / flat.size
    assert np.allclose(got, expected)


def test_init_from_corpus_empty_rejected():
    with pytest.raises(ValueError):
        distribution.init_from_corpus([], 3)
    with pytest.raises(ValueError):
        distribution.init_from_corpus([np.full((2, 2), 3)], 3)  # all ignore


def test_ema_endpoints():
    d = np.array([0.7, 0.3])
    obs = np.array([0.2, 0.8])
    assert np.array_equal(distribution.ema_update(d, obs, 1.0), d)
    assert np.array_equal(distribution.ema_update(d, obs, 0.0), obs)


def test_ema_geometric_contraction():
    d = np.array([1.0, 0.0, 0.0])
    target = np.array([0.2, 0.3, 0.5])
    err0 = np.abs(d - target).sum()
    cur = d
    for k in range(1, 8):
        cur = distribution.ema_update(cur, target, 0.9)
        assert abs(np.abs(cur - target).sum() - err0 * 0.9**k) < 1e-12
        assert abs(cur.sum() - 1.0) < 1e-12


def test_ema_stays_on_simplex():
    rng = np.random.default_rng(21)
    cur = rng.dirichlet(np.ones(5))
    for _ in range(50):
        cur = distribution.ema_update(cur, rng.dirichlet(np.ones(5)), 0.99)
        assert (cur >= 0).all()
        assert abs(cur.sum() - 1.0) < 1e-9


def test_as_marginal_identity_when_above_floor():
    d = np.array([0.5, 0.3, 0.2])
    out = distribution.as_marginal(d, 1e-4)
    assert np.abs(out - d).max() < 1e-12


def test_as_marginal_one_hot():
    out = distribution.as_marginal(np.array([1.0, 0.0, 0.0]), 0.01)
    assert np.allclose(out, [0.98, 0.01, 0.01], atol=1e-12)
    assert abs(out.sum() - 1.0) < 1e-12


def test_as_marginal_zero_class_gets_floor():
    d = np.array([0.6, 0.4, 0.0])
    out = distribution.as_marginal(d, 1e-4)
    assert out[2] == 1e-4
    assert abs(out.sum() - 1.0) < 1e-12
    assert (out >= 1e-4).all()


def test_as_marginal_cascading_pins():
    # rescaling drags a second entry under the floor; pinning must repeat
    d = np.array([0.29, 0.3, 0.41])
    out = distribution.as_marginal(d, 0.3)
    assert np.allclose(out, [0.3, 0.3, 0.4], atol=1e-12)
    assert (out >= 0.3 - 1e-15).all()


def test_as_marginal_rejects_bad_floor():
    with pytest.raises(ValueError):
        distribution.as_marginal(np.array([0.5, 0.5]), 0.6)


def test_simplex_validation():
    with pytest.raises(ValueError):
        distribution.ema_update(np.array([0.5, 0.6]), np.array([0.5, 0.5]), 0.5)
    with pytest.raises(ValueError):
        distribution.ema_update(np.array([0.5, 0.5]), np.array([0.5, 0.5]), 1.5)
