import math

import numpy as np
import pytest

import cprpca


def test_operators():
    S = np.array([[5.0, -1.0, 0.5], [0.2, 4.0, -3.0], [1.0, 1.0, 1.0]])
    T = cprpca.truncate_sparse(S, 0.34)
    assert T.shape == S.shape
    assert T[0, 0] == 5.0 and T[0, 1] == 0.0
    H = cprpca.hard_threshold(S, 2)
    assert np.count_nonzero(H) == 2
    assert H[0, 0] == 5.0 and H[1, 1] == 4.0
    F = cprpca.project_incoherent(np.array([[3.0, 4.0], [0.3, 0.4]]), 1.0)
    assert np.allclose(F, [[0.6, 0.8], [0.3, 0.4]])


def test_weighted_quantile():
    assert cprpca.weighted_quantile([1.0, 2.0, 3.0], [0.25, 0.25, 0.25], 0.25, 0.5) == 2.0
    assert math.isinf(cprpca.weighted_quantile([1.0, 2.0], [0.3, 0.3], 0.4, 0.9))
    with pytest.raises(ValueError):
        cprpca.weighted_quantile([1.0], [1.0], 0.0, 1.5)


def test_solve_recovers_low_rank():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 2)) @ rng.standard_normal((2, 30))
    out = cprpca.solve(X, np.ones_like(X), rank=2, beta=0.0)
    assert np.linalg.norm(out["Xhat"] - X) / np.linalg.norm(X) < 1e-3


def test_split_cp_on_generated_setting():
    g = cprpca.generate(1, 40, rank_true=2, seed=3)
    res = cprpca.split_cp(g["Y"], g["mask"], rank=2, bootstrap=3, seed=3)
    missing = g["mask"] == 0
    assert np.all(np.isnan(res["lower"][~missing]))
    lo, hi, t = res["lower"][missing], res["upper"][missing], g["target"][missing]
    assert np.all(lo <= hi)
    assert np.mean((lo <= t) & (t <= hi)) > 0.7
    again = cprpca.split_cp(g["Y"], g["mask"], rank=2, bootstrap=3, seed=3)
    assert np.array_equal(res["upper"], again["upper"], equal_nan=True)


def test_run_replicate_and_errors():
    m = cprpca.run_replicate(1, 30, 2, rank_true=2, bootstrap=2)
    assert 0.0 <= m["avg_cov"] <= 1.0
    assert m["n_targets"] > 0
    with pytest.raises(KeyError):
        cprpca.generate(99, 10)
    with pytest.raises(ValueError):
        cprpca.solve(np.zeros((4, 4)), np.ones((4, 4)), rank=9)
    with pytest.raises(ValueError):
        cprpca.solve(np.zeros((4, 4)), np.ones((4, 4)), rank=1, options={"bogus": 1})
