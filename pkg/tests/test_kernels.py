"""Backend kernels: eigenvalue-grid reductions and Kendall's tau, checked
against enumeration oracles and the pure-python fallback."""

import numpy as np
import pytest

from gmgm import kernels
from gmgm._kernels_np import kendall_tau_rows as tau_rows_py
from gmgm._kernels_np import ksum_log_det as log_det_py
from gmgm._kernels_np import ksum_marginals as marginals_py

from conftest import kendall_tau_oracle, marginal_oracle, rng


@pytest.mark.parametrize("sizes", [(3,), (2, 3), (3, 2, 4), (2, 2, 2, 3)])
def test_marginals_match_grid_oracle(sizes):
    r = rng(42)
    eigvals = [r.uniform(0.5, 2.0, s) for s in sizes]
    got = kernels.ksum_marginals(eigvals)
    for t in range(len(sizes)):
        np.testing.assert_allclose(got[t], marginal_oracle(eigvals, t), rtol=1e-12)


@pytest.mark.parametrize("sizes", [(4,), (3, 5), (2, 3, 4)])
def test_marginals_backends_agree(sizes):
    r = rng(7)
    eigvals = [r.uniform(0.1, 3.0, s) for s in sizes]
    compiled = kernels.ksum_marginals(eigvals)
    pure = marginals_py(eigvals)
    for a, b in zip(compiled, pure):
        np.testing.assert_allclose(a, b, rtol=1e-13)


@pytest.mark.parametrize("sizes", [(3,), (2, 4), (3, 3, 2)])
def test_log_det_matches_dense(sizes):
    r = rng(3)
    eigvals = [r.uniform(0.2, 2.0, s) for s in sizes]
    grid = kernels.sum_grid(eigvals)
    np.testing.assert_allclose(
        kernels.ksum_log_det(eigvals), float(np.log(grid).sum()), rtol=1e-12
    )
    np.testing.assert_allclose(
        log_det_py(eigvals), float(np.log(grid).sum()), rtol=1e-12
    )


def test_min_sum():
    eigvals = [np.array([0.5, 2.0]), np.array([3.0, 0.25, 1.0])]
    assert kernels.ksum_min_sum(eigvals) == pytest.approx(0.75)


def test_tau_matches_pair_counting_oracle():
    r = rng(11)
    for trial in range(10):
        n = int(r.integers(3, 30))
        x = r.integers(0, 6, n).astype(float)  # tie-heavy
        y = r.normal(size=n)
        rows = np.vstack([x, y])
        got = kernels.kendall_tau_rows(rows)
        expected = kendall_tau_oracle(x, y)
        assert got[0, 1] == pytest.approx(expected, abs=1e-12)
        assert got[1, 0] == pytest.approx(expected, abs=1e-12)
        assert got[0, 0] == pytest.approx(1.0)


def test_tau_backends_agree():
    r = rng(13)
    rows = r.normal(size=(5, 40))
    np.testing.assert_allclose(
        kernels.kendall_tau_rows(rows), tau_rows_py(rows), atol=1e-12
    )


def test_tau_constant_row_is_nan():
    rows = np.vstack([np.ones(10), np.arange(10.0)])
    got = kernels.kendall_tau_rows(rows)
    assert np.isnan(got[0, 1])


def test_tau_perfect_orders():
    x = np.arange(20.0)
    rows = np.vstack([x, 2 * x + 1, -x])
    got = kernels.kendall_tau_rows(rows)
    assert got[0, 1] == pytest.approx(1.0)
    assert got[0, 2] == pytest.approx(-1.0)
