"""Generators, the exact sampler, and the dense brute-force oracle."""

import numpy as np
import pytest

import gmgm
from gmgm.errors import NotPositiveDefiniteError
from gmgm.synth import (
    GroundTruth,
    brute_force_fit,
    gen_ar1_precision,
    gen_er_precision,
    sample_ks_normal,
)
from gmgm.tensors import Dataset, Modality, kron_sum_dense

from conftest import rng


# ------------------------------------------------------------- generators

def test_er_no_edges():
    np.testing.assert_allclose(gen_er_precision(4, 0.0, 1), 0.5 * np.eye(4))


def test_er_full_2x2():
    m = gen_er_precision(2, 1.0, 5)
    w = m[0, 1]
    assert 0.2 <= abs(w) <= 1.0
    np.testing.assert_allclose(np.diag(m), abs(w) + 0.5)
    assert np.linalg.eigvalsh(m)[0] > 0


def test_er_edge_count_statistics():
    d, p = 50, 0.02
    n_pairs = d * (d - 1) // 2
    counts = []
    for seed in range(20):
        m = gen_er_precision(d, p, seed)
        counts.append(np.count_nonzero(np.triu(m, 1)))
    mean = np.mean(counts)
    sigma = np.sqrt(n_pairs * p * (1 - p) / 20)
    assert abs(mean - n_pairs * p) < 3 * sigma


def test_er_deterministic_and_spd():
    for seed in (1, 2, 3):
        a = gen_er_precision(30, 0.1, seed)
        b = gen_er_precision(30, 0.1, seed)
        np.testing.assert_array_equal(a, b)
        assert np.linalg.eigvalsh(a)[0] > 0


def test_er_validation():
    with pytest.raises(ValueError):
        gen_er_precision(0, 0.5, 1)
    with pytest.raises(ValueError):
        gen_er_precision(3, 1.5, 1)


def test_ar1_identity_at_zero():
    np.testing.assert_allclose(gen_ar1_precision(4, 0.0), np.eye(4))


def test_ar1_formula():
    m = gen_ar1_precision(3, 0.5)
    np.testing.assert_allclose(np.diag(m), [1.0, 1.25, 1.0])
    assert m[0, 1] == -0.5 and m[1, 2] == -0.5 and m[0, 2] == 0.0


def test_ar1_inverse_is_analytic_covariance():
    phi, d = 0.6, 5
    m = gen_ar1_precision(d, phi)
    cov = np.linalg.inv(m)
    i, j = np.indices((d, d))
    expected = phi ** np.abs(i - j) / (1 - phi**2)
    np.testing.assert_allclose(cov, expected, atol=1e-10)


def test_ar1_validation():
    with pytest.raises(ValueError):
        gen_ar1_precision(3, 1.0)


def test_ground_truth_edges():
    m = np.array([[1.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 1.0]])
    gt = GroundTruth({"a": m})
    assert gt.edge_set("a") == {(0, 1)}


# --------------------------------------------------------------- sampler

def test_sampler_identity_marginal_variance():
    z = sample_ks_normal([np.eye(2), np.eye(3)], 50000, 1)
    var = z.var(axis=0)
    np.testing.assert_allclose(var, 0.5, atol=0.02)


def test_sampler_one_axis_reduces_to_mvn():
    psi = gen_er_precision(4, 0.5, 2)
    z = sample_ks_normal([psi], 200000, 3)
    emp = np.cov(z.T)
    np.testing.assert_allclose(emp, np.linalg.inv(psi), atol=0.02)


def test_sampler_matches_dense_kron_sum_inverse():
    psis = [gen_er_precision(3, 0.6, 4), gen_ar1_precision(2, 0.5)]
    z = sample_ks_normal(psis, 200000, 5)
    flat = z.reshape(z.shape[0], -1)
    emp = flat.T @ flat / flat.shape[0]
    expected = np.linalg.inv(kron_sum_dense(psis))
    mask = np.abs(expected) >= 0.05
    rel = np.abs(emp - expected)[mask] / np.abs(expected)[mask]
    assert rel.max() < 0.02


def test_sampler_rejects_non_spd():
    bad = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NotPositiveDefiniteError):
        sample_ks_normal([bad, np.eye(2)], 1, 1)


def test_sampler_deterministic():
    psis = [np.eye(3), np.eye(2)]
    np.testing.assert_array_equal(
        sample_ks_normal(psis, 3, 9), sample_ks_normal(psis, 3, 9)
    )


# ------------------------------------------------------------ brute force

def test_brute_force_one_axis_inverse_gram():
    r = rng(6)
    x = [r.normal(size=4) for _ in range(12)]
    ds = Dataset({"a": 4}, [Modality("m", ("a",), x)])
    psi = brute_force_fit(ds)["a"]
    s = gmgm.effective_gram(ds)["a"]
    np.testing.assert_allclose(psi, np.linalg.inv(s), atol=1e-8)


def test_brute_force_stationarity_residual():
    r = rng(7)
    ds = Dataset({"a": 3, "b": 2},
                 [Modality("m", ("a", "b"), [r.normal(size=(3, 2)) for _ in range(6)])])
    psis = brute_force_fit(ds)
    from gmgm.synth import _brute_gradient
    grams = gmgm.effective_gram(ds).matrices
    g = _brute_gradient(psis, grams, ds.structure(), {})
    assert max(np.abs(m).max() for m in g.values()) < 1e-8


def test_brute_force_size_cap():
    ds = Dataset({"a": 10, "b": 10},
                 [Modality("m", ("a", "b"), [np.ones((10, 10))])])
    with pytest.raises(ValueError, match="cap"):
        brute_force_fit(ds)
