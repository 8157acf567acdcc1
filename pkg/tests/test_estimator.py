"""Estimator core: priorize, decompose, objective/gradient, descent loop,
restricted L1 refinement, and the fit pipeline."""

import numpy as np
import pytest

import gmgm
from gmgm.errors import ConvergenceError, NotPositiveDefiniteError
from gmgm.estimator import (
    AxisSpectrum,
    EstimatorConfig,
    PriorSpec,
    decompose,
    estimate_eigenvalues,
    fit,
    gradient,
    objective,
    priorize,
    project_gradient,
    recompose,
    restricted_l1_refine,
)
from gmgm.tensors import Dataset, GramSet, Modality, kron_sum_dense

from conftest import rng


def _spectra_from(p_values):
    return {
        name: AxisSpectrum(np.eye(len(p)), np.asarray(p, dtype=float))
        for name, p in p_values.items()
    }


# ---------------------------------------------------------------- priorize

def test_priorize_no_prior():
    gs = GramSet({"a": 2 * np.eye(3)})
    np.testing.assert_allclose(priorize(gs)["a"], np.eye(3))


def test_priorize_wishart_identity_scale():
    gs = GramSet({"a": np.eye(2)})
    pr = {"a": PriorSpec("wishart", np.eye(2), degrees_of_freedom=5)}
    np.testing.assert_allclose(priorize(gs, pr)["a"], np.eye(2))


def test_priorize_wishart_diagonal_scale():
    gs = GramSet({"a": np.zeros((2, 2))})
    pr = {"a": PriorSpec("wishart", np.diag([2.0, 4.0]), degrees_of_freedom=5)}
    np.testing.assert_allclose(priorize(gs, pr)["a"], np.diag([0.25, 0.125]))


def test_prior_spec_validation():
    with pytest.raises(ValueError):
        PriorSpec("gamma")
    with pytest.raises(ValueError, match="degrees of freedom"):
        PriorSpec("wishart", np.eye(3), degrees_of_freedom=1.5)
    with pytest.raises(ValueError, match="symmetric"):
        PriorSpec("wishart", np.array([[1.0, 2.0], [0.0, 1.0]]), degrees_of_freedom=5)


# ---------------------------------------------------------------- decompose

def test_decompose_diag():
    v, p = decompose(np.diag([1.0, 3.0]))
    np.testing.assert_allclose(p, [3.0, 1.0])
    np.testing.assert_allclose(np.abs(v), [[0, 1], [1, 0]])


def test_decompose_2x2():
    v, p = decompose(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(p, [3.0, 1.0])
    np.testing.assert_allclose(np.abs(v), np.full((2, 2), 1 / np.sqrt(2)))


def test_decompose_reconstructs():
    m = rng(1).normal(size=(6, 6))
    m = m + m.T
    v, p = decompose(m)
    np.testing.assert_allclose(recompose(v, p), m, atol=1e-10)
    assert np.all(np.diff(p) <= 0)


def test_decompose_rejects_asymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        decompose(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_recompose_eigenvalues():
    m = rng(3).normal(size=(4, 4))
    v, _ = decompose(m + m.T)
    lam = np.array([3.0, 1.0, -2.0, 0.5])
    out = recompose(v, lam)
    np.testing.assert_allclose(np.linalg.eigvalsh(out), np.sort(lam), atol=1e-10)


# ------------------------------------------------------------ obj/gradient

def test_objective_single_axis_closed_form():
    e = np.array([0.5, 2.0, 1.0])
    structure = [("a",)]
    lam_star = {"a": 1.0 / e}
    p = {"a": e / 2}
    val = objective(lam_star, p, structure)
    expected = 0.5 * np.sum(e * (1 / e)) - 0.5 * np.sum(np.log(1 / e))
    assert val == pytest.approx(expected, rel=1e-12)
    g = gradient(lam_star, p, structure)
    np.testing.assert_allclose(g["a"], 0.0, atol=1e-12)


def test_objective_all_ones_log_term():
    p = {"a": np.array([0.3, 0.7]), "b": np.array([0.1, 0.9])}
    lam = {"a": np.ones(2), "b": np.ones(2)}
    val = objective(lam, p, [("a", "b")])
    expected = sum(v.sum() for v in p.values()) - 0.5 * 4 * np.log(2.0)
    assert val == pytest.approx(expected, rel=1e-12)


def test_objective_matches_dense_oracle():
    r = rng(4)
    sizes = {"a": 3, "b": 2}
    lam = {k: r.uniform(0.5, 2.0, s) for k, s in sizes.items()}
    p = {k: r.uniform(0.1, 1.0, s) for k, s in sizes.items()}
    structure = [("a", "b")]
    val = objective(lam, p, structure)
    dense = kron_sum_dense([np.diag(lam["a"]), np.diag(lam["b"])])
    expected = sum(float(p[k] @ lam[k]) for k in sizes) - 0.5 * np.linalg.slogdet(dense)[1]
    assert val == pytest.approx(expected, rel=1e-9)


def test_objective_rejects_nonpd():
    with pytest.raises(NotPositiveDefiniteError):
        objective({"a": np.array([-1.0, 1.0]), "b": np.array([0.5])},
                  {"a": np.ones(2), "b": np.ones(1)}, [("a", "b")])


def test_gradient_derived_example():
    lam = {"a": np.array([1.0, 2.0]), "b": np.array([3.0, 4.0])}
    p = {"a": np.zeros(2), "b": np.zeros(2)}
    g = gradient(lam, p, [("a", "b")])
    np.testing.assert_allclose(g["a"], [-0.5 * (1 / 4 + 1 / 5), -0.5 * (1 / 5 + 1 / 6)])


def test_gradient_wishart_term():
    e = np.array([1.0, 2.0])
    lam = {"a": np.array([2.0, 3.0])}
    prior = {"a": PriorSpec("wishart", np.eye(2), degrees_of_freedom=6.0)}
    g = gradient(lam, {"a": e}, [("a",)], prior)
    # h'(lam) = (n - d - 1) / (2 lam) with n=6, d=2
    expected = e - 0.5 / lam["a"] - 1.5 / lam["a"]
    np.testing.assert_allclose(g["a"], expected)


def test_project_gradient():
    np.testing.assert_allclose(project_gradient(np.array([1.0, 3.0]), 1), [1.0, 3.0])
    np.testing.assert_allclose(project_gradient(np.array([5.0, 5.0]), 2), [2.5, 2.5])
    np.testing.assert_allclose(project_gradient(np.array([1.0, 3.0]), 2), [0.0, 2.0])


# --------------------------------------------------------------- descent

def test_estimate_single_axis_closed_form():
    e = np.array([2.0, 1.0, 0.5])
    spectra = _spectra_from({"a": e / 2})
    lam, info = estimate_eigenvalues(spectra, [("a",)],
                                     EstimatorConfig(tolerance=1e-10, max_iterations=10000))
    assert info["converged"]
    np.testing.assert_allclose(lam["a"], 1.0 / e, atol=1e-6)


def test_estimate_monotone_descent():
    r = rng(5)
    p = {"a": r.uniform(0.2, 1.0, 4), "b": r.uniform(0.2, 1.0, 3)}
    spectra = _spectra_from(p)
    _, info = estimate_eigenvalues(spectra, [("a", "b")],
                                   EstimatorConfig(max_iterations=200))
    trace = np.array(info["objective_trace"])
    assert np.all(np.diff(trace) <= 1e-12 * (1 + np.abs(trace[:-1])))


def test_estimate_rank_deficient_frozen():
    p = {"a": np.array([1.0, 0.5, 0.0]), "b": np.array([0.7, 0.3])}
    spectra = _spectra_from(p)
    cfg = EstimatorConfig(max_iterations=5000)
    lam, info = estimate_eigenvalues(spectra, [("a", "b")], cfg)
    assert info["flagged_axes"] == ["a"]
    assert lam["a"][2] == pytest.approx(cfg.eigenvalue_cap)


def test_estimate_step_underflow_raises():
    # An impossible configuration: tolerance unreachable and pd_margin huge,
    # so every candidate violates positive definiteness until mu underflows.
    p = {"a": np.array([10.0, 10.0])}
    spectra = _spectra_from(p)
    cfg = EstimatorConfig(pd_margin=1.0, max_iterations=100000, tolerance=1e-300)
    with pytest.raises(ConvergenceError) as exc_info:
        estimate_eigenvalues(spectra, [("a",)], cfg)
    assert "mu" in exc_info.value.diagnostics


# ---------------------------------------------------------------- L1

def test_l1_zero_strength_noop():
    p = {"a": np.array([1.0, 0.5])}
    spectra = _spectra_from(p)
    spectra["a"].precision_eigenvalues = np.array([1.0, 2.0])
    lam, info = restricted_l1_refine(spectra, [("a",)], EstimatorConfig())
    np.testing.assert_array_equal(lam["a"], [1.0, 2.0])
    assert info["iterations"] == 0


def test_l1_identity_eigenvectors_noop():
    # With V = I the recomposed matrix is diagonal: no off-diagonal signs,
    # so the penalty subgradient vanishes and the MLE stationary point stays.
    e = np.array([2.0, 1.0])
    spectra = _spectra_from({"a": e / 2})
    cfg = EstimatorConfig(tolerance=1e-10, max_iterations=20000, l1_strength=0.5)
    lam, _ = estimate_eigenvalues(spectra, [("a",)], cfg)
    for name, s in spectra.items():
        s.precision_eigenvalues = lam[name]
    lam2, info = restricted_l1_refine(spectra, [("a",)], cfg, mu_init=1.0)
    np.testing.assert_allclose(lam2["a"], lam["a"], atol=1e-8)


def test_l1_subgradient_matches_directional_differences():
    from gmgm.estimator import _l1_subgradients

    r = rng(6)
    m = r.normal(size=(4, 4))
    v, _ = decompose(m + m.T)
    lam = {"a": np.array([3.0, 2.0, 1.5, 1.0])}
    spectra = {"a": AxisSpectrum(v, np.zeros(4))}
    rho = 0.7

    def penalty(l):
        mat = recompose(v, l)
        return rho * (np.abs(mat).sum() - np.abs(np.diag(mat)).sum())

    g = _l1_subgradients(lam, spectra, rho)["a"]
    h = 1e-6
    for i in range(4):
        lp = lam["a"].copy(); lp[i] += h
        lm = lam["a"].copy(); lm[i] -= h
        fd = (penalty(lp) - penalty(lm)) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_l1_shrinks_offdiagonals():
    r = rng(7)
    truths = [gmgm.gen_er_precision(6, 0.4, 1), gmgm.gen_ar1_precision(5, 0.4)]
    samples = gmgm.sample_ks_normal(truths, 40, 2)
    ds = Dataset({"a": 6, "b": 5}, [Modality("m", ("a", "b"), list(samples))])
    plain = fit(ds, config=EstimatorConfig(tolerance=1e-9, max_iterations=20000))
    strong = fit(ds, config=EstimatorConfig(tolerance=1e-9, max_iterations=20000,
                                            l1_strength=0.3, l1_max_iterations=20000))
    for ax in ("a", "b"):
        off = lambda m: np.abs(m - np.diag(np.diag(m))).sum()
        assert off(strong.precision(ax)) < off(plain.precision(ax))


# ---------------------------------------------------------------- fit

def test_fit_shared_axis_single_spectrum():
    r = rng(8)
    ds = Dataset({"rows": 4, "c1": 3, "c2": 5},
                 [Modality("m1", ("rows", "c1"), [r.normal(size=(4, 3))]),
                  Modality("m2", ("rows", "c2"), [r.normal(size=(4, 5))])])
    res = fit(ds, config=EstimatorConfig(max_iterations=500))
    assert set(res.spectra) == {"rows", "c1", "c2"}


def test_fit_eigenvectors_commute_with_gram():
    r = rng(9)
    truths = [gmgm.gen_er_precision(5, 0.4, 3), gmgm.gen_ar1_precision(4, 0.5)]
    samples = gmgm.sample_ks_normal(truths, 10, 4)
    ds = Dataset({"a": 5, "b": 4}, [Modality("m", ("a", "b"), list(samples))])
    res = fit(ds, config=EstimatorConfig(max_iterations=2000))
    grams = gmgm.compute_grams(ds)
    for ax in ("a", "b"):
        psi, s = res.precision(ax), grams[ax]
        comm = np.abs(psi @ s - s @ psi).max()
        assert comm < 1e-8 * np.abs(s).max() * np.abs(psi).max()


def test_fit_all_zero_data_errors():
    ds = Dataset({"a": 3, "b": 2}, [Modality("m", ("a", "b"), [np.zeros((3, 2))])])
    with pytest.raises(ValueError, match="rank zero"):
        fit(ds)


def test_fit_wishart_dof_monotone():
    # 1-axis: stationarity gives lambda_i = (n - d) / (2 p_i); larger dof,
    # larger eigenvalues.
    eps = 0.1
    ds = Dataset({"a": 3}, [Modality("m", ("a",), [np.full(3, np.sqrt(eps))])])
    lams = []
    for dof in (4.0, 8.0, 16.0):
        pr = {"a": PriorSpec("wishart", np.eye(3), degrees_of_freedom=dof)}
        res = fit(ds, priors=pr,
                  config=EstimatorConfig(tolerance=1e-10, max_iterations=100000))
        assert res.converged
        lams.append(np.sort(res.spectra["a"].precision_eigenvalues))
    assert np.all(lams[1] > lams[0]) and np.all(lams[2] > lams[1])


def test_estimator_config_validation():
    with pytest.raises(ValueError):
        EstimatorConfig(tolerance=0)
    with pytest.raises(ValueError):
        EstimatorConfig(backtrack_factor=1.0)
    with pytest.raises(ValueError):
        EstimatorConfig(l1_strength=-1)
