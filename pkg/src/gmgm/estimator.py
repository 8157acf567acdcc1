"""The estimator proper: one eigendecomposition per axis, then projected
gradient descent over precision eigenvalues, with an optional restricted-L1
refinement phase and on-demand recomposition of dense precision matrices.

The driving facts: the effective Gram matrices are sufficient statistics,
their eigenvectors are already the estimate's eigenvectors (also under any
unitarily invariant prior, using the priorized Gram), and the remaining
problem over eigenvalues is convex with a cheap gradient that never touches
the full Kronecker sum.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._threads import get_num_threads
from .errors import ConvergenceError, NotPositiveDefiniteError
from .kernels import ksum_log_det, ksum_marginals
from .preprocess import PreprocessSpec, apply_value_steps, nonparanormal_gram
from .tensors import Dataset, GramSet, effective_gram, gram

# Gram eigenvalues at or below RANK_TOL * max are treated as rank deficiency:
# the MLE diverges along them, so those precision eigenvalues are pinned at
# 1/(pd_margin * cap_epsilon) and excluded from the iteration.
RANK_TOL = 1e-10

# Step-size recovery: after this many consecutive non-backtracked steps the
# learning rate creeps back up (factor 1.1, capped at its current ceiling).
_RECOVERY_STREAK = 5
_RECOVERY_FACTOR = 1.1
_MU_UNDERFLOW = 1e-16

# Oscillation handling: when consecutive gradients point in opposing
# directions for this many steps, the iterate is cycling around a stiff
# direction at a step size the objective check cannot distinguish from
# roundoff; halving the step-size ceiling damps the cycle.  The ceiling
# never drops below _MU_FLOOR so soft directions keep moving.
_OSCILLATION_STEPS = 10
_MU_FLOOR = 1e-13
# Consecutive no-improvement iterations that end the penalized phase.
_PLATEAU_STEPS = 10


@dataclass
class AxisSpectrum:
    """Eigendecomposition bundle for one axis."""

    eigenvectors: np.ndarray
    gram_eigenvalues: np.ndarray
    precision_eigenvalues: np.ndarray | None = None


@dataclass
class PriorSpec:
    """Optional conjugate prior for one axis's precision matrix."""

    kind: str = "none"
    scale_matrix: np.ndarray | None = None
    degrees_of_freedom: float | None = None

    def __post_init__(self):
        if self.kind not in ("none", "wishart"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.kind == "wishart":
            theta = np.asarray(self.scale_matrix, dtype=float)
            if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
                raise ValueError("Wishart scale matrix must be square")
            if not np.allclose(theta, theta.T, rtol=1e-10, atol=1e-12):
                raise ValueError("Wishart scale matrix must be symmetric")
            d = theta.shape[0]
            if self.degrees_of_freedom is None or self.degrees_of_freedom <= d - 1:
                raise ValueError("Wishart degrees of freedom must exceed d - 1")
            self.scale_matrix = theta


@dataclass
class EstimatorConfig:
    tolerance: float = 1e-8
    max_iterations: int = 1000
    initial_step: float = 1.0
    backtrack_factor: float = 0.5
    pd_margin: float = 1e-4
    l1_strength: float = 0.0
    l1_max_iterations: int = 1000
    force_projection: bool = True
    cap_epsilon: float = 1e-4

    def __post_init__(self):
        if self.tolerance <= 0 or self.initial_step <= 0 or self.pd_margin <= 0:
            raise ValueError("tolerance, initial_step, pd_margin must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.l1_strength < 0:
            raise ValueError("l1_strength must be nonnegative")

    @property
    def eigenvalue_cap(self):
        return 1.0 / (self.pd_margin * self.cap_epsilon)


@dataclass
class FitResult:
    spectra: dict
    structure: list
    iterations: int
    l1_iterations: int
    objective: float
    converged: bool
    flagged_axes: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def axis_names(self):
        return list(self.spectra)

    def precision(self, axis_name):
        """Materialize the dense precision matrix for one axis."""
        return recompose(
            self.spectra[axis_name].eigenvectors,
            self.spectra[axis_name].precision_eigenvalues,
        )

    def precisions(self):
        return {name: self.precision(name) for name in self.spectra}


def priorize(gram_set, priors=None):
    """Fold priors into the Gram matrices: 1/2 S, plus 1/2 Theta^-1 under a
    Wishart prior (the natural-parameter term of the conjugate density)."""
    priors = priors or {}
    out = {}
    for name in gram_set.axis_names():
        p = 0.5 * np.asarray(gram_set[name], dtype=float)
        prior = priors.get(name)
        if prior is not None and prior.kind == "wishart":
            p = p + 0.5 * np.linalg.inv(prior.scale_matrix)
        out[name] = 0.5 * (p + p.T)
    return out


def decompose(matrix):
    """Full symmetric eigendecomposition, eigenvalues descending."""
    matrix = np.asarray(matrix, dtype=float)
    scale = max(1.0, float(np.abs(matrix).max()))
    if np.abs(matrix - matrix.T).max() > 1e-8 * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    evals, evecs = np.linalg.eigh(0.5 * (matrix + matrix.T))
    order = np.argsort(evals)[::-1]
    return evecs[:, order], evals[order]


def recompose(eigenvectors, eigenvalues):
    """V diag(lambda) V^T, symmetrized against roundoff."""
    v = np.asarray(eigenvectors, dtype=float)
    m = (v * np.asarray(eigenvalues, dtype=float)) @ v.T
    return 0.5 * (m + m.T)


def project_gradient(vec, k_gamma):
    """Remove the modality's share of the trace-shift direction: subtract
    ((K-1)/K) times the mean from every entry."""
    vec = np.asarray(vec, dtype=float)
    if k_gamma < 1:
        raise ValueError("modality axis count must be >= 1")
    if k_gamma == 1:
        return vec.copy()
    return vec - ((k_gamma - 1) / k_gamma) * vec.mean()


def _check_pd(lambdas, structure, margin=0.0):
    for axes in structure:
        if sum(float(np.min(lambdas[a])) for a in axes) <= margin:
            return False
    return True


def _prior_h_value(lam, prior, d):
    if prior is None or prior.kind != "wishart":
        return 0.0
    n = prior.degrees_of_freedom
    return 0.5 * (n - d - 1) * float(np.log(lam).sum())


def _prior_h_grad(lam, prior, d):
    if prior is None or prior.kind != "wishart":
        return 0.0
    n = prior.degrees_of_freedom
    return 0.5 * (n - d - 1) / lam


def objective(lambdas, p_eigenvalues, structure, priors=None):
    """Negative log-likelihood over eigenvalues (additive constant dropped),
    minus the prior's unitarily invariant log-density term."""
    priors = priors or {}
    if not _check_pd(lambdas, structure):
        raise NotPositiveDefiniteError("a modality's eigenvalue sums are not positive")
    val = 0.0
    for name, p in p_eigenvalues.items():
        lam = lambdas[name]
        val += float(np.dot(p, lam))
        val -= _prior_h_value(lam, priors.get(name), lam.shape[0])
    for axes in structure:
        val -= 0.5 * ksum_log_det([lambdas[a] for a in axes])
    return val


def _modality_marginals(lambdas, structure):
    """Per-modality reciprocal-grid reductions, keyed (modality index, axis)."""
    out = {}
    for gi, axes in enumerate(structure):
        margs = ksum_marginals([lambdas[a] for a in axes])
        for a, m in zip(axes, margs):
            out[gi, a] = m
    return out


def gradient(lambdas, p_eigenvalues, structure, priors=None):
    """Unprojected gradient of :func:`objective` with respect to each axis's
    eigenvalues: p - (1/2) sum of modality marginals - prior term."""
    priors = priors or {}
    if not _check_pd(lambdas, structure):
        raise NotPositiveDefiniteError("a modality's eigenvalue sums are not positive")
    margs = _modality_marginals(lambdas, structure)
    out = {}
    for name, p in p_eigenvalues.items():
        g = p.astype(float).copy()
        g -= _prior_h_grad(lambdas[name], priors.get(name), p.shape[0])
        for gi, axes in enumerate(structure):
            if name in axes:
                g -= 0.5 * margs[gi, name]
        out[name] = g
    return out


def _projected_gradient(lambdas, p_eigenvalues, structure, priors, frozen,
                        extra=None, force_projection=True):
    """Descent direction: each modality's contribution (with an equal share
    of the per-axis terms) projected with that modality's axis count, then
    summed.  Frozen (rank-deficient) coordinates are zeroed."""
    priors = priors or {}
    margs = _modality_marginals(lambdas, structure)
    counts = {name: 0 for name in p_eigenvalues}
    for axes in structure:
        for a in axes:
            counts[a] += 1
    out = {}
    for name, p in p_eigenvalues.items():
        base = p.astype(float).copy()
        base -= _prior_h_grad(lambdas[name], priors.get(name), p.shape[0])
        if extra is not None and name in extra:
            base += extra[name]
        base /= counts[name]
        g = np.zeros_like(base)
        for gi, axes in enumerate(structure):
            if name not in axes:
                continue
            contrib = base - 0.5 * margs[gi, name]
            if force_projection:
                contrib = project_gradient(contrib, len(axes))
            g += contrib
        if frozen is not None and name in frozen:
            g[frozen[name]] = 0.0
        out[name] = g
    return out


def _grad_max(grads):
    return max(float(np.abs(g).max(initial=0.0)) for g in grads.values())


def _descend(lambdas, p_eigenvalues, structure, config, priors, frozen,
             objective_fn, extra_fn, max_iterations, mu_init,
             plateau_stops=False):
    """Shared descent loop: backtrack on positive definiteness and on the
    objective, recover the step size after a streak of clean accepts.

    With ``plateau_stops`` (used by the nonsmooth penalized phase, whose
    subgradient need not vanish at the minimizer), a sustained run of
    iterations that cannot improve the objective beyond numerical slack also
    counts as convergence.
    """
    lam = {k: v.copy() for k, v in lambdas.items()}
    mu = mu_init
    mu_ceiling = max(config.initial_step, mu_init)
    streak = 0
    oscillating = 0
    plateau = 0
    prev_g = None
    trace = [objective_fn(lam)]
    converged = False
    iterations = 0

    for iterations in range(1, max_iterations + 1):
        extra = extra_fn(lam) if extra_fn is not None else None
        g = _projected_gradient(
            lam, p_eigenvalues, structure, priors, frozen,
            extra=extra, force_projection=config.force_projection,
        )
        if _grad_max(g) < config.tolerance:
            converged = True
            iterations -= 1
            break
        if prev_g is not None:
            corr = sum(float(np.dot(g[k], prev_g[k])) for k in g)
            oscillating = oscillating + 1 if corr < 0 else 0
            if oscillating >= _OSCILLATION_STEPS and mu_ceiling > _MU_FLOOR:
                mu_ceiling = max(mu_ceiling * 0.5, _MU_FLOOR)
                mu = min(mu, mu_ceiling)
                oscillating = 0
        prev_g = g

        obj0 = trace[-1]
        slack = 1e-14 * (1.0 + abs(obj0))
        backtracked = False
        while True:
            cand = {k: lam[k] - mu * g[k] for k in lam}
            if _check_pd(cand, structure, margin=config.pd_margin):
                try:
                    obj_cand = objective_fn(cand)
                except NotPositiveDefiniteError:
                    obj_cand = np.inf
                if obj_cand <= obj0 + slack:
                    break
            mu *= config.backtrack_factor
            backtracked = True
            if mu < _MU_UNDERFLOW:
                raise ConvergenceError(
                    "step size underflow during backtracking",
                    diagnostics={
                        "iteration": iterations,
                        "mu": mu,
                        "gradient_max": _grad_max(g),
                        "objective": obj0,
                    },
                )
        lam = cand
        trace.append(obj_cand)
        if plateau_stops:
            plateau = plateau + 1 if obj0 - obj_cand <= slack else 0
            if plateau >= _PLATEAU_STEPS:
                converged = True
                break
        if backtracked:
            streak = 0
        else:
            streak += 1
            if streak >= _RECOVERY_STREAK:
                mu = min(mu * _RECOVERY_FACTOR, mu_ceiling)
    return lam, converged, iterations, trace, mu


def _frozen_masks(p_eigenvalues, cap):
    frozen = {}
    flagged = []
    for name, p in p_eigenvalues.items():
        mask = p <= RANK_TOL * max(float(p.max()), 0.0)
        if mask.any():
            frozen[name] = mask
            flagged.append(name)
    return frozen, flagged


def estimate_eigenvalues(spectra, structure, config=None, priors=None):
    """Minimize the eigenvalue objective by projected gradient descent.

    ``spectra`` carries each axis's (priorized) Gram eigenvalues.  Returns
    ``(lambdas, info)`` where info records iterations, convergence, the
    objective trace, the final step size, and any rank-deficiency flags.
    """
    config = config or EstimatorConfig()
    p_eigenvalues = {
        name: np.asarray(s.gram_eigenvalues, dtype=float) for name, s in spectra.items()
    }
    frozen, flagged = _frozen_masks(p_eigenvalues, config.eigenvalue_cap)
    lam = {name: np.ones_like(p) for name, p in p_eigenvalues.items()}
    for name, mask in frozen.items():
        lam[name][mask] = config.eigenvalue_cap

    def obj(l):
        return objective(l, p_eigenvalues, structure, priors)

    lam, converged, iterations, trace, mu = _descend(
        lam, p_eigenvalues, structure, config, priors, frozen,
        obj, None, config.max_iterations, config.initial_step,
    )
    info = {
        "iterations": iterations,
        "converged": converged,
        "objective_trace": trace,
        "final_step": mu,
        "flagged_axes": flagged,
        "frozen": frozen,
    }
    return lam, info


def _l1_subgradients(lambdas, spectra, rho):
    """Per-axis extra term: rho * diag(V^T sign_offdiag(V Lambda V^T) V)."""
    out = {}
    for name, spec in spectra.items():
        v = spec.eigenvectors
        m = recompose(v, lambdas[name])
        s = np.sign(m)
        np.fill_diagonal(s, 0.0)
        out[name] = rho * np.einsum("ia,ab,ib->i", v.T, s, v.T)
    return out


def restricted_l1_refine(spectra, structure, config=None, priors=None,
                         lambdas=None, mu_init=None, frozen=None):
    """Continue from the converged MLE with an L1 penalty on the off-diagonal
    entries of the recomposed matrices, eigenvalues the only free variables.

    Subgradient descent with the same backtracking and termination rules as
    the main phase; exact zeros of off-diagonal entries take sign 0.
    """
    config = config or EstimatorConfig()
    rho = config.l1_strength
    p_eigenvalues = {
        name: np.asarray(s.gram_eigenvalues, dtype=float) for name, s in spectra.items()
    }
    if lambdas is None:
        lambdas = {
            name: np.asarray(s.precision_eigenvalues, dtype=float)
            for name, s in spectra.items()
        }
    if rho == 0.0:
        return {k: v.copy() for k, v in lambdas.items()}, {
            "iterations": 0, "converged": True, "objective_trace": [], "final_step": mu_init,
        }

    def penalty(l):
        total = 0.0
        for name, spec in spectra.items():
            m = recompose(spec.eigenvectors, l[name])
            total += float(np.abs(m).sum() - np.abs(np.diag(m)).sum())
        return rho * total

    def obj(l):
        return objective(l, p_eigenvalues, structure, priors) + penalty(l)

    def extra(l):
        return _l1_subgradients(l, spectra, rho)

    lam, converged, iterations, trace, mu = _descend(
        lambdas, p_eigenvalues, structure, config, priors, frozen,
        obj, extra, config.l1_max_iterations,
        mu_init if mu_init is not None else config.initial_step,
        plateau_stops=True,
    )
    info = {
        "iterations": iterations,
        "converged": converged,
        "objective_trace": trace,
        "final_step": mu,
    }
    return lam, info


def compute_grams(dataset, preprocess=None):
    """Effective Gram matrices with per-modality preprocessing applied.

    ``preprocess`` maps modality name to a :class:`PreprocessSpec`.  A
    modality whose spec ends in the nonparanormal step contributes
    rank-correlation Gram substitutes instead of raw Grams.
    """
    preprocess = preprocess or {}
    transformed = []
    for mod in dataset.modalities:
        spec = preprocess.get(mod.name, PreprocessSpec())
        samples = [apply_value_steps(s, spec.value_steps()) for s in mod.samples]
        m = type(mod)(mod.name, mod.axis_names, samples)
        transformed.append((m, spec.uses_nonparanormal))

    matrices = {}
    for name, axis in dataset.axes.items():
        contributions = []
        for mod, skeptic in transformed:
            if name not in mod.axis_names:
                continue
            if skeptic:
                contributions.append(nonparanormal_gram(mod, name))
            else:
                contributions.append(gram(mod, name))
        if not contributions:
            raise ValueError(f"axis {name!r} appears in no modality")
        matrices[name] = sum(contributions)
    return GramSet(matrices)


def _decompose_all(priorized):
    names = list(priorized)
    if get_num_threads() > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=get_num_threads()) as pool:
            results = list(pool.map(lambda n: decompose(priorized[n]), names))
    else:
        results = [decompose(priorized[n]) for n in names]
    return dict(zip(names, results))


def fit_core(grams, structure, priors=None, config=None):
    """Estimation given precomputed Gram matrices and a modality structure.

    ``grams`` maps axis keys (any hashable) to Gram matrices; ``structure``
    lists each modality's axis-key tuple.  This is the engine behind both
    :func:`fit` and block-partitioned fitting.
    """
    config = config or EstimatorConfig()
    priors = priors or {}
    if not isinstance(grams, GramSet):
        grams = GramSet(dict(grams))
    priorized = priorize(grams, priors)
    decomposed = _decompose_all(priorized)
    spectra = {
        name: AxisSpectrum(eigenvectors=v, gram_eigenvalues=e)
        for name, (v, e) in decomposed.items()
    }

    lam, info = estimate_eigenvalues(spectra, structure, config, priors)
    l1_info = {"iterations": 0, "converged": True}
    if config.l1_strength > 0:
        if not info["converged"]:
            warnings.warn("refining an eigenvalue estimate that did not converge")
        for name in spectra:
            spectra[name].precision_eigenvalues = lam[name]
        lam, l1_info = restricted_l1_refine(
            spectra, structure, config, priors,
            lambdas=lam, mu_init=info["final_step"], frozen=info["frozen"],
        )
    for name in spectra:
        spectra[name].precision_eigenvalues = lam[name]

    return FitResult(
        spectra=spectra,
        structure=list(structure),
        iterations=info["iterations"],
        l1_iterations=l1_info["iterations"],
        objective=float(info["objective_trace"][-1]) if info["objective_trace"] else np.nan,
        converged=info["converged"] and l1_info["converged"],
        flagged_axes=info["flagged_axes"],
        objective_trace=info["objective_trace"],
        metadata={"l1_strength": config.l1_strength},
    )


def fit(dataset, preprocess=None, priors=None, config=None):
    """Run the whole pipeline on a dataset and return a :class:`FitResult`.

    preprocess -> effective Gram (or skeptic substitute) -> priorize ->
    per-axis eigendecomposition -> eigenvalue descent -> optional restricted
    L1 refinement.  Dense precision matrices are materialized on demand from
    the result.
    """
    grams = compute_grams(dataset, preprocess)
    if max(float(np.abs(grams[a]).max()) for a in grams.axis_names()) == 0.0:
        raise ValueError("all-zero data: Gram matrices have rank zero, no MLE exists")
    return fit_core(grams, dataset.structure(), priors, config)
