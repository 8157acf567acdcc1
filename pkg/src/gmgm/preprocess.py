"""Data conditioning applied before Gram computation.

Steps compose per modality: global centering, log1p for count data, and the
rank-correlation ("nonparanormal skeptic") substitute for the Gram matrix
itself.  The skeptic is not a value transform, so it must come last.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernels import kendall_tau_rows
from .tensors import matricize

KNOWN_STEPS = ("center", "log1p", "nonparanormal")


@dataclass
class PreprocessSpec:
    """Ordered preprocessing steps for one modality."""

    steps: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.steps = tuple(self.steps)
        for s in self.steps:
            if s not in KNOWN_STEPS:
                raise ValueError(f"unknown preprocessing step {s!r}")
        if "nonparanormal" in self.steps and self.steps[-1] != "nonparanormal":
            raise ValueError("nonparanormal must be the last preprocessing step")

    @property
    def uses_nonparanormal(self):
        return bool(self.steps) and self.steps[-1] == "nonparanormal"

    def value_steps(self):
        return tuple(s for s in self.steps if s != "nonparanormal")


def center(tensor):
    """Subtract the grand mean (one scalar over all entries)."""
    tensor = np.asarray(tensor, dtype=float)
    if tensor.size == 0:
        raise ValueError("cannot center an empty tensor")
    return tensor - tensor.mean()


def log1p_transform(tensor):
    """Elementwise ln(1+x); input must be nonnegative (count-like data)."""
    tensor = np.asarray(tensor, dtype=float)
    if np.any(tensor < 0):
        raise ValueError("log1p transform requires nonnegative values")
    return np.log1p(tensor)


_VALUE_TRANSFORMS = {"center": center, "log1p": log1p_transform}


def apply_value_steps(tensor, steps):
    for step in steps:
        tensor = _VALUE_TRANSFORMS[step](tensor)
    return tensor


def nonparanormal_gram(modality, axis_name):
    """Kendall-tau Gram substitute for one axis of a modality.

    Entries are d_rest * sin((pi/2) * tau) between rows of the matricized
    samples (tau averaged over samples), with the diagonal pinned to d_rest
    and negative eigenvalues clipped to zero.  Invariant under strictly
    increasing marginal transforms, which is the whole point.
    """
    pos = modality.axis_position(axis_name)
    d = modality.shape[pos]
    d_rest = int(np.prod(modality.shape)) // d
    if d_rest < 2:
        raise ValueError("nonparanormal Gram needs at least 2 off-axis entries")

    tau = np.zeros((d, d))
    constant = np.zeros(d, dtype=bool)
    for sample in modality.samples:
        rows = matricize(sample, pos)
        constant |= np.ptp(rows, axis=1) == 0
        t = kendall_tau_rows(rows)
        tau += np.nan_to_num(t, nan=0.0)
    tau /= modality.n_samples

    if constant.any():
        warnings.warn(
            f"modality {modality.name!r}, axis {axis_name!r}: "
            f"{int(constant.sum())} constant row(s); their correlations set to 0"
        )
        tau[constant, :] = 0.0
        tau[:, constant] = 0.0

    s = d_rest * np.sin(0.5 * np.pi * tau)
    np.fill_diagonal(s, d_rest)
    s = 0.5 * (s + s.T)

    # Clip to the PSD cone: the sin transform of an averaged tau need not be PSD.
    evals, evecs = np.linalg.eigh(s)
    if evals[0] < 0:
        s = (evecs * np.clip(evals, 0.0, None)) @ evecs.T
        s = 0.5 * (s + s.T)
    return s
