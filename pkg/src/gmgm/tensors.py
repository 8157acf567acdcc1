"""Tensor containers, matricization, Gram matrices, and Kronecker-sum algebra.

Everything here uses the rows-first (row-major) layout: the first axis of a
tensor is the slowest-varying in its flattened form, and factors of a
Kronecker product act on axes in the same order as they appear in the tensor.
Under that convention matricizing along axis 0 is a plain reshape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotPositiveDefiniteError
from .kernels import ksum_marginals, ksum_min_sum

# Dense Kronecker sums are oracle-grade only; production code works with the
# diagonal specialization and never builds the full matrix.
KRON_DENSE_CAP = 4096


@dataclass(frozen=True)
class Axis:
    """A named tensor dimension; each axis gets its own dependency graph."""

    name: str
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"axis {self.name!r} must have size >= 1, got {self.size}")


def as_tensor(values, shape=None):
    """Coerce to a C-contiguous float64 array, checking finiteness."""
    arr = np.ascontiguousarray(values, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    return arr


class Modality:
    """One tensor of the dataset: named axes plus one or more samples."""

    def __init__(self, name, axis_names, samples):
        axis_names = tuple(axis_names)
        if len(set(axis_names)) != len(axis_names):
            raise ValueError(f"modality {name!r} repeats an axis: {axis_names}")
        if not samples:
            raise ValueError(f"modality {name!r} has no samples")
        samples = [as_tensor(s) for s in samples]
        shape = samples[0].shape
        if len(shape) != len(axis_names):
            raise ValueError(
                f"modality {name!r}: {len(axis_names)} axes but rank-{len(shape)} data"
            )
        for s in samples[1:]:
            if s.shape != shape:
                raise ValueError(f"modality {name!r}: samples differ in shape")
        self.name = name
        self.axis_names = axis_names
        self.samples = samples

    @property
    def shape(self):
        return self.samples[0].shape

    @property
    def n_samples(self):
        return len(self.samples)

    def axis_position(self, axis_name):
        try:
            return self.axis_names.index(axis_name)
        except ValueError:
            raise ValueError(
                f"axis {axis_name!r} not in modality {self.name!r}"
            ) from None


class Dataset:
    """Axis registry plus a set of modalities that may share axes."""

    def __init__(self, axes, modalities):
        if isinstance(axes, dict):
            axes = [Axis(n, s) for n, s in axes.items()]
        registry = {}
        for ax in axes:
            if ax.name in registry:
                raise ValueError(f"duplicate axis name {ax.name!r}")
            registry[ax.name] = ax
        for mod in modalities:
            for name, size in zip(mod.axis_names, mod.shape):
                if name not in registry:
                    raise ValueError(
                        f"modality {mod.name!r} references unknown axis {name!r}"
                    )
                if registry[name].size != size:
                    raise ValueError(
                        f"axis {name!r}: registered size {registry[name].size} "
                        f"but modality {mod.name!r} has {size}"
                    )
        self.axes = registry
        self.modalities = list(modalities)

    def modalities_with_axis(self, axis_name):
        return [m for m in self.modalities if axis_name in m.axis_names]

    def structure(self):
        """Modality-to-axes map used by the eigenvalue iterations."""
        return [m.axis_names for m in self.modalities]


@dataclass
class GramSet:
    """Per-axis effective Gram matrices, the model's sufficient statistics."""

    matrices: dict = field(default_factory=dict)

    def __getitem__(self, axis_name):
        return self.matrices[axis_name]

    def __contains__(self, axis_name):
        return axis_name in self.matrices

    def axis_names(self):
        return list(self.matrices)


def matricize(tensor, axis_position):
    """Unfold a tensor into a (d_l, d_everything_else) matrix.

    Rows index the chosen axis; columns run over the remaining axes in their
    original order, row-major.  A pure relabeling: axis 0 is a reshape, and
    for matrices axis 1 is the transpose.
    """
    tensor = np.asarray(tensor)
    if not 0 <= axis_position < tensor.ndim:
        raise ValueError(
            f"axis_position {axis_position} out of range for rank-{tensor.ndim} tensor"
        )
    return np.moveaxis(tensor, axis_position, 0).reshape(tensor.shape[axis_position], -1)


def unmatricize(matrix, shape, axis_position):
    """Inverse of :func:`matricize` for the given original shape."""
    shape = tuple(shape)
    moved = (shape[axis_position],) + tuple(
        s for i, s in enumerate(shape) if i != axis_position
    )
    return np.moveaxis(np.asarray(matrix).reshape(moved), 0, axis_position)


def gram(modality, axis_name):
    """Sample-averaged Gram matrix of one modality along one axis.

    BLAS matmul accumulates the length-d_everything_else contraction in
    blocked partial sums, which keeps the digits the tolerances downstream
    rely on.
    """
    pos = modality.axis_position(axis_name)
    d = modality.shape[pos]
    acc = np.zeros((d, d))
    for sample in modality.samples:
        m = matricize(sample, pos)
        acc += m @ m.T
    acc /= modality.n_samples
    return 0.5 * (acc + acc.T)


def effective_gram(dataset):
    """Sum per-modality Gram matrices over the modalities sharing each axis."""
    matrices = {}
    for name, axis in dataset.axes.items():
        mods = dataset.modalities_with_axis(name)
        if not mods:
            raise ValueError(f"axis {name!r} appears in no modality")
        total = np.zeros((axis.size, axis.size))
        for mod in mods:
            total += gram(mod, name)
        matrices[name] = total
    return GramSet(matrices)


def kron_product(a, b):
    """Kronecker product (thin wrapper; kept for the dense oracles)."""
    return np.kron(np.asarray(a), np.asarray(b))


def kron_sum_dense(matrices, cap=KRON_DENSE_CAP):
    """Dense Kronecker sum of square matrices; oracle only, size-capped.

    Factor order matches tensor axis order under the rows-first layout.
    """
    mats = [np.asarray(m, dtype=float) for m in matrices]
    for m in mats:
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("kron_sum_dense expects square matrices")
    sizes = [m.shape[0] for m in mats]
    total = math.prod(sizes)
    if total > cap:
        raise ValueError(f"dense Kronecker sum of size {total} exceeds cap {cap}")
    out = np.zeros((total, total))
    for pos, m in enumerate(mats):
        before = math.prod(sizes[:pos]) if pos else 1
        after = math.prod(sizes[pos + 1:]) if pos + 1 < len(sizes) else 1
        out += np.kron(np.kron(np.eye(before), m), np.eye(after))
    return out


def stridewise_blockwise_trace(m, a, b):
    """Generalized partial trace tr^a_b collapsing a Kronecker-structured
    matrix back onto its middle factor.

    Entry (i, j) is the trace of M against I_a (x) J^{ji} (x) I_b, where
    J^{ji} has a single 1 at (j, i); on the symmetric matrices this is used
    for, the orientation is immaterial.  Oracle-grade: O(m^2), dense input.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    side = m.shape[0]
    if side % (a * b) != 0:
        raise ValueError(f"a*b = {a * b} does not divide matrix side {side}")
    inner = side // (a * b)
    r = m.reshape(a, inner, b, a, inner, b)
    # out[i, j] = sum_{alpha, beta} M[(alpha, i, beta), (alpha, j, beta)]
    return np.einsum("aibajb->ij", r)


def ks_diag_marginal(eigvals, target_axis_index):
    """Diagonal of the stridewise-blockwise trace of the inverse Kronecker sum
    of diagonal factors, computed on the eigenvalue grid.

    This is the only Kronecker-sum reduction the production gradient needs;
    the dense route exists as its test oracle.
    """
    eigvals = [np.asarray(v, dtype=float) for v in eigvals]
    if not 0 <= target_axis_index < len(eigvals):
        raise ValueError("target_axis_index out of range")
    if ksum_min_sum(eigvals) <= 0:
        raise NotPositiveDefiniteError(
            "eigenvalue sums must be positive over the whole grid"
        )
    return ksum_marginals(eigvals)[target_axis_index]
