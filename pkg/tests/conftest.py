"""Shared test helpers: independent oracle implementations used to freeze
expected values, deliberately written with different algorithms than the
library code they check."""

import itertools
import math

import numpy as np
import pytest


def rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def matricize_oracle(tensor, axis):
    """Index-by-index matricization: rows follow the chosen axis, columns
    enumerate the remaining axes in original order, row-major."""
    tensor = np.asarray(tensor)
    rest = [s for i, s in enumerate(tensor.shape) if i != axis]
    out = np.empty((tensor.shape[axis], math.prod(rest)), dtype=tensor.dtype)
    for row in range(tensor.shape[axis]):
        for col, multi in enumerate(itertools.product(*(range(s) for s in rest))):
            full = list(multi)
            full.insert(axis, row)
            out[row, col] = tensor[tuple(full)]
    return out


def sb_trace_oracle(m, a, b):
    """Definitional stridewise-blockwise trace, entry (i, j) the trace of M
    against I_a x J^ji x I_b (the orientation fixed by the worked 8x8
    example; both orientations agree on symmetric input)."""
    m = np.asarray(m, dtype=float)
    side = m.shape[0]
    inner = side // (a * b)
    out = np.zeros((inner, inner))
    for i in range(inner):
        for j in range(inner):
            jji = np.zeros((inner, inner))
            jji[j, i] = 1.0
            sel = np.kron(np.kron(np.eye(a), jji), np.eye(b))
            out[i, j] = np.trace(m @ sel)
    return out


def ksum_dense_oracle(mats):
    """Dense Kronecker sum built factor by factor."""
    sizes = [m.shape[0] for m in mats]
    total = math.prod(sizes)
    out = np.zeros((total, total))
    for pos, m in enumerate(mats):
        before = math.prod(sizes[:pos])
        after = math.prod(sizes[pos + 1:])
        out += np.kron(np.kron(np.eye(before), m), np.eye(after))
    return out


def marginal_oracle(eigvals, target):
    """Grid-enumeration reciprocal-sum marginal."""
    sizes = [len(v) for v in eigvals]
    out = np.zeros(sizes[target])
    for multi in itertools.product(*(range(s) for s in sizes)):
        out[multi[target]] += 1.0 / sum(v[i] for v, i in zip(eigvals, multi))
    return out


def kendall_tau_oracle(x, y):
    """O(n^2) pair-counting tau-b."""
    n = len(x)
    con = dis = xt = yt = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = np.sign(x[j] - x[i])
            dy = np.sign(y[j] - y[i])
            if dx == 0 and dy == 0:
                xt += 1
                yt += 1
            elif dx == 0:
                xt += 1
            elif dy == 0:
                yt += 1
            elif dx == dy:
                con += 1
            else:
                dis += 1
    tot = n * (n - 1) // 2
    denom = math.sqrt((tot - xt) * (tot - yt))
    if denom == 0:
        return math.nan
    return (con - dis) / denom


def bfs_components_oracle(adjacency):
    """Breadth-first-search connected components, labels = smallest member."""
    d = adjacency.shape[0]
    labels = -np.ones(d, dtype=int)
    for start in range(d):
        if labels[start] >= 0:
            continue
        queue = [start]
        members = []
        seen = {start}
        while queue:
            v = queue.pop()
            members.append(v)
            for w in np.flatnonzero(adjacency[v]):
                if w not in seen:
                    seen.add(w)
                    queue.append(int(w))
        labels[members] = min(members)
    return labels


def random_structure(r, max_axes=3, max_axis_size=4, n_axes_pool=4):
    """Random shared-axis modality structure with eigenvalue sizes."""
    names = [f"ax{i}" for i in range(n_axes_pool)]
    sizes = {n: int(r.integers(2, max_axis_size + 1)) for n in names}
    n_modalities = int(r.integers(1, 4))
    structure = []
    used = set()
    for _ in range(n_modalities):
        k = int(r.integers(1, max_axes + 1))
        axes = tuple(r.choice(names, size=k, replace=False))
        structure.append(axes)
        used.update(axes)
    sizes = {n: s for n, s in sizes.items() if n in used}
    return structure, sizes


@pytest.fixture
def r0():
    return rng(0)
