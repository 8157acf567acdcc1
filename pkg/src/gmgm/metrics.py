"""Edge-recovery and graph-structure metrics.

Precision-recall curves over off-diagonal supports (area by trapezoid in
recall) and Newman's categorical assortativity coefficient.
"""

from __future__ import annotations

import numpy as np

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _upper_offdiag(matrix):
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    iu, ju = np.triu_indices(m.shape[0], k=1)
    return m[iu, ju]


def pr_curve(score_matrix, true_support):
    """Precision-recall curve and area for edge recovery.

    Thresholds sweep the distinct absolute off-diagonal scores in descending
    order; each threshold predicts every pair at or above it.  The curve is
    extended to recall 0 at the first threshold's precision and, if recall 1
    is never reached, closed at precision = prevalence.  Returns
    ``(points, area)`` with points as an (n, 2) array of (recall, precision)
    sorted by recall.
    """
    scores = np.abs(_upper_offdiag(score_matrix)).astype(float)
    truth = _upper_offdiag(true_support).astype(bool)
    if scores.shape != truth.shape:
        raise ValueError("score matrix and support differ in size")
    n_pos = int(truth.sum())
    if n_pos == 0:
        raise ValueError("true support has no positive off-diagonal entries")
    prevalence = n_pos / truth.size

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tp = np.cumsum(truth[order])
    predicted = np.arange(1, scores.size + 1)
    # Evaluate only at the last index of each distinct score value.
    last = np.flatnonzero(np.diff(sorted_scores, append=-np.inf) != 0)
    recall = tp[last] / n_pos
    precision = tp[last] / predicted[last]

    points = [(0.0, float(precision[0]))]
    points += [(float(r), float(p)) for r, p in zip(recall, precision)]
    if recall[-1] < 1.0:
        points.append((1.0, prevalence))
    points = np.asarray(points)
    area = float(_trapezoid(points[:, 1], points[:, 0]))
    return points, area


def aupr(score_matrix, true_support):
    """Area under the precision-recall curve of :func:`pr_curve`."""
    return pr_curve(score_matrix, true_support)[1]


def assortativity(graph, labels):
    """Newman's categorical assortativity on an unweighted edge list.

    r = (sum_c e_cc - sum_c a_c b_c) / (1 - sum_c a_c b_c) over the mixing
    matrix e of label pairs at edge endpoints (each edge counted in both
    directions).  Raises if the graph has no edges, a vertex is unlabeled, or
    the denominator vanishes (all edges inside a single class).
    """
    labels = list(labels)
    if len(labels) != graph.n_vertices:
        raise ValueError("need exactly one label per vertex")
    if graph.n_edges == 0:
        raise ValueError("assortativity needs at least one edge")
    cats = sorted({labels[v] for v in range(graph.n_vertices)}, key=repr)
    index = {c: k for k, c in enumerate(cats)}
    e = np.zeros((len(cats), len(cats)))
    for i, j, _ in graph.edges:
        ci, cj = index[labels[i]], index[labels[j]]
        e[ci, cj] += 1
        e[cj, ci] += 1
    e /= e.sum()
    a = e.sum(axis=1)
    b = e.sum(axis=0)
    denom = 1.0 - float(a @ b)
    if denom == 0.0:
        raise ValueError("assortativity undefined: all edges within one class")
    return (float(np.trace(e)) - float(a @ b)) / denom
