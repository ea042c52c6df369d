"""Clustering evaluation: Hungarian accuracy, NMI and ARI.

All three are computed from the contingency table of the two labelings,
so they are invariant to renaming the labels of either argument.
"""

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import comb


@dataclass(frozen=True)
class ClusterMetrics:
    acc: float
    nmi: float
    ari: float

    def as_dict(self):
        return asdict(self)


def _pair(pred, truth):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"label vectors differ in length: {pred.size} vs {truth.size}")
    if pred.size == 0:
        raise ValueError("empty labelings")
    return pred, truth


def contingency(pred, truth):
    """Counts ``C[a, b]`` of samples with predicted label ``a`` and true label ``b``."""
    pred, truth = _pair(pred, truth)
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((pi.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def acc(pred, truth):
    """Best one-to-one cluster-to-label accuracy, in percent."""
    table = contingency(pred, truth)
    # rectangular tables are fine: unmatched rows/cols contribute nothing
    rows, cols = linear_sum_assignment(table, maximize=True)
    return 100.0 * table[rows, cols].sum() / table.sum()


def _entropy(counts, n):
    q = counts[counts > 0] / n
    return float(-np.sum(q * np.log(q)))


def nmi(pred, truth):
    """Mutual information normalised by the geometric mean of the entropies.

    Natural logarithms. If exactly one labeling has zero entropy the score
    is 0; if both do (each is a single cluster) they coincide and the
    score is 1.
    """
    table = contingency(pred, truth)
    n = table.sum()
    h_pred = _entropy(table.sum(axis=1), n)
    h_true = _entropy(table.sum(axis=0), n)
    if h_pred == 0.0 and h_true == 0.0:
        return 1.0
    if h_pred == 0.0 or h_true == 0.0:
        return 0.0
    nz = table > 0
    pab = table[nz] / n
    pa = (table.sum(axis=1)[:, None] / n * np.ones_like(table))[nz]
    pb = (table.sum(axis=0)[None, :] / n * np.ones_like(table))[nz]
    mi = float(np.sum(pab * np.log(pab / (pa * pb))))
    return max(mi, 0.0) / np.sqrt(h_pred * h_true)


def ari(pred, truth):
    """Adjusted Rand index (Hubert and Arabie) from pair counts."""
    table = contingency(pred, truth)
    n = table.sum()
    sum_ij = comb(table, 2).sum()
    sum_a = comb(table.sum(axis=1), 2).sum()
    sum_b = comb(table.sum(axis=0), 2).sum()
    total = comb(n, 2)
    expected = sum_a * sum_b / total if total else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both labelings trivial in the same way (all-in-one or all-singletons)
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def evaluate(pred, truth):
    """All three scores for ``pred`` against ``truth``."""
    return ClusterMetrics(acc=float(acc(pred, truth)), nmi=float(nmi(pred, truth)), ari=float(ari(pred, truth)))
