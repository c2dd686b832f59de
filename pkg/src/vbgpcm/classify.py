"""MAP labelling, partition agreement and the semi-supervised likelihood."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import comb, logsumexp

from .models import Dataset, MixturePoint, component_log_densities


def map_labels(Z: np.ndarray) -> np.ndarray:
    """1-based argmax of each responsibility row (ties go to the lower index)."""
    return np.argmax(np.asarray(Z), axis=1) + 1


def _contingency(a, b) -> np.ndarray:
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def adjusted_rand_index(a: Sequence[int], b: Sequence[int]) -> float:
    """Hubert-Arabie adjusted Rand index."""
    a, b = np.asarray(a).ravel(), np.asarray(b).ravel()
    if a.shape != b.shape:
        raise ValueError(f"partition lengths differ: {a.size} vs {b.size}")
    n = a.size
    if n < 2:
        raise ValueError("ARI needs at least two observations")
    table = _contingency(a, b)
    sum_cells = comb(table, 2).sum()
    sum_a = comb(table.sum(axis=1), 2).sum()
    sum_b = comb(table.sum(axis=0), 2).sum()
    total = comb(n, 2)
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both single-cluster -> 0 by convention; both all-singletons agree exactly
        return 0.0 if sum_a == total else 1.0
    return float((sum_cells - expected) / (max_index - expected))


def classification_loglik(data: Dataset, point: MixturePoint,
                          labels: Optional[np.ndarray] = None) -> float:
    """Complete-data terms for known rows plus mixture terms for the rest.

    ``labels`` defaults to ``data.labels`` (1-based, 0 = unknown).
    """
    labels = data.labels if labels is None else np.asarray(labels, dtype=int)
    logp = component_log_densities(data.Y, point.mu, point.T) + np.log(point.rho)
    if labels is None:
        return float(logsumexp(logp, axis=1).sum())
    known = labels > 0
    if known.any() and labels[known].max() > point.G:
        raise ValueError(f"known label {labels[known].max()} exceeds G={point.G}")
    total = logp[known, labels[known] - 1].sum()
    total += logsumexp(logp[~known], axis=1).sum() if (~known).any() else 0.0
    return float(total)


@dataclass(frozen=True)
class ConfusionTable:
    counts: np.ndarray
    row_labels: tuple
    col_labels: tuple

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def to_text(self) -> str:
        head = [""] + [str(c) for c in self.col_labels]
        rows = [[str(r)] + [str(int(x)) for x in row]
                for r, row in zip(self.row_labels, self.counts)]
        widths = [max(len(line[j]) for line in [head] + rows) for j in range(len(head))]
        fmt = lambda line: "  ".join(s.rjust(w) for s, w in zip(line, widths))
        return "\n".join(fmt(line) for line in [head] + rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("truth," + ",".join(str(c) for c in self.col_labels) + "\n")
        for r, row in zip(self.row_labels, self.counts):
            buf.write(f"{r}," + ",".join(str(int(x)) for x in row) + "\n")
        return buf.getvalue()


def confusion(truth: Sequence[int], predicted: Sequence[int]) -> ConfusionTable:
    """Counts of (truth, prediction) pairs."""
    truth, predicted = np.asarray(truth).ravel(), np.asarray(predicted).ravel()
    if truth.shape != predicted.shape:
        raise ValueError(f"partition lengths differ: {truth.size} vs {predicted.size}")
    rows, ri = np.unique(truth, return_inverse=True)
    cols, ci = np.unique(predicted, return_inverse=True)
    counts = np.zeros((rows.size, cols.size), dtype=np.int64)
    np.add.at(counts, (ri, ci), 1)
    return ConfusionTable(counts, tuple(rows.tolist()), tuple(cols.tolist()))


def misclassification_rate(truth, predicted, mask=None) -> float:
    """Fraction of rows (optionally within ``mask``) whose label differs."""
    truth, predicted = np.asarray(truth), np.asarray(predicted)
    if mask is not None:
        truth, predicted = truth[mask], predicted[mask]
    if truth.size == 0:
        return 0.0
    return float(np.mean(truth != predicted))
