"""Simulation designs, CSV ingestion and PCA preprocessing."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .models import Dataset

# PCG64 from numpy >= 1.17; the fill order below is part of the contract
RNG_NAME = "numpy.PCG64/v1"


@dataclass(frozen=True)
class ComponentSpec:
    n: int
    mu: Sequence[float]
    cov: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("component size must be >= 1")
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        mu = np.asarray(self.mu, dtype=float)
        if cov.shape != (mu.size, mu.size):
            raise ValueError("covariance does not match mean dimension")
        np.linalg.cholesky(cov)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "mu", mu)


@dataclass(frozen=True)
class SimSpec:
    components: tuple
    seed: int = 0


def simulate(spec: SimSpec) -> Dataset:
    """Draw each component in order; within a component, standard normals
    fill an n x d matrix column by column before the Cholesky transform."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    blocks, truth = [], []
    for g, comp in enumerate(spec.components, start=1):
        d = comp.mu.size
        E = rng.standard_normal(comp.n * d).reshape((comp.n, d), order="F")
        L = np.linalg.cholesky(comp.cov)
        blocks.append(comp.mu + E @ L.T)
        truth.append(np.full(comp.n, g))
    return Dataset(np.vstack(blocks), truth=np.concatenate(truth))


SIM1_COMPONENTS = (
    (100, (-2.0, 2.0), 0.5),
    (150, (8.0, 0.0), 1.2),
    (75, (-7.0, -7.0), 2.5),
)

SIM2_SIGMA = np.array([
    [0.50, 0.35, 0.25],
    [0.35, 1.00, 0.45],
    [0.25, 0.45, 1.20],
])

SIM2_COMPONENTS = (
    (150, (-2.0, -2.0, -2.0)),
    (100, (4.0, 0.0, 0.0)),
    (75, (-5.0, 0.0, 2.0)),
)


def sim1_spec(seed: int = 0) -> SimSpec:
    """Three spherical components with unequal volumes (a VII truth)."""
    return SimSpec(tuple(ComponentSpec(n, mu, lam * np.eye(2))
                         for n, mu, lam in SIM1_COMPONENTS), seed)


def sim2_spec(seed: int = 0) -> SimSpec:
    """Three components sharing one full covariance (an EEE truth)."""
    return SimSpec(tuple(ComponentSpec(n, mu, SIM2_SIGMA) for n, mu in SIM2_COMPONENTS), seed)


def generate_sim1(seed: int = 0) -> Dataset:
    return simulate(sim1_spec(seed))


def generate_sim2(seed: int = 0) -> Dataset:
    return simulate(sim2_spec(seed))


def pca_transform(data: Dataset) -> Dataset:
    """Centre and rotate onto principal axes (descending variance).

    Each axis is signed so that its largest-magnitude loading is positive.
    """
    Y = data.Y
    n, d = Y.shape
    if n <= d:
        raise ValueError(f"PCA needs n > d (got n={n}, d={d})")
    Yc = Y - Y.mean(axis=0)
    cov = np.cov(Yc, rowvar=False).reshape(d, d)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    null = evals <= 1e-12 * max(evals[0], 1.0)
    if null.any():
        dirs = "; ".join(np.array2string(v, precision=4) for v in evecs[:, null].T)
        raise ValueError(f"covariance is rank-deficient; null directions: {dirs}")
    idx = np.argmax(np.abs(evecs), axis=0)
    evecs = evecs * np.sign(evecs[idx, np.arange(d)])
    names = [f"PC{k + 1}" for k in range(d)]
    return Dataset(Yc @ evecs, labels=data.labels, truth=data.truth, columns=names)


# -- CSV ------------------------------------------------------------------------

def read_csv(path: str | Path, label_column: str = "label",
             truth_column: str = "truth") -> Dataset:
    """Read comma-separated numeric data with an optional header.

    A ``label`` column holds known classes (blank or 0 = unknown); a ``truth``
    column holds evaluation-only ground truth.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: no data")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    if not rows:
        raise ValueError(f"{path}: header only")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: ragged rows")
    header = header or [f"x{k + 1}" for k in range(width)]

    def column(name):
        if name not in header:
            return None
        j = header.index(name)
        return np.array([int(float(r[j])) if r[j].strip() else 0 for r in rows])

    labels, truth = column(label_column), column(truth_column)
    feat = [j for j, h in enumerate(header) if h not in (label_column, truth_column)]
    Y = np.array([[float(r[j]) for j in feat] for r in rows])
    return Dataset(Y, labels=labels, truth=truth, columns=[header[j] for j in feat])


def write_csv(path: str | Path, data: Dataset, include_truth: bool = True,
              include_labels: bool = True) -> None:
    """Write data with a header; floats use ``repr`` so reads are exact."""
    cols = list(data.columns) if data.columns else [f"x{k + 1}" for k in range(data.d)]
    extra = []
    if include_labels and data.labels is not None:
        extra.append(("label", data.labels))
    if include_truth and data.truth is not None:
        extra.append(("truth", data.truth))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols + [name for name, _ in extra])
        for i, row in enumerate(data.Y):
            w.writerow([repr(float(x)) for x in row] + [int(v[i]) for _, v in extra])


def with_known_fraction(data: Dataset, fraction: float, seed: int = 0,
                        truth: Optional[np.ndarray] = None) -> Dataset:
    """Reveal a random ``fraction`` of ground-truth labels as known labels."""
    truth = data.truth if truth is None else np.asarray(truth)
    if truth is None:
        raise ValueError("classification needs ground-truth labels")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    rng = np.random.Generator(np.random.PCG64(seed))
    k = int(round(fraction * data.n))
    known = np.zeros(data.n, dtype=bool)
    known[rng.permutation(data.n)[:k]] = True
    labels = np.where(known, truth, 0)
    return Dataset(data.Y, labels=labels, truth=truth, columns=data.columns)
