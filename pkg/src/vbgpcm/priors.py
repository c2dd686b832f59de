"""Prior hyperparameters, initialisation settings and their config files.

Gamma factors use the (shape/2, rate/2) convention throughout: a prior
``Gamma(a, b)`` on a precision ``x`` has density proportional to
``x**(a/2 - 1) exp(-b x / 2)``, so ``E[x] = a/b`` and
``E[log x] = digamma(a/2) - log(b/2)``. Under this convention the update
counts accumulate ``sum z`` (or ``d sum z``) without halving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .models import Dataset, ModelId

STRATEGIES = ("random-responsibilities", "k-means-labels", "provided-labels")


@dataclass
class HyperPriors:
    """All prior hyperparameters; arrays are indexed by original component.

    ``a0``/``b0`` are the volume gamma (lambda^-1 or lambda_g^-1),
    ``ak0``/``bk0`` the per-coordinate gamma on diagonals of (lambda A)^-1,
    ``al0``/``be0`` the per-coordinate gamma on diagonals of c A^-1 (or
    c_g A_g^-1). ``wishart_scale0`` is the covariance-like matrix whose inverse
    is the Wishart scale, so the prior mean precision is
    ``wishart_df0 * inv(wishart_scale0)``.
    """

    alpha0: np.ndarray
    beta0: np.ndarray
    m0: np.ndarray
    a0: float = 2.0
    b0: float = 2.0
    ak0: Optional[np.ndarray] = None
    bk0: Optional[np.ndarray] = None
    al0: Optional[np.ndarray] = None
    be0: Optional[np.ndarray] = None
    wishart_df0: Optional[float] = None
    wishart_scale0: Optional[np.ndarray] = None
    C0: Optional[np.ndarray] = None

    def __post_init__(self):
        self.alpha0 = np.atleast_1d(np.asarray(self.alpha0, dtype=float))
        self.beta0 = np.atleast_1d(np.asarray(self.beta0, dtype=float))
        self.m0 = np.atleast_2d(np.asarray(self.m0, dtype=float))
        for name in ("ak0", "bk0", "al0", "be0"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.atleast_1d(np.asarray(v, dtype=float)))
        if self.wishart_scale0 is not None:
            self.wishart_scale0 = np.atleast_2d(np.asarray(self.wishart_scale0, dtype=float))
        if self.C0 is not None:
            C0 = np.asarray(self.C0, dtype=float)
            self.C0 = C0[None] if C0.ndim == 2 else C0

    @property
    def G(self) -> int:
        return self.alpha0.shape[0]

    @property
    def d(self) -> int:
        return self.m0.shape[1]

    def validate(self, model: ModelId) -> None:
        """Check the fields the chosen model uses."""
        G, d = self.G, self.d
        if self.beta0.shape != (G,) or self.m0.shape != (G, d):
            raise ValueError("alpha0, beta0 and m0 disagree on G")
        if np.any(self.alpha0 <= 0) or np.any(self.beta0 <= 0):
            raise ValueError("alpha0 and beta0 must be positive")
        for name in required_fields(model):
            v = getattr(self, name)
            if v is None:
                raise ValueError(f"{model.value} requires prior field {name}")
            if name in ("ak0", "bk0", "al0", "be0") and np.shape(v) != (d,):
                raise ValueError(f"{name} must have length d={d}")
            if name in ("a0", "b0", "ak0", "bk0", "al0", "be0", "wishart_df0") and np.any(np.asarray(v) <= 0):
                raise ValueError(f"{name} must be positive")
        if ModelId(model) in _WISHART:
            if self.wishart_df0 < d:
                raise ValueError("wishart_df0 must be >= d")
            S = np.atleast_2d(np.asarray(self.wishart_scale0, dtype=float))
            if S.shape != (d, d) or np.max(np.abs(S - S.T)) > 1e-10:
                raise ValueError("wishart_scale0 must be symmetric d x d")
            try:
                np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                raise ValueError("wishart_scale0 must be positive definite") from None
        if ModelId(model).uses_gibbs and self.C0.shape != (G, d, d):
            raise ValueError("C0 must have shape (G, d, d)")


_WISHART = {ModelId.EEE, ModelId.VEE, ModelId.EVV, ModelId.VVV}


def required_fields(model: ModelId) -> tuple[str, ...]:
    model = ModelId(model)
    volume = ("a0", "b0")
    per_k = ("ak0", "bk0")
    shape = ("al0", "be0")
    wishart = ("wishart_df0", "wishart_scale0")
    return {
        ModelId.EII: volume,
        ModelId.VII: volume,
        ModelId.EEI: per_k,
        ModelId.VEI: volume + shape,
        ModelId.EVI: volume + shape,
        ModelId.VVI: volume + shape,
        ModelId.EEE: wishart,
        ModelId.VEE: volume + wishart,
        ModelId.EEV: per_k + ("C0",),
        ModelId.VEV: volume + shape + ("C0",),
        ModelId.EVV: volume + wishart,
        ModelId.VVV: wishart,
    }[model]


@dataclass
class InitConfig:
    G_max: int = 10
    strategy: str = "random-responsibilities"
    seed: int = 0
    prune_threshold: float = 2.0

    def __post_init__(self):
        if self.G_max < 2:
            raise ValueError("G_max must be >= 2")
        if self.prune_threshold < 0:
            raise ValueError("prune_threshold must be >= 0")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")


def default_priors(data: Dataset, model: ModelId | str, G_max: int,
                   shape_a0: float = 2.0, alpha0: float = 0.01,
                   volume_a0: float = 0.5) -> HyperPriors:
    """Weakly informative, data-scaled priors.

    Each precision factor has prior mean equal to the matching moment of the
    pooled sample precision; ``shape_a0`` sets how many pseudo-observations
    that guess is worth. The volume gamma gets the weaker ``volume_a0``: the
    pooled variance overstates every within-component volume, so a heavy
    prior there inflates the small components.
    """
    model = ModelId.parse(model) if isinstance(model, str) else model
    Y = data.Y
    n, d = Y.shape
    if n < 2:
        raise ValueError("need at least two observations for data-scaled priors")
    var = Y.var(axis=0, ddof=1)
    for k in np.flatnonzero(var <= 0):
        name = data.columns[k] if data.columns else f"column {k}"
        raise ValueError(f"degenerate data: {name} has zero variance")
    cov = np.atleast_2d(np.cov(Y, rowvar=False))
    # shape factors are determinant-one, so their priors live in unit-free terms
    var_shape = var / np.exp(np.mean(np.log(var)))
    sign, logdet = np.linalg.slogdet(cov)
    if model in (ModelId.VEE, ModelId.EVV):
        volume = math.exp(logdet / d) if sign > 0 else float(var.mean())
        scale0 = cov / volume
    elif model in (ModelId.EII, ModelId.VII):
        volume, scale0 = float(var.mean()), cov
    else:
        volume, scale0 = float(np.exp(np.mean(np.log(var)))), cov

    return HyperPriors(
        alpha0=np.full(G_max, alpha0),
        beta0=np.full(G_max, 0.01),
        m0=np.tile(Y.mean(axis=0), (G_max, 1)),
        a0=volume_a0,
        b0=volume_a0 * volume,
        ak0=np.full(d, shape_a0),
        bk0=shape_a0 * var,
        al0=np.full(d, shape_a0),
        be0=shape_a0 * var_shape,
        wishart_df0=float(d),
        wishart_scale0=d * scale0,
        C0=np.zeros((G_max, d, d)),
    )


# -- flat key-value config files ------------------------------------------

_ARRAY_KEYS = {"alpha0", "beta0", "m0", "ak0", "bk0", "al0", "be0", "wishart_scale0", "C0"}
_SCALAR_KEYS = {"a0", "b0", "wishart_df0"}


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def dump_config(path: str | Path, priors: Optional[HyperPriors] = None,
                init: Optional[InitConfig] = None) -> None:
    """Write priors and/or init settings as ``key = value`` lines.

    Arrays are written row-major with their shape in a ``key.shape`` line.
    Floats use ``repr`` so a reload is exact.
    """
    lines = ["# vbgpcm configuration"]
    if init is not None:
        for f in fields(init):
            lines.append(f"{f.name} = {getattr(init, f.name)}")
    if priors is not None:
        for f in fields(priors):
            v = getattr(priors, f.name)
            if v is None:
                continue
            if f.name in _ARRAY_KEYS:
                arr = np.asarray(v)
                lines.append(f"{f.name}.shape = {' '.join(str(s) for s in arr.shape)}")
                lines.append(f"{f.name} = {_fmt(arr)}")
            else:
                lines.append(f"{f.name} = {repr(float(v))}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_config(path: str | Path) -> dict:
    """Read a ``key = value`` file into a dict of raw strings."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def load_config(path: str | Path, base: Optional[HyperPriors] = None):
    """Load ``(priors, init_overrides)``.

    Prior keys present in the file replace those of ``base``; keys absent keep
    the base values. ``init_overrides`` maps InitConfig field names to values.
    """
    raw = parse_config(path)
    prior_kwargs = {}
    for key, value in raw.items():
        if key.endswith(".shape"):
            continue
        if key in _ARRAY_KEYS:
            arr = np.array([float(x) for x in value.split()])
            shape = raw.get(f"{key}.shape")
            if shape:
                arr = arr.reshape(tuple(int(s) for s in shape.split()))
            elif arr.size == 1 and base is not None and getattr(base, key) is not None:
                # a bare scalar fills the whole array, e.g. "alpha0 = 0.5"
                arr = np.full(np.shape(getattr(base, key)), arr[0])
            prior_kwargs[key] = arr
        elif key in _SCALAR_KEYS:
            prior_kwargs[key] = float(value)

    priors = None
    if base is not None or {"alpha0", "beta0", "m0"} <= prior_kwargs.keys():
        merged = {} if base is None else {f.name: getattr(base, f.name) for f in fields(base)}
        merged.update(prior_kwargs)
        priors = HyperPriors(**merged)

    init = {}
    casts = {"G_max": int, "seed": int, "prune_threshold": float, "strategy": str}
    for key, cast in casts.items():
        if key in raw:
            init[key] = cast(raw[key])
    return priors, init
