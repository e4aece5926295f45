"""Probability primitives: categorical distributions, stochastic matrices,
precision weighting.

Everything here is a pure function over immutable containers. Probabilities
are kept in natural space (not log space) so that trace payloads stay
directly readable; logs are taken internally with a floor of ``LOG_FLOOR``
to keep zero entries out of ``log``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    NegativeEntryError,
    NonFiniteInputError,
    NormalizationError,
    ZeroMassError,
)

# Floor applied to any probability before taking its log. Small enough to
# perturb results well below the 1e-9 acceptance tolerances.
LOG_FLOOR = 1e-16

# Tolerance for "sums to one" checks on constructed distributions.
NORM_TOL = 1e-9


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Categorical:
    """Normalized distribution over a finite set of indices."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise DimensionMismatchError(
                f"categorical needs a 1-d vector with >=1 entry, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise NonFiniteInputError("categorical entries must be finite")
        if np.any(p < 0):
            raise NegativeEntryError(f"categorical entries must be >= 0, got min {p.min()}")
        s = float(p.sum())
        if abs(s - 1.0) > NORM_TOL:
            raise NormalizationError(f"probabilities sum to {s!r}, expected 1 within {NORM_TOL}")
        object.__setattr__(self, "probs", _freeze(p))

    @property
    def dim(self) -> int:
        return int(self.probs.size)

    @staticmethod
    def uniform(n: int) -> "Categorical":
        return Categorical(np.full(n, 1.0 / n))

    @staticmethod
    def one_hot(n: int, index: int) -> "Categorical":
        v = np.zeros(n)
        v[index] = 1.0
        return Categorical(v)


@dataclass(frozen=True)
class LikelihoodMatrix:
    """Column-stochastic outcome-given-state mapping (outcomes x states)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise DimensionMismatchError(
                f"likelihood matrix must be 2-d and non-empty, got shape {m.shape}")
        for j in range(m.shape[1]):
            Categorical(m[:, j])  # raises with the precise defect
        object.__setattr__(self, "matrix", _freeze(m))

    @property
    def num_outcomes(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def num_states(self) -> int:
        return int(self.matrix.shape[1])

    def column(self, j: int) -> Categorical:
        return Categorical(self.matrix[:, j])


@dataclass(frozen=True)
class TransitionModel:
    """Per-action state dynamics: a column-stochastic states x states matrix
    for each action. Column j of action a is the next-state distribution
    from state j under a."""

    per_action: tuple

    def __init__(self, per_action):
        mats = []
        for a, raw in enumerate(per_action):
            m = np.asarray(raw, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise DimensionMismatchError(
                    f"transition slice for action {a} must be square, got shape {m.shape}")
            for j in range(m.shape[1]):
                Categorical(m[:, j])
            mats.append(_freeze(m))
        if not mats:
            raise DimensionMismatchError("transition model needs at least one action")
        if len({m.shape for m in mats}) != 1:
            raise DimensionMismatchError("all action slices must share one state dimension")
        object.__setattr__(self, "per_action", tuple(mats))

    @property
    def num_actions(self) -> int:
        return len(self.per_action)

    @property
    def num_states(self) -> int:
        return int(self.per_action[0].shape[0])


@dataclass(frozen=True)
class PreferenceVector:
    """Preferred-outcome distribution; target of the risk term."""

    prefs: Categorical

    @property
    def dim(self) -> int:
        return self.prefs.dim


@dataclass(frozen=True)
class Precision:
    """Positive sharpness exponent applied to a likelihood."""

    gamma: float

    def __post_init__(self):
        g = float(self.gamma)
        if not np.isfinite(g):
            raise NonFiniteInputError("precision must be finite")
        if g <= 0:
            raise NegativeEntryError(f"precision must be > 0, got {g}")
        object.__setattr__(self, "gamma", g)


def normalize(v) -> Categorical:
    """Divide a non-negative vector by its mass."""
    a = np.asarray(v, dtype=float)
    if a.ndim != 1 or a.size < 1:
        raise DimensionMismatchError(f"expected a 1-d vector with >=1 entry, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteInputError("cannot normalize non-finite entries")
    if np.any(a < 0):
        raise NegativeEntryError(f"cannot normalize negative entries, got min {a.min()}")
    s = float(a.sum())
    if s <= 0:
        raise ZeroMassError("cannot normalize a vector with zero total mass")
    return Categorical(a / s)


def softmax(v) -> Categorical:
    """exp(v - max(v)) normalized; invariant under adding a constant."""
    a = np.asarray(v, dtype=float)
    if a.ndim != 1 or a.size < 1:
        raise DimensionMismatchError(f"expected a 1-d vector with >=1 entry, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteInputError("softmax requires finite entries")
    e = np.exp(a - a.max())
    return Categorical(e / e.sum())


def entropy(p: Categorical) -> float:
    """Shannon entropy -sum p ln p in nats, with 0 ln 0 := 0."""
    a = p.probs
    nz = a > 0
    return float(-np.sum(a[nz] * np.log(a[nz])))


def kl_divergence(p: Categorical, q: Categorical) -> float:
    """KL(p || q) in nats; q is floored at LOG_FLOOR before the log."""
    if p.dim != q.dim:
        raise DimensionMismatchError(f"KL dimensions differ: {p.dim} vs {q.dim}")
    pa, qa = p.probs, np.maximum(q.probs, LOG_FLOOR)
    nz = pa > 0
    return float(np.sum(pa[nz] * (np.log(pa[nz]) - np.log(qa[nz]))))


def precision_weight(A: LikelihoodMatrix, gamma: Precision) -> LikelihoodMatrix:
    """Sharpen or flatten a likelihood columnwise: softmax(gamma * ln A[:, j]).

    Equivalent to renormalizing the elementwise power A**gamma. gamma = 1
    returns the matrix unchanged; gamma > 1 lowers column entropy, gamma < 1
    raises it toward uniform.
    """
    g = gamma.gamma
    if g == 1.0:
        return A
    logs = np.log(np.maximum(A.matrix, LOG_FLOOR)) * g
    cols = [np.exp(c - c.max()) for c in logs.T]
    out = np.column_stack([c / c.sum() for c in cols])
    return LikelihoodMatrix(out)
