"""Single-level perceptual inference.

Posterior state estimation is exact for a categorical level: the fixed point
of free-energy minimization is softmax(ln prior + ln-likelihood), so no
iterative scheme is needed. Observations may be soft (a distribution over
outcomes) to support data ascended from a lower level; the log-likelihood is
then the observation-weighted mix of the log columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LOG_FLOOR, Categorical, LikelihoodMatrix, TransitionModel, softmax
from .errors import DimensionMismatchError, UnknownActionError


@dataclass(frozen=True)
class Observation:
    """Outcome evidence: one-hot for hard observations, soft for ascended data."""

    dist: Categorical

    @property
    def dim(self) -> int:
        return self.dist.dim

    @staticmethod
    def from_index(num_outcomes: int, index: int) -> "Observation":
        return Observation(Categorical.one_hot(num_outcomes, index))


@dataclass(frozen=True)
class Belief:
    """Distribution over latent states at a step index."""

    dist: Categorical
    timestamp: int = 0

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError(f"timestamp must be >= 0, got {self.timestamp}")

    @property
    def dim(self) -> int:
        return self.dist.dim


def _expected_log_likelihood(A_eff: LikelihoodMatrix, obs: Observation) -> np.ndarray:
    """Per-state sum_o obs(o) ln A[o, s], with flooring."""
    logA = np.log(np.maximum(A_eff.matrix, LOG_FLOOR))
    return logA.T @ obs.dist.probs


def infer_states(A_eff: LikelihoodMatrix, prior: Belief, obs: Observation) -> Belief:
    """Posterior = softmax(ln prior + ln(A_eff)^T obs).

    For a one-hot observation this is the exact Bayes posterior
    prior * A_eff[o, :] renormalized. ``A_eff`` must already carry any
    precision weighting the caller wants applied.
    """
    if A_eff.num_outcomes != obs.dim:
        raise DimensionMismatchError(
            f"likelihood has {A_eff.num_outcomes} outcomes but observation has {obs.dim}")
    if A_eff.num_states != prior.dim:
        raise DimensionMismatchError(
            f"likelihood has {A_eff.num_states} states but prior has {prior.dim}")
    log_post = np.log(np.maximum(prior.dist.probs, LOG_FLOOR)) + _expected_log_likelihood(A_eff, obs)
    return Belief(softmax(log_post), timestamp=prior.timestamp)


def variational_free_energy(q: Belief, prior: Belief, A_eff: LikelihoodMatrix,
                            obs: Observation) -> float:
    """F(q) = KL(q || prior) - E_q[ln p(obs | s)] in nats.

    Upper-bounds surprise: F >= -ln p(obs), with equality exactly when q is
    the posterior returned by infer_states.
    """
    if q.dim != prior.dim:
        raise DimensionMismatchError(f"q has {q.dim} states but prior has {prior.dim}")
    if A_eff.num_states != q.dim or A_eff.num_outcomes != obs.dim:
        raise DimensionMismatchError(
            f"likelihood shape ({A_eff.num_outcomes}, {A_eff.num_states}) incompatible "
            f"with q dim {q.dim} and observation dim {obs.dim}")
    qa = q.dist.probs
    nz = qa > 0
    log_prior = np.log(np.maximum(prior.dist.probs, LOG_FLOOR))
    complexity = float(np.sum(qa[nz] * (np.log(qa[nz]) - log_prior[nz])))
    accuracy = float(qa @ _expected_log_likelihood(A_eff, obs))
    return complexity - accuracy


def predict_states(B: TransitionModel, belief: Belief, action: int) -> Belief:
    """Advance a belief one step under an action: B[action] @ belief."""
    if not 0 <= action < B.num_actions:
        raise UnknownActionError(f"action {action} outside range 0..{B.num_actions - 1}")
    if B.num_states != belief.dim:
        raise DimensionMismatchError(
            f"transition model has {B.num_states} states but belief has {belief.dim}")
    return Belief(Categorical(B.per_action[action] @ belief.dist.probs),
                  timestamp=belief.timestamp + 1)
