"""Policy evaluation and action selection.

A policy is a fixed-length action sequence. Each candidate is scored by its
expected free energy G, the sum over the horizon of

    risk_t      = KL( predicted outcomes at t || preferred outcomes )
    ambiguity_t = E_{s ~ predicted states at t} [ entropy of likelihood column s ]

Lower G is better. The policy posterior combines G with a prior over
policies and optional retrospective free energies, and the overt action is
the argmax of the posterior marginalized onto first actions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import (
    LOG_FLOOR,
    Categorical,
    LikelihoodMatrix,
    Precision,
    entropy,
    kl_divergence,
    softmax,
)
from .errors import DimensionMismatchError, EmptyPolicySetError, UnknownActionError
from .inference import Belief

# Largest planning horizon the enumerator accepts; keeps the policy set and
# the audit trail at desk scale.
HORIZON_CAP = 4


@dataclass(frozen=True)
class Policy:
    """A candidate course of action: one action index per horizon step."""

    actions: tuple

    def __init__(self, actions):
        acts = tuple(int(a) for a in actions)
        if not 1 <= len(acts) <= HORIZON_CAP:
            raise DimensionMismatchError(
                f"policy length must be in 1..{HORIZON_CAP}, got {len(acts)}")
        if any(a < 0 for a in acts):
            raise UnknownActionError(f"policy contains a negative action index: {acts}")
        object.__setattr__(self, "actions", acts)

    @property
    def horizon(self) -> int:
        return len(self.actions)


@dataclass
class PolicyEvaluation:
    """Expected free energy of one policy, with its risk/ambiguity split."""

    policy: Policy
    G: float
    risk_per_step: list
    ambiguity_per_step: list
    F: float = 0.0
    posterior_prob: float | None = None

    def __post_init__(self):
        if len(self.risk_per_step) != len(self.ambiguity_per_step):
            raise DimensionMismatchError("risk and ambiguity lists must align")
        if min(self.risk_per_step, default=0.0) < -1e-12:
            raise ValueError(f"negative risk term: {self.risk_per_step}")
        if min(self.ambiguity_per_step, default=0.0) < -1e-12:
            raise ValueError(f"negative ambiguity term: {self.ambiguity_per_step}")
        total = sum(self.risk_per_step) + sum(self.ambiguity_per_step)
        if abs(total - self.G) > 1e-9:
            raise ValueError(f"G={self.G} does not match risk+ambiguity={total}")

    @property
    def risk(self) -> float:
        return float(sum(self.risk_per_step))

    @property
    def ambiguity(self) -> float:
        return float(sum(self.ambiguity_per_step))


@dataclass(frozen=True)
class ActionSelection:
    """Chosen action plus the rationale needed to audit the choice."""

    action: int
    marginals: np.ndarray  # posterior mass per first action
    best_policy_index: int  # highest-posterior policy starting with the action
    best_policy_prob: float

    def __post_init__(self):
        object.__setattr__(self, "marginals", np.asarray(self.marginals, dtype=float))


def enumerate_policies(num_actions: int, horizon: int) -> list:
    """All action sequences of the given length, in lexicographic order."""
    if not 1 <= horizon <= HORIZON_CAP:
        raise DimensionMismatchError(f"horizon must be in 1..{HORIZON_CAP}, got {horizon}")
    if num_actions < 1:
        raise UnknownActionError(f"need at least one action, got {num_actions}")
    return [Policy(seq) for seq in itertools.product(range(num_actions), repeat=horizon)]


def expected_observations(A_eff: LikelihoodMatrix, s_pred: Belief) -> Categorical:
    """Predicted outcome distribution A_eff @ s_pred."""
    if A_eff.num_states != s_pred.dim:
        raise DimensionMismatchError(
            f"likelihood has {A_eff.num_states} states but belief has {s_pred.dim}")
    return Categorical(A_eff.matrix @ s_pred.dist.probs)


def expected_free_energy(model, belief: Belief, policy: Policy,
                         A_eff: LikelihoodMatrix | None = None) -> PolicyEvaluation:
    """Roll ``belief`` through the policy and accumulate risk and ambiguity.

    ``model`` supplies B (dynamics), C (preferences) and A (likelihood);
    pass ``A_eff`` to plan under a precision-weighted likelihood instead of
    the model's raw one, keeping planning consistent with perception.
    """
    A = A_eff if A_eff is not None else model.A
    B, C = model.B, model.C
    if B.num_states != belief.dim:
        raise DimensionMismatchError(
            f"transition model has {B.num_states} states but belief has {belief.dim}")
    col_entropies = np.array([entropy(A.column(j)) for j in range(A.num_states)])
    risk, ambiguity = [], []
    s = belief.dist.probs
    for a in policy.actions:
        if not 0 <= a < B.num_actions:
            raise UnknownActionError(f"action {a} outside range 0..{B.num_actions - 1}")
        s = B.per_action[a] @ s
        q_o = Categorical(A.matrix @ s)
        risk.append(kl_divergence(q_o, C.prefs))
        ambiguity.append(float(s @ col_entropies))
    G = float(sum(risk) + sum(ambiguity))
    return PolicyEvaluation(policy=policy, G=G, risk_per_step=risk,
                            ambiguity_per_step=ambiguity)


def policy_posterior(E: Categorical, F_vec, G_vec, gamma_G: Precision) -> Categorical:
    """softmax(ln E - F - gamma_G * G) over policies."""
    F = np.asarray(F_vec, dtype=float)
    G = np.asarray(G_vec, dtype=float)
    if not (E.dim == F.size == G.size):
        raise DimensionMismatchError(
            f"policy vectors disagree: E dim {E.dim}, F size {F.size}, G size {G.size}")
    log_E = np.log(np.maximum(E.probs, LOG_FLOOR))
    return softmax(log_E - F - gamma_G.gamma * G)


def select_action(posterior: Categorical, policies: list) -> ActionSelection:
    """Marginalize the policy posterior onto first actions and take the argmax.

    Ties break toward the lowest action index, so selection is deterministic.
    """
    if not policies:
        raise EmptyPolicySetError("cannot select an action from zero policies")
    if posterior.dim != len(policies):
        raise DimensionMismatchError(
            f"posterior has {posterior.dim} entries but there are {len(policies)} policies")
    num_actions = max(p.actions[0] for p in policies) + 1
    marginals = np.zeros(num_actions)
    for prob, pol in zip(posterior.probs, policies):
        marginals[pol.actions[0]] += prob
    action = int(np.argmax(marginals))  # np.argmax already returns the first max
    best_idx, best_prob = -1, -1.0
    for i, pol in enumerate(policies):
        if pol.actions[0] == action and posterior.probs[i] > best_prob:
            best_idx, best_prob = i, float(posterior.probs[i])
    return ActionSelection(action=action, marginals=marginals,
                           best_policy_index=best_idx, best_policy_prob=best_prob)
