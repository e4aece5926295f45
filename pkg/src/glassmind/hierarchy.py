"""Hierarchical agent: levels coupled by ascending data and descending
precision.

Each level is a complete generative model over its own state space. The
chain is closed in two directions:

  * ascending: a level's posterior is handed to the level above verbatim as
    a soft observation, so the upper level performs inference about the
    lower level's inference;
  * descending: the upper level's current belief is converted into a
    likelihood precision for the level below via its precision map, a convex
    combination of the map's values (soft attention).

Only level 1 plans and acts overtly. Higher levels act covertly, through
precision alone, and advance their own state with a designated null action
(index 0) on the ticks they run. Level n+1 runs once every ``tick_ratio``
ticks of level n, so the tick schedule is nested: whenever a level runs,
every level below it runs too.

Every inference, ascent, descent and policy evaluation performed by
``step_agent`` is emitted as a trace event; there are no silent belief
updates.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .audit import AuditTrace, TraceEvent, record
from .core import (
    Categorical,
    LikelihoodMatrix,
    Precision,
    PreferenceVector,
    TransitionModel,
    entropy,
    precision_weight,
)
from .errors import (
    DimensionMismatchError,
    EpisodeError,
    GlassmindError,
    UninitializedAgentError,
)
from .inference import (
    Belief,
    Observation,
    infer_states,
    predict_states,
    variational_free_energy,
)
from .planning import (
    HORIZON_CAP,
    enumerate_policies,
    expected_free_energy,
    policy_posterior,
    select_action,
)

MAX_LEVELS = 3

# Action index higher levels use to advance their own dynamics on a tick.
NULL_ACTION = 0


def default_labels(num_states: int, num_outcomes: int, num_actions: int) -> dict:
    return {
        "states": [f"s{i}" for i in range(num_states)],
        "outcomes": [f"o{i}" for i in range(num_outcomes)],
        "actions": [f"a{i}" for i in range(num_actions)],
    }


@dataclass(frozen=True)
class GenerativeModel:
    """One level's parameters: likelihood A, dynamics B, preferences C,
    state prior D, policy prior E, plus planning precision and horizon."""

    A: LikelihoodMatrix
    B: TransitionModel
    C: PreferenceVector
    D: Categorical
    E: Categorical
    gamma_G: Precision
    horizon: int
    labels: dict = None
    policies: tuple = field(init=False)

    def __post_init__(self):
        if self.A.num_states != self.B.num_states:
            raise DimensionMismatchError(
                f"A has {self.A.num_states} states but B has {self.B.num_states}")
        if self.A.num_states != self.D.dim:
            raise DimensionMismatchError(
                f"A has {self.A.num_states} states but D has {self.D.dim}")
        if self.A.num_outcomes != self.C.dim:
            raise DimensionMismatchError(
                f"A has {self.A.num_outcomes} outcomes but C has {self.C.dim}")
        if not 1 <= self.horizon <= HORIZON_CAP:
            raise DimensionMismatchError(
                f"horizon must be in 1..{HORIZON_CAP}, got {self.horizon}")
        policies = tuple(enumerate_policies(self.B.num_actions, self.horizon))
        if self.E.dim != len(policies):
            raise DimensionMismatchError(
                f"E has {self.E.dim} entries but there are {len(policies)} policies "
                f"({self.B.num_actions} actions, horizon {self.horizon})")
        labels = self.labels or default_labels(
            self.num_states, self.num_outcomes, self.num_actions)
        for key, n in (("states", self.num_states), ("outcomes", self.num_outcomes),
                       ("actions", self.num_actions)):
            if len(labels[key]) != n:
                raise DimensionMismatchError(
                    f"{len(labels[key])} {key} labels for dimension {n}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "policies", policies)

    @property
    def num_states(self) -> int:
        return self.A.num_states

    @property
    def num_outcomes(self) -> int:
        return self.A.num_outcomes

    @property
    def num_actions(self) -> int:
        return self.B.num_actions

    def to_dict(self) -> dict:
        return {
            "A": self.A.matrix.tolist(),
            "B": [m.tolist() for m in self.B.per_action],
            "C": self.C.prefs.probs.tolist(),
            "D": self.D.probs.tolist(),
            "E": self.E.probs.tolist(),
            "gamma_G": self.gamma_G.gamma,
            "horizon": self.horizon,
            "labels": {k: list(v) for k, v in self.labels.items()},
        }


@dataclass(frozen=True)
class PrecisionMap:
    """Attentional-state index -> likelihood precision for the level below."""

    values: tuple

    def __init__(self, values):
        vals = tuple(float(v) for v in values)
        if not vals:
            raise DimensionMismatchError("precision map needs at least one value")
        for i, v in enumerate(vals):
            Precision(v)  # positivity / finiteness
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class CovertActionRecord:
    """One descent: which attentional belief set which precision, and when."""

    level: int
    attentional_posterior: Categorical
    effective_gamma: Precision
    step: int


def ascend(posterior: Belief) -> Observation:
    """Pass a posterior up verbatim as a soft observation."""
    return Observation(posterior.dist)


def descend(att_posterior: Belief, pmap: PrecisionMap) -> Precision:
    """Expected precision under the attentional belief (soft attention)."""
    if att_posterior.dim != pmap.dim:
        raise DimensionMismatchError(
            f"attentional belief has {att_posterior.dim} states but the "
            f"precision map has {pmap.dim} values")
    return Precision(float(att_posterior.dist.probs @ np.asarray(pmap.values)))


def covert_action(level: int, att_posterior: Belief, pmap: PrecisionMap,
                  step: int) -> CovertActionRecord:
    """Perform a descent and package it as a covert-action record."""
    gamma = descend(att_posterior, pmap)
    if not min(pmap.values) <= gamma.gamma <= max(pmap.values):
        raise GlassmindError(
            f"effective gamma {gamma.gamma} escaped map range {pmap.values}")
    return CovertActionRecord(level=level, attentional_posterior=att_posterior.dist,
                              effective_gamma=gamma, step=step)


@dataclass
class HierarchicalAgent:
    """Ordered levels (1 = lowest/overt) with their couplings and tick clock.

    ``beliefs`` is None until reset(); step_agent mutates beliefs and the
    step counter, so a single agent instance must not be stepped
    concurrently.
    """

    levels: tuple
    couplings: tuple = ()
    tick_ratio: int = 1
    top_gamma: Precision = Precision(1.0)
    name: str = "agent"
    max_levels: int = MAX_LEVELS
    beliefs: list = None
    step_count: int = 0

    def __post_init__(self):
        self.levels = tuple(self.levels)
        self.couplings = tuple(self.couplings)
        L = len(self.levels)
        if not 1 <= L <= self.max_levels:
            raise DimensionMismatchError(
                f"agent needs 1..{self.max_levels} levels, got {L}")
        if len(self.couplings) != L - 1:
            raise DimensionMismatchError(
                f"{L} levels need {L - 1} couplings, got {len(self.couplings)}")
        for i in range(L - 1):
            below, above = self.levels[i], self.levels[i + 1]
            if below.num_states != above.num_outcomes:
                raise DimensionMismatchError(
                    f"level {i + 1} has {below.num_states} states but level "
                    f"{i + 2} expects {above.num_outcomes} outcomes")
            if self.couplings[i].dim != above.num_states:
                raise DimensionMismatchError(
                    f"coupling into level {i + 1} has {self.couplings[i].dim} values "
                    f"but level {i + 2} has {above.num_states} states")
        if self.tick_ratio < 1:
            raise DimensionMismatchError(f"tick_ratio must be >= 1, got {self.tick_ratio}")

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def reset(self):
        """Initialize beliefs from each level's state prior."""
        self.beliefs = [Belief(m.D, timestamp=0) for m in self.levels]
        self.step_count = 0

    def level(self, n: int) -> GenerativeModel:
        return self.levels[n - 1]

    def due_levels(self, step: int) -> list:
        """Levels that tick at this (1-based) step; always includes level 1."""
        return [n for n in range(1, self.num_levels + 1)
                if step % self.tick_ratio ** (n - 1) == 0]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "levels": [m.to_dict() for m in self.levels],
            "couplings": [{"values": list(c.values)} for c in self.couplings],
            "tick_ratio": self.tick_ratio,
            "top_gamma": self.top_gamma.gamma,
        }

    def spec_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _veclist(arr) -> list:
    return [float(x) for x in np.asarray(arr)]


def step_agent(agent: HierarchicalAgent, obs: Observation):
    """Run one full perception-attention-planning cycle.

    Returns (overt action index, trace events in emission order). Event
    order per step: precision descents top-down, then per due level
    (bottom-up) its input, prior, posterior and free energy, then the
    planning block at level 1, and nothing for the belief advance (the
    advanced belief is the next tick's prior event).
    """
    if agent.beliefs is None:
        raise UninitializedAgentError("call reset() before stepping the agent")
    if obs.dim != agent.level(1).num_outcomes:
        raise DimensionMismatchError(
            f"observation has {obs.dim} outcomes but level 1 expects "
            f"{agent.level(1).num_outcomes}")
    t = agent.step_count + 1
    L = agent.num_levels
    due = agent.due_levels(t)
    top_due = max(due)
    events = []

    # Top-down: effective precision per level. The top level keeps its
    # configured gamma; every other level receives a descent from above.
    gammas = {L: agent.top_gamma}
    for n in range(L - 1, 0, -1):
        gammas[n] = descend(agent.beliefs[n], agent.couplings[n - 1])
    for n in range(min(top_due, L - 1), 0, -1):
        rec = covert_action(n, agent.beliefs[n], agent.couplings[n - 1], t)
        events.append(TraceEvent(step=t, level=n, kind="precision_descend", payload={
            "attentional_posterior": _veclist(rec.attentional_posterior.probs),
            "effective_gamma": rec.effective_gamma.gamma,
            "source_level": n + 1,
        }))

    # Bottom-up: infer at every due level, handing posteriors upward.
    posteriors = {}
    effective_A = {}
    data = obs
    for n in range(1, top_due + 1):
        model = agent.level(n)
        A_eff = precision_weight(model.A, gammas[n])
        effective_A[n] = A_eff
        if n == 1:
            events.append(TraceEvent(step=t, level=1, kind="observation",
                                     payload={"dist": _veclist(data.dist.probs),
                                              "source": "external"}))
        else:
            events.append(TraceEvent(step=t, level=n, kind="ascend",
                                     payload={"dist": _veclist(data.dist.probs),
                                              "source_level": n - 1}))
        prior = agent.beliefs[n - 1]
        events.append(TraceEvent(step=t, level=n, kind="prior",
                                 payload={"dist": _veclist(prior.dist.probs)}))
        post = infer_states(A_eff, prior, data)
        events.append(TraceEvent(step=t, level=n, kind="posterior",
                                 payload={"dist": _veclist(post.dist.probs)}))
        F = variational_free_energy(post, prior, A_eff, data)
        events.append(TraceEvent(step=t, level=n, kind="vfe", payload={"value": float(F)}))
        posteriors[n] = post
        if n < top_due:
            data = ascend(post)

    # Planning: overt action selection at level 1 only.
    m1 = agent.level(1)
    evals = [expected_free_energy(m1, posteriors[1], pol, A_eff=effective_A[1])
             for pol in m1.policies]
    for i, ev in enumerate(evals):
        events.append(TraceEvent(step=t, level=1, kind="policy_eval", payload={
            "policy_index": i,
            "actions": list(ev.policy.actions),
            "G": float(ev.G),
            "risk_per_step": _veclist(ev.risk_per_step),
            "ambiguity_per_step": _veclist(ev.ambiguity_per_step),
            "F": float(ev.F),
        }))
    q_pi = policy_posterior(m1.E, np.zeros(len(evals)), [ev.G for ev in evals], m1.gamma_G)
    events.append(TraceEvent(step=t, level=1, kind="policy_posterior", payload={
        "probs": _veclist(q_pi.probs),
        "entropy": float(entropy(q_pi)),
    }))
    sel = select_action(q_pi, list(m1.policies))
    events.append(TraceEvent(step=t, level=1, kind="action", payload={
        "action": int(sel.action),
        "marginals": _veclist(sel.marginals),
        "best_policy_index": int(sel.best_policy_index),
        "best_policy_prob": float(sel.best_policy_prob),
    }))

    # Advance: level 1 under the chosen action, higher due levels under
    # their null action. Levels not due keep their current belief.
    agent.beliefs[0] = predict_states(m1.B, posteriors[1], sel.action)
    for n in range(2, top_due + 1):
        agent.beliefs[n - 1] = predict_states(agent.level(n).B, posteriors[n], NULL_ACTION)
    agent.step_count = t
    return sel.action, events


def episode_header(agent: HierarchicalAgent, process, steps: int, seed: int,
                   include_truth: bool) -> dict:
    spec = agent.to_dict()
    return {
        "format": "glassmind-trace",
        "format_version": 1,
        "name": agent.name,
        "agent_spec": spec,
        "agent_spec_hash": agent.spec_hash(),
        "process_spec": process.to_dict() if process is not None else None,
        "seed": int(seed),
        "steps": int(steps),
        "include_truth": bool(include_truth),
        "dimensions": {
            "levels": agent.num_levels,
            "states": [m.num_states for m in agent.levels],
            "outcomes": [m.num_outcomes for m in agent.levels],
            "actions": [m.num_actions for m in agent.levels],
            "policies": len(agent.level(1).policies),
            "horizon": agent.level(1).horizon,
        },
        "labels": {"levels": [
            {k: list(v) for k, v in m.labels.items()} for m in agent.levels
        ]},
    }


def run_episode(agent: HierarchicalAgent, process, steps: int, seed: int,
                include_truth: bool = True) -> AuditTrace:
    """Drive the agent against a generative process for ``steps`` ticks.

    The process is reseeded and the agent's beliefs are reset from their
    priors, so (agent, process, steps, seed) fully determines the returned
    trace. With ``include_truth`` the simulator's true state is recorded
    ahead of each step for accuracy scoring; disable it for traces meant to
    mimic deployment.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if process.num_outcomes != agent.level(1).num_outcomes:
        raise DimensionMismatchError(
            f"process emits {process.num_outcomes} outcomes but level 1 "
            f"expects {agent.level(1).num_outcomes}")
    process.reset(seed)
    agent.reset()
    trace = AuditTrace(header=episode_header(agent, process, steps, seed, include_truth))
    for t in range(1, steps + 1):
        try:
            if include_truth:
                state = process.current_state
                record(trace, TraceEvent(step=t, level=0, kind="process_truth",
                                         payload={"state": int(state),
                                                  "label": process.state_label(state)}))
            obs = process.emit()
            action, events = step_agent(agent, obs)
            for ev in events:
                record(trace, ev)
            process.advance(action)
        except GlassmindError as exc:
            raise EpisodeError(t, exc) from exc
    return trace
