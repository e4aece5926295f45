"""Append-only audit traces, per-decision explanations, and deterministic
text reports.

A trace is the complete record of an episode: every observation, prior,
posterior, free energy, precision descent, policy evaluation and action, in
emission order. Explanations never recompute anything; they are pure lookups
into the trace, so a report can always be checked against the raw numbers it
came from. Reports are rendered from fixed templates with floats printed at
7 significant digits, which keeps the output byte-stable across runs and
platforms.

Trace file format (JSON, UTF-8):

    {"header": {...}, "events": [{"sequence_no": 0, "step": 1, "level": 1,
                                  "kind": "observation", "payload": {...}}, ...]}

The header carries the agent spec (and hash), the process spec, the seed,
the per-level dimensions and the label maps; together these are sufficient
to replay the episode and reproduce the event stream exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DimensionMismatchError,
    NoPlanningAtStepError,
    ParseError,
    SequenceError,
    StepNotFoundError,
)

EVENT_KINDS = (
    "observation",
    "prior",
    "posterior",
    "vfe",
    "precision_descend",
    "ascend",
    "policy_eval",
    "policy_posterior",
    "action",
    "process_truth",
)

REQUIRED_HEADER_KEYS = ("agent_spec", "agent_spec_hash", "seed", "dimensions", "labels")


def fmt7(x: float) -> str:
    """Fixed 7-significant-digit float format used in all report text."""
    return f"{float(x):.7g}"


@dataclass(frozen=True)
class TraceEvent:
    step: int
    level: int
    kind: str
    payload: dict
    sequence_no: int | None = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.step < 1:
            raise ValueError(f"step must be >= 1, got {self.step}")

    def to_dict(self) -> dict:
        return {"sequence_no": self.sequence_no, "step": self.step,
                "level": self.level, "kind": self.kind, "payload": self.payload}


@dataclass
class AuditTrace:
    header: dict
    events: list = field(default_factory=list)

    def __post_init__(self):
        if "dimensions" not in self.header:
            raise DimensionMismatchError("trace header must carry a 'dimensions' block")

    @property
    def dimensions(self) -> dict:
        return self.header["dimensions"]

    def labels(self, level: int) -> dict:
        return self.header["labels"]["levels"][level - 1]

    def events_at(self, step: int) -> list:
        return [e for e in self.events if e.step == step]

    def steps(self) -> list:
        seen = []
        for e in self.events:
            if not seen or e.step != seen[-1]:
                seen.append(e.step)
        return seen


def _expect_vec(payload: dict, key: str, dim: int, kind: str):
    v = payload.get(key)
    if not isinstance(v, (list, tuple)) or len(v) != dim:
        got = len(v) if isinstance(v, (list, tuple)) else type(v).__name__
        raise DimensionMismatchError(
            f"{kind} payload field {key!r} must be a vector of length {dim}, got {got}")


def _validate_event(event: TraceEvent, dims: dict):
    levels = dims["levels"]
    if event.kind != "process_truth" and not 1 <= event.level <= levels:
        raise DimensionMismatchError(
            f"event level {event.level} outside 1..{levels}")
    states = dims["states"]
    outcomes = dims["outcomes"]
    k, p = event.kind, event.payload
    if k == "observation":
        _expect_vec(p, "dist", outcomes[0], k)
    elif k == "ascend":
        _expect_vec(p, "dist", outcomes[event.level - 1], k)
    elif k in ("prior", "posterior"):
        _expect_vec(p, "dist", states[event.level - 1], k)
    elif k == "vfe":
        if not np.isfinite(p.get("value", np.nan)):
            raise DimensionMismatchError("vfe payload must carry a finite 'value'")
    elif k == "precision_descend":
        if event.level >= levels:
            raise DimensionMismatchError(
                f"precision descends into levels 1..{levels - 1}, got {event.level}")
        _expect_vec(p, "attentional_posterior", states[event.level], k)
        if not p.get("effective_gamma", 0) > 0:
            raise DimensionMismatchError("effective_gamma must be positive")
    elif k == "policy_eval":
        h = dims["horizon"]
        _expect_vec(p, "actions", h, k)
        _expect_vec(p, "risk_per_step", h, k)
        _expect_vec(p, "ambiguity_per_step", h, k)
        if any(not 0 <= a < dims["actions"][0] for a in p["actions"]):
            raise DimensionMismatchError(f"policy actions {p['actions']} out of range")
    elif k == "policy_posterior":
        _expect_vec(p, "probs", dims["policies"], k)
    elif k == "action":
        _expect_vec(p, "marginals", dims["actions"][0], k)
        if not 0 <= p.get("action", -1) < dims["actions"][0]:
            raise DimensionMismatchError(f"action index {p.get('action')} out of range")
    elif k == "process_truth":
        if p.get("state", -1) < 0:
            raise DimensionMismatchError("process_truth state must be >= 0")


def record(trace: AuditTrace, event: TraceEvent) -> AuditTrace:
    """Append an event, assigning the next sequence number.

    Events must arrive in non-decreasing step order; an event carrying a
    preassigned sequence number must match the slot it lands in.
    """
    _validate_event(event, trace.dimensions)
    next_no = len(trace.events)
    if event.sequence_no is not None and event.sequence_no != next_no:
        raise SequenceError(
            f"event carries sequence_no {event.sequence_no}, expected {next_no}")
    if trace.events and event.step < trace.events[-1].step:
        raise SequenceError(
            f"step {event.step} arrives after step {trace.events[-1].step}")
    trace.events.append(replace(event, sequence_no=next_no))
    return trace


@dataclass(frozen=True)
class PolicySummary:
    index: int
    actions: tuple
    label: str
    G: float
    risk: float
    ambiguity: float
    posterior_prob: float


@dataclass(frozen=True)
class PrecisionState:
    level: int
    attentional_posterior: tuple
    attention_labels: tuple
    effective_gamma: float


@dataclass(frozen=True)
class Explanation:
    """Everything behind one decision, copied verbatim from the trace."""

    step: int
    chosen_action: int
    chosen_action_label: str
    action_marginals: tuple
    action_labels: tuple
    top_policies: tuple  # PolicySummary, ascending G
    confidence: float  # posterior prob of the chosen action's best policy
    policy_entropy: float
    precision_states: tuple  # PrecisionState per receiving level


def _policy_label(actions, action_labels) -> str:
    return ">".join(action_labels[a] for a in actions)


def explain_step(trace: AuditTrace, step: int) -> Explanation:
    """Assemble the explanation for one step purely by trace lookup."""
    events = trace.events_at(step)
    if not events:
        raise StepNotFoundError(f"no events recorded at step {step}")
    by_kind = {}
    for e in events:
        by_kind.setdefault(e.kind, []).append(e)
    if "action" not in by_kind or "policy_posterior" not in by_kind:
        raise NoPlanningAtStepError(f"step {step} contains no planning block")

    action_ev = by_kind["action"][0]
    post_ev = by_kind["policy_posterior"][0]
    labels1 = trace.labels(1)
    action_labels = tuple(labels1["actions"])
    probs = post_ev.payload["probs"]

    summaries = []
    for ev in by_kind.get("policy_eval", []):
        p = ev.payload
        idx = p["policy_index"]
        summaries.append(PolicySummary(
            index=idx,
            actions=tuple(p["actions"]),
            label=_policy_label(p["actions"], action_labels),
            G=p["G"],
            risk=sum(p["risk_per_step"]),
            ambiguity=sum(p["ambiguity_per_step"]),
            posterior_prob=probs[idx],
        ))
    summaries.sort(key=lambda s: (s.G, s.index))

    precision_states = []
    for ev in sorted(by_kind.get("precision_descend", []), key=lambda e: e.level):
        p = ev.payload
        above = trace.labels(ev.level + 1)
        precision_states.append(PrecisionState(
            level=ev.level,
            attentional_posterior=tuple(p["attentional_posterior"]),
            attention_labels=tuple(above["states"]),
            effective_gamma=p["effective_gamma"],
        ))

    chosen = action_ev.payload["action"]
    return Explanation(
        step=step,
        chosen_action=chosen,
        chosen_action_label=action_labels[chosen],
        action_marginals=tuple(action_ev.payload["marginals"]),
        action_labels=action_labels,
        top_policies=tuple(summaries),
        confidence=action_ev.payload["best_policy_prob"],
        policy_entropy=post_ev.payload["entropy"],
        precision_states=tuple(precision_states),
    )


def _labeled_dist(values, labels) -> str:
    return " ".join(f"{n}={fmt7(v)}" for n, v in zip(labels, values))


def render_explanation(expl: Explanation) -> str:
    """Plain-text rendering of a single decision."""
    lines = [
        f"step {expl.step}: action={expl.chosen_action_label} "
        f"confidence={fmt7(expl.confidence)} policy-entropy={fmt7(expl.policy_entropy)}",
        f"  action marginals: {_labeled_dist(expl.action_marginals, expl.action_labels)}",
    ]
    for s in expl.top_policies:
        lines.append(
            f"  policy {s.label}: G={fmt7(s.G)} risk={fmt7(s.risk)} "
            f"ambiguity={fmt7(s.ambiguity)} posterior={fmt7(s.posterior_prob)}")
    for ps in expl.precision_states:
        lines.append(
            f"  attention into level {ps.level}: "
            f"{_labeled_dist(ps.attentional_posterior, ps.attention_labels)} "
            f"-> likelihood precision {fmt7(ps.effective_gamma)}")
    return "\n".join(lines) + "\n"


def render_report(trace: AuditTrace, verbosity: str = "summary") -> str:
    """Render a whole trace at 'summary', 'decision' or 'full' verbosity.

    Pure function of (trace, verbosity): rendering twice yields byte-equal
    text.
    """
    if verbosity not in ("summary", "decision", "full"):
        raise ValueError(f"unknown verbosity {verbosity!r}")
    h = trace.header
    dims = trace.dimensions
    lines = [
        "=== glassmind episode report ===",
        f"agent: {h.get('name', 'unnamed')}",
        f"levels: {dims['levels']} "
        f"(states {'/'.join(str(s) for s in dims['states'])}, "
        f"outcomes {'/'.join(str(o) for o in dims['outcomes'])})",
        f"seed: {h.get('seed')}  steps: {h.get('steps')}",
        f"agent spec hash: {h.get('agent_spec_hash')}",
    ]
    for step in trace.steps():
        events = trace.events_at(step)
        by_kind = {}
        for e in events:
            by_kind.setdefault(e.kind, []).append(e)
        if "action" not in by_kind:
            lines.append(f"step {step}: (no planning this step)")
            continue
        expl = explain_step(trace, step)
        if verbosity == "summary":
            lines.append(f"step {step}: action={expl.chosen_action_label} "
                         f"confidence={fmt7(expl.confidence)}")
            continue
        lines.append(render_explanation(expl).rstrip("\n"))
        if verbosity == "full":
            titles = {"observation": "observation", "ascend": "input",
                      "prior": "prior", "posterior": "posterior"}
            for ev in events:
                if ev.kind == "process_truth":
                    lbl = ev.payload.get("label", str(ev.payload["state"]))
                    lines.append(f"  truth: state={lbl}")
                elif ev.kind in titles:
                    names = (trace.labels(ev.level)["outcomes"]
                             if ev.kind in ("observation", "ascend")
                             else trace.labels(ev.level)["states"])
                    lines.append(f"  level {ev.level} {titles[ev.kind]}: "
                                 f"{_labeled_dist(ev.payload['dist'], names)}")
                elif ev.kind == "vfe":
                    lines.append(f"  level {ev.level} free energy: {fmt7(ev.payload['value'])}")
    return "\n".join(lines) + "\n"


def export_trace(trace: AuditTrace) -> bytes:
    """Serialize to canonical JSON bytes; floats keep full round-trip precision."""
    doc = {"header": trace.header, "events": [e.to_dict() for e in trace.events]}
    return json.dumps(doc, indent=2, sort_keys=True).encode("utf-8")


def import_trace(data) -> AuditTrace:
    """Parse bytes/str produced by export_trace back into an AuditTrace."""
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(f"invalid UTF-8: {e.reason}", offset=e.start) from e
    else:
        text = data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, offset=e.pos) from e
    if not isinstance(doc, dict) or "header" not in doc or "events" not in doc:
        raise ParseError("document must be an object with 'header' and 'events'")
    header = doc["header"]
    missing = [k for k in REQUIRED_HEADER_KEYS if k not in header]
    if missing:
        raise ParseError(f"header missing keys: {', '.join(missing)}")
    try:
        trace = AuditTrace(header=header)
        for i, raw in enumerate(doc["events"]):
            if not isinstance(raw, dict):
                raise ParseError(f"event {i} is not an object")
            try:
                ev = TraceEvent(step=raw["step"], level=raw["level"], kind=raw["kind"],
                                payload=raw["payload"], sequence_no=raw.get("sequence_no"))
            except KeyError as e:
                raise ParseError(f"event {i} missing field {e.args[0]!r}") from e
            except (ValueError, TypeError) as e:
                raise ParseError(f"event {i}: {e}") from e
            record(trace, ev)
    except (DimensionMismatchError, SequenceError) as e:
        raise ParseError(str(e)) from e
    return trace
