"""Exception types shared across the engine."""

from __future__ import annotations


class GlassmindError(Exception):
    """Base class for all engine errors."""


class ZeroMassError(GlassmindError):
    """A vector with non-positive total mass cannot be normalized."""


class NegativeEntryError(GlassmindError):
    """Probabilities must be non-negative."""


class NonFiniteInputError(GlassmindError):
    """Inputs to numeric primitives must be finite."""


class NormalizationError(GlassmindError):
    """A distribution does not sum to one within tolerance."""


class DimensionMismatchError(GlassmindError):
    """Two objects that must share a dimension do not."""


class UnknownActionError(GlassmindError):
    """Action index outside the transition model's action range."""


class EmptyPolicySetError(GlassmindError):
    """Action selection requires at least one policy."""


class UninitializedAgentError(GlassmindError):
    """Agent beliefs must be initialized (reset) before stepping."""


class SequenceError(GlassmindError):
    """Trace events must be appended in strictly increasing order."""


class StepNotFoundError(GlassmindError):
    """No trace events exist for the requested step."""


class NoPlanningAtStepError(GlassmindError):
    """The requested step contains no planning block to explain."""


class ParseError(GlassmindError):
    """Malformed serialized input.

    ``offset`` is the byte/character position where parsing failed when the
    underlying decoder provides one, else 0.
    """

    def __init__(self, reason: str, offset: int = 0):
        self.reason = reason
        self.offset = offset
        super().__init__(f"parse error at offset {offset}: {reason}")


class ValidationError(GlassmindError):
    """A model spec violates an invariant at a nameable location.

    ``level`` is 1-based to match the diagnostic text; ``field`` names the
    offending entry (e.g. "A", "couplings", "tick_ratio"); ``index`` points
    at the column/entry when applicable.
    """

    def __init__(self, message: str, level: int | None = None,
                 field: str | None = None, index: int | None = None):
        self.level = level
        self.field = field
        self.index = index
        loc = []
        if level is not None:
            loc.append(f"level {level}")
        if field is not None:
            loc.append(field)
        if index is not None:
            loc.append(f"index {index}")
        prefix = ", ".join(loc)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class EpisodeError(GlassmindError):
    """Wraps an error raised while stepping an episode, tagged with the step."""

    def __init__(self, step: int, cause: Exception):
        self.step = step
        self.cause = cause
        super().__init__(f"step {step}: {cause}")
