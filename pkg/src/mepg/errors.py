"""Exception types shared across the package."""


class MepgError(Exception):
    """Base class for all package errors."""


# --- geometry ---

class InvalidBox(MepgError):
    pass


class RepairImpossible(MepgError):
    pass


class RegionIndexError(MepgError, IndexError):
    pass


class InvalidDocument(MepgError):
    """A layout/trace document failed schema checks."""


# --- planner ---

class PlannerError(MepgError):
    pass


class GrammarError(PlannerError):
    """Prompt does not match the rule grammar.

    ``offset`` is the byte offset of the first unparseable token.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class BackendUnavailable(PlannerError):
    pass


class PlanEmpty(PlannerError):
    pass


class NoParsableCoordinates(PlannerError):
    pass


class TransformError(PlannerError):
    pass


# --- neural ---

class ShapeMismatch(MepgError):
    pass


class NonFiniteActivation(MepgError):
    pass


class Diverged(MepgError):
    pass


class TargetNotReached(MepgError):
    """Training finished but the held-out loss target was missed."""


class EmptyDataset(MepgError):
    pass


class LabelUnknown(MepgError):
    pass


class CheckpointError(MepgError):
    pass


# --- moe ---

class KOutOfRange(MepgError):
    pass


class DuplicateId(MepgError):
    pass


class UnknownExpert(MepgError):
    pass


class MissingCheckpoint(MepgError):
    pass


class LastGlobalExpertRemoved(MepgError):
    pass


class RegistryError(MepgError):
    pass


# --- scheduler ---

class StepOutOfRange(MepgError):
    pass


class AlphaNotNormalized(MepgError):
    pass


class MaskShapeMismatch(MepgError):
    pass


class ConfigError(MepgError):
    pass
