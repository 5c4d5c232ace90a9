from typing import List, Optional


class AiExposureError(Exception):
    """Root of every error the pipeline raises on purpose."""
    pass


class ConfigurationError(AiExposureError):
    """The run configuration is missing, unreadable or out of range."""
    pass


class InputFormatError(AiExposureError):
    """An input file violates its record schema."""
    pass


class InvalidInputError(AiExposureError):
    """A value is well-formed but not usable, e.g. a bad seniority or period."""
    pass


class EmptyTaskList(InvalidInputError):
    """A posting has no usable tasks."""
    pass


class OutOfRangeWeight(InvalidInputError):
    """An E2 weight lies outside [0, 1]."""
    pass


class EmptyPeriod(InvalidInputError):
    """A requested period has zero postings."""
    pass


class InfeasibleSpec(InvalidInputError):
    """A synthetic scenario cannot be realized."""
    pass


class ResponseValidationError(AiExposureError):
    """Base for structured-output rejections.

    Validators collect every violated rule; the raised instance is the first
    violation and ``violations`` holds all of them.
    """

    stage: int = 0

    def __init__(self, message: str, violations: Optional[List["ResponseValidationError"]] = None):
        super().__init__(message)
        self.message = message
        self.violations: List[ResponseValidationError] = violations or [self]


class ParseFailure(ResponseValidationError):
    """The response is not a single well-formed JSON object of the expected shape."""
    pass


class PostingIdMismatch(ResponseValidationError):
    """The response echoes a different posting_id."""
    pass


class TaskCountOutOfRange(ResponseValidationError):
    """Fewer than 3 or more than 10 tasks."""
    pass


class DanglingGroupReference(ResponseValidationError):
    """A task points at a skill group that was never declared."""
    pass


class MixedSkillGroup(ResponseValidationError):
    """A group mixes specialized and common skills."""
    pass


class OversizedSkillGroup(ResponseValidationError):
    """A skill group holds more than MAX_GROUP_SKILLS skills."""
    pass


class NoSkillsGroupViolation(ResponseValidationError):
    """The no-skills group carries skills, or a skill-less posting lacks it."""
    pass


class MissingTaskId(ResponseValidationError):
    """A stage 1 task has no label in stage 2."""
    pass


class DuplicateTaskId(ResponseValidationError):
    """Two stage 1 tasks, or two stage 2 labels, share a task_id."""
    pass


class UnknownTaskId(ResponseValidationError):
    """Stage 2 labels a task stage 1 never produced."""
    pass


class UnknownLabel(ResponseValidationError):
    """A label outside E0, E1, E2."""
    pass


class BackendError(AiExposureError):
    """The generation service answered, but not usefully (4xx, bad envelope)."""
    pass


class BackendUnavailable(BackendError):
    """The generation service cannot be reached; retried with backoff."""
    pass


class DecompositionError(AiExposureError):
    """Base for decomposition failures."""
    pass


class EmptySupport(DecompositionError):
    """No cell is present in both the baseline and the comparison period."""
    pass


class MissingBaseline(DecompositionError):
    """The baseline period is not in the panel."""
    pass


class EmptyBalancedSet(DecompositionError):
    """No cell is observed in every requested period."""
    pass


class SectorMissingInBaseline(DecompositionError):
    """A sector shows up after the baseline and has no fixed weight."""
    pass


class AllZeroComponents(DecompositionError):
    """Relative contributions are undefined when every component is zero."""
    pass


class UnknownCategory(DecompositionError):
    """A covariate value or reference is not a declared category."""
    pass


class EmptyGroup(DecompositionError):
    """A PreGpt/PostGpt group has no cells to fit."""
    pass


class DegenerateSystem(DecompositionError):
    """The weighted least-squares system has nothing to solve."""
    pass
