"""Task-level labels and posting-level exposure indices.

A posting's tasks carry a raw importance weight (2 for tasks matched to a
specialized-skill group, 1 otherwise). Normalized weights give the posting's
weighted share of task content in each exposure tier, and the three indices
summarize those shares:

    alpha = share_E1
    beta  = share_E1 + 0.5 * share_E2
    gamma = share_E1 + share_E2
"""

import math
from enum import Enum
from typing import List, Literal, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ai_exposure.exceptions import EmptyTaskList, InvalidInputError, OutOfRangeWeight

SHARE_TOLERANCE = 1e-12

IndexChoice = Union[Literal["alpha", "beta", "gamma"], float]


class ExposureLabel(str, Enum):
    E0 = "E0"
    E1 = "E1"
    E2 = "E2"


class SkillKind(str, Enum):
    SPECIALIZED = "Specialized"
    COMMON = "Common"
    NO_SKILLS = "NoSkills"


NO_SKILLS_GROUP = "NS0"


def kind_of_group(group_id: str) -> SkillKind:
    """Skill-group prefix determines its kind: S* specialized, C* common, NS0 none."""
    if group_id == NO_SKILLS_GROUP:
        return SkillKind.NO_SKILLS
    if group_id.startswith("S") and len(group_id) > 1:
        return SkillKind.SPECIALIZED
    if group_id.startswith("C") and len(group_id) > 1:
        return SkillKind.COMMON
    raise InvalidInputError(f"Unrecognized skill group id: {group_id!r}")


class SkillMatch(BaseModel):
    model_config = ConfigDict(frozen=True)

    group_id: str
    kind: SkillKind

    @classmethod
    def from_group_id(cls, group_id: str) -> "SkillMatch":
        return cls(group_id=group_id, kind=kind_of_group(group_id))

    @model_validator(mode="after")
    def _prefix_matches_kind(self) -> "SkillMatch":
        if kind_of_group(self.group_id) != self.kind:
            raise ValueError(f"group {self.group_id} cannot be {self.kind.value}")
        return self

    @property
    def raw_weight(self) -> int:
        # NS0 tasks are weighted like common-skill tasks
        return 2 if self.kind == SkillKind.SPECIALIZED else 1


class TaskAnnotation(BaseModel):
    model_config = ConfigDict(frozen=True)

    task_id: str
    text: str
    skill: SkillMatch
    raw_weight: int = Field(ge=1, le=2)
    label: ExposureLabel

    @classmethod
    def build(cls, task_id: str, text: str, group_id: str, label: Union[str, ExposureLabel]) -> "TaskAnnotation":
        skill = SkillMatch.from_group_id(group_id)
        return cls(
            task_id=task_id,
            text=text,
            skill=skill,
            raw_weight=skill.raw_weight,
            label=ExposureLabel(label),
        )

    @model_validator(mode="after")
    def _weight_matches_skill(self) -> "TaskAnnotation":
        if self.raw_weight != self.skill.raw_weight:
            raise ValueError(
                f"task {self.task_id}: raw_weight {self.raw_weight} does not match {self.skill.kind.value} skill"
            )
        return self


class PostingExposure(BaseModel):
    model_config = ConfigDict(frozen=True)

    posting_id: str = ""
    shares: Tuple[float, float, float]
    alpha: float = Field(ge=0.0, le=1.0)
    beta: float = Field(ge=0.0, le=1.0)
    gamma: float = Field(ge=0.0, le=1.0)
    n_tasks: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_indices(self) -> "PostingExposure":
        e0, e1, e2 = self.shares
        if any(s < -SHARE_TOLERANCE or s > 1 + SHARE_TOLERANCE for s in self.shares):
            raise ValueError(f"shares out of range: {self.shares}")
        if abs(e0 + e1 + e2 - 1.0) > SHARE_TOLERANCE:
            raise ValueError(f"shares do not sum to one: {self.shares}")
        if abs(self.alpha - e1) > SHARE_TOLERANCE or abs(self.gamma - (e1 + e2)) > SHARE_TOLERANCE:
            raise ValueError("alpha/gamma inconsistent with shares")
        if abs(self.beta - (self.alpha + self.gamma) / 2) > SHARE_TOLERANCE:
            raise ValueError("beta is not the midpoint of alpha and gamma")
        return self

    @property
    def share_e0(self) -> float:
        return self.shares[0]

    @property
    def share_e1(self) -> float:
        return self.shares[1]

    @property
    def share_e2(self) -> float:
        return self.shares[2]


def normalize_weights(tasks: Sequence[TaskAnnotation]) -> List[float]:
    """Normalize raw task weights within a posting so they sum to one."""
    if not tasks:
        raise EmptyTaskList("Posting has no usable tasks")
    total = math.fsum(task.raw_weight for task in tasks)
    return [task.raw_weight / total for task in tasks]


def compute_exposure(tasks: Sequence[TaskAnnotation], posting_id: str = "") -> PostingExposure:
    weights = normalize_weights(tasks)
    shares = tuple(
        min(1.0, math.fsum(w for w, task in zip(weights, tasks) if task.label == label))
        for label in (ExposureLabel.E0, ExposureLabel.E1, ExposureLabel.E2)
    )
    alpha = shares[1]
    gamma = min(1.0, shares[1] + shares[2])
    return PostingExposure(
        posting_id=posting_id,
        shares=shares,
        alpha=alpha,
        beta=(alpha + gamma) / 2,
        gamma=gamma,
        n_tasks=len(tasks),
    )


def exposure_from_annotations(posting_id: str, tasks: Sequence[TaskAnnotation]) -> PostingExposure:
    return compute_exposure(tasks, posting_id=posting_id)


def custom_index(exposure: PostingExposure, e2_weight: float) -> float:
    """share_E1 + e2_weight * share_E2; alpha at 0, beta at 0.5, gamma at 1."""
    if not 0.0 <= e2_weight <= 1.0:
        raise OutOfRangeWeight(f"E2 weight must lie in [0, 1], got {e2_weight}")
    return exposure.share_e1 + e2_weight * exposure.share_e2


def index_weight(choice: IndexChoice) -> float:
    """The E2 weight behind an index choice."""
    if isinstance(choice, str):
        try:
            return {"alpha": 0.0, "beta": 0.5, "gamma": 1.0}[choice]
        except KeyError:
            raise InvalidInputError(f"Unknown exposure index: {choice!r}")
    if not 0.0 <= float(choice) <= 1.0:
        raise OutOfRangeWeight(f"E2 weight must lie in [0, 1], got {choice}")
    return float(choice)


def index_value(exposure: PostingExposure, choice: IndexChoice) -> float:
    if isinstance(choice, str):
        index_weight(choice)
        return float(getattr(exposure, choice))
    return custom_index(exposure, float(choice))
