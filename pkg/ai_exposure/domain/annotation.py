from typing import List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

from ai_exposure.domain.base import RecordModel
from ai_exposure.domain.exposure import ExposureLabel, SkillKind, TaskAnnotation


class SkillGroup(BaseModel):
    model_config = ConfigDict(frozen=True)

    group_id: str
    skills: List[str] = Field(default_factory=list)
    kind: SkillKind


class ExtractedTask(BaseModel):
    model_config = ConfigDict(frozen=True)

    task_id: str
    text: str
    skill_group_id: str


class Stage1Output(BaseModel):
    model_config = ConfigDict(frozen=True)

    posting_id: str
    posting_title: str = ""
    skill_groups: List[SkillGroup]
    tasks: List[ExtractedTask]

    def group(self, group_id: str) -> SkillGroup:
        return next(g for g in self.skill_groups if g.group_id == group_id)


class TaskExposure(BaseModel):
    model_config = ConfigDict(frozen=True)

    task_id: str
    label: ExposureLabel


class Stage2Output(BaseModel):
    model_config = ConfigDict(frozen=True)

    posting_id: str
    task_exposures: List[TaskExposure]
    annotations: List[TaskAnnotation] = Field(default_factory=list)


class GenerationRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    prompt_template_id: str
    prompt: str
    model: str
    temperature: float = 0.0


class GenerationResponse(BaseModel):
    model_config = ConfigDict(frozen=True)

    raw_text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_s: float = 0.0


class AnnotatedTask(BaseModel):
    model_config = ConfigDict(frozen=True)

    task_id: str
    text: str
    skill_group_id: str
    kind: SkillKind
    raw_weight: int
    label: ExposureLabel

    @classmethod
    def from_annotation(cls, task: TaskAnnotation) -> "AnnotatedTask":
        return cls(
            task_id=task.task_id,
            text=task.text,
            skill_group_id=task.skill.group_id,
            kind=task.skill.kind,
            raw_weight=task.raw_weight,
            label=task.label,
        )

    def to_annotation(self) -> TaskAnnotation:
        return TaskAnnotation.build(self.task_id, self.text, self.skill_group_id, self.label)


class AnnotationRecord(RecordModel):
    """One line of the annotations file."""

    posting_id: str
    tasks: List[AnnotatedTask]

    @classmethod
    def from_annotations(cls, posting_id: str, tasks: List[TaskAnnotation]) -> "AnnotationRecord":
        return cls(posting_id=posting_id, tasks=[AnnotatedTask.from_annotation(t) for t in tasks])

    def annotations(self) -> List[TaskAnnotation]:
        return [t.to_annotation() for t in self.tasks]


class FailureRecord(RecordModel):
    """One line of the failure sidecar."""

    posting_id: str
    stage: int
    error: str
    message: str
    attempts: int


class AnnotationOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    posting_id: str
    result: Union[List[TaskAnnotation], FailureRecord]
    attempts: int = 1

    @property
    def ok(self) -> bool:
        return not isinstance(self.result, FailureRecord)

    @property
    def failure(self) -> Optional[FailureRecord]:
        return self.result if isinstance(self.result, FailureRecord) else None
