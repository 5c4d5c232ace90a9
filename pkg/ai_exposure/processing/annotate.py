"""Two-stage annotation: task extraction, then exposure classification.

Validators never repair a response. They collect every rule the response
breaks, raise the first violation and attach the full list to it as
``violations``.
"""

import json
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Type

import humanize
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field
from tenacity import RetryCallState, Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from ai_exposure.ai.backends import MAX_GROUP_SKILLS, MAX_TASKS, MIN_TASKS, GenerationBackend
from ai_exposure.ai.prompts import (
    STAGE1_TEMPLATE_ID,
    STAGE2_TEMPLATE_ID,
    render_stage1_prompt,
    render_stage2_prompt,
)
from ai_exposure.config import RunConfig
from ai_exposure.domain.annotation import (
    AnnotationOutcome,
    AnnotationRecord,
    ExtractedTask,
    FailureRecord,
    GenerationRequest,
    SkillGroup,
    Stage1Output,
    Stage2Output,
    TaskExposure,
)
from ai_exposure.domain.exposure import NO_SKILLS_GROUP, ExposureLabel, SkillKind, TaskAnnotation, kind_of_group
from ai_exposure.domain.posting import PostingInput
from ai_exposure.exceptions import (
    BackendError,
    BackendUnavailable,
    DanglingGroupReference,
    DuplicateTaskId,
    InvalidInputError,
    MissingTaskId,
    MixedSkillGroup,
    NoSkillsGroupViolation,
    OversizedSkillGroup,
    ParseFailure,
    PostingIdMismatch,
    ResponseValidationError,
    TaskCountOutOfRange,
    UnknownLabel,
    UnknownTaskId,
)

MIN_TASK_WORDS = 8
MAX_TASK_WORDS = 50

_FENCE = re.compile(r"^```(?:json)?\s*(.*?)\s*```$", re.DOTALL)


class _Violations:
    """Accumulates rule violations for one response."""

    def __init__(self, stage: int):
        self.stage = stage
        self.items: List[ResponseValidationError] = []

    def add(self, cls: Type[ResponseValidationError], message: str) -> None:
        error = cls(message)
        error.stage = self.stage
        self.items.append(error)

    def raise_if_any(self) -> None:
        if not self.items:
            return
        first = self.items[0]
        first.violations = list(self.items)
        raise first


def _parse_object(raw: str, stage: int) -> Dict[str, Any]:
    text = (raw or "").strip()
    fenced = _FENCE.match(text)
    if fenced:
        text = fenced.group(1)
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        error = ParseFailure(f"Stage {stage} response is not valid JSON: {e.msg} at char {e.pos}")
        error.stage = stage
        raise error
    if not isinstance(document, dict):
        error = ParseFailure(f"Stage {stage} response is not a JSON object")
        error.stage = stage
        raise error
    return document


def _is_str(value: Any) -> bool:
    return isinstance(value, str) and bool(value.strip())


def validate_stage1(raw: str, posting: PostingInput) -> Stage1Output:
    document = _parse_object(raw, 1)
    found = _Violations(1)

    if str(document.get("posting_id", "")) != posting.posting_id:
        found.add(
            PostingIdMismatch,
            f"posting_id {document.get('posting_id')!r} does not match input {posting.posting_id!r}",
        )

    raw_groups = document.get("skills_groups", document.get("skill_groups"))
    raw_tasks = document.get("tasks")
    if not isinstance(raw_groups, list) or not isinstance(raw_tasks, list):
        found.add(ParseFailure, "response must hold 'skills_groups' and 'tasks' lists")
        found.raise_if_any()

    specialized = set(posting.specialized_skills)
    common = set(posting.common_skills)
    groups: List[SkillGroup] = []
    for i, item in enumerate(raw_groups):
        if not isinstance(item, dict) or not _is_str(item.get("group_id")):
            found.add(ParseFailure, f"skills_groups[{i}] lacks a group_id")
            continue
        group_id = item["group_id"].strip()
        skills = item.get("group_skills", [])
        if not isinstance(skills, list) or not all(isinstance(s, str) for s in skills):
            found.add(ParseFailure, f"group {group_id}: group_skills must be a list of strings")
            continue
        try:
            kind = kind_of_group(group_id)
        except InvalidInputError:
            found.add(ParseFailure, f"group id {group_id!r} is not S*, C* or NS0")
            continue
        if any(g.group_id == group_id for g in groups):
            found.add(ParseFailure, f"group id {group_id} appears twice")
            continue
        if len(skills) > MAX_GROUP_SKILLS:
            found.add(OversizedSkillGroup, f"group {group_id} holds {len(skills)} skills (max {MAX_GROUP_SKILLS})")
        if kind == SkillKind.SPECIALIZED and any(s in common and s not in specialized for s in skills):
            found.add(MixedSkillGroup, f"specialized group {group_id} contains common skills")
        elif kind == SkillKind.COMMON and any(s in specialized and s not in common for s in skills):
            found.add(MixedSkillGroup, f"common group {group_id} contains specialized skills")
        elif kind == SkillKind.NO_SKILLS and skills:
            found.add(NoSkillsGroupViolation, f"group {NO_SKILLS_GROUP} must have no skills")
        groups.append(SkillGroup(group_id=group_id, skills=skills, kind=kind))

    if not specialized and not common:
        if len(groups) != 1 or groups[0].group_id != NO_SKILLS_GROUP:
            found.add(NoSkillsGroupViolation, f"posting without skills needs exactly one {NO_SKILLS_GROUP} group")

    if not MIN_TASKS <= len(raw_tasks) <= MAX_TASKS:
        found.add(TaskCountOutOfRange, f"{len(raw_tasks)} tasks, expected {MIN_TASKS}-{MAX_TASKS}")

    group_ids = {g.group_id for g in groups}
    tasks: List[ExtractedTask] = []
    seen = set()
    for i, item in enumerate(raw_tasks):
        if not isinstance(item, dict) or not all(_is_str(item.get(k)) for k in ("task_id", "task", "skill_group_id")):
            found.add(ParseFailure, f"tasks[{i}] needs task_id, task and skill_group_id strings")
            continue
        task = ExtractedTask(
            task_id=item["task_id"].strip(),
            text=item["task"].strip(),
            skill_group_id=item["skill_group_id"].strip(),
        )
        if task.task_id in seen:
            found.add(DuplicateTaskId, f"task id {task.task_id} appears twice")
            continue
        seen.add(task.task_id)
        if task.skill_group_id not in group_ids:
            found.add(DanglingGroupReference, f"task {task.task_id} references unknown group {task.skill_group_id}")
        words = len(task.text.split())
        if not MIN_TASK_WORDS <= words <= MAX_TASK_WORDS:
            logger.warning(f"Posting {posting.posting_id} task {task.task_id} has {words} words")
        tasks.append(task)

    found.raise_if_any()
    return Stage1Output(
        posting_id=posting.posting_id,
        posting_title=str(document.get("posting_title", posting.title)),
        skill_groups=groups,
        tasks=tasks,
    )


def validate_stage2(raw: str, stage1: Stage1Output) -> Stage2Output:
    document = _parse_object(raw, 2)
    found = _Violations(2)

    if str(document.get("posting_id", "")) != stage1.posting_id:
        found.add(
            PostingIdMismatch,
            f"posting_id {document.get('posting_id')!r} does not match {stage1.posting_id!r}",
        )
    raw_exposures = document.get("task_exposures")
    if not isinstance(raw_exposures, list):
        found.add(ParseFailure, "response must hold a 'task_exposures' list")
        found.raise_if_any()

    expected = [t.task_id for t in stage1.tasks]
    exposures: List[TaskExposure] = []
    seen = set()
    for i, item in enumerate(raw_exposures):
        if not isinstance(item, dict) or not _is_str(item.get("task_id")):
            found.add(ParseFailure, f"task_exposures[{i}] lacks a task_id")
            continue
        task_id = item["task_id"].strip()
        if task_id in seen:
            found.add(DuplicateTaskId, f"task id {task_id} labeled twice")
            continue
        seen.add(task_id)
        if task_id not in expected:
            found.add(UnknownTaskId, f"task id {task_id} is not in the extracted tasks")
            continue
        label = item.get("exposure_label")
        try:
            exposures.append(TaskExposure(task_id=task_id, label=ExposureLabel(label)))
        except ValueError:
            found.add(UnknownLabel, f"task {task_id}: label {label!r} is not E0, E1 or E2")

    for task_id in expected:
        if task_id not in seen:
            found.add(MissingTaskId, f"task id {task_id} has no label")

    found.raise_if_any()
    order = {task_id: i for i, task_id in enumerate(expected)}
    exposures.sort(key=lambda e: order[e.task_id])
    output = Stage2Output(posting_id=stage1.posting_id, task_exposures=exposures)
    return output.model_copy(update={"annotations": to_annotations(stage1, output)})


def to_annotations(stage1: Stage1Output, stage2: Stage2Output) -> List[TaskAnnotation]:
    """Join stage-2 labels onto the stage-1 tasks, keeping stage-1 order."""
    labels = {e.task_id: e.label for e in stage2.task_exposures}
    return [TaskAnnotation.build(t.task_id, t.text, t.skill_group_id, labels[t.task_id]) for t in stage1.tasks]


class AnnotationPolicy(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: str = "mock-annotator"
    temperature: float = 0.0
    max_attempts: int = Field(default=3, ge=1)
    max_in_flight: int = Field(default=8, ge=1)
    retry_backoff: float = Field(default=0.0, ge=0.0)

    @classmethod
    def from_config(cls, config: RunConfig) -> "AnnotationPolicy":
        return cls(
            model=config.model,
            temperature=config.temperature,
            max_attempts=config.max_attempts,
            max_in_flight=config.max_in_flight,
            retry_backoff=config.retry_backoff,
        )


class FailureLog:
    """Failure sidecar shared by the batch workers; appends are serialized."""

    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path else None
        self.records: List[FailureRecord] = []
        self._lock = threading.Lock()

    def append(self, record: FailureRecord) -> None:
        with self._lock:
            self.records.append(record)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as file:
                    file.write(record.to_json() + "\n")


class _StageFailed(Exception):
    def __init__(self, stage: int, error: Exception, attempts: int):
        self.stage = stage
        self.error = error
        self.attempts = attempts


def _transient_backoff(backoff: float) -> Callable[[RetryCallState], float]:
    """Exponential wait after an unreachable backend; rejected responses are retried at once."""
    exponential = wait_exponential(multiplier=backoff, min=0)

    def wait(state: RetryCallState) -> float:
        if state.outcome is not None and isinstance(state.outcome.exception(), BackendUnavailable):
            return exponential(state)
        return 0.0

    return wait


def _run_stage(
    stage: int,
    request: GenerationRequest,
    backend: GenerationBackend,
    policy: AnnotationPolicy,
    validate: Callable[[str], Any],
) -> Tuple[Any, int]:
    # 4xx answers (plain BackendError) are not retried
    retrying = Retrying(
        retry=retry_if_exception_type((BackendUnavailable, ResponseValidationError)),
        stop=stop_after_attempt(policy.max_attempts),
        wait=_transient_backoff(policy.retry_backoff),
        reraise=True,
    )
    result: Any = None
    used = 0
    try:
        for attempt in retrying:
            with attempt:
                used = attempt.retry_state.attempt_number
                result = validate(backend.generate(request).raw_text)
    except (BackendError, ResponseValidationError) as e:
        raise _StageFailed(stage, e, used)
    return result, used


def annotate_posting(posting: PostingInput, backend: GenerationBackend, policy: AnnotationPolicy) -> AnnotationOutcome:
    attempts = 0
    try:
        stage1, used = _run_stage(
            1,
            GenerationRequest(
                prompt_template_id=STAGE1_TEMPLATE_ID,
                prompt=render_stage1_prompt(posting),
                model=policy.model,
                temperature=policy.temperature,
            ),
            backend,
            policy,
            lambda raw: validate_stage1(raw, posting),
        )
        attempts = used
        stage2, used = _run_stage(
            2,
            GenerationRequest(
                prompt_template_id=STAGE2_TEMPLATE_ID,
                prompt=render_stage2_prompt(stage1, posting.title),
                model=policy.model,
                temperature=policy.temperature,
            ),
            backend,
            policy,
            lambda raw: validate_stage2(raw, stage1),
        )
        attempts = max(attempts, used)
        return AnnotationOutcome(posting_id=posting.posting_id, result=stage2.annotations, attempts=attempts)
    except _StageFailed as failed:
        attempts = max(attempts, failed.attempts)
        error = failed.error
        message = getattr(error, "message", None) or str(error)
        violations = getattr(error, "violations", None)
        if violations and len(violations) > 1:
            message += f" (+{len(violations) - 1} more)"
        logger.warning(f"Posting {posting.posting_id} failed at stage {failed.stage}: {type(error).__name__}: {message}")
        record = FailureRecord(
            posting_id=posting.posting_id,
            stage=failed.stage,
            error=type(error).__name__,
            message=message,
            attempts=attempts,
        )
        return AnnotationOutcome(posting_id=posting.posting_id, result=record, attempts=attempts)


def annotate_batch(
    inputs: Sequence[PostingInput],
    backend: GenerationBackend,
    policy: AnnotationPolicy,
    failure_log: Optional[FailureLog] = None,
) -> List[AnnotationOutcome]:
    """Annotate every posting; one outcome per input, in input order."""
    ids = [p.posting_id for p in inputs]
    if len(set(ids)) != len(ids):
        duplicate = next(i for i in ids if ids.count(i) > 1)
        raise InvalidInputError(f"posting_id {duplicate} appears more than once in the batch")

    log = failure_log or FailureLog()
    with ThreadPoolExecutor(max_workers=policy.max_in_flight) as executor:
        outcomes = list(executor.map(lambda p: annotate_posting(p, backend, policy), inputs))

    failures = [o.failure for o in outcomes if not o.ok]
    for record in failures:
        log.append(record)

    logger.info(
        f"Annotated {humanize.intcomma(len(outcomes) - len(failures))} of "
        f"{humanize.intcomma(len(outcomes))} postings ({humanize.intcomma(len(failures))} failed)"
    )
    if outcomes and len(failures) == len(outcomes) and all(f.error == BackendUnavailable.__name__ for f in failures):
        raise BackendUnavailable(f"Backend unavailable for all {len(outcomes)} postings")
    return outcomes


def merge_outcomes(
    order: Sequence[str],
    previous: Sequence[AnnotationRecord],
    outcomes: Sequence[AnnotationOutcome],
) -> List[AnnotationRecord]:
    """Fold retried outcomes into earlier annotation records, in input order."""
    by_id: Dict[str, AnnotationRecord] = {r.posting_id: r for r in previous}
    for outcome in outcomes:
        if outcome.ok:
            by_id[outcome.posting_id] = AnnotationRecord.from_annotations(outcome.posting_id, outcome.result)
    return [by_id[posting_id] for posting_id in order if posting_id in by_id]
