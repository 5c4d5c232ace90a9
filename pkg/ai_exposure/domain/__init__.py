from ai_exposure.domain.exposure import (
    ExposureLabel,
    PostingExposure,
    SkillKind,
    SkillMatch,
    TaskAnnotation,
    compute_exposure,
    custom_index,
    normalize_weights,
)
from ai_exposure.domain.posting import CellKey, PeriodId, PeriodKind, PostingInput, Seniority

__all__ = [
    "CellKey",
    "ExposureLabel",
    "PeriodId",
    "PeriodKind",
    "PostingExposure",
    "PostingInput",
    "Seniority",
    "SkillKind",
    "SkillMatch",
    "TaskAnnotation",
    "compute_exposure",
    "custom_index",
    "normalize_weights",
]
