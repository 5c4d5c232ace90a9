import re
from datetime import date
from enum import Enum
from typing import Any, List, Optional, Tuple

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ai_exposure.domain.base import RecordModel, parse_date
from ai_exposure.exceptions import InvalidInputError


class Seniority(str, Enum):
    JUNIOR = "Junior"
    INTERMEDIATE = "Intermediate"
    SENIOR = "Senior"


SENIORITY_ORDER = [s.value for s in Seniority]


def normalize_seniority(value: Any) -> str:
    """Unlabeled postings are Intermediate."""
    if isinstance(value, Seniority):
        return value.value
    if value is None or (isinstance(value, float) and pd.isna(value)):
        return Seniority.INTERMEDIATE.value
    text = str(value).strip()
    if not text:
        return Seniority.INTERMEDIATE.value
    for level in Seniority:
        if text.lower() == level.value.lower():
            return level.value
    raise InvalidInputError(f"Unknown seniority: {value!r}")


def naics2(value: Any) -> str:
    """Truncate an industry code to its 2-digit NAICS sector."""
    text = re.sub(r"\D", "", str(value))
    if len(text) < 2:
        raise InvalidInputError(f"Industry code needs at least two digits: {value!r}")
    return text[:2]


class CellKey(BaseModel):
    model_config = ConfigDict(frozen=True)

    occupation: str = Field(min_length=1)
    seniority: Seniority = Seniority.INTERMEDIATE
    industry: str = Field(min_length=1)

    @field_validator("seniority", mode="before")
    @classmethod
    def _default_seniority(cls, value: Any) -> str:
        return normalize_seniority(value)

    @field_validator("industry", mode="before")
    @classmethod
    def _sector(cls, value: Any) -> str:
        return naics2(value)

    def as_tuple(self) -> Tuple[str, str, str]:
        return (self.occupation, self.seniority.value, self.industry)


class PeriodKind(str, Enum):
    QUARTER = "Quarter"
    HALF_YEAR = "HalfYear"
    YEAR = "Year"


_PERIODS_PER_YEAR = {PeriodKind.QUARTER: 4, PeriodKind.HALF_YEAR: 2, PeriodKind.YEAR: 1}
_LABEL = re.compile(r"^(\d{4})(?:([QH])([1-4]))?$")


class PeriodId(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: PeriodKind
    year: int
    index: int = 1

    @model_validator(mode="after")
    def _index_in_range(self) -> "PeriodId":
        if not 1 <= self.index <= _PERIODS_PER_YEAR[self.kind]:
            raise ValueError(f"{self.kind.value} index must be in 1..{_PERIODS_PER_YEAR[self.kind]}")
        return self

    @classmethod
    def parse(cls, label: "str | PeriodId") -> "PeriodId":
        if isinstance(label, PeriodId):
            return label
        match = _LABEL.match(str(label).strip().upper())
        if not match:
            raise InvalidInputError(f"Unrecognized period label: {label!r}")
        year, tag, index = match.groups()
        if tag is None:
            return cls(kind=PeriodKind.YEAR, year=int(year), index=1)
        kind = PeriodKind.QUARTER if tag == "Q" else PeriodKind.HALF_YEAR
        try:
            return cls(kind=kind, year=int(year), index=int(index))
        except ValueError as e:
            raise InvalidInputError(f"Invalid period label {label!r}: {e}")

    @property
    def label(self) -> str:
        if self.kind == PeriodKind.YEAR:
            return f"{self.year}"
        tag = "Q" if self.kind == PeriodKind.QUARTER else "H"
        return f"{self.year}{tag}{self.index}"

    @property
    def months(self) -> int:
        return 12 // _PERIODS_PER_YEAR[self.kind]

    @property
    def start(self) -> date:
        return date(self.year, (self.index - 1) * self.months + 1, 1)

    @property
    def end(self) -> date:
        """Exclusive end date."""
        month = self.index * self.months + 1
        if month > 12:
            return date(self.year + 1, 1, 1)
        return date(self.year, month, 1)

    def contains(self, day: date) -> bool:
        return self.start <= day < self.end

    def sort_key(self) -> Tuple[date, date]:
        return (self.start, self.end)

    def __lt__(self, other: "PeriodId") -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        return self.label


def period_of(day: date, kind: PeriodKind) -> PeriodId:
    index = (day.month - 1) // (12 // _PERIODS_PER_YEAR[kind]) + 1
    return PeriodId(kind=kind, year=day.year, index=index)


def period_labels(dates: pd.Series, kind: PeriodKind) -> pd.Series:
    """Vectorized period_of over a datetime series, returning labels."""
    dates = pd.to_datetime(dates)
    year = dates.dt.year.astype(str)
    if kind == PeriodKind.YEAR:
        return year
    if kind == PeriodKind.QUARTER:
        return year + "Q" + dates.dt.quarter.astype(str)
    return year + "H" + ((dates.dt.month - 1) // 6 + 1).astype(str)


def quarter_range(first: "str | PeriodId", count: int) -> List[PeriodId]:
    start = PeriodId.parse(first)
    if start.kind != PeriodKind.QUARTER:
        raise InvalidInputError(f"{start.label} is not a quarter")
    out = []
    year, index = start.year, start.index
    for _ in range(count):
        out.append(PeriodId(kind=PeriodKind.QUARTER, year=year, index=index))
        index += 1
        if index > 4:
            year, index = year + 1, 1
    return out


class PostingInput(RecordModel):
    """One job posting as read from the postings file.

    The five text fields feed the annotation prompts; the remaining fields
    place the posting in its cell, period and Oaxaca-Blinder covariates.
    """

    posting_id: str = Field(min_length=1)
    title: str = ""
    body: str = ""
    specialized_skills: List[str] = Field(default_factory=list)
    common_skills: List[str] = Field(default_factory=list)

    occupation: Optional[str] = None
    seniority: Optional[Seniority] = None
    industry: Optional[str] = None
    posted: Optional[date] = None
    state: Optional[str] = None
    remote: Optional[str] = None
    internship: Optional[str] = None
    employment_type: Optional[str] = None

    @field_validator("seniority", mode="before")
    @classmethod
    def _default_seniority(cls, value: Any) -> str:
        return normalize_seniority(value)

    @field_validator("industry", mode="before")
    @classmethod
    def _sector(cls, value: Any) -> Optional[str]:
        return None if value in (None, "") else naics2(value)

    @field_validator("posted", mode="before")
    @classmethod
    def _posted(cls, value: Any) -> Any:
        return parse_date(value)

    def cell(self) -> CellKey:
        if not self.occupation or not self.industry:
            raise InvalidInputError(f"Posting {self.posting_id} lacks occupation or industry")
        return CellKey(occupation=self.occupation, seniority=self.seniority, industry=self.industry)
