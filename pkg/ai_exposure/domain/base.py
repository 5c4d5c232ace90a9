from datetime import date, datetime
from typing import Any, Dict, Type, TypeVar

from pydantic import BaseModel, ConfigDict, ValidationError

from ai_exposure.exceptions import InputFormatError

T = TypeVar("T", bound="RecordModel")


class RecordModel(BaseModel):
    """Immutable record that round-trips through one JSON line."""

    model_config = ConfigDict(frozen=True)

    @classmethod
    def from_record(cls: Type[T], data: Dict[str, Any], where: str = "") -> T:
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            location = f"{where}: " if where else ""
            first = e.errors()[0]
            field = ".".join(str(part) for part in first["loc"]) or "record"
            raise InputFormatError(f"{location}{cls.__name__}.{field}: {first['msg']}")

    def to_json(self) -> str:
        return self.model_dump_json()


def parse_date(value: Any) -> Any:
    """Accept ISO strings (date or datetime, trailing Z allowed) for date fields."""
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, str):
        text = value.strip()
        if "T" in text or " " in text:
            return datetime.fromisoformat(text.replace("Z", "+00:00")).date()
        return date.fromisoformat(text)
    return value
