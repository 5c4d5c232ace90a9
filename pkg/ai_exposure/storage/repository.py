import json
from pathlib import Path
from typing import Iterable, Iterator, List, Type, TypeVar

import pandas as pd
from loguru import logger

from ai_exposure.domain.base import RecordModel
from ai_exposure.exceptions import InputFormatError

T = TypeVar("T", bound=RecordModel)


def iter_records(path: Path, model: Type[T]) -> Iterator[T]:
    """Yield one validated record per non-blank line of a JSONL file."""
    with open(path, "r", encoding="utf-8") as file:
        for lineno, line in enumerate(file, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise InputFormatError(f"{where}: not valid JSON: {e.msg}")
            if not isinstance(data, dict):
                raise InputFormatError(f"{where}: expected a JSON object")
            yield model.from_record(data, where=where)


def read_records(path: Path, model: Type[T]) -> List[T]:
    records = list(iter_records(Path(path), model))
    logger.debug(f"Read {len(records)} {model.__name__} records from {path}")
    return records


def write_records(path: Path, records: Iterable[RecordModel]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as file:
        for record in records:
            file.write(record.to_json() + "\n")
            count += 1
    logger.debug(f"Wrote {count} records to {path}")
    return count


def read_frame(path: Path, required: Iterable[str] = ()) -> pd.DataFrame:
    """Read a CSV or JSONL table, checking that required columns exist."""
    path = Path(path)
    try:
        if path.suffix in (".jsonl", ".json"):
            frame = pd.read_json(path, lines=True, dtype=False)
        else:
            frame = pd.read_csv(path, dtype={"occupation": str, "industry": str, "posting_id": str})
    except ValueError as e:
        raise InputFormatError(f"{path}: {str(e)}")
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise InputFormatError(f"{path}: missing columns {', '.join(missing)}")
    return frame


def write_frame(path: Path, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".jsonl":
        frame.to_json(path, orient="records", lines=True, date_format="iso")
    else:
        frame.to_csv(path, index=False)
    return path
