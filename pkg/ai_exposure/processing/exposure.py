from typing import Dict, List, Sequence

import humanize
import pandas as pd
from loguru import logger

from ai_exposure.domain.annotation import AnnotationRecord
from ai_exposure.domain.exposure import exposure_from_annotations
from ai_exposure.domain.posting import PostingInput

METADATA_COLUMNS = [
    "occupation",
    "seniority",
    "industry",
    "posted",
    "state",
    "remote",
    "internship",
    "employment_type",
]
INDEX_COLUMNS = ["n_tasks", "share_e0", "share_e1", "share_e2", "alpha", "beta", "gamma"]
EXPOSURE_COLUMNS = ["posting_id"] + METADATA_COLUMNS + INDEX_COLUMNS


def exposure_table(records: Sequence[AnnotationRecord], postings: Sequence[PostingInput]) -> pd.DataFrame:
    """One row per annotated posting: cell metadata plus shares and indices."""
    by_id: Dict[str, PostingInput] = {p.posting_id: p for p in postings}
    rows: List[dict] = []
    missing = 0
    for record in records:
        posting = by_id.get(record.posting_id)
        if posting is None:
            missing += 1
            continue
        exposure = exposure_from_annotations(record.posting_id, record.annotations())
        row = {"posting_id": record.posting_id}
        for column in METADATA_COLUMNS:
            value = getattr(posting, column)
            row[column] = value.value if hasattr(value, "value") else value
        row.update(
            n_tasks=exposure.n_tasks,
            share_e0=exposure.share_e0,
            share_e1=exposure.share_e1,
            share_e2=exposure.share_e2,
            alpha=exposure.alpha,
            beta=exposure.beta,
            gamma=exposure.gamma,
        )
        rows.append(row)
    if missing:
        logger.warning(f"{humanize.intcomma(missing)} annotation records have no matching posting")
    logger.info(f"Computed exposure for {humanize.intcomma(len(rows))} postings")
    frame = pd.DataFrame(rows, columns=EXPOSURE_COLUMNS)
    frame["posted"] = pd.to_datetime(frame["posted"])
    return frame
