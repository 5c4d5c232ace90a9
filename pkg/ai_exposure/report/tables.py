from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import pandas as pd
from loguru import logger

from ai_exposure.analysis.kitagawa import (
    CounterfactualPath,
    DecompResult,
    RelativeContributions,
    SignPatternBreakdown,
)
from ai_exposure.analysis.oaxaca import POST_GPT, PRE_GPT, ObResult, sorted_blocks

DECIMALS = "%.4f"


def raw_path(path: Path) -> Path:
    """Full-precision companion of a rounded table: name.csv -> name.raw.csv."""
    path = Path(path)
    return path.with_name(f"{path.stem}.raw{path.suffix}")


def write_table(frame: pd.DataFrame, path: Path) -> Path:
    """Write a 4-decimal table and its full-precision companion."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=DECIMALS, lineterminator="\n")
    frame.to_csv(raw_path(path), index=False, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def decomposition_frame(results: Sequence[DecompResult]) -> pd.DataFrame:
    columns = ["period", "total", "composition", "within", "interaction", "m_cur", "m_base", "gap", "residual"]
    return pd.DataFrame([r.row() for r in results], columns=columns)


def sign_pattern_frame(breakdowns: Sequence[SignPatternBreakdown]) -> pd.DataFrame:
    return pd.DataFrame([b.model_dump() for b in breakdowns])


def counterfactual_frame(paths: Sequence[CounterfactualPath]) -> pd.DataFrame:
    return pd.DataFrame(
        [p.model_dump() for p in paths],
        columns=["period", "baseline_level", "observed", "composition_only", "within_only"],
    )


def contributions_frame(contributions: Iterable[RelativeContributions]) -> pd.DataFrame:
    return pd.DataFrame([c.model_dump() for c in contributions])


def seniority_frame(results: Dict[str, List[DecompResult]]) -> pd.DataFrame:
    rows = []
    for level, items in results.items():
        for r in items:
            rows.append({"seniority": level, **r.row()})
    return pd.DataFrame(rows)


def ob_summary_frame(results: Dict[str, ObResult]) -> pd.DataFrame:
    rows = [
        {
            "sample": name,
            "mean_pre": r.mean_a,
            "mean_post": r.mean_b,
            "difference": r.gap,
            "explained": r.explained,
            "unexplained": r.unexplained,
            "columns": r.n_columns,
            "excluded_pre": r.excluded.get(PRE_GPT, 0.0),
            "excluded_post": r.excluded.get(POST_GPT, 0.0),
        }
        for name, r in results.items()
    ]
    return pd.DataFrame(rows)


def ob_blocks_frame(result: ObResult) -> pd.DataFrame:
    rows = []
    for block, value in sorted_blocks(result):
        share = value / result.explained if result.explained else float("nan")
        rows.append({"block": block, "contribution": value, "share_of_explained": share})
    return pd.DataFrame(rows, columns=["block", "contribution", "share_of_explained"])
