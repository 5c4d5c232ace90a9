from typing import List, Optional

import pandas as pd

from ai_exposure.analysis.panel import index_series, normalize_cells, occupation_terciles
from ai_exposure.domain.exposure import IndexChoice
from ai_exposure.domain.posting import SENIORITY_ORDER, PeriodId, PeriodKind, period_labels

SUMMARY_VARIABLES = ["share_e0", "share_e1", "share_e2", "alpha", "beta", "gamma"]


def _prepared(postings: pd.DataFrame, index_choice: IndexChoice) -> pd.DataFrame:
    frame = normalize_cells(postings)
    frame["index"] = index_series(frame, index_choice)
    return frame


def summary_statistics(postings: pd.DataFrame) -> pd.DataFrame:
    """Mean and SD of the shares and indices, overall and by seniority, with posting counts."""
    frame = normalize_cells(postings)
    groups = [("all", frame)] + [(level.lower(), frame[frame["seniority"] == level]) for level in SENIORITY_ORDER]
    rows = []
    for variable in SUMMARY_VARIABLES:
        row = {"variable": variable}
        for name, group in groups:
            row[f"{name}_mean"] = group[variable].mean()
            row[f"{name}_sd"] = group[variable].std()
        rows.append(row)
    counts = {"variable": "postings"}
    for name, group in groups:
        counts[f"{name}_mean"] = len(group)
        counts[f"{name}_sd"] = None
    rows.append(counts)
    return pd.DataFrame(rows)


def sector_means(postings: pd.DataFrame, index_choice: IndexChoice = "beta") -> pd.DataFrame:
    frame = _prepared(postings, index_choice)
    out = frame.groupby("industry")["index"].agg(postings="size", mean="mean").reset_index()
    return out.sort_values(["mean", "industry"], ascending=[False, True], kind="mergesort").reset_index(drop=True)


def occupation_exposure(postings: pd.DataFrame, index_choice: IndexChoice = "beta") -> pd.DataFrame:
    """Posting count, mean index and senior-minus-junior gap per occupation."""
    frame = _prepared(postings, index_choice)
    out = frame.groupby("occupation")["index"].agg(postings="size", mean="mean")
    by_level = frame.groupby(["occupation", "seniority"])["index"].mean().unstack()
    if {"Senior", "Junior"} <= set(by_level.columns):
        out["senior_minus_junior"] = by_level["Senior"] - by_level["Junior"]
    else:
        out["senior_minus_junior"] = float("nan")
    return out.reset_index()


def top_bottom_occupations(postings: pd.DataFrame, n: int = 10, index_choice: IndexChoice = "beta") -> pd.DataFrame:
    ranked = occupation_exposure(postings, index_choice)
    ranked = ranked.sort_values(["mean", "occupation"], ascending=[False, True], kind="mergesort")
    top = ranked.head(n).assign(group="Top")
    bottom = ranked.tail(min(n, max(0, len(ranked) - n))).iloc[::-1].assign(group="Bottom")
    out = pd.concat([top, bottom], ignore_index=True)
    out["rank"] = out.groupby("group").cumcount() + 1
    return out[["group", "rank", "occupation", "postings", "mean"]]


def seniority_trends(
    postings: pd.DataFrame, period_kind: PeriodKind = PeriodKind.QUARTER, index_choice: IndexChoice = "beta"
) -> pd.DataFrame:
    """Mean index per period, overall and for each seniority level."""
    frame = _prepared(postings, index_choice)
    frame["period"] = period_labels(frame["posted"], period_kind)
    overall = frame.groupby("period")["index"].mean().rename("All")
    levels = frame.groupby(["period", "seniority"])["index"].mean().unstack()
    out = pd.concat([overall, levels.reindex(columns=[c for c in SENIORITY_ORDER if c in levels.columns])], axis=1)
    return _by_period(out.reset_index())


def share_trends(postings: pd.DataFrame, period_kind: PeriodKind = PeriodKind.QUARTER) -> pd.DataFrame:
    frame = normalize_cells(postings)
    frame["period"] = period_labels(frame["posted"], period_kind)
    out = frame.groupby("period")[["share_e0", "share_e1", "share_e2"]].mean().reset_index()
    return _by_period(out)


def occupation_averaged_series(
    postings: pd.DataFrame, period_kind: PeriodKind = PeriodKind.QUARTER, index_choice: IndexChoice = "beta"
) -> pd.DataFrame:
    """Per period, the unweighted average of occupation means."""
    frame = _prepared(postings, index_choice)
    frame["period"] = period_labels(frame["posted"], period_kind)
    per_occupation = frame.groupby(["period", "occupation"])["index"].mean()
    out = per_occupation.groupby(level="period").mean().rename("mean").reset_index()
    return _by_period(out)


def tercile_changes(
    postings: pd.DataFrame,
    baseline: str = "2021",
    period_kind: PeriodKind = PeriodKind.QUARTER,
    index_choice: IndexChoice = "beta",
    by_seniority: bool = False,
) -> pd.DataFrame:
    """Change in mean index per occupation tercile relative to the baseline period."""
    frame = _prepared(postings, index_choice)
    terciles = occupation_terciles(frame, index_choice)
    frame["tercile"] = frame["occupation"].map(terciles)
    frame["period"] = period_labels(frame["posted"], period_kind)
    keys: List[str] = ["tercile"] + (["seniority"] if by_seniority else [])

    pool = PeriodId.parse(baseline)
    dates = frame["posted"].dt.date
    base = frame[(dates >= pool.start) & (dates < pool.end)].groupby(keys)["index"].mean().rename("baseline_mean")
    out = frame.groupby(["period"] + keys)["index"].mean().rename("mean").reset_index()
    out = out.join(base, on=keys)
    out["change"] = out["mean"] - out["baseline_mean"]
    return _by_period(out, keys)


def _by_period(frame: pd.DataFrame, extra: Optional[List[str]] = None) -> pd.DataFrame:
    order = frame["period"].map(lambda label: PeriodId.parse(label).sort_key())
    keys = [c for c in (extra or []) if c in frame.columns]
    frame = frame.assign(_order=order).sort_values(["_order"] + keys, kind="mergesort")
    return frame.drop(columns="_order").reset_index(drop=True)
