"""Cell-period panel: posting shares and mean exposure per cell and period.

A cell is an occupation x seniority x 2-digit industry group. The panel
holds, for every period, the share of posting mass in each non-empty cell and
the cell's mean exposure, so the aggregate mean is sum_c share * mean.
"""

import hashlib
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import humanize
import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict

from ai_exposure.domain.exposure import IndexChoice, index_weight
from ai_exposure.domain.posting import SENIORITY_ORDER, PeriodId, PeriodKind, Seniority, period_labels
from ai_exposure.exceptions import (
    EmptyPeriod,
    EmptySupport,
    InputFormatError,
    InvalidInputError,
    MissingBaseline,
)

CELL_COLUMNS = ["occupation", "seniority", "industry"]
PANEL_COLUMNS = CELL_COLUMNS + ["period", "count", "share", "mean_exposure"]


def normalize_cells(postings: pd.DataFrame) -> pd.DataFrame:
    """Canonical cell columns; rows without occupation, industry or date are dropped."""
    frame = postings.copy()
    required = ["occupation", "industry", "posted"]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise InputFormatError(f"postings lack columns: {', '.join(missing)}")
    usable = frame[required].notna().all(axis=1)
    if not usable.all():
        logger.warning(f"Dropping {humanize.intcomma(int((~usable).sum()))} postings without occupation, industry or date")
        frame = frame[usable].copy()

    frame["occupation"] = frame["occupation"].astype(str)
    seniority = frame["seniority"] if "seniority" in frame.columns else pd.Series(index=frame.index, dtype=object)
    seniority = seniority.fillna("").astype(str).str.strip().str.capitalize()
    seniority = seniority.where(seniority != "", Seniority.INTERMEDIATE.value)
    unknown = ~seniority.isin(SENIORITY_ORDER)
    if unknown.any():
        raise InvalidInputError(f"Unknown seniority: {seniority[unknown].iloc[0]!r}")
    frame["seniority"] = seniority

    industry = frame["industry"].astype(str).str.replace(r"\.0$", "", regex=True).str.replace(r"\D", "", regex=True)
    if (industry.str.len() < 2).any():
        raise InvalidInputError(f"Industry code needs at least two digits: {frame['industry'][industry.str.len() < 2].iloc[0]!r}")
    frame["industry"] = industry.str[:2]
    frame["posted"] = pd.to_datetime(frame["posted"])
    return frame


def index_series(postings: pd.DataFrame, choice: IndexChoice) -> pd.Series:
    """Posting-level values of the chosen exposure index."""
    weight = index_weight(choice)
    if isinstance(choice, str) and choice in postings.columns:
        return postings[choice].astype(float)
    if not {"share_e1", "share_e2"} <= set(postings.columns):
        raise InputFormatError("postings need share_e1 and share_e2 columns for a custom index")
    return postings["share_e1"].astype(float) + weight * postings["share_e2"].astype(float)


def _half_year_groups(postings: pd.DataFrame) -> pd.Series:
    half = period_labels(postings["posted"], PeriodKind.HALF_YEAR)
    return postings.groupby(CELL_COLUMNS + [half.rename("half")], sort=False)["occupation"].transform("size")


def dropped_cell_mass(postings: pd.DataFrame, min_cell_size: int) -> float:
    """Share of postings that sit in (cell, half-year) groups below min_cell_size."""
    frame = normalize_cells(postings)
    if frame.empty:
        return 0.0
    sizes = _half_year_groups(frame)
    return float((sizes < min_cell_size).sum()) / len(frame)


def _seed_key(seed: int) -> str:
    return hashlib.sha256(str(seed).encode("utf-8")).hexdigest()[:16]


def sample_postings(postings: pd.DataFrame, rate: float, min_cell_size: int, seed: int) -> pd.DataFrame:
    """Drop sparse (cell, half-year) groups, then keep each posting with probability ``rate``.

    Each posting's draw is a hash of (seed, cell, half-year, posting_id), so the
    sample does not depend on row order and is reproducible for a seed.
    """
    if not 0.0 < rate <= 1.0:
        raise InvalidInputError(f"Sampling rate must lie in (0, 1], got {rate}")
    if min_cell_size < 0:
        raise InvalidInputError(f"min_cell_size must be non-negative, got {min_cell_size}")
    frame = normalize_cells(postings)
    if frame.empty:
        return frame

    half = period_labels(frame["posted"], PeriodKind.HALF_YEAR)
    sizes = _half_year_groups(frame)
    dense = sizes >= min_cell_size
    dropped = int((~dense).sum())
    frame, half = frame[dense], half[dense]

    if rate < 1.0:
        keys = (
            frame["occupation"]
            + "|"
            + frame["seniority"]
            + "|"
            + frame["industry"]
            + "|"
            + half
            + "|"
            + frame["posting_id"].astype(str)
        )
        hashed = pd.util.hash_pandas_object(keys, index=False, hash_key=_seed_key(seed)).to_numpy(dtype=np.uint64)
        draws = hashed.astype(np.float64) / 2.0**64
        frame = frame[draws < rate]

    logger.info(
        f"Sampled {humanize.intcomma(len(frame))} postings at rate {rate} "
        f"({humanize.intcomma(dropped)} dropped in groups below {min_cell_size})"
    )
    return frame


class SupportDiagnostics(BaseModel):
    model_config = ConfigDict(frozen=True)

    period: str
    m_cur: float
    m_base: float
    gap: float
    raw_total_change: float
    renorm_total_change: float
    residual: float


class CommonSupport(BaseModel):
    """Cells observed in both periods, aligned side by side.

    ``cells`` is indexed by cell key with columns w_base, e_base, w_cur, e_cur.
    Shares are renormalized to sum to one when ``renormalized`` is set.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    baseline: str
    period: str
    cells: pd.DataFrame
    renormalized: bool
    diagnostics: SupportDiagnostics

    def level(self, which: str) -> float:
        share, mean = ("w_base", "e_base") if which == "base" else ("w_cur", "e_cur")
        return math.fsum(self.cells[share] * self.cells[mean])


class CellPanel:
    """Immutable cell-period table with one row per non-empty (cell, period)."""

    def __init__(self, frame: pd.DataFrame, periods: Optional[Sequence[str]] = None):
        missing = [c for c in PANEL_COLUMNS if c not in frame.columns]
        if missing:
            raise InputFormatError(f"panel lacks columns: {', '.join(missing)}")
        frame = frame[PANEL_COLUMNS].copy()
        frame["period"] = frame["period"].astype(str)
        labels = periods or frame["period"].unique().tolist()
        # pooled periods sort ahead of the finer periods they contain
        self.periods: List[PeriodId] = sorted({PeriodId.parse(p) for p in labels}, key=lambda p: (p.start, -p.months))
        order = {p.label: i for i, p in enumerate(self.periods)}
        frame["_order"] = frame["period"].map(order)
        self.frame = frame.sort_values(["_order"] + CELL_COLUMNS).drop(columns="_order").reset_index(drop=True)
        self._by_period: Dict[str, pd.DataFrame] = {
            label: group.set_index(CELL_COLUMNS)[["count", "share", "mean_exposure"]]
            for label, group in self.frame.groupby("period", sort=False)
        }

    def __len__(self) -> int:
        return len(self.frame)

    def labels(self) -> List[str]:
        return [p.label for p in self.periods]

    def has_period(self, period: "str | PeriodId") -> bool:
        return PeriodId.parse(period).label in self._by_period

    def period(self, period: "str | PeriodId") -> pd.DataFrame:
        label = PeriodId.parse(period).label
        if label not in self._by_period:
            raise EmptyPeriod(f"Period {label} has no postings in the panel")
        return self._by_period[label]

    def mean(self, period: "str | PeriodId") -> float:
        cells = self.period(period)
        return math.fsum(cells["share"] * cells["mean_exposure"])

    def cells(self) -> List[Tuple[str, str, str]]:
        return sorted(set(self.frame[CELL_COLUMNS].itertuples(index=False, name=None)))

    def check_shares(self) -> None:
        for label, cells in self._by_period.items():
            total = math.fsum(cells["share"])
            if abs(total - 1.0) > 1e-9:
                raise InvalidInputError(f"Shares in period {label} sum to {total}")

    def filter(self, seniority: Optional[str] = None, industry: Optional[str] = None) -> "CellPanel":
        """Restrict to one stratum and renormalize shares within it per period."""
        frame = self.frame
        if seniority is not None:
            frame = frame[frame["seniority"] == seniority]
        if industry is not None:
            frame = frame[frame["industry"] == industry]
        return self._renormalized(frame)

    def restrict(self, cells: Iterable[Tuple[str, str, str]]) -> "CellPanel":
        """Keep only the given cells, renormalizing shares per period."""
        keep = pd.MultiIndex.from_tuples(list(cells), names=CELL_COLUMNS)
        mask = pd.MultiIndex.from_frame(self.frame[CELL_COLUMNS]).isin(keep)
        return self._renormalized(self.frame[mask])

    @staticmethod
    def _renormalized(frame: pd.DataFrame) -> "CellPanel":
        frame = frame.copy()
        frame["share"] = frame["share"] / frame.groupby("period")["share"].transform("sum")
        return CellPanel(frame)

    def to_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(path, index=False)
        return path

    @classmethod
    def from_csv(cls, path: Path) -> "CellPanel":
        try:
            frame = pd.read_csv(path, dtype={"occupation": str, "seniority": str, "industry": str, "period": str})
        except ValueError as e:
            raise InputFormatError(f"{path}: {str(e)}")
        panel = cls(frame)
        panel.check_shares()
        return panel


def build_panel(
    postings: pd.DataFrame,
    period_kind: PeriodKind = PeriodKind.QUARTER,
    index_choice: IndexChoice = "beta",
    pooled: Iterable[str] = ("2021",),
    weight_column: Optional[str] = None,
    periods: Optional[Sequence[str]] = None,
) -> CellPanel:
    """Aggregate postings into cell shares and mean exposure per period.

    Regular periods of ``period_kind`` are built from posting dates; each
    ``pooled`` label (e.g. the baseline year) is aggregated alongside them.
    Shares use posting counts unless ``weight_column`` is given, in which case
    both shares and cell means are weighted by it.
    """
    frame = normalize_cells(postings)
    frame["_y"] = index_series(frame, index_choice)
    frame["_w"] = frame[weight_column].astype(float) if weight_column else 1.0
    frame["_wy"] = frame["_w"] * frame["_y"]

    parts = [frame.assign(period=period_labels(frame["posted"], period_kind))]
    for label in pooled:
        pool = PeriodId.parse(label)
        if pool.kind == period_kind:
            continue
        dates = frame["posted"].dt.date
        mask = (dates >= pool.start) & (dates < pool.end)
        parts.append(frame[mask].assign(period=pool.label))
    stacked = pd.concat(parts, ignore_index=True)

    grouped = stacked.groupby(CELL_COLUMNS + ["period"], sort=False).agg(
        count=("_y", "size"), mass=("_w", "sum"), weighted=("_wy", "sum")
    )
    grouped = grouped.reset_index()
    grouped["mean_exposure"] = grouped["weighted"] / grouped["mass"]
    grouped["share"] = grouped["mass"] / grouped.groupby("period")["mass"].transform("sum")

    if periods:
        present = set(grouped["period"])
        for label in periods:
            if PeriodId.parse(label).label not in present:
                raise EmptyPeriod(f"Period {label} has no postings")

    panel = CellPanel(grouped)
    logger.info(
        f"Built panel with {humanize.intcomma(len(panel))} cell-periods over {len(panel.periods)} periods "
        f"from {humanize.intcomma(len(frame))} postings"
    )
    return panel


def _require_periods(panel: CellPanel, baseline: "str | PeriodId", t: "str | PeriodId") -> Tuple[pd.DataFrame, pd.DataFrame]:
    if not panel.has_period(baseline):
        raise MissingBaseline(f"Baseline period {PeriodId.parse(baseline).label} is not in the panel")
    return panel.period(baseline), panel.period(t)


def common_support(
    panel: CellPanel,
    baseline: "str | PeriodId",
    t: "str | PeriodId",
    renormalize: bool = True,
) -> CommonSupport:
    """Cells present in both the baseline and period t, with overlap diagnostics."""
    base, cur = _require_periods(panel, baseline, t)
    joined = base[["share", "mean_exposure"]].join(
        cur[["share", "mean_exposure"]], how="inner", lsuffix="_base", rsuffix="_cur"
    )
    joined = joined[(joined["share_base"] > 0) & (joined["share_cur"] > 0)].sort_index()
    if joined.empty:
        raise EmptySupport(f"No cells common to {PeriodId.parse(baseline).label} and {PeriodId.parse(t).label}")
    cells = pd.DataFrame(
        {
            "w_base": joined["share_base"],
            "e_base": joined["mean_exposure_base"],
            "w_cur": joined["share_cur"],
            "e_cur": joined["mean_exposure_cur"],
        }
    )
    m_base = math.fsum(cells["w_base"])
    m_cur = math.fsum(cells["w_cur"])
    renormed = cells.assign(w_base=cells["w_base"] / m_base, w_cur=cells["w_cur"] / m_cur)

    observed_base = panel.mean(baseline)
    observed_cur = panel.mean(t)
    renorm_base = math.fsum(renormed["w_base"] * renormed["e_base"])
    renorm_cur = math.fsum(renormed["w_cur"] * renormed["e_cur"])
    raw_change = observed_cur - observed_base
    renorm_change = renorm_cur - renorm_base
    diagnostics = SupportDiagnostics(
        period=PeriodId.parse(t).label,
        m_cur=min(1.0, m_cur),
        m_base=min(1.0, m_base),
        gap=observed_cur - renorm_cur,
        raw_total_change=raw_change,
        renorm_total_change=renorm_change,
        residual=raw_change - renorm_change,
    )
    if not renormalize:
        excluded = (1.0 - m_base, 1.0 - m_cur)
        if max(excluded) > 0:
            logger.warning(
                f"Raw support for {diagnostics.period}: excluding {excluded[0]:.4%} of baseline and "
                f"{excluded[1]:.4%} of current mass in unmatched cells"
            )
    return CommonSupport(
        baseline=PeriodId.parse(baseline).label,
        period=diagnostics.period,
        cells=renormed if renormalize else cells,
        renormalized=renormalize,
        diagnostics=diagnostics,
    )


TERCILES = ["Low", "Middle", "High"]


def occupation_terciles(postings: pd.DataFrame, index_choice: IndexChoice = "beta") -> Dict[str, str]:
    """Rank occupations by full-sample mean exposure and split them in thirds."""
    frame = postings.assign(_y=index_series(postings, index_choice), occupation=postings["occupation"].astype(str))
    means = frame.groupby("occupation")["_y"].mean().reset_index()
    means = means.sort_values(["_y", "occupation"], kind="mergesort").reset_index(drop=True)
    n = len(means)
    return {occ: TERCILES[min(2, (3 * i) // n)] for i, occ in enumerate(means["occupation"])}
