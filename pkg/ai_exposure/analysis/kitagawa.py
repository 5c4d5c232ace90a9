"""Shift-share decompositions of the change in aggregate exposure.

Between a baseline period 0 and period t, over the cells of the common
support with shares w and mean exposures E:

    composition  C = sum (w_t - w_0) * E_0
    within       W = sum w_0 * (E_t - E_0)
    interaction  I = sum (w_t - w_0) * (E_t - E_0)

and C + W + I equals the change in the support-weighted mean. All sums use
``math.fsum``.
"""

import math
from collections import Counter
from typing import Dict, List, Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from ai_exposure.analysis.panel import CellPanel, SupportDiagnostics, common_support
from ai_exposure.domain.posting import SENIORITY_ORDER, PeriodId
from ai_exposure.exceptions import (
    AllZeroComponents,
    ConfigurationError,
    EmptyBalancedSet,
    EmptyPeriod,
    EmptySupport,
    MissingBaseline,
    SectorMissingInBaseline,
)

Variant = Literal["threefold", "twofold", "balanced", "within_sector"]
VARIANTS = ["threefold", "twofold", "balanced", "within_sector", "by_seniority"]
SIGN_BUCKETS = ["neg_pos", "pos_neg", "pos_pos", "neg_neg"]


class DecompResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    period: str
    baseline: str
    total: float
    composition: float
    within: float
    interaction: float
    reconstruction_gap: float
    diagnostics: Optional[SupportDiagnostics] = None

    def row(self) -> Dict[str, Union[str, float, None]]:
        diag = self.diagnostics
        return {
            "period": self.period,
            "total": self.total,
            "composition": self.composition,
            "within": self.within,
            "interaction": self.interaction,
            "m_cur": diag.m_cur if diag else None,
            "m_base": diag.m_base if diag else None,
            "gap": diag.gap if diag else None,
            "residual": diag.residual if diag else None,
        }


class TwofoldResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    period: str
    baseline: str
    total: float
    composition: float
    within: float


class SignPatternBreakdown(BaseModel):
    """Interaction split by the signs of the share change and exposure change."""

    model_config = ConfigDict(frozen=True)

    period: str
    neg_pos: float
    pos_neg: float
    pos_pos: float
    neg_neg: float
    zero_change: float
    interaction: float


class CounterfactualPath(BaseModel):
    model_config = ConfigDict(frozen=True)

    period: str
    baseline_level: float
    observed: float
    composition_only: float
    within_only: float


class WithinSectorResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    aggregate: DecompResult
    sectors: Dict[str, DecompResult]
    weights: Dict[str, float]
    skipped: List[str] = Field(default_factory=list)


class RelativeContributions(BaseModel):
    model_config = ConfigDict(frozen=True)

    from_period: str
    composition: float
    within: float
    interaction: float


def _label(period: "str | PeriodId") -> str:
    return PeriodId.parse(period).label


def _terms(cells: pd.DataFrame) -> Dict[str, float]:
    dw = cells["w_cur"] - cells["w_base"]
    de = cells["e_cur"] - cells["e_base"]
    composition = math.fsum(dw * cells["e_base"])
    within = math.fsum(cells["w_base"] * de)
    interaction = math.fsum(dw * de)
    total = math.fsum(cells["w_cur"] * cells["e_cur"]) - math.fsum(cells["w_base"] * cells["e_base"])
    return {
        "total": total,
        "composition": composition,
        "within": within,
        "interaction": interaction,
        "reconstruction_gap": (composition + within + interaction) - total,
    }


def threefold(
    panel: CellPanel,
    baseline: "str | PeriodId",
    t: "str | PeriodId",
    use_common_support: bool = True,
) -> DecompResult:
    support = common_support(panel, baseline, t, renormalize=use_common_support)
    return DecompResult(
        period=support.period,
        baseline=support.baseline,
        diagnostics=support.diagnostics,
        **_terms(support.cells),
    )


def twofold_symmetric(
    panel: CellPanel,
    baseline: "str | PeriodId",
    t: "str | PeriodId",
    use_common_support: bool = True,
) -> TwofoldResult:
    """Threefold with the interaction split evenly between the other two terms."""
    support = common_support(panel, baseline, t, renormalize=use_common_support)
    cells = support.cells
    dw = cells["w_cur"] - cells["w_base"]
    de = cells["e_cur"] - cells["e_base"]
    return TwofoldResult(
        period=support.period,
        baseline=support.baseline,
        total=math.fsum(cells["w_cur"] * cells["e_cur"]) - math.fsum(cells["w_base"] * cells["e_base"]),
        composition=math.fsum(dw * (cells["e_cur"] + cells["e_base"]) / 2),
        within=math.fsum(de * (cells["w_cur"] + cells["w_base"]) / 2),
    )


def balanced_cells(panel: CellPanel, baseline: "str | PeriodId", periods: Sequence["str | PeriodId"]) -> List[tuple]:
    """Cells with positive share in the baseline and in every listed period."""
    if not panel.has_period(baseline):
        raise MissingBaseline(f"Baseline period {_label(baseline)} is not in the panel")
    common = None
    for period in [baseline, *periods]:
        cells = panel.period(period)
        keys = set(cells.index[cells["share"] > 0])
        common = keys if common is None else common & keys
    return sorted(common or [])


def balanced(panel: CellPanel, baseline: "str | PeriodId", periods: Sequence["str | PeriodId"]) -> List[DecompResult]:
    cells = balanced_cells(panel, baseline, periods)
    if not cells:
        raise EmptyBalancedSet(f"No cell is observed in {_label(baseline)} and all {len(periods)} periods")
    restricted = panel.restrict(cells)
    logger.debug(f"Balanced set keeps {len(cells)} of {len(panel.cells())} cells")
    return [threefold(restricted, baseline, t) for t in periods]


def sector_weights(panel: CellPanel, baseline: "str | PeriodId") -> Dict[str, float]:
    """Baseline posting share of each 2-digit sector."""
    if not panel.has_period(baseline):
        raise MissingBaseline(f"Baseline period {_label(baseline)} is not in the panel")
    shares = panel.period(baseline)["share"].groupby(level="industry").sum()
    return {str(k): float(v) for k, v in shares.items() if v > 0}


def within_sector(panel: CellPanel, baseline: "str | PeriodId", t: "str | PeriodId") -> WithinSectorResult:
    """Threefold inside each sector, aggregated with fixed baseline sector weights.

    A sector with no postings (or no common cells) in ``t`` keeps its weight and
    contributes zero; it is listed in ``skipped``.
    """
    weights = sector_weights(panel, baseline)
    current = set(panel.period(t).index.get_level_values("industry"))
    unknown = sorted(current - set(weights))
    if unknown:
        raise SectorMissingInBaseline(f"Sectors {', '.join(unknown)} appear in {_label(t)} but not in the baseline")

    sectors: Dict[str, DecompResult] = {}
    skipped: List[str] = []
    for sector in sorted(weights):
        if sector not in current:
            logger.warning(f"Sector {sector} has no postings in {_label(t)}; counted as zero")
            skipped.append(sector)
            continue
        try:
            sectors[sector] = threefold(panel.filter(industry=sector), baseline, t)
        except EmptySupport:
            logger.warning(f"Sector {sector} has no common cells between {_label(baseline)} and {_label(t)}; counted as zero")
            skipped.append(sector)
    if not sectors:
        raise EmptySupport(f"No sector supports a decomposition for {_label(t)}")

    terms = {
        name: math.fsum(weights[s] * getattr(r, name) for s, r in sectors.items())
        for name in ("total", "composition", "within", "interaction")
    }
    terms["reconstruction_gap"] = (terms["composition"] + terms["within"] + terms["interaction"]) - terms["total"]
    aggregate = DecompResult(
        period=_label(t),
        baseline=_label(baseline),
        diagnostics=common_support(panel, baseline, t).diagnostics,
        **terms,
    )
    return WithinSectorResult(aggregate=aggregate, sectors=sectors, weights=weights, skipped=skipped)


def sign_patterns(
    panel: CellPanel,
    baseline: "str | PeriodId",
    t: "str | PeriodId",
    use_common_support: bool = True,
) -> SignPatternBreakdown:
    support = common_support(panel, baseline, t, renormalize=use_common_support)
    cells = support.cells
    dw = (cells["w_cur"] - cells["w_base"]).to_numpy()
    de = (cells["e_cur"] - cells["e_base"]).to_numpy()
    contribution = dw * de
    sw, se = np.sign(dw), np.sign(de)
    buckets = {
        "neg_pos": (sw < 0) & (se > 0),
        "pos_neg": (sw > 0) & (se < 0),
        "pos_pos": (sw > 0) & (se > 0),
        "neg_neg": (sw < 0) & (se < 0),
    }
    zero = (sw == 0) | (se == 0)
    return SignPatternBreakdown(
        period=support.period,
        zero_change=math.fsum(contribution[zero]),
        interaction=math.fsum(contribution),
        **{name: math.fsum(contribution[mask]) for name, mask in buckets.items()},
    )


def relative_contributions(results: Sequence[DecompResult], from_period: "str | PeriodId" = "2023Q3") -> RelativeContributions:
    """Percent of summed absolute movement attributed to each component."""
    start = PeriodId.parse(from_period).start
    window = [r for r in results if PeriodId.parse(r.period).start >= start]
    sums = {
        name: math.fsum(abs(getattr(r, name)) for r in window)
        for name in ("composition", "within", "interaction")
    }
    denominator = math.fsum(sums.values())
    if not window or denominator == 0:
        raise AllZeroComponents(f"No nonzero decomposition terms from {_label(from_period)} onward")
    return RelativeContributions(
        from_period=_label(from_period),
        **{name: 100 * value / denominator for name, value in sums.items()},
    )


def per_period_contributions(results: Sequence[DecompResult]) -> pd.DataFrame:
    rows = []
    for r in results:
        denominator = abs(r.composition) + abs(r.within) + abs(r.interaction)
        if denominator == 0:
            continue
        rows.append(
            {
                "period": r.period,
                "composition": 100 * abs(r.composition) / denominator,
                "within": 100 * abs(r.within) / denominator,
                "interaction": 100 * abs(r.interaction) / denominator,
            }
        )
    return pd.DataFrame(rows, columns=["period", "composition", "within", "interaction"])


def average_sign_patterns(breakdowns: Sequence[SignPatternBreakdown], from_period: "str | PeriodId" = "2023Q3") -> Dict[str, float]:
    start = PeriodId.parse(from_period).start
    window = [b for b in breakdowns if PeriodId.parse(b.period).start >= start]
    if not window:
        return {name: 0.0 for name in SIGN_BUCKETS}
    return {name: math.fsum(getattr(b, name) for b in window) / len(window) for name in SIGN_BUCKETS}


def counterfactual_paths(
    panel: CellPanel, baseline: "str | PeriodId", periods: Sequence["str | PeriodId"]
) -> List[CounterfactualPath]:
    """Observed, composition-only and within-only levels on each period's common support."""
    paths = []
    for t in periods:
        cells = common_support(panel, baseline, t).cells
        paths.append(
            CounterfactualPath(
                period=_label(t),
                baseline_level=math.fsum(cells["w_base"] * cells["e_base"]),
                observed=math.fsum(cells["w_cur"] * cells["e_cur"]),
                composition_only=math.fsum(cells["w_cur"] * cells["e_base"]),
                within_only=math.fsum(cells["w_base"] * cells["e_cur"]),
            )
        )
    return paths


def default_periods(panel: CellPanel, baseline: "str | PeriodId") -> List[PeriodId]:
    """Periods on the panel's main grid, baseline excluded."""
    base = PeriodId.parse(baseline)
    others = [p for p in panel.periods if p != base]
    if not others:
        return []
    grid = Counter(p.kind for p in others).most_common(1)[0][0]
    return [p for p in others if p.kind == grid]


def by_seniority(
    panel: CellPanel,
    baseline: "str | PeriodId",
    periods: Sequence["str | PeriodId"],
    use_common_support: bool = True,
) -> Dict[str, List[DecompResult]]:
    """Threefold within each seniority stratum, shares renormalized inside the stratum."""
    out: Dict[str, List[DecompResult]] = {}
    present = set(panel.frame["seniority"])
    for level in SENIORITY_ORDER:
        if level not in present:
            continue
        stratum = panel.filter(seniority=level)
        if not stratum.has_period(baseline):
            logger.warning(f"{level} postings have no baseline period; stratum skipped")
            continue
        results = []
        for t in periods:
            try:
                results.append(threefold(stratum, baseline, t, use_common_support))
            except (EmptyPeriod, EmptySupport) as e:
                logger.warning(f"{level} {_label(t)} skipped: {str(e)}")
        out[level] = results
    return out


def decompose_all(
    panel: CellPanel,
    baseline: "str | PeriodId",
    periods: Optional[Sequence["str | PeriodId"]] = None,
    variant: Variant = "threefold",
    use_common_support: bool = True,
) -> List[DecompResult]:
    """Run one variant for every period; twofold rows carry interaction 0."""
    periods = list(periods) if periods is not None else default_periods(panel, baseline)
    if variant == "threefold":
        return [threefold(panel, baseline, t, use_common_support) for t in periods]
    if variant == "balanced":
        return balanced(panel, baseline, periods)
    if variant == "within_sector":
        return [within_sector(panel, baseline, t).aggregate for t in periods]
    if variant == "twofold":
        results = []
        for t in periods:
            two = twofold_symmetric(panel, baseline, t, use_common_support)
            gap = (two.composition + two.within) - two.total
            results.append(
                DecompResult(
                    period=two.period,
                    baseline=two.baseline,
                    total=two.total,
                    composition=two.composition,
                    within=two.within,
                    interaction=0.0,
                    reconstruction_gap=gap,
                    diagnostics=common_support(panel, baseline, t, renormalize=use_common_support).diagnostics,
                )
            )
        return results
    raise ConfigurationError(f"Unknown decomposition variant: {variant!r}")
