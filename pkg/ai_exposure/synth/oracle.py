"""Slow reference implementations used to cross-check the analysis engines.

Everything here is plain loops and naive sums over small inputs; nothing is
shared with the panel, kitagawa or oaxaca modules beyond the result types.
"""

from datetime import date
from typing import Dict, Iterable, List, Mapping, Tuple

import numpy as np
import pandas as pd

from ai_exposure.analysis.kitagawa import DecompResult
from ai_exposure.analysis.oaxaca import POST_GPT, PRE_GPT, CovariateBlocks, ObResult, shared_support
from ai_exposure.domain.posting import PeriodId

Key = Tuple[str, str, str]


def _cell_key(row: Mapping) -> Key:
    seniority = row.get("seniority")
    if seniority is None or (isinstance(seniority, float) and seniority != seniority) or seniority == "":
        seniority = "Intermediate"
    return (str(row["occupation"]), str(seniority), str(row["industry"])[:2])


def _as_date(value) -> date:
    return pd.Timestamp(value).date()


def _period_cells(rows: Iterable[Mapping], period: PeriodId, index: str) -> Dict[Key, Tuple[float, float]]:
    counts: Dict[Key, int] = {}
    sums: Dict[Key, float] = {}
    for row in rows:
        if not period.contains(_as_date(row["posted"])):
            continue
        key = _cell_key(row)
        counts[key] = counts.get(key, 0) + 1
        sums[key] = sums.get(key, 0.0) + float(row[index])
    total = sum(counts.values())
    return {key: (counts[key] / total, sums[key] / counts[key]) for key in counts}


def oracle_threefold(
    base: Dict[Key, Tuple[float, float]], cur: Dict[Key, Tuple[float, float]], period: str = "", baseline: str = ""
) -> DecompResult:
    """Term-by-term decomposition over common cells with renormalized shares."""
    support = [key for key in base if key in cur and base[key][0] > 0 and cur[key][0] > 0]
    m_base = sum(base[key][0] for key in support)
    m_cur = sum(cur[key][0] for key in support)
    composition = within = interaction = level_base = level_cur = 0.0
    for key in support:
        w0, e0 = base[key][0] / m_base, base[key][1]
        w1, e1 = cur[key][0] / m_cur, cur[key][1]
        composition += (w1 - w0) * e0
        within += w0 * (e1 - e0)
        interaction += (w1 - w0) * (e1 - e0)
        level_base += w0 * e0
        level_cur += w1 * e1
    total = level_cur - level_base
    return DecompResult(
        period=period,
        baseline=baseline,
        total=total,
        composition=composition,
        within=within,
        interaction=interaction,
        reconstruction_gap=composition + within + interaction - total,
    )


def oracle_decompose(postings: pd.DataFrame, baseline: str, t: str, index: str = "beta") -> DecompResult:
    rows = postings.to_dict("records")
    base_period, cur_period = PeriodId.parse(baseline), PeriodId.parse(t)
    return oracle_threefold(
        _period_cells(rows, base_period, index),
        _period_cells(rows, cur_period, index),
        period=cur_period.label,
        baseline=base_period.label,
    )


def _dense_design(cells: pd.DataFrame, blocks: CovariateBlocks) -> np.ndarray:
    columns: List[Tuple[str, str]] = []
    for block in blocks.blocks:
        for category in block.categories:
            if category != block.reference:
                columns.append((block.name, category))
    x = np.zeros((len(cells), len(columns)))
    for i, row in enumerate(cells.to_dict("records")):
        for j, (name, category) in enumerate(columns):
            if str(row[name]) == category:
                x[i, j] = 1.0
    return x


def _normal_equations(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    a = np.column_stack([np.ones(len(y)), x])
    return np.linalg.solve(a.T @ (a * w[:, None]), a.T @ (w * y))


def oracle_ob(cells: pd.DataFrame, blocks: CovariateBlocks) -> ObResult:
    """Dense normal-equation fits for both groups, full-rank designs only."""
    support = shared_support(cells, blocks)
    cells, blocks = support.cells, support.blocks
    fits, means_x, means_y = {}, {}, {}
    for group in (PRE_GPT, POST_GPT):
        subset = cells[cells["group"] == group]
        x = _dense_design(subset, blocks)
        y = subset["outcome"].to_numpy(dtype=float)
        w = subset["weight"].to_numpy(dtype=float)
        fits[group] = _normal_equations(x, y, w)
        means_x[group] = (x * w[:, None]).sum(axis=0) / w.sum()
        means_y[group] = float((w * y).sum() / w.sum())

    beta_a, beta_b = fits[PRE_GPT], fits[POST_GPT]
    delta = means_x[POST_GPT] - means_x[PRE_GPT]
    explained = float(delta @ beta_a[1:])
    unexplained = float((beta_b[0] - beta_a[0]) + means_x[POST_GPT] @ (beta_b[1:] - beta_a[1:]))

    contributions: Dict[str, float] = {}
    j = 0
    for block in blocks.blocks:
        width = len(block.categories) - 1
        contributions[block.name] = float(delta[j : j + width] @ beta_a[1 + j : 1 + j + width])
        j += width
    return ObResult(
        group_a=PRE_GPT,
        group_b=POST_GPT,
        mean_a=means_y[PRE_GPT],
        mean_b=means_y[POST_GPT],
        explained=explained,
        unexplained=unexplained,
        blocks=contributions,
        n_columns=len(delta),
    )
