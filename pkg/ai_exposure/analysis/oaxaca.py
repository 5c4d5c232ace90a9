"""Weighted Oaxaca-Blinder decomposition over categorical covariate blocks.

Each group g (PreGpt, PostGpt) gets a cell-level weighted regression

    Y_c = a_g + X_c' b_g + e_c

on one dummy per non-reference category of every block. With PreGpt as the
reference group A and PostGpt as B:

    explained   = (Xbar_B - Xbar_A)' b_A
    unexplained = (a_B - a_A) + Xbar_B' (b_B - b_A)

Both fits run on the cells whose categories occur in both groups. Block
contributions sum the explained term over each block's columns; on a full-rank
design they do not depend on which category is omitted in each block.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from datetime import date
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse as sp
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from ai_exposure.analysis.panel import index_series, normalize_cells
from ai_exposure.domain.exposure import IndexChoice
from ai_exposure.exceptions import DegenerateSystem, EmptyGroup, InputFormatError, UnknownCategory

PRE_GPT = "PreGpt"
POST_GPT = "PostGpt"
GROUPS = [PRE_GPT, POST_GPT]
UNKNOWN_CATEGORY = "Unknown"
PIVOT_TOLERANCE = 1e-10


class Block(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    categories: List[str]
    reference: str

    def columns(self) -> List[str]:
        return [c for c in self.categories if c != self.reference]


class CovariateBlocks(BaseModel):
    """Ordered categorical blocks, each with one omitted reference category."""

    model_config = ConfigDict(frozen=True)

    blocks: List[Block]

    @property
    def names(self) -> List[str]:
        return [b.name for b in self.blocks]

    def block(self, name: str) -> Block:
        return next(b for b in self.blocks if b.name == name)

    def columns(self) -> List[Tuple[str, str]]:
        return [(b.name, c) for b in self.blocks for c in b.columns()]

    def with_references(self, references: Dict[str, str]) -> "CovariateBlocks":
        blocks = []
        for b in self.blocks:
            reference = references.get(b.name, b.reference)
            if reference not in b.categories:
                raise UnknownCategory(f"{reference!r} is not a category of block {b.name}")
            blocks.append(b.model_copy(update={"reference": reference}))
        return CovariateBlocks(blocks=blocks)

    @classmethod
    def infer(
        cls, cells: pd.DataFrame, names: Sequence[str], reference_group: str = PRE_GPT
    ) -> "CovariateBlocks":
        """Categories from the cell table; references are the heaviest reference-group category."""
        missing = [n for n in names if n not in cells.columns]
        if missing:
            raise InputFormatError(f"cell table lacks block columns: {', '.join(missing)}")
        ref_cells = cells[cells["group"] == reference_group]
        if ref_cells.empty:
            raise EmptyGroup(f"No {reference_group} cells")
        blocks = []
        for name in names:
            categories = sorted(cells[name].astype(str).unique().tolist())
            mass = ref_cells.groupby(ref_cells[name].astype(str))["weight"].sum().reset_index()
            mass = mass.sort_values(["weight", name], ascending=[False, True], kind="mergesort")
            blocks.append(Block(name=name, categories=categories, reference=str(mass[name].iloc[0])))
        return cls(blocks=blocks)


class SharedSupport(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    cells: pd.DataFrame
    blocks: CovariateBlocks
    excluded: Dict[str, float]


def shared_support(cells: pd.DataFrame, blocks: CovariateBlocks, reference_group: str = PRE_GPT) -> SharedSupport:
    """Keep cells whose category in every block carries weight in both groups.

    A category seen in one group only has no estimable coefficient in the
    other. Dropping a cell can empty a category of another block, so the
    filter runs to a fixed point. ``excluded`` is the weight share removed
    per group.
    """
    for group in GROUPS:
        if not (cells["group"] == group).any():
            raise EmptyGroup(f"No {group} cells")
    for block in blocks.blocks:
        values = cells[block.name].astype(str)
        unknown = ~values.isin(block.categories)
        if unknown.any():
            raise UnknownCategory(f"{values[unknown].iloc[0]!r} is not a category of block {block.name}")

    kept = cells
    while True:
        keep = pd.Series(True, index=kept.index)
        for name in blocks.names:
            values = kept[name].astype(str)
            seen = kept.groupby([values, kept["group"]])["weight"].sum().unstack(fill_value=0.0)
            shared = seen.index[(seen.reindex(columns=GROUPS, fill_value=0.0) > 0).all(axis=1)]
            keep &= values.isin(shared)
        if keep.all():
            break
        kept = kept[keep]
        for group in GROUPS:
            if not (kept["group"] == group).any():
                raise EmptyGroup(f"No {group} cells share every category with the other group")

    excluded = {}
    for group in GROUPS:
        total = math.fsum(cells.loc[cells["group"] == group, "weight"])
        left = math.fsum(kept.loc[kept["group"] == group, "weight"])
        excluded[group] = (total - left) / total
    if len(kept) < len(cells):
        logger.warning(
            "Oaxaca-Blinder restricted to categories present in both groups; excluded weight "
            + ", ".join(f"{g} {excluded[g]:.2%}" for g in GROUPS)
        )

    restricted = []
    ref_cells = kept[kept["group"] == reference_group]
    for block in blocks.blocks:
        present = set(kept[block.name].astype(str))
        categories = [c for c in block.categories if c in present]
        reference = block.reference
        if reference not in present:
            mass = ref_cells.groupby(ref_cells[block.name].astype(str))["weight"].sum().reset_index()
            mass = mass.sort_values(["weight", block.name], ascending=[False, True], kind="mergesort")
            reference = str(mass[block.name].iloc[0])
        restricted.append(block.model_copy(update={"categories": categories, "reference": reference}))
    return SharedSupport(cells=kept, blocks=CovariateBlocks(blocks=restricted), excluded=excluded)


class GroupDesign(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    group: str
    matrix: sp.csr_matrix
    outcomes: np.ndarray
    weights: np.ndarray
    x_mean: np.ndarray
    y_mean: float


class Design(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    blocks: CovariateBlocks
    columns: List[Tuple[str, str]]
    groups: Dict[str, GroupDesign]


def _dummies(cells: pd.DataFrame, blocks: CovariateBlocks) -> sp.csr_matrix:
    rows, cols = [], []
    offset = 0
    for block in blocks.blocks:
        values = cells[block.name].astype(str)
        codes = pd.Categorical(values, categories=block.categories).codes
        if (codes < 0).any():
            bad = values[codes < 0].iloc[0]
            raise UnknownCategory(f"{bad!r} is not a category of block {block.name}")
        ref = block.categories.index(block.reference)
        # category position -> column position, reference removed
        position = np.arange(len(block.categories)) - (np.arange(len(block.categories)) > ref)
        keep = codes != ref
        rows.append(np.nonzero(keep)[0])
        cols.append(offset + position[codes[keep]])
        offset += len(block.categories) - 1
    row = np.concatenate(rows) if rows else np.array([], dtype=int)
    col = np.concatenate(cols) if cols else np.array([], dtype=int)
    data = np.ones(len(row))
    return sp.csr_matrix((data, (row, col)), shape=(len(cells), offset))


def build_design(cells: pd.DataFrame, blocks: CovariateBlocks) -> Design:
    """Dummy-encode both groups and compute weighted covariate and outcome means."""
    groups = {}
    for group in GROUPS:
        subset = cells[cells["group"] == group]
        if subset.empty:
            raise EmptyGroup(f"No {group} cells")
        weights = subset["weight"].to_numpy(dtype=float)
        if (weights <= 0).any():
            raise InputFormatError(f"{group} cells need positive weights")
        outcomes = subset["outcome"].to_numpy(dtype=float)
        matrix = _dummies(subset, blocks)
        total = math.fsum(weights)
        groups[group] = GroupDesign(
            group=group,
            matrix=matrix,
            outcomes=outcomes,
            weights=weights,
            x_mean=np.asarray(matrix.T @ weights).ravel() / total,
            y_mean=math.fsum(weights * outcomes) / total,
        )
    return Design(blocks=blocks, columns=blocks.columns(), groups=groups)


class WlsFit(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    intercept: float
    coefficients: np.ndarray
    dropped: List[int] = Field(default_factory=list)
    condition: float = 1.0


def _pivoted_cholesky(gram: np.ndarray, tolerance: float) -> Tuple[np.ndarray, List[int], List[int]]:
    """Column-by-column Cholesky that skips columns whose residual pivot is below tolerance."""
    n = gram.shape[0]
    factor = np.zeros((n, n))
    retained: List[int] = []
    dropped: List[int] = []
    for j in range(n):
        r = len(retained)
        row = factor[j, :r]
        pivot = gram[j, j] - row @ row
        if pivot <= tolerance:
            dropped.append(j)
            continue
        root = math.sqrt(pivot)
        factor[j, r] = root
        if j + 1 < n:
            factor[j + 1 :, r] = (gram[j + 1 :, j] - factor[j + 1 :, :r] @ row) / root
        retained.append(j)
    return factor, retained, dropped


def wls_fit(design: "sp.spmatrix | np.ndarray", outcomes: np.ndarray, weights: np.ndarray) -> WlsFit:
    """Weighted least squares with an intercept; collinear columns get coefficient 0."""
    outcomes = np.asarray(outcomes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if len(outcomes) == 0:
        raise DegenerateSystem("No observations to fit")
    x = sp.csr_matrix(design)
    k = x.shape[1]

    wx = sp.csr_matrix(x.multiply(weights[:, None]))
    gram = np.empty((k + 1, k + 1))
    gram[0, 0] = math.fsum(weights)
    cross = np.asarray(wx.sum(axis=0)).ravel()
    gram[0, 1:] = cross
    gram[1:, 0] = cross
    gram[1:, 1:] = (x.T @ wx).toarray()
    rhs = np.empty(k + 1)
    rhs[0] = math.fsum(weights * outcomes)
    rhs[1:] = np.asarray(x.T @ (weights * outcomes)).ravel()

    tolerance = PIVOT_TOLERANCE * float(np.max(np.diag(gram)))
    factor, retained, dropped = _pivoted_cholesky(gram, tolerance)
    if not retained:
        raise DegenerateSystem("Every column is degenerate")
    lower = factor[np.ix_(retained, range(len(retained)))]
    solution = scipy.linalg.cho_solve((lower, True), rhs[retained])

    beta = np.zeros(k + 1)
    beta[retained] = solution
    pivots = np.diag(lower) ** 2
    if dropped:
        logger.debug(f"Dropped {len(dropped)} collinear columns of {k + 1}")
    return WlsFit(
        intercept=float(beta[0]),
        coefficients=beta[1:],
        dropped=[j - 1 for j in dropped],
        condition=float(pivots.max() / pivots.min()),
    )


class ObResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    group_a: str
    group_b: str
    mean_a: float
    mean_b: float
    explained: float
    unexplained: float
    blocks: Dict[str, float]
    n_columns: int
    dropped: Dict[str, List[str]] = Field(default_factory=dict)
    condition: Dict[str, float] = Field(default_factory=dict)
    excluded: Dict[str, float] = Field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.mean_b - self.mean_a


def block_contributions(design: Design, fit_a: WlsFit, group_a: str, group_b: str) -> Dict[str, float]:
    """Explained component summed over each block's dummy columns."""
    delta = design.groups[group_b].x_mean - design.groups[group_a].x_mean
    terms = delta * fit_a.coefficients
    out: Dict[str, float] = {}
    start = 0
    for block in design.blocks.blocks:
        width = len(block.categories) - 1
        out[block.name] = math.fsum(terms[start : start + width])
        start += width
    return out


def ob_twofold(cells: pd.DataFrame, blocks: CovariateBlocks, reference_group: str = PRE_GPT) -> ObResult:
    group_a = reference_group
    group_b = POST_GPT if reference_group == PRE_GPT else PRE_GPT
    support = shared_support(cells, blocks, group_a)
    design = build_design(support.cells, support.blocks)
    a, b = design.groups[group_a], design.groups[group_b]

    with ThreadPoolExecutor(max_workers=2) as executor:
        fit_a, fit_b = executor.map(lambda g: wls_fit(g.matrix, g.outcomes, g.weights), [a, b])

    explained = math.fsum((b.x_mean - a.x_mean) * fit_a.coefficients)
    unexplained = (fit_b.intercept - fit_a.intercept) + math.fsum(
        b.x_mean * (fit_b.coefficients - fit_a.coefficients)
    )
    names = [f"{block}={category}" for block, category in design.columns]
    return ObResult(
        group_a=group_a,
        group_b=group_b,
        mean_a=a.y_mean,
        mean_b=b.y_mean,
        explained=explained,
        unexplained=unexplained,
        blocks=block_contributions(design, fit_a, group_a, group_b),
        n_columns=len(design.columns),
        dropped={
            group_a: [names[j] for j in fit_a.dropped if j >= 0],
            group_b: [names[j] for j in fit_b.dropped if j >= 0],
        },
        condition={group_a: fit_a.condition, group_b: fit_b.condition},
        excluded=support.excluded,
    )


def assign_group(posted: pd.Series, cutoff: date) -> pd.Series:
    """Postings dated on or after the cutoff are PostGpt."""
    return pd.Series(
        np.where(pd.to_datetime(posted) >= pd.Timestamp(cutoff), POST_GPT, PRE_GPT), index=posted.index
    )


def build_ob_cells(
    postings: pd.DataFrame,
    blocks: Sequence[str],
    cutoff: date = date(2022, 12, 1),
    index_choice: IndexChoice = "beta",
) -> pd.DataFrame:
    """Cell table keyed on every block column plus group: weight = posting count, outcome = mean index."""
    frame = normalize_cells(postings)
    frame["outcome"] = index_series(frame, index_choice)
    frame["group"] = assign_group(frame["posted"], cutoff)
    for name in blocks:
        if name not in frame.columns:
            frame[name] = UNKNOWN_CATEGORY
        frame[name] = frame[name].fillna(UNKNOWN_CATEGORY).astype(str)
    cells = (
        frame.groupby(list(blocks) + ["group"], sort=True)
        .agg(weight=("outcome", "size"), outcome=("outcome", "mean"))
        .reset_index()
    )
    logger.info(f"Built {len(cells)} Oaxaca-Blinder cells over blocks {', '.join(blocks)}")
    return cells


def ob_by_group(
    cells: pd.DataFrame, blocks: CovariateBlocks, column: str = "seniority", reference_group: str = PRE_GPT
) -> Dict[str, ObResult]:
    """One decomposition per value of ``column``, with that block removed."""
    names = [n for n in blocks.names if n != column]
    out: Dict[str, ObResult] = {}
    for value in sorted(cells[column].astype(str).unique()):
        subset = cells[cells[column].astype(str) == value]
        if set(subset["group"]) != set(GROUPS):
            logger.warning(f"{column}={value} lacks one of the groups; skipped")
            continue
        out[value] = ob_twofold(subset, CovariateBlocks.infer(subset, names, reference_group), reference_group)
    return out


def sorted_blocks(result: ObResult) -> List[Tuple[str, float]]:
    """Block contributions ordered by absolute size, largest first."""
    return sorted(result.blocks.items(), key=lambda item: (-abs(item[1]), item[0]))
