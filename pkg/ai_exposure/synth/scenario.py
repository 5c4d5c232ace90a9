"""Synthetic labor markets with known decomposition structure.

Every cell starts from a baseline share and mean exposure. A drift process
moves shares, exposures or both along the quarterly grid, and postings are
drawn from the resulting cell distribution. The ground-truth panel holds the
expected shares and exposures, so identities that hold by construction
(for example no composition effect under pure redesign) hold exactly there.
"""

import itertools
import math
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import humanize
import numpy as np
import pandas as pd
import yaml
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ai_exposure.analysis.panel import PANEL_COLUMNS, CellPanel
from ai_exposure.domain.posting import SENIORITY_ORDER, PeriodId, PeriodKind, quarter_range
from ai_exposure.exceptions import ConfigurationError, InfeasibleSpec
from ai_exposure.processing.exposure import EXPOSURE_COLUMNS
from ai_exposure.storage.repository import write_frame

STATES = ["CA", "NY", "TX", "WA", "IL", "FL"]
REMOTE = (["NotRemote", "Hybrid", "Remote"], [0.7, 0.2, 0.1])
INTERNSHIP = (["NonIntern", "Intern"], [0.95, 0.05])
EMPLOYMENT = (["FullTime", "PartTime", "PartFull"], [0.85, 0.1, 0.05])
# floor on per-cell share multipliers; every cell keeps positive mass
MIN_SHARE_SCALE = 0.1


class Drift(str, Enum):
    NONE = "None"
    LINEAR = "LinearDrift"
    STEP = "StepAt"
    PURE_CROSS_SECTOR = "PureCrossSector"
    PURE_REDESIGN = "PureRedesign"
    PURE_REALLOCATION = "PureReallocation"


class ScenarioCell(BaseModel):
    model_config = ConfigDict(frozen=True)

    occupation: str
    seniority: str = "Intermediate"
    industry: str
    share: float = Field(ge=0.0)
    exposure: float = Field(ge=0.0, le=1.0)


class ScenarioSpec(BaseModel):
    """Knobs of one synthetic market; read from a YAML file."""

    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    sectors: List[str] = Field(default_factory=lambda: ["51", "54", "62"])
    occupations_per_sector: int = Field(default=4, ge=1)
    seniorities: List[str] = Field(default_factory=lambda: list(SENIORITY_ORDER))
    cells: Optional[List[ScenarioCell]] = None

    first_period: str = "2021Q1"
    n_periods: int = Field(default=16, ge=1)
    pooled: List[str] = Field(default_factory=lambda: ["2021"])
    postings_per_period: int = Field(default=2000, ge=0)

    drift: Drift = Drift.LINEAR
    step_at: Optional[str] = None
    share_drift: float = 0.5
    exposure_drift: float = 0.1
    noise: float = Field(default=0.1, ge=0.0, lt=1.0)
    e2_split: float = Field(default=0.5, ge=0.0, le=1.0)

    @field_validator("first_period", "step_at")
    @classmethod
    def _quarter(cls, value: Optional[str]) -> Optional[str]:
        if value is None:
            return value
        period = PeriodId.parse(value)
        if period.kind != PeriodKind.QUARTER:
            raise ValueError(f"{value} is not a quarter")
        return period.label

    @model_validator(mode="after")
    def _step_needs_period(self) -> "ScenarioSpec":
        if self.drift == Drift.STEP and self.step_at is None:
            raise ValueError("StepAt drift needs step_at")
        return self

    @classmethod
    def load(cls, path: Path) -> "ScenarioSpec":
        try:
            with open(path, "r") as file:
                data = yaml.safe_load(file) or {}
        except FileNotFoundError:
            raise ConfigurationError(f"Scenario file not found: {path}")
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Scenario file {path} is not valid YAML: {e}")
        try:
            return cls(**data)
        except ValidationError as e:
            first = e.errors()[0]
            raise ConfigurationError(f"{path}: {'.'.join(str(p) for p in first['loc'])}: {first['msg']}")

    def periods(self) -> List[PeriodId]:
        return quarter_range(self.first_period, self.n_periods)


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    spec: ScenarioSpec
    postings: pd.DataFrame
    truth: CellPanel
    shares: np.ndarray
    exposures: np.ndarray
    keys: List[Tuple[str, str, str]]


def _baseline_cells(spec: ScenarioSpec, rng: np.random.Generator) -> Tuple[List[Tuple[str, str, str]], np.ndarray, np.ndarray]:
    if spec.cells:
        keys = [(c.occupation, c.seniority, c.industry) for c in spec.cells]
        shares = np.array([c.share for c in spec.cells], dtype=float)
        exposures = np.array([c.exposure for c in spec.cells], dtype=float)
    else:
        keys = [
            (f"{sector}-{i + 1:04d}.00", seniority, sector)
            for sector, i, seniority in itertools.product(
                spec.sectors, range(spec.occupations_per_sector), spec.seniorities
            )
        ]
        shares = rng.uniform(0.5, 1.5, len(keys))
        exposures = rng.uniform(0.05, 0.8, len(keys))
    if len(keys) == 0 or not np.isfinite(shares).all() or shares.sum() <= 0:
        raise InfeasibleSpec("Scenario has no cell with positive share")
    if len(set(keys)) != len(keys):
        raise InfeasibleSpec("Scenario cells must be unique")
    return keys, shares / shares.sum(), exposures


def _progress(spec: ScenarioSpec, periods: List[PeriodId]) -> np.ndarray:
    if spec.drift == Drift.STEP:
        step = PeriodId.parse(spec.step_at).start
        return np.array([1.0 if p.start >= step else 0.0 for p in periods])
    if len(periods) == 1:
        return np.zeros(1)
    return np.arange(len(periods)) / (len(periods) - 1)


def _paths(spec: ScenarioSpec, keys, shares, exposures, rng) -> Tuple[np.ndarray, np.ndarray]:
    """Per-period share and exposure matrices, shape (periods, cells)."""
    periods = spec.periods()
    s = _progress(spec, periods)[:, None]
    share_move = rng.normal(size=len(keys))
    exposure_move = rng.normal(size=len(keys))
    sectors = sorted({k[2] for k in keys})
    sector_move = dict(zip(sectors, rng.normal(size=len(sectors))))

    drift = spec.drift
    moves_shares = drift in (Drift.LINEAR, Drift.STEP, Drift.PURE_REALLOCATION)
    moves_exposures = drift in (Drift.LINEAR, Drift.STEP, Drift.PURE_REDESIGN)

    weights = np.tile(shares, (len(periods), 1))
    if moves_shares:
        weights = weights * np.clip(1.0 + spec.share_drift * share_move * s, MIN_SHARE_SCALE, None)
    elif drift == Drift.PURE_CROSS_SECTOR:
        factor = np.array([sector_move[k[2]] for k in keys])
        weights = weights * np.clip(1.0 + spec.share_drift * factor * s, MIN_SHARE_SCALE, None)
    weights = weights / weights.sum(axis=1, keepdims=True)

    means = np.tile(exposures, (len(periods), 1))
    if moves_exposures:
        means = np.clip(means + spec.exposure_drift * exposure_move * s, 0.0, 1.0)
    return weights, means


def _truth_panel(spec: ScenarioSpec, keys, weights: np.ndarray, means: np.ndarray) -> CellPanel:
    periods = spec.periods()
    rows = []
    for i, period in enumerate(periods):
        for j, key in enumerate(keys):
            if weights[i, j] > 0:
                rows.append((*key, period.label, spec.postings_per_period * weights[i, j], weights[i, j], means[i, j]))
    for label in spec.pooled:
        pool = PeriodId.parse(label)
        inside = [i for i, p in enumerate(periods) if pool.start <= p.start and p.end <= pool.end]
        if not inside:
            continue
        mass = weights[inside].sum(axis=0)
        total = mass.sum()
        for j, key in enumerate(keys):
            if mass[j] > 0:
                mean = math.fsum(weights[i, j] * means[i, j] for i in inside) / mass[j]
                rows.append((*key, pool.label, spec.postings_per_period * mass[j], mass[j] / total, mean))
    return CellPanel(pd.DataFrame(rows, columns=PANEL_COLUMNS))


def _draw_postings(spec: ScenarioSpec, keys, weights, means, rng: np.random.Generator) -> pd.DataFrame:
    periods = spec.periods()
    frames = []
    for i, period in enumerate(periods):
        counts = rng.multinomial(spec.postings_per_period, weights[i])
        cell = np.repeat(np.arange(len(keys)), counts)
        n = len(cell)
        if n == 0:
            continue
        mean = means[i, cell]
        if spec.noise > 0:
            concentration = 1.0 / spec.noise**2
            a = np.clip(mean * concentration, 1e-9, None)
            b = np.clip((1.0 - mean) * concentration, 1e-9, None)
            beta = np.where((mean > 0) & (mean < 1), rng.beta(a, b), mean)
        else:
            beta = mean
        e2 = spec.e2_split * 2.0 * np.minimum(beta, 1.0 - beta)
        e1 = np.clip(beta - e2 / 2.0, 0.0, 1.0)
        e0 = np.clip(1.0 - e1 - e2, 0.0, 1.0)
        days = (period.end - period.start).days
        posted = pd.Timestamp(period.start) + pd.to_timedelta(rng.integers(0, days, n), unit="D")
        frames.append(
            pd.DataFrame(
                {
                    "occupation": [keys[c][0] for c in cell],
                    "seniority": [keys[c][1] for c in cell],
                    "industry": [keys[c][2] for c in cell],
                    "posted": posted,
                    "state": rng.choice(STATES, n),
                    "remote": rng.choice(REMOTE[0], n, p=REMOTE[1]),
                    "internship": rng.choice(INTERNSHIP[0], n, p=INTERNSHIP[1]),
                    "employment_type": rng.choice(EMPLOYMENT[0], n, p=EMPLOYMENT[1]),
                    "n_tasks": 8,
                    "share_e0": e0,
                    "share_e1": e1,
                    "share_e2": e2,
                    "alpha": e1,
                    "beta": e1 + e2 / 2.0,
                    "gamma": e1 + e2,
                }
            )
        )
    if not frames:
        return pd.DataFrame(columns=EXPOSURE_COLUMNS)
    postings = pd.concat(frames, ignore_index=True)
    postings.insert(0, "posting_id", [f"syn{spec.seed}-{i:07d}" for i in range(len(postings))])
    return postings[EXPOSURE_COLUMNS]


def generate(spec: ScenarioSpec) -> Scenario:
    rng = np.random.default_rng(spec.seed)
    keys, shares, exposures = _baseline_cells(spec, rng)
    weights, means = _paths(spec, keys, shares, exposures, rng)
    truth = _truth_panel(spec, keys, weights, means)
    postings = _draw_postings(spec, keys, weights, means, rng)
    logger.info(
        f"Generated {humanize.intcomma(len(postings))} postings over {len(keys)} cells "
        f"and {spec.n_periods} quarters ({spec.drift.value})"
    )
    return Scenario(spec=spec, postings=postings, truth=truth, shares=weights, exposures=means, keys=keys)


def write_scenario(scenario: Scenario, out_dir: Path) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    return {
        "postings": write_frame(out_dir / "postings_exposure.csv", scenario.postings),
        "truth": scenario.truth.to_csv(out_dir / "truth_panel.csv"),
    }
