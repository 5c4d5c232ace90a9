from typing import List, Sequence, Tuple

import pandas as pd
import pytest

from ai_exposure.analysis.panel import PANEL_COLUMNS, CellPanel
from ai_exposure.domain.exposure import TaskAnnotation
from ai_exposure.domain.posting import PostingInput
from ai_exposure.synth.scenario import ScenarioSpec

PanelRow = Tuple[str, str, str, float, float]  # occupation, industry, period, share, mean


def make_panel(rows: Sequence[PanelRow], seniority: str = "Intermediate") -> CellPanel:
    frame = pd.DataFrame(
        [(occ, seniority, ind, period, 100 * share, share, mean) for occ, ind, period, share, mean in rows],
        columns=PANEL_COLUMNS,
    )
    return CellPanel(frame)


@pytest.fixture
def two_cell_panel() -> CellPanel:
    return make_panel(
        [
            ("A", "51", "2021", 0.5, 0.4),
            ("B", "52", "2021", 0.5, 0.2),
            ("A", "51", "2023Q3", 0.3, 0.5),
            ("B", "52", "2023Q3", 0.7, 0.1),
        ]
    )


@pytest.fixture
def panel_a_tasks() -> List[TaskAnnotation]:
    """Seven specialized tasks and one common task; E1 carries 11/15 of the weight, E2 4/15."""
    groups = ["S1", "S1", "S2", "S2", "S3", "C1", "S4", "S4"]
    labels = ["E1", "E2", "E1", "E1", "E1", "E1", "E2", "E1"]
    return [
        TaskAnnotation.build(f"t{i + 1}", f"Task number {i + 1} done in the regular course of work", g, label)
        for i, (g, label) in enumerate(zip(groups, labels))
    ]


@pytest.fixture
def posting() -> PostingInput:
    return PostingInput(
        posting_id="p1",
        title="Data Analyst",
        body=(
            "Build weekly dashboards that summarize regional sales performance for managers. "
            "Clean and reconcile transaction data from the billing and order systems. "
            "Present findings on customer churn to the leadership team every quarter."
        ),
        specialized_skills=["SQL", "Tableau", "Python"],
        common_skills=["Communication", "Excel"],
        occupation="15-2051.00",
        seniority="Junior",
        industry="541511",
        posted="2023-08-14",
    )


@pytest.fixture
def small_spec() -> ScenarioSpec:
    return ScenarioSpec(
        seed=7,
        sectors=["51", "54"],
        occupations_per_sector=2,
        n_periods=12,
        postings_per_period=400,
    )


@pytest.fixture
def postings_frame() -> pd.DataFrame:
    """Hand-built exposure table over two periods of 2021 and one quarter of 2023."""
    rows = [
        ("a1", "11-1011.00", "Senior", "5415", "2021-02-01", 0.2),
        ("a2", "11-1011.00", "Senior", "5415", "2021-08-01", 0.4),
        ("a3", "15-1252.00", "Junior", "5417", "2021-03-01", 0.6),
        ("a4", "15-1252.00", "", "5417", "2021-11-01", 0.8),
        ("a5", "11-1011.00", "Senior", "5415", "2023-07-15", 0.5),
        ("a6", "15-1252.00", "Junior", "5417", "2023-08-15", 0.7),
        ("a7", "15-1252.00", "Junior", "5417", "2023-09-15", 0.9),
        ("a8", "43-4051.00", "Junior", "5611", "2023-09-20", 0.1),
    ]
    frame = pd.DataFrame(rows, columns=["posting_id", "occupation", "seniority", "industry", "posted", "beta"])
    frame["share_e2"] = 0.0
    frame["share_e1"] = frame["beta"]
    frame["share_e0"] = 1.0 - frame["beta"]
    frame["alpha"] = frame["beta"]
    frame["gamma"] = frame["beta"]
    return frame
