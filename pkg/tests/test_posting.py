from datetime import date

import pandas as pd
import pytest

from ai_exposure.domain.posting import (
    CellKey,
    PeriodId,
    PeriodKind,
    PostingInput,
    naics2,
    normalize_seniority,
    period_labels,
    period_of,
    quarter_range,
)
from ai_exposure.exceptions import InvalidInputError


def test_period_labels_round_trip():
    for label in ("2021", "2022H2", "2023Q3"):
        assert PeriodId.parse(label).label == label
    assert PeriodId.parse("2023q1").label == "2023Q1"


def test_period_bounds():
    q = PeriodId.parse("2023Q4")
    assert q.start == date(2023, 10, 1)
    assert q.end == date(2024, 1, 1)
    assert q.contains(date(2023, 12, 31))
    assert not q.contains(date(2024, 1, 1))
    year = PeriodId.parse("2021")
    assert year.months == 12
    assert year.contains(date(2021, 6, 30))


@pytest.mark.parametrize("label", ["2021Q5", "2021H3", "21Q1", "2021-Q1", ""])
def test_bad_period_labels(label):
    with pytest.raises(InvalidInputError):
        PeriodId.parse(label)


def test_period_of_and_labels_agree():
    days = [date(2021, 1, 1), date(2021, 6, 30), date(2022, 7, 1), date(2023, 12, 31)]
    labels = period_labels(pd.Series(pd.to_datetime(days)), PeriodKind.QUARTER)
    assert list(labels) == [period_of(d, PeriodKind.QUARTER).label for d in days]
    halves = period_labels(pd.Series(pd.to_datetime(days)), PeriodKind.HALF_YEAR)
    assert list(halves) == ["2021H1", "2021H1", "2022H2", "2023H2"]


def test_quarter_range_crosses_years():
    labels = [p.label for p in quarter_range("2021Q3", 4)]
    assert labels == ["2021Q3", "2021Q4", "2022Q1", "2022Q2"]


def test_seniority_defaults_to_intermediate():
    assert normalize_seniority(None) == "Intermediate"
    assert normalize_seniority("") == "Intermediate"
    assert normalize_seniority("senior") == "Senior"
    with pytest.raises(InvalidInputError):
        normalize_seniority("Principal")


def test_industry_truncates_to_two_digits():
    assert naics2("541511") == "54"
    assert naics2(62) == "62"
    with pytest.raises(InvalidInputError):
        naics2("5")


def test_posting_cell(posting):
    cell = posting.cell()
    assert cell == CellKey(occupation="15-2051.00", seniority="Junior", industry="54")
    assert cell.as_tuple() == ("15-2051.00", "Junior", "54")
    assert posting.posted == date(2023, 8, 14)


def test_posting_without_cell_fields():
    with pytest.raises(InvalidInputError):
        PostingInput(posting_id="x").cell()
