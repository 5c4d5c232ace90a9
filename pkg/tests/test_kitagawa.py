import math
from typing import List, Tuple

import numpy as np
import pandas as pd
import pytest

from conftest import make_panel

from ai_exposure.analysis import kitagawa
from ai_exposure.analysis.panel import PANEL_COLUMNS, CellPanel, build_panel
from ai_exposure.domain.posting import SENIORITY_ORDER, quarter_range
from ai_exposure.exceptions import (
    AllZeroComponents,
    ConfigurationError,
    EmptyBalancedSet,
    SectorMissingInBaseline,
)
from ai_exposure.synth.oracle import oracle_decompose
from ai_exposure.synth.scenario import Drift, ScenarioSpec, generate


def test_hand_instance(two_cell_panel):
    result = kitagawa.threefold(two_cell_panel, "2021", "2023Q3")
    assert result.total == pytest.approx(-0.08, abs=1e-12)
    assert result.composition == pytest.approx(-0.04, abs=1e-12)
    assert result.within == pytest.approx(0.0, abs=1e-12)
    assert result.interaction == pytest.approx(-0.04, abs=1e-12)
    assert abs(result.reconstruction_gap) < 1e-12
    assert result.diagnostics.m_cur == pytest.approx(1.0)


def test_twofold_splits_interaction(two_cell_panel):
    result = kitagawa.twofold_symmetric(two_cell_panel, "2021", "2023Q3")
    assert result.composition == pytest.approx(-0.06, abs=1e-12)
    assert result.within == pytest.approx(-0.02, abs=1e-12)
    assert result.composition + result.within == pytest.approx(result.total, abs=1e-12)


def test_sign_patterns(two_cell_panel):
    breakdown = kitagawa.sign_patterns(two_cell_panel, "2021", "2023Q3")
    assert breakdown.neg_pos == pytest.approx(-0.02, abs=1e-12)
    assert breakdown.pos_neg == pytest.approx(-0.02, abs=1e-12)
    assert breakdown.pos_pos == 0.0
    assert breakdown.neg_neg == 0.0
    assert breakdown.interaction == pytest.approx(-0.04, abs=1e-12)


def test_counterfactual_paths(two_cell_panel):
    (path,) = kitagawa.counterfactual_paths(two_cell_panel, "2021", ["2023Q3"])
    assert path.baseline_level == pytest.approx(0.3)
    assert path.observed == pytest.approx(0.22)
    assert path.composition_only == pytest.approx(0.26)
    assert path.within_only == pytest.approx(0.3)


def test_relative_contributions(two_cell_panel):
    results = kitagawa.decompose_all(two_cell_panel, "2021")
    assert [r.period for r in results] == ["2023Q3"]
    shares = kitagawa.relative_contributions(results, "2023Q3")
    assert shares.composition == pytest.approx(50.0)
    assert shares.within == pytest.approx(0.0)
    assert shares.interaction == pytest.approx(50.0)
    with pytest.raises(AllZeroComponents):
        kitagawa.relative_contributions(results, "2024Q1")


def test_unchanged_market_has_no_movement():
    panel = make_panel(
        [("A", "51", "2021", 0.4, 0.3), ("B", "51", "2021", 0.6, 0.5)]
        + [("A", "51", "2022Q1", 0.4, 0.3), ("B", "51", "2022Q1", 0.6, 0.5)]
    )
    results = kitagawa.decompose_all(panel, "2021")
    with pytest.raises(AllZeroComponents):
        kitagawa.relative_contributions(results, "2022Q1")
    assert kitagawa.per_period_contributions(results).empty


def _random_panel(rng: np.random.Generator, n_cells: int = 12, periods=("2021", "2023Q1", "2023Q2")) -> CellPanel:
    rows = []
    for period in periods:
        present = rng.uniform(size=n_cells) < 0.8
        present[0] = True
        shares = rng.uniform(0.1, 1.0, n_cells) * present
        shares /= shares.sum()
        for i in np.nonzero(present)[0]:
            rows.append((f"occ{i}", "Intermediate", f"{51 + i % 3}", period, 10.0, shares[i], rng.uniform()))
    return CellPanel(pd.DataFrame(rows, columns=PANEL_COLUMNS))


@pytest.mark.parametrize("seed", range(25))
def test_identities_hold_on_random_panels(seed):
    rng = np.random.default_rng(seed)
    panel = _random_panel(rng)
    for t in ("2023Q1", "2023Q2"):
        three = kitagawa.threefold(panel, "2021", t)
        assert three.composition + three.within + three.interaction == pytest.approx(three.total, abs=1e-12)
        assert three.diagnostics.residual == pytest.approx(
            three.diagnostics.raw_total_change - three.diagnostics.renorm_total_change, abs=1e-12
        )
        assert three.total == pytest.approx(three.diagnostics.renorm_total_change, abs=1e-12)

        two = kitagawa.twofold_symmetric(panel, "2021", t)
        assert two.composition + two.within == pytest.approx(two.total, abs=1e-12)
        assert two.composition == pytest.approx(three.composition + three.interaction / 2, abs=1e-12)

        signs = kitagawa.sign_patterns(panel, "2021", t)
        buckets = signs.neg_pos + signs.pos_neg + signs.pos_pos + signs.neg_neg + signs.zero_change
        assert buckets == pytest.approx(signs.interaction, abs=1e-12)
        assert signs.interaction == pytest.approx(three.interaction, abs=1e-12)


def _wide_panel(rng: np.random.Generator, n_cells: int, n_quarters: int) -> Tuple[CellPanel, List[str]]:
    quarters = [p.label for p in quarter_range("2022Q1", n_quarters)]
    occupations = np.array([f"occ{i:03d}" for i in range(n_cells)])
    industries = np.array([f"{51 + i % 7}" for i in range(n_cells)])
    frames = []
    for period in ["2021", *quarters]:
        present = rng.uniform(size=n_cells) < 0.85
        present[0] = True
        shares = rng.uniform(0.01, 1.0, n_cells)[present]
        frames.append(
            pd.DataFrame(
                {
                    "occupation": occupations[present],
                    "seniority": "Intermediate",
                    "industry": industries[present],
                    "period": period,
                    "count": 25.0,
                    "share": shares / shares.sum(),
                    "mean_exposure": rng.uniform(size=present.sum()),
                }
            )[PANEL_COLUMNS]
        )
    return CellPanel(pd.concat(frames, ignore_index=True)), quarters


@pytest.mark.slow
def test_identities_hold_at_scale():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        panel, quarters = _wide_panel(rng, int(rng.integers(2, 501)), int(rng.integers(1, 16)))
        for t in quarters:
            three = kitagawa.threefold(panel, "2021", t)
            assert abs(three.composition + three.within + three.interaction - three.total) <= 1e-12
            two = kitagawa.twofold_symmetric(panel, "2021", t)
            assert abs(two.composition - (three.composition + three.interaction / 2)) <= 1e-12
            assert abs(two.within - (three.within + three.interaction / 2)) <= 1e-12
            signs = kitagawa.sign_patterns(panel, "2021", t)
            buckets = signs.neg_pos + signs.pos_neg + signs.pos_pos + signs.neg_neg + signs.zero_change
            assert abs(buckets - signs.interaction) <= 1e-12


def test_balanced_keeps_cells_seen_everywhere():
    panel = make_panel(
        [
            ("A", "51", "2021", 0.5, 0.2),
            ("B", "51", "2021", 0.5, 0.4),
            ("A", "51", "2023Q1", 0.6, 0.3),
            ("B", "51", "2023Q1", 0.4, 0.5),
            ("A", "51", "2023Q2", 1.0, 0.35),
        ]
    )
    assert kitagawa.balanced_cells(panel, "2021", ["2023Q1", "2023Q2"]) == [("A", "Intermediate", "51")]
    results = kitagawa.balanced(panel, "2021", ["2023Q1", "2023Q2"])
    assert [r.total for r in results] == pytest.approx([0.1, 0.15])
    assert all(r.composition == pytest.approx(0.0) for r in results)


def test_balanced_set_can_be_empty():
    panel = make_panel([("A", "51", "2021", 1.0, 0.2), ("B", "51", "2023Q1", 1.0, 0.3), ("A", "51", "2023Q2", 1.0, 0.4)])
    with pytest.raises(EmptyBalancedSet):
        kitagawa.balanced(panel, "2021", ["2023Q1", "2023Q2"])


def test_within_sector_weights_and_missing_sector():
    panel = make_panel(
        [
            ("A", "51", "2021", 0.25, 0.2),
            ("B", "51", "2021", 0.25, 0.4),
            ("C", "62", "2021", 0.5, 0.6),
            ("A", "51", "2023Q1", 0.2, 0.3),
            ("B", "51", "2023Q1", 0.2, 0.4),
            ("C", "62", "2023Q1", 0.6, 0.6),
        ]
    )
    assert kitagawa.sector_weights(panel, "2021") == {"51": 0.5, "62": 0.5}
    result = kitagawa.within_sector(panel, "2021", "2023Q1")
    assert set(result.sectors) == {"51", "62"}
    assert result.sectors["62"].total == pytest.approx(0.0)
    assert result.aggregate.total == pytest.approx(0.5 * result.sectors["51"].total)

    grown = make_panel(
        [("A", "51", "2021", 1.0, 0.2), ("A", "51", "2023Q1", 0.5, 0.3), ("C", "62", "2023Q1", 0.5, 0.6)]
    )
    with pytest.raises(SectorMissingInBaseline):
        kitagawa.within_sector(grown, "2021", "2023Q1")


def test_within_sector_keeps_weights_when_a_sector_exits():
    panel = make_panel(
        [
            ("A", "51", "2021", 0.25, 0.2),
            ("B", "51", "2021", 0.25, 0.4),
            ("C", "62", "2021", 0.5, 0.6),
            ("A", "51", "2023Q1", 0.4, 0.3),
            ("B", "51", "2023Q1", 0.6, 0.4),
        ]
    )
    result = kitagawa.within_sector(panel, "2021", "2023Q1")
    assert result.skipped == ["62"]
    assert result.weights == {"51": 0.5, "62": 0.5}
    inner = result.sectors["51"]
    for name in ("total", "composition", "within", "interaction"):
        assert getattr(result.aggregate, name) == pytest.approx(0.5 * getattr(inner, name), abs=1e-15)


def _truth(drift: Drift):
    return generate(ScenarioSpec(seed=3, drift=drift, postings_per_period=100, n_periods=12)).truth


def test_pure_redesign_has_no_composition_effect():
    truth = _truth(Drift.PURE_REDESIGN)
    for r in kitagawa.decompose_all(truth, "2021"):
        assert abs(r.composition) < 1e-12
        assert abs(r.interaction) < 1e-12


def test_pure_reallocation_has_no_within_effect():
    truth = _truth(Drift.PURE_REALLOCATION)
    results = kitagawa.decompose_all(truth, "2021")
    assert all(abs(r.within) < 1e-12 and abs(r.interaction) < 1e-12 for r in results)
    assert abs(results[-1].composition) > 1e-6


def test_cross_sector_shift_vanishes_within_sectors():
    truth = _truth(Drift.PURE_CROSS_SECTOR)
    last = kitagawa.default_periods(truth, "2021")[-1]
    assert abs(kitagawa.threefold(truth, "2021", last).composition) > 1e-6
    result = kitagawa.within_sector(truth, "2021", last)
    assert abs(result.aggregate.composition) < 1e-9
    assert abs(result.aggregate.within) < 1e-9
    assert abs(result.aggregate.interaction) < 1e-9


def test_engine_matches_oracle_on_sampled_postings(small_spec):
    postings = generate(small_spec).postings
    panel = build_panel(postings)
    for t in ("2021Q4", "2022Q3", "2023Q4"):
        fast = kitagawa.threefold(panel, "2021", t)
        slow = oracle_decompose(postings, "2021", t)
        for name in ("total", "composition", "within", "interaction"):
            assert getattr(fast, name) == pytest.approx(getattr(slow, name), abs=1e-9)


def test_by_seniority_renormalizes_within_strata(small_spec):
    panel = build_panel(generate(small_spec).postings)
    periods = kitagawa.default_periods(panel, "2021")
    strata = kitagawa.by_seniority(panel, "2021", periods)
    assert list(strata) == SENIORITY_ORDER
    for results in strata.values():
        assert all(math.isclose(r.composition + r.within + r.interaction, r.total, abs_tol=1e-12) for r in results)


def test_decompose_all_variants(two_cell_panel):
    twofold = kitagawa.decompose_all(two_cell_panel, "2021", variant="twofold")
    assert twofold[0].interaction == 0.0
    assert twofold[0].composition == pytest.approx(-0.06)
    with pytest.raises(ConfigurationError):
        kitagawa.decompose_all(two_cell_panel, "2021", variant="fourfold")
