import itertools
import time
from datetime import date

import numpy as np
import pandas as pd
import pytest

from ai_exposure.analysis.oaxaca import (
    POST_GPT,
    PRE_GPT,
    Block,
    CovariateBlocks,
    assign_group,
    build_ob_cells,
    ob_by_group,
    ob_twofold,
    shared_support,
    sorted_blocks,
    wls_fit,
)
from ai_exposure.exceptions import EmptyGroup, UnknownCategory
from ai_exposure.synth.oracle import oracle_ob

OCCUPATIONS = ["11-1011.00", "15-1252.00", "43-4051.00"]
REMOTE = ["NotRemote", "Hybrid", "Remote"]
SENIORITY = ["Junior", "Intermediate", "Senior"]


def _cells(seed: int = 0) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    rows = []
    for occupation, remote, seniority, group in itertools.product(OCCUPATIONS, REMOTE, SENIORITY, [PRE_GPT, POST_GPT]):
        shift = 0.1 if group == POST_GPT else 0.0
        outcome = 0.2 + 0.1 * OCCUPATIONS.index(occupation) + 0.05 * REMOTE.index(remote) + shift + rng.normal(0, 0.02)
        rows.append((occupation, remote, seniority, group, float(rng.integers(5, 60)), outcome))
    return pd.DataFrame(rows, columns=["occupation", "remote", "seniority", "group", "weight", "outcome"])


NAMES = ["occupation", "remote", "seniority"]


@pytest.mark.parametrize("seed", range(5))
def test_twofold_identity(seed):
    cells = _cells(seed)
    result = ob_twofold(cells, CovariateBlocks.infer(cells, NAMES))
    assert result.explained + result.unexplained == pytest.approx(result.mean_b - result.mean_a, abs=1e-10)
    assert sum(result.blocks.values()) == pytest.approx(result.explained, abs=1e-10)
    assert result.n_columns == 6
    assert result.dropped == {PRE_GPT: [], POST_GPT: []}


def test_means_are_weighted():
    cells = _cells()
    result = ob_twofold(cells, CovariateBlocks.infer(cells, NAMES))
    pre = cells[cells["group"] == PRE_GPT]
    assert result.mean_a == pytest.approx(np.average(pre["outcome"], weights=pre["weight"]))


def test_matches_dense_oracle():
    cells = _cells(4)
    blocks = CovariateBlocks.infer(cells, NAMES)
    fast = ob_twofold(cells, blocks)
    slow = oracle_ob(cells, blocks)
    assert fast.explained == pytest.approx(slow.explained, abs=1e-8)
    assert fast.unexplained == pytest.approx(slow.unexplained, abs=1e-8)
    for name in NAMES:
        assert fast.blocks[name] == pytest.approx(slow.blocks[name], abs=1e-8)


def test_reference_category_does_not_matter():
    cells = _cells(2)
    blocks = CovariateBlocks.infer(cells, NAMES)
    base = ob_twofold(cells, blocks)
    swapped = ob_twofold(
        cells, blocks.with_references({"occupation": "43-4051.00", "remote": "Remote", "seniority": "Senior"})
    )
    assert swapped.explained == pytest.approx(base.explained, abs=1e-10)
    assert swapped.unexplained == pytest.approx(base.unexplained, abs=1e-10)
    for name in NAMES:
        assert swapped.blocks[name] == pytest.approx(base.blocks[name], abs=1e-10)


def test_reference_must_be_a_category():
    cells = _cells()
    with pytest.raises(UnknownCategory):
        CovariateBlocks.infer(cells, NAMES).with_references({"remote": "Moon"})


def test_duplicate_column_is_dropped():
    cells = _cells(1)
    cells["remote_copy"] = cells["remote"]
    result = ob_twofold(cells, CovariateBlocks.infer(cells, NAMES + ["remote_copy"]))
    plain = ob_twofold(cells, CovariateBlocks.infer(cells, NAMES))
    assert len(result.dropped[PRE_GPT]) == 2
    assert all(name.startswith("remote_copy=") for name in result.dropped[PRE_GPT])
    assert result.blocks["remote_copy"] == 0.0
    assert result.explained == pytest.approx(plain.explained, abs=1e-10)
    assert result.explained + result.unexplained == pytest.approx(result.gap, abs=1e-10)


def test_intercept_only_fit_is_the_weighted_mean():
    y = np.array([0.1, 0.4, 0.7])
    w = np.array([1.0, 2.0, 3.0])
    fit = wls_fit(np.zeros((3, 0)), y, w)
    assert fit.intercept == pytest.approx(np.average(y, weights=w))
    assert fit.coefficients.shape == (0,)


def test_wls_recovers_exact_coefficients():
    x = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [1, 0]], dtype=float)
    y = 0.3 + 0.2 * x[:, 0] - 0.1 * x[:, 1]
    fit = wls_fit(x, y, np.array([1.0, 2.0, 1.0, 3.0, 1.0]))
    assert fit.intercept == pytest.approx(0.3)
    assert list(fit.coefficients) == pytest.approx([0.2, -0.1])


def test_unknown_category_is_rejected():
    cells = _cells()
    blocks = CovariateBlocks(
        blocks=[Block(name="remote", categories=["NotRemote", "Hybrid"], reference="NotRemote")]
    )
    with pytest.raises(UnknownCategory):
        ob_twofold(cells, blocks)


def test_missing_group_is_rejected():
    cells = _cells()
    pre_only = cells[cells["group"] == PRE_GPT]
    with pytest.raises(EmptyGroup):
        ob_twofold(pre_only, CovariateBlocks.infer(pre_only, NAMES))


def test_group_cutoff_is_inclusive():
    posted = pd.Series(pd.to_datetime(["2022-11-30", "2022-12-01", "2023-05-01"]))
    assert list(assign_group(posted, date(2022, 12, 1))) == [PRE_GPT, POST_GPT, POST_GPT]


def test_build_cells_from_postings():
    postings = pd.DataFrame(
        {
            "posting_id": ["a", "b", "c", "d"],
            "occupation": ["X", "X", "Y", "X"],
            "seniority": ["Junior", "Junior", None, "Junior"],
            "industry": ["5415", "5415", "6211", "5415"],
            "posted": ["2022-01-10", "2022-02-10", "2023-01-10", "2023-03-10"],
            "beta": [0.2, 0.4, 0.6, 0.8],
        }
    )
    cells = build_ob_cells(postings, ["occupation", "seniority", "state"], date(2022, 12, 1))
    assert set(cells["state"]) == {"Unknown"}
    pre = cells[cells["group"] == PRE_GPT].iloc[0]
    assert pre["occupation"] == "X"
    assert int(pre["weight"]) == 2
    assert float(pre["outcome"]) == pytest.approx(0.3)
    assert set(cells.loc[cells["occupation"] == "Y", "seniority"]) == {"Intermediate"}


def test_by_group_drops_the_split_block():
    cells = _cells(3)
    results = ob_by_group(cells, CovariateBlocks.infer(cells, NAMES), "seniority")
    assert sorted(results) == sorted(SENIORITY)
    for result in results.values():
        assert "seniority" not in result.blocks
        assert result.explained + result.unexplained == pytest.approx(result.gap, abs=1e-10)


def test_sorted_blocks_by_magnitude():
    cells = _cells()
    result = ob_twofold(cells, CovariateBlocks.infer(cells, NAMES))
    magnitudes = [abs(v) for _, v in sorted_blocks(result)]
    assert magnitudes == sorted(magnitudes, reverse=True)


def _with_new_occupation(seed: int) -> pd.DataFrame:
    cells = _cells(seed)
    rng = np.random.default_rng(100 + seed)
    rows = [
        ("NEW", remote, seniority, POST_GPT, float(rng.integers(5, 60)), 0.9 + rng.normal(0, 0.02))
        for remote, seniority in itertools.product(REMOTE, SENIORITY)
    ]
    return pd.concat([cells, pd.DataFrame(rows, columns=cells.columns)], ignore_index=True)


@pytest.mark.parametrize("seed", range(3))
def test_post_only_category_does_not_move_the_split(seed):
    cells = _with_new_occupation(seed)
    blocks = CovariateBlocks.infer(cells, NAMES)
    assert "NEW" in blocks.block("occupation").categories
    base = ob_twofold(cells, blocks)
    post = cells[cells["group"] == POST_GPT]
    new_share = post.loc[post["occupation"] == "NEW", "weight"].sum() / post["weight"].sum()
    assert base.excluded[POST_GPT] == pytest.approx(new_share, abs=1e-12)
    assert base.excluded[PRE_GPT] == 0.0
    assert base.n_columns == 6

    rng = np.random.default_rng(seed)
    for _ in range(6):
        references = {name: str(rng.choice(blocks.block(name).categories)) for name in NAMES}
        other = ob_twofold(cells, blocks.with_references(references))
        assert other.explained == pytest.approx(base.explained, abs=1e-10)
        assert other.unexplained == pytest.approx(base.unexplained, abs=1e-10)
        for name in NAMES:
            assert other.blocks[name] == pytest.approx(base.blocks[name], abs=1e-10)

    slow = oracle_ob(cells, blocks)
    assert slow.explained == pytest.approx(base.explained, abs=1e-9)
    assert slow.unexplained == pytest.approx(base.unexplained, abs=1e-9)


def test_shared_support_runs_to_a_fixed_point():
    cells = _cells(5)
    extra = pd.DataFrame(
        [
            ("NEW", "Island", "Junior", POST_GPT, 10.0, 0.5),
            (OCCUPATIONS[0], "Island", "Junior", PRE_GPT, 30.0, 0.4),
        ],
        columns=cells.columns,
    )
    cells = pd.concat([cells, extra], ignore_index=True)
    support = shared_support(cells, CovariateBlocks.infer(cells, NAMES))
    assert "NEW" not in set(support.cells["occupation"])
    assert "Island" not in set(support.cells["remote"])
    assert support.blocks.block("remote").categories == sorted(REMOTE)
    pre = cells[cells["group"] == PRE_GPT]
    assert support.excluded[PRE_GPT] == pytest.approx(30.0 / pre["weight"].sum(), abs=1e-12)


def test_shared_support_keeps_a_usable_reference():
    cells = _with_new_occupation(0)
    blocks = CovariateBlocks.infer(cells, NAMES).with_references({"occupation": "NEW"})
    support = shared_support(cells, blocks)
    occupation = support.blocks.block("occupation")
    assert occupation.categories == OCCUPATIONS
    assert occupation.reference in OCCUPATIONS


def _random_ob_cells(rng: np.random.Generator) -> pd.DataFrame:
    occupations = [f"occ{i}" for i in range(int(rng.integers(2, 6)))]
    rows = []
    for group in (PRE_GPT, POST_GPT):
        shift = 0.1 if group == POST_GPT else 0.0
        for i, (occupation, remote, seniority) in enumerate(itertools.product(occupations, REMOTE, SENIORITY)):
            # the first cell of every occupation stays so each category is seen in both groups
            if i % 9 and rng.uniform() < 0.2:
                continue
            outcome = 0.1 * occupations.index(occupation) + 0.05 * REMOTE.index(remote) + shift + rng.normal(0, 0.05)
            rows.append((occupation, remote, seniority, group, float(rng.integers(1, 80)), outcome))
        only = "NEW" if group == POST_GPT else "OLD"
        for remote in REMOTE:
            rows.append((only, remote, "Senior", group, float(rng.integers(1, 80)), rng.uniform()))
    return pd.DataFrame(rows, columns=["occupation", "remote", "seniority", "group", "weight", "outcome"])


@pytest.mark.slow
def test_reference_invariance_at_scale():
    rng = np.random.default_rng(99)
    for _ in range(200):
        cells = _random_ob_cells(rng)
        blocks = CovariateBlocks.infer(cells, NAMES)
        base = ob_twofold(cells, blocks)
        assert base.explained + base.unexplained == pytest.approx(base.gap, abs=1e-10)
        assert base.excluded[PRE_GPT] > 0
        assert base.excluded[POST_GPT] > 0
        for _ in range(20):
            references = {name: str(rng.choice(blocks.block(name).categories)) for name in NAMES}
            other = ob_twofold(cells, blocks.with_references(references))
            assert abs(other.explained - base.explained) <= 1e-10
            assert abs(other.unexplained - base.unexplained) <= 1e-10
            for name in NAMES:
                assert abs(other.blocks[name] - base.blocks[name]) <= 1e-10


@pytest.mark.slow
def test_wide_design_fits_quickly():
    rng = np.random.default_rng(1)
    n = 25_000
    frames = []
    for group in (PRE_GPT, POST_GPT):
        index = np.arange(n)
        frames.append(
            pd.DataFrame(
                {
                    "occupation": np.char.add("occ", (index % 930).astype(str)),
                    "state": np.char.add("st", ((index * 7 + index // 930) % 51).astype(str)),
                    "industry": np.char.add("ind", rng.integers(0, 20, n).astype(str)),
                    "group": group,
                    "weight": rng.integers(1, 40, n).astype(float),
                    "outcome": rng.uniform(size=n),
                }
            )
        )
    cells = pd.concat(frames, ignore_index=True)
    blocks = CovariateBlocks.infer(cells, ["occupation", "state", "industry"])
    started = time.perf_counter()
    result = ob_twofold(cells, blocks)
    elapsed = time.perf_counter() - started
    assert result.n_columns == 998
    assert result.explained + result.unexplained == pytest.approx(result.gap, abs=1e-10)
    assert elapsed < 60
