import math

import pytest
from pydantic import ValidationError

from ai_exposure.domain.exposure import (
    ExposureLabel,
    SkillKind,
    SkillMatch,
    TaskAnnotation,
    compute_exposure,
    custom_index,
    index_value,
    index_weight,
    kind_of_group,
    normalize_weights,
)
from ai_exposure.exceptions import EmptyTaskList, InvalidInputError, OutOfRangeWeight


def test_worked_posting_indices(panel_a_tasks):
    exposure = compute_exposure(panel_a_tasks, posting_id="panel-a")
    assert exposure.share_e0 == pytest.approx(0.0, abs=1e-12)
    assert exposure.share_e1 == pytest.approx(11 / 15, abs=1e-12)
    assert exposure.share_e2 == pytest.approx(4 / 15, abs=1e-12)
    assert exposure.alpha == pytest.approx(11 / 15, abs=1e-12)
    assert exposure.gamma == pytest.approx(1.0, abs=1e-12)
    assert exposure.beta == pytest.approx(13 / 15, abs=1e-12)
    assert exposure.n_tasks == 8


def test_raw_weights_follow_skill_kind():
    assert TaskAnnotation.build("t1", "x", "S2", "E0").raw_weight == 2
    assert TaskAnnotation.build("t2", "x", "C1", "E0").raw_weight == 1
    assert TaskAnnotation.build("t3", "x", "NS0", "E0").raw_weight == 1


def test_normalized_weights_sum_to_one(panel_a_tasks):
    weights = normalize_weights(panel_a_tasks)
    assert math.fsum(weights) == pytest.approx(1.0, abs=1e-12)
    assert weights[0] == pytest.approx(2 / 15)
    assert weights[5] == pytest.approx(1 / 15)


def test_empty_task_list_is_rejected():
    with pytest.raises(EmptyTaskList):
        compute_exposure([])


def test_indices_are_ordered(panel_a_tasks):
    exposure = compute_exposure(panel_a_tasks)
    assert exposure.alpha <= exposure.beta <= exposure.gamma
    assert exposure.beta == pytest.approx((exposure.alpha + exposure.gamma) / 2)


def test_unexposed_posting_scores_zero():
    tasks = [TaskAnnotation.build(f"t{i}", "x", "NS0", "E0") for i in range(3)]
    exposure = compute_exposure(tasks)
    assert (exposure.alpha, exposure.beta, exposure.gamma) == (0.0, 0.0, 0.0)
    assert exposure.share_e0 == pytest.approx(1.0)


def test_custom_index_spans_alpha_to_gamma(panel_a_tasks):
    exposure = compute_exposure(panel_a_tasks)
    assert custom_index(exposure, 0.0) == pytest.approx(exposure.alpha)
    assert custom_index(exposure, 0.5) == pytest.approx(exposure.beta)
    assert custom_index(exposure, 1.0) == pytest.approx(exposure.gamma)
    assert index_value(exposure, 0.25) == pytest.approx(11 / 15 + 0.25 * 4 / 15)
    assert index_value(exposure, "gamma") == exposure.gamma


@pytest.mark.parametrize("weight", [-0.1, 1.5])
def test_custom_index_rejects_out_of_range_weight(panel_a_tasks, weight):
    with pytest.raises(OutOfRangeWeight):
        custom_index(compute_exposure(panel_a_tasks), weight)


def test_index_weight_names():
    assert index_weight("alpha") == 0.0
    assert index_weight("beta") == 0.5
    assert index_weight("gamma") == 1.0
    with pytest.raises(InvalidInputError):
        index_weight("delta")


def test_group_prefixes():
    assert kind_of_group("S12") == SkillKind.SPECIALIZED
    assert kind_of_group("C3") == SkillKind.COMMON
    assert kind_of_group("NS0") == SkillKind.NO_SKILLS
    for bad in ("X1", "S", "NS1"):
        with pytest.raises(InvalidInputError):
            kind_of_group(bad)


def test_task_weight_must_match_skill():
    with pytest.raises(ValidationError):
        TaskAnnotation(
            task_id="t1",
            text="x",
            skill=SkillMatch.from_group_id("S1"),
            raw_weight=1,
            label=ExposureLabel.E1,
        )
