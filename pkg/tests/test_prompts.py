from ai_exposure.ai.prompts import (
    INPUT_MARKER,
    STAGE1_PROMPT,
    STAGE2_PROMPT,
    prompt_input,
    render_stage1_prompt,
    render_stage2_prompt,
)
from ai_exposure.domain.annotation import ExtractedTask, SkillGroup, Stage1Output
from ai_exposure.domain.exposure import SkillKind
from ai_exposure.domain.posting import PostingInput


def test_stage1_prompt_carries_posting_fields(posting):
    prompt = render_stage1_prompt(posting)
    assert prompt.startswith(STAGE1_PROMPT)
    assert INPUT_MARKER in prompt
    data = prompt_input(prompt)
    assert data == {
        "ID": "p1",
        "TITLE_NAME": "Data Analyst",
        "BODY": posting.body,
        "SPECIALIZED_SKILLS_NAME": ["SQL", "Tableau", "Python"],
        "COMMON_SKILLS_NAME": ["Communication", "Excel"],
    }


def test_stage1_prompt_keeps_non_ascii_text():
    prompt = render_stage1_prompt(PostingInput(posting_id="p2", title="Café manager", body="Gérer l'équipe."))
    assert "Café manager" in prompt
    assert "Gérer" in prompt


def test_stage1_prompt_is_stable(posting):
    assert render_stage1_prompt(posting) == render_stage1_prompt(posting)


def test_stage2_prompt_lists_tasks():
    stage1 = Stage1Output(
        posting_id="p1",
        skill_groups=[SkillGroup(group_id="S1", skills=["SQL"], kind=SkillKind.SPECIALIZED)],
        tasks=[
            ExtractedTask(task_id="t1", text="Write reporting queries", skill_group_id="S1"),
            ExtractedTask(task_id="t2", text="Tune slow queries", skill_group_id="S1"),
        ],
    )
    prompt = render_stage2_prompt(stage1, "Data Analyst")
    assert prompt.startswith(STAGE2_PROMPT)
    assert prompt_input(prompt) == {
        "posting_id": "p1",
        "posting_title": "Data Analyst",
        "tasks": [
            {"task_id": "t1", "task": "Write reporting queries"},
            {"task_id": "t2", "task": "Tune slow queries"},
        ],
    }
