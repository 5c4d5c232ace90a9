import pandas as pd
import pytest

from ai_exposure.analysis import kitagawa
from ai_exposure.analysis.oaxaca import ObResult
from ai_exposure.report import svg, tables


def test_write_table_rounds_and_keeps_raw(tmp_path):
    frame = pd.DataFrame({"period": ["2023Q3"], "total": [-0.0812345678]})
    path = tables.write_table(frame, tmp_path / "out" / "decomposition.csv")
    assert path.read_text(encoding="utf-8") == "period,total\n2023Q3,-0.0812\n"
    raw = pd.read_csv(tmp_path / "out" / "decomposition.raw.csv")
    assert raw["total"].item() == pytest.approx(-0.0812345678, abs=1e-15)


def test_decomposition_frame(two_cell_panel):
    frame = tables.decomposition_frame(kitagawa.decompose_all(two_cell_panel, "2021"))
    assert list(frame.columns)[:5] == ["period", "total", "composition", "within", "interaction"]
    assert frame["total"].item() == pytest.approx(-0.08)


def test_decomposition_chart_marks_every_value(two_cell_panel):
    panel = two_cell_panel
    results = kitagawa.decompose_all(panel, "2021")
    text = svg.decomposition_chart(results).get_svg()
    assert text.startswith("<svg")
    assert text.rstrip().endswith("</svg>")
    assert text.count('class="composition"') == len(results)
    assert text.count('class="total"') == len(results)
    assert 'data-value="-0.04"' in text
    assert text == svg.decomposition_chart(results).get_svg()


def test_block_chart(tmp_path):
    result = ObResult(
        group_a="PreGpt",
        group_b="PostGpt",
        mean_a=0.2,
        mean_b=0.3,
        explained=0.04,
        unexplained=0.06,
        blocks={"occupation": 0.05, "remote": -0.01},
        n_columns=3,
    )
    path = svg.block_chart(result).write(tmp_path / "ob_blocks.svg")
    text = path.read_text(encoding="utf-8")
    assert text.count('class="block"') == 2
    assert text.index('data-block="occupation"') < text.index('data-block="remote"')


@pytest.mark.parametrize("low,high", [(-0.08, 0.0), (0.0, 0.37), (-1.2, 3.4), (0.0, 0.0)])
def test_nice_ticks_cover_the_range(low, high):
    ticks = svg.nice_ticks(low, high)
    assert ticks[0] <= low
    assert ticks[-1] >= high
    assert ticks == sorted(ticks)
