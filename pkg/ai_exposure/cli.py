import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import humanize
import pandas as pd
from loguru import logger

from ai_exposure import __version__
from ai_exposure.ai.backends import get_backend
from ai_exposure.analysis import describe, kitagawa
from ai_exposure.analysis.oaxaca import CovariateBlocks, build_ob_cells, ob_by_group, ob_twofold
from ai_exposure.analysis.panel import CellPanel, build_panel, dropped_cell_mass, sample_postings
from ai_exposure.config import RunConfig
from ai_exposure.domain.annotation import AnnotationRecord, FailureRecord
from ai_exposure.domain.posting import PostingInput
from ai_exposure.exceptions import AiExposureError, AllZeroComponents, ConfigurationError, InputFormatError
from ai_exposure.processing.annotate import AnnotationPolicy, FailureLog, annotate_batch, merge_outcomes
from ai_exposure.processing.exposure import exposure_table
from ai_exposure.report import svg, tables
from ai_exposure.storage.repository import read_frame, read_records, write_frame, write_records
from ai_exposure.synth.scenario import ScenarioSpec, generate, write_scenario

ANNOTATIONS_FILE = "annotations.jsonl"
FAILURES_FILE = "failures.jsonl"
EXPOSURE_FILE = "exposure.csv"
PANEL_FILE = "panel.csv"
EXPOSURE_REQUIRED = ["posting_id", "occupation", "industry", "posted", "share_e1", "share_e2", "beta"]


def setup_logging(verbose: bool = False) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "INFO", format="{time:YYYY-MM-DD HH:mm:ss} | {level} | {message}")


def _input(config: RunConfig, field: str, default_name: str) -> Path:
    """A configured input path, falling back to the file a previous verb wrote to out_dir."""
    path = getattr(config, field) or config.out_dir / default_name
    if not Path(path).exists():
        raise ConfigurationError(f"{field} does not exist: {path}")
    return Path(path)


def _exposure_frame(config: RunConfig) -> pd.DataFrame:
    return read_frame(_input(config, "exposure_path", EXPOSURE_FILE), required=EXPOSURE_REQUIRED)


def cmd_annotate(config: RunConfig, args: argparse.Namespace) -> int:
    config.require("postings_path")
    postings = read_records(config.postings_path, PostingInput)
    out = config.out_dir / ANNOTATIONS_FILE
    sidecar = config.out_dir / FAILURES_FILE
    backend = get_backend(config)
    policy = AnnotationPolicy.from_config(config)

    previous: List[AnnotationRecord] = []
    if args.retry_failed:
        if not sidecar.exists():
            raise ConfigurationError(f"No failure sidecar at {sidecar}")
        failed = {r.posting_id for r in read_records(sidecar, FailureRecord)}
        previous = read_records(out, AnnotationRecord) if out.exists() else []
        todo = [p for p in postings if p.posting_id in failed]
        logger.info(f"Retrying {humanize.intcomma(len(todo))} failed postings")
    else:
        todo = postings

    if sidecar.exists():
        sidecar.unlink()
    outcomes = annotate_batch(todo, backend, policy, FailureLog(sidecar))
    records = merge_outcomes([p.posting_id for p in postings], previous, outcomes)
    write_records(out, records)

    failures = sum(1 for o in outcomes if not o.ok)
    if failures:
        logger.error(
            f"{humanize.intcomma(failures)} of {humanize.intcomma(len(todo))} postings failed; see {sidecar}"
        )
        return 1
    logger.info(f"Wrote {humanize.intcomma(len(records))} annotations to {out}")
    return 0


def cmd_exposure(config: RunConfig, args: argparse.Namespace) -> int:
    config.require("postings_path")
    records = read_records(_input(config, "annotations_path", ANNOTATIONS_FILE), AnnotationRecord)
    postings = read_records(config.postings_path, PostingInput)
    frame = exposure_table(records, postings)
    path = write_frame(config.out_dir / EXPOSURE_FILE, frame)
    logger.info(f"Wrote exposure for {humanize.intcomma(len(frame))} postings to {path}")
    return 0


def _build_panel(config: RunConfig, sample: bool) -> CellPanel:
    postings = _exposure_frame(config)
    if sample:
        mass = dropped_cell_mass(postings, config.min_cell_size)
        logger.info(f"Postings in groups below {config.min_cell_size}: {mass:.4%}")
        postings = sample_postings(postings, config.sample_rate, config.min_cell_size, config.seed)
    return build_panel(postings, config.period_kind, config.index_choice, pooled=[config.baseline])


def cmd_panel(config: RunConfig, args: argparse.Namespace) -> int:
    panel = _build_panel(config, args.sample)
    path = panel.to_csv(config.out_dir / PANEL_FILE)
    logger.info(f"Wrote panel to {path}")
    return 0


def _load_panel(config: RunConfig) -> CellPanel:
    if config.panel_path is not None:
        config.require("panel_path")
        return CellPanel.from_csv(config.panel_path)
    return _build_panel(config, sample=False)


def cmd_decompose(config: RunConfig, args: argparse.Namespace) -> int:
    panel = _load_panel(config)
    baseline = config.baseline_period
    periods = kitagawa.default_periods(panel, baseline)
    out = config.out_dir
    variant = args.variant
    support = not args.raw_support and config.use_common_support

    if variant == "by_seniority":
        strata = kitagawa.by_seniority(panel, baseline, periods, support)
        tables.write_table(tables.seniority_frame(strata), out / "decomposition_by_seniority.csv")
        contributions = []
        for level, results in strata.items():
            try:
                c = kitagawa.relative_contributions(results, config.from_period_id)
            except AllZeroComponents as e:
                logger.warning(f"{level}: {str(e)}")
                continue
            contributions.append(c.model_dump() | {"seniority": level})
            svg.decomposition_chart(results, f"Decomposition, {level} postings").write(
                out / f"decomposition_{level.lower()}.svg"
            )
        tables.write_table(pd.DataFrame(contributions), out / "contributions_by_seniority.csv")
        return 0

    results = kitagawa.decompose_all(panel, baseline, periods, variant, support)
    tables.write_table(tables.decomposition_frame(results), out / f"decomposition_{variant}.csv")
    tables.write_table(kitagawa.per_period_contributions(results), out / f"contributions_by_period_{variant}.csv")
    try:
        contributions = kitagawa.relative_contributions(results, config.from_period_id)
        tables.write_table(tables.contributions_frame([contributions]), out / f"contributions_{variant}.csv")
        logger.info(
            f"From {contributions.from_period}: composition {contributions.composition:.2f}%, "
            f"within {contributions.within:.2f}%, interaction {contributions.interaction:.2f}%"
        )
    except AllZeroComponents as e:
        logger.warning(str(e))

    breakdowns = [kitagawa.sign_patterns(panel, baseline, t, support) for t in periods]
    tables.write_table(tables.sign_pattern_frame(breakdowns), out / "sign_patterns.csv")
    averages = kitagawa.average_sign_patterns(breakdowns, config.from_period_id)
    tables.write_table(pd.DataFrame([averages]), out / "sign_patterns_average.csv")
    paths = kitagawa.counterfactual_paths(panel, baseline, [baseline] + periods)
    tables.write_table(tables.counterfactual_frame(paths), out / "counterfactual_paths.csv")

    svg.decomposition_chart(results, f"Decomposition of exposure change ({variant})").write(
        out / f"decomposition_{variant}.svg"
    )
    logger.info(f"Decomposed {len(results)} periods against {baseline.label}")
    return 0


def cmd_ob(config: RunConfig, args: argparse.Namespace) -> int:
    postings = _exposure_frame(config)
    names = list(config.ob_blocks)
    cells = build_ob_cells(postings, names, config.ob_cutoff, config.index_choice)
    blocks = CovariateBlocks.infer(cells, names)
    overall = ob_twofold(cells, blocks)
    summaries = {"All": overall}
    if "seniority" in names:
        summaries.update(ob_by_group(cells, blocks, "seniority"))

    out = config.out_dir
    tables.write_table(tables.ob_summary_frame(summaries), out / "ob_summary.csv")
    tables.write_table(tables.ob_blocks_frame(overall), out / "ob_blocks.csv")
    svg.block_chart(overall).write(out / "ob_blocks.svg")
    logger.info(
        f"Oaxaca-Blinder: {overall.mean_a:.4f} -> {overall.mean_b:.4f}, "
        f"explained {overall.explained:.4f}, unexplained {overall.unexplained:.4f}"
    )
    return 0


def cmd_describe(config: RunConfig, args: argparse.Namespace) -> int:
    postings = _exposure_frame(config)
    index = config.index_choice
    out = config.out_dir
    outputs = {
        "summary_statistics.csv": describe.summary_statistics(postings),
        "sector_means.csv": describe.sector_means(postings, index),
        "top_bottom_occupations.csv": describe.top_bottom_occupations(postings, args.top, index),
        "occupation_exposure.csv": describe.occupation_exposure(postings, index),
        "seniority_trends.csv": describe.seniority_trends(postings, config.period_kind, index),
        "share_trends.csv": describe.share_trends(postings, config.period_kind),
        "occupation_averaged_series.csv": describe.occupation_averaged_series(postings, config.period_kind, index),
        "tercile_changes.csv": describe.tercile_changes(postings, config.baseline, config.period_kind, index),
        "tercile_changes_by_seniority.csv": describe.tercile_changes(
            postings, config.baseline, config.period_kind, index, by_seniority=True
        ),
    }
    for name, frame in outputs.items():
        tables.write_table(frame, out / name)
    logger.info(f"Wrote {len(outputs)} descriptive tables to {out}")
    return 0


def cmd_synth(config: RunConfig, args: argparse.Namespace) -> int:
    config.require("scenario_path")
    spec = ScenarioSpec.load(config.scenario_path)
    if args.seed is not None:
        spec = spec.model_copy(update={"seed": args.seed})
    paths = write_scenario(generate(spec), config.out_dir)
    logger.info(f"Wrote scenario postings to {paths['postings']} and ground truth to {paths['truth']}")
    return 0


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    "annotate": cmd_annotate,
    "exposure": cmd_exposure,
    "panel": cmd_panel,
    "decompose": cmd_decompose,
    "ob": cmd_ob,
    "describe": cmd_describe,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="ai-exposure", description="Posting-level generative-AI exposure toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbs = parser.add_subparsers(dest="command", required=True)

    annotate = verbs.add_parser("annotate", parents=[common], help="two-stage task annotation")
    annotate.add_argument("--postings", type=Path)
    annotate.add_argument("--retry-failed", action="store_true", help="reattempt only postings in the failure sidecar")

    exposure = verbs.add_parser("exposure", parents=[common], help="posting-level shares and indices")
    exposure.add_argument("--postings", type=Path)
    exposure.add_argument("--annotations", type=Path)

    panel = verbs.add_parser("panel", parents=[common], help="build and export the cell panel")
    panel.add_argument("--exposure", type=Path)
    panel.add_argument("--sample", action="store_true", help="apply the cell-size filter and sampling first")

    decompose = verbs.add_parser("decompose", parents=[common], help="shift-share decompositions")
    decompose.add_argument("--variant", choices=kitagawa.VARIANTS, default="threefold")
    decompose.add_argument("--panel", type=Path)
    decompose.add_argument("--exposure", type=Path)
    decompose.add_argument("--raw-support", action="store_true", help="skip common-support renormalization")

    ob = verbs.add_parser("ob", parents=[common], help="Oaxaca-Blinder decomposition")
    ob.add_argument("--exposure", type=Path)

    desc = verbs.add_parser("describe", parents=[common], help="descriptive tables")
    desc.add_argument("--exposure", type=Path)
    desc.add_argument("--top", type=int, default=10)

    synth = verbs.add_parser("synth", parents=[common], help="write a synthetic scenario")
    synth.add_argument("--scenario", type=Path)
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "seed": args.seed,
        "out_dir": args.out,
        "postings_path": getattr(args, "postings", None),
        "annotations_path": getattr(args, "annotations", None),
        "exposure_path": getattr(args, "exposure", None),
        "panel_path": getattr(args, "panel", None),
        "scenario_path": getattr(args, "scenario", None),
    }
    return RunConfig.load(args.config, **overrides)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    try:
        config = _config(args)
        return COMMANDS[args.command](config, args)
    except (ConfigurationError, InputFormatError, OSError) as e:
        logger.error(str(e))
        return 2
    except AiExposureError as e:
        logger.error(f"{type(e).__name__}: {str(e)}")
        return 1
    except Exception:
        logger.exception("Unexpected error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
