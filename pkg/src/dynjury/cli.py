"""Command-line pipeline driver.

Subcommands: simulate | ingest | score | features | train | tune |
evaluate | run-all | report | calibrate | config. Global flags:
--config PATH, --seed N, --out DIR. Exit codes: 0 success, 2 config
error, 3 data error, 4 pipeline error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .boost import BoostError
from .corpus import CorpusError, ingest, write_corpus
from .judges import JudgeError, score_corpus
from .jury import JuryError
from .pipeline import ConfigError, PipelineConfig, PipelineError
from .simkit import Scenario, default_contrastive_scenario, generate
from .stats import StatsError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_PIPELINE = 4


def build_parser() -> argparse.ArgumentParser:
    defaults = PipelineConfig()
    parser = argparse.ArgumentParser(
        prog="dynjury",
        description=(
            "Dynamic jury evaluation: predict per-instance judge reliability, "
            "assemble a top-K jury, aggregate with reliability weights, and "
            "compare against static-jury baselines."
        ),
        epilog=(
            "Config defaults: proportions 0.6/0.2/0.2; tolerance grids "
            "summarization [0, 0.25], rag [0]; K range 2..N-1; boosting grid "
            f"{defaults.boost_grid.to_json()}; trials {defaults.trials}; "
            f"seeds {list(defaults.seeds)}; embedder {defaults.embedder}. "
            "Dump a full default config with `dynjury config init`."
        ),
    )
    parser.add_argument("--config", help="pipeline config JSON path")
    parser.add_argument("--seed", type=int, help="override the seed for this command")
    parser.add_argument("--out", help="override the output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", help="generate a synthetic scored corpus")
    sub.add_parser("ingest", help="validate a corpus and print a summary")
    p = sub.add_parser("score", help="run configured judge clients over the corpus")
    p.add_argument("--overwrite", action="store_true", help="re-score existing judge scores")
    sub.add_parser("features", help="export the feature matrix CSV per cell")
    sub.add_parser("train", help="train reliability models for one seed")
    sub.add_parser("tune", help="tune (per-judge tolerance, K) for one seed")
    sub.add_parser("evaluate", help="evaluate a tuned seed from stored artifacts")
    p = sub.add_parser("run-all", help="full pipeline over all seeds plus reports")
    p.add_argument(
        "--drop-features",
        choices=["size_special", "complexity", "embedding"],
        action="append",
        default=None,
        help="ablation: remove a feature group (repeatable)",
    )
    p.add_argument("--fixed-k", type=int, default=None, help="ablation: pin the jury size")
    p.add_argument(
        "--fixed-tau", type=float, default=None, help="ablation: pin every judge's tolerance"
    )
    sub.add_parser("report", help="rebuild aggregate tables/charts from artifacts")
    sub.add_parser("calibrate", help="isotonic per-(judge, dataset) calibration rerun")
    p = sub.add_parser("config", help="config utilities")
    p.add_argument("action", choices=["init"], help="init: print a default config JSON")
    return parser


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    if args.config:
        config = PipelineConfig.load(args.config)
    else:
        config = PipelineConfig()
    if args.out:
        config.out_dir = args.out
    return config


def _scenario_from(config: PipelineConfig, seed: int | None) -> Scenario:
    if config.scenario:
        scenario = Scenario.from_json(config.scenario)
        if seed is not None:
            scenario = Scenario.from_json({**scenario.to_json(), "seed": seed})
        return scenario
    return default_contrastive_scenario(seed=seed if seed is not None else 0)


def cmd_simulate(config: PipelineConfig, args: argparse.Namespace) -> int:
    scenario = _scenario_from(config, args.seed)
    instances = generate(scenario)
    write_corpus(config.corpus, instances)
    print(f"wrote {len(instances)} instances to {config.corpus}")
    return EXIT_OK


def cmd_ingest(config: PipelineConfig, args: argparse.Namespace) -> int:
    instances = ingest(config.corpus)
    cells = pipeline.group_by_cell(instances)
    print(f"{len(instances)} instances, {len(cells)} task/metric cell(s)")
    for (task, metric), members in sorted(cells.items()):
        datasets = sorted({i.dataset_name for i in members})
        judges = sorted({j for i in members for j in i.judge_scores})
        print(f"  {task}/{metric}: {len(members)} instances, datasets={datasets}, judges={judges}")
    return EXIT_OK


def cmd_score(config: PipelineConfig, args: argparse.Namespace) -> int:
    instances = ingest(config.corpus)
    clients = pipeline.build_judge_clients(config)
    if not clients:
        raise ConfigError("no judge clients configured")
    scored, failures = score_corpus(instances, clients, overwrite=args.overwrite)
    out_path = Path(config.out_dir) / "scored_corpus.jsonl"
    write_corpus(out_path, scored)
    print(f"wrote scored corpus to {out_path} ({len(failures)} failures)")
    if failures:
        failure_path = Path(config.out_dir) / "scoring_failures.json"
        failure_path.parent.mkdir(parents=True, exist_ok=True)
        failure_path.write_text(
            json.dumps(
                [
                    {"instance_id": f.instance_id, "judge_id": f.judge_id, "error": f.error}
                    for f in failures
                ],
                indent=2,
            )
        )
        print(f"failure details in {failure_path}")
    return EXIT_OK


def cmd_features(config: PipelineConfig, args: argparse.Namespace) -> int:
    paths = pipeline.export_features(config, seed=args.seed)
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def _for_each_cell(config: PipelineConfig, args: argparse.Namespace, stage: str) -> int:
    instances = ingest(config.corpus)
    seed = args.seed if args.seed is not None else config.seeds[0]
    embedder = pipeline.make_embedder(config)
    for (task, metric), members in sorted(pipeline.group_by_cell(instances).items()):
        cell_dir = Path(config.out_dir) / f"{task}_{metric}"
        runner = pipeline.CellRunner(members, config, cell_dir, embedder=embedder)
        path = getattr(runner, f"stage_{stage}")(seed)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_run_all(config: PipelineConfig, args: argparse.Namespace) -> int:
    if args.drop_features:
        config.drop_features = tuple(args.drop_features)
    if args.fixed_k is not None:
        config.fixed_k = args.fixed_k
    if args.fixed_tau is not None:
        config.fixed_tau = args.fixed_tau
    if args.seed is not None:
        config.seeds = (args.seed,)
    out_dir = pipeline.run_all(config)
    print(f"artifacts in {out_dir}")
    return EXIT_OK


def cmd_report(config: PipelineConfig, args: argparse.Namespace) -> int:
    out_dir = pipeline.report_only(config)
    print(f"reports in {out_dir}")
    return EXIT_OK


def cmd_calibrate(config: PipelineConfig, args: argparse.Namespace) -> int:
    out_dir = pipeline.calibrate(config)
    print(f"calibration artifacts in {out_dir}")
    return EXIT_OK


def cmd_config(config: PipelineConfig, args: argparse.Namespace) -> int:
    print(json.dumps(PipelineConfig().to_json(), indent=2, sort_keys=True))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "ingest": cmd_ingest,
        "score": cmd_score,
        "features": cmd_features,
        "train": lambda c, a: _for_each_cell(c, a, "train"),
        "tune": lambda c, a: _for_each_cell(c, a, "tune"),
        "evaluate": lambda c, a: _for_each_cell(c, a, "evaluate"),
        "run-all": cmd_run_all,
        "report": cmd_report,
        "calibrate": cmd_calibrate,
        "config": cmd_config,
    }
    try:
        config = _load_config(args)
        return handlers[args.command](config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CorpusError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (PipelineError, JuryError, BoostError, StatsError, JudgeError, ValueError) as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
