import os
import sys
import argparse
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

# Add src to path for imports
sys.path.insert(0, os.path.dirname(__file__))

from alignment import GoldStandardCompleteness
from alignment_xml import read_alignment_file, write_alignment_file
from embeddings import EmbeddingConfig, WalkConfig, generate_walks, train_skip_gram, write_corpus, write_embeddings
from evaluation import EvaluationRecord, evaluate, residual_metrics, write_alignment_cube, write_metrics_summary
from feature_filters import FEATURE_FILTERS, FilterConfig, naive_descending_extract
from matchers import base_match
from pipeline import PipelineConfigError, PipelineRunner, PipelineStepError, load_config
from rdf_store import load_ntriples
from settings import Settings, configure_logging, load_settings

logger = logging.getLogger("MatchKit")

EXIT_OK = 0
EXIT_STEP_FAILED = 1
EXIT_CONFIG_ERROR = 2


def print_outputs(outputs: Sequence[Tuple[str, Path]]) -> None:
    """Standard output only ever carries the produced files, one "role<TAB>path" per line."""
    for role, path in outputs:
        print(f"{role}\t{path}")


def _add_common_flags(parser: argparse.ArgumentParser, settings: Settings) -> None:
    parser.add_argument("--seed", type=int, default=None, help=f"master seed (default {settings.seed})")
    parser.add_argument("--threads", type=int, default=None, help=f"worker threads (default {settings.threads})")
    parser.add_argument("--out", default=None, help="output directory or file")


def _add_evaluation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--system", required=True, help="system alignment (Alignment format XML)")
    parser.add_argument("--reference", required=True, help="reference alignment")
    parser.add_argument("--baseline", default=None, help="baseline alignment for residual recall")
    parser.add_argument(
        "--completeness",
        default=GoldStandardCompleteness.COMPLETE.value,
        choices=[c.value for c in GoldStandardCompleteness],
    )


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matchkit", description="Knowledge graph and ontology matching toolkit")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run a pipeline manifest")
    run.add_argument("--config", required=True, help="JSON pipeline manifest")
    _add_common_flags(run, settings)

    match = commands.add_parser("match", help="label matcher, optionally followed by the feature filters")
    match.add_argument("--source", required=True)
    match.add_argument("--target", required=True)
    match.add_argument("--filters", action="store_true", help="annotate with all feature filters")
    match.add_argument("--extract", action="store_true", help="reduce to a one-to-one alignment")
    _add_common_flags(match, settings)

    embed = commands.add_parser("embed", help="random walks and skip-gram embeddings of one graph")
    embed.add_argument("--graph", required=True)
    embed.add_argument("--walks-per-node", type=int, default=WalkConfig.walks_per_node)
    embed.add_argument("--depth", type=int, default=WalkConfig.depth)
    embed.add_argument("--dimensions", type=int, default=EmbeddingConfig.dimensions)
    embed.add_argument("--window", type=int, default=EmbeddingConfig.window)
    embed.add_argument("--epochs", type=int, default=EmbeddingConfig.epochs)
    _add_common_flags(embed, settings)

    ev = commands.add_parser("eval", help="precision, recall, F-measure and residual recall")
    _add_evaluation_flags(ev)
    _add_common_flags(ev, settings)

    cube = commands.add_parser("cube", help="per-correspondence alignment cube CSV")
    _add_evaluation_flags(cube)
    _add_common_flags(cube, settings)

    return parser


def _data_path(settings: Settings, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else Path(settings.data_dir) / p


def cmd_run(args, settings: Settings) -> List[Tuple[str, Path]]:
    config = load_config(args.config)
    runner = PipelineRunner(
        config,
        output_dir=args.out or config.output_dir or settings.output_dir,
        seed=args.seed if args.seed is not None else (config.seed if config.seed is not None else settings.seed),
        threads=args.threads or config.threads or settings.threads,
        data_dir=settings.data_dir,
        coarse_grid=settings.coarse_grid,
    )
    logger.info(f"Running manifest '{config.name}' ({len(config.test_cases)} test cases, {len(config.steps)} steps)")
    result = runner.run()
    return [(role.value, path) for role, path in result.outputs]


def cmd_match(args, settings: Settings) -> List[Tuple[str, Path]]:
    source = load_ntriples(_data_path(settings, args.source), document_id="source")
    target = load_ntriples(_data_path(settings, args.target), document_id="target")
    alignment = base_match(source, target)
    if args.filters:
        for name, filter_fn in FEATURE_FILTERS.items():
            logger.info(f"Applying {name}")
            alignment = filter_fn(alignment, source, target, FilterConfig())
    if args.extract:
        alignment = naive_descending_extract(alignment)
    out = Path(args.out or settings.output_dir) / "alignment.rdf"
    return [("alignment", write_alignment_file(alignment, out))]


def cmd_embed(args, settings: Settings) -> List[Tuple[str, Path]]:
    seed = args.seed if args.seed is not None else settings.seed
    graph = load_ntriples(_data_path(settings, args.graph))
    corpus = generate_walks(graph, WalkConfig(args.walks_per_node, args.depth, seed), args.threads or settings.threads)
    space = train_skip_gram(
        corpus, EmbeddingConfig(dimensions=args.dimensions, window=args.window, epochs=args.epochs, seed=seed)
    )
    out = Path(args.out or settings.output_dir)
    return [
        ("walks", write_corpus(corpus, out / "walks.txt")),
        ("embeddings", write_embeddings(space, out / "embeddings.txt")),
    ]


def _load_evaluation_inputs(args, settings: Settings):
    system = read_alignment_file(_data_path(settings, args.system))
    reference = read_alignment_file(_data_path(settings, args.reference))
    baseline = read_alignment_file(_data_path(settings, args.baseline)) if args.baseline else None
    return system, reference, baseline, GoldStandardCompleteness(args.completeness)


def cmd_eval(args, settings: Settings) -> List[Tuple[str, Path]]:
    system, reference, baseline, completeness = _load_evaluation_inputs(args, settings)
    counts, _ = evaluate(system, reference, completeness)
    metrics = residual_metrics(system, reference, baseline, completeness)
    record = EvaluationRecord(Path(args.system).stem, "final", counts, metrics)
    out = Path(args.out or settings.output_dir) / "metrics.csv"
    return [("metrics", write_metrics_summary([record], out))]


def cmd_cube(args, settings: Settings) -> List[Tuple[str, Path]]:
    system, reference, baseline, completeness = _load_evaluation_inputs(args, settings)
    out = Path(args.out or settings.output_dir) / "cube.csv"
    return [("cube", write_alignment_cube(system, reference, out, baseline, completeness))]


COMMANDS = {
    "run": cmd_run,
    "match": cmd_match,
    "embed": cmd_embed,
    "eval": cmd_eval,
    "cube": cmd_cube,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    settings = load_settings()
    configure_logging(settings.log_level)
    args = build_parser(settings).parse_args(argv)
    if args.threads is not None and args.threads < 1:
        logger.error(f"--threads must be >= 1, got {args.threads}")
        return EXIT_CONFIG_ERROR

    try:
        outputs = COMMANDS[args.command](args, settings)
    except PipelineConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG_ERROR
    except PipelineStepError as e:
        logger.error(str(e))
        return EXIT_STEP_FAILED
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_STEP_FAILED

    print_outputs(outputs)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
