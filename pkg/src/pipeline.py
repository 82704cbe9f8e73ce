"""Manifest-driven matching pipeline.

A manifest names one or more test cases and an ordered list of steps. Every
test case runs the full step list against its own working alignment; the
runner keeps the state steps hand to each other (training sample, baseline,
walk corpora, embeddings, projection, checkpoints) in a RunState.
"""

import inspect
import json
import logging
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, FrozenSet, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from alignment import Alignment, GoldStandardCompleteness, TestCase
from alignment_xml import read_alignment_file, write_alignment_file
from classifiers import ClassifierFamily, TrainedModel, default_grid
from embeddings import (
    DEFAULT_RIDGE,
    DEFAULT_THRESHOLD,
    EmbeddingConfig,
    EmbeddingSpace,
    ProjectionMap,
    Walk,
    WalkConfig,
    generate_walks,
    projection_match,
    train_projection,
    train_skip_gram,
)
from evaluation import EvaluationRecord, evaluate, residual_metrics, write_alignment_cube, write_metrics_summary
from feature_filters import (
    FEATURE_FILTERS,
    FilterConfig,
    LiteralComparison,
    OverlapMode,
    Tokenizer,
    naive_descending_extract,
    rerank_by_feature,
    threshold_filter,
)
from matchers import base_match, forward_match
from rdf_store import Direction, load_ntriples
from supervised_filter import SupervisedMatchFilter, write_model_report

logger = logging.getLogger("Pipeline")

FINAL_LABEL = "final"
SIDES = ("source", "target")


class PipelineConfigError(ValueError):
    pass


class PipelineStepError(RuntimeError):
    def __init__(self, step_name: str, test_case: str, cause: Exception):
        super().__init__(f"Step '{step_name}' failed for test case '{test_case}': {cause}")
        self.step_name = step_name
        self.test_case = test_case
        self.cause = cause


class StepConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    step: str
    params: Dict[str, Any] = Field(default_factory=dict)


class TestCaseConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    __test__ = False

    name: str = Field(pattern=r"^[A-Za-z0-9._-]+$")
    source: str
    target: str
    reference: str
    completeness: GoldStandardCompleteness = GoldStandardCompleteness.COMPLETE


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "pipeline"
    seed: Optional[int] = None
    threads: Optional[int] = Field(default=None, ge=1)
    output_dir: Optional[str] = None
    test_cases: List[TestCaseConfig] = Field(min_length=1)
    steps: List[StepConfig] = Field(default_factory=list)


class OutputRole(Enum):
    ALIGNMENT = "alignment"
    CUBE = "cube"
    METRICS = "metrics"
    MODEL_SELECTION = "model_selection"


@dataclass
class RunState:
    test_case: TestCase
    alignment: Alignment = field(default_factory=Alignment)
    sample: Optional[Alignment] = None
    baseline: Optional[Alignment] = None
    checkpoints: Dict[str, Alignment] = field(default_factory=dict)
    walks: Dict[str, List[Walk]] = field(default_factory=dict)
    spaces: Dict[str, EmbeddingSpace] = field(default_factory=dict)
    projection: Optional[ProjectionMap] = None
    model: Optional[TrainedModel] = None
    evaluated: bool = False


@dataclass
class PipelineResult:
    outputs: List[Tuple[OutputRole, Path]] = field(default_factory=list)
    records: List[EvaluationRecord] = field(default_factory=list)


def load_config(path: Union[str, Path]) -> PipelineConfig:
    """
    Read and validate a JSON manifest, including step names and parameters.

    Args:
        path: Manifest file

    Returns:
        The validated configuration

    Raises:
        PipelineConfigError: When the file is missing, not JSON, or invalid
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise PipelineConfigError(f"Cannot read manifest {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise PipelineConfigError(f"Manifest {path} is not valid JSON: {e}") from e
    return parse_config(raw)


def parse_config(raw: Dict[str, Any]) -> PipelineConfig:
    try:
        config = PipelineConfig.model_validate(raw)
    except ValidationError as e:
        raise PipelineConfigError(f"Malformed manifest: {e}") from e
    for index, step in enumerate(config.steps, start=1):
        validate_step(step, index)
    return config


def _sides(side: str) -> Tuple[str, ...]:
    if side == "both":
        return SIDES
    if side not in SIDES:
        raise ValueError(f"side must be 'source', 'target' or 'both', got {side!r}")
    return (side,)


def _enum_value(enum_type, value):
    return value if isinstance(value, enum_type) else enum_type(value)


def filter_config(params: Dict[str, Any]) -> FilterConfig:
    """FilterConfig from manifest values (enum values as strings, IRI lists)."""
    values = dict(params)
    converters = {
        "overlap_mode": lambda v: _enum_value(OverlapMode, v),
        "literal_comparison": lambda v: _enum_value(LiteralComparison, v),
        "tokenizer": lambda v: _enum_value(Tokenizer, v),
        "neighbour_direction": lambda v: _enum_value(Direction, v),
        "excluded_property_iris": frozenset,
    }
    for name, convert in converters.items():
        if name in values:
            values[name] = convert(values[name])
    return FilterConfig(**values)


class PipelineRunner:
    """Runs every step of a manifest over each of its test cases."""

    def __init__(
        self,
        config: PipelineConfig,
        output_dir: Union[str, Path],
        seed: int = 42,
        threads: int = 1,
        data_dir: Union[str, Path] = ".",
        coarse_grid: bool = False,
    ):
        self.config = config
        self.output_dir = Path(output_dir)
        self.seed = seed
        self.threads = threads
        self.data_dir = Path(data_dir)
        self.coarse_grid = coarse_grid
        self._case_outputs: List[Tuple[OutputRole, Path]] = []

    def _resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.data_dir / p

    def _case_dir(self, state: RunState) -> Path:
        return self.output_dir / state.test_case.name

    def load_test_case(self, cfg: TestCaseConfig) -> TestCase:
        logger.info(f"[{cfg.name}] Loading graphs and reference alignment")
        return TestCase(
            name=cfg.name,
            source=load_ntriples(self._resolve(cfg.source), document_id="source"),
            target=load_ntriples(self._resolve(cfg.target), document_id="target"),
            reference=read_alignment_file(self._resolve(cfg.reference)).freeze(),
            completeness=cfg.completeness,
        )

    def run(self) -> PipelineResult:
        """
        Run every step on every test case, then write the outputs.

        Returns:
            Evaluation records and (role, path) pairs of the written files

        Raises:
            PipelineStepError: Naming the test case and the step that failed
        """
        result = PipelineResult()
        for case_cfg in self.config.test_cases:
            try:
                test_case = self.load_test_case(case_cfg)
            except Exception as e:
                raise PipelineStepError("load_test_case", case_cfg.name, e) from e
            records, outputs = self.run_test_case(test_case)
            result.records.extend(records)
            result.outputs.extend(outputs)

        metrics_path = write_metrics_summary(result.records, self.output_dir / "metrics.csv")
        result.outputs.append((OutputRole.METRICS, metrics_path))
        return result

    def run_test_case(self, test_case: TestCase) -> Tuple[List[EvaluationRecord], List[Tuple[OutputRole, Path]]]:
        state = RunState(test_case)
        self._case_outputs = []
        records: List[EvaluationRecord] = []

        for index, step in enumerate(self.config.steps, start=1):
            step_name = f"{index}:{step.step}"
            handler = STEPS[step.step]
            try:
                record = handler(self, state, **step.params)
            except Exception as e:
                logger.error(f"[{test_case.name}] Step {step_name} failed: {e}")
                raise PipelineStepError(step_name, test_case.name, e) from e
            if isinstance(record, EvaluationRecord):
                records.append(record)
            logger.info(f"[{test_case.name}] Step {step_name}: {len(state.alignment)} correspondences")

        if not state.evaluated:
            records.append(self.step_evaluate(state, label=FINAL_LABEL))

        case_dir = self._case_dir(state)
        self._case_outputs.append(
            (OutputRole.ALIGNMENT, write_alignment_file(state.alignment, case_dir / "alignment.rdf"))
        )
        self._case_outputs.append((
            OutputRole.CUBE,
            write_alignment_cube(
                state.alignment, test_case.reference, case_dir / "cube.csv",
                baseline=state.baseline, completeness=test_case.completeness,
            ),
        ))
        return records, list(self._case_outputs)

    # Matchers

    def step_base_match(self, state: RunState, label_properties: Optional[List[str]] = None,
                        include_blank_nodes: bool = False) -> None:
        tc = state.test_case
        state.alignment = base_match(tc.source, tc.target, label_properties, include_blank_nodes)

    def step_forward_match(self, state: RunState, alignment: str = "sample") -> None:
        if alignment == "sample":
            if state.sample is None:
                raise ValueError("forward_match of the sample needs a sample_reference step first")
            given = state.sample
        else:
            given = read_alignment_file(self._resolve(alignment))
        state.alignment = forward_match(given).copy()

    def step_sample_reference(self, state: RunState, fraction: Optional[float] = None,
                              n: Optional[int] = None, as_baseline: bool = True) -> None:
        if (fraction is None) == (n is None):
            raise ValueError("sample_reference takes exactly one of 'fraction' and 'n'")
        reference = state.test_case.reference
        if fraction is not None:
            sample, _ = reference.sample_by_fraction(fraction, self.seed)
        else:
            sample, _ = reference.sample(n, self.seed)
        state.sample = sample.freeze()
        if as_baseline:
            state.baseline = state.sample
        logger.info(f"[{state.test_case.name}] Sampled {len(sample)} of {len(reference)} reference correspondences")

    # Filters

    def step_rerank(self, state: RunState, key: str) -> None:
        state.alignment = rerank_by_feature(state.alignment, key)

    def step_threshold(self, state: RunState, threshold: float) -> None:
        state.alignment = threshold_filter(state.alignment, threshold)

    def step_naive_descending_extract(self, state: RunState) -> None:
        state.alignment = naive_descending_extract(state.alignment)

    def step_supervised_filter(self, state: RunState, folds: int = 5, coarse_grid: Optional[bool] = None,
                               families: Optional[List[str]] = None,
                               feature_keys: Optional[List[str]] = None) -> None:
        if state.sample is None:
            raise ValueError("supervised_filter needs a sample_reference step first")
        coarse = self.coarse_grid if coarse_grid is None else coarse_grid
        wanted = [ClassifierFamily(f) for f in families] if families is not None else None
        supervised = SupervisedMatchFilter(
            feature_keys=feature_keys,
            folds=folds,
            seed=self.seed,
            grid=default_grid(coarse, wanted),
            threads=self.threads,
        )
        state.alignment = supervised.filter(state.alignment, state.sample)
        state.model = supervised.model
        report = write_model_report(state.model, self._case_dir(state) / "model_selection.csv")
        self._case_outputs.append((OutputRole.MODEL_SELECTION, report))

    # Embeddings

    def step_generate_walks(self, state: RunState, walks_per_node: int = 100, depth: int = 4,
                            side: str = "both") -> None:
        cfg = WalkConfig(walks_per_node, depth, self.seed)
        for s in _sides(side):
            graph = getattr(state.test_case, s)
            state.walks[s] = generate_walks(graph, cfg, self.threads)

    def step_train_skip_gram(self, state: RunState, dimensions: int = 50, window: int = 5, min_count: int = 1,
                             negative_samples: int = 5, epochs: int = 5, learning_rate: float = 0.025,
                             workers: int = 1, side: str = "both") -> None:
        cfg = EmbeddingConfig(dimensions, window, min_count, negative_samples, epochs, learning_rate, self.seed, workers)
        for s in _sides(side):
            if s not in state.walks:
                raise ValueError(f"train_skip_gram needs a generate_walks step for the {s} graph first")
            state.spaces[s] = train_skip_gram(state.walks[s], cfg)

    def step_train_projection(self, state: RunState, ridge: float = DEFAULT_RIDGE) -> None:
        if state.sample is None:
            raise ValueError("train_projection needs a sample_reference step first")
        if set(SIDES) - set(state.spaces):
            raise ValueError("train_projection needs embeddings of both graphs")
        anchors = [(c.source, c.target) for c in state.sample.sorted()]
        state.projection = train_projection(anchors, state.spaces["source"], state.spaces["target"], ridge)

    def step_projection_match(self, state: RunState, threshold: float = DEFAULT_THRESHOLD) -> None:
        if state.projection is None:
            raise ValueError("projection_match needs a train_projection step first")
        tc = state.test_case
        state.alignment = projection_match(
            state.spaces["source"],
            state.spaces["target"],
            state.projection,
            threshold,
            source_nodes={n.iri for n in tc.source.nodes()},
            target_nodes={n.iri for n in tc.target.nodes()},
        )

    # Bookkeeping

    def step_checkpoint(self, state: RunState, name: str) -> None:
        state.checkpoints[name] = state.alignment.copy()

    def step_restore(self, state: RunState, name: str) -> None:
        if name not in state.checkpoints:
            raise ValueError(f"No checkpoint named '{name}'")
        state.alignment = state.checkpoints[name].copy()

    def step_evaluate(self, state: RunState, label: str = FINAL_LABEL) -> EvaluationRecord:
        tc = state.test_case
        counts, _ = evaluate(state.alignment, tc.reference, tc.completeness)
        metrics = residual_metrics(state.alignment, tc.reference, state.baseline, tc.completeness)
        state.evaluated = True
        logger.info(
            f"[{tc.name}] {label}: P={metrics.precision:.4f} R={metrics.recall:.4f} "
            f"F={metrics.f1:.4f} R+={metrics.residual_recall:.4f}"
        )
        return EvaluationRecord(tc.name, label, counts, metrics)


def _filter_step(name: str) -> Callable[..., None]:
    filter_fn = FEATURE_FILTERS[name]

    def run(runner: PipelineRunner, state: RunState, **params) -> None:
        tc = state.test_case
        state.alignment = filter_fn(state.alignment, tc.source, tc.target, filter_config(params))

    run.__name__ = f"step_{name}"
    return run


STEPS: Dict[str, Callable[..., Optional[EvaluationRecord]]] = {
    "base_match": PipelineRunner.step_base_match,
    "forward_match": PipelineRunner.step_forward_match,
    "sample_reference": PipelineRunner.step_sample_reference,
    "rerank": PipelineRunner.step_rerank,
    "threshold": PipelineRunner.step_threshold,
    "naive_descending_extract": PipelineRunner.step_naive_descending_extract,
    "supervised_filter": PipelineRunner.step_supervised_filter,
    "generate_walks": PipelineRunner.step_generate_walks,
    "train_skip_gram": PipelineRunner.step_train_skip_gram,
    "train_projection": PipelineRunner.step_train_projection,
    "projection_match": PipelineRunner.step_projection_match,
    "checkpoint": PipelineRunner.step_checkpoint,
    "restore": PipelineRunner.step_restore,
    "evaluate": PipelineRunner.step_evaluate,
}
STEPS.update({name: _filter_step(name) for name in FEATURE_FILTERS})


def _step_parameters(step: str) -> Tuple[FrozenSet[str], FrozenSet[str]]:
    """(accepted, required) parameter names of a step."""
    if step in FEATURE_FILTERS:
        return frozenset(f.name for f in fields(FilterConfig)), frozenset()
    params = list(inspect.signature(STEPS[step]).parameters.values())[2:]
    accepted = frozenset(p.name for p in params)
    required = frozenset(p.name for p in params if p.default is inspect.Parameter.empty)
    return accepted, required


def validate_step(step: StepConfig, index: int) -> None:
    if step.step not in STEPS:
        raise PipelineConfigError(f"Unknown step '{step.step}' at position {index}")
    accepted, required = _step_parameters(step.step)
    unknown = set(step.params) - accepted
    if unknown:
        raise PipelineConfigError(f"Step '{step.step}' at position {index} has unknown parameters {sorted(unknown)}")
    missing = required - set(step.params)
    if missing:
        raise PipelineConfigError(f"Step '{step.step}' at position {index} is missing parameters {sorted(missing)}")
