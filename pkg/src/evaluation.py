import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

import pandas as pd

from alignment import Alignment, GoldStandardCompleteness, Verdict, judge, key_order
from alignment_xml import format_decimal

logger = logging.getLogger("Evaluation")

CUBE_COLUMNS = ["source", "target", "relation", "confidence", "verdict", "residualTP"]
SUMMARY_COLUMNS = [
    "test_case", "label", "precision", "recall", "f1", "residual_recall",
    "tp", "fp", "fn", "unjudged",
]
FALSE_NEGATIVE = "FN"


class ReportWriteError(RuntimeError):
    pass


@dataclass
class ConfusionCounts:
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0
    unjudged: int = 0

    def __post_init__(self):
        for name in ("true_positives", "false_positives", "false_negatives", "unjudged"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    residual_recall: Optional[float] = None


@dataclass
class EvaluationRecord:
    """One row of the metrics summary."""
    test_case: str
    label: str
    counts: ConfusionCounts
    metrics: Metrics


def _ratio(numerator: int, denominator: int) -> float:
    return numerator / denominator if denominator else 0.0


def metrics_from_counts(tp: int, fp: int, fn: int) -> Metrics:
    """
    Precision, recall and F1 from confusion counts.

    Args:
        tp: True positives
        fp: False positives
        fn: False negatives

    Returns:
        Metrics; a zero denominator gives 0 for that measure
    """
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(precision, recall, f1)


def evaluate(
    system: Alignment,
    reference: Alignment,
    completeness: GoldStandardCompleteness = GoldStandardCompleteness.COMPLETE,
) -> Tuple[ConfusionCounts, Metrics]:
    """Precision, recall and F1 of system against reference.

    Unjudgeable correspondences count in neither precision nor recall.
    """
    counts = ConfusionCounts()
    for c in system:
        verdict = judge(c, reference, completeness)
        if verdict is Verdict.TRUE_POSITIVE:
            counts.true_positives += 1
        elif verdict is Verdict.FALSE_POSITIVE:
            counts.false_positives += 1
        else:
            counts.unjudged += 1
    counts.false_negatives = sum(1 for key in reference.keys() if key not in system)
    metrics = metrics_from_counts(counts.true_positives, counts.false_positives, counts.false_negatives)
    logger.debug(f"TP={counts.true_positives} FP={counts.false_positives} FN={counts.false_negatives} unjudged={counts.unjudged}")
    return counts, metrics


def residual_metrics(
    system: Alignment,
    reference: Alignment,
    baseline: Optional[Alignment],
    completeness: GoldStandardCompleteness = GoldStandardCompleteness.COMPLETE,
) -> Metrics:
    """
    evaluate() plus recall over the reference correspondences the baseline misses.

    Args:
        system: Alignment to score
        reference: Gold standard
        baseline: Correspondences that count as trivial; None means none are
        completeness: How far the reference can be trusted for unlisted pairs

    Returns:
        Metrics with residual_recall set
    """
    _, metrics = evaluate(system, reference, completeness)
    baseline_keys = baseline.keys() if baseline is not None else set()
    nontrivial = reference.keys() - baseline_keys
    found = sum(1 for key in nontrivial if key in system)
    metrics.residual_recall = _ratio(found, len(nontrivial))
    return metrics


def _write_frame(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\r\n")
    except OSError as e:
        raise ReportWriteError(f"Could not write {path}: {e}") from e
    return path


def alignment_cube(
    system: Alignment,
    reference: Alignment,
    baseline: Optional[Alignment] = None,
    completeness: GoldStandardCompleteness = GoldStandardCompleteness.COMPLETE,
) -> pd.DataFrame:
    """One row per correspondence of system or reference, sorted by identity."""
    baseline_keys = baseline.keys() if baseline is not None else set()
    all_keys = sorted(system.keys() | reference.keys(), key=key_order)

    feature_keys = sorted({k for alignment in (system, reference) for c in alignment for k in c.extensions})
    rows = []
    for key in all_keys:
        found = system.get(*key)
        if found is not None:
            verdict = judge(found, reference, completeness).value
            confidence = format_decimal(found.confidence)
            extensions = found.extensions
        else:
            verdict = FALSE_NEGATIVE
            confidence = ""
            extensions = reference.get(*key).extensions
        residual = verdict == Verdict.TRUE_POSITIVE.value and key not in baseline_keys
        row = {
            "source": key[0],
            "target": key[1],
            "relation": key[2].value,
            "confidence": confidence,
            "verdict": verdict,
            "residualTP": "true" if residual else "false",
        }
        for feature in feature_keys:
            row[feature] = format_decimal(extensions[feature]) if feature in extensions else ""
        rows.append(row)
    return pd.DataFrame(rows, columns=CUBE_COLUMNS + feature_keys, dtype=object)


def write_alignment_cube(
    system: Alignment,
    reference: Alignment,
    path: Union[str, Path],
    baseline: Optional[Alignment] = None,
    completeness: GoldStandardCompleteness = GoldStandardCompleteness.COMPLETE,
) -> Path:
    """
    Write the alignment cube CSV: one row per system or reference correspondence.

    Args:
        system: Alignment whose features become columns
        reference: Gold standard; missed pairs appear as FN rows
        path: CSV file to write
        baseline: Marks residual true positives when given
        completeness: Used to judge system rows

    Returns:
        The written path

    Raises:
        ReportWriteError: When the file cannot be written
    """
    frame = alignment_cube(system, reference, baseline, completeness)
    written = _write_frame(frame, path)
    logger.info(f"Wrote alignment cube with {len(frame)} rows to {written}")
    return written


def write_metrics_summary(records: Iterable[EvaluationRecord], path: Union[str, Path]) -> Path:
    """One CSV row per (test case, label) evaluation."""
    rows: List[dict] = []
    for record in records:
        m, c = record.metrics, record.counts
        rows.append({
            "test_case": record.test_case,
            "label": record.label,
            "precision": format_decimal(m.precision),
            "recall": format_decimal(m.recall),
            "f1": format_decimal(m.f1),
            "residual_recall": "" if m.residual_recall is None else format_decimal(m.residual_recall),
            "tp": c.true_positives,
            "fp": c.false_positives,
            "fn": c.false_negatives,
            "unjudged": c.unjudged,
        })
    written = _write_frame(pd.DataFrame(rows, columns=SUMMARY_COLUMNS), path)
    logger.info(f"Wrote metrics summary ({len(rows)} rows) to {written}")
    return written
