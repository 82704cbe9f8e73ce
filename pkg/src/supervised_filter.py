import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from sklearn.exceptions import ConvergenceWarning
from sklearn.metrics import f1_score
from sklearn.model_selection import StratifiedKFold

from alignment import Alignment, GoldStandardCompleteness, Verdict, judge
from classifiers import (
    ClassifierSpec,
    LabeledDataset,
    Label,
    TrainedModel,
    build_estimator,
    default_grid,
    predict_many,
    spec_to_json,
    train_classifier,
)

logger = logging.getLogger("SupervisedFilter")

SCORE_KEY = "ml/score"
FEATURE_PREFIXES = ("filter/", "base/")


class DegenerateTrainingSetError(ValueError):
    pass


class GridSearchError(RuntimeError):
    pass


@dataclass
class CvResult:
    spec: ClassifierSpec
    fold_f1: List[float] = field(default_factory=list)
    mean_f1: float = float("nan")
    error: Optional[str] = None


def collect_feature_keys(alignment: Alignment, prefixes: Sequence[str] = FEATURE_PREFIXES) -> List[str]:
    """Sorted extension keys present in the alignment that start with one of prefixes."""
    keys = set()
    for c in alignment:
        keys.update(k for k in c.extensions if k.startswith(tuple(prefixes)))
    return sorted(keys)


def build_training_data(
    candidates: Alignment,
    positives: Alignment,
    feature_keys: Sequence[str],
    completeness: GoldStandardCompleteness = GoldStandardCompleteness.PARTIAL_SOURCE_COMPLETE_TARGET_COMPLETE,
) -> LabeledDataset:
    """Label candidates against a positive alignment.

    A candidate in positives is a positive row. Any other candidate is a
    negative row when it can be judged wrong against positives (with the
    default completeness: its source or its target occurs in positives);
    the remaining candidates are left out. Missing feature values are 0.

    Args:
        candidates: Alignment whose extensions hold the features
        positives: Known-correct correspondences, usually a reference sample
        feature_keys: Column order of the feature matrix
        completeness: Decides which non-positive candidates count as negatives

    Returns:
        The labeled dataset

    Raises:
        DegenerateTrainingSetError: When negatives cannot be derived or a class is missing
    """
    if completeness is GoldStandardCompleteness.PARTIAL_SOURCE_INCOMPLETE_TARGET_INCOMPLETE:
        raise DegenerateTrainingSetError(
            "degenerate training set: negatives cannot be derived when both sides are incomplete"
        )

    rows, labels, keys = [], [], []
    for c in candidates.sorted():
        verdict = judge(c, positives, completeness)
        if verdict is Verdict.UNJUDGEABLE:
            continue
        rows.append([c.extensions.get(k, 0.0) for k in feature_keys])
        labels.append(1 if verdict is Verdict.TRUE_POSITIVE else 0)
        keys.append(c.key)

    dataset = LabeledDataset(list(feature_keys), np.asarray(rows, dtype=np.float64), labels, keys)
    logger.info(f"Training data: {dataset.positives} positive, {dataset.negatives} negative rows, {len(feature_keys)} features")
    if dataset.positives == 0 or dataset.negatives == 0:
        raise DegenerateTrainingSetError(
            f"degenerate training set: {dataset.positives} positive and {dataset.negatives} negative rows"
        )
    return dataset


def _evaluate_spec(spec: ClassifierSpec, dataset: LabeledDataset, folds, seed: int) -> CvResult:
    result = CvResult(spec)
    try:
        for train_idx, test_idx in folds:
            y_train = dataset.y[train_idx]
            if len(np.unique(y_train)) < 2:
                result.fold_f1.append(0.0)
                continue
            estimator = build_estimator(spec, len(dataset.feature_keys), seed)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                estimator.fit(dataset.X[train_idx], y_train)
            predicted = estimator.predict(dataset.X[test_idx])
            result.fold_f1.append(float(f1_score(dataset.y[test_idx], predicted, pos_label=1, zero_division=0)))
        result.mean_f1 = float(np.mean(result.fold_f1))
    except Exception as e:
        logger.warning(f"Grid point {spec.describe()} failed: {e}")
        result.error = str(e)
    return result


def cross_validate_grid(
    dataset: LabeledDataset,
    grid: Sequence[ClassifierSpec],
    folds: int = 5,
    seed: int = 0,
    threads: int = 1,
) -> TrainedModel:
    """Stratified k-fold grid search by positive-class F1, then refit the best spec on all rows.

    Ties keep the earliest spec in grid order. Fold splits come from the
    master seed, so serial and threaded runs select the same model.

    Args:
        dataset: Labeled training rows
        grid: Classifier specs, evaluated in this order
        folds: Number of stratified folds, at least 2
        seed: Seed for fold splits and the classifiers
        threads: Worker threads for grid points

    Returns:
        The refitted best model with the full cross-validation table

    Raises:
        GridSearchError: When the grid is empty or no grid point can be evaluated
    """
    if folds < 2:
        raise ValueError(f"Cross-validation needs at least 2 folds, got {folds}")
    if len(dataset) < folds:
        raise ValueError(f"{len(dataset)} rows cannot be split into {folds} folds")
    if dataset.positives == 0 or dataset.negatives == 0:
        raise DegenerateTrainingSetError("degenerate training set: cross-validation needs both classes")
    if not grid:
        raise GridSearchError("Empty classifier grid")

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
        splits = list(splitter.split(dataset.X, dataset.y))
    if all(len(np.unique(dataset.y[train])) < 2 for train, _ in splits):
        raise GridSearchError("Every fold lacks one class in its training part")

    logger.info(f"Evaluating {len(grid)} grid points with {folds}-fold cross-validation ({threads} threads)")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        results = list(executor.map(lambda spec: _evaluate_spec(spec, dataset, splits, seed), grid))

    best: Optional[CvResult] = None
    for result in results:
        if result.error is None and (best is None or result.mean_f1 > best.mean_f1):
            best = result
    if best is None:
        raise GridSearchError("No grid point could be evaluated")

    logger.info(f"Selected {best.spec.describe()} with CV F1 {best.mean_f1:.4f}")
    model = train_classifier(dataset, best.spec, seed)
    model.cv_f1 = best.mean_f1
    model.cv_results = results
    return model


class SupervisedMatchFilter:
    """Train on candidates labeled against a positive alignment and drop predicted negatives.

    Survivors keep their confidence and gain the positive-class score under
    "ml/score". The selected model stays available as `model`.
    """

    def __init__(
        self,
        feature_keys: Optional[Sequence[str]] = None,
        folds: int = 5,
        seed: int = 0,
        grid: Optional[Sequence[ClassifierSpec]] = None,
        threads: int = 1,
        completeness: GoldStandardCompleteness = GoldStandardCompleteness.PARTIAL_SOURCE_COMPLETE_TARGET_COMPLETE,
    ):
        self.feature_keys = list(feature_keys) if feature_keys is not None else None
        self.folds = folds
        self.seed = seed
        self.grid = list(grid) if grid is not None else default_grid()
        self.threads = threads
        self.completeness = completeness
        self.model: Optional[TrainedModel] = None

    def filter(self, candidates: Alignment, positives: Alignment) -> Alignment:
        feature_keys = self.feature_keys if self.feature_keys is not None else collect_feature_keys(candidates)
        if not feature_keys:
            raise DegenerateTrainingSetError("degenerate training set: candidates carry no feature values")

        dataset = build_training_data(candidates, positives, feature_keys, self.completeness)
        self.model = cross_validate_grid(dataset, self.grid, self.folds, self.seed, self.threads)

        ordered = candidates.sorted()
        X = np.asarray([[c.extensions.get(k, 0.0) for k in feature_keys] for c in ordered], dtype=np.float64)
        X = X.reshape(len(ordered), len(feature_keys))
        labels, scores = predict_many(self.model, X)

        result = Alignment()
        for c, label, score in zip(ordered, labels, scores):
            if Label(int(label)) is Label.POSITIVE:
                kept = c.copy()
                kept.extensions[SCORE_KEY] = float(score)
                result.add(kept)
        logger.info(f"Supervised filter kept {len(result)} of {len(candidates)} correspondences")
        return result


def supervised_match_filter(
    candidates: Alignment,
    positives: Alignment,
    feature_keys: Optional[Sequence[str]] = None,
    folds: int = 5,
    seed: int = 0,
    grid: Optional[Sequence[ClassifierSpec]] = None,
    threads: int = 1,
) -> Alignment:
    return SupervisedMatchFilter(feature_keys, folds, seed, grid, threads).filter(candidates, positives)


def write_model_report(model: TrainedModel, path: Union[str, Path]) -> Path:
    """Model-selection CSV: one row per evaluated grid point."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for result in model.cv_results:
        rows.append({
            "family": result.spec.family.value,
            "hyperparameters": spec_to_json(result.spec),
            "scaling": result.spec.scaling.value,
            "mean_f1": None if math.isnan(result.mean_f1) else round(result.mean_f1, 10),
            "fold_f1": json.dumps([round(v, 10) for v in result.fold_f1]),
            "error": result.error or "",
            "selected": result.spec == model.spec,
        })
    columns = ["family", "hyperparameters", "scaling", "mean_f1", "fold_f1", "error", "selected"]
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, lineterminator="\r\n")
    logger.info(f"Wrote model report ({len(rows)} grid points) to {path}")
    return path
