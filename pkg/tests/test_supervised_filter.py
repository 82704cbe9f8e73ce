import csv
import json

import numpy as np
import pytest

from alignment import Alignment, Correspondence, GoldStandardCompleteness
from classifiers import ClassifierFamily, ClassifierSpec, LabeledDataset, Scaling, default_grid
from supervised_filter import (
    SCORE_KEY,
    DegenerateTrainingSetError,
    GridSearchError,
    SupervisedMatchFilter,
    build_training_data,
    collect_feature_keys,
    cross_validate_grid,
    supervised_match_filter,
    write_model_report,
)

DT_GRID = default_grid(coarse=True, families=[ClassifierFamily.DECISION_TREE])


def candidates_and_positives(n=20, n_positive=12, seed=0):
    """Each source has its right target (high feature) and a wrong one (low feature)."""
    rng = np.random.default_rng(seed)
    candidates = Alignment()
    for i in range(n):
        candidates.add(Correspondence(f"s{i:02d}", f"t{i:02d}", extensions={
            "filter/a": float(rng.uniform(0.7, 1.0)), "filter/b": float(rng.uniform(0, 1)),
        }))
        candidates.add(Correspondence(f"s{i:02d}", f"u{i:02d}", extensions={
            "filter/a": float(rng.uniform(0.0, 0.3)), "filter/b": float(rng.uniform(0, 1)),
        }))
    positives = Alignment(Correspondence(f"s{i:02d}", f"t{i:02d}") for i in range(n_positive))
    return candidates, positives


class TestBuildTrainingData:
    def test_labels_and_exclusions(self):
        candidates = Alignment([
            Correspondence("a", "b", extensions={"filter/x": 0.9}),
            Correspondence("a", "c", extensions={"filter/x": 0.1}),
            Correspondence("d", "e", extensions={"filter/x": 0.5}),
        ])
        data = build_training_data(candidates, Alignment([Correspondence("a", "b")]), ["filter/x"])
        assert dict(zip([k[:2] for k in data.keys], data.y.tolist())) == {("a", "b"): 1, ("a", "c"): 0}

    def test_missing_features_are_zero(self):
        candidates = Alignment([
            Correspondence("a", "b", extensions={"filter/x": 0.9}),
            Correspondence("a", "c"),
        ])
        data = build_training_data(candidates, Alignment([Correspondence("a", "b")]), ["filter/x", "filter/y"])
        assert data.X.tolist() == [[0.9, 0.0], [0.0, 0.0]]

    def test_no_negatives(self):
        candidates = Alignment([Correspondence("a", "b", extensions={"filter/x": 1.0})])
        with pytest.raises(DegenerateTrainingSetError, match="degenerate training set"):
            build_training_data(candidates, candidates, ["filter/x"])

    def test_no_positives(self):
        candidates = Alignment([Correspondence("a", "c", extensions={"filter/x": 1.0})])
        with pytest.raises(DegenerateTrainingSetError):
            build_training_data(candidates, Alignment([Correspondence("a", "b")]), ["filter/x"])

    def test_fully_incomplete_positives_rejected(self):
        candidates, positives = candidates_and_positives()
        with pytest.raises(DegenerateTrainingSetError):
            build_training_data(
                candidates, positives, ["filter/a"],
                GoldStandardCompleteness.PARTIAL_SOURCE_INCOMPLETE_TARGET_INCOMPLETE,
            )

    def test_complete_positives_label_everything(self):
        candidates, positives = candidates_and_positives()
        data = build_training_data(candidates, positives, ["filter/a"], GoldStandardCompleteness.COMPLETE)
        assert len(data) == len(candidates)
        assert data.positives == len(positives)


class TestCollectFeatureKeys:
    def test_prefixes_and_order(self):
        a = Alignment([
            Correspondence("a", "b", extensions={"filter/z": 1.0, "ml/score": 0.5}),
            Correspondence("c", "d", extensions={"base/exact": 1.0, "filter/a": 0.0}),
        ])
        assert collect_feature_keys(a) == ["base/exact", "filter/a", "filter/z"]


class TestCrossValidateGrid:
    def test_separable_data_reaches_perfect_f1(self):
        candidates, positives = candidates_and_positives()
        data = build_training_data(candidates, positives, ["filter/a", "filter/b"])
        model = cross_validate_grid(data, DT_GRID, folds=5, seed=1)
        assert model.cv_f1 == 1.0
        assert len(model.cv_results) == len(DT_GRID)

    def test_single_point_grid(self):
        candidates, positives = candidates_and_positives()
        data = build_training_data(candidates, positives, ["filter/a"])
        spec = ClassifierSpec.of(ClassifierFamily.NAIVE_BAYES)
        model = cross_validate_grid(data, [spec], folds=3, seed=0)
        assert model.spec == spec

    def test_ties_keep_first_spec(self):
        candidates, positives = candidates_and_positives()
        data = build_training_data(candidates, positives, ["filter/a"])
        model = cross_validate_grid(data, DT_GRID, folds=5, seed=0)
        assert model.spec == DT_GRID[0]

    def test_same_selection_across_thread_counts(self):
        candidates, positives = candidates_and_positives(seed=5)
        data = build_training_data(candidates, positives, ["filter/a", "filter/b"])
        grid = default_grid(coarse=True, families=[ClassifierFamily.NAIVE_BAYES, ClassifierFamily.DECISION_TREE])
        serial = cross_validate_grid(data, grid, folds=4, seed=3, threads=1)
        threaded = cross_validate_grid(data, grid, folds=4, seed=3, threads=4)
        assert serial.spec == threaded.spec
        assert serial.cv_f1 == threaded.cv_f1

    def test_empty_grid(self):
        candidates, positives = candidates_and_positives()
        data = build_training_data(candidates, positives, ["filter/a"])
        with pytest.raises(GridSearchError):
            cross_validate_grid(data, [], folds=3)

    def test_too_few_rows_for_folds(self):
        data = LabeledDataset(["f"], np.array([[0.0], [1.0]]), [0, 1])
        with pytest.raises(ValueError):
            cross_validate_grid(data, DT_GRID, folds=5)

    def test_failing_grid_points_are_skipped(self):
        candidates, positives = candidates_and_positives()
        data = build_training_data(candidates, positives, ["filter/a"])
        broken = ClassifierSpec.of(ClassifierFamily.DECISION_TREE, min_leaf_size=0, max_depth=1)
        good = ClassifierSpec.of(ClassifierFamily.NAIVE_BAYES, Scaling.MIN_MAX)
        model = cross_validate_grid(data, [broken, good], folds=3)
        assert model.spec == good
        assert model.cv_results[0].error

    def test_all_grid_points_failing(self):
        candidates, positives = candidates_and_positives()
        data = build_training_data(candidates, positives, ["filter/a"])
        broken = ClassifierSpec.of(ClassifierFamily.DECISION_TREE, min_leaf_size=0, max_depth=1)
        with pytest.raises(GridSearchError):
            cross_validate_grid(data, [broken], folds=3)


class TestSupervisedMatchFilter:
    def test_recovers_held_out_matches(self):
        candidates, positives = candidates_and_positives()
        match_filter = SupervisedMatchFilter(folds=5, seed=2, grid=DT_GRID)
        result = match_filter.filter(candidates, positives)
        assert {(c.source, c.target) for c in result} == {(f"s{i:02d}", f"t{i:02d}") for i in range(20)}
        assert match_filter.model.cv_f1 == 1.0

    def test_output_is_subset_with_scores(self):
        candidates, positives = candidates_and_positives(seed=8)
        result = supervised_match_filter(candidates, positives, grid=DT_GRID, folds=3)
        assert result.keys() <= candidates.keys()
        for c in result:
            assert 0.0 <= c.extensions[SCORE_KEY] <= 1.0
            assert c.confidence == candidates.get(c.source, c.target).confidence

    def test_no_features(self):
        candidates = Alignment([Correspondence("a", "b"), Correspondence("a", "c")])
        with pytest.raises(DegenerateTrainingSetError):
            SupervisedMatchFilter(grid=DT_GRID).filter(candidates, Alignment([Correspondence("a", "b")]))

    def test_model_report(self, tmp_path):
        candidates, positives = candidates_and_positives()
        match_filter = SupervisedMatchFilter(folds=3, grid=DT_GRID[:4])
        match_filter.filter(candidates, positives)
        path = write_model_report(match_filter.model, tmp_path / "model_selection.csv")

        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 4
        assert [row["selected"] for row in rows].count("True") >= 1
        assert rows[0]["family"] == "decision_tree"
        assert len(json.loads(rows[0]["fold_f1"])) == 3
        assert json.loads(rows[0]["hyperparameters"]) == DT_GRID[0].params
