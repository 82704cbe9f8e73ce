"""Classifier zoo for match classification.

Every grid point is a ClassifierSpec (family, hyperparameters, scaling).
Specs turn into scikit-learn estimators, wrapped in a MinMaxScaler pipeline
when scaling is MIN_MAX. Neural nets take their layer sizes from the number
of features F, which is only known at training time.
"""

import json
import math
import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.ensemble import GradientBoostingClassifier, RandomForestClassifier
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression
from sklearn.naive_bayes import GaussianNB
from sklearn.pipeline import Pipeline
from sklearn.preprocessing import MinMaxScaler
from sklearn.svm import SVC
from sklearn.tree import DecisionTreeClassifier

from alignment import CorrespondenceKey
from neural_net import FeedForwardClassifier

logger = logging.getLogger("Classifiers")


class ClassifierFamily(Enum):
    DECISION_TREE = "decision_tree"
    GRADIENT_BOOSTED_TREES = "gradient_boosted_trees"
    RANDOM_FOREST = "random_forest"
    NAIVE_BAYES = "naive_bayes"
    SVM_RBF = "svm_rbf"
    NEURAL_NET = "neural_net"


class Scaling(Enum):
    NONE = "none"
    MIN_MAX = "min_max"


class Label(Enum):
    NEGATIVE = 0
    POSITIVE = 1


TREE_FAMILIES = (
    ClassifierFamily.DECISION_TREE,
    ClassifierFamily.GRADIENT_BOOSTED_TREES,
    ClassifierFamily.RANDOM_FOREST,
)

# Hidden layer layouts in terms of the feature count F
TOPOLOGIES = ("F/2+2", "sqrt(F)", "F/2,sqrt(F)")

GBT_LEARNING_RATE = 0.1
SVM_TOLERANCE = 1e-3
NB_VAR_SMOOTHING = 1e-9
NN_LEARNING_RATE = 0.01
NN_EPOCHS = 200


class ClassifierSpecError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierSpec:
    family: ClassifierFamily
    hyperparameters: Tuple[Tuple[str, Any], ...] = ()
    scaling: Scaling = Scaling.NONE

    @classmethod
    def of(cls, family: ClassifierFamily, scaling: Scaling = Scaling.NONE, **hyperparameters) -> "ClassifierSpec":
        return cls(family, tuple(sorted(hyperparameters.items())), scaling)

    @property
    def params(self) -> Dict[str, Any]:
        return dict(self.hyperparameters)

    def with_scaling(self, scaling: Scaling) -> "ClassifierSpec":
        return ClassifierSpec(self.family, self.hyperparameters, scaling)

    def describe(self) -> str:
        params = ", ".join(f"{k}={v}" for k, v in self.hyperparameters)
        return f"{self.family.value}({params}) scaling={self.scaling.value}"


@dataclass
class LabeledDataset:
    """Feature matrix (rows x len(feature_keys)) with 0/1 labels and row identities."""
    feature_keys: List[str]
    X: np.ndarray
    y: np.ndarray
    keys: List[CorrespondenceKey] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64).reshape(-1, len(self.feature_keys))
        self.y = np.asarray(self.y, dtype=int)
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"{self.X.shape[0]} feature rows but {self.y.shape[0]} labels")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def labels(self) -> List[Label]:
        return [Label(int(v)) for v in self.y]

    @property
    def positives(self) -> int:
        return int(self.y.sum())

    @property
    def negatives(self) -> int:
        return int(len(self) - self.y.sum())


@dataclass
class TrainedModel:
    spec: ClassifierSpec
    estimator: Any
    n_features: int
    feature_keys: List[str] = field(default_factory=list)
    cv_f1: float = float("nan")
    converged: bool = True
    cv_results: List[Any] = field(default_factory=list)

    @property
    def scaler(self) -> Optional[MinMaxScaler]:
        if isinstance(self.estimator, Pipeline):
            return self.estimator.named_steps["scale"]
        return None


class PlattScaledSVC(ClassifierMixin, BaseEstimator):
    """RBF SVM whose margin is mapped to a probability by a sigmoid fit on the training data."""

    def __init__(self, C: float = 1.0, gamma: float = 1.0, tol: float = SVM_TOLERANCE, random_state: Optional[int] = None):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y):
        self.svc_ = SVC(kernel="rbf", C=self.C, gamma=self.gamma, tol=self.tol, random_state=self.random_state)
        self.svc_.fit(X, y)
        self.classes_ = self.svc_.classes_
        margins = self.svc_.decision_function(X).reshape(-1, 1)
        self.platt_ = LogisticRegression().fit(margins, y)
        return self

    def decision_function(self, X) -> np.ndarray:
        return self.svc_.decision_function(X)

    def predict_proba(self, X) -> np.ndarray:
        return self.platt_.predict_proba(self.decision_function(X).reshape(-1, 1))

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) > 0, self.classes_[1], self.classes_[0])


def _int_in(params: Dict[str, Any], name: str, low: int, high: int) -> int:
    value = params.get(name)
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or not (low <= value <= high):
        raise ClassifierSpecError(f"{name} must be an integer in [{low}, {high}], got {value!r}")
    return int(value)


def _float_in(params: Dict[str, Any], name: str, low: float, high: float) -> float:
    value = params.get(name)
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not (low <= value <= high):
        raise ClassifierSpecError(f"{name} must lie in [{low}, {high}], got {value!r}")
    return float(value)


_ALLOWED_PARAMS = {
    ClassifierFamily.DECISION_TREE: {"min_leaf_size", "max_depth"},
    ClassifierFamily.GRADIENT_BOOSTED_TREES: {"max_depth", "num_trees"},
    ClassifierFamily.RANDOM_FOREST: {"num_trees", "min_leaf_size"},
    ClassifierFamily.NAIVE_BAYES: set(),
    ClassifierFamily.SVM_RBF: {"C", "gamma"},
    ClassifierFamily.NEURAL_NET: {"topology", "learning_rate", "epochs"},
}


def validate_spec(spec: ClassifierSpec) -> None:
    """Raise ClassifierSpecError when spec lies outside the search grid's ranges."""
    params = spec.params
    unknown = set(params) - _ALLOWED_PARAMS[spec.family]
    if unknown:
        raise ClassifierSpecError(f"Unknown hyperparameters for {spec.family.value}: {sorted(unknown)}")

    if spec.family is ClassifierFamily.DECISION_TREE:
        _int_in(params, "min_leaf_size", 1, 20)
        _int_in(params, "max_depth", 1, 20)
    elif spec.family is ClassifierFamily.GRADIENT_BOOSTED_TREES:
        _int_in(params, "max_depth", 1, 21)
        _int_in(params, "num_trees", 1, 101)
    elif spec.family is ClassifierFamily.RANDOM_FOREST:
        _int_in(params, "num_trees", 1, 100)
        _int_in(params, "min_leaf_size", 1, 10)
    elif spec.family is ClassifierFamily.SVM_RBF:
        _float_in(params, "C", 2.0 ** -5, 2.0 ** 15)
        _float_in(params, "gamma", 2.0 ** -15, 2.0 ** 3)
    elif spec.family is ClassifierFamily.NEURAL_NET:
        if params.get("topology") not in TOPOLOGIES:
            raise ClassifierSpecError(f"topology must be one of {TOPOLOGIES}, got {params.get('topology')!r}")
        if "learning_rate" in params:
            _float_in(params, "learning_rate", 1e-6, 10.0)
        if "epochs" in params:
            _int_in(params, "epochs", 1, 100000)


def hidden_layer_sizes(topology: str, n_features: int) -> Tuple[int, ...]:
    half = max(1, n_features // 2)
    root = max(1, int(round(math.sqrt(n_features))))
    if topology == "F/2+2":
        return (n_features // 2 + 2,)
    if topology == "sqrt(F)":
        return (root,)
    if topology == "F/2,sqrt(F)":
        return (half, root)
    raise ClassifierSpecError(f"Unknown topology {topology!r}")


def build_estimator(spec: ClassifierSpec, n_features: int, seed: int = 0):
    """Unfitted estimator for spec; a MinMaxScaler pipeline when scaling is MIN_MAX."""
    validate_spec(spec)
    params = spec.params
    family = spec.family

    if family is ClassifierFamily.DECISION_TREE:
        model = DecisionTreeClassifier(
            criterion="gini",
            min_samples_leaf=params["min_leaf_size"],
            max_depth=params["max_depth"],
            random_state=seed,
        )
    elif family is ClassifierFamily.GRADIENT_BOOSTED_TREES:
        model = GradientBoostingClassifier(
            loss="log_loss",
            learning_rate=GBT_LEARNING_RATE,
            max_depth=params["max_depth"],
            n_estimators=params["num_trees"],
            random_state=seed,
        )
    elif family is ClassifierFamily.RANDOM_FOREST:
        model = RandomForestClassifier(
            n_estimators=params["num_trees"],
            min_samples_leaf=params["min_leaf_size"],
            max_features="sqrt",
            random_state=seed,
            n_jobs=1,
        )
    elif family is ClassifierFamily.NAIVE_BAYES:
        model = GaussianNB(var_smoothing=NB_VAR_SMOOTHING)
    elif family is ClassifierFamily.SVM_RBF:
        model = PlattScaledSVC(C=params["C"], gamma=params["gamma"], random_state=seed)
    else:
        model = FeedForwardClassifier(
            hidden_layer_sizes=hidden_layer_sizes(params["topology"], n_features),
            learning_rate=params.get("learning_rate", NN_LEARNING_RATE),
            epochs=params.get("epochs", NN_EPOCHS),
            random_state=seed,
        )

    if spec.scaling is Scaling.MIN_MAX:
        return Pipeline([("scale", MinMaxScaler(clip=True)), ("model", model)])
    return model


def _exponents(start: int, stop: int, step: int) -> List[float]:
    return [2.0 ** e for e in range(start, stop + 1, step)]


def default_grid(coarse: bool = False, families: Optional[Iterable[ClassifierFamily]] = None) -> List[ClassifierSpec]:
    """Search grid in deterministic order; each point appears without and then with scaling.

    coarse=True thins the larger axes for quick runs.
    """
    wanted = set(families) if families is not None else set(ClassifierFamily)
    base: List[ClassifierSpec] = []

    if ClassifierFamily.DECISION_TREE in wanted:
        step = 4 if coarse else 1
        for leaf in range(1, 21, step):
            for depth in range(1, 21, step):
                base.append(ClassifierSpec.of(ClassifierFamily.DECISION_TREE, min_leaf_size=leaf, max_depth=depth))

    if ClassifierFamily.GRADIENT_BOOSTED_TREES in wanted:
        depths = [1, 6, 11] if coarse else [1, 6, 11, 16, 21]
        trees = [1, 41, 81] if coarse else [1, 21, 41, 61, 81, 101]
        for depth in depths:
            for n in trees:
                base.append(ClassifierSpec.of(ClassifierFamily.GRADIENT_BOOSTED_TREES, max_depth=depth, num_trees=n))

    if ClassifierFamily.RANDOM_FOREST in wanted:
        trees = [1, 31, 61, 91] if coarse else list(range(1, 100, 10))
        leaves = [1, 4, 7, 10] if coarse else list(range(1, 11))
        for n in trees:
            for leaf in leaves:
                base.append(ClassifierSpec.of(ClassifierFamily.RANDOM_FOREST, num_trees=n, min_leaf_size=leaf))

    if ClassifierFamily.NAIVE_BAYES in wanted:
        base.append(ClassifierSpec.of(ClassifierFamily.NAIVE_BAYES))

    if ClassifierFamily.SVM_RBF in wanted:
        cs = _exponents(-5, 15, 4) if coarse else _exponents(-5, 15, 2)
        gammas = _exponents(-15, 3, 4) if coarse else _exponents(-15, 3, 2)
        for c in cs:
            for gamma in gammas:
                base.append(ClassifierSpec.of(ClassifierFamily.SVM_RBF, C=c, gamma=gamma))

    if ClassifierFamily.NEURAL_NET in wanted:
        for topology in TOPOLOGIES:
            base.append(ClassifierSpec.of(ClassifierFamily.NEURAL_NET, topology=topology))

    return [spec.with_scaling(scaling) for spec in base for scaling in (Scaling.NONE, Scaling.MIN_MAX)]


def min_max_fit(dataset: LabeledDataset) -> MinMaxScaler:
    """Per-feature (min, max); constant features map to 0, unseen values are clamped to [0, 1]."""
    if len(dataset) < 1:
        raise ValueError("min_max_fit needs at least one row")
    return MinMaxScaler(clip=True).fit(dataset.X)


def min_max_apply(scaler: MinMaxScaler, vector: Sequence[float]) -> np.ndarray:
    row = np.asarray(vector, dtype=np.float64).reshape(1, -1)
    if row.shape[1] != scaler.n_features_in_:
        raise ValueError(f"Vector has {row.shape[1]} features, scaler was fit on {scaler.n_features_in_}")
    return scaler.transform(row)[0]


def _fit_quietly(estimator, X: np.ndarray, y: np.ndarray) -> bool:
    """Fit; return False if the solver reported non-convergence."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        estimator.fit(X, y)
    converged = not any(issubclass(w.category, ConvergenceWarning) for w in caught)
    final = estimator.named_steps["model"] if isinstance(estimator, Pipeline) else estimator
    if isinstance(final, FeedForwardClassifier):
        converged = converged and final.converged_
    return converged


def train_classifier(dataset: LabeledDataset, spec: ClassifierSpec, seed: int = 0) -> TrainedModel:
    """
    Fit spec on the whole dataset; deterministic for a given seed.

    Args:
        dataset: Labeled rows with both classes present
        spec: Family, hyperparameters and scaling
        seed: Random state for the estimator

    Returns:
        The fitted model; converged is False when the solver warned
    """
    if dataset.positives == 0 or dataset.negatives == 0:
        raise ValueError("Training needs both positive and negative rows")
    n_features = len(dataset.feature_keys)
    estimator = build_estimator(spec, n_features, seed)
    converged = _fit_quietly(estimator, dataset.X, dataset.y)
    if not converged:
        logger.warning(f"{spec.describe()} did not converge within its budget; using the model as is")
    return TrainedModel(spec, estimator, n_features, list(dataset.feature_keys), converged=converged)


def predict_many(model: TrainedModel, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(0/1 labels, positive-class scores in [0, 1]) for each row of X."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"Expected rows of {model.n_features} features, got shape {X.shape}")
    if X.shape[0] == 0:
        return np.zeros(0, dtype=int), np.zeros(0)
    labels = np.asarray(model.estimator.predict(X), dtype=int)
    scores = np.clip(model.estimator.predict_proba(X)[:, 1], 0.0, 1.0)
    return labels, scores


def predict(model: TrainedModel, vector: Sequence[float]) -> Tuple[Label, float]:
    row = np.asarray(vector, dtype=np.float64).reshape(1, -1)
    labels, scores = predict_many(model, row)
    return Label(int(labels[0])), float(scores[0])


def spec_to_json(spec: ClassifierSpec) -> str:
    return json.dumps(spec.params, sort_keys=True)
