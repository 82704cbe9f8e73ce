"""Small fully connected binary classifier trained with plain mini-batch SGD.

ReLU hidden layers, one sigmoid output unit, mean binary cross-entropy.
Written as a scikit-learn estimator so it slots into the same pipelines as
the rest of the classifier zoo; gradients are exposed for checking.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin

logger = logging.getLogger("NeuralNet")


class FeedForwardClassifier(ClassifierMixin, BaseEstimator):
    def __init__(
        self,
        hidden_layer_sizes: Sequence[int] = (4,),
        learning_rate: float = 0.01,
        epochs: int = 200,
        batch_size: int = 32,
        tol: float = 1e-4,
        random_state: Optional[int] = None,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.tol = tol
        self.random_state = random_state

    def _initialize(self, n_features: int, rng: np.random.Generator) -> None:
        sizes = [n_features, *self.hidden_layer_sizes, 1]
        self.weights_: List[np.ndarray] = []
        self.biases_: List[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            # He initialisation for ReLU layers
            self.weights_.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
            self.biases_.append(np.zeros(fan_out))

    def _forward(self, X: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        """Pre-activations and activations per layer (activations[0] is X)."""
        activations = [X]
        pre_activations = []
        for i, (W, b) in enumerate(zip(self.weights_, self.biases_)):
            z = activations[-1] @ W + b
            pre_activations.append(z)
            if i < len(self.weights_) - 1:
                activations.append(np.maximum(z, 0.0))
            else:
                activations.append(expit(z))
        return pre_activations, activations

    def loss_and_gradients(self, X: np.ndarray, y: np.ndarray) -> Tuple[float, List[Tuple[np.ndarray, np.ndarray]]]:
        """Mean cross-entropy and its (dW, db) per layer, by backpropagation."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
        n = X.shape[0]
        pre_activations, activations = self._forward(X)
        logits = pre_activations[-1]
        loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))

        grads: List[Tuple[np.ndarray, np.ndarray]] = []
        delta = (activations[-1] - y) / n
        for layer in range(len(self.weights_) - 1, -1, -1):
            grads.append((activations[layer].T @ delta, delta.sum(axis=0)))
            if layer > 0:
                delta = (delta @ self.weights_[layer].T) * (pre_activations[layer - 1] > 0)
        grads.reverse()
        return loss, grads

    def parameter_vector(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in zip(self.weights_, self.biases_)])

    def set_parameter_vector(self, vector: np.ndarray) -> None:
        offset = 0
        for i, (W, b) in enumerate(zip(self.weights_, self.biases_)):
            self.weights_[i] = vector[offset:offset + W.size].reshape(W.shape).copy()
            offset += W.size
            self.biases_[i] = vector[offset:offset + b.size].copy()
            offset += b.size

    def gradient_vector(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        _, grads = self.loss_and_gradients(X, y)
        return np.concatenate([np.concatenate([dW.ravel(), db.ravel()]) for dW, db in grads])

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"FeedForwardClassifier needs two classes, got {len(self.classes_)}")
        target = (y == self.classes_[1]).astype(np.float64)
        self.n_features_in_ = X.shape[1]

        rng = np.random.default_rng(self.random_state)
        self._initialize(X.shape[1], rng)
        batch = max(1, min(self.batch_size, X.shape[0]))

        self.loss_curve_: List[float] = []
        for _ in range(self.epochs):
            order = rng.permutation(X.shape[0])
            for start in range(0, X.shape[0], batch):
                idx = order[start:start + batch]
                _, grads = self.loss_and_gradients(X[idx], target[idx])
                for layer, (dW, db) in enumerate(grads):
                    self.weights_[layer] -= self.learning_rate * dW
                    self.biases_[layer] -= self.learning_rate * db
            self.loss_curve_.append(self.loss_and_gradients(X, target)[0])

        self.n_iter_ = self.epochs
        self.converged_ = (
            len(self.loss_curve_) >= 2
            and abs(self.loss_curve_[-2] - self.loss_curve_[-1]) < self.tol
        )
        if not self.converged_ and self.loss_curve_:
            logger.debug(f"No convergence within {self.epochs} epochs (final loss {self.loss_curve_[-1]:.5f})")
        return self

    def predict_proba(self, X) -> np.ndarray:
        _, activations = self._forward(np.asarray(X, dtype=np.float64))
        p = activations[-1].ravel()
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        p = self.predict_proba(X)[:, 1]
        return self.classes_[(p > 0.5).astype(int)]
