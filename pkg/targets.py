"""
Target Densities and Gradient Oracles

Each target is a finite sum f(x) = (1/n) * sum_i f_i(x); samplers draw from exp(-beta * f).
Component gradients are what a mini-batch sees, full_grad is their exact mean.
"""

import logging
import re
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from errors import (DimensionError, EmptyBatchError, LibsvmParseError,
                    TargetIndexError, UnsupportedTargetError)
from smoothing_operator import LaplacianOperator, apply_inverse

logger = logging.getLogger(__name__)

LOG_TWO = np.log(2.0)
LOG_TWO_THIRDS = np.log(2.0 / 3.0)
LOG_ONE_THIRD = np.log(1.0 / 3.0)


class TargetModel(ABC):
    """Finite-sum potential exposing per-component gradients."""

    d: int
    n: int

    @abstractmethod
    def component_grad(self, i: int, x) -> np.ndarray:
        """Gradient of f_i at x."""

    def batch_grad(self, x, batch) -> np.ndarray:
        """Mean of component gradients over the batch indices."""
        x = self._check_x(x)
        return np.mean([self.component_grad(int(i), x) for i in batch], axis=0)

    def full_grad(self, x) -> np.ndarray:
        return self.batch_grad(x, np.arange(self.n))

    def full_grad_rows(self, X) -> np.ndarray:
        """full_grad evaluated at every row of X."""
        return np.array([self.full_grad(x) for x in np.asarray(X, dtype=float)])

    @property
    def has_log_density(self) -> bool:
        return False

    def log_density_unnormalized(self, x) -> float:
        raise UnsupportedTargetError(f"{type(self).__name__} has no log-density")

    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise DimensionError(f"expected x of shape ({self.d},), got {x.shape}")
        return x

    def _check_index(self, i: int) -> int:
        if not 0 <= i < self.n:
            raise TargetIndexError(f"component index {i} outside [0, {self.n})")
        return i

    def _check_batch(self, batch) -> np.ndarray:
        batch = np.asarray(batch, dtype=int)
        if batch.size == 0:
            raise EmptyBatchError("mini-batch must contain at least one index")
        if batch.min() < 0 or batch.max() >= self.n:
            raise TargetIndexError(f"batch indices must lie in [0, {self.n})")
        return batch


class GaussianTarget(TargetModel):
    """
    f(x) = 0.5 * (x - mean)^T P (x - mean) with every component equal to f.

    n only sets how many (identical) components a batch can draw from.
    """

    def __init__(self, mean, covariance, n: int = 1):
        self.mean = np.asarray(mean, dtype=float)
        self.covariance = np.asarray(covariance, dtype=float)
        self.d = self.mean.shape[0]
        if self.covariance.shape != (self.d, self.d):
            raise DimensionError(f"covariance must be {self.d}x{self.d}, got {self.covariance.shape}")
        if not np.allclose(self.covariance, self.covariance.T):
            raise ValueError("covariance must be symmetric")
        try:
            np.linalg.cholesky(self.covariance)
        except np.linalg.LinAlgError:
            raise ValueError("covariance must be positive definite") from None
        self.precision = np.linalg.inv(self.covariance)
        self.precision = 0.5 * (self.precision + self.precision.T)
        self.n = int(n)

    def component_grad(self, i: int, x) -> np.ndarray:
        self._check_index(i)
        x = self._check_x(x)
        return self.precision @ (x - self.mean)

    def batch_grad(self, x, batch) -> np.ndarray:
        self._check_batch(batch)
        x = self._check_x(x)
        return self.precision @ (x - self.mean)

    def full_grad_rows(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) @ self.precision

    def potential(self, x) -> float:
        diff = self._check_x(x) - self.mean
        return 0.5 * float(diff @ self.precision @ diff)

    @property
    def has_log_density(self) -> bool:
        return True

    def log_density_unnormalized(self, x) -> float:
        return -self.potential(x)


def gaussian_2d_target(rho: float = 0.9, covariance=None) -> GaussianTarget:
    """Zero-mean 2D Gaussian: unit variances and correlation rho, or an explicit covariance."""
    if covariance is None:
        covariance = [[1.0, rho], [rho, 1.0]]
    return GaussianTarget(np.zeros(2), np.asarray(covariance, dtype=float))


def isotropic_mixing_target() -> GaussianTarget:
    """Density exp(-((x-1)^2 + (y-2)^2) / 9) / (9 pi): mean (1, 2), covariance 4.5 I."""
    return GaussianTarget(np.array([1.0, 2.0]), 4.5 * np.eye(2))


class MixturePairTarget(TargetModel):
    """
    Components exp(-f_i) = 2/3 N(a_i, I) + 1/3 N(-a_i, I) (up to a constant).

    f_i(x) = |x - a_i|^2 / 2 - log(2/3 + exp(-2 <a_i, x>) / 3)
    """

    def __init__(self, centers):
        self.centers = np.asarray(centers, dtype=float)
        if self.centers.ndim != 2 or self.centers.shape[0] == 0:
            raise DimensionError("centers must be a nonempty (n, d) array")
        self.n, self.d = self.centers.shape

    def component_grad(self, i: int, x) -> np.ndarray:
        self._check_index(i)
        return self._grads(self._check_x(x), self.centers[i:i + 1])[0]

    def batch_grad(self, x, batch) -> np.ndarray:
        batch = self._check_batch(batch)
        return self._grads(self._check_x(x), self.centers[batch]).mean(axis=0)

    def full_grad(self, x) -> np.ndarray:
        return self._grads(self._check_x(x), self.centers).mean(axis=0)

    @staticmethod
    def _grads(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
        z = 2.0 * (centers @ x)
        # derivative of the log term: 2 / (1 + 2 e^z) == 2 expit(-z - log 2)
        weight = 2.0 * expit(-LOG_TWO - z)
        return x[None, :] - centers + weight[:, None] * centers

    def component_logf(self, i: int, x) -> float:
        self._check_index(i)
        return float(self._logf(self._check_x(x), self.centers[i:i + 1])[0])

    @staticmethod
    def _logf(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
        sq = 0.5 * np.sum((x[None, :] - centers) ** 2, axis=1)
        return sq - np.logaddexp(LOG_TWO_THIRDS, LOG_ONE_THIRD - 2.0 * (centers @ x))

    def potential(self, x) -> float:
        return float(np.mean(self._logf(self._check_x(x), self.centers)))

    @property
    def has_log_density(self) -> bool:
        return True

    def log_density_unnormalized(self, x) -> float:
        return -self.potential(x)

    def dissipativity_offsets(self) -> np.ndarray:
        """b_i = |a_i|^2 / 2 for <grad f_i(x), x> >= |x|^2 / 2 - b_i."""
        return 0.5 * np.sum(self.centers ** 2, axis=1)


def sample_mixture_centers(rng: np.random.Generator, n: int = 500) -> np.ndarray:
    """Draw n centers from N((2, 2), 2 I)."""
    if n < 1:
        raise ValueError(f"need at least one center, got n={n}")
    return rng.multivariate_normal(mean=[2.0, 2.0], cov=2.0 * np.eye(2), size=n)


class BlrTarget(TargetModel):
    """
    Bayesian logistic regression with the Gamma-type prior |x|^-lambda * exp(-theta |x|).

    f_i(x) = n log(1 + exp(-y_i <d_i, x>)) + lambda log|x| + theta |x|
    Both prior terms use max(|x|, epsilon_norm) so x = 0 is finite.
    """

    def __init__(self, features, labels, prior_lambda: float = 1.0,
                 prior_theta: float = 1e-2, epsilon_norm: float = 1e-8):
        self.features = np.asarray(features, dtype=float)
        self.labels = np.asarray(labels, dtype=float)
        if self.features.ndim != 2:
            raise DimensionError("features must be an (n, d) matrix")
        self.n, self.d = self.features.shape
        if self.labels.shape != (self.n,):
            raise DimensionError(f"expected {self.n} labels, got shape {self.labels.shape}")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        self.prior_lambda = float(prior_lambda)
        self.prior_theta = float(prior_theta)
        self.epsilon_norm = float(epsilon_norm)

    def _prior_grad(self, x: np.ndarray) -> np.ndarray:
        sq = float(x @ x)
        norm = np.sqrt(sq)
        eps = self.epsilon_norm
        return self.prior_lambda * x / max(sq, eps * eps) + self.prior_theta * x / max(norm, eps)

    def _prior_value(self, x: np.ndarray) -> float:
        norm = max(float(np.linalg.norm(x)), self.epsilon_norm)
        return self.prior_lambda * np.log(norm) + self.prior_theta * float(np.linalg.norm(x))

    def _likelihood_grads(self, x: np.ndarray, rows: np.ndarray) -> np.ndarray:
        y = self.labels[rows]
        margins = y * (self.features[rows] @ x)
        return -(self.n * y * expit(-margins))[:, None] * self.features[rows]

    def component_grad(self, i: int, x) -> np.ndarray:
        self._check_index(i)
        x = self._check_x(x)
        return self._likelihood_grads(x, np.array([i]))[0] + self._prior_grad(x)

    def batch_grad(self, x, batch) -> np.ndarray:
        batch = self._check_batch(batch)
        x = self._check_x(x)
        return self._likelihood_grads(x, batch).mean(axis=0) + self._prior_grad(x)

    def full_grad(self, x) -> np.ndarray:
        x = self._check_x(x)
        margins = self.labels * (self.features @ x)
        weights = -self.labels * expit(-margins)
        return self.features.T @ weights + self._prior_grad(x)

    def component_logf(self, i: int, x) -> float:
        self._check_index(i)
        x = self._check_x(x)
        margin = self.labels[i] * (self.features[i] @ x)
        return self.n * float(np.logaddexp(0.0, -margin)) + self._prior_value(x)

    def potential(self, x) -> float:
        x = self._check_x(x)
        margins = self.labels * (self.features @ x)
        return float(np.sum(np.logaddexp(0.0, -margins))) + self._prior_value(x)

    @property
    def has_log_density(self) -> bool:
        return True

    def log_density_unnormalized(self, x) -> float:
        return -self.potential(x)


def stochastic_gradient(model: TargetModel, x, batch, op: Optional[LaplacianOperator] = None) -> np.ndarray:
    """
    Mini-batch mean gradient, optionally Laplacian-smoothed.

    Args:
        model: Target to differentiate
        x: Current iterate
        batch: Component indices (repeats allowed)
        op: If given, A_sigma^-1 is applied to the mean

    Returns:
        (1/B) sum_{i in batch} grad f_i(x), or its smoothed version
    """
    batch = np.asarray(batch, dtype=int)
    if batch.size == 0:
        raise EmptyBatchError("mini-batch must contain at least one index")
    grad = model.batch_grad(x, batch)
    if op is not None:
        grad = apply_inverse(op, grad)
    return grad


def default_label_map(raw: str) -> float:
    """+1 stays +1, anything else becomes -1."""
    return 1.0 if float(raw) == 1.0 else -1.0


_PAIR = re.compile(r'^(\d+):(\S+)$')


def load_libsvm(path, n_features: Optional[int] = None,
                label_map: Callable[[str], float] = default_label_map,
                prior_lambda: float = 1.0, prior_theta: float = 1e-2,
                epsilon_norm: float = 1e-8) -> BlrTarget:
    """
    Read a libsvm file ("label idx:val ...", 1-based indices) into a BlrTarget.

    Args:
        path: File to read
        n_features: Declared dimension; rows are padded to it (a3a declares 122)
        label_map: Maps the raw label token to -1/+1

    Returns:
        BlrTarget with d = max(n_features, largest index seen)
    """
    path = Path(path)
    labels = []
    rows = []
    max_index = 0

    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, 1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                label = label_map(tokens[0])
            except ValueError:
                raise LibsvmParseError(f"bad label {tokens[0]!r}", line_number)

            entries = []
            for token in tokens[1:]:
                match = _PAIR.match(token)
                if not match:
                    raise LibsvmParseError(f"bad feature token {token!r}", line_number)
                index = int(match.group(1))
                if index < 1:
                    raise LibsvmParseError(f"feature indices are 1-based, got {index}", line_number)
                try:
                    value = float(match.group(2))
                except ValueError:
                    raise LibsvmParseError(f"bad feature value {match.group(2)!r}", line_number)
                if n_features is not None and index > n_features:
                    raise LibsvmParseError(f"feature index {index} exceeds declared dimension {n_features}",
                                           line_number)
                entries.append((index - 1, value))
                max_index = max(max_index, index)

            labels.append(label)
            rows.append(entries)
            if len(rows) % 2000 == 0:
                logger.info("--- read %d rows from %s", len(rows), path.name)

    if not rows:
        raise LibsvmParseError(f"{path} contains no data rows")

    d = max(max_index, n_features or 0)
    features = np.zeros((len(rows), d))
    for r, entries in enumerate(rows):
        for j, value in entries:
            features[r, j] = value

    labels = np.asarray(labels)
    logger.info("Finished %s: %d rows, d=%d, %d positive %d negative",
                path.name, len(rows), d, int(np.sum(labels > 0)), int(np.sum(labels < 0)))
    return BlrTarget(features, labels, prior_lambda=prior_lambda,
                     prior_theta=prior_theta, epsilon_norm=epsilon_norm)


def save_libsvm(path, features, labels) -> None:
    """Write a dense feature matrix in libsvm format, skipping zero entries."""
    features = np.asarray(features, dtype=float)
    with open(path, 'w', encoding='utf-8') as f:
        for row, label in zip(features, labels):
            tokens = ['+1' if label > 0 else '-1']
            tokens += [f"{j + 1}:{value!r}" for j, value in enumerate(row.tolist()) if value != 0.0]
            f.write(' '.join(tokens) + '\n')


def make_synthetic_logistic(rng: np.random.Generator, n: int = 3000, d: int = 122,
                            density: float = 0.11, **prior) -> BlrTarget:
    """
    a3a-like data: sparse binary features, labels from a logistic model.

    Roughly density * d features are active per row, as in the one-hot encoded a3a rows.
    """
    features = (rng.random((n, d)) < density).astype(float)
    truth = rng.normal(0.0, 1.0, size=d)
    margins = features @ truth - np.mean(features @ truth)
    labels = np.where(rng.random(n) < expit(margins), 1.0, -1.0)
    return BlrTarget(features, labels, **prior)
