"""
Sample Quality Diagnostics

Autocorrelation time, moment errors, empirical 2-Wasserstein distance,
2D kernel density grids, and the mini-batch gradient variance profile.
All functions are pure; randomness only enters through an explicit seed.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.fft
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.stats import norm

from errors import (BatchSizeError, DimensionError, InsufficientSamplesError,
                    UndefinedACTError)
from samplers import SampleChain
from smoothing_operator import apply_inverse, build
from targets import BlrTarget, TargetModel

logger = logging.getLogger(__name__)

MIN_ACT_SAMPLES = 100
W2_MAX_DIM = 16

SamplesLike = Union[SampleChain, np.ndarray]


def _samples(data: SamplesLike) -> np.ndarray:
    if isinstance(data, SampleChain):
        return data.samples
    samples = np.asarray(data, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    return samples


def _statistic_values(data: SamplesLike, statistic: Optional[Callable]) -> np.ndarray:
    if isinstance(data, SampleChain) or np.asarray(data).ndim == 2:
        samples = _samples(data)
        if statistic is None:
            return samples[:, 0]
        return np.asarray([statistic(x) for x in samples], dtype=float)
    values = np.asarray(data, dtype=float)
    return values if statistic is None else np.asarray([statistic(v) for v in values], dtype=float)


def autocovariance(values: np.ndarray, center: Optional[float] = None) -> np.ndarray:
    """A(t) = (1/N) sum_k (phi_k - c)(phi_{k+t} - c) for t = 0..N-1, via zero-padded FFT."""
    values = np.asarray(values, dtype=float)
    N = values.shape[0]
    centered = values - (values.mean() if center is None else center)
    size = scipy.fft.next_fast_len(2 * N)
    spectrum = scipy.fft.rfft(centered, n=size)
    return scipy.fft.irfft(spectrum * np.conj(spectrum), n=size)[:N] / N


def autocorrelation_time(data: SamplesLike, statistic: Optional[Callable] = None,
                         weights: Optional[Sequence[float]] = None) -> float:
    """
    tau = 1/2 + sum_{t>=1} A(t) / A(0), truncated Geyer-style.

    Pairs rho(2m-1) + rho(2m) are added for m = 1, 2, ... until the first negative pair.
    The centering mean is weighted by the per-step step sizes (taken from the chain when
    data is a SampleChain), which reduces to the plain mean for constant steps.

    Args:
        data: SampleChain, (N, d) samples or a 1D series
        statistic: phi mapping one sample to a real; default is the first coordinate
        weights: Per-sample step sizes overriding the chain's

    Returns:
        Estimated autocorrelation time (>= 0.5)
    """
    values = _statistic_values(data, statistic)
    N = values.shape[0]
    if N < MIN_ACT_SAMPLES:
        raise InsufficientSamplesError(f"autocorrelation time needs >= {MIN_ACT_SAMPLES} samples, got {N}")

    if weights is None and isinstance(data, SampleChain):
        weights = data.etas
    center = float(np.average(values, weights=weights)) if weights is not None else float(values.mean())

    acov = autocovariance(values, center)
    if not acov[0] > 1e-300 or np.ptp(values) == 0.0:
        raise UndefinedACTError("chain statistic has zero variance")
    rho = acov / acov[0]

    tau = 0.5
    m = 1
    while 2 * m < N:
        pair = rho[2 * m - 1] + rho[2 * m]
        if pair < 0:
            break
        tau += pair
        m += 1
    return float(tau)


def _check_moment_inputs(samples: np.ndarray, target, minimum: int, what: str) -> np.ndarray:
    target = np.asarray(target, dtype=float)
    if samples.shape[0] < minimum:
        raise InsufficientSamplesError(f"{what} needs >= {minimum} samples, got {samples.shape[0]}")
    if target.shape[0] != samples.shape[1]:
        raise DimensionError(f"reference has dimension {target.shape[0]}, samples have {samples.shape[1]}")
    return target


def empirical_covariance(data: SamplesLike) -> np.ndarray:
    samples = _samples(data)
    return np.atleast_2d(np.cov(samples, rowvar=False))


def covariance_error(data: SamplesLike, true_cov) -> float:
    """Mean squared elementwise error of the empirical covariance."""
    samples = _samples(data)
    true_cov = _check_moment_inputs(samples, true_cov, 2, "covariance error")
    return float(np.mean((empirical_covariance(samples) - true_cov) ** 2))


def covariance_abs_error(data: SamplesLike, true_cov) -> float:
    """Mean absolute elementwise error of the empirical covariance."""
    samples = _samples(data)
    true_cov = _check_moment_inputs(samples, true_cov, 2, "covariance error")
    return float(np.mean(np.abs(empirical_covariance(samples) - true_cov)))


def mean_error(data: SamplesLike, true_mean) -> float:
    """(1/d) |mean(samples) - true_mean|^2."""
    samples = _samples(data)
    true_mean = _check_moment_inputs(samples, true_mean, 1, "mean error")
    return float(np.mean((samples.mean(axis=0) - true_mean) ** 2))


def running_mean(data: SamplesLike, window: Optional[int] = None) -> np.ndarray:
    """
    Cumulative mean of the samples, or a trailing moving average over `window` samples.

    Row k averages samples[:k+1] (or the last `window` of them).
    """
    samples = _samples(data)
    totals = np.cumsum(samples, axis=0)
    counts = np.arange(1, samples.shape[0] + 1)[:, None]
    if window is None:
        return totals / counts
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    out = totals.copy()
    out[window:] = totals[window:] - totals[:-window]
    return out / np.minimum(counts, window)


def wasserstein2_report(A, B, max_points: int = 2000, seed: int = 0) -> Tuple[float, int]:
    """
    Exact W2 between equal-size empirical measures, after uniform subsampling.

    Both sets are subsampled (without replacement) to min(|A|, |B|, max_points) points
    using `seed`; the optimal pairing is found with the Hungarian algorithm.

    Returns:
        (distance, number of points per set actually used)
    """
    A = _samples(A)
    B = _samples(B)
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise InsufficientSamplesError("Wasserstein distance needs nonempty point sets")
    if A.shape[1] != B.shape[1]:
        raise DimensionError(f"point sets have dimensions {A.shape[1]} and {B.shape[1]}")
    if A.shape[1] > W2_MAX_DIM:
        raise DimensionError(f"dimension {A.shape[1]} exceeds the supported {W2_MAX_DIM}")

    size = min(A.shape[0], B.shape[0], max_points)
    rng = np.random.default_rng(seed)
    if A.shape[0] > size:
        A = A[np.sort(rng.choice(A.shape[0], size=size, replace=False))]
    if B.shape[0] > size:
        B = B[np.sort(rng.choice(B.shape[0], size=size, replace=False))]

    cost = cdist(A, B, metric='sqeuclidean')
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean())), size


def wasserstein2(A, B, max_points: int = 2000, seed: int = 0) -> float:
    return wasserstein2_report(A, B, max_points=max_points, seed=seed)[0]


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int = 100
    ny: int = 100

    def axes(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.linspace(self.x_min, self.x_max, self.nx), np.linspace(self.y_min, self.y_max, self.ny)


@dataclass
class KdeGrid:
    """density[iy, ix] is the estimate at (xs[ix], ys[iy])."""
    xs: np.ndarray
    ys: np.ndarray
    density: np.ndarray
    bandwidth: float

    def mass(self) -> float:
        dx = self.xs[1] - self.xs[0] if self.xs.size > 1 else 1.0
        dy = self.ys[1] - self.ys[0] if self.ys.size > 1 else 1.0
        return float(self.density.sum() * dx * dy)


def scott_bandwidth(samples) -> float:
    """Scott's rule n^(-1/(d+4)) times the average marginal standard deviation."""
    samples = _samples(samples)
    n, d = samples.shape
    return float(np.mean(samples.std(axis=0, ddof=1)) * n ** (-1.0 / (d + 4)))


def covering_grid(samples, bandwidth: float, points: int = 100, pad: float = 6.0) -> GridSpec:
    """Rectangle spanning the samples plus `pad` bandwidths on every side."""
    samples = _samples(samples)
    lo = samples.min(axis=0) - pad * bandwidth
    hi = samples.max(axis=0) + pad * bandwidth
    return GridSpec(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]), points, points)


def kde_grid(samples, bandwidth: float, grid: Optional[GridSpec] = None) -> KdeGrid:
    """
    Isotropic Gaussian-kernel density estimate of 2D samples on a rectangular grid.

    The kernel factorizes, so the grid is a product of two (grid x samples) kernel matrices.
    """
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be > 0, got {bandwidth}")
    samples = _samples(samples)
    if samples.shape[1] != 2:
        raise DimensionError(f"kde_grid expects 2D samples, got dimension {samples.shape[1]}")
    if samples.shape[0] == 0:
        raise InsufficientSamplesError("kde_grid needs at least one sample")
    if grid is None:
        grid = covering_grid(samples, bandwidth)

    xs, ys = grid.axes()
    kx = norm.pdf(xs[:, None], loc=samples[None, :, 0], scale=bandwidth)
    ky = norm.pdf(ys[:, None], loc=samples[None, :, 1], scale=bandwidth)
    density = ky @ kx.T / samples.shape[0]
    return KdeGrid(xs=xs, ys=ys, density=density, bandwidth=float(bandwidth))


def gradient_variance_profile(model: TargetModel, path, sigma: float, batch_size: int,
                              repeats: int = 100, seed: int = 0) -> float:
    """
    Maximum per-coordinate variance of Laplacian-smoothed mini-batch gradients along a path.

    At every path point, `repeats` batches are drawn and each smoothed stochastic gradient
    is compared with the smoothed full gradient (used as the mean). The maximum over
    coordinates and path points is returned. A fixed seed gives every (sigma, batch_size)
    cell the same batch stream.
    """
    path = np.atleast_2d(np.asarray(path, dtype=float))
    if path.shape[0] == 0:
        raise InsufficientSamplesError("gradient variance profile needs a nonempty path")
    if repeats < 2:
        raise InsufficientSamplesError(f"repeats must be >= 2, got {repeats}")
    if batch_size > model.n:
        raise BatchSizeError(f"batch_size={batch_size} exceeds n={model.n}")
    if batch_size < 1:
        raise BatchSizeError(f"batch_size must be >= 1, got {batch_size}")

    op = build(model.d, sigma)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x in path:
        full = model.full_grad(x)
        center = apply_inverse(op, full)
        if batch_size == model.n:
            continue
        draws = np.empty((repeats, model.d))
        for r in range(repeats):
            batch = rng.choice(model.n, size=batch_size, replace=False)
            draws[r] = model.batch_grad(x, batch)
        smoothed = apply_inverse(op, draws)
        variance = np.mean((smoothed - center) ** 2, axis=0)
        worst = max(worst, float(variance.max()))
    logger.debug("variance profile sigma=%g B=%d: %.4e", sigma, batch_size, worst)
    return worst


def nll_accuracy(target: BlrTarget, x, features=None, labels=None) -> Tuple[float, float]:
    """
    Mean negative log-likelihood -log s(y <d, x>) and 0/1 accuracy of sign(<d, x>).

    A zero margin counts as a mistake. Defaults to the target's own data.
    """
    features = target.features if features is None else np.asarray(features, dtype=float)
    labels = target.labels if labels is None else np.asarray(labels, dtype=float)
    if features.shape[0] == 0:
        raise InsufficientSamplesError("evaluation set is empty")
    x = np.asarray(x, dtype=float)
    if features.shape[1] != x.shape[0]:
        raise DimensionError(f"features have dimension {features.shape[1]}, parameter has {x.shape[0]}")
    margins = labels * (features @ x)
    return float(np.mean(np.logaddexp(0.0, -margins))), float(np.mean(margins > 0))


@dataclass
class DiagnosticsReport:
    act: Optional[float] = None
    cov_error: Optional[float] = None
    cov_abs_error: Optional[float] = None
    mean_mse: Optional[float] = None
    w2: Optional[float] = None
    w2_points: Optional[int] = None
    n_samples: int = 0
    metadata: Dict[str, object] = field(default_factory=dict)

    def to_row(self) -> Dict[str, object]:
        row = {k: v for k, v in asdict(self).items() if k != 'metadata'}
        row.update(self.metadata)
        return row


def summarize_chain(chain: SampleChain, true_mean=None, true_cov=None, reference=None,
                    statistic: Optional[Callable] = None, w2_max_points: int = 2000,
                    seed: int = 0) -> DiagnosticsReport:
    """Collect whichever diagnostics the supplied references allow."""
    report = DiagnosticsReport(n_samples=len(chain), metadata={
        'kind': chain.spec.kind, 'sigma': chain.spec.sigma, 'eta': chain.spec.eta,
        'batch_size': chain.spec.batch_size, 'seed': chain.seed})
    if len(chain) >= MIN_ACT_SAMPLES:
        try:
            report.act = autocorrelation_time(chain, statistic)
        except UndefinedACTError:
            logger.warning("ACT undefined for %s seed %d (constant chain)", chain.spec.kind, chain.seed)
    if true_mean is not None:
        report.mean_mse = mean_error(chain, true_mean)
    if true_cov is not None and len(chain) >= 2:
        report.cov_error = covariance_error(chain, true_cov)
        report.cov_abs_error = covariance_abs_error(chain, true_cov)
    if reference is not None:
        report.w2, report.w2_points = wasserstein2_report(chain, reference, w2_max_points, seed)
    return report
