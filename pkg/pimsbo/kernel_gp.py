"""
Kernels and exact Gaussian-process posterior inference

The posterior is computed from a Cholesky factor of K + noise_var * I. The
noise variance doubles as the jitter: no extra diagonal term is ever added.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from pimsbo.errors import DimensionError, FactorizationError, NumericalError

logger = logging.getLogger(__name__)

# Negative posterior variances beyond this signal a broken factorization.
VARIANCE_CLAMP_TOL = 1e-12
SUPPORTED_NU = (1.5, 2.5)
LOG_2PI = math.log(2.0 * math.pi)


class KernelFamily(str, Enum):
    RBF = "rbf"
    MATERN = "matern"
    LINEAR = "linear"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and lengthscale; the output scale is fixed to 1"""

    family: KernelFamily
    lengthscale: float = 1.0
    nu: Optional[float] = None

    def __post_init__(self):
        family = KernelFamily(self.family)
        object.__setattr__(self, "family", family)
        if family is not KernelFamily.LINEAR:
            if not (math.isfinite(self.lengthscale) and self.lengthscale > 0):
                raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        if family is KernelFamily.MATERN:
            if self.nu is None or not self.nu > 0:
                raise ValueError("Matern kernel needs a positive nu")
        elif self.nu is not None:
            raise ValueError(f"nu only applies to the Matern kernel, not {family.value}")

    @property
    def is_stationary(self):
        return self.family is not KernelFamily.LINEAR

    def with_lengthscale(self, lengthscale):
        return replace(self, lengthscale=float(lengthscale))

    def to_dict(self):
        return {"family": self.family.value, "lengthscale": self.lengthscale, "nu": self.nu}


def as_points(points, dim=None, name="points"):
    """Coerce to a finite (n, d) float array, checking the dimension if given"""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if dim is None or arr.size == dim else arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a 2-d array of points, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionError(f"{name} have dimension {arr.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contain non-finite coordinates")
    return arr


def gram(kernel: KernelSpec, X1, X2=None) -> np.ndarray:
    """Cross-covariance matrix k(X1, X2)"""
    X1 = as_points(X1)
    X2 = X1 if X2 is None else as_points(X2, dim=X1.shape[1])
    if X1.shape[0] == 0 or X2.shape[0] == 0:
        return np.zeros((X1.shape[0], X2.shape[0]))

    if kernel.family is KernelFamily.LINEAR:
        return X1 @ X2.T
    if kernel.family is KernelFamily.RBF:
        sq = cdist(X1, X2, "sqeuclidean")
        return np.exp(-0.5 * sq / kernel.lengthscale ** 2)

    r = cdist(X1, X2, "euclidean") / kernel.lengthscale
    if kernel.nu == 1.5:
        s = math.sqrt(3.0) * r
        return (1.0 + s) * np.exp(-s)
    if kernel.nu == 2.5:
        s = math.sqrt(5.0) * r
        return (1.0 + s + s ** 2 / 3.0) * np.exp(-s)
    raise ValueError(f"Matern nu={kernel.nu} has no closed form here; use one of {SUPPORTED_NU}")


def kernel_diag(kernel: KernelSpec, X) -> np.ndarray:
    """k(x, x) for every row of X"""
    X = as_points(X)
    if kernel.family is KernelFamily.LINEAR:
        return np.sum(X ** 2, axis=1)
    return np.ones(X.shape[0])


def kernel_eval(kernel: KernelSpec, x, x_other) -> float:
    x = np.asarray(x, dtype=float).ravel()
    x_other = np.asarray(x_other, dtype=float).ravel()
    if x.shape != x_other.shape:
        raise DimensionError(f"points have dimensions {x.size} and {x_other.size}")
    return float(gram(kernel, x.reshape(1, -1), x_other.reshape(1, -1))[0, 0])


@dataclass(frozen=True, eq=False)
class Dataset:
    """Noisy observations y_i = f(x_i) + eps_i with eps_i ~ N(0, noise_var)"""

    inputs: np.ndarray
    observations: np.ndarray
    noise_var: float

    def __post_init__(self):
        inputs = as_points(self.inputs, name="inputs")
        observations = np.asarray(self.observations, dtype=float).ravel()
        if inputs.shape[0] != observations.shape[0]:
            raise DimensionError(
                f"{inputs.shape[0]} inputs but {observations.shape[0]} observations")
        if not np.all(np.isfinite(observations)):
            raise ValueError("observations must be finite")
        if not (math.isfinite(self.noise_var) and self.noise_var > 0):
            raise ValueError(f"noise_var must be positive, got {self.noise_var}")
        inputs.setflags(write=False)
        observations.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "observations", observations)
        object.__setattr__(self, "noise_var", float(self.noise_var))

    @classmethod
    def empty(cls, dim, noise_var):
        return cls(np.zeros((0, dim)), np.zeros(0), noise_var)

    @property
    def size(self):
        return self.inputs.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]

    def append(self, x, y) -> "Dataset":
        x = as_points(np.asarray(x, dtype=float).reshape(1, -1), dim=self.dim, name="x")
        return Dataset(np.vstack([self.inputs, x]),
                       np.append(self.observations, float(y)),
                       self.noise_var)

    def permuted(self, order) -> "Dataset":
        order = np.asarray(order, dtype=int)
        return Dataset(self.inputs[order], self.observations[order], self.noise_var)


def _clamp_variance(var):
    """Clamp floating-point negatives to 0; anything beyond the tolerance is an error"""
    worst = float(np.min(var)) if var.size else 0.0
    if worst < -VARIANCE_CLAMP_TOL:
        raise NumericalError(f"posterior variance {worst:.3e} is below the clamp tolerance")
    if worst < 0.0:
        logger.debug("clamping negative posterior variance %.3e to 0", worst)
        var = np.maximum(var, 0.0)
    return var


@dataclass(frozen=True, eq=False)
class GpPosterior:
    """Immutable fitted posterior p(f | D)"""

    kernel: KernelSpec
    data: Dataset
    chol: np.ndarray
    alpha: np.ndarray

    @property
    def noise_var(self):
        return self.data.noise_var

    @property
    def size(self):
        return self.data.size

    def _solve_cross(self, X):
        Kxs = gram(self.kernel, self.data.inputs, X)
        V = linalg.solve_triangular(self.chol, Kxs, lower=True, check_finite=False)
        return Kxs, V

    def mean_var(self, X) -> Tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at the rows of X"""
        X = as_points(X, dim=self.data.dim)
        prior = kernel_diag(self.kernel, X)
        if self.size == 0:
            return np.zeros(X.shape[0]), prior
        Kxs, V = self._solve_cross(X)
        mean = Kxs.T @ self.alpha
        var = prior - np.sum(V ** 2, axis=0)
        return mean, _clamp_variance(var)

    def mean_std(self, X) -> Tuple[np.ndarray, np.ndarray]:
        mean, var = self.mean_var(X)
        return mean, np.sqrt(var)

    def covariance(self, X) -> Tuple[np.ndarray, np.ndarray]:
        """Posterior mean vector and full covariance matrix over the rows of X"""
        X = as_points(X, dim=self.data.dim)
        prior = gram(self.kernel, X)
        if self.size == 0:
            return np.zeros(X.shape[0]), prior
        Kxs, V = self._solve_cross(X)
        cov = prior - V.T @ V
        cov = 0.5 * (cov + cov.T)
        return Kxs.T @ self.alpha, cov


def _cholesky(matrix, what):
    try:
        return linalg.cholesky(matrix, lower=True, check_finite=False)
    except linalg.LinAlgError as e:
        raise FactorizationError(what, str(e)) from e


def fit_posterior(kernel: KernelSpec, data: Dataset) -> GpPosterior:
    n = data.size
    if n == 0:
        return GpPosterior(kernel, data, np.zeros((0, 0)), np.zeros(0))
    K = gram(kernel, data.inputs)
    K[np.diag_indices(n)] += data.noise_var
    chol = _cholesky(K, "K + noise_var * I")
    alpha = linalg.cho_solve((chol, True), data.observations, check_finite=False)
    return GpPosterior(kernel, data, chol, alpha)


def posterior_mean_var(post: GpPosterior, x) -> Tuple[float, float]:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != post.data.dim:
        raise DimensionError(f"query has dimension {x.size}, posterior has {post.data.dim}")
    mean, var = post.mean_var(x.reshape(1, -1))
    return float(mean[0]), float(var[0])


def log_marginal_likelihood(kernel: KernelSpec, data: Dataset) -> float:
    n = data.size
    if n == 0:
        return 0.0
    post = fit_posterior(kernel, data)
    fit_term = -0.5 * float(data.observations @ post.alpha)
    log_det_half = float(np.sum(np.log(np.diag(post.chol))))
    return fit_term - log_det_half - 0.5 * n * LOG_2PI


def fit_lengthscale(data: Dataset, candidate_lengthscales: Sequence[float],
                    family=KernelFamily.RBF, nu=None) -> KernelSpec:
    """Grid-search the lengthscale maximizing the log marginal likelihood

    Candidates are scanned in increasing order and only a strictly larger
    likelihood replaces the incumbent, so ties go to the smallest lengthscale.
    """
    candidates = sorted(float(c) for c in candidate_lengthscales)
    if not candidates:
        raise ValueError("candidate_lengthscales is empty")
    if candidates[0] <= 0:
        raise ValueError(f"lengthscale candidates must be positive, got {candidates[0]}")
    if KernelFamily(family) is KernelFamily.LINEAR:
        raise ValueError("the linear kernel has no lengthscale to fit")

    best_kernel, best_value = None, -math.inf
    for lengthscale in candidates:
        kernel = KernelSpec(family, lengthscale, nu)
        value = log_marginal_likelihood(kernel, data)
        if value > best_value:
            best_kernel, best_value = kernel, value
    if best_kernel is None:
        logger.warning("no finite log marginal likelihood; keeping lengthscale %.4g",
                       candidates[0])
        best_kernel = KernelSpec(family, candidates[0], nu)
    logger.info("fitted lengthscale %.4g (log ML %.4f)", best_kernel.lengthscale, best_value)
    return best_kernel


def lipschitz_sigma(kernel: KernelSpec) -> float:
    """L1 Lipschitz constant of the posterior standard deviation"""
    if kernel.family is KernelFamily.LINEAR:
        return 1.0
    base = math.sqrt(2.0) / kernel.lengthscale
    if kernel.family is KernelFamily.RBF:
        return base
    if kernel.nu <= 1:
        raise ValueError(f"Lipschitz constant needs nu > 1, got nu={kernel.nu}")
    return base * math.sqrt(kernel.nu / (kernel.nu - 1.0))


def posterior_var_floor(noise_var: float, n_t: int) -> float:
    """Smallest posterior variance reachable with n_t observations"""
    if not noise_var > 0:
        raise ValueError(f"noise_var must be positive, got {noise_var}")
    if n_t < 0:
        raise ValueError(f"n_t must be nonnegative, got {n_t}")
    return noise_var / (noise_var + n_t)
