"""
Posterior sample paths

Two samplers are provided: random Fourier features in weight space, giving a
path that can be evaluated anywhere, and an exact multivariate normal draw on
a finite grid, which is the reference the RFF sampler is checked against.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from pimsbo.errors import DimensionError, DomainError, FactorizationError
from pimsbo.kernel_gp import GpPosterior, KernelFamily, KernelSpec, as_points

logger = logging.getLogger(__name__)

DEFAULT_NUM_FEATURES = 2000
GRID_JITTER = 1e-10


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """phi(x) = sqrt(2/m) cos(W x + b)"""

    frequencies: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        frequencies = np.asarray(self.frequencies, dtype=float)
        phases = np.asarray(self.phases, dtype=float).ravel()
        if frequencies.ndim != 2 or frequencies.shape[0] != phases.shape[0]:
            raise DimensionError("frequencies must be (m, d) with one phase per row")
        frequencies.setflags(write=False)
        phases.setflags(write=False)
        object.__setattr__(self, "frequencies", frequencies)
        object.__setattr__(self, "phases", phases)

    @property
    def num_features(self):
        return self.frequencies.shape[0]

    @property
    def dim(self):
        return self.frequencies.shape[1]

    @property
    def scale(self):
        return math.sqrt(2.0 / self.num_features)

    def features(self, X) -> np.ndarray:
        X = as_points(X, dim=self.dim)
        return self.scale * np.cos(X @ self.frequencies.T + self.phases)

    def approx_kernel(self, X1, X2) -> np.ndarray:
        return self.features(X1) @ self.features(X2).T


def build_rff(kernel: KernelSpec, num_features: int, rng: np.random.Generator,
              dim: int) -> FeatureMap:
    """Draw frequencies from the kernel's spectral density and uniform phases"""
    if num_features < 1:
        raise ValueError(f"num_features must be at least 1, got {num_features}")
    if dim < 1:
        raise ValueError(f"dim must be at least 1, got {dim}")
    if kernel.family is KernelFamily.LINEAR:
        raise ValueError("the linear kernel has no Fourier features; use exact_grid_sample")

    normal = rng.standard_normal((num_features, dim))
    if kernel.family is KernelFamily.RBF:
        frequencies = normal / kernel.lengthscale
    else:
        if kernel.nu not in (1.5, 2.5):
            raise ValueError(f"Matern nu={kernel.nu} is not supported, use 1.5 or 2.5")
        # multivariate Student-t with 2*nu degrees of freedom
        dof = 2.0 * kernel.nu
        chi2 = rng.chisquare(dof, size=num_features)
        frequencies = normal * np.sqrt(dof / chi2)[:, None] / kernel.lengthscale
    phases = rng.uniform(0.0, 2.0 * math.pi, size=num_features)
    return FeatureMap(frequencies, phases)


@dataclass(frozen=True, eq=False)
class SamplePath:
    """A posterior draw g_t, either in RFF weight form or as values on a grid"""

    feature_map: Optional[FeatureMap] = None
    weights: Optional[np.ndarray] = None
    grid: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None

    def __post_init__(self):
        continuous = self.feature_map is not None and self.weights is not None
        tabulated = self.grid is not None and self.values is not None
        if continuous == tabulated:
            raise ValueError("a sample path needs either (feature_map, weights) or (grid, values)")
        if continuous:
            weights = np.asarray(self.weights, dtype=float).ravel()
            if weights.shape[0] != self.feature_map.num_features:
                raise DimensionError(
                    f"{weights.shape[0]} weights for {self.feature_map.num_features} features")
            weights.setflags(write=False)
            object.__setattr__(self, "weights", weights)
        else:
            grid = as_points(self.grid, name="grid")
            values = np.asarray(self.values, dtype=float).ravel()
            if grid.shape[0] != values.shape[0]:
                raise DimensionError(f"{grid.shape[0]} grid points but {values.shape[0]} values")
            index = {}
            for i, row in enumerate(grid):
                index.setdefault(tuple(row), i)
            grid.setflags(write=False)
            values.setflags(write=False)
            object.__setattr__(self, "grid", grid)
            object.__setattr__(self, "values", values)
            object.__setattr__(self, "_index", index)

    @property
    def is_continuous(self):
        return self.feature_map is not None

    def evaluate(self, X) -> np.ndarray:
        if self.is_continuous:
            return self.feature_map.features(X) @ self.weights
        X = as_points(X, dim=self.grid.shape[1])
        positions = []
        for row in X:
            position = self._index.get(tuple(row))
            if position is None:
                raise DomainError(f"point {tuple(row)} is not on the sample path's grid")
            positions.append(position)
        return self.values[np.asarray(positions, dtype=int)]


def _weights_from_precision(Phi, y, noise_var, z):
    """Factor A = Phi^T Phi + noise_var I directly, O(m^3)"""
    m = Phi.shape[1]
    A = Phi.T @ Phi
    A[np.diag_indices(m)] += noise_var
    try:
        chol = linalg.cholesky(A, lower=True, check_finite=False)
    except linalg.LinAlgError as e:
        raise FactorizationError("Phi^T Phi + noise_var * I", str(e)) from e
    mean = linalg.cho_solve((chol, True), Phi.T @ y, check_finite=False)
    spread = linalg.solve_triangular(chol, z, lower=True, trans="T", check_finite=False)
    return mean[:, None] + math.sqrt(noise_var) * spread


def _weights_from_svd(Phi, y, noise_var, z):
    """Same law through the thin SVD Phi = U S V^T, O(n^2 m) for n < m

    noise_var A^-1 = I - V diag(s^2 / (s^2 + noise_var)) V^T, whose square root
    shrinks z along V by sqrt(noise_var / (s^2 + noise_var)).
    """
    try:
        U, s, Vt = linalg.svd(Phi, full_matrices=False, check_finite=False)
    except linalg.LinAlgError as e:
        raise FactorizationError("Phi", str(e)) from e
    denom = s ** 2 + noise_var
    mean = Vt.T @ ((s / denom) * (U.T @ y))
    shrink = 1.0 - np.sqrt(noise_var / denom)
    return mean[:, None] + z - Vt.T @ (shrink[:, None] * (Vt @ z))


def draw_posterior_weights(post: GpPosterior, fmap: FeatureMap, rng: np.random.Generator,
                           size: int = 1) -> np.ndarray:
    """Draw `size` weight vectors from the Bayesian linear model posterior

    w ~ N(A^-1 Phi^T y, noise_var A^-1) with A = Phi^T Phi + noise_var I.
    Returns an array of shape (size, m).
    """
    if post.size and fmap.dim != post.data.dim:
        raise DimensionError(f"feature map has dimension {fmap.dim}, data {post.data.dim}")
    m = fmap.num_features
    z = rng.standard_normal((m, size))
    if post.size == 0:
        return z.T.copy()

    Phi = fmap.features(post.data.inputs)
    if post.size < m:
        weights = _weights_from_svd(Phi, post.data.observations, post.noise_var, z)
    else:
        weights = _weights_from_precision(Phi, post.data.observations, post.noise_var, z)
    return weights.T


def draw_posterior_sample(post: GpPosterior, fmap: FeatureMap,
                          rng: np.random.Generator) -> SamplePath:
    weights = draw_posterior_weights(post, fmap, rng, size=1)[0]
    return SamplePath(feature_map=fmap, weights=weights)


def exact_grid_values(post: GpPosterior, grid, rng: np.random.Generator,
                      size: int = 1) -> np.ndarray:
    """Exact joint posterior draws over `grid`, shape (size, |grid|)"""
    grid = as_points(grid, dim=post.data.dim, name="grid")
    if grid.shape[0] == 0:
        raise DomainError("grid is empty")
    mean, cov = post.covariance(grid)
    cov[np.diag_indices(grid.shape[0])] += GRID_JITTER
    try:
        chol = linalg.cholesky(cov, lower=True, check_finite=False)
    except linalg.LinAlgError as e:
        raise FactorizationError("grid posterior covariance", f"grid too collinear ({e})") from e
    z = rng.standard_normal((grid.shape[0], size))
    return (mean[:, None] + chol @ z).T


def exact_grid_sample(post: GpPosterior, grid, rng: np.random.Generator) -> SamplePath:
    grid = as_points(grid, dim=post.data.dim, name="grid")
    values = exact_grid_values(post, grid, rng, size=1)[0]
    return SamplePath(grid=grid, values=values)


def sample_path_eval(path: SamplePath, x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    return float(path.evaluate(x.reshape(1, -1))[0])
