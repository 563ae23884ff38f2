"""
Checkable forms of the regret-bound ingredients

Information gain and MIG, the bound constants C1 and C2, Monte-Carlo checks
of the eta_t / xi_t second-moment bounds, the Gaussian tail bound, and the
lattice discretizations with their sizes tau_t, s_t and m_t.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg
from scipy.special import erfc

from pimsbo.acquisition import Box, FiniteGrid
from pimsbo.errors import DomainError, FactorizationError
from pimsbo.kernel_gp import (Dataset, KernelSpec, as_points, fit_posterior, gram,
                              lipschitz_sigma, posterior_mean_var)

logger = logging.getLogger(__name__)

GREEDY_FACTOR = 1.0 - 1.0 / math.e
MAX_EXACT_SUBSETS = 10 ** 6
MAX_LATTICE_POINTS = 10 ** 6
VARIANCE_SUM_TOL = 1e-6
TAIL_TOL = 1e-12
SQRT_PI_HALF = math.sqrt(math.pi) / 2.0


def c1_constant(noise_var: float) -> float:
    """C1 = 2 / log(1 + 1/noise_var)"""
    if not noise_var > 0:
        raise ValueError(f"noise_var must be positive, got {noise_var}")
    return 2.0 / math.log1p(1.0 / noise_var)


def c2_constant(cardinality: int) -> float:
    """C2 = 2 + 2 log(|X| / 2)"""
    if cardinality < 1:
        raise ValueError(f"cardinality must be at least 1, got {cardinality}")
    return 2.0 + 2.0 * math.log(cardinality / 2.0)


@dataclass(frozen=True)
class BoundConstants:
    c1: float
    c2: float


def bound_constants(noise_var: float, cardinality: int) -> BoundConstants:
    return BoundConstants(c1_constant(noise_var), c2_constant(cardinality))


@dataclass(frozen=True)
class BoundReport:
    """Outcome of one verifier check"""

    name: str
    empirical: float
    bound: float
    passed: bool
    stderr: float = 0.0
    details: dict = field(default_factory=dict)

    def to_dict(self):
        report = {
            "name": self.name,
            "empirical": self.empirical,
            "bound": self.bound,
            "stderr": self.stderr,
            "pass": self.passed,
        }
        if self.details:
            report["details"] = self.details
        return report


def info_gain(kernel: KernelSpec, noise_var: float, subset) -> float:
    """1/2 log det(I + K_A / noise_var)"""
    if not noise_var > 0:
        raise ValueError(f"noise_var must be positive, got {noise_var}")
    X = as_points(subset, name="subset")
    if X.shape[0] == 0:
        return 0.0
    return _info_gain_from_gram(gram(kernel, X), noise_var)


def _info_gain_from_gram(K, noise_var):
    n = K.shape[0]
    if n == 0:
        return 0.0
    M = np.eye(n) + K / noise_var
    try:
        chol = linalg.cholesky(M, lower=True, check_finite=False)
    except linalg.LinAlgError as e:
        raise FactorizationError("I + K_A / noise_var", str(e)) from e
    return float(np.sum(np.log(np.diag(chol))))


@dataclass(frozen=True)
class MigResult:
    value: float
    upper: float
    mode: str
    indices: Tuple[int, ...]

    def to_dict(self):
        return {"value": self.value, "upper": self.upper, "mode": self.mode,
                "indices": list(self.indices)}


def mig(kernel: KernelSpec, noise_var: float, domain: FiniteGrid, T: int,
        mode: str = "greedy", allow_repeats: bool = False,
        max_subsets: int = MAX_EXACT_SUBSETS) -> MigResult:
    """Maximum information gain over T queries from the domain

    Exact mode enumerates every subset (multiset when allow_repeats). Greedy
    mode picks the largest posterior variance one query at a time; its value
    is a lower bound and value / (1 - 1/e) an upper bound, information gain
    being monotone submodular.
    """
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    if not allow_repeats and T > domain.size:
        raise ValueError(f"T={T} exceeds the {domain.size} distinct domain points")
    K = gram(kernel, domain.points)

    if mode == "exact":
        n = domain.size
        count = math.comb(n + T - 1, T) if allow_repeats else math.comb(n, T)
        if count > max_subsets:
            raise ValueError(f"exact MIG would enumerate {count} subsets (limit {max_subsets})")
        subsets = (itertools.combinations_with_replacement(range(n), T) if allow_repeats
                   else itertools.combinations(range(n), T))
        best_value, best_subset = -math.inf, ()
        for subset in subsets:
            idx = np.asarray(subset)
            value = _info_gain_from_gram(K[np.ix_(idx, idx)], noise_var)
            if value > best_value:
                best_value, best_subset = value, subset
        return MigResult(best_value, best_value, "exact", tuple(int(i) for i in best_subset))

    if mode != "greedy":
        raise ValueError(f"unknown MIG mode {mode!r}; use 'exact' or 'greedy'")

    cov = K.copy()
    available = np.ones(domain.size, dtype=bool)
    chosen = []
    value = 0.0
    for _ in range(T):
        var = np.maximum(np.diag(cov), 0.0)
        i = int(np.argmax(np.where(available, var, -np.inf)))
        value += 0.5 * math.log1p(var[i] / noise_var)
        column = cov[:, i].copy()
        cov -= np.outer(column, column) / (column[i] + noise_var)
        chosen.append(i)
        if not allow_repeats:
            available[i] = False
    return MigResult(value, value / GREEDY_FACTOR, "greedy", tuple(chosen))


def mig_sandwich_check(kernel: KernelSpec, noise_var: float, domain: FiniteGrid, T: int,
                       allow_repeats: bool = False) -> BoundReport:
    exact = mig(kernel, noise_var, domain, T, "exact", allow_repeats)
    greedy = mig(kernel, noise_var, domain, T, "greedy", allow_repeats)
    tol = 1e-10 * max(1.0, exact.value)
    passed = greedy.value <= exact.value + tol and exact.value <= greedy.upper + tol
    return BoundReport("mig_sandwich", exact.value, greedy.upper, passed,
                       details={"greedy": greedy.value, "size": domain.size, "T": T,
                                "allow_repeats": allow_repeats})


def variance_sum_bound_check(trace, kernel: KernelSpec, noise_var: float,
                             gamma_upper: float) -> BoundReport:
    """Recompute sum_t sigma^2_{t-1}(x_t) along a trace and compare with C1 gamma

    `trace` needs `initial_inputs` (the initial design) and `query_points`.
    Posterior variances do not depend on observed values, so zeros stand in.
    """
    bound = c1_constant(noise_var) * gamma_upper
    queries = as_points(trace.query_points, name="query points")
    initial = as_points(trace.initial_inputs, dim=queries.shape[1], name="initial inputs")
    data = Dataset(initial, np.zeros(initial.shape[0]), noise_var)
    total = 0.0
    for x in queries:
        _, var = posterior_mean_var(fit_posterior(kernel, data), x)
        total += var
        data = data.append(x, 0.0)
    passed = total <= bound + VARIANCE_SUM_TOL
    return BoundReport("variance_sum", total, bound, passed,
                       details={"steps": int(queries.shape[0])})


def _eta_xi_shard(mean, std, chol, seed, size):
    rng = np.random.default_rng(seed)
    draws = (mean[:, None] + chol @ rng.standard_normal((mean.shape[0], size))).T
    rows = np.arange(size)
    best = np.argmax(draws, axis=1)
    eta = (draws[rows, best] - mean[best]) / std[best]
    g_star = draws[rows, best]
    xi = np.min((g_star[:, None] - mean) / std, axis=1)
    eta_stat = np.where(eta >= 0, eta ** 2, 0.0)
    xi_stat = np.where(xi >= 0, xi ** 2, 0.0)
    return (eta_stat.sum(), (eta_stat ** 2).sum(), xi_stat.sum(), (xi_stat ** 2).sum())


@dataclass(frozen=True)
class EtaXiReport:
    eta: BoundReport
    xi: BoundReport


def mc_eta_bound(kernel: KernelSpec, domain: FiniteGrid, dataset: Dataset, num_draws: int,
                 rng: np.random.Generator, shard_size: int = 10_000,
                 jobs: int = 1) -> EtaXiReport:
    """Monte-Carlo check of E[eta^2 1{eta >= 0}] and E[xi^2 1{xi >= 0}] <= C2

    Draws are exact joint posterior samples on the grid, split into shards
    with independent seeds and merged in shard order.
    """
    if num_draws < 10_000:
        raise ValueError(f"num_draws must be at least 10000, got {num_draws}")
    post = fit_posterior(kernel, dataset)
    mean, cov = post.covariance(domain.points)
    _, std = post.mean_std(domain.points)
    cov[np.diag_indices(domain.size)] += 1e-10
    try:
        chol = linalg.cholesky(cov, lower=True, check_finite=False)
    except linalg.LinAlgError as e:
        raise FactorizationError("grid posterior covariance", str(e)) from e

    sizes = [shard_size] * (num_draws // shard_size)
    if num_draws % shard_size:
        sizes.append(num_draws % shard_size)
    seeds = rng.integers(0, 2 ** 63 - 1, size=len(sizes))
    partials = Parallel(n_jobs=jobs)(
        delayed(_eta_xi_shard)(mean, std, chol, int(seed), size)
        for seed, size in zip(seeds, sizes))
    totals = np.sum(np.asarray(partials), axis=0)

    bound = c2_constant(domain.size)
    reports = []
    for name, total, total_sq in (("eta", totals[0], totals[1]), ("xi", totals[2], totals[3])):
        empirical = total / num_draws
        variance = max(total_sq / num_draws - empirical ** 2, 0.0) * num_draws / (num_draws - 1)
        stderr = math.sqrt(variance / num_draws)
        reports.append(BoundReport(
            f"second_moment_{name}_{domain.size}", float(empirical), bound,
            empirical + 3.0 * stderr <= bound, float(stderr),
            details={"cardinality": domain.size, "draws": num_draws,
                     "observations": dataset.size}))
    logger.info("|X|=%d: eta %.4f, xi %.4f, bound %.4f",
                domain.size, reports[0].empirical, reports[1].empirical, bound)
    return EtaXiReport(*reports)


def gauss_tail_check(c_values: Sequence[float]) -> BoundReport:
    """1 - Phi(c) <= exp(-c^2 / 2) / 2 for every c >= 0"""
    c = np.asarray(list(c_values), dtype=float)
    if c.size == 0:
        return BoundReport("gauss_tail", 0.0, 0.0, True)
    if np.any(c < 0):
        raise ValueError("gauss_tail_check needs c >= 0")
    survival = 0.5 * erfc(c / math.sqrt(2.0))
    bound = 0.5 * np.exp(-0.5 * c ** 2)
    margin = survival - bound
    worst = int(np.argmax(margin))
    return BoundReport("gauss_tail", float(survival[worst]), float(bound[worst]),
                       bool(np.all(margin <= TAIL_TOL)),
                       details={"worst_c": float(c[worst]), "checked": int(c.size)})


@dataclass(frozen=True)
class Discretization:
    """Lattice {r/tau, 2r/tau, ..., r}^d over the box [0, r]^d"""

    box: Box
    tau: int

    @property
    def size(self):
        return self.tau ** self.box.d

    @property
    def max_l1_error(self):
        return self.box.d * self.box.r / self.tau

    def axis(self) -> np.ndarray:
        return self.box.r * np.arange(1, self.tau + 1) / self.tau

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis()] * self.box.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def as_grid(self) -> FiniteGrid:
        return FiniteGrid(self.points())

    def _levels(self, x):
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.box.d:
            raise DomainError(f"point has dimension {x.size}, box has {self.box.d}")
        # round half down so ties go to the smaller coordinate
        levels = np.ceil(x * self.tau / self.box.r - 0.5).astype(int)
        return np.clip(levels, 1, self.tau)

    def nearest_point(self, x) -> np.ndarray:
        return self.box.r * self._levels(x) / self.tau

    def nearest_index(self, x) -> int:
        index = 0
        for level in self._levels(x):
            index = index * self.tau + int(level) - 1
        return index


def build_discretization(box: Box, tau: int,
                         max_points: int = MAX_LATTICE_POINTS) -> Discretization:
    if tau < 1:
        raise ValueError(f"tau must be at least 1, got {tau}")
    if tau ** box.d > max_points:
        raise DomainError(f"lattice with {tau}^{box.d} points exceeds the limit {max_points}")
    return Discretization(box, int(tau))


def _check_smoothness(t, a, b):
    if t < 1:
        raise ValueError(f"t must be at least 1, got {t}")
    if a < 1:
        raise ValueError(f"a must be at least 1, got {a}")
    if not b > 0:
        raise ValueError(f"b must be positive, got {b}")


def smoothness_radius(d: int, a: float, b: float) -> float:
    """b (sqrt(log(a d)) + sqrt(pi) / 2)"""
    return b * (math.sqrt(math.log(a * d)) + SQRT_PI_HALF)


def lipschitz_constant_L(d: int, a: float, b: float, kernel: KernelSpec) -> float:
    return max(lipschitz_sigma(kernel), smoothness_radius(d, a, b))


def tau_ts(t: int, d: int, r: float, a: float, b: float, kernel: KernelSpec) -> int:
    """Divisions per dimension of the TS discretization, ceil(d r L t^2)"""
    _check_smoothness(t, a, b)
    return int(math.ceil(d * r * lipschitz_constant_L(d, a, b, kernel) * t ** 2))


def s_t_ts(t: int, d: int, r: float, a: float, b: float, kernel: KernelSpec) -> float:
    return 2.0 - 2.0 * math.log(2.0) + 2.0 * d * math.log(tau_ts(t, d, r, a, b, kernel))


def tau_pims(t: int, d: int, r: float, a: float, b: float, noise_var: float, n_t: int) -> int:
    _check_smoothness(t, a, b)
    inflation = math.sqrt((noise_var + n_t) / noise_var)
    return int(math.ceil(t ** 2 * b * d * r * (math.log(a * d) + SQRT_PI_HALF) * inflation))


def m_t_pims(t: int, d: int, r: float, a: float, b: float, noise_var: float, n_t: int) -> float:
    return 2.0 * d * math.log(tau_pims(t, d, r, a, b, noise_var, n_t)) - 2.0 * math.log(2.0) + 2.0


def m_t_pims_bsr(t: int, d: int, r: float, a: float, b: float) -> float:
    """m_t without the posterior-variance inflation, as used for simple regret"""
    _check_smoothness(t, a, b)
    tau = int(math.ceil(t ** 2 * b * d * r * (math.log(a * d) + SQRT_PI_HALF)))
    return 2.0 * d * math.log(tau) - 2.0 * math.log(2.0) + 2.0


def bcr_bound_finite(cardinality: int, T: int, noise_var: float, gamma_upper: float) -> float:
    """sqrt(C1 C2 T gamma_T) for TS and PIMS on a finite domain"""
    if cardinality < 2:
        raise ValueError(f"cardinality must be at least 2, got {cardinality}")
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    constants = bound_constants(noise_var, cardinality)
    return math.sqrt(constants.c1 * constants.c2 * T * gamma_upper)


def bcr_bound_ts_continuous(T, d, r, a, b, kernel, noise_var, gamma_upper) -> float:
    s_T = s_t_ts(T, d, r, a, b, kernel)
    c1 = c1_constant(noise_var)
    return math.pi ** 2 / 3 + math.pi ** 2 / 6 * math.sqrt(s_T) + math.sqrt(c1 * gamma_upper * T * s_T)


def bcr_bound_ts_discretized(T, d, r, a, b, kernel, noise_var, gamma_upper) -> float:
    """Bound for the TS variant that evaluates the lattice point [x_t]_t"""
    _check_smoothness(T, a, b)
    L = smoothness_radius(d, a, b)
    s_T = 2.0 - 2.0 * math.log(2.0) + 2.0 * d * math.log(math.ceil(d * r * L * T ** 2))
    return math.pi ** 2 / 6 + math.sqrt(c1_constant(noise_var) * gamma_upper * T * s_T)


def bcr_bound_pims_continuous(T, d, r, a, b, noise_var, n_T, gamma_upper) -> float:
    m_T = m_t_pims(T, d, r, a, b, noise_var, n_T)
    return math.pi ** 2 / 6 + math.sqrt(c1_constant(noise_var) * T * gamma_upper * m_T)


def bsr_bound_pims(T, d, r, a, b, noise_var, gamma_upper) -> float:
    """Bound on the simple regret of the posterior-mean recommendation"""
    m_T = m_t_pims_bsr(T, d, r, a, b)
    return math.pi ** 2 / (6 * T) + math.sqrt(c1_constant(noise_var) * gamma_upper * m_T / T)
