"""
Selection policies over a finite domain

TS, PIMS, GP-UCB, IRGP-UCB, EI, classic PI and single-sample MES, plus the
confidence-parameter schedules and the PIMS / randomized GP-UCB equivalence.
Every argmax or argmin breaks ties toward the lowest grid index.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import log_ndtr, ndtr

from pimsbo.errors import DomainError, NumericalError
from pimsbo.kernel_gp import GpPosterior, as_points
from pimsbo.sampling import SamplePath

logger = logging.getLogger(__name__)

EQUIVALENCE_TOL = 1e-8
ARGSET_TOL = 1e-9
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class FiniteGrid:
    """A finite input domain given as distinct points"""

    points: np.ndarray

    def __post_init__(self):
        points = as_points(self.points, name="grid points")
        if points.shape[0] == 0:
            raise DomainError("finite grid is empty")
        if np.unique(points, axis=0).shape[0] != points.shape[0]:
            raise DomainError("finite grid points must be distinct")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def point(self, index) -> Tuple[float, ...]:
        return tuple(float(v) for v in self.points[index])

    def nearest_index(self, x) -> int:
        """Grid index closest to x in L1 distance, lowest index on ties"""
        x = np.asarray(x, dtype=float).ravel()
        return int(np.argmin(np.sum(np.abs(self.points - x), axis=1)))


@dataclass(frozen=True)
class Box:
    """The box [0, r]^d, only queried through discretizations"""

    r: float
    d: int

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r > 0):
            raise DomainError(f"box side r must be positive, got {self.r}")
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"box dimension d must be a positive integer, got {self.d}")


@dataclass(frozen=True)
class AcquisitionRecord:
    """Outcome of one selection step"""

    index: int
    chosen: Tuple[float, ...]
    score: float
    confidence: float
    posterior_std_at_choice: float
    g_star: Optional[float] = None


def _argmax(values) -> int:
    return int(np.argmax(values))


def _argmin(values) -> int:
    return int(np.argmin(values))


def _moments(post: GpPosterior, domain: FiniteGrid):
    return post.mean_std(domain.points)


def _record(domain, index, score, confidence, std, g_star=None):
    return AcquisitionRecord(
        index=index,
        chosen=domain.point(index),
        score=float(score),
        confidence=float(confidence),
        posterior_std_at_choice=float(std[index]),
        g_star=None if g_star is None else float(g_star),
    )


def _require_positive_std(std):
    if np.any(std <= 0):
        raise NumericalError("posterior standard deviation vanished on the grid")


def ucb_scores(mean, std, beta_sqrt) -> np.ndarray:
    return mean + beta_sqrt * std


def pims_scores(mean, std, g_star) -> np.ndarray:
    """(g* - mu) / sigma, minimized by PIMS"""
    return (g_star - mean) / std


def pi_scores(mean, std, incumbent) -> np.ndarray:
    return (mean - incumbent) / std


def ei_scores(mean, std, incumbent) -> np.ndarray:
    improvement = mean - incumbent
    scores = np.maximum(improvement, 0.0)
    positive = std > 0
    z = improvement[positive] / std[positive]
    density = np.exp(-0.5 * z ** 2 - _LOG_SQRT_2PI)
    scores[positive] = improvement[positive] * ndtr(z) + std[positive] * density
    return np.maximum(scores, 0.0)


def mes_single_scores(mean, std, g_star) -> np.ndarray:
    """Max-value entropy search with the single max-value sample g*"""
    gamma = (g_star - mean) / std
    log_cdf = log_ndtr(gamma)
    ratio = np.exp(-0.5 * gamma ** 2 - _LOG_SQRT_2PI - log_cdf)
    return 0.5 * gamma * ratio - log_cdf


def select_ts(post: GpPosterior, domain: FiniteGrid, path: SamplePath) -> AcquisitionRecord:
    """Query the maximizer of the sample path; confidence is eta_t"""
    values = path.evaluate(domain.points)
    mean, std = _moments(post, domain)
    index = _argmax(values)
    eta = (values[index] - mean[index]) / std[index]
    return _record(domain, index, values[index], eta, std, g_star=values[index])


def select_pims(post: GpPosterior, domain: FiniteGrid, path: SamplePath) -> AcquisitionRecord:
    """Minimize (g* - mu) / sigma with g* the path maximum; confidence is xi_t"""
    values = path.evaluate(domain.points)
    mean, std = _moments(post, domain)
    _require_positive_std(std)
    g_star = float(np.max(values))
    scores = pims_scores(mean, std, g_star)
    index = _argmin(scores)
    return _record(domain, index, scores[index], scores[index], std, g_star=g_star)


def select_mes_single(post: GpPosterior, domain: FiniteGrid,
                      path: SamplePath) -> AcquisitionRecord:
    values = path.evaluate(domain.points)
    mean, std = _moments(post, domain)
    _require_positive_std(std)
    g_star = float(np.max(values))
    scores = mes_single_scores(mean, std, g_star)
    index = _argmax(scores)
    xi = float(np.min(pims_scores(mean, std, g_star)))
    return _record(domain, index, scores[index], xi, std, g_star=g_star)


def select_gp_ucb(post: GpPosterior, domain: FiniteGrid, beta_sqrt: float) -> AcquisitionRecord:
    if not (math.isfinite(beta_sqrt) and beta_sqrt >= 0):
        raise ValueError(f"beta_sqrt must be finite and nonnegative, got {beta_sqrt}")
    mean, std = _moments(post, domain)
    scores = ucb_scores(mean, std, beta_sqrt)
    index = _argmax(scores)
    return _record(domain, index, scores[index], beta_sqrt, std)


def select_irgp_ucb(post: GpPosterior, domain: FiniteGrid, zeta: float) -> AcquisitionRecord:
    """GP-UCB with a randomized confidence parameter zeta_t"""
    if not zeta >= 0:
        raise ValueError(f"zeta must be nonnegative, got {zeta}")
    return select_gp_ucb(post, domain, math.sqrt(zeta))


def _check_incumbent(incumbent):
    if not math.isfinite(incumbent):
        raise ValueError(f"incumbent must be finite, got {incumbent}")


def select_ei(post: GpPosterior, domain: FiniteGrid, incumbent: float) -> AcquisitionRecord:
    _check_incumbent(incumbent)
    mean, std = _moments(post, domain)
    scores = ei_scores(mean, std, incumbent)
    index = _argmax(scores)
    return _record(domain, index, scores[index], incumbent, std)


def select_pi_classic(post: GpPosterior, domain: FiniteGrid,
                      incumbent: float) -> AcquisitionRecord:
    """Probability of improvement over the incumbent (the best observation)"""
    _check_incumbent(incumbent)
    mean, std = _moments(post, domain)
    _require_positive_std(std)
    scores = pi_scores(mean, std, incumbent)
    index = _argmax(scores)
    return _record(domain, index, scores[index], incumbent, std)


def beta_theoretical(cardinality: int, t: int) -> float:
    """2 log(|X| t^2 / sqrt(2 pi)), clamped at 0"""
    if cardinality < 1 or t < 1:
        raise ValueError(f"need cardinality >= 1 and t >= 1, got {cardinality}, {t}")
    return max(0.0, 2.0 * (math.log(cardinality) + 2.0 * math.log(t) - _LOG_SQRT_2PI))


def beta_heuristic(d: int, t: int) -> float:
    """0.2 d log(2t)"""
    if d < 1 or t < 1:
        raise ValueError(f"need d >= 1 and t >= 1, got {d}, {t}")
    return 0.2 * d * math.log(2.0 * t)


def zeta_shift_theoretical(cardinality: int) -> float:
    if cardinality < 1:
        raise ValueError(f"cardinality must be at least 1, got {cardinality}")
    return max(0.0, 2.0 * math.log(cardinality / 2.0))


def zeta_shift_heuristic(d: int) -> float:
    if d < 1:
        raise ValueError(f"d must be at least 1, got {d}")
    return 2.0 / d


def draw_zeta(shift: float, rate: float, rng: np.random.Generator) -> float:
    """Two-parameter exponential: shift + Exp(rate), mean shift + 1/rate"""
    if not (math.isfinite(shift) and shift >= 0):
        raise ValueError(f"shift must be finite and nonnegative, got {shift}")
    if not (math.isfinite(rate) and rate > 0):
        raise ValueError(f"rate must be finite and positive, got {rate}")
    return shift + rng.standard_exponential() / rate


@dataclass(frozen=True)
class EquivalenceReport:
    xi: float
    pims_choice: Tuple[float, ...]
    ucb_choice: Tuple[float, ...]
    identity_gap: float
    scores_agree: bool


def equivalence_from_moments(mean, std, g_star, points=None) -> EquivalenceReport:
    """Compare argmin of (g* - mu)/sigma with argmax of mu + xi sigma

    xi is the attained minimum; max(mu + xi sigma) must equal g* exactly in
    exact arithmetic, and the two index sets must coincide.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    _require_positive_std(std)
    scores = pims_scores(mean, std, g_star)
    xi = float(np.min(scores))
    ucb = ucb_scores(mean, std, xi)
    top = float(np.max(ucb))

    pims_set = np.flatnonzero(scores - xi <= ARGSET_TOL * (1.0 + abs(xi)))
    ucb_set = np.flatnonzero(top - ucb <= ARGSET_TOL * (1.0 + abs(top)) * std)
    gap = abs(top - g_star)
    agree = (np.array_equal(pims_set, ucb_set)
             and gap <= EQUIVALENCE_TOL * max(1.0, abs(g_star)))
    if points is None:
        points = np.arange(mean.shape[0], dtype=float).reshape(-1, 1)
    return EquivalenceReport(
        xi=xi,
        pims_choice=tuple(float(v) for v in points[pims_set[0]]),
        ucb_choice=tuple(float(v) for v in points[_argmax(ucb)]),
        identity_gap=gap,
        scores_agree=bool(agree),
    )


def verify_equivalence(post: GpPosterior, domain: FiniteGrid, g_star: float) -> EquivalenceReport:
    mean, std = _moments(post, domain)
    report = equivalence_from_moments(mean, std, g_star, domain.points)
    if not report.scores_agree:
        logger.warning("PIMS/UCB equivalence failed: gap %.3e", report.identity_gap)
    return report


def xi_tail_agrees_moments(mean, std, g_star, c) -> bool:
    """[xi > c] and [g* > max(mu + c sigma)] must be the same event"""
    if c < 0:
        raise ValueError(f"c must be nonnegative, got {c}")
    xi = float(np.min(pims_scores(mean, std, g_star)))
    return (xi > c) == (g_star > float(np.max(ucb_scores(mean, std, c))))


def xi_tail_agrees(post: GpPosterior, domain: FiniteGrid, g_star: float, c: float) -> bool:
    mean, std = _moments(post, domain)
    return xi_tail_agrees_moments(mean, std, g_star, c)
