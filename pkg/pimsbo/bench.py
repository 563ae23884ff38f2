"""
Synthetic objectives, the BO loop and regret metrics
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from pimsbo.acquisition import (AcquisitionRecord, FiniteGrid, beta_heuristic, beta_theoretical,
                                draw_zeta, select_ei, select_gp_ucb, select_irgp_ucb,
                                select_pi_classic, select_pims, select_ts, zeta_shift_heuristic,
                                zeta_shift_theoretical)
from pimsbo.errors import DomainError
from pimsbo.kernel_gp import (Dataset, KernelFamily, KernelSpec, fit_lengthscale, fit_posterior)
from pimsbo.sampling import (DEFAULT_NUM_FEATURES, build_rff, draw_posterior_sample,
                             exact_grid_sample, exact_grid_values)

logger = logging.getLogger(__name__)

IRGP_RATE = 0.5
MAX_DESIGN_ROUNDS = 100
REGRET_ORDERING_TOL = 1e-12


class Policy(str, Enum):
    TS = "TS"
    PIMS = "PIMS"
    GPUCB_THEORETICAL = "GPUCB_theoretical"
    GPUCB_HEURISTIC = "GPUCB_heuristic"
    IRGPUCB_THEORETICAL = "IRGPUCB_theoretical"
    IRGPUCB_HEURISTIC = "IRGPUCB_heuristic"
    EI = "EI"
    PI = "PI"

    @property
    def stream_id(self):
        return list(Policy).index(self)


@dataclass(frozen=True, eq=False)
class Objective:
    """True function values on a finite grid"""

    domain: FiniteGrid
    true_values: np.ndarray
    f_star: float
    x_star: int

    @classmethod
    def from_values(cls, domain: FiniteGrid, values) -> "Objective":
        values = np.asarray(values, dtype=float).ravel()
        if values.shape[0] != domain.size:
            raise DomainError(f"{values.shape[0]} values for {domain.size} grid points")
        values.setflags(write=False)
        x_star = int(np.argmax(values))
        return cls(domain, values, float(values[x_star]), x_star)


def gen_objective(kernel: KernelSpec, domain: FiniteGrid, rng: np.random.Generator) -> Objective:
    """Exact prior draw of f on the grid"""
    prior = fit_posterior(kernel, Dataset.empty(domain.dim, noise_var=1.0))
    return Objective.from_values(domain, exact_grid_values(prior, domain.points, rng)[0])


def load_tabulated_objective(path) -> Objective:
    """Read a CSV of rows x_1, ..., x_d, f(x); non-numeric leading rows are skipped"""
    rows = []
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if rows:
                    raise DomainError(f"non-numeric row in {path}: {row}")
    if not rows:
        raise DomainError(f"no objective rows in {path}")
    table = np.asarray(rows, dtype=float)
    if table.ndim != 2 or table.shape[1] < 2:
        raise DomainError(f"{path} needs at least one coordinate column and a value column")
    return Objective.from_values(FiniteGrid(table[:, :-1]), table[:, -1])


@dataclass(frozen=True)
class TrialStreams:
    """Independent RNG streams of one (trial, policy) run"""

    objective: np.random.Generator
    init: np.random.Generator
    policy: np.random.Generator
    noise: np.random.Generator


def trial_streams(seed: int, trial: int, policy, common_random_numbers=False,
                  paired_objectives=True) -> TrialStreams:
    policy_id = Policy(policy).stream_id

    def stream(*key):
        return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))

    shared = () if paired_objectives else (policy_id,)
    noise = () if common_random_numbers else (policy_id,)
    return TrialStreams(
        objective=stream(trial, 0, *shared),
        init=stream(trial, 1, *shared),
        policy=stream(trial, 2, policy_id),
        noise=stream(trial, 3, *noise),
    )


def latin_hypercube(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """n stratified points in [0, 1)^d, one per stratum along every axis"""
    jitter = rng.uniform(size=(n, d))
    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    return (strata + jitter) / n


def initial_design(domain: FiniteGrid, count: int, rng: np.random.Generator) -> List[int]:
    """Latin-hypercube points in the grid's bounding box, snapped to the grid

    Snapped duplicates are re-drawn; after too many rounds the remaining
    slots are filled with random unused grid points.
    """
    count = min(count, domain.size)
    lower = domain.points.min(axis=0)
    width = domain.points.max(axis=0) - lower
    chosen, seen = [], set()
    rounds = 0
    while len(chosen) < count and rounds < MAX_DESIGN_ROUNDS:
        batch = lower + latin_hypercube(count - len(chosen), domain.dim, rng) * width
        for x in batch:
            index = domain.nearest_index(x)
            if index not in seen:
                seen.add(index)
                chosen.append(index)
        rounds += 1
    if len(chosen) < count:
        unused = np.asarray([i for i in range(domain.size) if i not in seen])
        chosen.extend(int(i) for i in rng.choice(unused, size=count - len(chosen), replace=False))
    return chosen


@dataclass(frozen=True)
class StepRecord:
    t: int
    index: int
    x: Tuple[float, ...]
    y: float
    f_x: float
    acquisition: AcquisitionRecord
    recommendation: int
    sigma: float


@dataclass(eq=False)
class RunTrace:
    """A full BO trajectory"""

    policy: Policy
    steps: List[StepRecord]
    initial_indices: Tuple[int, ...]
    initial_inputs: np.ndarray
    initial_observations: np.ndarray
    kernel: KernelSpec
    noise_var: float

    def __len__(self):
        return len(self.steps)

    @property
    def query_points(self) -> np.ndarray:
        if not self.steps:
            return np.zeros((0, self.initial_inputs.shape[1]))
        return np.asarray([step.x for step in self.steps], dtype=float)

    @property
    def sigmas(self) -> np.ndarray:
        return np.asarray([step.sigma for step in self.steps], dtype=float)

    @property
    def confidences(self) -> np.ndarray:
        return np.asarray([step.acquisition.confidence for step in self.steps], dtype=float)


def _draw_path(post, domain, kernel, num_features, rng):
    if kernel.family is KernelFamily.LINEAR:
        return exact_grid_sample(post, domain.points, rng)
    fmap = build_rff(kernel, num_features, rng, domain.dim)
    return draw_posterior_sample(post, fmap, rng)


def _select(policy, post, domain, data, t, rng, num_features, beta_scale):
    if policy is Policy.TS:
        return select_ts(post, domain, _draw_path(post, domain, post.kernel, num_features, rng))
    if policy is Policy.PIMS:
        return select_pims(post, domain, _draw_path(post, domain, post.kernel, num_features, rng))
    if policy is Policy.GPUCB_THEORETICAL:
        return select_gp_ucb(post, domain, math.sqrt(beta_scale * beta_theoretical(domain.size, t)))
    if policy is Policy.GPUCB_HEURISTIC:
        return select_gp_ucb(post, domain, math.sqrt(beta_scale * beta_heuristic(domain.dim, t)))
    if policy is Policy.IRGPUCB_THEORETICAL:
        zeta = draw_zeta(zeta_shift_theoretical(domain.size), IRGP_RATE, rng)
        return select_irgp_ucb(post, domain, beta_scale * zeta)
    if policy is Policy.IRGPUCB_HEURISTIC:
        zeta = draw_zeta(zeta_shift_heuristic(domain.dim), IRGP_RATE, rng)
        return select_irgp_ucb(post, domain, beta_scale * zeta)

    # with no observations yet the prior mean stands in for the best observation
    incumbent = float(np.max(data.observations)) if data.size else 0.0
    if policy is Policy.EI:
        return select_ei(post, domain, incumbent)
    return select_pi_classic(post, domain, incumbent)


def run_bo(objective: Objective, policy, T: int, init_count: int, refit_every: int,
           rng: np.random.Generator, *, kernel: KernelSpec, noise_var: float,
           num_features: int = DEFAULT_NUM_FEATURES,
           candidate_lengthscales: Optional[Sequence[float]] = None,
           noise_rng: Optional[np.random.Generator] = None,
           init_rng: Optional[np.random.Generator] = None,
           beta_scale: float = 1.0) -> RunTrace:
    """Run T steps of `policy` on `objective`

    `rng` drives the policy's own randomness; observation noise and the
    initial design use `noise_rng` and `init_rng` when given. The lengthscale
    is refitted every `refit_every` steps when candidates are supplied.
    """
    policy = Policy(policy)
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    if init_count < 0:
        raise ValueError(f"init_count must be nonnegative, got {init_count}")
    noise_rng = rng if noise_rng is None else noise_rng
    init_rng = rng if init_rng is None else init_rng
    domain = objective.domain
    noise_sd = math.sqrt(noise_var)

    initial = initial_design(domain, init_count, init_rng)
    initial_y = [objective.true_values[i] + noise_rng.normal(0.0, noise_sd) for i in initial]
    data = Dataset(domain.points[np.asarray(initial, dtype=int)].reshape(-1, domain.dim),
                   np.asarray(initial_y, dtype=float), noise_var)

    steps = []
    for t in range(1, T + 1):
        refit = refit_every and candidate_lengthscales and kernel.is_stationary
        if refit and data.size and (t - 1) % refit_every == 0:
            kernel = fit_lengthscale(data, candidate_lengthscales, kernel.family, kernel.nu)
        post = fit_posterior(kernel, data)
        mean, _ = post.mean_std(domain.points)
        record = _select(policy, post, domain, data, t, rng, num_features, beta_scale)
        f_x = float(objective.true_values[record.index])
        y = f_x + noise_rng.normal(0.0, noise_sd)
        steps.append(StepRecord(
            t=t, index=record.index, x=record.chosen, y=float(y), f_x=f_x,
            acquisition=record, recommendation=int(np.argmax(mean)),
            sigma=record.posterior_std_at_choice))
        data = data.append(domain.points[record.index], y)

    return RunTrace(policy, steps, tuple(initial), data.inputs[:len(initial)].copy(),
                    np.asarray(initial_y, dtype=float), kernel, noise_var)


@dataclass(frozen=True, eq=False)
class RegretSeries:
    simple: np.ndarray
    cumulative: np.ndarray
    modified_simple: np.ndarray

    def __len__(self):
        return self.simple.shape[0]


def regret_series(trace: RunTrace, objective: Objective) -> RegretSeries:
    """Simple, cumulative and posterior-mean-recommendation regret, noise free"""
    indices = np.asarray([step.index for step in trace.steps], dtype=int)
    if np.any(indices >= objective.domain.size):
        raise ValueError("trace indices fall outside the objective's grid")
    f_x = np.asarray([step.f_x for step in trace.steps], dtype=float)
    if not np.array_equal(f_x, objective.true_values[indices]):
        raise ValueError("trace values do not match the objective")
    recommendations = np.asarray([step.recommendation for step in trace.steps], dtype=int)
    gaps = objective.f_star - f_x
    return RegretSeries(
        simple=objective.f_star - np.maximum.accumulate(f_x),
        cumulative=np.cumsum(gaps),
        modified_simple=objective.f_star - objective.true_values[recommendations],
    )


def regret_ordering_holds(series: RegretSeries) -> bool:
    """Pathwise: simple regret never exceeds average cumulative regret"""
    average = series.cumulative / np.arange(1, len(series) + 1)
    return bool(np.all(series.simple <= average + REGRET_ORDERING_TOL * (1.0 + np.abs(average))))


@dataclass(frozen=True, eq=False)
class RegretSummary:
    mean: np.ndarray
    stderr: np.ndarray


def aggregate(series_list, field="simple") -> RegretSummary:
    """Pointwise mean and standard error over trials"""
    rows = [getattr(s, field) if isinstance(s, RegretSeries) else np.asarray(s, dtype=float)
            for s in series_list]
    if len(rows) < 2:
        raise ValueError(f"standard errors need at least 2 traces, got {len(rows)}")
    if len({row.shape[0] for row in rows}) != 1:
        raise ValueError("regret series have different lengths")
    table = np.vstack(rows)
    return RegretSummary(table.mean(axis=0),
                         table.std(axis=0, ddof=1) / math.sqrt(table.shape[0]))


@dataclass(frozen=True)
class EvaluatedStdStats:
    per_trace_mean: List[float]
    mean: float
    std: float


def evaluated_std_stats(traces: Sequence[RunTrace]) -> EvaluatedStdStats:
    """Mean of sigma_{t-1}(x_t) per trace, then its mean and std across traces"""
    if not traces:
        raise ValueError("evaluated_std_stats needs at least one trace")
    per_trace = [float(np.mean(trace.sigmas)) for trace in traces]
    return EvaluatedStdStats(per_trace, float(np.mean(per_trace)), float(np.std(per_trace)))


@dataclass(frozen=True, eq=False)
class ConfidenceTrack:
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def confidence_track(traces: Sequence[RunTrace]) -> ConfidenceTrack:
    """Per-step median and 25% / 75% quantiles of the recorded confidence"""
    if not traces:
        raise ValueError("confidence_track needs at least one trace")
    if len({len(trace) for trace in traces}) != 1:
        raise ValueError("traces have different lengths")
    table = np.vstack([trace.confidences for trace in traces])
    lower, median, upper = np.quantile(table, [0.25, 0.5, 0.75], axis=0)
    return ConfidenceTrack(median, lower, upper)


def paired_std_comparison(traces_a: Sequence[RunTrace], traces_b: Sequence[RunTrace]) -> float:
    """One-sided paired t-test p-value that `a` evaluates larger posterior stds than `b`"""
    a = np.asarray(evaluated_std_stats(traces_a).per_trace_mean)
    b = np.asarray(evaluated_std_stats(traces_b).per_trace_mean)
    if a.shape != b.shape:
        raise ValueError("paired comparison needs the same number of traces")
    if np.allclose(a, b):
        return 1.0
    return float(stats.ttest_rel(a, b, alternative="greater").pvalue)
