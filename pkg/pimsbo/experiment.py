"""
Experiment orchestration: regret benchmarks and the verifier suite

Trials run in joblib workers; every file is written by the calling process
after all results are collected.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
from joblib import Parallel, delayed

from pimsbo.acquisition import (Box, EQUIVALENCE_TOL, FiniteGrid, equivalence_from_moments,
                                xi_tail_agrees_moments)
from pimsbo.bench import (Policy, aggregate, confidence_track, evaluated_std_stats,
                          gen_objective, regret_ordering_holds, load_tabulated_objective,
                          paired_std_comparison, regret_series, run_bo, trial_streams)
from pimsbo.config import CHECK_NAMES, ExperimentConfig
from pimsbo.errors import PimsboError
from pimsbo.kernel_gp import Dataset, KernelFamily, KernelSpec
from pimsbo.storage import ArtifactStorage, MANIFEST_FILE, SUMMARY_FILE
from pimsbo.theory import (GREEDY_FACTOR, BoundReport, bcr_bound_finite,
                           bcr_bound_pims_continuous, bcr_bound_ts_continuous,
                           bcr_bound_ts_discretized, bsr_bound_pims, build_discretization,
                           gauss_tail_check, m_t_pims, mc_eta_bound, mig, mig_sandwich_check,
                           s_t_ts, tau_ts, variance_sum_bound_check)

logger = logging.getLogger(__name__)

TAIL_GRID = np.round(np.arange(1001) * 0.01, 2)
XI_TAIL_LEVELS = (0.0, 0.5, 1.0, 2.0, 4.0)
VERIFY_OBSERVATIONS = 5
EQUIVALENCE_MAX_SIZE = 50


def kernel_from_config(config: ExperimentConfig) -> KernelSpec:
    return KernelSpec(KernelFamily(config.kernel), config.lengthscale, config.nu)


def grid_from_config(config: ExperimentConfig):
    box = Box(config.box_r, config.dim)
    return build_discretization(box, config.divisions).as_grid()


def _verifier_rng(config, *key):
    return np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(2 ** 32,) + key))


@dataclass
class ExperimentResult:
    output_dir: Path
    files: List[str]
    summary: dict


def _run_trial(config, kernel, trial, objective=None):
    results = []
    for name in config.policies:
        policy = Policy(name)
        streams = trial_streams(config.seed, trial, policy,
                                common_random_numbers=config.common_random_numbers,
                                paired_objectives=config.paired_objectives)
        try:
            trial_objective = objective
            if trial_objective is None:
                trial_objective = gen_objective(kernel, grid_from_config(config), streams.objective)
            trace = run_bo(trial_objective, policy, config.T, config.init_count,
                           config.refit_every, streams.policy, kernel=kernel,
                           noise_var=config.noise_var, num_features=config.rff_features,
                           candidate_lengthscales=config.candidate_lengthscales,
                           noise_rng=streams.noise, init_rng=streams.init,
                           beta_scale=config.beta_scale(name))
        except (PimsboError, ValueError) as e:
            raise PimsboError(f"trial {trial}, policy {name}: {e}") from e
        results.append((policy, trace, regret_series(trace, trial_objective)))
    logger.info("trial %d finished", trial)
    return results


def _series_summary(series_list, field):
    if len(series_list) >= 2:
        summary = aggregate(series_list, field)
        return {"mean": summary.mean.tolist(), "stderr": summary.stderr.tolist()}
    row = getattr(series_list[0], field)
    return {"mean": row.tolist(), "stderr": [0.0] * len(row)}


def summarize(config: ExperimentConfig, per_policy, grid_size, kernel) -> dict:
    """Build the summary.json document from collected traces"""
    policies = {}
    for name, (traces, series) in per_policy.items():
        std_stats = evaluated_std_stats(traces)
        entry = {
            "simple_regret": _series_summary(series, "simple"),
            "cumulative_regret": _series_summary(series, "cumulative"),
            "modified_simple_regret": _series_summary(series, "modified_simple"),
            "evaluated_std": {"per_trial_mean": std_stats.per_trace_mean,
                              "mean": std_stats.mean, "std": std_stats.std},
            "regret_ordering_holds": all(regret_ordering_holds(s) for s in series),
        }
        if config.confidence_tracking:
            track = confidence_track(traces)
            entry["confidence"] = {"median": track.median.tolist(),
                                   "lower": track.lower.tolist(),
                                   "upper": track.upper.tolist()}
        policies[name] = entry

    summary = {"T": config.T, "trials": config.trials, "grid_size": grid_size,
               "policies": policies}
    if kernel.is_stationary and grid_size >= 2:
        gamma = mig(kernel, config.noise_var, _summary_domain(config), config.T,
                    "greedy", allow_repeats=True)
        summary["gamma_upper"] = gamma.upper
        summary["bcr_bound"] = bcr_bound_finite(grid_size, config.T, config.noise_var,
                                                gamma.upper)
        if not config.objective_table:
            summary["continuous_bounds"] = continuous_bounds(config, kernel, gamma.upper)
    if "TS" in per_policy and "PIMS" in per_policy and config.trials >= 2:
        summary["evaluated_std_pvalue"] = paired_std_comparison(per_policy["TS"][0],
                                                                per_policy["PIMS"][0])
    return summary


def continuous_bounds(config: ExperimentConfig, kernel: KernelSpec, gamma_upper: float) -> dict:
    """Bounds on the box [0, r]^d, parametric in the smoothness constants a and b

    gamma_upper comes from the configured grid and stands in for the box's
    information gain. n_T counts the observations before the last step.
    """
    T, d, r, a, b = config.T, config.dim, config.box_r, config.a, config.b
    noise_var = config.noise_var
    n_T = min(config.init_count, config.divisions ** d) + T - 1
    return {
        "a": a,
        "b": b,
        "tau_T": tau_ts(T, d, r, a, b, kernel),
        "s_T": s_t_ts(T, d, r, a, b, kernel),
        "m_T": m_t_pims(T, d, r, a, b, noise_var, n_T),
        "ts_bcr": bcr_bound_ts_continuous(T, d, r, a, b, kernel, noise_var, gamma_upper),
        "ts_discretized_bcr": bcr_bound_ts_discretized(T, d, r, a, b, kernel, noise_var,
                                                       gamma_upper),
        "pims_bcr": bcr_bound_pims_continuous(T, d, r, a, b, noise_var, n_T, gamma_upper),
        "pims_bsr": bsr_bound_pims(T, d, r, a, b, noise_var, gamma_upper),
    }


def _summary_domain(config):
    if config.objective_table:
        return load_tabulated_objective(config.objective_table).domain
    return grid_from_config(config)


def run_experiment(config: ExperimentConfig, jobs: Optional[int] = None,
                   storage: Optional[ArtifactStorage] = None) -> ExperimentResult:
    """Run every configured policy for every trial and write the artifacts"""
    kernel = kernel_from_config(config)
    objective = None
    if config.objective_table:
        objective = load_tabulated_objective(config.objective_table)
        grid_size = objective.domain.size
    else:
        grid_size = config.divisions ** config.dim
    storage = storage or ArtifactStorage(config.output_dir)

    logger.info("running %d trials of %s on %d grid points", config.trials,
                ", ".join(config.policies), grid_size)
    collected = Parallel(n_jobs=jobs or config.jobs)(
        delayed(_run_trial)(config, kernel, trial, objective) for trial in range(config.trials))

    storage.ensure_output_exists()
    files = []
    per_policy = {name: ([], []) for name in config.policies}
    for trial, results in enumerate(collected):
        for policy, trace, series in results:
            files.append(storage.write_trace_csv(trace, series, trial).name)
            per_policy[policy.value][0].append(trace)
            per_policy[policy.value][1].append(series)

    summary = summarize(config, per_policy, grid_size, kernel)
    storage.write_summary(summary)
    files.append(SUMMARY_FILE)
    storage.write_manifest(config, files + [MANIFEST_FILE])
    files.append(MANIFEST_FILE)
    return ExperimentResult(storage.output_dir, files, summary)


@dataclass
class VerifyResult:
    reports: List[BoundReport]
    passed: bool
    path: Optional[Path] = None

    @property
    def failures(self):
        return [report.name for report in self.reports if not report.passed]


def _random_points(rng, count, config):
    return rng.uniform(0.0, config.box_r, size=(count, config.dim))


def _check_second_moments(config, kernel):
    reports = []
    for i, cardinality in enumerate(config.verify_cardinalities):
        rng = _verifier_rng(config, 0, i)
        domain = FiniteGrid(_random_points(rng, cardinality, config))
        prior = Dataset.empty(config.dim, config.noise_var)
        observed = Dataset(_random_points(rng, VERIFY_OBSERVATIONS, config),
                           rng.standard_normal(VERIFY_OBSERVATIONS), config.noise_var)
        for dataset in (prior, observed):
            result = mc_eta_bound(kernel, domain, dataset, config.mc_draws, rng, jobs=config.jobs)
            reports.extend([result.eta, result.xi])
    return reports


def _check_equivalence(config):
    rng = _verifier_rng(config, 1)
    worst_gap, failures, tail_failures = 0.0, 0, 0
    for _ in range(config.equivalence_instances):
        size = int(rng.integers(2, EQUIVALENCE_MAX_SIZE + 1))
        mean = rng.standard_normal(size)
        std = rng.uniform(0.1, 2.0, size)
        g_star = float(np.max(mean + std * rng.standard_normal(size)))
        report = equivalence_from_moments(mean, std, g_star)
        worst_gap = max(worst_gap, report.identity_gap)
        failures += not report.scores_agree
        tail_failures += sum(not xi_tail_agrees_moments(mean, std, g_star, c)
                             for c in XI_TAIL_LEVELS)
    details = {"instances": config.equivalence_instances}
    return [
        BoundReport("equivalence", worst_gap, EQUIVALENCE_TOL, failures == 0,
                    details=dict(details, failures=failures)),
        BoundReport("xi_tail", float(tail_failures), 0.0, tail_failures == 0,
                    details=dict(details, levels=list(XI_TAIL_LEVELS))),
    ]


def _check_variance_sums(config, kernel):
    if not kernel.is_stationary:
        logger.warning("variance-sum check needs k(x, x) <= 1; skipped for the %s kernel",
                       kernel.family.value)
        return [BoundReport("variance_sum", 0.0, 0.0, True,
                            details={"skipped": f"{kernel.family.value} kernel"})]
    domain = grid_from_config(config)
    gamma_upper = mig(kernel, config.noise_var, domain, config.T, "greedy",
                      allow_repeats=True).upper
    reports = []
    for trial in range(config.verify_trials):
        for policy in (Policy.TS, Policy.PIMS):
            streams = trial_streams(config.seed, trial, policy)
            objective = gen_objective(kernel, domain, _verifier_rng(config, 2, trial))
            trace = run_bo(objective, policy, config.T, config.init_count, 0, streams.policy,
                           kernel=kernel, noise_var=config.noise_var,
                           num_features=config.rff_features, noise_rng=streams.noise,
                           init_rng=streams.init)
            report = variance_sum_bound_check(trace, kernel, config.noise_var, gamma_upper)
            reports.append(BoundReport(f"variance_sum_{policy.value}_{trial}", report.empirical,
                                       report.bound, report.passed, details=report.details))
    return reports


def _check_mig_sandwich(config, kernel):
    rng = _verifier_rng(config, 3)
    instances, failures, worst_ratio = 0, [], 1.0
    for size in range(2, config.mig_max_size + 1):
        domain = FiniteGrid(_random_points(rng, size, config))
        for T in range(1, min(config.mig_max_T, size) + 1):
            report = mig_sandwich_check(kernel, config.noise_var, domain, T)
            instances += 1
            greedy = report.details["greedy"]
            if greedy > 0:
                worst_ratio = max(worst_ratio, report.empirical / greedy)
            if not report.passed:
                failures.append({"size": size, "T": T})
    return [BoundReport("mig_sandwich", worst_ratio, 1.0 / GREEDY_FACTOR, not failures,
                        details={"instances": instances, "failures": failures})]


def run_verifiers(config: ExperimentConfig,
                  storage: Optional[ArtifactStorage] = None) -> VerifyResult:
    """Run the configured checks; all of them when `checks` is null"""
    checks = CHECK_NAMES if config.checks is None else config.checks
    kernel = kernel_from_config(config)
    reports = []
    for check in checks:
        logger.info("running check %s", check)
        if check == "gauss_tail":
            reports.append(gauss_tail_check(TAIL_GRID))
        elif check == "second_moment":
            reports.extend(_check_second_moments(config, kernel))
        elif check == "equivalence":
            reports.extend(_check_equivalence(config))
        elif check == "variance_sum":
            reports.extend(_check_variance_sums(config, kernel))
        elif check == "mig_sandwich":
            reports.extend(_check_mig_sandwich(config, kernel))
    for report in reports:
        if not report.passed:
            logger.warning("check %s failed: %.6g against %.6g",
                           report.name, report.empirical, report.bound)

    result = VerifyResult(reports, all(report.passed for report in reports))
    if storage is not None:
        storage.ensure_output_exists()
        result.path = storage.write_verify_report(reports, result.passed)
    return result


def compute_mig(config: ExperimentConfig, T: int, mode: str = "greedy",
                allow_repeats: bool = False):
    return mig(kernel_from_config(config), config.noise_var, _summary_domain(config), T,
               mode, allow_repeats)


