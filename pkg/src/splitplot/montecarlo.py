"""Simulation study: repeated randomization on a fixed population.

Generates a two-factor split-plot population with heterogeneous plot
sizes and a group-level covariate, then evaluates thirteen factor-based
regression schemes over repeated assignments, reporting bias, true
standard deviation, average cluster-robust standard error, and 95%
normal-interval coverage for the three factorial effects.

All randomness flows from counter-based generators seeded through a
single SeedSequence tree (one child for the population, one per
replication), so results are identical whatever the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.special
import scipy.stats

from .contrasts import standard_contrasts
from .design import (
    PotentialOutcomeTable,
    SplitPlotDesign,
    _randomize_from_seedseq,
    make_potential_table,
    new_design,
)
from .regression import ModelSpec, fit

SCHEME_SPECS: tuple[tuple[str, ModelSpec], ...] = (
    ("ols", ModelSpec("ols", parameterization="factor")),
    ("ols.x.F", ModelSpec("ols", "additive", "factor", covariates=True)),
    ("ols.x.L", ModelSpec("ols", "interacted", "factor", covariates=True)),
    ("wls", ModelSpec("wls", parameterization="factor")),
    ("wls.x.F", ModelSpec("wls", "additive", "factor", covariates=True)),
    ("wls.x.L", ModelSpec("wls", "interacted", "factor", covariates=True)),
    ("ag", ModelSpec("ag", parameterization="factor")),
    ("ag.x.F", ModelSpec("ag", "additive", "factor", covariates=True)),
    ("ag.x.L", ModelSpec("ag", "interacted", "factor", covariates=True)),
    ("ag.m.F", ModelSpec("ag", "additive", "factor", size_factor=True)),
    ("ag.m.L", ModelSpec("ag", "interacted", "factor", size_factor=True)),
    ("ag.xm.F", ModelSpec("ag", "additive", "factor", covariates=True, size_factor=True)),
    ("ag.xm.L", ModelSpec("ag", "interacted", "factor", covariates=True, size_factor=True)),
)
SCHEME_NAMES = tuple(name for name, _ in SCHEME_SPECS)
CONSISTENT_SCHEMES = tuple(n for n in SCHEME_NAMES if not n.startswith("ols"))
EFFECT_NAMES = ("A", "B", "A:B")

NORMAL_975 = float(scipy.stats.norm.ppf(0.975))


@dataclass(frozen=True)
class SimConfig:
    """Population and replication parameters.

    ``outcome_coefficients[z]`` gives (theta coefficient, intercept,
    x-squared coefficient) of the potential-outcome equation for
    treatment z in lexicographic order.
    """

    n_whole_plots: int = 300
    whole_plot_split: tuple[float, ...] = (0.7, 0.3)
    poisson_means: tuple[float, ...] = (5.0, 3.0)
    covariate_mean: float = 0.2
    covariate_var: float = 0.5
    within_plot_covariate_noise: float = 0.0
    theta_var: float = 0.2
    outcome_coefficients: tuple[tuple[float, float, float], ...] = (
        (1.0, 0.5, 2.0),
        (-0.5, 1.0, 1.0),
        (0.5, 1.0, -1.0),
        (1.0, 2.0, 2.0),
    )
    replications: int = 2000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_whole_plots < 4:
            raise ValueError("need at least two whole-plots per level")
        if abs(sum(self.whole_plot_split) - 1.0) > 1e-12:
            raise ValueError("whole_plot_split must sum to 1")
        if any(f <= 0 for f in self.whole_plot_split):
            raise ValueError("whole_plot_split fractions must be positive")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if len(self.outcome_coefficients) != len(self.whole_plot_split) * len(
            self.poisson_means
        ):
            raise ValueError("need one outcome equation per treatment")
        if self.covariate_var < 0 or self.within_plot_covariate_noise < 0 or self.theta_var < 0:
            raise ValueError("variances must be nonnegative")


@dataclass(frozen=True)
class SimPopulation:
    design: SplitPlotDesign
    table: PotentialOutcomeTable
    covariates: tuple[np.ndarray, ...]
    true_effects: np.ndarray  # [3] for 2x2


@dataclass(frozen=True)
class SimSummary:
    schemes: tuple[str, ...]
    effects: tuple[str, ...]
    true_effects: np.ndarray
    bias: np.ndarray  # [n_schemes, n_effects]
    sd: np.ndarray
    ese: np.ndarray
    coverage: np.ndarray
    replications: int
    n_failed: int
    config: SimConfig = field(repr=False, default=None)


def _poisson_icdf(rng: np.random.Generator, mean: float, size: int) -> np.ndarray:
    """Inverse-CDF Poisson draws from the uniform stream."""
    u = rng.random(size)
    out = np.zeros(size, dtype=int)
    k = 0
    cdf = np.full(size, np.exp(-mean))
    pmf = np.full(size, np.exp(-mean))
    pending = u > cdf
    while np.any(pending):
        k += 1
        pmf = pmf * mean / k
        cdf = cdf + pmf
        out[pending] = k
        pending = u > cdf
    return out


def _normal_icdf(rng: np.random.Generator, mean, var: float, size: int) -> np.ndarray:
    return mean + np.sqrt(var) * scipy.special.ndtri(rng.random(size))


def generate_population(config: SimConfig, seed=None) -> SimPopulation:
    """Draw sizes, covariates, and the potential-outcome surfaces.

    The returned population is fixed; only assignments vary across
    replications.
    """
    if seed is None:
        ss = np.random.SeedSequence(config.seed).spawn(1)[0]
    elif isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(seed)
    rng = np.random.Generator(np.random.Philox(ss))

    n_w = config.n_whole_plots
    t_a = len(config.whole_plot_split)
    t_b = len(config.poisson_means)

    counts = [int(round(f * n_w)) for f in config.whole_plot_split[:-1]]
    counts.append(n_w - sum(counts))
    if any(c < 2 for c in counts):
        raise ValueError("whole_plot_split leaves fewer than two plots at some level")

    sub_counts = np.stack(
        [np.maximum(2, _poisson_icdf(rng, m, n_w)) for m in config.poisson_means], axis=1
    )
    design = new_design(t_a, t_b, counts, sub_counts)

    sizes = sub_counts.sum(axis=1)
    x_w = _normal_icdf(rng, config.covariate_mean, config.covariate_var, n_w)
    theta = _normal_icdf(rng, 2.0 * sizes / sizes.max(), config.theta_var, n_w)

    coefs = np.asarray(config.outcome_coefficients, dtype=float)  # [|T|, 3]
    table = []
    covariates = []
    for w in range(n_w):
        m_w = int(sizes[w])
        x_ws = np.full(m_w, x_w[w])
        if config.within_plot_covariate_noise > 0:
            x_ws = x_ws + _normal_icdf(rng, 0.0, config.within_plot_covariate_noise, m_w)
        eps = rng.random(m_w) * 2.0 - 1.0
        # Y_ws(z) = c0_z * theta_w + c1_z + c2_z * x_ws^2 + eps_ws
        y = (
            coefs[None, :, 0] * theta[w]
            + coefs[None, :, 1]
            + coefs[None, :, 2] * (x_ws**2)[:, None]
            + eps[:, None]
        )
        table.append(y)
        covariates.append(x_ws[:, None])

    pot = make_potential_table(design, table)
    contrast = standard_contrasts(t_a, t_b)
    true_effects = contrast.g @ pot.population_means()
    return SimPopulation(
        design=design,
        table=pot,
        covariates=tuple(covariates),
        true_effects=true_effects,
    )


def _run_replication(pop: SimPopulation, ss: np.random.SeedSequence):
    """One assignment draw: estimates and standard errors per scheme."""
    assignment = _randomize_from_seedseq(pop.design, ss)
    data = pop.table.observe(assignment, covariates=pop.covariates)
    n_eff = pop.design.n_treatments - 1
    est = np.empty((len(SCHEME_SPECS), n_eff))
    se = np.empty((len(SCHEME_SPECS), n_eff))
    eff = slice(1, pop.design.n_treatments)  # factor block: intercept, then effects
    for i, (_, spec) in enumerate(SCHEME_SPECS):
        res = fit(data, spec, hc2=False)
        est[i] = res.coefficients[eff]
        se[i] = np.sqrt(np.diag(res.cluster_cov_classic)[eff])
    return est, se


def _run_chunk(pop: SimPopulation, seeds: list[np.random.SeedSequence]):
    results = []
    failures = 0
    for ss in seeds:
        try:
            results.append(_run_replication(pop, ss))
        except Exception:
            failures += 1
    return results, failures


def _worker_count(n_tasks: int) -> int:
    cap = os.environ.get("SPLITPLOT_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, os.cpu_count() or 1, n_tasks))


def run_simulation(config: SimConfig) -> SimSummary:
    """Full replication study; deterministic given config.seed."""
    root = np.random.SeedSequence(config.seed)
    children = root.spawn(config.replications + 1)
    pop = generate_population(config, seed=children[0])

    rep_seeds = children[1:]
    workers = _worker_count(config.replications)
    results: list[tuple[np.ndarray, np.ndarray]] = []
    n_failed = 0
    if workers == 1:
        results, n_failed = _run_chunk(pop, rep_seeds)
    else:
        chunks = [list(rep_seeds[i::workers]) for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk_results, failures in pool.map(_run_chunk, [pop] * workers, chunks):
                results.extend(chunk_results)
                n_failed += failures

    if not results:
        raise RuntimeError("every replication failed")
    est = np.stack([r[0] for r in results])  # [R, schemes, effects]
    se = np.stack([r[1] for r in results])

    tau = pop.true_effects
    bias = est.mean(axis=0) - tau[None, :]
    sd = est.std(axis=0, ddof=1) if est.shape[0] > 1 else np.full(est.shape[1:], np.nan)
    ese = se.mean(axis=0)
    covers = np.abs(est - tau[None, None, :]) <= NORMAL_975 * se
    coverage = covers.mean(axis=0)
    return SimSummary(
        schemes=SCHEME_NAMES,
        effects=EFFECT_NAMES[: est.shape[2]] if est.shape[2] == 3 else tuple(
            f"effect{k}" for k in range(est.shape[2])
        ),
        true_effects=tau,
        bias=bias,
        sd=sd,
        ese=ese,
        coverage=coverage,
        replications=est.shape[0],
        n_failed=n_failed,
        config=config,
    )
