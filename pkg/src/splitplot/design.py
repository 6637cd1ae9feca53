"""Two-factor split-plot designs, assignments, and observed data.

The assignment mechanism is two-stage: a cluster randomization of the
whole-plot factor across groups, then an independent stratified
randomization of the sub-plot factor within each group. Designs fix the
allocation counts; only the assignment is random.

Levels are 0-based integers; treatments are (a, b) pairs in
lexicographic order throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from sympy.utilities.iterables import multiset_permutations

ENUMERATION_CAP = 10**6


class DesignError(ValueError):
    """Invalid design or assignment input."""


@dataclass(frozen=True)
class SplitPlotDesign:
    """Fixed allocation counts of a T_A x T_B split-plot design.

    whole_plot_counts[a] is the number of whole-plots assigned level a;
    sub_plot_counts[w][b] is the number of sub-plots of whole-plot w
    assigned level b. Both must be >= 2 everywhere.
    """

    t_a: int
    t_b: int
    whole_plot_counts: tuple[int, ...]
    sub_plot_counts: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if self.t_a < 2 or self.t_b < 2:
            raise DesignError("both factors need at least two levels")
        if len(self.whole_plot_counts) != self.t_a:
            raise DesignError("whole_plot_counts must have one entry per A level")
        if any(c < 2 for c in self.whole_plot_counts):
            raise DesignError("every whole-plot count W_a must be >= 2")
        w = sum(self.whole_plot_counts)
        if len(self.sub_plot_counts) != w:
            raise DesignError(
                f"sub_plot_counts must have {w} rows (one per whole-plot), "
                f"got {len(self.sub_plot_counts)}"
            )
        for row in self.sub_plot_counts:
            if len(row) != self.t_b:
                raise DesignError("each sub_plot_counts row needs one entry per B level")
            if any(c < 2 for c in row):
                raise DesignError("every sub-plot count M_wb must be >= 2")

    # -- derived quantities ------------------------------------------------

    # cached: the counts are frozen, so derived arrays never change

    @property
    def n_whole_plots(self) -> int:
        return len(self.sub_plot_counts)

    @cached_property
    def plot_sizes(self) -> np.ndarray:
        """M_w, length W."""
        return np.array([sum(row) for row in self.sub_plot_counts], dtype=float)

    @cached_property
    def n_units(self) -> int:
        return int(self.plot_sizes.sum())

    @cached_property
    def mean_plot_size(self) -> float:
        return self.n_units / self.n_whole_plots

    @cached_property
    def size_factors(self) -> np.ndarray:
        """alpha_w = M_w / mean plot size."""
        return self.plot_sizes / self.mean_plot_size

    @cached_property
    def p_a(self) -> np.ndarray:
        return np.asarray(self.whole_plot_counts, dtype=float) / self.n_whole_plots

    @cached_property
    def q_wb(self) -> np.ndarray:
        """[W, T_B] matrix of within-plot allocation fractions."""
        counts = np.asarray(self.sub_plot_counts, dtype=float)
        return counts / counts.sum(axis=1, keepdims=True)

    @cached_property
    def treatments(self) -> tuple[tuple[int, int], ...]:
        return tuple((a, b) for a in range(self.t_a) for b in range(self.t_b))

    @property
    def n_treatments(self) -> int:
        return self.t_a * self.t_b

    def treatment_index(self, a: int, b: int) -> int:
        return a * self.t_b + b


def new_design(
    t_a: int,
    t_b: int,
    whole_plot_counts,
    sub_plot_counts,
) -> SplitPlotDesign:
    """Validate counts and build a SplitPlotDesign."""
    return SplitPlotDesign(
        t_a=int(t_a),
        t_b=int(t_b),
        whole_plot_counts=tuple(int(c) for c in whole_plot_counts),
        sub_plot_counts=tuple(tuple(int(c) for c in row) for row in sub_plot_counts),
    )


def is_uniform(design: SplitPlotDesign) -> bool:
    """True iff every whole-plot has the same per-level counts M_wb."""
    first = design.sub_plot_counts[0]
    return all(row == first for row in design.sub_plot_counts)


def inclusion_probability(design: SplitPlotDesign, w: int, z: tuple[int, int]) -> float:
    """P(unit in whole-plot w receives treatment z) = p_a * q_wb."""
    a, b = z
    if not (0 <= w < design.n_whole_plots):
        raise DesignError(f"whole-plot index {w} out of range")
    if not (0 <= a < design.t_a and 0 <= b < design.t_b):
        raise DesignError(f"treatment {z} out of range")
    return float(design.p_a[a] * design.q_wb[w, b])


@dataclass(frozen=True)
class Assignment:
    """One realized treatment assignment.

    a_levels[w] is the whole-plot factor level of plot w; b_levels[w][s]
    the sub-plot factor level of unit s in plot w.
    """

    a_levels: tuple[int, ...]
    b_levels: tuple[tuple[int, ...], ...]

    def treatment(self, design: SplitPlotDesign, w: int, s: int) -> int:
        return design.treatment_index(self.a_levels[w], self.b_levels[w][s])

    def validate(self, design: SplitPlotDesign) -> None:
        a_counts = [0] * design.t_a
        for a in self.a_levels:
            a_counts[a] += 1
        if tuple(a_counts) != design.whole_plot_counts:
            raise DesignError("assignment violates whole-plot level counts")
        for w, row in enumerate(self.b_levels):
            b_counts = [0] * design.t_b
            for b in row:
                b_counts[b] += 1
            if tuple(b_counts) != design.sub_plot_counts[w]:
                raise DesignError(f"assignment violates sub-plot counts in plot {w}")


def _permute_multiset(rng: np.random.Generator, counts) -> tuple[int, ...]:
    pool = np.repeat(np.arange(len(counts)), counts)
    return tuple(int(v) for v in rng.permutation(pool))


def _randomize_from_seedseq(design: SplitPlotDesign, ss: np.random.SeedSequence) -> Assignment:
    # One Philox substream for stage (I) plus one per whole-plot for
    # stage (II), so stage-(II) draws stay independent and the result
    # does not depend on evaluation order.
    children = ss.spawn(design.n_whole_plots + 1)
    rng_a = np.random.Generator(np.random.Philox(children[0]))
    a_levels = _permute_multiset(rng_a, design.whole_plot_counts)
    b_levels = []
    for w in range(design.n_whole_plots):
        rng_b = np.random.Generator(np.random.Philox(children[w + 1]))
        b_levels.append(_permute_multiset(rng_b, design.sub_plot_counts[w]))
    return Assignment(a_levels=a_levels, b_levels=tuple(b_levels))


def randomize(design: SplitPlotDesign, seed: int) -> Assignment:
    """Draw one assignment uniformly at random; deterministic given seed."""
    return _randomize_from_seedseq(design, np.random.SeedSequence(seed))


def count_assignments(design: SplitPlotDesign) -> int:
    """Size of the assignment space: a product of multinomial counts."""

    def multinomial(counts) -> int:
        total = sum(counts)
        out = 1
        for c in counts:
            out *= math.comb(total, c)
            total -= c
        return out

    total = multinomial(design.whole_plot_counts)
    for row in design.sub_plot_counts:
        total *= multinomial(row)
    return total


def enumerate_assignments(design: SplitPlotDesign, cap: int = ENUMERATION_CAP):
    """Yield every distinct assignment exactly once.

    Intended as a testing/oracle facility; errors out if the assignment
    space exceeds ``cap``.
    """
    total = count_assignments(design)
    if total > cap:
        raise DesignError(f"assignment space has {total} elements, exceeding cap {cap}")

    a_options = [
        tuple(p)
        for p in multiset_permutations(
            [a for a, c in enumerate(design.whole_plot_counts) for _ in range(c)]
        )
    ]
    b_options = [
        [tuple(p) for p in multiset_permutations([b for b, c in enumerate(row) for _ in range(c)])]
        for row in design.sub_plot_counts
    ]

    def rec(w: int, chosen: list[tuple[int, ...]]):
        if w == design.n_whole_plots:
            yield tuple(chosen)
            return
        for option in b_options[w]:
            chosen.append(option)
            yield from rec(w + 1, chosen)
            chosen.pop()

    for a_levels in a_options:
        for b_levels in rec(0, []):
            yield Assignment(a_levels=a_levels, b_levels=b_levels)


@dataclass(frozen=True)
class ObservedData:
    """One realized experiment bound to its design."""

    design: SplitPlotDesign
    assignment: Assignment
    outcomes: tuple[np.ndarray, ...]
    covariates: tuple[np.ndarray, ...] | None = None

    def __post_init__(self) -> None:
        self.assignment.validate(self.design)
        sizes = [int(m) for m in self.design.plot_sizes]
        if len(self.outcomes) != self.design.n_whole_plots:
            raise DesignError("outcomes must have one row per whole-plot")
        for w, y in enumerate(self.outcomes):
            if y.shape != (sizes[w],):
                raise DesignError(f"outcome row {w} has wrong length")
            if not np.all(np.isfinite(y)):
                raise DesignError(f"non-finite outcome in plot {w}")
        if self.covariates is not None:
            if len(self.covariates) != self.design.n_whole_plots:
                raise DesignError("covariates must have one row per whole-plot")
            n_cov = self.covariates[0].shape[1]
            for w, x in enumerate(self.covariates):
                if x.ndim != 2 or x.shape != (sizes[w], n_cov):
                    raise DesignError(f"covariate row {w} has wrong shape")
                if not np.all(np.isfinite(x)):
                    raise DesignError(f"non-finite covariate in plot {w}")

    @property
    def n_covariates(self) -> int:
        return 0 if self.covariates is None else self.covariates[0].shape[1]


def make_observed(design, assignment, outcomes, covariates=None) -> ObservedData:
    out = tuple(np.asarray(y, dtype=float) for y in outcomes)
    cov = None
    if covariates is not None:
        cov = tuple(
            np.asarray(x, dtype=float).reshape(len(np.asarray(x)), -1) for x in covariates
        )
    return ObservedData(design=design, assignment=assignment, outcomes=out, covariates=cov)


@dataclass(frozen=True)
class PotentialOutcomeTable:
    """Science table: outcomes of every unit under every treatment.

    table[w] has shape [M_w, |T|] with treatment columns in
    lexicographic (a, b) order.
    """

    design: SplitPlotDesign
    table: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        sizes = [int(m) for m in self.design.plot_sizes]
        if len(self.table) != self.design.n_whole_plots:
            raise DesignError("table must have one row-block per whole-plot")
        for w, block in enumerate(self.table):
            if block.shape != (sizes[w], self.design.n_treatments):
                raise DesignError(f"table block {w} has wrong shape")
            if not np.all(np.isfinite(block)):
                raise DesignError(f"non-finite potential outcome in plot {w}")

    def plot_means(self) -> np.ndarray:
        """[W, |T|] matrix of whole-plot average potential outcomes."""
        return np.stack([block.mean(axis=0) for block in self.table])

    def population_means(self) -> np.ndarray:
        """[|T|] vector of finite-population averages."""
        alpha = self.design.size_factors
        return (alpha[:, None] * self.plot_means()).mean(axis=0)

    def observe(self, assignment: Assignment, covariates=None) -> ObservedData:
        assignment.validate(self.design)
        outcomes = []
        for w, block in enumerate(self.table):
            a = assignment.a_levels[w]
            cols = [self.design.treatment_index(a, b) for b in assignment.b_levels[w]]
            outcomes.append(block[np.arange(block.shape[0]), cols])
        return ObservedData(
            design=self.design,
            assignment=assignment,
            outcomes=tuple(outcomes),
            covariates=covariates,
        )


def make_potential_table(design, table) -> PotentialOutcomeTable:
    return PotentialOutcomeTable(
        design=design, table=tuple(np.asarray(b, dtype=float) for b in table)
    )
