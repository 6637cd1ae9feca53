"""Shared test data builders."""

from __future__ import annotations

import numpy as np
import pytest

import splitplot as sp


def random_design(rng, t_a=2, t_b=2, uniform=False, min_count=2, max_count=6):
    wpc = [int(rng.integers(min_count, max_count + 1)) for _ in range(t_a)]
    w = sum(wpc)
    if uniform:
        row = [int(rng.integers(min_count, max_count + 1)) for _ in range(t_b)]
        spc = [row] * w
    else:
        spc = [
            [int(rng.integers(min_count, max_count + 1)) for _ in range(t_b)]
            for _ in range(w)
        ]
    return sp.new_design(t_a, t_b, wpc, spc)


def random_dataset(rng, design=None, covariates=2, uniform=False, t_a=2, t_b=2):
    """ObservedData with standard-normal outcomes and covariates."""
    if design is None:
        design = random_design(rng, t_a=t_a, t_b=t_b, uniform=uniform)
    assignment = sp.randomize(design, int(rng.integers(0, 2**31)))
    ys = [rng.normal(size=int(m)) for m in design.plot_sizes]
    xs = None
    if covariates:
        xs = [rng.normal(size=(int(m), covariates)) for m in design.plot_sizes]
    return sp.make_observed(design, assignment, ys, xs)


def random_potential_table(rng, design=None, t_a=2, t_b=2):
    if design is None:
        design = random_design(rng, t_a=t_a, t_b=t_b)
    table = [
        rng.normal(size=(int(m), design.n_treatments)) for m in design.plot_sizes
    ]
    return sp.make_potential_table(design, table)


@pytest.fixture
def f1():
    """Hand-checkable 2x2 dataset with four whole-plots of four units."""
    design = sp.new_design(2, 2, (2, 2), ((2, 2),) * 4)
    assignment = sp.Assignment(
        a_levels=(0, 0, 1, 1),
        b_levels=((0, 0, 1, 1), (0, 1, 0, 1), (1, 1, 0, 0), (0, 1, 0, 1)),
    )
    outcomes = [
        np.array([1.0, 3.0, 2.0, 4.0]),
        np.array([2.0, 6.0, 4.0, 8.0]),
        np.array([3.0, 5.0, 1.0, 3.0]),
        np.array([0.0, 2.0, 4.0, 6.0]),
    ]
    return sp.make_observed(design, assignment, outcomes)


# hand-derived reference values for the f1 fixture
F1_HT_MEANS = np.array([2.5, 5.0, 2.0, 4.0])
F1_EFFECTS = np.array([-0.75, 2.25, -0.5])
F1_VHAT_00 = 0.25
