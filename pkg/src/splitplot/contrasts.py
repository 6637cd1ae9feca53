"""Contrast matrices for factorial estimands.

A contrast matrix maps the |T|-vector of treatment means to main
effects and interactions. Baseline level is 0 for both factors;
treatments are in lexicographic (a, b) order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ContrastMatrix:
    g: np.ndarray  # [K, |T|]
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.g.ndim != 2 or self.g.shape[0] != len(self.labels):
            raise ValueError("contrast matrix needs one label per row")
        row_sums = np.abs(self.g.sum(axis=1))
        if np.any(row_sums > 1e-12):
            raise ValueError("contrast rows must sum to zero")

    def row(self, k: int) -> "ContrastMatrix":
        return ContrastMatrix(g=self.g[k : k + 1], labels=(self.labels[k],))


@dataclass(frozen=True)
class EffectEstimate:
    estimates: np.ndarray
    covariance: np.ndarray
    labels: tuple[str, ...]


def standard_contrasts(t_a: int, t_b: int, halved_interactions: bool = False) -> ContrastMatrix:
    """Main effects and interactions at non-baseline levels.

    For 2x2 this is the usual (tau_A, tau_B, tau_AB) with
    tau_A = mean over b of Ybar(1b) - Ybar(0b), etc. Setting
    ``halved_interactions`` divides interaction rows by 2, the
    alternative convention for 2x2 interactions.
    """
    if t_a < 2 or t_b < 2:
        raise ValueError("both factors need at least two levels")
    n_t = t_a * t_b

    def idx(a: int, b: int) -> int:
        return a * t_b + b

    rows = []
    labels = []
    for a in range(1, t_a):
        row = np.zeros(n_t)
        for b in range(t_b):
            row[idx(a, b)] += 1.0 / t_b
            row[idx(0, b)] -= 1.0 / t_b
        rows.append(row)
        labels.append(f"A{a}" if t_a > 2 else "A")
    for b in range(1, t_b):
        row = np.zeros(n_t)
        for a in range(t_a):
            row[idx(a, b)] += 1.0 / t_a
            row[idx(a, 0)] -= 1.0 / t_a
        rows.append(row)
        labels.append(f"B{b}" if t_b > 2 else "B")
    scale = 0.5 if halved_interactions else 1.0
    for a in range(1, t_a):
        for b in range(1, t_b):
            row = np.zeros(n_t)
            row[idx(a, b)] += scale
            row[idx(0, b)] -= scale
            row[idx(a, 0)] -= scale
            row[idx(0, 0)] += scale
            rows.append(row)
            a_lab = f"A{a}" if t_a > 2 else "A"
            b_lab = f"B{b}" if t_b > 2 else "B"
            labels.append(f"{a_lab}:{b_lab}")
    return ContrastMatrix(g=np.array(rows), labels=tuple(labels))


def apply_contrast(contrast: ContrastMatrix, means, covariance=None) -> EffectEstimate:
    """Map treatment means and covariance through the contrast: G m, G V G'.

    ``means`` may be any object carrying ``.means`` and ``.covariance``
    (e.g. a MeanEstimate), or a plain vector with ``covariance`` given
    separately.
    """
    if covariance is None:
        covariance = means.covariance
        means = means.means
    means = np.asarray(means, dtype=float)
    covariance = np.asarray(covariance, dtype=float)
    g = contrast.g
    if means.shape != (g.shape[1],) or covariance.shape != (g.shape[1], g.shape[1]):
        raise ValueError("dimension mismatch between contrast and mean estimate")
    cov = g @ covariance @ g.T
    return EffectEstimate(
        estimates=g @ means, covariance=0.5 * (cov + cov.T), labels=contrast.labels
    )
