"""Design-based mean and covariance estimation for split-plot data.

Three estimation schemes for the treatment-mean vector: the sample mean
("sm"), the Horvitz-Thompson estimator ("ht"), and its normalized Hajek
variant ("haj"). The HT estimator is computed in its whole-plot-mean
form W_a^{-1} sum_w alpha_w Yhat_w(z), which is algebraically identical
to the inverse-probability unit sum but numerically better behaved with
heterogeneous within-plot allocations.

Also computes the exact finite-population moment matrices that
characterize the sampling covariance of the HT estimator, for use as
ground truth in enumeration tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import ObservedData, PotentialOutcomeTable

SCHEMES = ("sm", "ht", "haj")


@dataclass(frozen=True)
class MeanEstimate:
    scheme: str
    means: np.ndarray  # [|T|]
    covariance: np.ndarray  # [|T|, |T|], block-diagonal by A level
    ht_ones: np.ndarray  # [|T|] HT estimate of the constant 1
    sample_sizes: np.ndarray  # [|T|] realized N_z


@dataclass(frozen=True)
class MomentSummary:
    """Finite-population moments of a potential-outcome table."""

    mean: np.ndarray  # Ybar, [|T|]
    s_ht: np.ndarray  # between-plot covariance of alpha_w*Ybar_w
    s_haj: np.ndarray  # between-plot covariance with alpha^2 weights
    s_w: tuple[np.ndarray, ...]  # scaled within-plot covariances
    psi: np.ndarray  # W^{-1} sum_w M_w^{-1} (H_w o S_w)
    h: np.ndarray
    h_w: tuple[np.ndarray, ...]
    size_moments: dict[int, float]  # mean of alpha_w^k, k = 1, 2, 4


def plot_cell_means(data: ObservedData) -> tuple[np.ndarray, np.ndarray]:
    """Whole-plot sample means Yhat_w(z).

    Returns ([W, |T|] means, [W, |T|] observed mask); unobserved cells
    hold 0, matching the matrix-assembly convention.
    """
    d = data.design
    means = np.zeros((d.n_whole_plots, d.n_treatments))
    mask = np.zeros((d.n_whole_plots, d.n_treatments), dtype=bool)
    for w in range(d.n_whole_plots):
        a = data.assignment.a_levels[w]
        b_levels = np.asarray(data.assignment.b_levels[w])
        y = data.outcomes[w]
        for b in range(d.t_b):
            z = d.treatment_index(a, b)
            sel = b_levels == b
            means[w, z] = y[sel].mean()
            mask[w, z] = True
    return means, mask


def _plot_cell_covariate_means(data: ObservedData) -> np.ndarray:
    """xhat_w(z): [W, |T|, J] within-plot covariate means, 0 if unobserved."""
    d = data.design
    j = data.n_covariates
    out = np.zeros((d.n_whole_plots, d.n_treatments, j))
    for w in range(d.n_whole_plots):
        a = data.assignment.a_levels[w]
        b_levels = np.asarray(data.assignment.b_levels[w])
        x = data.covariates[w]
        for b in range(d.t_b):
            z = d.treatment_index(a, b)
            out[w, z] = x[b_levels == b].mean(axis=0)
    return out


def _a_of_z(design) -> np.ndarray:
    return np.repeat(np.arange(design.t_a), design.t_b)


def _sample_sums(data: ObservedData) -> tuple[np.ndarray, np.ndarray]:
    """Per-treatment outcome sums and realized sample sizes."""
    d = data.design
    sizes = np.zeros(d.n_treatments)
    sums = np.zeros(d.n_treatments)
    for w in range(d.n_whole_plots):
        a = data.assignment.a_levels[w]
        b_levels = np.asarray(data.assignment.b_levels[w])
        for b in range(d.t_b):
            z = d.treatment_index(a, b)
            sel = b_levels == b
            sizes[z] += sel.sum()
            sums[z] += data.outcomes[w][sel].sum()
    return sums, sizes


def estimate_means(data: ObservedData, scheme: str) -> MeanEstimate:
    """Point estimates of the treatment-mean vector under one scheme."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    d = data.design
    alpha = d.size_factors
    w_a = np.asarray(d.whole_plot_counts, dtype=float)
    cell_means, mask = plot_cell_means(data)

    a_of_z = _a_of_z(d)
    wa_of_z = w_a[a_of_z]

    ht = (alpha[:, None] * cell_means * mask).sum(axis=0) / wa_of_z
    ht_ones = (alpha[:, None] * mask).sum(axis=0) / wa_of_z

    sums, sizes = _sample_sums(data)
    if np.any(sizes == 0):
        raise ValueError("some treatment was never observed; corrupted assignment?")

    if scheme == "sm":
        means = sums / sizes
    elif scheme == "ht":
        means = ht
    else:
        means = ht / ht_ones

    return MeanEstimate(
        scheme=scheme,
        means=means,
        covariance=vhat(data, scheme),
        ht_ones=ht_ones,
        sample_sizes=sizes,
    )


def vhat(data: ObservedData, scheme: str) -> np.ndarray:
    """Block-diagonal covariance estimator of the mean vector.

    ht: deviations of alpha_w Yhat_w(z) about Yhat_ht(z);
    haj: alpha_w^2 times deviations of Yhat_w(z) about Yhat_haj(z).
    Cross-A-level blocks are structurally zero. Scheme "sm" has no
    between-plot covariance of its own; it reuses the ht form centered
    at the sample means (all three coincide on uniform designs).
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    d = data.design
    alpha = d.size_factors
    w_a = np.asarray(d.whole_plot_counts, dtype=float)
    if np.any(w_a < 2):
        raise ValueError("covariance estimation needs W_a >= 2 for every level")
    cell_means, mask = plot_cell_means(data)
    a_of_z = _a_of_z(d)
    wa_of_z = w_a[a_of_z]

    ht = (alpha[:, None] * cell_means * mask).sum(axis=0) / wa_of_z
    ht_ones = (alpha[:, None] * mask).sum(axis=0) / wa_of_z
    if scheme == "haj":
        center = ht / ht_ones
        dev = alpha[:, None] * (cell_means - center[None, :]) * mask
    elif scheme == "ht":
        dev = (alpha[:, None] * cell_means - ht[None, :]) * mask
    else:
        sums, sizes = _sample_sums(data)
        center = sums / sizes
        dev = (alpha[:, None] * cell_means - center[None, :]) * mask

    out = np.zeros((d.n_treatments, d.n_treatments))
    a_levels = np.asarray(data.assignment.a_levels)
    for a in range(d.t_a):
        zs = [d.treatment_index(a, b) for b in range(d.t_b)]
        block_dev = dev[np.ix_(a_levels == a, zs)]
        s_hat = block_dev.T @ block_dev / (w_a[a] - 1.0)
        out[np.ix_(zs, zs)] = s_hat / w_a[a]
    return 0.5 * (out + out.T)


def estimate_covariate_means(data: ObservedData, scheme: str) -> np.ndarray:
    """[|T|, J] matrix of sm/ht/haj estimates of the covariate means."""
    if data.covariates is None:
        raise ValueError("data has no covariates")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    d = data.design
    alpha = d.size_factors
    w_a = np.asarray(d.whole_plot_counts, dtype=float)
    _, mask = plot_cell_means(data)
    cell = _plot_cell_covariate_means(data)
    a_of_z = _a_of_z(d)
    wa_of_z = w_a[a_of_z]

    ht = (alpha[:, None, None] * cell * mask[:, :, None]).sum(axis=0) / wa_of_z[:, None]
    if scheme == "ht":
        return ht
    if scheme == "haj":
        ones = (alpha[:, None] * mask).sum(axis=0) / wa_of_z
        return ht / ones[:, None]
    j = data.n_covariates
    sums = np.zeros((d.n_treatments, j))
    sizes = np.zeros(d.n_treatments)
    for w in range(d.n_whole_plots):
        a = data.assignment.a_levels[w]
        b_levels = np.asarray(data.assignment.b_levels[w])
        for b in range(d.t_b):
            z = d.treatment_index(a, b)
            sel = b_levels == b
            sums[z] += data.covariates[w][sel].sum(axis=0)
            sizes[z] += sel.sum()
    return sums / sizes[:, None]


# -- finite-population ground truth -----------------------------------------


def design_h_matrices(design) -> tuple[np.ndarray, tuple[np.ndarray, ...]]:
    """H and per-plot H_w matrices from the design parameters."""
    t_b = design.t_b
    n_t = design.n_treatments
    h = np.kron(np.diag(1.0 / design.p_a), np.ones((t_b, t_b))) - np.ones((n_t, n_t))
    h_w = []
    for w in range(design.n_whole_plots):
        q = design.q_wb[w]
        inner = np.diag(1.0 / q) - np.ones((t_b, t_b))
        h_w.append(np.kron(np.diag(1.0 / design.p_a), inner))
    return h, tuple(h_w)


def true_moments(pot: PotentialOutcomeTable) -> MomentSummary:
    """Exact moment matrices of the science table."""
    d = pot.design
    alpha = d.size_factors
    n_w = d.n_whole_plots
    plot_means = pot.plot_means()  # Ybar_w(z)
    mean = (alpha[:, None] * plot_means).mean(axis=0)

    u = alpha[:, None] * plot_means  # U_w(z)
    dev_ht = u - mean[None, :]
    s_ht = dev_ht.T @ dev_ht / (n_w - 1.0)

    dev_haj = alpha[:, None] * (plot_means - mean[None, :])
    s_haj = dev_haj.T @ dev_haj / (n_w - 1.0)

    s_w = []
    for w, block in enumerate(pot.table):
        m_w = block.shape[0]
        dev = block - block.mean(axis=0, keepdims=True)
        s_w.append(alpha[w] ** 2 * dev.T @ dev / (m_w - 1.0))

    h, h_w = design_h_matrices(d)
    m_sizes = d.plot_sizes
    psi = sum((h_w[w] * s_w[w]) / m_sizes[w] for w in range(n_w)) / n_w

    size_moments = {k: float(np.mean(alpha**k)) for k in (1, 2, 4)}
    return MomentSummary(
        mean=mean,
        s_ht=s_ht,
        s_haj=s_haj,
        s_w=tuple(s_w),
        psi=psi,
        h=h,
        h_w=h_w,
        size_moments=size_moments,
    )


def true_cov_ht(pot: PotentialOutcomeTable) -> np.ndarray:
    """Exact sampling covariance of the HT mean vector: W^{-1}(H o S + Psi)."""
    m = true_moments(pot)
    return (m.h * m.s_ht + m.psi) / pot.design.n_whole_plots


def theorem2_gap(pot: PotentialOutcomeTable) -> np.ndarray:
    """Exact expectation gap E(Vhat_ht) - cov(Yhat_ht) = W^{-1} S_ht."""
    m = true_moments(pot)
    return m.s_ht / pot.design.n_whole_plots


def hajek_ht_asymptotic_gap(pot: PotentialOutcomeTable) -> np.ndarray:
    """(p_a^{-1} - 1) {S_haj(z,z) - S_ht(z,z)} per treatment z."""
    d = pot.design
    m = true_moments(pot)
    p_of_z = np.repeat(d.p_a, d.t_b)
    diff = np.diag(m.s_haj) - np.diag(m.s_ht)
    return (1.0 / p_of_z - 1.0) * diff
