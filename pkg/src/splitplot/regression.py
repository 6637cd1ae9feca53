"""Regression estimators for split-plot data and their robust covariances.

Model space: unit-level or aggregate-level outcomes, unadjusted /
additively adjusted / fully interacted covariates, indicator or
factor-effect parameterization, fit by ols (unweighted), wls (inverse
inclusion-probability weights), or ag (plot-aggregate least squares).

All covariates are centered to overall unit-level mean zero before
entering any model, so treatment coefficients remain interpretable as
(adjusted) treatment-mean estimates and factor-model coefficients map
linearly to the indicator-model ones.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .contrasts import ContrastMatrix, EffectEstimate, apply_contrast
from .design import ObservedData, is_uniform
from .estimators import MeanEstimate

FITTINGS = ("ols", "wls", "ag")
ADJUSTMENTS = ("none", "additive", "interacted")
PARAMETERIZATIONS = ("indicator", "factor")

HC2_EIG_TOL = 1e-10

FIT_TO_SCHEME = {"ols": "sm", "wls": "haj", "ag": "ht"}


@dataclass(frozen=True)
class ModelSpec:
    """One regression specification.

    ``covariates`` includes the dataset covariates (unit values at the
    unit level, plot-size-scaled within-plot means at the aggregate
    level); ``size_factor`` adds the column alpha_w - 1 and is only
    available at the aggregate level.
    """

    fitting: str
    adjustment: str = "none"
    parameterization: str = "indicator"
    covariates: bool = False
    size_factor: bool = False

    def __post_init__(self) -> None:
        if self.fitting not in FITTINGS:
            raise ValueError(f"unknown fitting {self.fitting!r}")
        if self.adjustment not in ADJUSTMENTS:
            raise ValueError(f"unknown adjustment {self.adjustment!r}")
        if self.parameterization not in PARAMETERIZATIONS:
            raise ValueError(f"unknown parameterization {self.parameterization!r}")
        if self.size_factor and self.level != "aggregate":
            raise ValueError("size_factor column is defined at the aggregate level only")
        has_adjusters = self.covariates or self.size_factor
        if self.adjustment == "none" and has_adjusters:
            raise ValueError("unadjusted model cannot select adjustment columns")
        if self.adjustment != "none" and not has_adjusters:
            raise ValueError("adjusted model needs covariates and/or size_factor")

    @property
    def level(self) -> str:
        return "aggregate" if self.fitting == "ag" else "unit"


@dataclass(frozen=True)
class Model:
    """Assembled design matrix and bookkeeping for one ModelSpec."""

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    clusters: np.ndarray  # whole-plot index per row, nondecreasing
    labels: tuple[str, ...]
    mean_basis: np.ndarray  # [|T|, p]; means = mean_basis @ coefficients
    treatment_columns: tuple[int, ...]  # columns the mean map depends on


@dataclass(frozen=True)
class RegressionFit:
    spec: ModelSpec
    coefficients: np.ndarray
    labels: tuple[str, ...]
    cluster_cov_classic: np.ndarray
    cluster_cov_hc2: np.ndarray | None
    hetero_cov: np.ndarray
    residuals: np.ndarray
    clusters: np.ndarray
    mean_basis: np.ndarray
    treatment_columns: tuple[int, ...]
    dropped_columns: tuple[int, ...]
    warnings: tuple[str, ...] = field(default=())


def _centered_covariates(data: ObservedData) -> tuple[np.ndarray, ...]:
    stacked = np.concatenate(data.covariates, axis=0)
    center = stacked.mean(axis=0)
    return tuple(x - center[None, :] for x in data.covariates)


def _factor_row(t_a: int, t_b: int, a: int, b: int) -> np.ndarray:
    """Centered-indicator regressor vector, intercept included."""
    terms = [1.0]
    terms += [(1.0 if a == aa else 0.0) - 1.0 / t_a for aa in range(1, t_a)]
    terms += [(1.0 if b == bb else 0.0) - 1.0 / t_b for bb in range(1, t_b)]
    for aa in range(1, t_a):
        for bb in range(1, t_b):
            terms.append(
                ((1.0 if a == aa else 0.0) - 1.0 / t_a)
                * ((1.0 if b == bb else 0.0) - 1.0 / t_b)
            )
    return np.array(terms)


def _factor_labels(t_a: int, t_b: int) -> list[str]:
    labels = ["1"]
    labels += [f"A{a}" if t_a > 2 else "A" for a in range(1, t_a)]
    labels += [f"B{b}" if t_b > 2 else "B" for b in range(1, t_b)]
    for a, b in itertools.product(range(1, t_a), range(1, t_b)):
        a_lab = f"A{a}" if t_a > 2 else "A"
        b_lab = f"B{b}" if t_b > 2 else "B"
        labels.append(f"{a_lab}:{b_lab}")
    return labels


def _adjuster_labels(data: ObservedData, spec: ModelSpec) -> list[str]:
    labels = []
    if spec.covariates:
        labels += [f"x{j + 1}" for j in range(data.n_covariates)]
    if spec.size_factor:
        labels.append("size")
    return labels


class _ModelBuilder:
    """Assignment-independent model structure for one (data, spec) pair.

    Everything that does not depend on the realized assignment (basis
    rows, labels, covariate columns, cluster layout) is precomputed, so
    repeated assembly over reference assignments stays cheap.
    """

    def __init__(self, data: ObservedData, spec: ModelSpec):
        if spec.covariates and data.covariates is None:
            raise ValueError("model selects covariates but the data has none")
        d = data.design
        self.spec = spec
        self.design = d
        n_t = d.n_treatments
        t_a, t_b = d.t_a, d.t_b
        self.t_b = t_b
        self.alpha = d.size_factors

        if spec.parameterization == "indicator":
            self.basis = np.eye(n_t)
            t_labels = [f"z({a},{b})" for a, b in d.treatments]
        else:
            self.basis = np.stack([_factor_row(t_a, t_b, a, b) for a, b in d.treatments])
            t_labels = _factor_labels(t_a, t_b)
        self.n_tc = self.basis.shape[1]
        self.t_labels = t_labels
        self.adj_labels = _adjuster_labels(data, spec)
        self.n_adj = len(self.adj_labels)

        sizes = d.plot_sizes.astype(int)
        self.plot_of_unit = np.repeat(np.arange(d.n_whole_plots), sizes)
        self.cx_flat = (
            np.concatenate(_centered_covariates(data), axis=0) if spec.covariates else None
        )

        if spec.level == "unit":
            self.clusters = self.plot_of_unit
        else:
            self.plot_of_row = np.repeat(np.arange(d.n_whole_plots), t_b)
            self.b_of_row = np.tile(np.arange(t_b), d.n_whole_plots)
            self.clusters = self.plot_of_row
        self.cluster_starts = _cluster_starts(self.clusters)

        if spec.adjustment == "none":
            labels = list(t_labels)
        elif spec.adjustment == "additive":
            labels = list(t_labels) + self.adj_labels
        else:
            labels = list(t_labels)
            for tl in t_labels:
                for al in self.adj_labels:
                    labels.append(al if tl == "1" else f"{tl}:{al}")
        self.labels = tuple(labels)
        self.n_columns = len(labels)

        # adjusters evaluate to 0 at the centered covariate mean
        mean_basis = np.zeros((n_t, self.n_columns))
        mean_basis[:, : self.n_tc] = self.basis
        self.mean_basis = mean_basis
        self.treatment_columns = tuple(range(self.n_tc))

    def assemble(
        self, a_levels: np.ndarray, b_flat: np.ndarray, y_flat: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(X, y, weights) for one realized assignment."""
        spec = self.spec
        d = self.design
        t_b = self.t_b
        x_adj = None
        if spec.level == "unit":
            z_flat = a_levels[self.plot_of_unit] * t_b + b_flat
            x_t = self.basis[z_flat]
            y = y_flat
            if spec.fitting == "wls":
                wts = 1.0 / (
                    d.p_a[a_levels[self.plot_of_unit]] * d.q_wb[self.plot_of_unit, b_flat]
                )
            else:
                wts = np.ones(y.size)
            x_adj = self.cx_flat
        else:
            # one row per (whole-plot, b): cell averages scaled by alpha_w
            cell = self.plot_of_unit * t_b + b_flat
            n_cells = d.n_whole_plots * t_b
            counts = np.bincount(cell, minlength=n_cells)
            y_cell = np.bincount(cell, weights=y_flat, minlength=n_cells) / counts
            z_rows = a_levels[self.plot_of_row] * t_b + self.b_of_row
            x_t = self.basis[z_rows]
            alpha_rows = self.alpha[self.plot_of_row]
            y = alpha_rows * y_cell
            wts = np.ones(y.size)
            adj_cols = []
            if spec.covariates:
                for j in range(self.cx_flat.shape[1]):
                    col = (
                        np.bincount(cell, weights=self.cx_flat[:, j], minlength=n_cells)
                        / counts
                    )
                    adj_cols.append(alpha_rows * col)
            if spec.size_factor:
                adj_cols.append(alpha_rows - 1.0)
            if adj_cols:
                x_adj = np.stack(adj_cols, axis=1)

        if spec.adjustment == "none":
            x = x_t
        elif spec.adjustment == "additive":
            x = np.concatenate([x_t, x_adj], axis=1)
        else:
            # every treatment-basis column interacted with every adjuster
            inter = (x_t[:, :, None] * x_adj[:, None, :]).reshape(
                y.size, self.n_tc * self.n_adj
            )
            x = np.concatenate([x_t, inter], axis=1)
        return x, y, wts


def _assignment_arrays(assignment) -> tuple[np.ndarray, np.ndarray]:
    a_levels = np.asarray(assignment.a_levels)
    b_flat = np.fromiter(
        itertools.chain.from_iterable(assignment.b_levels),
        dtype=np.int64,
    )
    return a_levels, b_flat


def build_model(data: ObservedData, spec: ModelSpec) -> Model:
    """Assemble (X, y, weights, clusters) for one specification."""
    builder = _ModelBuilder(data, spec)
    a_levels, b_flat = _assignment_arrays(data.assignment)
    x, y, w = builder.assemble(a_levels, b_flat, np.concatenate(data.outcomes))
    return Model(
        x=x,
        y=y,
        w=w,
        clusters=builder.clusters,
        labels=builder.labels,
        mean_basis=builder.mean_basis,
        treatment_columns=builder.treatment_columns,
    )


def _cluster_starts(clusters: np.ndarray) -> np.ndarray:
    change = np.flatnonzero(np.diff(clusters)) + 1
    return np.concatenate([[0], change])


def _embed(cov_kept: np.ndarray, keep: np.ndarray, p: int) -> np.ndarray:
    out = np.zeros((p, p))
    out[np.ix_(keep, keep)] = cov_kept
    return out


def fit(data: ObservedData, spec: ModelSpec, hc2: bool = True) -> RegressionFit:
    """Fit one specification with cluster-robust covariances.

    The classic covariance carries no small-sample multiplier. The HC2
    covariance leverage-adjusts residuals cluster-by-cluster in the
    sqrt-weight-transformed scale.
    """
    model = build_model(data, spec)
    sol = linalg.wls_solve(model.x, model.y, model.w)
    p = model.x.shape[1]
    keep = np.array([j for j in range(p) if j not in sol.dropped_columns], dtype=int)
    warnings = []
    if sol.dropped_columns:
        warnings.append(
            f"rank-dropped columns {sol.dropped_columns} "
            f"({', '.join(model.labels[j] for j in sol.dropped_columns)})"
        )

    sw = np.sqrt(model.w)
    xk = model.x[:, keep]
    xt = xk * sw[:, None]  # transformed design
    et = sol.residuals * sw  # transformed residuals
    bread = xt.T @ xt
    bread_inv = np.linalg.inv(bread)

    starts = _cluster_starts(model.clusters)

    u = xt * et[:, None]
    g = np.add.reduceat(u, starts, axis=0)
    classic = linalg.sandwich(bread_inv, g.T @ g)

    hetero = linalg.sandwich(bread_inv, u.T @ u)

    hc2_cov = None
    if hc2:
        k = keep.size
        meat = np.zeros((k, k))
        bounds = np.append(starts, len(et))
        for i in range(len(starts)):
            lo, hi = bounds[i], bounds[i + 1]
            xw = xt[lo:hi]
            pw = xw @ bread_inv @ xw.T
            vals, vecs = np.linalg.eigh(np.eye(hi - lo) - 0.5 * (pw + pw.T))
            # pseudo-inverse square root: fully leveraged directions drop out
            inv_sqrt = np.zeros_like(vals)
            ok = vals > HC2_EIG_TOL
            inv_sqrt[ok] = 1.0 / np.sqrt(vals[ok])
            adj = vecs @ (inv_sqrt * (vecs.T @ et[lo:hi]))
            gw = xw.T @ adj
            meat += np.outer(gw, gw)
        hc2_cov = linalg.sandwich(bread_inv, meat)

    return RegressionFit(
        spec=spec,
        coefficients=sol.coefficients,
        labels=model.labels,
        cluster_cov_classic=_embed(classic, keep, p),
        cluster_cov_hc2=None if hc2_cov is None else _embed(hc2_cov, keep, p),
        hetero_cov=_embed(hetero, keep, p),
        residuals=sol.residuals,
        clusters=model.clusters,
        mean_basis=model.mean_basis,
        treatment_columns=model.treatment_columns,
        dropped_columns=sol.dropped_columns,
        warnings=tuple(warnings),
    )


def coefficients_to_means(fit_result: RegressionFit, use_hc2: bool = False) -> MeanEstimate:
    """Map fitted coefficients to (adjusted) treatment-mean estimates.

    Covariates were centered, so evaluating the fitted surface at the
    covariate mean zeroes every adjustment column and the map is the
    stored linear basis.
    """
    dropped_t = set(fit_result.dropped_columns) & set(fit_result.treatment_columns)
    if dropped_t:
        raise ValueError(
            f"treatment columns {sorted(dropped_t)} were rank-dropped; "
            "treatment means are not identified"
        )
    cov = fit_result.cluster_cov_hc2 if use_hc2 else fit_result.cluster_cov_classic
    if cov is None:
        raise ValueError("fit was computed without the HC2 covariance")
    b = fit_result.mean_basis
    mapped = b @ cov @ b.T
    means = b @ fit_result.coefficients
    n_t = b.shape[0]
    return MeanEstimate(
        scheme=FIT_TO_SCHEME[fit_result.spec.fitting],
        means=means,
        covariance=0.5 * (mapped + mapped.T),
        ht_ones=np.full(n_t, np.nan),
        sample_sizes=np.full(n_t, np.nan),
    )


def coefficients_to_effects(
    fit_result: RegressionFit, contrast: ContrastMatrix, use_hc2: bool = False
) -> EffectEstimate:
    """Contrast-mapped effects and covariance from one fit."""
    means = coefficients_to_means(fit_result, use_hc2=use_hc2)
    return apply_contrast(contrast, means)


# -- identity checks ---------------------------------------------------------


@dataclass(frozen=True)
class IdentityReport:
    applicable: bool
    max_abs_discrepancy: float
    details: dict


def _block_shrinkage(design) -> np.ndarray:
    """(W_a - 1)/W_a per treatment, constant within A-level blocks."""
    w_a = np.asarray(design.whole_plot_counts, dtype=float)
    return np.repeat((w_a - 1.0) / w_a, design.t_b)


def classic_cov_identity_check(data: ObservedData) -> IdentityReport:
    """Compare regression cluster covariances to the design-based forms.

    wls: V_wls = diag(1ht)^-1 diag((W_a-1)/W_a) Vhat_haj diag(1ht)^-1;
    ag: V_ag = diag((W_a-1)/W_a) Vhat_ht;
    plus, on uniform designs, ols: V_ols = diag((W_a-1)/W_a) Vhat.
    """
    from .estimators import estimate_means, vhat

    shrink = _block_shrinkage(data.design)
    details = {}

    fit_wls = fit(data, ModelSpec("wls"), hc2=False)
    est_haj = estimate_means(data, "haj")
    ones_inv = 1.0 / est_haj.ht_ones
    rhs_wls = np.outer(ones_inv, ones_inv) * (shrink[:, None] * est_haj.covariance)
    details["wls"] = float(np.max(np.abs(fit_wls.cluster_cov_classic - rhs_wls)))

    fit_ag = fit(data, ModelSpec("ag"), hc2=False)
    v_ht = vhat(data, "ht")
    rhs_ag = shrink[:, None] * v_ht
    details["ag"] = float(np.max(np.abs(fit_ag.cluster_cov_classic - rhs_ag)))

    if is_uniform(data.design):
        fit_ols = fit(data, ModelSpec("ols"), hc2=False)
        details["ols"] = float(np.max(np.abs(fit_ols.cluster_cov_classic - rhs_ag)))

    return IdentityReport(
        applicable=True,
        max_abs_discrepancy=max(details.values()),
        details=details,
    )


def weight_scaling_invariance_check(data: ObservedData, scale: np.ndarray) -> IdentityReport:
    """Refit the unit indicator regression with per-treatment weight scaling.

    Positive per-treatment factors applied multiplicatively to the
    weights must leave coefficients and both robust covariances
    unchanged.
    """
    scale = np.asarray(scale, dtype=float)
    d = data.design
    if scale.shape != (d.n_treatments,) or np.any(scale <= 0):
        raise ValueError("scale must be positive with one entry per treatment")

    model = build_model(data, ModelSpec("wls"))
    z_of_row = np.argmax(model.x, axis=1)

    def refit(w):
        sol = linalg.wls_solve(model.x, model.y, w)
        sw = np.sqrt(w)
        xt = model.x * sw[:, None]
        et = sol.residuals * sw
        bread_inv = np.linalg.inv(xt.T @ xt)
        u = xt * et[:, None]
        g = np.add.reduceat(u, _cluster_starts(model.clusters), axis=0)
        return (
            sol.coefficients,
            linalg.sandwich(bread_inv, u.T @ u),
            linalg.sandwich(bread_inv, g.T @ g),
        )

    base = refit(model.w)
    scaled = refit(model.w * scale[z_of_row])
    details = {
        "coefficients": float(np.max(np.abs(base[0] - scaled[0]))),
        "hetero_cov": float(np.max(np.abs(base[1] - scaled[1]))),
        "cluster_cov": float(np.max(np.abs(base[2] - scaled[2]))),
    }
    return IdentityReport(
        applicable=True, max_abs_discrepancy=max(details.values()), details=details
    )


def wholeplot_covariate_invariance_check(data: ObservedData) -> IdentityReport:
    """Check that plot-constant covariates leave sub-plot effects alone.

    Applies only when every covariate is constant within each
    whole-plot. Additive adjustment under the wls and ag schemes must
    then leave the factor-model sub-plot main-effect and interaction
    coefficients unchanged.
    """
    if data.covariates is None:
        return IdentityReport(applicable=False, max_abs_discrepancy=0.0, details={})
    for x in data.covariates:
        if np.max(np.abs(x - x[0:1, :])) > 0:
            return IdentityReport(applicable=False, max_abs_discrepancy=0.0, details={})

    d = data.design
    # factor layout: intercept, A terms, then the B and A:B terms checked here
    sub = slice(1 + (d.t_a - 1), d.n_treatments)
    details = {}
    for fitting in ("wls", "ag"):
        plain = fit(data, ModelSpec(fitting, parameterization="factor"), hc2=False)
        adjusted = fit(
            data,
            ModelSpec(fitting, adjustment="additive", parameterization="factor", covariates=True),
            hc2=False,
        )
        details[fitting] = float(
            np.max(np.abs(plain.coefficients[sub] - adjusted.coefficients[sub]))
        )
    return IdentityReport(
        applicable=True, max_abs_discrepancy=max(details.values()), details=details
    )
