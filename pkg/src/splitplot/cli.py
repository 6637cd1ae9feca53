"""Command-line interface: randomize, estimate, frt, simulate.

Datasets are UTF-8 CSVs with a header and '.' decimal separator.
Required columns: whole_plot (string id), a_level, b_level (0-based
integers), outcome (real). Optional covariate columns x1..xJ. The
design is inferred from the realized counts; --design checks the
inference against an explicit specification.

All numbers are printed with 12 significant digits. Exit codes: 0 on
success, 2 on validation failure, 1 on internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np
import scipy.stats

from .contrasts import apply_contrast, standard_contrasts
from .frt import DEFAULT_DRAWS, frt as run_frt
from .design import (
    Assignment,
    DesignError,
    ObservedData,
    SplitPlotDesign,
    make_observed,
    new_design,
    randomize,
)
from .estimators import estimate_means
from .montecarlo import SimConfig, SimSummary, run_simulation
from .regression import ModelSpec, coefficients_to_effects, fit

MEAN_SCHEMES = ("sm", "ht", "haj")
FIT_SCHEMES = ("ols", "wls", "ag")


class CliError(Exception):
    """User-facing validation failure (exit code 2)."""


def _fmt(x) -> str:
    if x is None:
        return "NA"
    x = float(x)
    if not np.isfinite(x):
        return "NA"
    return format(x, ".12g")


# -- design files ------------------------------------------------------------


def load_design_spec(path: str) -> SplitPlotDesign:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read design spec {path}: {exc}") from exc
    for key in ("t_a", "t_b", "whole_plot_counts", "sub_plot_counts"):
        if key not in raw:
            raise CliError(f"design spec {path} is missing field {key!r}")
    try:
        return new_design(
            raw["t_a"], raw["t_b"], raw["whole_plot_counts"], raw["sub_plot_counts"]
        )
    except (DesignError, TypeError, ValueError) as exc:
        raise CliError(f"invalid design spec {path}: {exc}") from exc


# -- dataset ingestion -------------------------------------------------------


def read_dataset(path: str, covariate_names=None) -> tuple[ObservedData, tuple[str, ...]]:
    """Parse a dataset CSV into ObservedData plus plot labels."""
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise CliError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise CliError(f"{path}: empty file, header required")
        cols = reader.fieldnames
        for required in ("whole_plot", "a_level", "b_level", "outcome"):
            if required not in cols:
                raise CliError(f"{path}: missing required column {required!r}")
        x_cols = [c for c in cols if c.startswith("x") and c[1:].isdigit()]
        if covariate_names is not None:
            missing = [c for c in covariate_names if c not in cols]
            if missing:
                raise CliError(f"{path}: covariate columns not found: {missing}")
            x_cols = list(covariate_names)

        plots: dict[str, dict] = {}
        order: list[str] = []
        for i, row in enumerate(reader, start=2):  # row 1 is the header
            try:
                wp = row["whole_plot"]
                a = int(row["a_level"])
                b = int(row["b_level"])
                y = float(row["outcome"])
                x = [float(row[c]) for c in x_cols]
            except (TypeError, KeyError, ValueError) as exc:
                raise CliError(f"{path}: row {i}: {exc}") from exc
            if a < 0 or b < 0:
                raise CliError(f"{path}: row {i}: negative factor level")
            if wp not in plots:
                plots[wp] = {"a": a, "b": [], "y": [], "x": []}
                order.append(wp)
            elif plots[wp]["a"] != a:
                raise CliError(
                    f"{path}: row {i}: whole_plot {wp!r} has inconsistent a_level "
                    f"({plots[wp]['a']} vs {a})"
                )
            plots[wp]["b"].append(b)
            plots[wp]["y"].append(y)
            plots[wp]["x"].append(x)
    if not order:
        raise CliError(f"{path}: no data rows")

    t_a = max(p["a"] for p in plots.values()) + 1
    t_b = max(max(p["b"]) for p in plots.values()) + 1
    a_seen = {p["a"] for p in plots.values()}
    if a_seen != set(range(t_a)):
        raise CliError(f"{path}: a_level values must cover 0..{t_a - 1}")
    whole_plot_counts = [0] * t_a
    sub_plot_counts = []
    for wp in order:
        whole_plot_counts[plots[wp]["a"]] += 1
        counts = [0] * t_b
        for b in plots[wp]["b"]:
            counts[b] += 1
        if any(c < 2 for c in counts):
            raise CliError(
                f"{path}: whole_plot {wp!r} has fewer than 2 units at some b_level"
            )
        sub_plot_counts.append(counts)
    if any(c < 2 for c in whole_plot_counts):
        raise CliError(f"{path}: fewer than 2 whole-plots at some a_level")

    try:
        design = new_design(t_a, t_b, whole_plot_counts, sub_plot_counts)
        assignment = Assignment(
            a_levels=tuple(plots[wp]["a"] for wp in order),
            b_levels=tuple(tuple(plots[wp]["b"]) for wp in order),
        )
        covariates = None
        if x_cols:
            covariates = [np.asarray(plots[wp]["x"], dtype=float) for wp in order]
        data = make_observed(
            design,
            assignment,
            [np.asarray(plots[wp]["y"], dtype=float) for wp in order],
            covariates=covariates,
        )
    except DesignError as exc:
        raise CliError(f"{path}: {exc}") from exc
    return data, tuple(order)


def _check_design_override(data: ObservedData, path: str) -> None:
    expected = load_design_spec(path)
    got = data.design
    same = (
        expected.t_a == got.t_a
        and expected.t_b == got.t_b
        and expected.whole_plot_counts == got.whole_plot_counts
        and sorted(expected.sub_plot_counts) == sorted(got.sub_plot_counts)
    )
    if not same:
        raise CliError("dataset counts do not match the supplied --design specification")


# -- result output -----------------------------------------------------------


def _write_table(rows, header, out=None) -> None:
    fh = sys.stdout if out is None else open(out, "w", encoding="utf-8", newline="")
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if out is not None:
            fh.close()


def _effects_for(data: ObservedData, args):
    """Shared estimate/frt path: effect estimates under the chosen scheme."""
    contrast = standard_contrasts(data.design.t_a, data.design.t_b)
    scheme = args.scheme
    if scheme in MEAN_SCHEMES:
        if args.adjust != "none" or args.size_factor:
            raise CliError(f"scheme {scheme!r} does not support covariate adjustment")
        est = estimate_means(data, scheme)
        return apply_contrast(contrast, est), contrast, None
    spec = _model_spec(data, args)
    res = fit(data, spec, hc2=args.hc2)
    return coefficients_to_effects(res, contrast, use_hc2=args.hc2), contrast, spec


def _model_spec(data: ObservedData, args) -> ModelSpec:
    # covariates enter an adjusted model when named explicitly, or by
    # default when the dataset has x columns and --size-factor alone
    # was not requested
    use_cov = args.adjust != "none" and data.covariates is not None
    if use_cov and args.size_factor and args.covariates is None:
        use_cov = False
    if args.adjust != "none" and not use_cov and not args.size_factor:
        raise CliError("--adjust requires covariate columns or --size-factor")
    try:
        return ModelSpec(
            fitting=args.scheme,
            adjustment=args.adjust,
            parameterization=args.parameterization,
            covariates=use_cov,
            size_factor=args.size_factor,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _normal_p(est: float, se: float) -> float | None:
    if se <= 0:
        return None
    return float(2.0 * scipy.stats.norm.sf(abs(est) / se))


# -- subcommands -------------------------------------------------------------


def cmd_randomize(args) -> int:
    design = load_design_spec(args.design)
    assignment = randomize(design, args.seed)
    rows = []
    for w in range(design.n_whole_plots):
        for s, b in enumerate(assignment.b_levels[w]):
            rows.append([f"wp{w}", s, assignment.a_levels[w], b])
    _write_table(rows, ["whole_plot", "unit", "a_level", "b_level"], args.out)
    return 0


def cmd_estimate(args) -> int:
    names = args.covariates.split(",") if args.covariates else None
    data, _ = read_dataset(args.dataset, covariate_names=names)
    if args.design:
        _check_design_override(data, args.design)
    effects, _, _ = _effects_for(data, args)
    rows = []
    for k, label in enumerate(effects.labels):
        est = effects.estimates[k]
        se = float(np.sqrt(max(effects.covariance[k, k], 0.0)))
        rows.append([label, _fmt(est), _fmt(se), _fmt(_normal_p(est, se))])
    _write_table(rows, ["effect", "est", "se", "p.normal"], args.out)
    return 0


def cmd_frt(args) -> int:
    names = args.covariates.split(",") if args.covariates else None
    data, _ = read_dataset(args.dataset, covariate_names=names)
    if args.design:
        _check_design_override(data, args.design)
    if args.scheme in MEAN_SCHEMES:
        raise CliError("frt needs a regression scheme: ols, wls, or ag")
    effects, contrast, spec = _effects_for(data, args)

    def run(g):
        return run_frt(
            data, g, spec, mode=args.mode, draws=args.draws, seed=args.seed
        )

    rows = []
    joint = run(contrast)
    rows.append(["joint", "NA", "NA", "NA", _fmt(joint.p_value)])
    for k, label in enumerate(effects.labels):
        est = effects.estimates[k]
        se = float(np.sqrt(max(effects.covariance[k, k], 0.0)))
        single = run(contrast.row(k))
        rows.append(
            [label, _fmt(est), _fmt(se), _fmt(_normal_p(est, se)), _fmt(single.p_value)]
        )
    _write_table(rows, ["effect", "est", "se", "p.normal", "p.frt"], args.out)
    return 0


def cmd_simulate(args) -> int:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}") from exc
        for key in ("whole_plot_split", "poisson_means", "outcome_coefficients"):
            if key in raw:
                raw[key] = tuple(tuple(v) if isinstance(v, list) else v for v in raw[key])
    else:
        raw = {}
    if args.replications is not None:
        raw["replications"] = args.replications
    if args.whole_plots is not None:
        raw["n_whole_plots"] = args.whole_plots
    if args.within_noise is not None:
        raw["within_plot_covariate_noise"] = args.within_noise
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        config = SimConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid simulation config: {exc}") from exc

    summary = run_simulation(config)
    _write_table(_summary_rows(summary), _SUMMARY_HEADER, args.out)
    return 0


_SUMMARY_HEADER = ["scheme", "effect", "bias", "sd", "ese", "coverage"]


def _summary_rows(summary: SimSummary):
    rows = []
    for i, scheme in enumerate(summary.schemes):
        for j, effect in enumerate(summary.effects):
            rows.append(
                [
                    scheme,
                    effect,
                    _fmt(summary.bias[i, j]),
                    _fmt(summary.sd[i, j]),
                    _fmt(summary.ese[i, j]),
                    _fmt(summary.coverage[i, j]),
                ]
            )
    return rows


# -- parser ------------------------------------------------------------------


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheme", default="wls", choices=MEAN_SCHEMES + FIT_SCHEMES)
    p.add_argument("--adjust", default="none", choices=("none", "additive", "interacted"))
    p.add_argument("--covariates", default=None, help="comma-separated covariate columns")
    p.add_argument("--size-factor", action="store_true", dest="size_factor")
    p.add_argument(
        "--parameterization", default="indicator", choices=("indicator", "factor")
    )
    p.add_argument("--contrasts", default="standard", choices=("standard",))
    p.add_argument("--hc2", action="store_true")
    p.add_argument("--design", default=None, help="design spec JSON to validate against")
    p.add_argument("--out", default=None, help="output CSV path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitplot",
        description="Design-based analysis of two-factor split-plot experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("randomize", help="draw one assignment for a design")
    p.add_argument("design", help="design spec JSON")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_randomize)

    p = sub.add_parser("estimate", help="effect estimates from a dataset CSV")
    p.add_argument("dataset")
    _add_model_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("frt", help="Fisher randomization test p-values")
    p.add_argument("dataset")
    _add_model_flags(p)
    p.add_argument("--mode", default="auto", choices=("auto", "exhaustive", "montecarlo"))
    p.add_argument("--draws", type=int, default=DEFAULT_DRAWS)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_frt)

    p = sub.add_parser("simulate", help="replication study over a synthetic population")
    p.add_argument("--config", default=None, help="SimConfig JSON")
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--whole-plots", type=int, default=None, dest="whole_plots")
    p.add_argument("--within-noise", type=float, default=None, dest="within_noise")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DesignError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
