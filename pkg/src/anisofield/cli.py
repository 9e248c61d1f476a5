"""Command-line interface: assemble, sample, derive fields, fit and study.

All commands are pure functions of the config file, flags and seed; no
wall-clock state enters, so repeated runs produce byte-identical outputs.
Exit codes: 0 success, 2 configuration or input error, 3 numeric failure
(precision not positive definite), 4 optimizer did not converge.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .analytic import stationary_variance
from .assembly import assemble_precision, write_coordinate_format
from .coefficients import anisotropy_from_json, layout_from_json
from .gmrf import NotPositiveDefiniteError, PrecisionFactor
from .grid import Grid
from .inference import ObservationModel, map_estimate, simulation_study
from .estimator import AnisotropyEstimator  # noqa: F401  (re-export for discoverability)

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_NO_CONVERGENCE = 4


class ConfigError(ValueError):
    """Invalid configuration or unreadable input file."""


def _load_config(path: str) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def _get(cfg: dict, key: str, where: str):
    if key not in cfg:
        raise ConfigError(f"{where}: missing required key '{key}'")
    return cfg[key]


def _parse_grid(cfg: dict) -> Grid:
    g = _get(cfg, "grid", "config")
    try:
        return Grid(
            width=float(_get(g, "A", "grid")),
            height=float(_get(g, "B", "grid")),
            cells_x=int(_get(g, "M", "grid")),
            cells_y=int(_get(g, "N", "grid")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid: {exc}") from exc


def _parse_model(cfg: dict):
    grid = _parse_grid(cfg)
    kappa_sq = float(_get(cfg, "kappa_sq", "config"))
    if kappa_sq <= 0:
        raise ConfigError("kappa_sq: must be strictly positive")
    try:
        aniso = anisotropy_from_json(_get(cfg, "anisotropy", "config"), grid)
    except (TypeError, ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    return grid, kappa_sq, aniso


def _parse_layout(cfg: dict, grid: Grid):
    try:
        return layout_from_json(_get(cfg, "layout", "config"), grid)
    except (TypeError, ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc


def _load_field_csv(path: str, grid: Grid) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read data file {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: not a numeric CSV field: {exc}") from exc
    if data.shape != grid.shape:
        raise ConfigError(f"{path}: field has shape {data.shape}, expected {grid.shape}")
    return data.ravel()


def _parse_observation(cfg: dict, grid: Grid) -> ObservationModel:
    obs = _get(cfg, "observation", "config")
    kind = _get(obs, "type", "observation")
    y = _load_field_csv(_get(obs, "data_path", "observation"), grid)
    if kind == "exact":
        return ObservationModel.exact_field(y)
    if kind == "noisy":
        prec = float(_get(obs, "noise_precision", "observation"))
        if prec <= 0:
            raise ConfigError("observation.noise_precision: must be strictly positive")
        return ObservationModel.noisy(y, prec)
    raise ConfigError(f"observation.type: unknown type '{kind}'")


def _write_field_csv(path: str, field: np.ndarray, grid: Grid) -> None:
    np.savetxt(path, field.reshape(grid.shape), fmt="%.17g", delimiter=",")


def _emit(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_assemble(args) -> int:
    grid, kappa_sq, aniso = _parse_model(_load_config(args.config))
    model = assemble_precision(grid, kappa_sq, aniso)
    write_coordinate_format(model.Q, args.out)
    Q = model.Q.tocsr()
    diag = Q.diagonal()
    _emit(
        {
            "n": Q.shape[0],
            "nnz": int(Q.nnz),
            "max_row_nnz": int(np.diff(Q.indptr).max()),
            "min_diagonal": float(diag.min()),
            "max_diagonal": float(diag.max()),
        }
    )
    return EXIT_OK


def _cmd_sample(args) -> int:
    grid, kappa_sq, aniso = _parse_model(_load_config(args.config))
    if args.count < 0:
        raise ConfigError("--count must be nonnegative")
    with open(args.out, "w") as f:
        if args.count > 0:
            factor = PrecisionFactor(assemble_precision(grid, kappa_sq, aniso).Q)
            samples = factor.sample(args.seed, size=args.count)
            for r, u in enumerate(samples):
                if r:
                    f.write("\n")
                np.savetxt(f, u.reshape(grid.shape), fmt="%.17g", delimiter=",")
    _emit({"count": args.count, "seed": args.seed, "cells": grid.n_cells})
    return EXIT_OK


def _cmd_variance(args) -> int:
    grid, kappa_sq, aniso = _parse_model(_load_config(args.config))
    factor = PrecisionFactor(assemble_precision(grid, kappa_sq, aniso).Q)
    var = factor.marginal_variances()
    _write_field_csv(args.out, var, grid)
    analytic = None
    if aniso.is_constant:
        analytic = stationary_variance(kappa_sq, aniso.matrix(0.0, 0.0))
    _emit(
        {
            "mean": float(var.mean()),
            "min": float(var.min()),
            "max": float(var.max()),
            "relative_spread": float((var.max() - var.min()) / var.mean()),
            "analytic_constant_coefficient": analytic,
        }
    )
    return EXIT_OK


def _cmd_correlation(args) -> int:
    grid, kappa_sq, aniso = _parse_model(_load_config(args.config))
    try:
        i_str, j_str = args.ref.split(",")
        ref = grid.linear_index(int(i_str), int(j_str))
    except ValueError as exc:
        raise ConfigError(f"--ref: expected 'I,J' integers: {exc}") from exc
    factor = PrecisionFactor(assemble_precision(grid, kappa_sq, aniso).Q)
    corr = factor.correlation_field(ref)
    _write_field_csv(args.out, corr, grid)
    _emit({"ref_index": int(ref), "min": float(corr.min()), "max": float(corr.max())})
    return EXIT_OK


def _cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    grid, kappa_sq, aniso = _parse_model(cfg)
    layout = _parse_layout(cfg, grid)
    obs = _parse_observation(cfg, grid)
    if args.start is not None:
        try:
            with open(args.start) as f:
                start_obj = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read start vector {args.start}: {exc}") from exc
        theta0 = np.asarray(start_obj["theta"] if isinstance(start_obj, dict) else start_obj, float)
    else:
        try:
            theta0 = layout.pack(aniso)
        except ValueError as exc:
            raise ConfigError(
                f"config anisotropy cannot seed this layout ({exc}); pass --start"
            ) from exc
    result = map_estimate(grid, kappa_sq, layout, obs, theta0,
                          max_evaluations=args.max_evaluations)
    payload = result.to_dict()
    if args.out:
        with open(args.out, "w") as f:
            json.dump(payload, f, sort_keys=True, indent=2)
            f.write("\n")
    _emit(payload)
    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


def _cmd_study(args) -> int:
    cfg = _load_config(args.config)
    grid, kappa_sq, aniso = _parse_model(cfg)
    layout = _parse_layout(cfg, grid)
    obs_cfg = _get(cfg, "observation", "config")
    kind = _get(obs_cfg, "type", "observation")
    if kind == "exact":
        noise = None
    elif kind == "noisy":
        noise = float(_get(obs_cfg, "noise_precision", "observation"))
    else:
        raise ConfigError(f"observation.type: unknown type '{kind}'")
    try:
        true_theta = layout.pack(aniso)
    except ValueError as exc:
        raise ConfigError(f"config anisotropy must define the true parameters ({exc})") from exc
    if args.count < 2:
        raise ConfigError("--count: a study needs at least 2 datasets")
    study = simulation_study(
        grid, kappa_sq, layout, true_theta, args.count, args.seed,
        noise_precision=noise, n_jobs=args.threads,
        max_evaluations=args.max_evaluations,
    )
    payload = study.to_dict()
    if args.out:
        with open(args.out, "w") as f:
            json.dump(payload, f, sort_keys=True, indent=2)
            f.write("\n")
    _emit(payload)
    return EXIT_OK


def _cmd_field_eval(args) -> int:
    grid, kappa_sq, aniso = _parse_model(_load_config(args.config))
    X, Y = grid.cell_center_arrays()
    v1, v2 = aniso.field.evaluate(X, Y)
    v1 = np.broadcast_to(v1, X.shape)
    v2 = np.broadcast_to(v2, X.shape)
    h11, h12, h22 = (np.broadcast_to(c, X.shape) for c in aniso.tensor(X, Y))
    cols = np.column_stack([a.ravel() for a in (X, Y, v1, v2, h11, h12, h22)])
    with open(args.out, "w") as f:
        f.write("x,y,v1,v2,h11,h12,h22\n")
        np.savetxt(f, cols, fmt="%.17g", delimiter=",")
    _emit({"cells": grid.n_cells, "gamma": aniso.gamma})
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anisofield",
        description="Locally anisotropic Gaussian random fields on periodic grids: "
        "assembly, sampling, variances, correlations, MAP fitting and studies.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="path to the model config JSON")
        p.set_defaults(fn=fn)
        return p

    p = add("assemble", _cmd_assemble, "assemble the precision matrix (coordinate format)")
    p.add_argument("--out", required=True, help="output path for the matrix")

    p = add("sample", _cmd_sample, "draw field realizations (CSV)")
    p.add_argument("--seed", required=True, type=int, help="random seed")
    p.add_argument("--count", type=int, default=1, help="number of realizations")
    p.add_argument("--out", required=True, help="output CSV path")

    p = add("variance", _cmd_variance, "exact marginal variances (CSV field)")
    p.add_argument("--out", required=True, help="output CSV path")

    p = add("correlation", _cmd_correlation, "correlation with a reference cell (CSV field)")
    p.add_argument("--ref", required=True, help="reference cell as 'I,J'")
    p.add_argument("--out", required=True, help="output CSV path")

    p = add("fit", _cmd_fit, "MAP parameter estimation from observed data")
    p.add_argument("--start", help="JSON file with the starting parameter vector")
    p.add_argument("--out", help="output path for the fit result JSON")
    p.add_argument("--max-evaluations", type=int, default=5000)

    p = add("study", _cmd_study, "repeated simulation and refitting study")
    p.add_argument("--count", required=True, type=int, help="number of datasets")
    p.add_argument("--seed", required=True, type=int, help="master seed")
    p.add_argument("--threads", type=int, default=1, help="parallel worker cap")
    p.add_argument("--out", help="output path for the study JSON")
    p.add_argument("--max-evaluations", type=int, default=5000)

    p = add("field-eval", _cmd_field_eval, "tabulate v and H at the cell centres")
    p.add_argument("--out", required=True, help="output CSV path")

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotPositiveDefiniteError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
