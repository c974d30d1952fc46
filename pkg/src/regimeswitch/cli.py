"""Command-line front end: simulate, fit, select, lrt, and bound workflows.

Exit codes: 0 success, 2 usage, 3 data or format problems, 4 numerical
failures.  Errors are reported as a JSON object on stderr.  All outputs are
written atomically after the computation finishes, and identical argv plus
seed produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import dataio
from .errors import InvalidInputError, NumericalError, RegimeSwitchError
from .estimation import SaemConfig, em_fit, saem_fit
from .marginal import Priors, marginal_ratio_bound
from .model import ModelKind, simulate
from .selection import best_fit, lrt_test, select_states

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regimeswitch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a series from a model JSON")
    p_sim.add_argument("--model", required=True, help="model JSON path")
    p_sim.add_argument("--n", type=int, required=True, help="number of observations")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--y0", type=float, default=0.0)
    p_sim.add_argument("--x1", default="stationary", help="'stationary' or a fixed 0-based state")
    p_sim.add_argument("--with-states", action="store_true", help="write the hidden path as column x")
    p_sim.add_argument("--out", required=True, help="series CSV path")

    p_fit = sub.add_parser("fit", help="fit a model to a series CSV")
    p_fit.add_argument("--series", required=True)
    p_fit.add_argument("--m", type=int, required=True)
    p_fit.add_argument("--kind", choices=[k.value for k in ModelKind], required=True)
    p_fit.add_argument("--algo", choices=["saem", "em"], default="saem")
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--restarts", type=int, default=1)
    p_fit.add_argument("--config", help="optional JSON with SaemConfig overrides")
    p_fit.add_argument("--out", required=True, help="fit result JSON path")
    p_fit.add_argument("--trajectory", help="optional trajectory CSV path")

    p_sel = sub.add_parser("select", help="penalized-likelihood state-count selection")
    p_sel.add_argument("--series", required=True)
    p_sel.add_argument("--m-max", type=int, required=True)
    p_sel.add_argument("--kind", choices=[k.value for k in ModelKind], required=True)
    p_sel.add_argument("--seed", type=int, default=0)
    p_sel.add_argument("--restarts", type=int, default=5)
    p_sel.add_argument("--dim-formula", choices=["stated", "table2"], default="stated")
    p_sel.add_argument("--polish-iters", type=int, default=100)
    p_sel.add_argument("--config", help="optional JSON with SaemConfig overrides")
    p_sel.add_argument("--out", required=True, help="criterion table CSV path")
    p_sel.add_argument("--chosen", help="optional chosen-model JSON path")

    p_lrt = sub.add_parser("lrt", help="likelihood-ratio test of zero slopes")
    p_lrt.add_argument("--series", required=True)
    p_lrt.add_argument("--m", type=int, required=True)
    p_lrt.add_argument("--alpha", type=float, default=0.05)
    p_lrt.add_argument("--seed", type=int, default=0)
    p_lrt.add_argument("--restarts", type=int, default=3)
    p_lrt.add_argument("--config", help="optional JSON with SaemConfig overrides")
    p_lrt.add_argument("--out", required=True, help="verdict JSON path")

    p_bound = sub.add_parser("bound", help="likelihood-to-marginal ratio bound")
    p_bound.add_argument("--series", required=True, help="series CSV carrying the x column")
    p_bound.add_argument("--model", required=True, help="model JSON path")
    p_bound.add_argument("--sigma-scale", type=float, default=10.0)
    p_bound.add_argument("--u0", type=float, default=1.0)
    p_bound.add_argument("--v0", type=float, default=1.0)
    p_bound.add_argument("--mode", choices=["enumerate", "pathwise"], default="enumerate")
    p_bound.add_argument("--exponent", choices=["n-plus-v0", "one-plus-v0"], default="n-plus-v0")
    p_bound.add_argument("--out", required=True, help="lhs/rhs CSV path")

    return parser


def _load_config_overrides(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as handle:
        doc = json.load(handle)
    allowed = {"iterations", "burn_in", "gamma_schedule", "delta_clamp", "tol_param", "init"}
    overrides = {k: v for k, v in doc.items() if k in allowed}
    if "init" in overrides and not isinstance(overrides["init"], str):
        raise InvalidInputError("config init must be 'kmeans' or 'random'")
    return overrides


def _make_config(args, m: int, kind: str) -> SaemConfig:
    overrides = _load_config_overrides(getattr(args, "config", None))
    return SaemConfig(m=m, kind=ModelKind(kind), seed=args.seed, **overrides)


def _cmd_simulate(args) -> int:
    spec = dataio.load_model(args.model)
    x1 = args.x1 if args.x1 == "stationary" else int(args.x1)
    rng = np.random.default_rng(args.seed)
    states, series = simulate(spec, args.n, y0=args.y0, x1_law=x1, rng=rng)
    dataio.save_series(args.out, series, states if args.with_states else None)
    return EXIT_OK


def _cmd_fit(args) -> int:
    series, _ = dataio.load_series(args.series)
    cfg = _make_config(args, args.m, args.kind)
    if args.algo == "em":
        from dataclasses import replace

        configs = [cfg] + [
            replace(cfg, init="random", seed=cfg.seed + 7919 * r) for r in range(1, args.restarts)
        ]
        fit = max((em_fit(series, c) for c in configs), key=lambda f: f.loglik)
    elif args.restarts > 1:
        fit = best_fit(series, cfg, restarts=args.restarts, polish_iters=0)
    else:
        fit = saem_fit(series, cfg)
    dataio.atomic_write_text(args.out, dataio.dumps_json(dataio.fit_result_to_dict(fit)))
    if args.trajectory:
        dataio.atomic_write_text(args.trajectory, dataio.trajectory_to_csv(fit, args.m))
    return EXIT_OK


def _cmd_select(args) -> int:
    series, _ = dataio.load_series(args.series)
    cfg = _make_config(args, 1, args.kind)
    result = select_states(
        series,
        args.m_max,
        cfg,
        restarts=args.restarts,
        dim_formula=args.dim_formula,
        polish_iters=args.polish_iters,
    )
    dataio.atomic_write_text(args.out, dataio.selection_to_csv(result))
    if args.chosen:
        chosen = next(r for r in result.rows if r.m == result.m_hat)
        doc = dataio.fit_result_to_dict(chosen.fit)
        doc["m_hat"] = result.m_hat
        dataio.atomic_write_text(args.chosen, dataio.dumps_json(doc))
    return EXIT_OK


def _cmd_lrt(args) -> int:
    series, _ = dataio.load_series(args.series)
    cfg = _make_config(args, args.m, ModelKind.HMM.value)
    result = lrt_test(series, args.m, args.alpha, cfg, restarts=args.restarts)
    dataio.atomic_write_text(args.out, dataio.dumps_json(dataio.lrt_to_dict(result)))
    return EXIT_OK


def _cmd_bound(args) -> int:
    series, states = dataio.load_series(args.series)
    if states is None:
        raise InvalidInputError("the bound workflow needs a series CSV with the x column")
    spec = dataio.load_model(args.model)
    priors = Priors.default(spec.m, spec.kind, scale=args.sigma_scale, u0=args.u0, v0=args.v0)
    lhs, rhs = marginal_ratio_bound(
        series, states, priors, spec, mode=args.mode, exponent=args.exponent
    )
    dataio.atomic_write_text(args.out, dataio.bound_to_csv(lhs, rhs))
    return EXIT_OK


_HANDLERS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "select": _cmd_select,
    "lrt": _cmd_lrt,
    "bound": _cmd_bound,
}


def _emit_error(exc: Exception) -> None:
    doc = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return _HANDLERS[args.command](args)
    except NumericalError as exc:
        _emit_error(exc)
        return EXIT_NUMERICAL
    except (InvalidInputError, RegimeSwitchError, OSError, ValueError, json.JSONDecodeError) as exc:
        _emit_error(exc)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
