"""File formats: model JSON, series CSV, fit/selection/verdict artifacts.

All text artifacts are UTF-8 with LF endings and full-precision decimal floats,
so identical inputs produce byte-identical files.  Writes go through a
temporary file plus rename; a failed run leaves no truncated artifact.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import InvalidInputError
from .estimation import FitResult, param_names
from .model import ModelKind, ModelSpec, ObservationSeries
from .selection import LrtResult, SelectionResult

SCHEMA_VERSION = 1


def _fmt(value) -> str:
    return repr(float(value))


def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def model_to_dict(spec: ModelSpec) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "m": spec.m,
        "kind": spec.kind.value,
        "theta": [[float(s), float(c)] for s, c in spec.theta],
        "sigma2": float(spec.sigma2),
        "A": [[float(v) for v in row] for row in spec.a],
    }


def model_from_dict(doc: dict) -> ModelSpec:
    try:
        return ModelSpec(
            m=int(doc["m"]),
            kind=ModelKind(doc["kind"]),
            theta=np.asarray(doc["theta"], dtype=float),
            sigma2=float(doc["sigma2"]),
            a=np.asarray(doc["A"], dtype=float),
        )
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed model document: {exc}") from exc


def dumps_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_model(path: str) -> ModelSpec:
    with open(path, encoding="utf-8") as handle:
        return model_from_dict(json.load(handle))


def save_model(path: str, spec: ModelSpec) -> None:
    atomic_write_text(path, dumps_json(model_to_dict(spec)))


def series_to_csv(series: ObservationSeries, states: np.ndarray | None = None) -> str:
    lines = [f"# y0={_fmt(series.y0)}"]
    if states is None:
        lines.append("y")
        lines.extend(_fmt(v) for v in series.y)
    else:
        if len(states) != series.n:
            raise InvalidInputError("states column must match the series length")
        lines.append("y,x")
        lines.extend(f"{_fmt(v)},{int(s)}" for v, s in zip(series.y, states))
    return "\n".join(lines) + "\n"


def series_from_csv(text: str) -> tuple[ObservationSeries, np.ndarray | None]:
    """Parse a series CSV; returns the series and the optional 0-based state column."""
    y0 = 0.0
    header = None
    y_vals: list[float] = []
    x_vals: list[int] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("y0="):
                y0 = float(body[3:])
            continue
        if header is None:
            header = [c.strip() for c in line.split(",")]
            if header not in (["y"], ["y", "x"]):
                raise InvalidInputError(f"unsupported series header {header!r}")
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise InvalidInputError(f"row {line!r} does not match the header")
        y_vals.append(float(cells[0]))
        if len(header) == 2:
            x_vals.append(int(cells[1]))
    if header is None or not y_vals:
        raise InvalidInputError("series CSV contains no data rows")
    states = np.asarray(x_vals, dtype=np.int64) if len(header) == 2 else None
    return ObservationSeries(y0=y0, y=np.asarray(y_vals)), states


def load_series(path: str) -> tuple[ObservationSeries, np.ndarray | None]:
    with open(path, encoding="utf-8") as handle:
        return series_from_csv(handle.read())


def save_series(path: str, series: ObservationSeries, states: np.ndarray | None = None) -> None:
    atomic_write_text(path, series_to_csv(series, states))


def fit_result_to_dict(fit: FitResult) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "model": model_to_dict(fit.spec),
        "loglik": float(fit.loglik),
        "converged": bool(fit.converged),
        "iterations_run": int(fit.iterations_run),
    }


def trajectory_to_csv(fit: FitResult, m: int) -> str:
    header = ["iteration", "gamma"] + param_names(m) + ["loglik"]
    lines = [",".join(header)]
    for t in range(fit.trajectory.shape[0]):
        g = fit.gammas[t]
        ll = fit.trajectory_loglik[t]
        cells = [str(t + 1), _fmt(g) if np.isfinite(g) else ""]
        cells.extend(_fmt(v) for v in fit.trajectory[t])
        cells.append(_fmt(ll) if np.isfinite(ll) else "")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def selection_to_csv(result: SelectionResult) -> str:
    lines = ["m,negloglik,pen,criterion"]
    for row in result.rows:
        if row.failed:
            lines.append(f"{row.m},,{_fmt(row.pen)},")
        else:
            lines.append(f"{row.m},{_fmt(row.negloglik)},{_fmt(row.pen)},{_fmt(row.criterion)}")
    return "\n".join(lines) + "\n"


def lrt_to_dict(result: LrtResult) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "stat": float(result.stat),
        "df": int(result.df),
        "alpha": float(result.alpha),
        "critical": float(result.critical),
        "reject": bool(result.reject),
    }


def bound_to_csv(lhs: float, rhs: float) -> str:
    return "lhs,rhs\n" + f"{_fmt(lhs)},{_fmt(rhs)}\n"
