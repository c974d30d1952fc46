"""Exact conditional simulation of the hidden path (forward-filter, backward-sample)."""

from __future__ import annotations

import numpy as np

from .errors import NumericalError, SizeGuardError
from .likelihood import FilterBank, _logsumexp, forward_filter, iter_path_logweights
from .model import ModelSpec, ObservationSeries

ENUMERATION_MAX_PATHS = 10**5


def sample_path(
    spec: ModelSpec,
    series: ObservationSeries,
    rng: np.random.Generator,
    bank: FilterBank | None = None,
) -> np.ndarray:
    """Draw one hidden path exactly from p(x_1..x_n | y_1..y_n).

    The last state is drawn from the filter at the final step; earlier states
    are drawn backwards from the law proportional to a[i, x_next] * filt[k, i].
    Pass a precomputed ``bank`` to reuse the filter across draws.  Consumes
    exactly n uniforms from the generator.
    """
    if bank is None:
        bank = forward_filter(spec, series)
    n, m = series.n, spec.m
    us = rng.random(n)
    filt = bank.filt.tolist()
    a_cols = spec.a.T.tolist()
    x = [0] * n

    def draw(weights, u):
        total = 0.0
        for v in weights:
            total += v
        if not 0.0 < total < np.inf or total != total:
            raise NumericalError("backward sampling kernel vanished")
        target = u * total
        acc = 0.0
        for i in range(m - 1):
            acc += weights[i]
            if target < acc:
                return i
        return m - 1

    x[-1] = draw(filt[-1], us[-1])
    for k in range(n - 2, -1, -1):
        col = a_cols[x[k + 1]]
        fk = filt[k]
        x[k] = draw([fk[i] * col[i] for i in range(m)], us[k])
    return np.asarray(x, dtype=np.int64)


def exact_posterior_enumeration(
    spec: ModelSpec,
    series: ObservationSeries,
    initial=None,
    max_paths: int = ENUMERATION_MAX_PATHS,
) -> dict[tuple[int, ...], float]:
    """Exact posterior over every hidden path, as a dict path -> probability."""
    if spec.m**series.n > max_paths:
        raise SizeGuardError(
            f"m**n = {spec.m**series.n} exceeds the enumeration guard {max_paths}"
        )
    paths = []
    logws = []
    for path, w in iter_path_logweights(spec, series, initial=initial, max_paths=max_paths):
        paths.append(path)
        logws.append(w)
    logws = np.asarray(logws)
    total = _logsumexp(logws)
    probs = np.exp(logws - total)
    return dict(zip(paths, probs.tolist()))
