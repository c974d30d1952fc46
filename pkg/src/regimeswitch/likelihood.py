"""Emission densities, stable forward recursion, exact smoothing, and the EM objective.

All recursions run on normalized probabilities with per-step log normalizers;
the raw forward recursion underflows long before n = 500, so probabilities are
rescaled at every step and the log scale factors accumulate the log-likelihood.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalError, SizeGuardError
from .model import ModelSpec, ObservationSeries, stationary_distribution

LOG_2PI = float(np.log(2.0 * np.pi))

BRUTE_FORCE_MAX_PATHS = 10**6


@dataclass(frozen=True)
class FilterBank:
    """Filtering output: filt[k] = p(X_k = . | y_1..y_k) plus per-step log normalizers.

    ``loglik`` is the sum of the log normalizers, i.e. the exact forward
    log-likelihood of the series under the model.
    """

    filt: np.ndarray
    log_norm: np.ndarray
    loglik: float


@dataclass(frozen=True)
class SmoothedMoments:
    """Exact conditional moments given the whole series.

    ``gamma[k, i]`` is p(X_k = i | y_1..y_n) and ``xi[k, i, j]`` is
    p(X_k = i, X_{k+1} = j | y_1..y_n); gamma rows and xi slices each sum to 1.
    """

    gamma: np.ndarray
    xi: np.ndarray


def emission_logdensity(spec: ModelSpec, state: int, y_prev: float, y: float) -> float:
    """Log density of one observation given the previous value and the regime."""
    if not 0 <= state < spec.m:
        raise InvalidInputError(f"state must lie in [0, {spec.m})")
    slope, intercept = spec.theta[state]
    resid = y - slope * y_prev - intercept
    return float(-0.5 * (LOG_2PI + np.log(spec.sigma2)) - resid * resid / (2.0 * spec.sigma2))


def emission_log_matrix(spec: ModelSpec, series: ObservationSeries) -> np.ndarray:
    """Matrix of emission log densities, shape (n, m): entry (k, i) is log p(y_k | y_{k-1}, i)."""
    resid = series.y[:, None] - spec.regime_means(series.lagged)
    return -0.5 * (LOG_2PI + np.log(spec.sigma2)) - resid * resid / (2.0 * spec.sigma2)


def _initial_weights(spec: ModelSpec, initial) -> np.ndarray:
    if initial is None:
        return stationary_distribution(spec.a)
    init = np.asarray(initial, dtype=float)
    if init.shape != (spec.m,) or np.any(init < 0.0) or not np.isclose(init.sum(), 1.0):
        raise InvalidInputError("initial weights must be a probability vector of length m")
    return init


def _filter_core(a: np.ndarray, logb: np.ndarray, init: np.ndarray) -> FilterBank:
    # Plain-Python inner loop: for the handful of states these models use it
    # beats per-step numpy dispatch by a wide margin.
    n, m = logb.shape
    row_max = logb.max(axis=1)
    if not np.all(np.isfinite(row_max)):
        raise NumericalError("non-finite emission density", step=int(np.argmax(~np.isfinite(row_max))))
    # Per-row rescaled emissions keep every intermediate inside float range.
    b = np.exp(logb - row_max[:, None]).tolist()
    a_cols = a.T.tolist()
    states = range(m)
    prev = [float(v) for v in init]
    rows = []
    scale = np.empty(n)
    for k in range(n):
        bk = b[k]
        if k == 0:
            w = [p * q for p, q in zip(prev, bk)]
        else:
            w = [bk[j] * sum(prev[i] * col[i] for i in states) for j, col in enumerate(a_cols)]
        c = 0.0
        for v in w:
            c += v
        if not 0.0 < c < np.inf or c != c:
            raise NumericalError("forward filter normalizer vanished", step=k)
        prev = [v / c for v in w]
        rows.append(prev)
        scale[k] = c
    log_norm = np.log(scale) + row_max
    return FilterBank(filt=np.asarray(rows), log_norm=log_norm, loglik=float(log_norm.sum()))


def forward_filter(spec: ModelSpec, series: ObservationSeries, initial=None) -> FilterBank:
    """Exact filtering pass; ``initial`` overrides the stationary first-step prior."""
    logb = emission_log_matrix(spec, series)
    return _filter_core(spec.a, logb, _initial_weights(spec, initial))


def _logsumexp(values: np.ndarray) -> float:
    hi = np.max(values)
    if not np.isfinite(hi):
        return float(hi)
    return float(hi + np.log(np.sum(np.exp(values - hi))))


def iter_path_logweights(spec: ModelSpec, series: ObservationSeries, initial=None, max_paths: int = BRUTE_FORCE_MAX_PATHS):
    """Yield (path, log joint weight) over every hidden path; guarded by ``max_paths``.

    The weight of a path is log p(x_1) + sum log a + sum of emission log
    densities, exactly the summand of the likelihood written as a sum over paths.
    """
    n, m = series.n, spec.m
    if m**n > max_paths:
        raise SizeGuardError(f"m**n = {m**n} exceeds the enumeration guard {max_paths}")
    logb = emission_log_matrix(spec, series)
    with np.errstate(divide="ignore"):
        loga = np.log(spec.a)
        logmu = np.log(_initial_weights(spec, initial))
    for path in itertools.product(range(m), repeat=n):
        x = np.asarray(path, dtype=np.int64)
        w = logmu[x[0]] + logb[np.arange(n), x].sum()
        if n > 1:
            w += loga[x[:-1], x[1:]].sum()
        yield path, float(w)


def brute_force_likelihood(spec: ModelSpec, series: ObservationSeries, initial=None) -> float:
    """Log-likelihood by direct summation over all m**n hidden paths (oracle)."""
    logws = np.fromiter(
        (w for _, w in iter_path_logweights(spec, series, initial=initial)),
        dtype=float,
    )
    return _logsumexp(logws)


def forward_backward(
    spec: ModelSpec, series: ObservationSeries, initial=None
) -> tuple[FilterBank, SmoothedMoments]:
    """Run the filter and the scaled backward pass; returns both outputs."""
    logb = emission_log_matrix(spec, series)
    bank = _filter_core(spec.a, logb, _initial_weights(spec, initial))
    n, m = logb.shape
    # Ratio of each emission density to its step normalizer; bounded because the
    # normalizer is a positive mixture of the same densities.
    r = np.exp(logb - bank.log_norm[:, None])
    beta = np.empty((n, m))
    beta[-1] = 1.0
    for k in range(n - 2, -1, -1):
        row = spec.a @ (r[k + 1] * beta[k + 1])
        top = row.max()
        if not np.isfinite(top) or top <= 0.0:
            raise NumericalError("backward pass degenerated", step=k)
        beta[k] = row / top  # harmless rescale: every use below renormalizes
    gamma = bank.filt * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    if n > 1:
        xi = bank.filt[:-1, :, None] * spec.a[None, :, :] * (r[1:] * beta[1:])[:, None, :]
        xi /= xi.sum(axis=(1, 2), keepdims=True)
    else:
        xi = np.zeros((0, m, m))
    return bank, SmoothedMoments(gamma=gamma, xi=xi)


def smooth(spec: ModelSpec, series: ObservationSeries, initial=None) -> SmoothedMoments:
    """Exact smoothed state and transition-pair probabilities."""
    return forward_backward(spec, series, initial=initial)[1]


def q_function(candidate: ModelSpec, moments: SmoothedMoments, series: ObservationSeries) -> float:
    """Expected complete-data log-likelihood terms that depend on the candidate.

    Evaluates sum_k sum_ij xi[k,i,j] log a_ij plus the weighted emission sum
    sum_{k=1}^{n-1} sum_i gamma[k,i] log p(y_k | y_{k-1}, i), where weights pair
    each step's state probabilities with the observation generated at that step.
    Zero-probability transitions with zero weight contribute 0; a zero
    transition probability carrying positive weight makes the value -inf.
    """
    n, m = series.n, candidate.m
    if moments.gamma.shape != (n, m) or moments.xi.shape != (max(n - 1, 0), m, m):
        raise InvalidInputError("moment dimensions do not match the candidate and series")
    w_trans = moments.xi.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        loga = np.log(candidate.a)
        trans = np.where(w_trans > 0.0, w_trans * loga, 0.0).sum()
    logb = emission_log_matrix(candidate, series)
    emis = float((moments.gamma[: n - 1] * logb[: n - 1]).sum())
    return float(trans + emis)
