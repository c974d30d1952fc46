"""Stochastic-approximation EM, exact EM, and their closed-form M-steps.

One fitting iteration alternates three stages: simulate a hidden path exactly
from its conditional law (ES), fold the path's indicator statistics into
running averages with a step size gamma_t (EA), and remaximize the weighted
complete-data log-likelihood in closed form (M).  The exact-EM variant replaces
the sampled indicators with smoothed moments and is monotone in the forward
log-likelihood.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDesignError,
    DegenerateStatsError,
    InvalidInputError,
)
from .likelihood import forward_backward, forward_filter
from .model import (
    DEFAULT_DELTA,
    ModelKind,
    ModelSpec,
    ObservationSeries,
    canonicalize,
    stationary_distribution,
    validate_path,
)
from .sampler import sample_path

SIGMA2_FLOOR = 1e-12
LOGLIK_EVERY = 10
CONVERGENCE_WINDOW = 50


class GammaSchedule(str, enum.Enum):
    """Step-size schedules; both satisfy gamma_t in [0,1], sum = inf, sum of squares < inf."""

    ONE_OVER_T = "one_over_t"
    BURN_IN_THEN_DECAY = "burn_in_then_decay"


@dataclass(frozen=True)
class SufficientStats:
    """Running averages of the hidden-path statistics.

    ``s1`` has shape (n, m) and averages the per-step state indicators; ``s2``
    averages the occupancy counts over steps 1..n-1; ``s3`` averages the
    transition-pair counts.  Consistent initialization keeps s2 equal to the
    column sums of s1 over the first n-1 steps and the total of s3 equal to n-1.
    """

    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray

    @classmethod
    def zeros(cls, n: int, m: int) -> "SufficientStats":
        return cls(s1=np.zeros((n, m)), s2=np.zeros(m), s3=np.zeros((m, m)))


@dataclass(frozen=True)
class SaemConfig:
    """Configuration of one fit.

    ``burn_in`` defaults to half the iteration budget; with the default
    schedule the step size stays at 1 through the burn-in and decays as
    1/(t - burn_in) afterwards.  ``init`` is "kmeans" (deterministic
    quantile-based start), "random", or a ModelSpec to start from.
    """

    m: int
    kind: ModelKind
    iterations: int = 1000
    burn_in: int | None = None
    gamma_schedule: GammaSchedule = GammaSchedule.BURN_IN_THEN_DECAY
    init: object = "kmeans"
    delta_clamp: float = DEFAULT_DELTA
    seed: int = 0
    tol_param: float = 1e-3

    def __post_init__(self):
        if self.m < 1:
            raise InvalidInputError("m must be >= 1")
        object.__setattr__(self, "kind", ModelKind(self.kind))
        object.__setattr__(self, "gamma_schedule", GammaSchedule(self.gamma_schedule))
        if self.iterations < 1:
            raise InvalidInputError("iterations must be >= 1")
        burn_in = self.iterations // 2 if self.burn_in is None else int(self.burn_in)
        if not 0 <= burn_in < self.iterations:
            raise InvalidInputError("burn_in must satisfy 0 <= burn_in < iterations")
        object.__setattr__(self, "burn_in", burn_in)
        if isinstance(self.init, str) and self.init not in ("kmeans", "random"):
            raise InvalidInputError(f"unknown init strategy {self.init!r}")
        if not isinstance(self.init, (str, ModelSpec)):
            raise InvalidInputError("init must be 'kmeans', 'random', or a ModelSpec")


@dataclass(frozen=True)
class FitResult:
    """Fitted model with its forward log-likelihood and the optimization trace."""

    spec: ModelSpec
    loglik: float
    trajectory: np.ndarray
    trajectory_loglik: np.ndarray
    gammas: np.ndarray
    converged: bool
    iterations_run: int


def gamma_schedule(t: int, cfg: SaemConfig) -> float:
    """Step size at iteration t (1-based)."""
    if t < 1:
        raise InvalidInputError("iteration index starts at 1")
    if cfg.gamma_schedule is GammaSchedule.ONE_OVER_T:
        return 1.0 / t
    return 1.0 if t <= cfg.burn_in else 1.0 / (t - cfg.burn_in)


def path_statistics(path: np.ndarray, n: int, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Indicator matrix, occupancy counts over steps 1..n-1, and transition counts."""
    ind = np.zeros((n, m))
    ind[np.arange(n), path] = 1.0
    occ = ind[:-1].sum(axis=0)
    trans = np.zeros((m, m))
    if n > 1:
        np.add.at(trans, (path[:-1], path[1:]), 1.0)
    return ind, occ, trans


def update_stats(stats: SufficientStats, path, gamma: float) -> SufficientStats:
    """Robbins-Monro update of the running statistics toward the path's statistics."""
    if not 0.0 <= gamma <= 1.0:
        raise InvalidInputError(f"gamma must lie in [0, 1], got {gamma}")
    n, m = stats.s1.shape
    x = validate_path(path, m, n)
    ind, occ, trans = path_statistics(x, n, m)
    return SufficientStats(
        s1=stats.s1 + gamma * (ind - stats.s1),
        s2=stats.s2 + gamma * (occ - stats.s2),
        s3=stats.s3 + gamma * (trans - stats.s3),
    )


def _clamp_row(row: np.ndarray, delta: float) -> np.ndarray:
    """Project a probability row onto {p : p_i >= delta, sum p = 1}.

    Entries below delta are pinned to delta and the remaining mass is scaled
    proportionally; repeated until no scaled entry dips below delta.
    """
    m = row.size
    if m * delta >= 1.0:
        raise InvalidInputError("delta clamp too large for the number of states")
    p = np.maximum(np.asarray(row, dtype=float), 0.0)
    if p.sum() <= 0.0:
        p = np.full(m, 1.0 / m)
    else:
        p = p / p.sum()
    pinned = np.zeros(m, dtype=bool)
    for _ in range(m):
        low = (p < delta) & ~pinned
        if not low.any():
            break
        pinned |= low
        p[pinned] = delta
        free = ~pinned
        if not free.any():
            break
        p[free] *= (1.0 - delta * pinned.sum()) / p[free].sum()
    return p


def _transition_from_stats(s3: np.ndarray, s2: np.ndarray, occupied: np.ndarray, delta: float) -> np.ndarray:
    m = s2.size
    a = np.empty((m, m))
    for i in range(m):
        if occupied[i]:
            a[i] = _clamp_row(s3[i] / s2[i], delta)
        else:
            a[i] = np.full(m, 1.0 / m)
    return a


def _weighted_emission_mle(
    w: np.ndarray,
    y_prev: np.ndarray,
    y_next: np.ndarray,
    kind: ModelKind,
    occupied: np.ndarray,
    fallback_theta: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Maximize sum_k sum_i w[k,i] log N(y_next[k]; slope_i y_prev[k] + intercept_i, s2).

    Returns the (m, 2) theta array and the variance that together are the exact
    stationary point: per-state weighted means for the constant family, weighted
    least squares for the linear family, and the weighted mean squared residual
    normalized by the total weight for the variance.
    """
    m = w.shape[1]
    theta = np.array(fallback_theta, dtype=float, copy=True)
    col_w = w.sum(axis=0)
    if kind is ModelKind.HMM:
        for i in np.flatnonzero(occupied):
            theta[i, 0] = 0.0
            theta[i, 1] = (w[:, i] @ y_next) / col_w[i]
    else:
        for i in np.flatnonzero(occupied):
            wi = w[:, i]
            sw = col_w[i]
            sx = wi @ y_prev
            sy = wi @ y_next
            sxx = wi @ (y_prev * y_prev)
            sxy = wi @ (y_prev * y_next)
            denom = sw * sxx - sx * sx
            scale = max(sw * sxx, sx * sx, sw)
            if denom <= 1e-12 * scale:
                raise DegenerateDesignError(
                    f"weighted design is singular for state {i} (no spread in the lagged values)"
                )
            slope = (sw * sxy - sx * sy) / denom
            theta[i] = (slope, (sy - slope * sx) / sw)
    fitted = y_prev[:, None] * theta[:, 0] + theta[:, 1]
    resid2 = (y_next[:, None] - fitted) ** 2
    total = w.sum()
    sigma2 = float((w * resid2).sum() / total) if total > 0 else 0.0
    return theta, sigma2


def _occupied_states(s2: np.ndarray, n: int) -> np.ndarray:
    occupied = s2 >= 1e-6 * max(n - 1, 1)
    if not occupied.any():
        raise DegenerateStatsError("every state has vanishing occupancy")
    return occupied


def mstep_hmm(
    stats: SufficientStats,
    series: ObservationSeries,
    delta_clamp: float = DEFAULT_DELTA,
    prev_theta: np.ndarray | None = None,
) -> tuple[np.ndarray, float, np.ndarray]:
    """Closed-form maximizer for the constant-mean family.

    Returns (per-state means, sigma2, transition matrix).  States with
    vanishing occupancy keep ``prev_theta`` (or fall back to the weighted grand
    mean) and get a uniform transition row.
    """
    n, m = stats.s1.shape
    occupied = _occupied_states(stats.s2, n)
    w = stats.s1[: n - 1]
    y_next = series.y[: n - 1]
    grand = float(series.y.mean())
    fallback = np.column_stack([np.zeros(m), np.full(m, grand)])
    if prev_theta is not None:
        fallback = np.asarray(prev_theta, dtype=float)
    theta, sigma2 = _weighted_emission_mle(
        w, series.lagged[: n - 1], y_next, ModelKind.HMM, occupied, fallback
    )
    a = _transition_from_stats(stats.s3, stats.s2, occupied, delta_clamp)
    return theta[:, 1].copy(), sigma2, a


def mstep_ar(
    stats: SufficientStats,
    series: ObservationSeries,
    delta_clamp: float = DEFAULT_DELTA,
    prev_theta: np.ndarray | None = None,
) -> tuple[np.ndarray, float, np.ndarray]:
    """Weighted least-squares maximizer for the linear family.

    Returns ((m, 2) slope/intercept array, sigma2, transition matrix).  Raises
    DegenerateDesignError when an occupied state sees no spread in the lagged
    values.
    """
    n, m = stats.s1.shape
    occupied = _occupied_states(stats.s2, n)
    w = stats.s1[: n - 1]
    grand = float(series.y.mean())
    fallback = np.column_stack([np.zeros(m), np.full(m, grand)])
    if prev_theta is not None:
        fallback = np.asarray(prev_theta, dtype=float)
    theta, sigma2 = _weighted_emission_mle(
        w, series.lagged[: n - 1], series.y[: n - 1], ModelKind.LINEAR_AR, occupied, fallback
    )
    a = _transition_from_stats(stats.s3, stats.s2, occupied, delta_clamp)
    return theta, sigma2, a


def _mstep(stats, series, kind, delta_clamp, prev_theta):
    if kind is ModelKind.HMM:
        means, sigma2, a = mstep_hmm(stats, series, delta_clamp, prev_theta)
        theta = np.column_stack([np.zeros(means.size), means])
    else:
        theta, sigma2, a = mstep_ar(stats, series, delta_clamp, prev_theta)
    return theta, sigma2, a


def param_names(m: int) -> list[str]:
    names = [f"slope_{i}" for i in range(m)]
    names += [f"intercept_{i}" for i in range(m)]
    names.append("sigma2")
    names += [f"a_{i}_{j}" for i in range(m) for j in range(m)]
    return names


def flatten_params(spec: ModelSpec) -> np.ndarray:
    return np.concatenate([spec.slopes, spec.intercepts, [spec.sigma2], spec.a.ravel()])


def _ols_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    n = x.size
    if n < 2:
        return 0.0, float(y.mean()) if n else 0.0
    sx, sy = x.sum(), y.sum()
    sxx, sxy = x @ x, x @ y
    denom = n * sxx - sx * sx
    if denom <= 1e-12 * max(n * sxx, sx * sx, 1.0):
        return 0.0, float(y.mean())
    slope = (n * sxy - sx * sy) / denom
    return float(slope), float((sy - slope * sx) / n)


def _kmeans_like_init(series: ObservationSeries, cfg: SaemConfig) -> ModelSpec:
    """Quantile partition of the observed values, per-group means or lines, uniform rows."""
    m, y, lagged = cfg.m, series.y, series.lagged
    edges = np.quantile(y, np.linspace(0.0, 1.0, m + 1))
    groups = np.searchsorted(edges[1:-1], y, side="right")
    theta = np.zeros((m, 2))
    sse, count = 0.0, 0
    for i in range(m):
        members = groups == i
        if not members.any():
            theta[i] = (0.0, float(np.quantile(y, (i + 0.5) / m)))
            continue
        yi, xi = y[members], lagged[members]
        if cfg.kind is ModelKind.HMM:
            theta[i] = (0.0, float(yi.mean()))
        else:
            theta[i] = _ols_line(xi, yi)
        resid = yi - (theta[i, 0] * xi + theta[i, 1])
        sse += float(resid @ resid)
        count += yi.size
    var_y = float(y.var())
    sigma2 = max(sse / max(count, 1), 1e-4 * var_y, 1e-8)
    a = np.full((m, m), 1.0 / m)
    return ModelSpec(m=m, kind=cfg.kind, theta=theta, sigma2=sigma2, a=a)


def _random_init(series: ObservationSeries, cfg: SaemConfig, rng: np.random.Generator) -> ModelSpec:
    m, y = cfg.m, series.y
    loc, scale = float(y.mean()), float(y.std()) + 1e-8
    intercepts = np.sort(rng.normal(loc, scale, size=m))
    slopes = np.zeros(m) if cfg.kind is ModelKind.HMM else rng.uniform(-0.8, 0.8, size=m)
    sigma2 = float(y.var()) * rng.uniform(0.3, 1.5) + 1e-8
    a = np.full((m, m), 1.0 / m)
    return ModelSpec(m=m, kind=cfg.kind, theta=np.column_stack([slopes, intercepts]), sigma2=sigma2, a=a)


def _initial_spec(series: ObservationSeries, cfg: SaemConfig, rng: np.random.Generator) -> ModelSpec:
    if isinstance(cfg.init, ModelSpec):
        spec = cfg.init
        if spec.m != cfg.m or spec.kind is not cfg.kind:
            raise InvalidInputError("provided init spec does not match the config's m and kind")
        return spec
    if cfg.init == "kmeans":
        return _kmeans_like_init(series, cfg)
    return _random_init(series, cfg, rng)


def _converged(trajectory: np.ndarray, tol: float) -> bool:
    if trajectory.shape[0] <= CONVERGENCE_WINDOW:
        return False
    deltas = np.abs(np.diff(trajectory[-(CONVERGENCE_WINDOW + 1):], axis=0))
    return bool(deltas.max() < tol)


def saem_fit(
    series: ObservationSeries,
    cfg: SaemConfig,
    rng: np.random.Generator | None = None,
) -> FitResult:
    """Stochastic-approximation EM fit; deterministic given (series, cfg, seed)."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    spec = _initial_spec(series, cfg, rng)
    n, m = series.n, cfg.m
    stats = SufficientStats.zeros(n, m)
    n_params = 2 * m + 1 + m * m
    trajectory = np.empty((cfg.iterations, n_params))
    lls = np.full(cfg.iterations, np.nan)
    gammas = np.empty(cfg.iterations)
    for t in range(1, cfg.iterations + 1):
        bank = forward_filter(spec, series)
        path = sample_path(spec, series, rng, bank=bank)
        g = gamma_schedule(t, cfg)
        stats = update_stats(stats, path, g)
        theta, sigma2, a = _mstep(stats, series, cfg.kind, cfg.delta_clamp, spec.theta)
        spec = ModelSpec(m=m, kind=cfg.kind, theta=theta, sigma2=max(sigma2, SIGMA2_FLOOR), a=a)
        trajectory[t - 1] = flatten_params(spec)
        gammas[t - 1] = g
        if t % LOGLIK_EVERY == 0 or t == cfg.iterations:
            lls[t - 1] = forward_filter(spec, series).loglik
    final, _ = canonicalize(spec)
    return FitResult(
        spec=final,
        loglik=forward_filter(final, series).loglik,
        trajectory=trajectory,
        trajectory_loglik=lls,
        gammas=gammas,
        converged=_converged(trajectory, cfg.tol_param),
        iterations_run=cfg.iterations,
    )


def _em_transition_update(
    spec: ModelSpec, gamma0: np.ndarray, trans_w: np.ndarray, occ: np.ndarray, delta: float
) -> np.ndarray:
    """Transition update with an ascent guard.

    The count-ratio rows maximize the transition block of the expected
    complete-data log-likelihood but ignore the stationary first-step term;
    the proposal is kept only when the two terms together do not decrease,
    which preserves exact EM monotonicity of the forward log-likelihood.
    """
    occupied = occ > 0.0
    proposal = _transition_from_stats(trans_w, occ, occupied, delta)

    def score(a: np.ndarray) -> float:
        with np.errstate(divide="ignore"):
            loga = np.log(a)
            logmu = np.log(stationary_distribution(a))
        t_block = np.where(trans_w > 0.0, trans_w * loga, 0.0).sum()
        init_block = np.where(gamma0 > 0.0, gamma0 * logmu, 0.0).sum()
        return float(t_block + init_block)

    return proposal if score(proposal) >= score(spec.a) else spec.a


def em_fit(
    series: ObservationSeries,
    cfg: SaemConfig,
    rng: np.random.Generator | None = None,
) -> FitResult:
    """Exact EM fit: smoothed moments in place of sampled indicators.

    The emission update maximizes the full weighted residual objective over all
    n steps, so each iteration cannot decrease the forward log-likelihood; the
    loop stops when the increment falls below 1e-8 or the iteration budget runs
    out.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    spec = _initial_spec(series, cfg, rng)
    n, m = series.n, cfg.m
    n_params = 2 * m + 1 + m * m
    trajectory = []
    lls = []
    prev_ll = -np.inf
    converged = False
    iterations = 0
    for t in range(1, cfg.iterations + 1):
        bank, moments = forward_backward(spec, series)
        if trajectory:
            lls[-1] = bank.loglik  # log-likelihood of the previous iteration's spec
        gamma0 = moments.gamma[0]
        occ = moments.gamma[: n - 1].sum(axis=0)
        trans_w = moments.xi.sum(axis=0)
        occupied = _occupied_states(occ, n) if n > 1 else np.ones(m, dtype=bool)
        theta, sigma2 = _weighted_emission_mle(
            moments.gamma, series.lagged, series.y, cfg.kind, occupied, spec.theta
        )
        a = _em_transition_update(spec, gamma0, trans_w, occ, cfg.delta_clamp) if n > 1 else spec.a
        spec = ModelSpec(m=m, kind=cfg.kind, theta=theta, sigma2=max(sigma2, SIGMA2_FLOOR), a=a)
        trajectory.append(flatten_params(spec))
        lls.append(np.nan)
        iterations = t
        if bank.loglik - prev_ll < 1e-8 and t > 1:
            converged = True
            break
        prev_ll = bank.loglik
    final, _ = canonicalize(spec)
    final_ll = forward_filter(final, series).loglik
    if lls:
        lls[-1] = final_ll
    trajectory = np.asarray(trajectory).reshape(iterations, n_params)
    return FitResult(
        spec=final,
        loglik=final_ll,
        trajectory=trajectory,
        trajectory_loglik=np.asarray(lls),
        gammas=np.full(iterations, np.nan),
        converged=converged,
        iterations_run=iterations,
    )
