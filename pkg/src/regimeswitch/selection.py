"""Penalized-likelihood state-count selection and the zero-slope likelihood-ratio test."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammainc

from .errors import InvalidInputError, NumericalError, RegimeSwitchError
from .estimation import FitResult, SaemConfig, em_fit, saem_fit
from .model import ModelKind, ModelSpec, ObservationSeries

DIM_FORMULAS = ("stated", "table2")
NESTEDNESS_TOL = 0.1

THREADS_ENV = "REGIMESWITCH_THREADS"


def thread_count() -> int:
    """Parallelism cap from the environment; unset means sequential, 0 means auto."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    value = int(raw)
    if value < 0:
        raise InvalidInputError(f"{THREADS_ENV} must be >= 0")
    return value if value > 0 else (os.cpu_count() or 1)


def _map_jobs(fn, jobs):
    workers = thread_count()
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def model_dimension(m: int, kind: ModelKind, formula: str = "stated") -> int:
    """Free-parameter count m(m-1) + m*d + 1 used by the penalty.

    The constant family gives m**2 + 1 and the linear family m(m+1) + 1.  The
    ``table2`` override drops the +1 for the linear family, matching an
    alternative dimension convention.
    """
    if m < 1:
        raise InvalidInputError("m must be >= 1")
    if formula not in DIM_FORMULAS:
        raise InvalidInputError(f"formula must be one of {DIM_FORMULAS}")
    kind = ModelKind(kind)
    dim = m * (m - 1) + m * kind.params_per_state + 1
    if formula == "table2" and kind is ModelKind.LINEAR_AR:
        dim -= 1
    return dim


def penalty(n: int, m: int, kind: ModelKind, formula: str = "stated") -> float:
    """BIC penalty (log n)/2 times the model dimension."""
    if n < 2:
        raise InvalidInputError("penalty requires n >= 2")
    return 0.5 * float(np.log(n)) * model_dimension(m, kind, formula)


def chi2_quantile(df: int, alpha: float, tol: float = 1e-8) -> float:
    """Upper-tail critical value x with P(chi2_df <= x) = 1 - alpha.

    Computed by bisection on the regularized lower incomplete gamma function.
    """
    if df < 1:
        raise InvalidInputError("df must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must lie strictly between 0 and 1")
    target = 1.0 - alpha
    lo, hi = 0.0, max(8.0 * df, 16.0)
    while gammainc(df / 2.0, hi / 2.0) < target:
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gammainc(df / 2.0, mid / 2.0) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class SelectionRow:
    m: int
    negloglik: float
    pen: float
    criterion: float
    fit: FitResult | None
    failed: bool = False
    error: str = ""


@dataclass(frozen=True)
class SelectionResult:
    """Per-candidate criterion table and the chosen state count."""

    rows: tuple[SelectionRow, ...]
    m_hat: int


@dataclass(frozen=True)
class LrtResult:
    """Likelihood-ratio verdict for zero slopes against the linear family."""

    stat: float
    df: int
    alpha: float
    critical: float
    reject: bool
    fit_null: FitResult | None = None
    fit_alt: FitResult | None = None


def _pick_m_hat(ms: list[int], criteria: list[float]) -> int:
    best = min(criteria)
    for m, c in sorted(zip(ms, criteria)):
        if c == best:
            return m
    raise RegimeSwitchError("unreachable: empty criterion table")


def best_fit(
    series: ObservationSeries,
    cfg: SaemConfig,
    restarts: int = 5,
    polish_iters: int = 100,
    extra_inits: tuple[ModelSpec, ...] = (),
) -> FitResult:
    """Best-of-restarts fit: seeded SAEM runs, optional exact-EM refinement, max log-likelihood.

    The first restart uses the config's own init; later restarts draw random
    starts under distinct seeds.  Each candidate is refined with monotone EM
    when ``polish_iters`` is positive, so the returned log-likelihood is a
    (local) maximum rather than a stochastic iterate.
    """
    if restarts < 1:
        raise InvalidInputError("restarts must be >= 1")
    configs = [replace(cfg, seed=cfg.seed)]
    for r in range(1, restarts):
        configs.append(replace(cfg, init="random", seed=cfg.seed + 7919 * r))
    for k, spec0 in enumerate(extra_inits):
        configs.append(replace(cfg, init=spec0, seed=cfg.seed + 104729 + k))

    def run(one_cfg: SaemConfig) -> FitResult | Exception:
        try:
            fit = saem_fit(series, one_cfg)
            if polish_iters > 0:
                polish_cfg = replace(one_cfg, init=fit.spec, iterations=polish_iters, burn_in=None)
                fit = em_fit(series, polish_cfg)
            return fit
        except RegimeSwitchError as exc:  # a single bad restart should not sink the rest
            return exc

    outcomes = _map_jobs(run, configs)
    fits = [f for f in outcomes if isinstance(f, FitResult)]
    if not fits:
        raise next(f for f in outcomes if isinstance(f, Exception))
    return max(fits, key=lambda f: f.loglik)


def select_states(
    series: ObservationSeries,
    m_max: int,
    cfg_template: SaemConfig,
    restarts: int = 5,
    dim_formula: str = "stated",
    polish_iters: int = 100,
    candidates=None,
) -> SelectionResult:
    """Fit every candidate state count and minimize negative log-likelihood plus penalty.

    Ties are broken toward the smallest state count.  Per-candidate failures
    are recorded as failed rows and skipped by the minimization; if every
    candidate fails the error of the smallest one is re-raised.
    """
    if m_max < 1:
        raise InvalidInputError("m_max must be >= 1")
    ms = list(candidates) if candidates is not None else list(range(1, m_max + 1))
    rows: list[SelectionRow] = []
    for m in ms:
        pen = penalty(series.n, m, cfg_template.kind, dim_formula)
        try:
            fit = best_fit(
                series,
                replace(cfg_template, m=m, seed=cfg_template.seed + 1009 * m),
                restarts=restarts,
                polish_iters=polish_iters,
            )
        except RegimeSwitchError as exc:
            rows.append(SelectionRow(m, np.nan, pen, np.inf, None, failed=True, error=str(exc)))
            continue
        rows.append(SelectionRow(m, -fit.loglik, pen, -fit.loglik + pen, fit))
    ok = [r for r in rows if not r.failed]
    if not ok:
        raise RegimeSwitchError(f"every candidate fit failed; first error: {rows[0].error}")
    m_hat = _pick_m_hat([r.m for r in ok], [r.criterion for r in ok])
    return SelectionResult(rows=tuple(rows), m_hat=m_hat)


def _as_linear(spec: ModelSpec) -> ModelSpec:
    """Reinterpret a constant-mean model inside the linear family (slopes stay zero)."""
    return ModelSpec(m=spec.m, kind=ModelKind.LINEAR_AR, theta=spec.theta, sigma2=spec.sigma2, a=spec.a)


def lrt_test(
    series: ObservationSeries,
    m: int,
    alpha: float,
    cfg_template: SaemConfig,
    restarts: int = 3,
    polish_iters: int = 200,
) -> LrtResult:
    """Test all slopes zero against the linear family with a shared state count.

    Both hypotheses are fitted with restarts; the alternative additionally
    restarts from the null optimum embedded in the linear family, which keeps
    the statistic nonnegative up to optimizer noise.  Rejects when
    2 * (loglik_alt - loglik_null) reaches the chi-squared critical value with
    one degree of freedom per state.
    """
    if m < 1:
        raise InvalidInputError("m must be >= 1")
    null_cfg = replace(cfg_template, m=m, kind=ModelKind.HMM, init="kmeans")
    try:
        fit_null = best_fit(series, null_cfg, restarts=restarts, polish_iters=polish_iters)
    except RegimeSwitchError as exc:
        raise type(exc)(f"null-hypothesis fit failed: {exc}") from exc
    alt_cfg = replace(cfg_template, m=m, kind=ModelKind.LINEAR_AR, init="kmeans")
    try:
        fit_alt = best_fit(
            series,
            alt_cfg,
            restarts=restarts,
            polish_iters=polish_iters,
            extra_inits=(_as_linear(fit_null.spec),),
        )
    except RegimeSwitchError as exc:
        raise type(exc)(f"alternative fit failed: {exc}") from exc
    stat = 2.0 * (fit_alt.loglik - fit_null.loglik)
    if stat < -NESTEDNESS_TOL:
        raise NumericalError(
            f"alternative fit fell {-stat:.3f} below the nested null fit; optimization failed"
        )
    critical = chi2_quantile(m, alpha)
    return LrtResult(
        stat=float(stat),
        df=m,
        alpha=alpha,
        critical=critical,
        reject=bool(stat >= critical),
        fit_null=fit_null,
        fit_alt=fit_alt,
    )
