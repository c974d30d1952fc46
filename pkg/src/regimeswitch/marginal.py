"""Conjugate-prior marginal likelihoods and the penalized-selection bound ingredients.

With a normal prior on the stacked regression coefficients (scaled by the
noise variance), an inverse-gamma prior on the variance, and Dirichlet priors
on the transition rows, both the observation marginal given a hidden path and
the marginal of the path itself have closed forms.  Together they bound the
likelihood ratio that drives the overestimation analysis of the penalized
state-count selector.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import gammaln

from .errors import InvalidInputError, SizeGuardError
from .likelihood import _logsumexp, forward_filter
from .model import ModelKind, ModelSpec, ObservationSeries, validate_path

LOG_PI = float(np.log(np.pi))

EXPONENTS = ("n-plus-v0", "one-plus-v0")
MODES = ("enumerate", "pathwise")
BOUND_MAX_PATHS = 10**5


@dataclass(frozen=True)
class Priors:
    """Conjugate prior hyperparameters.

    ``sigma`` is the symmetric positive-definite scale of the coefficient
    prior (coefficients are N(0, sigma2 * sigma)); ``u0`` and ``v0`` seed the
    inverse-gamma prior IG(v0/2, u0/2) on the variance; ``e`` holds the
    Dirichlet parameters of each transition row and defaults to 1/2 per entry.
    """

    sigma: np.ndarray
    u0: float = 1.0
    v0: float = 1.0
    e: np.ndarray | None = None

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise InvalidInputError("sigma must be a square matrix")
        if not np.allclose(sigma, sigma.T, atol=1e-12):
            raise InvalidInputError("sigma must be symmetric")
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as exc:
            raise InvalidInputError("sigma must be positive definite") from exc
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        if not (self.u0 > 0.0 and self.v0 > 0.0):
            raise InvalidInputError("u0 and v0 must be positive")
        if self.e is not None:
            e = np.array(self.e, dtype=float)
            if e.ndim != 1 or np.any(e <= 0.0):
                raise InvalidInputError("e must be a vector of positive Dirichlet parameters")
            e.setflags(write=False)
            object.__setattr__(self, "e", e)

    @classmethod
    def default(cls, m: int, kind: ModelKind, scale: float = 10.0, u0: float = 1.0, v0: float = 1.0) -> "Priors":
        """Weakly informative defaults: sigma = scale * identity, Dirichlet(1/2)."""
        p = m * ModelKind(kind).params_per_state
        return cls(sigma=scale * np.eye(p), u0=u0, v0=v0)

    def dirichlet_params(self, m: int) -> np.ndarray:
        if self.e is None:
            return np.full(m, 0.5)
        if self.e.size != m:
            raise InvalidInputError(f"e has length {self.e.size}, expected {m}")
        return self.e


def build_design_matrix(path, series: ObservationSeries, kind: ModelKind, m: int) -> np.ndarray:
    """Block-indicator design: row k is nonzero only in the block of state x_k.

    The per-state block is ``(1,)`` for the constant family and
    ``(1, y_{k-1})`` for the linear family, so column order inside each block
    is (intercept, lag).  Multiplying by the stacked coefficient vector
    reproduces the conditional means along the path.
    """
    kind = ModelKind(kind)
    x = validate_path(path, m, series.n)
    n = series.n
    d = kind.params_per_state
    z = np.zeros((n, m * d))
    rows = np.arange(n)
    z[rows, x * d] = 1.0
    if kind is ModelKind.LINEAR_AR:
        z[rows, x * d + 1] = series.lagged
    return z


def flatten_theta(spec: ModelSpec) -> np.ndarray:
    """Stack per-state coefficients in design-matrix column order (intercept, slope)."""
    if spec.kind is ModelKind.HMM:
        return spec.intercepts.copy()
    return spec.theta[:, ::-1].ravel()


def _gaussian_pieces(series: ObservationSeries, path, priors: Priors, kind: ModelKind, m: int):
    """Shared factorization: log det V, quadratic form y' V^-1 y, log det sigma.

    V = I + Z sigma Z' so that y' V^-1 y equals the residual quadratic form
    y' (I - Z M Z') y and det V = det sigma / det M, with M^-1 = Z'Z + sigma^-1.
    Everything is computed through Cholesky solves; no explicit inverses.
    """
    z = build_design_matrix(path, series, kind, m)
    p = z.shape[1]
    if priors.sigma.shape[0] != p:
        raise InvalidInputError(f"sigma has size {priors.sigma.shape[0]}, expected {p}")
    v = np.eye(series.n) + z @ priors.sigma @ z.T
    factor = cho_factor(v, lower=True)
    logdet_v = 2.0 * float(np.log(np.diag(factor[0])).sum())
    quad = float(series.y @ cho_solve(factor, series.y))
    sig_factor = np.linalg.cholesky(priors.sigma)
    logdet_sigma = 2.0 * float(np.log(np.diag(sig_factor)).sum())
    return logdet_v, quad, logdet_sigma


def log_marginal_observations(series: ObservationSeries, path, priors: Priors, kind: ModelKind, m: int) -> float:
    """Closed-form log of the observation marginal given the hidden path.

    Integrating the Gaussian likelihood against the coefficient and variance
    priors gives

        (v0/2) log u0 - (1/2) log det V + log G((n+v0)/2) - log G(v0/2)
        - (n/2) log pi - ((n+v0)/2) log(u0 + y' V^-1 y),

    where V = I + Z sigma Z' and G is the gamma function.
    """
    n = series.n
    logdet_v, quad, _ = _gaussian_pieces(series, path, priors, kind, m)
    return float(
        0.5 * priors.v0 * np.log(priors.u0)
        - 0.5 * logdet_v
        + gammaln(0.5 * (n + priors.v0))
        - gammaln(0.5 * priors.v0)
        - 0.5 * n * LOG_PI
        - 0.5 * (n + priors.v0) * np.log(priors.u0 + quad)
    )


def log_marginal_path(path, m: int, e=None) -> float:
    """Log marginal probability of the path's continuation given its first state.

    Each transition row integrates against its Dirichlet prior, giving a
    product over rows i of

        G(sum e) / G(N_i + sum e) * prod_j G(N_ij + e_j) / G(e_j)

    with N_ij the transition-pair counts; exponentiated over all continuations
    of a fixed first state this sums to one.
    """
    x = validate_path(path, m)
    e = np.full(m, 0.5) if e is None else np.asarray(e, dtype=float)
    if e.shape != (m,) or np.any(e <= 0.0):
        raise InvalidInputError("e must be a length-m vector of positive parameters")
    counts = np.zeros((m, m))
    if x.size > 1:
        np.add.at(counts, (x[:-1], x[1:]), 1.0)
    row_tot = counts.sum(axis=1)
    e_tot = e.sum()
    value = (
        gammaln(e_tot) * m
        - gammaln(row_tot + e_tot).sum()
        + gammaln(counts + e).sum()
        - gammaln(e).sum() * m
    )
    return float(value)


def path_bound_correction(n: int, m: int) -> float:
    """Correction term accompanying the (m(m-1)/2) log n leading penalty; needs n >= 4."""
    if n < 4:
        raise InvalidInputError("the correction term is defined for n >= 4")
    if m < 1:
        raise InvalidInputError("m must be >= 1")
    return float(-m * (gammaln(0.5 * m) - gammaln(0.5) - m * (m - 1) / (4.0 * n) + 1.0 / (12.0 * n)))


def _log_marginal_joint(series, path, priors, kind, m) -> float:
    return log_marginal_observations(series, path, priors, kind, m) + log_marginal_path(
        path, m, priors.dirichlet_params(m)
    )


def marginal_ratio_bound(
    series: ObservationSeries,
    path,
    priors: Priors,
    spec: ModelSpec,
    mode: str = "enumerate",
    exponent: str = "n-plus-v0",
    max_paths: int = BOUND_MAX_PATHS,
) -> tuple[float, float]:
    """Both sides of the likelihood-to-marginal ratio bound; returns (lhs, rhs).

    lhs is log p(y | y0, x1, psi) - log Q(y | x1), the likelihood with the
    first state pinned at the path's first state against the prior-averaged
    marginal.  In ``enumerate`` mode the marginal sums over every continuation
    of x1 (guarded by ``max_paths``); ``pathwise`` mode keeps only the given
    path's term, which understates the marginal and therefore overstates lhs.

    rhs assembles the closed-form bound with the given path's design matrix.
    The log(u0 + y'Py) coefficient follows the integrated marginal,
    (n + v0)/2, unless ``exponent="one-plus-v0"`` selects (1 + v0)/2.
    """
    if mode not in MODES:
        raise InvalidInputError(f"mode must be one of {MODES}")
    if exponent not in EXPONENTS:
        raise InvalidInputError(f"exponent must be one of {EXPONENTS}")
    m, n = spec.m, series.n
    x = validate_path(path, m, n)
    one_hot = np.zeros(m)
    one_hot[x[0]] = 1.0
    loglik_given_x1 = forward_filter(spec, series, initial=one_hot).loglik

    if mode == "enumerate":
        if m ** (n - 1) > max_paths:
            raise SizeGuardError(f"m**(n-1) = {m**(n-1)} exceeds the enumeration guard {max_paths}")
        terms = []
        for tail in itertools.product(range(m), repeat=n - 1):
            candidate = np.concatenate(([x[0]], np.asarray(tail, dtype=np.int64)))
            terms.append(_log_marginal_joint(series, candidate, priors, spec.kind, m))
        log_q = _logsumexp(np.asarray(terms))
    else:
        log_q = _log_marginal_joint(series, x, priors, spec.kind, m)
    lhs = loglik_given_x1 - log_q

    logdet_v, quad, logdet_sigma = _gaussian_pieces(series, x, priors, spec.kind, m)
    logdet_m = logdet_sigma - logdet_v
    coef = 0.5 * (n + priors.v0) if exponent == "n-plus-v0" else 0.5 * (1.0 + priors.v0)
    rhs = (
        0.5 * m * (m - 1) * np.log(n)
        + path_bound_correction(n, m)
        + gammaln(0.5 * priors.u0)
        + 0.5 * logdet_sigma
        + coef * np.log(priors.u0 + quad)
        - 0.5 * n
        - 0.5 * logdet_m
        - gammaln(0.5 * (n + priors.v0))
    )
    return float(lhs), float(rhs)
