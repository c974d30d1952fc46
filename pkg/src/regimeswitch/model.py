"""Model representation, validity checks, exact simulation, and canonical state order.

A Markov-regime autoregression is a pair of processes (X_n, Y_n): X_n is a
Markov chain on {0, ..., m-1} with row-stochastic transition matrix, and

    Y_n = slope[X_n] * Y_{n-1} + intercept[X_n] + sigma * eps_n,

with eps_n i.i.d. standard normal.  Setting every slope to zero gives the
hidden Markov model with constant regime means.  State labels are 0-based
throughout the package.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidInputError, NumericalError

ROW_SUM_TOL = 1e-12
DEFAULT_DELTA = 1e-6


class ModelKind(str, enum.Enum):
    """Which regime family the per-state parameters describe."""

    HMM = "hmm"              # constant regime means: slope fixed at zero
    LINEAR_AR = "linear_ar"  # per-state linear autoregression

    @property
    def params_per_state(self) -> int:
        """Number of regression coefficients per state (1 constant, 2 linear)."""
        return 1 if self is ModelKind.HMM else 2


def _readonly(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelSpec:
    """Immutable parameter set (theta, sigma2, transition matrix) of one model.

    Parameters
    ----------
    m : int
        Number of hidden states, at least 1.
    kind : ModelKind
        Regime family; ``ModelKind.HMM`` forces every slope to zero.
    theta : array, shape (m, 2)
        Per-state pair ``(slope, intercept)``.
    sigma2 : float
        Innovation variance, strictly positive and shared across states.
    a : array, shape (m, m)
        Row-stochastic transition matrix; rows must sum to 1 within 1e-12.
    """

    m: int
    kind: ModelKind
    theta: np.ndarray
    sigma2: float
    a: np.ndarray

    def __post_init__(self):
        if not isinstance(self.m, (int, np.integer)) or self.m < 1:
            raise InvalidInputError(f"m must be an integer >= 1, got {self.m!r}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "kind", ModelKind(self.kind))
        theta = _readonly(self.theta)
        if theta.shape != (self.m, 2) or not np.all(np.isfinite(theta)):
            raise InvalidInputError(
                f"theta must be a finite ({self.m}, 2) array of (slope, intercept) rows"
            )
        if self.kind is ModelKind.HMM and np.any(theta[:, 0] != 0.0):
            raise InvalidInputError("hmm kind requires every slope to be exactly 0")
        object.__setattr__(self, "theta", theta)
        sigma2 = float(self.sigma2)
        if not np.isfinite(sigma2) or sigma2 <= 0.0:
            raise InvalidInputError(f"sigma2 must be a finite positive number, got {sigma2!r}")
        object.__setattr__(self, "sigma2", sigma2)
        a = _readonly(self.a)
        if a.shape != (self.m, self.m) or not np.all(np.isfinite(a)):
            raise InvalidInputError(f"a must be a finite ({self.m}, {self.m}) matrix")
        if np.any(a < 0.0):
            raise InvalidInputError("transition matrix entries must be nonnegative")
        if np.any(np.abs(a.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise InvalidInputError("transition matrix rows must sum to 1 within 1e-12")
        object.__setattr__(self, "a", a)

    @property
    def slopes(self) -> np.ndarray:
        return self.theta[:, 0]

    @property
    def intercepts(self) -> np.ndarray:
        return self.theta[:, 1]

    def regime_means(self, y_prev) -> np.ndarray:
        """Conditional means f_i(y_prev) for every state, vectorized over y_prev."""
        y_prev = np.asarray(y_prev, dtype=float)
        return y_prev[..., None] * self.slopes + self.intercepts


@dataclass(frozen=True)
class ObservationSeries:
    """Observed series: conditioning initial value y0 plus observations y_1..y_n."""

    y0: float
    y: np.ndarray

    def __post_init__(self):
        y0 = float(self.y0)
        y = _readonly(self.y)
        if y.ndim != 1 or y.size < 1:
            raise InvalidInputError("y must be a one-dimensional array with at least one value")
        if not (np.isfinite(y0) and np.all(np.isfinite(y))):
            raise InvalidInputError("series values must all be finite")
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.size

    @cached_property
    def lagged(self) -> np.ndarray:
        """Previous observation for each step: (y0, y_1, ..., y_{n-1})."""
        return _readonly(np.concatenate(([self.y0], self.y[:-1])))


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of the positivity and stability checks on a model.

    ``positivity_holds`` is true when every transition probability is at least
    delta.  ``stability_exponent`` is sum_i mu_i * log|slope_i| under the
    stationary law mu; a zero slope contributes -inf, so constant regimes are
    always stable.  ``stability_holds`` is true exactly when the exponent is
    negative.
    """

    positivity_holds: bool
    min_transition: float
    stability_exponent: float
    stability_holds: bool
    stationary: np.ndarray


def validate_path(path, m: int, n: int | None = None) -> np.ndarray:
    """Validate a hidden-state path: integers in [0, m), optional length check."""
    x = np.asarray(path)
    if x.ndim != 1 or x.size < 1 or not np.issubdtype(x.dtype, np.integer):
        raise InvalidInputError("path must be a one-dimensional integer array")
    if n is not None and x.size != n:
        raise InvalidInputError(f"path length {x.size} does not match series length {n}")
    if x.min() < 0 or x.max() >= m:
        raise InvalidInputError(f"path states must lie in [0, {m})")
    return x.astype(np.int64)


def stationary_distribution(a, tol: float = 1e-10) -> np.ndarray:
    """Stationary law mu of a row-stochastic matrix, mu @ a = mu, sum(mu) = 1.

    Solves the linear stationarity system directly and verifies the residual;
    raises NumericalError when the system is singular beyond tolerance.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError("transition matrix must be square")
    if np.any(a < 0.0) or np.any(np.abs(a.sum(axis=1) - 1.0) > ROW_SUM_TOL):
        raise InvalidInputError("matrix is not row-stochastic")
    m = a.shape[0]
    if m == 1:
        return np.ones(1)
    # Replace one redundant balance equation with the normalization constraint.
    system = a.T - np.eye(m)
    system[-1, :] = 1.0
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    try:
        mu = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError:
        mu = _power_iteration(a)
    residual = np.max(np.abs(mu @ a - mu))
    if residual > tol or np.any(mu <= 0.0):
        mu = _power_iteration(a)
        residual = np.max(np.abs(mu @ a - mu))
        if residual > tol or np.any(mu < 0.0):
            raise NumericalError(f"stationary distribution did not converge (residual {residual:.3e})")
    return mu / mu.sum()


def _power_iteration(a, iters: int = 100_000, tol: float = 1e-13) -> np.ndarray:
    mu = np.full(a.shape[0], 1.0 / a.shape[0])
    for _ in range(iters):
        nxt = mu @ a
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - mu)) < tol:
            return nxt
        mu = nxt
    return mu


def check_conditions(spec: ModelSpec, delta: float = DEFAULT_DELTA) -> ConditionReport:
    """Report positivity of the transition matrix and stability of the regimes."""
    mu = stationary_distribution(spec.a)
    min_entry = float(spec.a.min())
    with np.errstate(divide="ignore"):
        log_slopes = np.log(np.abs(spec.slopes))
    terms = np.where(mu > 0.0, mu * log_slopes, 0.0)
    exponent = float(terms.sum())
    return ConditionReport(
        positivity_holds=bool(min_entry >= delta),
        min_transition=min_entry,
        stability_exponent=exponent,
        stability_holds=bool(exponent < 0.0),
        stationary=_readonly(mu),
    )


def _draw_categorical(p: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(p)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, p.size - 1)


def simulate(
    spec: ModelSpec,
    n: int,
    y0: float = 0.0,
    x1_law="stationary",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ObservationSeries]:
    """Simulate the joint chain for n steps; fully deterministic given the generator.

    ``x1_law`` is either the string ``"stationary"`` (first state drawn from the
    stationary law of the transition matrix) or an integer fixing the first state.
    Returns the hidden path and the observation series.
    """
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    if rng is None:
        raise InvalidInputError("simulate requires an explicit numpy Generator")
    x = np.empty(n, dtype=np.int64)
    if isinstance(x1_law, str):
        if x1_law != "stationary":
            raise InvalidInputError(f"unknown x1 law {x1_law!r}")
        mu = stationary_distribution(spec.a)
        x[0] = _draw_categorical(mu, rng)
    else:
        first = int(x1_law)
        if not 0 <= first < spec.m:
            raise InvalidInputError(f"fixed first state must lie in [0, {spec.m})")
        x[0] = first
    for k in range(1, n):
        x[k] = _draw_categorical(spec.a[x[k - 1]], rng)
    eps = rng.standard_normal(n)
    sigma = np.sqrt(spec.sigma2)
    y = np.empty(n)
    prev = float(y0)
    for k in range(n):
        slope, intercept = spec.theta[x[k]]
        prev = slope * prev + intercept + sigma * eps[k]
        y[k] = prev
    return x, ObservationSeries(y0=y0, y=y)


def canonicalize(spec: ModelSpec) -> tuple[ModelSpec, np.ndarray]:
    """Permute states into canonical order; the induced law of Y is unchanged.

    States are sorted by ascending intercept, ties broken by ascending slope
    and then by original index.  Returns the relabeled spec and the permutation
    array p with p[old] = new.
    """
    order = np.lexsort((np.arange(spec.m), spec.theta[:, 0], spec.theta[:, 1]))
    perm = np.empty(spec.m, dtype=np.int64)
    perm[order] = np.arange(spec.m)
    new = ModelSpec(
        m=spec.m,
        kind=spec.kind,
        theta=spec.theta[order],
        sigma2=spec.sigma2,
        a=spec.a[np.ix_(order, order)],
    )
    return new, perm
