import numpy as np
import pytest

import regimeswitch as rs


def hmm_scenario() -> rs.ModelSpec:
    """Three well-separated constant regimes with a sticky diagonal-0.9 chain."""
    return rs.ModelSpec(
        m=3,
        kind=rs.ModelKind.HMM,
        theta=[[0.0, -2.0], [0.0, 1.0], [0.0, 4.0]],
        sigma2=1.5,
        a=[[0.9, 0.05, 0.05], [0.05, 0.9, 0.05], [0.05, 0.05, 0.9]],
    )


def ar_scenario_selection() -> rs.ModelSpec:
    """Two linear regimes used for the state-count selection study."""
    return rs.ModelSpec(
        m=2,
        kind=rs.ModelKind.LINEAR_AR,
        theta=[[1.0, -1.0], [-0.5, 0.5]],
        sigma2=1.5,
        a=[[0.9, 0.1], [0.1, 0.9]],
    )


def ar_scenario_slopes() -> rs.ModelSpec:
    """Two linear regimes with strong slopes, used for the slope test."""
    return rs.ModelSpec(
        m=2,
        kind=rs.ModelKind.LINEAR_AR,
        theta=[[1.0, -2.0], [-0.7, 1.08]],
        sigma2=1.5,
        a=[[0.9, 0.1], [0.1, 0.9]],
    )


def random_spec(rng: np.random.Generator, m: int, kind: rs.ModelKind) -> rs.ModelSpec:
    """A random valid model with moderate noise and a strictly positive chain."""
    kind = rs.ModelKind(kind)
    raw = rng.uniform(0.2, 1.0, size=(m, m))
    raw += np.diag(rng.uniform(1.0, 4.0, size=m))
    a = raw / raw.sum(axis=1, keepdims=True)
    if kind is rs.ModelKind.HMM:
        slopes = np.zeros(m)
    else:
        slopes = rng.uniform(-0.85, 0.85, size=m)
    intercepts = rng.normal(0.0, 2.0, size=m)
    return rs.ModelSpec(
        m=m,
        kind=kind,
        theta=np.column_stack([slopes, intercepts]),
        sigma2=float(rng.uniform(0.4, 2.5)),
        a=a,
    )


def random_instance(seed: int, m: int, n: int, kind=rs.ModelKind.LINEAR_AR):
    """Random (spec, path, series) triple simulated from the spec itself."""
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, m, kind)
    path, series = rs.simulate(spec, n, y0=float(rng.normal()), rng=rng)
    return spec, path, series


@pytest.fixture(scope="session")
def hmm_data():
    """One fixed draw from the three-state constant-regime scenario."""
    rng = np.random.default_rng(20240521)
    path, series = rs.simulate(hmm_scenario(), 500, y0=0.0, rng=rng)
    return hmm_scenario(), path, series
