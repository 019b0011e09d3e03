"""Edge statistics: the rescaled extreme point process and its Poisson limit.

Particles (or eigenvalues) near the edge E_N are recentred and rescaled
through u = V'(E_N) (x - E_N); counts of the resulting atoms on windows
of finite exp(-u) mass are compared against Poisson laws, and the
no-exceedance probability against exp(-1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .equilibrium import EquilibriumMeasure, solve_edge
from .errors import ContractViolation
from .model import GasParameters, ParticleConfiguration
from .sampling import RngStream

__all__ = [
    "EdgePointProcess",
    "edge_process",
    "window_mass",
    "edge_window_counts",
    "poisson_count_test",
    "PoissonFitReport",
    "no_exceedance_probability",
]


@dataclass(frozen=True)
class EdgePointProcess:
    """Atoms V'(E_N) (x_j - E_N) for one configuration."""

    atoms: np.ndarray = field(repr=False)
    e_n: float
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ContractViolation("edge rescaling needs V'(E_N) > 0")

    def count(self, lo: float, hi: float = math.inf) -> int:
        return int(np.count_nonzero((self.atoms > lo) & (self.atoms < hi)))


def edge_process(
    config: ParticleConfiguration, params: GasParameters, eq: EquilibriumMeasure
) -> EdgePointProcess:
    """Rescaled point process of one configuration around the solved edge."""
    e_n = solve_edge(params, eq)
    scale = float(params.potential.grad(e_n))
    atoms = scale * (config.positions - e_n)
    return EdgePointProcess(atoms=atoms, e_n=e_n, scale=scale)


def window_mass(lo: float, hi: float = math.inf) -> float:
    """int_lo^hi exp(-u) du, the limit intensity mass of a window."""
    if hi <= lo:
        raise ContractViolation("window must satisfy lo < hi")
    upper = 0.0 if math.isinf(hi) else math.exp(-hi)
    return math.exp(-lo) - upper


def edge_window_counts(
    model,
    n: int,
    windows: Sequence[tuple[float, float]],
    replicas: int,
    rng: RngStream,
    eq: EquilibriumMeasure,
    workers: int = 1,
) -> dict:
    """Per-replica atom counts on rescaled windows, via threshold counting.

    A window (a, b) in atom coordinates is the particle interval
    (E + a/V'(E), E + b/V'(E)); its count is the difference of two
    exceedance counts evaluated on the same realization, so one streaming
    pass with all thresholds serves every window consistently.
    """
    from .experiments import _map_chunks

    params = model.gas_parameters(n)
    e_n = solve_edge(params, eq)
    scale = float(params.potential.grad(e_n))
    thresholds = []
    for lo, hi in windows:
        thresholds.append(e_n + lo / scale)
        if not math.isinf(hi):
            thresholds.append(e_n + hi / scale)
    uniq = sorted(set(thresholds))
    index = {t: i for i, t in enumerate(uniq)}

    chunks = _map_chunks(
        lambda i, size: model.exceed_counts(n, uniq, size, rng.substream(i)),
        replicas,
        workers,
    )
    exceed = np.concatenate(chunks, axis=1)
    out = {"e_n": e_n, "scale": scale, "windows": {}}
    for lo, hi in windows:
        lo_t = index[e_n + lo / scale]
        if math.isinf(hi):
            counts = exceed[lo_t]
        else:
            counts = exceed[lo_t] - exceed[index[e_n + hi / scale]]
        out["windows"][(lo, hi)] = counts
    return out


@dataclass(frozen=True)
class PoissonFitReport:
    statistic: float
    dof: int
    p_value: float
    observed: np.ndarray
    expected: np.ndarray
    mean_count: float
    set_mass: float
    n_replicas: int


def poisson_count_test(replica_counts, set_mass: float) -> PoissonFitReport:
    """Chi-square goodness of fit of window counts against Poisson(set_mass).

    Bins 0, 1, 2, ... are pooled from the right until every expected cell
    is at least 5. Needs at least 200 replicas for nontrivial power.
    set_mass = 0 degenerates: all-zero counts pass with p = 1.
    """
    counts = np.asarray(replica_counts, dtype=np.int64)
    if counts.size < 200:
        raise ContractViolation("poisson_count_test needs at least 200 replicas")
    if set_mass < 0:
        raise ContractViolation("set_mass must be nonnegative")
    m = counts.size
    if set_mass == 0.0:
        if np.any(counts != 0):
            return PoissonFitReport(math.inf, 0, 0.0, np.array([m]), np.array([m]),
                                    float(counts.mean()), 0.0, m)
        return PoissonFitReport(0.0, 0, 1.0, np.array([m]), np.array([m]), 0.0, 0.0, m)
    kmax = int(counts.max())
    # extend the support until the pooled tail expectation is >= 5
    k = kmax + 1
    while m * stats.poisson.sf(k - 1, set_mass) < 5.0 and k > 1:
        k -= 1
    pmf = stats.poisson.pmf(np.arange(k), set_mass)
    expected = np.concatenate([m * pmf, [m * stats.poisson.sf(k - 1, set_mass)]])
    observed = np.concatenate([
        np.bincount(np.minimum(counts, k), minlength=k + 1)[:k],
        [int(np.count_nonzero(counts >= k))],
    ])
    # pool any remaining thin cells from the left edge upward
    keep = expected >= 5.0
    if not keep.all():
        obs_pooled, exp_pooled = [], []
        acc_o = acc_e = 0.0
        for o, e in zip(observed, expected):
            acc_o += o
            acc_e += e
            if acc_e >= 5.0:
                obs_pooled.append(acc_o)
                exp_pooled.append(acc_e)
                acc_o = acc_e = 0.0
        if acc_e > 0:
            obs_pooled[-1] += acc_o
            exp_pooled[-1] += acc_e
        observed = np.array(obs_pooled)
        expected = np.array(exp_pooled)
    dof = max(observed.size - 1, 1)
    statistic = float(np.sum((observed - expected) ** 2 / expected))
    p_value = float(stats.chi2.sf(statistic, dof))
    return PoissonFitReport(statistic, dof, p_value, observed, expected,
                            float(counts.mean()), set_mass, m)


def no_exceedance_probability(
    model,
    n: int,
    replicas: int,
    rng: RngStream,
    eq: EquilibriumMeasure,
    workers: int = 1,
) -> dict:
    """Fraction of replicas with every particle below E_N, versus exp(-1)."""
    from .experiments import _map_chunks, wilson_interval

    if replicas <= 0:
        raise ContractViolation("no_exceedance_probability needs replicas >= 1")
    params = model.gas_parameters(n)
    e_n = solve_edge(params, eq)
    if hasattr(model, "exceed_counts"):
        chunks = _map_chunks(
            lambda i, size: model.exceed_counts(n, [e_n], size, rng.substream(i))[0],
            replicas,
            workers,
        )
        exceed = np.concatenate(chunks)
        k = int(np.count_nonzero(exceed == 0))
    else:
        chunks = _map_chunks(
            lambda i, size: model.x_max_samples(n, size, rng.substream(i)),
            replicas,
            workers,
        )
        k = int(np.count_nonzero(np.concatenate(chunks) < e_n))
    p = k / replicas
    lo, hi = wilson_interval(k, replicas)
    return {
        "probability": p,
        "ci_lo": lo,
        "ci_hi": hi,
        "e_n": e_n,
        "target": math.exp(-1.0),
        "replicas": replicas,
    }
