"""Random objects: chi variates, tridiagonal ensembles, Metropolis chains.

Every sampler is a pure function of its parameters and an RngStream;
replicas that must be independent take distinct stream ids. Streams are
counter-based (Philox keyed on (seed, stream_id)), so parallel replicas
reproduce independently of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .errors import ContractViolation, ConvergenceError
from .model import (
    GasParameters,
    ParticleConfiguration,
    PotentialSpec,
    configuration_energy,
    interaction_eval,
)
from .spectral import TridiagonalMatrix

__all__ = [
    "RngStream",
    "EntryDistribution",
    "standard_gaussian_entries",
    "chi_scaled_entries",
    "custom_entries",
    "chi_density",
    "sample_chi",
    "dumitriu_edelman_thetas",
    "build_dumitriu_edelman",
    "build_toda_lax",
    "build_generic",
    "metropolis_acceptance",
    "mcmc_gas",
    "McmcStats",
    "iid_normalization",
    "iid_cdf",
    "iid_upper_tail",
    "iid_tail_exact",
    "iid_tail_log",
]

_MASK64 = (1 << 64) - 1
_SUBSTREAM_STRIDE = 1 << 20


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream identified by (seed, stream_id)."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = [self.seed & _MASK64, self.stream_id & _MASK64]
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, k: int) -> "RngStream":
        """Derived stream for worker chunk k; distinct for k < 2**20."""
        return RngStream(self.seed, self.stream_id * _SUBSTREAM_STRIDE + 1 + k)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise ContractViolation(f"expected RngStream or numpy Generator, got {type(rng)!r}")


# ---------------------------------------------------------------------------
# chi variates
# ---------------------------------------------------------------------------

def chi_density(theta: float, x):
    """Density 2^(1-theta/2)/Gamma(theta/2) * x^(theta-1) * exp(-x^2/2) on x>0."""
    if theta <= 0:
        raise ContractViolation(f"theta must be positive, got {theta}")
    x = np.asarray(x, dtype=float)
    logc = (1.0 - theta / 2.0) * math.log(2.0) - gammaln(theta / 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        logpdf = logc + (theta - 1.0) * np.log(np.where(x > 0, x, 1.0)) - x * x / 2.0
    out = np.where(x > 0, np.exp(logpdf), 0.0)
    return out if out.ndim else float(out)


def sample_chi(theta: float, rng, size=None):
    """Draw chi_theta variates as sqrt(2 G), G ~ Gamma(theta/2).

    The Gamma deviates come from the generator's rejection sampler, which
    is valid for every shape including theta/2 < 1 where the chi density
    blows up at the origin.
    """
    if theta <= 0:
        raise ContractViolation(f"theta must be positive, got {theta}")
    g = _as_generator(rng)
    draws = np.sqrt(2.0 * g.standard_gamma(theta / 2.0, size=size))
    return draws


# ---------------------------------------------------------------------------
# entry distributions and tridiagonal ensembles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntryDistribution:
    """Matrix-entry law with its declared Gaussian-tail constant c.

    c is the coefficient in -log P(|X| > x) = c x^2 + o(x^2). Builders
    validate c so that the assembled matrix sits in the class whose top
    eigenvalue obeys the quadratic deviation rate: diagonal c = 1/2,
    off-diagonal c = 1 (equivalently, sqrt(2) b has c = 1/2).
    """

    name: str
    tail_constant: float
    sampler: Callable[[np.random.Generator, tuple], np.ndarray] = field(repr=False)

    def sample(self, rng, size):
        return self.sampler(_as_generator(rng), size)


def standard_gaussian_entries() -> EntryDistribution:
    return EntryDistribution(
        "standard_gaussian", 0.5, lambda g, size: g.standard_normal(size)
    )


def chi_scaled_entries(theta: float, scale: float) -> EntryDistribution:
    """scale * chi_theta; tail constant 1/(2 scale^2)."""
    if theta <= 0 or scale <= 0:
        raise ContractViolation("chi_scaled_entries needs theta > 0 and scale > 0")
    return EntryDistribution(
        f"chi_scaled(theta={theta}, scale={scale})",
        1.0 / (2.0 * scale * scale),
        lambda g, size: scale * np.sqrt(2.0 * g.standard_gamma(theta / 2.0, size=size)),
    )


def custom_entries(name: str, tail_constant: float, sampler) -> EntryDistribution:
    return EntryDistribution(name, tail_constant, sampler)


def dumitriu_edelman_thetas(n: int, beta: float) -> np.ndarray:
    """Chi parameters beta*(N-i) for the off-diagonals, i = 1..N-1."""
    return beta * (n - np.arange(1, n, dtype=float))


def build_dumitriu_edelman(
    n: int, beta: float, rng, sqrt2_scaled: bool = True
) -> TridiagonalMatrix:
    """Tridiagonal model whose spectrum follows the log-gas at coupling beta.

    Diagonal entries are iid standard Gaussian; off-diagonal b_i is
    chi_{beta(N-i)} scaled by 1/sqrt(2) by default. The unscaled variant
    (sqrt2_scaled=False) is kept behind this flag for comparison: the
    two-particle check against direct quadrature of the joint density
    singles out the scaled convention. beta*(N-i) = 0 gives b_i = 0.
    """
    if n < 1:
        raise ContractViolation(f"n must be >= 1, got {n}")
    if beta < 0:
        raise ContractViolation(f"beta must be >= 0, got {beta}")
    g = _as_generator(rng)
    diag = g.standard_normal(n)
    if n == 1:
        return TridiagonalMatrix(diag, np.zeros(0), False)
    thetas = dumitriu_edelman_thetas(n, beta)
    off = np.sqrt(2.0 * g.standard_gamma(thetas / 2.0))
    if sqrt2_scaled:
        off = off / math.sqrt(2.0)
    return TridiagonalMatrix(diag, off, False)


def build_toda_lax(n: int, pressure: float, rng) -> TridiagonalMatrix:
    """Periodic tridiagonal model with sqrt(2) b_i ~ chi_{2P}, a_i Gaussian."""
    if n < 2:
        raise ContractViolation(f"periodic model needs n >= 2, got {n}")
    if not (0 < pressure < math.inf):
        raise ContractViolation(f"pressure must be finite positive, got {pressure}")
    return build_generic(
        n,
        standard_gaussian_entries(),
        chi_scaled_entries(2.0 * pressure, 1.0 / math.sqrt(2.0)),
        periodic=True,
        rng=rng,
    )


def build_generic(
    n: int,
    diag_dist: EntryDistribution,
    offdiag_dist: EntryDistribution,
    periodic: bool,
    rng,
) -> TridiagonalMatrix:
    """Independent-entry tridiagonal model with tail-constant validation."""
    if n < 1:
        raise ContractViolation(f"n must be >= 1, got {n}")
    if not math.isclose(diag_dist.tail_constant, 0.5, rel_tol=1e-9):
        raise ContractViolation(
            f"diagonal tail constant must be 1/2, got {diag_dist.tail_constant}"
            f" ({diag_dist.name})"
        )
    if not math.isclose(offdiag_dist.tail_constant, 1.0, rel_tol=1e-9):
        raise ContractViolation(
            "off-diagonal tail constant must be 1 (so sqrt(2) b has constant 1/2),"
            f" got {offdiag_dist.tail_constant} ({offdiag_dist.name})"
        )
    g = _as_generator(rng)
    diag = diag_dist.sample(g, n)
    m = n if periodic else n - 1
    off = offdiag_dist.sample(g, m) if m else np.zeros(0)
    return TridiagonalMatrix(diag, off, periodic)


# ---------------------------------------------------------------------------
# Metropolis sampling of the gas
# ---------------------------------------------------------------------------

def metropolis_acceptance(delta_energy: float) -> float:
    """min(1, exp(-delta)) acceptance probability of a symmetric proposal."""
    if delta_energy <= 0.0:
        return 1.0
    return math.exp(-delta_energy)


@dataclass
class McmcStats:
    acceptance_rate: float
    step_size: float
    sweeps: int
    final_energy: float


def _site_energy(params: GasParameters, positions: np.ndarray, i: int, xi: float) -> float:
    v = float(params.potential.value(xi))
    if params.n == 1:
        return v
    others = np.delete(positions, i)
    pair = interaction_eval(params.interaction, xi - others)
    if np.any(np.isinf(pair)):
        return math.inf
    return v + params.beta * float(np.sum(pair))


def mcmc_gas(
    params: GasParameters,
    steps: int,
    rng,
    step_size: Optional[float] = None,
    init: Optional[ParticleConfiguration] = None,
    burn_in: Optional[int] = None,
    collect_every: int = 0,
):
    """Single-site Metropolis random walk targeting the gas measure.

    steps counts post-burn-in sweeps (one proposal per particle each).
    The Gaussian proposal width is tuned during burn-in toward a 0.4
    acceptance rate, then frozen. Returns the final sorted configuration
    and chain statistics; with collect_every > 0, also an array of
    position snapshots taken every collect_every sweeps.

    Coinciding particles have +inf energy, so such proposals are simply
    rejected and every accepted state keeps finite energy.
    """
    import warnings

    g = _as_generator(rng)
    n = params.n
    if init is None:
        positions = np.sort(g.standard_normal(n))
    else:
        positions = init.positions.copy()
    if not math.isfinite(configuration_energy(params, ParticleConfiguration(positions))):
        raise ContractViolation("initial configuration must have finite energy")
    if burn_in is None:
        burn_in = 10 * n
    step = 1.0 if step_size is None else float(step_size)
    adapt = step_size is None

    samples = []
    accepted = 0
    proposed = 0
    for sweep in range(burn_in + steps):
        acc_sweep = 0
        order = g.permutation(n)
        moves = g.standard_normal(n) * step
        logu = np.log(g.random(n))
        for j, i in enumerate(order):
            xi_new = positions[i] + moves[j]
            # both single-site energies against the current other particles
            e_old = _site_energy(params, positions, i, positions[i])
            e_new = _site_energy(params, positions, i, xi_new)
            if logu[j] < e_old - e_new:
                positions[i] = xi_new
                acc_sweep += 1
        if sweep < burn_in:
            if adapt:
                rate = acc_sweep / n
                step *= math.exp(0.25 * (rate - 0.4))
            continue
        accepted += acc_sweep
        proposed += n
        if collect_every and (sweep - burn_in) % collect_every == 0:
            samples.append(positions.copy())
    rate = accepted / proposed if proposed else 0.0
    if not (0.05 < rate < 0.95):
        warnings.warn(
            f"Metropolis acceptance rate {rate:.3f} outside (0.05, 0.95);"
            " consider retuning step_size",
            stacklevel=2,
        )
    config = ParticleConfiguration(positions)
    stats = McmcStats(rate, step, steps, configuration_energy(params, config))
    if collect_every:
        return config, stats, np.array(samples)
    return config, stats


# ---------------------------------------------------------------------------
# exact iid baseline (the P = 0 gas)
# ---------------------------------------------------------------------------

def iid_normalization(potential: PotentialSpec) -> float:
    """Z = integral of exp(-V); adaptive quadrature split at the |x|^alpha kink."""
    f = lambda u: math.exp(-potential.value(u))
    left, el = integrate.quad(f, -np.inf, 0.0, epsabs=0.0, epsrel=1e-12, limit=400)
    right, er = integrate.quad(f, 0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=400)
    val = left + right
    if val <= 0 or (el + er) > 1e-9 * val:
        raise ConvergenceError("normalization quadrature failed", residual=el + er)
    return val


def iid_upper_tail(potential: PotentialSpec, t: float) -> float:
    """Q(t) = P(X > t) for X with density exp(-V)/Z, to ~1e-12 relative."""
    z = _cached_normalization(potential)
    f = lambda u: math.exp(-potential.value(u))
    total = 0.0
    errtot = 0.0
    lo = t
    if t < 0.0:
        val, err = integrate.quad(f, t, 0.0, epsabs=0.0, epsrel=1e-12, limit=400)
        total += val
        errtot += err
        lo = 0.0
    val, err = integrate.quad(f, lo, np.inf, epsabs=0.0, epsrel=1e-12, limit=400)
    total += val
    errtot += err
    if errtot > 1e-9 * max(total, 1e-300):
        raise ConvergenceError("tail quadrature failed", residual=errtot)
    return total / z


def iid_cdf(potential: PotentialSpec, t: float) -> float:
    return 1.0 - iid_upper_tail(potential, t)


def iid_tail_log(potential: PotentialSpec, n: int, t: float) -> float:
    """log P(x_max < t) = n log(1 - Q(t)); safe far below the underflow line."""
    if n < 1:
        raise ContractViolation(f"n must be >= 1, got {n}")
    q = iid_upper_tail(potential, t)
    if q >= 1.0:
        return -math.inf
    return n * math.log1p(-q)


def iid_tail_exact(potential: PotentialSpec, n: int, t: float) -> float:
    """P(x_max < t) = F(t)^n for the iid (pressure 0) gas."""
    return math.exp(iid_tail_log(potential, n, t))


_norm_cache: dict = {}


def _cached_normalization(potential: PotentialSpec) -> float:
    key = (potential.kappa, potential.alpha, potential.perturbation,
           potential.perturbation_derivative)
    if key not in _norm_cache:
        _norm_cache[key] = iid_normalization(potential)
    return _norm_cache[key]
