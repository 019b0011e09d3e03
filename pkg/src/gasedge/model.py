"""Model primitives for confined 1D particle gases.

Defines the confining potential family kappa*|x|^alpha + phi(x), the two
pair repulsions (logarithmic and Riesz), gas parameters in the
high-temperature normalization N*beta -> 2P, configuration energies and
the deviation rate function of the rescaled maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolation

__all__ = [
    "PotentialSpec",
    "Interaction",
    "log_interaction",
    "riesz_interaction",
    "GasParameters",
    "ParticleConfiguration",
    "potential_eval",
    "potential_grad",
    "interaction_eval",
    "configuration_energy",
    "rate_function",
    "deviation_scale",
]


@dataclass(frozen=True)
class PotentialSpec:
    """Confinement V(x) = kappa*|x|^alpha + phi(x).

    The perturbation phi and its derivative are supplied as separate
    callables; no symbolic differentiation is attempted. Both default to
    zero. Requires kappa > 0 and alpha >= 1.
    """

    kappa: float
    alpha: float
    perturbation: Optional[Callable[[np.ndarray], np.ndarray]] = None
    perturbation_derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise ContractViolation(f"kappa must be positive, got {self.kappa}")
        if not self.alpha >= 1:
            raise ContractViolation(f"alpha must be >= 1, got {self.alpha}")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        v = self.kappa * np.abs(x) ** self.alpha
        if self.perturbation is not None:
            v = v + self.perturbation(x)
        return v if v.ndim else float(v)

    def grad(self, x):
        """Derivative of V. At x=0 the |x|^alpha part is taken to be 0."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = self.kappa * self.alpha * np.sign(x) * np.abs(x) ** (self.alpha - 1.0)
        g = np.where(x == 0.0, 0.0, g)
        if self.perturbation_derivative is not None:
            g = g + self.perturbation_derivative(x)
        return g if g.ndim else float(g)

    @staticmethod
    def gaussian() -> "PotentialSpec":
        """V(x) = x^2/2, the standard Gaussian weight."""
        return PotentialSpec(kappa=0.5, alpha=2.0)


def potential_eval(spec: PotentialSpec, x):
    return spec.value(x)


def potential_grad(spec: PotentialSpec, x):
    return spec.grad(x)


@dataclass(frozen=True)
class Interaction:
    """Pair repulsion g: either -log|r| or |r|^(-s) with 0 < s < 1."""

    kind: str
    s: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("log", "riesz"):
            raise ContractViolation(f"unknown interaction kind {self.kind!r}")
        if self.kind == "riesz":
            if self.s is None or not (0.0 < self.s < 1.0):
                raise ContractViolation(
                    f"riesz exponent s must lie strictly in (0, 1), got {self.s}"
                )
        elif self.s is not None:
            raise ContractViolation("log interaction takes no exponent")

    @property
    def is_log(self) -> bool:
        return self.kind == "log"


def log_interaction() -> Interaction:
    return Interaction("log")


def riesz_interaction(s: float) -> Interaction:
    return Interaction("riesz", s)


def interaction_eval(kind: Interaction, r):
    """Evaluate g(r). The origin returns the +inf sentinel, never raises."""
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    zero = r == 0.0
    with np.errstate(divide="ignore"):
        if kind.is_log:
            out = -np.log(np.abs(np.where(zero, 1.0, r)))
        else:
            out = np.abs(np.where(zero, 1.0, r)) ** (-kind.s)
    out = np.where(zero, np.inf, out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class GasParameters:
    """Gas size, coupling and model ingredients.

    beta is stored explicitly so that fixed-beta experiments remain
    expressible; the high_temperature constructor enforces beta = 2P/n.
    """

    n: int
    pressure: float
    beta: float
    interaction: Interaction
    potential: PotentialSpec

    def __post_init__(self):
        if self.n < 1:
            raise ContractViolation(f"n must be >= 1, got {self.n}")
        if self.pressure < 0:
            raise ContractViolation(f"pressure must be >= 0, got {self.pressure}")
        if self.beta < 0:
            raise ContractViolation(f"beta must be >= 0, got {self.beta}")

    @classmethod
    def high_temperature(
        cls, n: int, pressure: float, interaction: Interaction, potential: PotentialSpec
    ) -> "GasParameters":
        """Construct with the N*beta = 2P coupling convention."""
        return cls(
            n=n,
            pressure=pressure,
            beta=2.0 * pressure / n,
            interaction=interaction,
            potential=potential,
        )


@dataclass(frozen=True)
class ParticleConfiguration:
    """Sorted positions of the N particles; x_max is the last entry."""

    positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 1 or pos.size == 0:
            raise ContractViolation("positions must be a nonempty 1D array")
        object.__setattr__(self, "positions", np.sort(pos))

    @property
    def n(self) -> int:
        return self.positions.size

    @property
    def x_max(self) -> float:
        return float(self.positions[-1])

    def to_csv(self, path) -> None:
        from .reporting import write_csv

        rows = [(i, repr(float(x))) for i, x in enumerate(self.positions)]
        write_csv(path, ("index", "position"), rows)


def configuration_energy(params: GasParameters, config: ParticleConfiguration) -> float:
    """beta * sum_{i<j} g(x_i - x_j) + sum_i V(x_i).

    This is -log p_N up to the constant log Z_N. Coinciding particles
    yield +inf (total function; an MCMC chain simply rejects there).
    """
    x = config.positions
    if x.size != params.n:
        raise ContractViolation(
            f"configuration has {x.size} particles, parameters expect {params.n}"
        )
    v = float(np.sum(params.potential.value(x)))
    if params.n == 1:
        return v
    diffs = x[:, None] - x[None, :]
    iu = np.triu_indices(params.n, k=1)
    pair = interaction_eval(params.interaction, diffs[iu])
    if np.any(np.isinf(pair)):
        return math.inf
    return params.beta * float(np.sum(pair)) + v


def rate_function(alpha: float, x):
    """Deviation rate of the rescaled maximum: x^alpha - 1 on [1, inf), else +inf."""
    if not alpha >= 1:
        raise ContractViolation(f"alpha must be >= 1, got {alpha}")
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 1.0, x ** alpha - 1.0, np.inf)
    return out if out.ndim else float(out)


def deviation_scale(potential: PotentialSpec, n: int) -> float:
    """Typical size of the maximum: (log(n)/kappa)^(1/alpha)."""
    if n < 2:
        raise ContractViolation("deviation scale needs n >= 2")
    return (math.log(n) / potential.kappa) ** (1.0 / potential.alpha)
