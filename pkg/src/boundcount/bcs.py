"""Critical inverse temperature of the linearized BCS operator.

``E_beta = inf spec(K_{beta,mu}(p) + V)`` decreases strictly in ``beta``;
the critical value is where it changes sign.  Energies come from the torus
oracle on a box whose dual grid meets the Fermi sphere ``|eta| = sqrt(mu)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from boundcount.errors import ParameterError
from boundcount.kernel import ContinuumBox, KineticSymbol, PotentialField
from boundcount.oracle import SpectrumConfig, continuum_spectrum

log = logging.getLogger(__name__)


def aligned_box_length(mu: float, m: int) -> float:
    """Side ``L`` with dual spacing ``sqrt(mu)/m``, so axis points hit the Fermi sphere."""
    if mu <= 0 or m < 1:
        raise ParameterError("need mu > 0 and m >= 1")
    return 2 * math.pi * m / math.sqrt(mu)


def aligned_box(dim: int, mu: float, m: int, points: int) -> ContinuumBox:
    return ContinuumBox.cube(dim, aligned_box_length(mu, m), points)


def sphere_gap(box: ContinuumBox, mu: float) -> float:
    """Distance from the dual grid to the sphere ``|eta| = sqrt(mu)``."""
    k = box.dual_points()
    return float(np.min(np.abs(np.sqrt(np.sum(k * k, axis=-1)) - math.sqrt(mu))))


class _Solver:
    """Ground energies with warm starts carried between nearby ``beta``."""

    def __init__(self, mu: float, potential: PotentialField, config: SpectrumConfig | None):
        if mu <= 0:
            raise ParameterError("mu must be positive")
        self.mu = float(mu)
        self.potential = potential
        self.config = config or SpectrumConfig(k=2)
        self.vectors = None
        self.samples: dict[float, float] = {}

    def __call__(self, beta: float) -> float:
        if not beta > 0:
            raise ParameterError("beta must be positive")
        if beta in self.samples:
            return self.samples[beta]
        symbol = KineticSymbol.bcs(self.potential.dim, beta, self.mu)
        res = continuum_spectrum(symbol, self.potential, self.config, threshold=-math.inf, initial=self.vectors)
        self.vectors = res.vectors
        e = float(res.extremal[0])
        self.samples[beta] = e
        log.debug("beta=%g E=%.10g", beta, e)
        return e


def ground_energy(beta: float, mu: float, potential: PotentialField, grid_config: SpectrumConfig | None = None) -> float:
    """Lowest eigenvalue of ``K_{beta,mu}(p) + V`` on the potential's torus.

    ``beta = inf`` gives the zero-temperature operator ``|p^2 - mu| + V``.
    """
    if potential.is_lattice:
        raise ParameterError("BCS energies need a continuum potential")
    return _Solver(mu, potential, grid_config)(beta)


@dataclass(frozen=True)
class BracketConfig:
    width: float = 1e-3
    beta_start: float = 1.0
    beta_hi_max: float = 256.0
    growth: float = 2.0


@dataclass(frozen=True)
class CriticalBetaResult:
    mu: float
    bracketed: bool
    beta_lo: float
    beta_hi: float
    energy_at: dict[float, float] = field(default_factory=dict)
    iterations: int = 0
    box: str = ""
    note: str = ""

    @property
    def beta_cr(self) -> float:
        return 0.5 * (self.beta_lo + self.beta_hi) if self.bracketed else math.inf

    @property
    def width(self) -> float:
        return self.beta_hi - self.beta_lo

    def row(self, depth: float | None = None) -> dict:
        return {
            "mu": self.mu,
            "depth": "" if depth is None else depth,
            "beta_lo": self.beta_lo,
            "beta_hi": self.beta_hi,
            "beta_cr": self.beta_cr,
            "iterations": self.iterations,
        }


def critical_beta(
    mu: float,
    potential: PotentialField,
    bracket_config: BracketConfig | None = None,
    grid_config: SpectrumConfig | None = None,
) -> CriticalBetaResult:
    """Bracket ``beta_cr`` by sign bisection on ``E_beta``.

    The upper end grows geometrically from ``beta_start`` until
    ``E_beta < 0`` or ``beta_hi_max`` is passed; in the latter case the
    result has ``bracketed=False`` and infinite ``beta_cr``.
    """
    cfg = bracket_config or BracketConfig()
    if not (0 < cfg.beta_start <= cfg.beta_hi_max) or cfg.width <= 0 or cfg.growth <= 1:
        raise ParameterError("invalid bracket configuration")
    energy = _Solver(mu, potential, grid_config)
    box = str(potential.domain.describe())
    lo, hi = 0.0, cfg.beta_start
    while energy(hi) >= 0:
        lo = hi
        if hi >= cfg.beta_hi_max:
            return CriticalBetaResult(
                float(mu), False, lo, math.inf, dict(energy.samples), 0, box,
                f"E_beta >= 0 for every beta up to {cfg.beta_hi_max:g}",
            )
        hi = min(hi * cfg.growth, cfg.beta_hi_max)
    if lo == 0.0:
        # E_beta < 0 already at beta_start: shrink toward 0 until nonnegative
        lo = hi
        while energy(lo) < 0:
            hi = lo
            lo = lo / cfg.growth
            if lo < 1e-12:
                raise ParameterError("E_beta < 0 for every tested beta; the operator is not bounded below at high temperature")
    it = 0
    while hi - lo >= cfg.width:
        mid = 0.5 * (lo + hi)
        if energy(mid) >= 0:
            lo = mid
        else:
            hi = mid
        it += 1
    return CriticalBetaResult(float(mu), True, lo, hi, dict(energy.samples), it, box)


def energy_chain(mu: float, potential: PotentialField, betas, grid_config: SpectrumConfig | None = None) -> np.ndarray:
    """``E_beta`` over an increasing chain, warm-starting each solve."""
    solve = _Solver(mu, potential, grid_config)
    return np.array([solve(float(b)) for b in betas])
