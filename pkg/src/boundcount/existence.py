"""Trial-state certificates for strictly negative spectrum.

Functions on a :class:`~boundcount.kernel.ContinuumBox` are represented by
their Fourier coefficients on the dual grid, with the conventions

``psi(x) = (2 pi)^{-d/2} sum_k psi_hat(k) e^{i k x} dk^d`` and
``||psi_hat||_1 = sum_k |psi_hat(k)| dk^d``.

Under this map ``<psi, (T + V) psi>`` equals ``<v, H v>`` for the grid
Hamiltonian used by :func:`boundcount.oracle.continuum_spectrum`, so every
Rayleigh quotient here is an upper bound for that oracle's lowest
eigenvalue.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from boundcount.errors import ConstructionError, DuplicatePointsError, ParameterError, ResolutionError
from boundcount.kernel import ContinuumBox, KineticSymbol, PotentialField

MIN_BALL_POINTS = 8


@dataclass(frozen=True, eq=False)
class TrialState:
    """``w_hat = max(T, tau)^-1`` on the dual ball ``B_{1/n}(omega)``."""

    center: tuple[float, ...]
    n: int
    tau: float
    coefficients: np.ndarray
    l1_norm: float
    box: ContinuumBox
    twist: tuple[float, ...]

    @property
    def phi_hat(self) -> np.ndarray:
        """L1-normalized coefficients."""
        return self.coefficients / self.l1_norm


def _dual(box: ContinuumBox, twist) -> np.ndarray:
    return box.dual_points() + np.asarray(twist, dtype=float)


def _kinetic(symbol: KineticSymbol, box: ContinuumBox, twist) -> np.ndarray:
    if symbol.is_discrete:
        raise ParameterError("trial states need a continuum symbol")
    if symbol.dim != box.dim:
        raise ParameterError("symbol and box dimensions differ")
    return np.asarray(symbol(_dual(box, twist)), dtype=float)


def default_center(symbol: KineticSymbol, box: ContinuumBox) -> tuple[float, ...]:
    """Argmin of T over the dual grid, ties broken lexicographically."""
    k = box.dual_points().reshape(-1, box.dim)
    T = np.asarray(symbol(k), dtype=float)
    best = np.flatnonzero(T == T.min())
    pts = k[best]
    order = np.lexsort(pts.T[::-1])
    return tuple(float(v) for v in pts[order[0]])


def _ball(box: ContinuumBox, center, radius: float, twist) -> np.ndarray:
    k = _dual(box, twist)
    return np.sum((k - np.asarray(center)) ** 2, axis=-1) < radius**2


def tau_schedule(symbol: KineticSymbol, box: ContinuumBox, center, n: int, twist=None) -> float:
    """Largest tau with ``sum_{B_{1/n}} max(T, tau)^-1 dk^d >= n``.

    Raises :class:`ConstructionError` when no tau reaches ``n`` (the zero set
    is too thin at ``center`` on this grid).
    """
    twist = np.zeros(box.dim) if twist is None else twist
    T = _kinetic(symbol, box, twist)[_ball(box, center, 1.0 / n, twist)]
    dk = box.dual_cell
    if T.size == 0:
        raise ResolutionError("dual ball is empty")
    mass = lambda tau: float(np.sum(1.0 / np.maximum(T, tau)) * dk)
    if mass(1e-300) < n:
        raise ConstructionError(f"sum of 1/T over the ball stays below n={n}")
    top = max(float(T.max()), 1.0)
    if mass(top) >= n:
        # constant regime: mass = |B| / tau
        return T.size * dk / n
    f = lambda lt: mass(math.exp(lt)) - n
    lt = optimize.brentq(f, math.log(1e-300), math.log(top), xtol=1e-12, maxiter=400)
    # brentq brackets the root; keep the side that satisfies the inequality
    tau = math.exp(lt)
    while mass(tau) < n:
        tau *= 1 - 1e-12
    return tau


def build_trial_state(
    symbol: KineticSymbol,
    center=None,
    n: int = 4,
    tau: float | None = None,
    box: ContinuumBox | None = None,
    twist=None,
) -> TrialState:
    """Discretized ``w_hat_n`` on ``box``'s dual grid.

    ``tau=None`` uses :func:`tau_schedule`.  ``twist`` shifts the dual grid
    by a Bloch vector (default 0, the grid of the torus oracle).
    """
    if box is None:
        raise ParameterError("a ContinuumBox is required")
    if n < 1:
        raise ParameterError("n must be a positive integer")
    twist = tuple(float(v) for v in (np.zeros(box.dim) if twist is None else np.broadcast_to(np.asarray(twist, dtype=float), (box.dim,))))
    center = default_center(symbol, box) if center is None else tuple(float(v) for v in np.broadcast_to(np.asarray(center, dtype=float), (box.dim,)))
    ball = _ball(box, center, 1.0 / n, twist)
    if ball.sum() < MIN_BALL_POINTS:
        raise ResolutionError(f"B_(1/{n}) holds {int(ball.sum())} dual points, need {MIN_BALL_POINTS}")
    if tau is None:
        tau = tau_schedule(symbol, box, center, n, twist)
    if tau <= 0:
        raise ParameterError("tau must be positive")
    T = _kinetic(symbol, box, twist)
    w = np.where(ball, 1.0 / np.maximum(T, tau), 0.0)
    l1 = float(w.sum() * box.dual_cell)
    return TrialState(center, int(n), float(tau), w, l1, box, twist)


def _first_point(box: ContinuumBox) -> np.ndarray:
    return np.array([a[0] for a in box.axes()])


def to_real_space(coeffs: np.ndarray, box: ContinuumBox, twist=None) -> np.ndarray:
    """``psi(x)`` on the grid from dual-grid coefficients."""
    twist = np.zeros(box.dim) if twist is None else np.asarray(twist, dtype=float)
    k = box.dual_points()
    phase = np.exp(1j * (k @ _first_point(box)))
    N = int(np.prod(box.shape))
    vals = np.fft.ifftn(coeffs * phase) * N
    x = box.points()
    return (2 * math.pi) ** (-box.dim / 2) * box.dual_cell * vals * np.exp(1j * (x @ twist))


def to_dual_space(values: np.ndarray, box: ContinuumBox) -> np.ndarray:
    """Inverse of :func:`to_real_space` for an untwisted grid."""
    k = box.dual_points()
    phase = np.exp(-1j * (k @ _first_point(box)))
    return (2 * math.pi) ** (-box.dim / 2) * box.cell_volume * np.fft.fftn(values) * phase


@dataclass(frozen=True)
class Energy:
    kinetic: float
    potential_term: float
    total: float
    norm_sq: float

    @property
    def normalized(self) -> float:
        return self.total / self.norm_sq


def _energy(symbol: KineticSymbol, potential: PotentialField, coeffs: np.ndarray, twist=None) -> Energy:
    box = potential.domain
    T = _kinetic(symbol, box, np.zeros(box.dim) if twist is None else twist)
    kin = float(np.sum(T * np.abs(coeffs) ** 2) * box.dual_cell)
    psi = to_real_space(coeffs, box, twist)
    pot = float(np.sum(potential.values * np.abs(psi) ** 2) * box.cell_volume)
    norm = float(np.sum(np.abs(coeffs) ** 2) * box.dual_cell)
    return Energy(kin, pot, kin + pot, norm)


def rayleigh_quotient(state: TrialState, symbol: KineticSymbol, potential: PotentialField) -> tuple[float, float, float]:
    """``(kinetic, potential_term, total)`` for ``phi = w / ||w_hat||_1``."""
    if potential.domain is not state.box and potential.domain.describe() != state.box.describe():
        raise ParameterError("state and potential live on different grids")
    e = _energy(symbol, potential, state.phi_hat, state.twist)
    return e.kinetic, e.potential_term, e.total


def rayleigh_energy(state: TrialState, symbol: KineticSymbol, potential: PotentialField) -> Energy:
    """Like :func:`rayleigh_quotient` but also returns ``||phi||^2``."""
    return _energy(symbol, potential, state.phi_hat, state.twist)


def _triangular_smooth(field: np.ndarray) -> np.ndarray:
    """Periodic convolution with the separable kernel (1 - |x|/2)_+ on the grid."""
    out = field.astype(float)
    for axis in range(field.ndim):
        out = 0.5 * out + 0.25 * (np.roll(out, 1, axis=axis) + np.roll(out, -1, axis=axis))
    return out


def default_ball_radius(potential: PotentialField, fraction: float = 0.9) -> float:
    """Smallest centred radius whose ball holds ``fraction`` of ``int V_-``."""
    rho = np.sqrt(np.sum(potential.domain.points() ** 2, axis=-1)).ravel()
    w = potential.negative_part.ravel()
    if not np.any(w > 0):
        raise ConstructionError("V_- vanishes")
    order = np.argsort(rho)
    mass = np.cumsum(w[order])
    i = int(np.searchsorted(mass, fraction * mass[-1]))
    return float(np.nextafter(rho[order][min(i, rho.size - 1)], np.inf))


def correction_profile(potential: PotentialField, center, n: int, ball_radius: float | None = None) -> np.ndarray:
    """Dual coefficients of ``e^{i omega x} phi(x)`` with ``B_{2/n}(omega)`` removed.

    ``phi`` is the mollified indicator of ``{V_- > 0}`` inside a centred
    ball, by default the smallest one holding 90% of ``int V_-``.
    """
    box = potential.domain
    x = box.points()
    radius = default_ball_radius(potential) if ball_radius is None else float(ball_radius)
    D = (potential.negative_part > 0) & (np.sum(x * x, axis=-1) < radius**2)
    if not np.any(D):
        raise ConstructionError("{V_- > 0} is empty inside the ball: V >= 0, nothing to certify")
    phi = _triangular_smooth(D.astype(float))
    omega = np.asarray(center, dtype=float)
    coeffs = to_dual_space(phi * np.exp(1j * (x @ omega)), box)
    coeffs[_ball(box, omega, 2.0 / n, np.zeros(box.dim))] = 0.0
    return coeffs


ALPHA_GRID = np.geomspace(1e-4, 1.0, 32)


@dataclass(frozen=True)
class CertificationRow:
    symbol: str
    omega: tuple[float, ...]
    n: int
    tau: float
    alpha_mix: float
    kinetic: float
    potential_term: float
    total: float
    normalized: float

    @property
    def certified(self) -> bool:
        return self.total < 0

    def row(self) -> dict:
        return {
            "symbol": self.symbol,
            "omega": " ".join(f"{v:g}" for v in self.omega),
            "n": self.n,
            "tau": self.tau,
            "alpha_mix": self.alpha_mix,
            "kinetic": self.kinetic,
            "potential_term": self.potential_term,
            "total": self.total,
            "certified": self.certified,
        }


def corrected_trial_scan(
    symbol: KineticSymbol,
    potential: PotentialField,
    center=None,
    n: int = 4,
    alpha_mix=None,
    tau: float | None = None,
    ball_radius: float | None = None,
) -> CertificationRow:
    """Best ``<psi, (T+V) psi>`` over ``psi = phi_n + alpha * phi_tilde``.

    ``alpha_mix`` is a number, a sequence, or ``None`` for the default 32
    log-spaced values in [1e-4, 1]; ``alpha = 0`` is always included so a
    state that is already negative is never made worse.
    """
    if np.all(potential.values >= 0):
        raise ConstructionError("V >= 0: no negative-energy certificate exists")
    box = potential.domain
    if not isinstance(box, ContinuumBox):
        raise ParameterError("continuum potential required")
    if center is None:
        center = default_center(symbol, box)
    state = build_trial_state(symbol, center, n, tau, box)
    a = state.phi_hat
    b = correction_profile(potential, state.center, n, ball_radius)
    alphas = ALPHA_GRID if alpha_mix is None else np.atleast_1d(np.asarray(alpha_mix, dtype=float))
    alphas = np.unique(np.concatenate([[0.0], alphas]))
    T = _kinetic(symbol, box, np.zeros(box.dim))
    dk, dx = box.dual_cell, box.cell_volume
    pa, pb = to_real_space(a, box), to_real_space(b, box)
    V = potential.values
    # quadratic form coefficients: E(alpha) = A + 2 alpha B + alpha^2 C
    kin = lambda u, v: np.sum(T * np.conj(u) * v) * dk
    pot = lambda u, v: np.sum(V * np.conj(u) * v) * dx
    A_k, A_p = kin(a, a).real, pot(pa, pa).real
    B_k, B_p = kin(a, b).real, pot(pa, pb).real
    C_k, C_p = kin(b, b).real, pot(pb, pb).real
    nrm = lambda u, v: (np.sum(np.conj(u) * v) * dk).real
    kinetic = A_k + 2 * alphas * B_k + alphas**2 * C_k
    potential_term = A_p + 2 * alphas * B_p + alphas**2 * C_p
    total = kinetic + potential_term
    norm_sq = nrm(a, a) + 2 * alphas * nrm(a, b) + alphas**2 * nrm(b, b)
    i = int(np.argmin(total))
    return CertificationRow(
        symbol.kind.value,
        tuple(state.center),
        state.n,
        state.tau,
        float(alphas[i]),
        float(kinetic[i]),
        float(potential_term[i]),
        float(total[i]),
        float(total[i] / norm_sq[i]),
    )


def corrected_trial_energy(symbol: KineticSymbol, potential: PotentialField, center=None, n: int = 4, alpha_mix=None, tau: float | None = None) -> float:
    """Minimum trial energy ``<psi, (T+V) psi>`` over the alpha scan."""
    return corrected_trial_scan(symbol, potential, center, n, alpha_mix, tau).total


# ---------------------------------------------------------------------------
# multi-point matrix


class Verdict(str, enum.Enum):
    STRICTLY_NEGATIVE_DEFINITE = "StrictlyNegativeDefinite"
    NEGATIVE_SEMIDEFINITE_SIMPLE_KERNEL = "NegativeSemiDefiniteSimpleKernel"
    INDEFINITE = "Indefinite"


@dataclass(frozen=True)
class MultiPointMatrix:
    points: tuple[tuple[float, ...], ...]
    M: np.ndarray
    eigenvalues: tuple[float, ...]
    verdict: Verdict
    prediction: int | None
    note: str = ""


def fourier_value(potential: PotentialField, xi) -> complex:
    """``V_hat(xi) = int V(x) e^{-i xi x} dx`` by grid quadrature at any xi."""
    x = potential.domain.points()
    xi = np.asarray(xi, dtype=float)
    return complex(np.sum(potential.values * np.exp(-1j * (x @ xi))) * potential.cell_volume)


def multipoint_matrix(potential: PotentialField, points, tol: float = 1e-10) -> MultiPointMatrix:
    """``M_lm = V_hat(omega_l - omega_m)`` and its definiteness verdict.

    A strictly negative definite matrix, or a negative semidefinite one with
    a simple kernel, predicts at least ``k`` negative eigenvalues when every
    ``omega_l`` lies on a thick part of the zero set.
    """
    if potential.is_lattice:
        raise ParameterError("multipoint_matrix needs a continuum potential")
    pts = [tuple(float(v) for v in np.broadcast_to(np.asarray(p, dtype=float), (potential.dim,))) for p in points]
    if len(set(pts)) != len(pts):
        raise DuplicatePointsError("points must be distinct")
    k = len(pts)
    if k == 0:
        raise ParameterError("need at least one point")
    M = np.empty((k, k), dtype=complex)
    for l in range(k):
        for m in range(l, k):
            val = fourier_value(potential, np.subtract(pts[l], pts[m]))
            M[l, m] = val
            M[m, l] = np.conj(val)
    ev = np.linalg.eigvalsh(M)
    near = np.abs(ev) <= tol
    note = ""
    if np.all(ev < -tol):
        verdict = Verdict.STRICTLY_NEGATIVE_DEFINITE
    elif ev.max() <= tol and near.sum() == 1:
        verdict = Verdict.NEGATIVE_SEMIDEFINITE_SIMPLE_KERNEL
    else:
        verdict = Verdict.INDEFINITE
        if ev.max() <= tol and near.sum() > 1:
            note = "degenerate kernel: no prediction"
    prediction = k if verdict is not Verdict.INDEFINITE else None
    return MultiPointMatrix(tuple(pts), M, tuple(float(v) for v in ev), verdict, prediction, note)
