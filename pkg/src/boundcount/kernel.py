"""Kinetic symbols, sampled potentials and sublevel-set volumes.

A kinetic symbol ``T`` is a nonnegative function of momentum.  Every symbol
used here is built through one of the :class:`KineticSymbol` factories, which
validate the parameters and dispatch degenerate cases (massless relativistic
particle, zero total mass of a pair) to their limit kinds.

Volumes ``|{T < u}|`` come from closed forms where they are known, from a
nested quadrature on the torus for the lattice Laplacian, and from a
stratified Monte-Carlo estimate otherwise.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy import integrate

from boundcount.errors import (
    DomainError,
    ParameterError,
    ResolutionError,
    UnboundedSublevelError,
)

TORUS_SLACK = 1e-12
BCS_SERIES_CUTOFF = 1e-4


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def unit_sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return d * unit_ball_volume(d)


class SymbolKind(str, enum.Enum):
    POWER = "Power"
    SHIFTED_POWER = "ShiftedPower"
    MASSIVE_RELATIVISTIC = "MassiveRelativistic"
    RELATIVISTIC_PAIR = "RelativisticPair"
    ULTRA_RELATIVISTIC_PAIR = "UltraRelativisticPair"
    HEAVY_MASSLESS_PAIR = "HeavyMasslessPair"
    BCS = "BCS"
    DISCRETE_LAPLACIAN = "DiscreteLaplacian"
    DISCRETE_CUSTOM = "DiscreteCustom"


DISCRETE_KINDS = frozenset({SymbolKind.DISCRETE_LAPLACIAN, SymbolKind.DISCRETE_CUSTOM})


def _as_momentum(P: float | Sequence[float], d: int) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(P, dtype=float))
    if arr.size == 1 and d > 1:
        arr = np.concatenate([arr, np.zeros(d - 1)])
    if arr.shape != (d,):
        raise ParameterError(f"momentum P must have {d} components, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("momentum P must be finite")
    return tuple(float(x) for x in arr)


def _positive(name: str, value: float, allow_zero: bool = False) -> float:
    value = float(value)
    if math.isnan(value) or value < 0 or (value == 0 and not allow_zero):
        raise ParameterError(f"{name} must be {'nonnegative' if allow_zero else 'positive'}, got {value}")
    return value


@dataclass(frozen=True, eq=False)
class KineticSymbol:
    """Descriptor of a kinetic energy symbol ``T : R^d -> [0, inf)``.

    Use the classmethod factories rather than the constructor; they validate
    parameters and route degenerate parameter values to limit kinds.
    """

    kind: SymbolKind
    dim: int
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 1:
            raise ParameterError(f"dimension must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "kind", SymbolKind(self.kind))
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))

    # -- factories -----------------------------------------------------
    @classmethod
    def power(cls, d: int, gamma: float) -> "KineticSymbol":
        return cls(SymbolKind.POWER, d, {"gamma": _positive("gamma", gamma)})

    @classmethod
    def shifted_power(cls, d: int, gamma: float, beta: float) -> "KineticSymbol":
        return cls(
            SymbolKind.SHIFTED_POWER,
            d,
            {"gamma": _positive("gamma", gamma), "beta": _positive("beta", beta)},
        )

    @classmethod
    def massive_relativistic(cls, d: int, m: float) -> "KineticSymbol":
        m = _positive("m", m, allow_zero=True)
        if m == 0:
            return cls.power(d, 1.0)
        return cls(SymbolKind.MASSIVE_RELATIVISTIC, d, {"m": m})

    @classmethod
    def relativistic_pair(cls, d: int, P, M: float, mu_plus: float = 0.5) -> "KineticSymbol":
        M = _positive("M", M, allow_zero=True)
        mu_plus = float(mu_plus)
        if not 0.0 <= mu_plus <= 1.0:
            raise ParameterError(f"mass fraction mu_plus must lie in [0, 1], got {mu_plus}")
        if M == 0:
            return cls.ultra_relativistic_pair(d, P, mu_plus)
        P = _as_momentum(P, d)
        if mu_plus == 1.0:
            return cls.heavy_massless_pair(d, P, M)
        if mu_plus == 0.0:
            return cls.heavy_massless_pair(d, tuple(-x for x in P), M)
        return cls(
            SymbolKind.RELATIVISTIC_PAIR,
            d,
            {"P": P, "M": M, "mu_plus": mu_plus, "mu_minus": 1.0 - mu_plus},
        )

    @classmethod
    def ultra_relativistic_pair(cls, d: int, P, mu_plus: float = 0.5) -> "KineticSymbol":
        mu_plus = float(mu_plus)
        if not 0.0 <= mu_plus <= 1.0:
            raise ParameterError(f"mass fraction mu_plus must lie in [0, 1], got {mu_plus}")
        return cls(
            SymbolKind.ULTRA_RELATIVISTIC_PAIR,
            d,
            {"P": _as_momentum(P, d), "mu_plus": mu_plus, "mu_minus": 1.0 - mu_plus},
        )

    @classmethod
    def heavy_massless_pair(cls, d: int, P, m: float) -> "KineticSymbol":
        return cls(SymbolKind.HEAVY_MASSLESS_PAIR, d, {"P": _as_momentum(P, d), "m": _positive("m", m)})

    @classmethod
    def bcs(cls, d: int, beta: float, mu: float) -> "KineticSymbol":
        """BCS symbol; ``beta = inf`` gives the zero-temperature symbol |eta^2 - mu|."""
        return cls(SymbolKind.BCS, d, {"beta": _positive("beta", beta), "mu": _positive("mu", mu)})

    @classmethod
    def discrete_laplacian(cls, d: int) -> "KineticSymbol":
        return cls(SymbolKind.DISCRETE_LAPLACIAN, d, {})

    @classmethod
    def discrete_custom(cls, d: int, func: Callable[[np.ndarray], np.ndarray], t_max: float, name: str = "custom") -> "KineticSymbol":
        """User symbol on the torus; ``func`` maps an (..., d) array to values in [0, t_max]."""
        if not callable(func):
            raise ParameterError("func must be callable")
        return cls(
            SymbolKind.DISCRETE_CUSTOM,
            d,
            {"func": func, "t_max": _positive("t_max", t_max), "name": str(name)},
        )

    # -- derived quantities -------------------------------------------
    @property
    def is_discrete(self) -> bool:
        return self.kind in DISCRETE_KINDS

    @property
    def floor(self) -> float:
        """Reference level below which eigenvalues are counted.

        It is 2/beta for a finite-temperature BCS symbol (the minimum of the
        symbol) and 0 for every other kind.
        """
        if self.kind is SymbolKind.BCS and math.isfinite(self.params["beta"]):
            return 2.0 / self.params["beta"]
        return 0.0

    @property
    def t_max(self) -> float:
        if self.kind is SymbolKind.DISCRETE_LAPLACIAN:
            return 4.0 * self.dim
        if self.kind is SymbolKind.DISCRETE_CUSTOM:
            return float(self.params["t_max"])
        return math.inf

    def key(self) -> tuple:
        items = []
        for name in sorted(self.params):
            value = self.params[name]
            if callable(value):
                value = f"callable:{getattr(value, '__qualname__', repr(value))}"
            items.append((name, value))
        return (self.kind.value, int(self.dim), tuple(items))

    def __eq__(self, other):
        return isinstance(other, KineticSymbol) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def describe(self) -> dict:
        out = {"kind": self.kind.value, "dim": int(self.dim)}
        for name, value in self.key()[2]:
            out[name] = list(value) if isinstance(value, tuple) else value
        return out

    def params_hash(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    # -- evaluation ---------------------------------------------------
    def __call__(self, eta) -> np.ndarray:
        return eval_symbol(self, eta)

    def excess(self, eta) -> np.ndarray:
        """T(eta) - floor, evaluated without cancellation for BCS."""
        if self.kind is SymbolKind.BCS and math.isfinite(self.params["beta"]):
            eta = _check_points(self, eta)
            a = np.sum(eta * eta, axis=-1) - self.params["mu"]
            return _bcs_excess_of_a(a, self.params["beta"])
        return eval_symbol(self, eta)


def _check_points(symbol: KineticSymbol, eta) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 0 or eta.shape[-1] != symbol.dim:
        raise DomainError(f"points must have trailing dimension {symbol.dim}, got shape {eta.shape}")
    if not np.all(np.isfinite(eta)):
        raise DomainError("points must be finite")
    if symbol.is_discrete and np.any(np.abs(eta) > math.pi + TORUS_SLACK):
        raise DomainError("lattice symbols are evaluated on the torus [-pi, pi)^d")
    return eta


def _norm(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(x * x, axis=-1))


def _bcs_of_a(a: np.ndarray, beta: float) -> np.ndarray:
    if not math.isfinite(beta):
        return np.abs(a)
    ba = beta * a
    out = np.empty_like(a)
    small = np.abs(ba) < BCS_SERIES_CUTOFF
    out[small] = 2.0 / beta + beta * a[small] ** 2 / 6.0
    big = ~small
    x = 0.5 * ba[big]
    out[big] = a[big] / np.tanh(x)
    return out


def _xcothx_minus_one(x: np.ndarray) -> np.ndarray:
    """x coth(x) - 1 for x >= 0 without cancellation."""
    x = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    small = x < 1e-2
    xs = x[small] ** 2
    out[small] = xs / 3.0 - xs**2 / 45.0 + 2.0 * xs**3 / 945.0
    xb = x[~small]
    out[~small] = xb / np.tanh(xb) - 1.0
    return out


def _bcs_excess_of_a(a: np.ndarray, beta: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if not math.isfinite(beta):
        return np.abs(a)
    return (2.0 / beta) * _xcothx_minus_one(0.5 * beta * a)


def eval_symbol(symbol: KineticSymbol, eta) -> np.ndarray | float:
    """Evaluate ``T`` at one point (shape ``(d,)``) or a batch (shape ``(..., d)``)."""
    pts = _check_points(symbol, eta)
    p = symbol.params
    kind = symbol.kind
    if kind is SymbolKind.POWER:
        out = _norm(pts) ** p["gamma"]
    elif kind is SymbolKind.SHIFTED_POWER:
        out = p["beta"] + _norm(pts) ** p["gamma"]
    elif kind is SymbolKind.MASSIVE_RELATIVISTIC:
        q2 = np.sum(pts * pts, axis=-1)
        out = q2 / (np.sqrt(q2 + p["m"] ** 2) + p["m"])
    elif kind is SymbolKind.RELATIVISTIC_PAIR:
        P = np.asarray(p["P"])
        M, mp, mm = p["M"], p["mu_plus"], p["mu_minus"]
        g = math.sqrt(float(P @ P) + M * M)
        a = np.sum((mp * P - pts) ** 2, axis=-1) + (mp * M) ** 2
        b = np.sum((mm * P + pts) ** 2, axis=-1) + (mm * M) ** 2
        out = np.sqrt(a) + np.sqrt(b) - g
    elif kind is SymbolKind.ULTRA_RELATIVISTIC_PAIR:
        P = np.asarray(p["P"])
        mp, mm = p["mu_plus"], p["mu_minus"]
        out = _norm(mp * P - pts) + _norm(mm * P + pts) - math.sqrt(float(P @ P))
    elif kind is SymbolKind.HEAVY_MASSLESS_PAIR:
        P = np.asarray(p["P"])
        m = p["m"]
        out = np.sqrt(np.sum((P - pts) ** 2, axis=-1) + m * m) + _norm(pts) - math.sqrt(float(P @ P) + m * m)
    elif kind is SymbolKind.BCS:
        a = np.sum(pts * pts, axis=-1) - p["mu"]
        out = _bcs_of_a(np.atleast_1d(a), p["beta"]).reshape(np.shape(a))
    elif kind is SymbolKind.DISCRETE_LAPLACIAN:
        out = np.sum(4.0 * np.sin(0.5 * pts) ** 2, axis=-1)
    elif kind is SymbolKind.DISCRETE_CUSTOM:
        out = np.asarray(p["func"](pts), dtype=float)
        if np.any(out < -1e-12) or np.any(out > p["t_max"] * (1 + 1e-12)):
            raise ParameterError("custom lattice symbol left the range [0, t_max]")
    else:  # pragma: no cover
        raise ParameterError(f"unknown kind {kind}")
    # exact zeros can come out as -tiny from the square-root differences
    out = np.maximum(out, 0.0)
    if np.ndim(out) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# sublevel volumes


class VolumeMethod(str, enum.Enum):
    CLOSED_FORM = "ClosedForm"
    QUADRATURE = "Quadrature"
    MONTE_CARLO = "MonteCarlo"


@dataclass(frozen=True)
class VolumeResult:
    value: float
    error: float
    method: VolumeMethod


@dataclass(frozen=True)
class MCConfig:
    """Monte-Carlo settings.  Streams are Philox keyed by ``seed``."""

    samples: int = 1_000_000
    seed: int = 0
    strata_per_axis: int | None = None
    batch: int = 250_000


def _pair_volume(d: int, s: np.ndarray, Pn: float, M: float, mu_tilde: float) -> np.ndarray:
    g = math.hypot(Pn, M)
    B = unit_ball_volume(d)
    s = np.asarray(s, dtype=float)
    num = s ** (d / 2) * (s + g) * (s + 2 * g) ** (d / 2) * (s * s + 2 * g * s + (1 - 4 * mu_tilde**2) * M * M) ** (d / 2)
    den = 2.0**d * (s * s + 2 * g * s + M * M) ** ((d + 1) / 2)
    return B * num / den


def _ultra_volume(d: int, s: np.ndarray, Pn: float) -> np.ndarray:
    B = unit_ball_volume(d)
    return B / 2.0**d * s ** ((d - 1) / 2) * (s + Pn) * (s + 2 * Pn) ** ((d - 1) / 2)


def _heavy_massless_volume(d: int, s: np.ndarray, Pn: float, m: float) -> np.ndarray:
    g = math.hypot(Pn, m)
    B = unit_ball_volume(d)
    return B / 2.0**d * s**d * (s + g) * (s + 2 * g) ** d / (s * s + 2 * s * g + m * m) ** ((d + 1) / 2)


def _bcs_radius_gap(s: np.ndarray, beta: float) -> np.ndarray:
    """Largest |eta^2 - mu| whose BCS excess stays below s (vectorized bisection)."""
    s = np.asarray(s, dtype=float)
    if not math.isfinite(beta):
        return s.copy()
    target = 0.5 * beta * s  # x coth x - 1 = target, x = beta a / 2
    lo = np.zeros_like(s)
    hi = target + 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        below = _xcothx_minus_one(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 2.0 * 0.5 * (lo + hi) / beta


def _shell_volume(d: int, mu: float, a: np.ndarray) -> np.ndarray:
    """|{ |eta^2 - mu| < a }| for a >= 0, stable for small a."""
    a = np.asarray(a, dtype=float)
    h = d / 2
    B = unit_ball_volume(d)
    out = np.empty_like(a)
    inner = a < mu
    ai = a[inner] / mu
    lp, lm = np.log1p(ai), np.log1p(-ai)
    out[inner] = B * mu**h * np.exp(h * lm) * np.expm1(h * (lp - lm))
    out[~inner] = B * (mu + a[~inner]) ** h
    return out


# lattice Laplacian -----------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS
# smoothstep substitution removes square-root endpoint behaviour
_SS_POINTS = 3 * _GL_NODES**2 - 2 * _GL_NODES**3
_SS_JAC = 6 * _GL_NODES * (1 - _GL_NODES) * _GL_WEIGHTS


def _lattice_volume_1d(s: np.ndarray) -> np.ndarray:
    r = np.sqrt(np.clip(s, 0.0, 4.0)) / 2.0
    return 4.0 * np.arcsin(np.minimum(r, 1.0))


def _lattice_volume(d: int, s: np.ndarray) -> np.ndarray:
    """|{eta in [-pi,pi)^d : sum 4 sin^2(eta_j/2) < s}| by nested quadrature."""
    s = np.asarray(s, dtype=float)
    if d == 1:
        return _lattice_volume_1d(s)
    full = (2 * math.pi) ** d
    out = np.zeros_like(s)
    out[s >= 4 * d] = full
    hi_side = (s > 2 * d) & (s < 4 * d)
    # symmetry eta -> eta + pi maps T to 4d - T
    if np.any(hi_side):
        out[hi_side] = full - _lattice_volume(d, 4 * d - s[hi_side])
    work = (s > 0) & (s <= 2 * d)
    if not np.any(work):
        return out
    sw = s[work]
    # breakpoints in the outer variable where the inner volume changes regime
    cuts = [np.zeros_like(sw)]
    top = np.minimum(sw, 4.0)
    for k in range(1, d):
        cuts.append(np.clip(sw - 4.0 * k, 0.0, top))
    cuts.append(top)
    t_cuts = np.sort(np.stack(cuts, axis=-1), axis=-1)
    e_cuts = 2.0 * np.arcsin(np.sqrt(t_cuts) / 2.0)
    a, b = e_cuts[:, :-1], e_cuts[:, 1:]
    eta = a[..., None] + (b - a)[..., None] * _SS_POINTS
    w = (b - a)[..., None] * _SS_JAC
    rest = sw[:, None, None] - 4.0 * np.sin(0.5 * eta) ** 2
    inner = _lattice_volume(d - 1, np.maximum(rest, 0.0).ravel()).reshape(rest.shape)
    out[work] = 2.0 * np.sum(w * inner, axis=(1, 2))
    return out


# Monte-Carlo ---------------------------------------------------------------


def _philox(seed: int, stream: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence([int(seed), int(stream)])
    return np.random.Generator(np.random.Philox(seq))


def _mc_box(symbol: KineticSymbol, u: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    d = symbol.dim
    if symbol.is_discrete:
        return np.full(d, -math.pi), np.full(d, math.pi)
    R = 1.0
    for _ in range(60):
        face = rng.uniform(-R, R, size=(2 * d, 512, d))
        for j in range(d):
            face[2 * j, :, j] = -R
            face[2 * j + 1, :, j] = R
        if np.all(symbol.excess(face.reshape(-1, d)) >= u):
            R *= 2.0  # margin for sets that bulge between probe points
            return np.full(d, -R), np.full(d, R)
        R *= 2.0
    raise UnboundedSublevelError(f"sublevel set {{T < {u}}} appears unbounded")


def _mc_volume(symbol: KineticSymbol, s: float, cfg: MCConfig) -> VolumeResult:
    """Stratified estimate of |{excess < s}|."""
    d = symbol.dim
    rng = _philox(cfg.seed, 0)
    lo, hi = _mc_box(symbol, s, rng)
    m = cfg.strata_per_axis or max(1, int(round(min(8.0, 4096 ** (1.0 / d)))))
    n_strata = m**d
    per = max(2, cfg.samples // n_strata)
    width = (hi - lo) / m
    cell = float(np.prod(width))
    idx = np.indices((m,) * d).reshape(d, -1).T
    hits = np.zeros(n_strata)
    chunk = max(1, cfg.batch // per)
    for start in range(0, n_strata, chunk):
        block = idx[start : start + chunk]
        gen = _philox(cfg.seed, 1 + start)
        pts = gen.random((block.shape[0], per, d))
        pts = lo + (block[:, None, :] + pts) * width
        inside = symbol.excess(pts.reshape(-1, d)).reshape(block.shape[0], per) < s
        hits[start : start + block.shape[0]] = inside.mean(axis=1)
    value = cell * hits.sum()
    var = cell**2 * np.sum(hits * (1 - hits) / (per - 1))
    err = math.sqrt(var)
    if err == 0.0:
        # all strata pure: fall back to the binomial bound of one miss per stratum
        err = cell * math.sqrt(n_strata) / per
    return VolumeResult(float(value), float(err), VolumeMethod.MONTE_CARLO)


def excess_volume(symbol: KineticSymbol, s, mc: MCConfig | None = None, method: str = "auto"):
    """Volume of {T - floor < s}, vectorized over ``s`` for deterministic methods.

    Returns ``(values, errors, method)``.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s_arr < 0) or np.any(np.isnan(s_arr)):
        raise ParameterError("volume level must be nonnegative")
    d = symbol.dim
    p = symbol.params
    kind = symbol.kind
    closed = None
    if method != "montecarlo":
        if kind is SymbolKind.POWER:
            closed = unit_ball_volume(d) * s_arr ** (d / p["gamma"])
        elif kind is SymbolKind.SHIFTED_POWER:
            closed = unit_ball_volume(d) * np.maximum(s_arr - p["beta"], 0.0) ** (d / p["gamma"])
        elif kind is SymbolKind.MASSIVE_RELATIVISTIC:
            closed = unit_ball_volume(d) * (s_arr * (s_arr + 2 * p["m"])) ** (d / 2)
        elif kind is SymbolKind.RELATIVISTIC_PAIR:
            Pn = float(np.linalg.norm(p["P"]))
            closed = _pair_volume(d, s_arr, Pn, p["M"], 0.5 * (p["mu_minus"] - p["mu_plus"]))
        elif kind is SymbolKind.ULTRA_RELATIVISTIC_PAIR:
            closed = _ultra_volume(d, s_arr, float(np.linalg.norm(p["P"])))
        elif kind is SymbolKind.HEAVY_MASSLESS_PAIR:
            closed = _heavy_massless_volume(d, s_arr, float(np.linalg.norm(p["P"])), p["m"])
        elif kind is SymbolKind.BCS:
            closed = _shell_volume(d, p["mu"], _bcs_radius_gap(s_arr, p["beta"]))
        elif kind is SymbolKind.DISCRETE_LAPLACIAN:
            vals = _lattice_volume(d, s_arr)
            return vals.reshape(np.shape(s)), np.zeros(np.shape(s)), VolumeMethod.QUADRATURE
    if closed is not None:
        closed = np.where(s_arr == 0, 0.0, closed)
        return closed.reshape(np.shape(s)), np.zeros(np.shape(s)), VolumeMethod.CLOSED_FORM
    mc = mc or MCConfig()
    res = [_mc_volume(symbol, float(x), mc) if x > 0 else VolumeResult(0.0, 0.0, VolumeMethod.MONTE_CARLO) for x in s_arr]
    vals = np.array([r.value for r in res]).reshape(np.shape(s))
    errs = np.array([r.error for r in res]).reshape(np.shape(s))
    return vals, errs, VolumeMethod.MONTE_CARLO


def sublevel_volume(symbol: KineticSymbol, u: float, mc_config: MCConfig | None = None, method: str = "auto") -> VolumeResult:
    """Return ``|{eta : T(eta) < u}|``.

    ``method="montecarlo"`` forces the sampling route, which is how the
    closed forms are cross-checked.
    """
    u = float(u)
    if math.isnan(u) or u < 0:
        raise ParameterError("u must be nonnegative")
    s = u - symbol.floor
    if s <= 0:
        mth = VolumeMethod.MONTE_CARLO if method == "montecarlo" else VolumeMethod.CLOSED_FORM
        return VolumeResult(0.0, 0.0, mth)
    vals, errs, mth = excess_volume(symbol, s, mc_config, method)
    return VolumeResult(float(vals), float(errs), mth)


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class ContinuumBox:
    """Periodic box with a cell-centred uniform grid."""

    lengths: tuple[float, ...]
    shape: tuple[int, ...]
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        lengths = tuple(float(x) for x in np.atleast_1d(self.lengths))
        shape = tuple(int(x) for x in np.atleast_1d(self.shape))
        if len(lengths) != len(shape):
            raise ParameterError("lengths and shape must have the same number of axes")
        if any(x <= 0 for x in lengths) or any(n < 1 for n in shape):
            raise ResolutionError("grid resolution must be positive")
        origin = self.origin
        origin = tuple(-0.5 * x for x in lengths) if origin is None else tuple(float(x) for x in origin)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def cube(cls, dim: int, length: float, points: int) -> "ContinuumBox":
        return cls((length,) * dim, (points,) * dim)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> np.ndarray:
        return np.asarray(self.lengths) / np.asarray(self.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        return [o + (np.arange(n) + 0.5) * h for o, n, h in zip(self.origin, self.shape, self.spacing)]

    def points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def dual_axes(self) -> list[np.ndarray]:
        return [2 * math.pi * np.fft.fftfreq(n, h) for n, h in zip(self.shape, self.spacing)]

    def dual_points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.dual_axes(), indexing="ij"), axis=-1)

    @property
    def dual_cell(self) -> float:
        return float(np.prod([2 * math.pi / L for L in self.lengths]))

    def describe(self) -> dict:
        return {"type": "box", "lengths": list(self.lengths), "shape": list(self.shape), "origin": list(self.origin)}


@dataclass(frozen=True)
class LatticeWindow:
    """Sites ``-r..r`` along each axis of Z^d."""

    radius: tuple[int, ...]

    def __post_init__(self):
        radius = tuple(int(x) for x in np.atleast_1d(self.radius))
        if any(r < 0 for r in radius):
            raise ResolutionError("window radius must be nonnegative")
        object.__setattr__(self, "radius", radius)

    @classmethod
    def cube(cls, dim: int, radius: int) -> "LatticeWindow":
        return cls((radius,) * dim)

    @property
    def dim(self) -> int:
        return len(self.radius)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(2 * r + 1 for r in self.radius)

    @property
    def cell_volume(self) -> float:
        return 1.0

    def axes(self) -> list[np.ndarray]:
        return [np.arange(-r, r + 1, dtype=float) for r in self.radius]

    def points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def center_index(self) -> tuple[int, ...]:
        return tuple(self.radius)

    def describe(self) -> dict:
        return {"type": "lattice", "radius": list(self.radius)}


Domain = ContinuumBox | LatticeWindow


@dataclass(frozen=True)
class AnalyticForm:
    family: str
    params: Mapping[str, Any]

    def describe(self) -> dict:
        return {"family": self.family, **{k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params.items()}}


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Potential sampled on a box grid or a lattice window."""

    values: np.ndarray
    domain: Domain
    analytic: AnalyticForm | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != tuple(self.domain.shape):
            raise ParameterError(f"values of shape {vals.shape} do not match domain {self.domain.shape}")
        if not np.all(np.isfinite(vals)):
            raise ParameterError("potential values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def is_lattice(self) -> bool:
        return isinstance(self.domain, LatticeWindow)

    @property
    def cell_volume(self) -> float:
        return self.domain.cell_volume

    @property
    def negative_part(self) -> np.ndarray:
        return np.maximum(-self.values, 0.0)

    @property
    def positive_part(self) -> np.ndarray:
        return np.maximum(self.values, 0.0)

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    def l1_norm(self) -> float:
        return float(np.abs(self.values).sum() * self.cell_volume)

    def scaled(self, factor: float) -> "PotentialField":
        form = None
        if self.analytic is not None and "depth" in self.analytic.params:
            params = dict(self.analytic.params)
            params["depth"] = params["depth"] * factor
            form = AnalyticForm(self.analytic.family, params)
        return PotentialField(self.values * factor, self.domain, form)

    def reflected(self) -> "PotentialField":
        """The potential -V, used for the above-T_max side of lattice bounds."""
        return PotentialField(-self.values, self.domain, None)

    def describe(self) -> dict:
        out = {"domain": self.domain.describe()}
        if self.analytic is not None:
            out["analytic"] = self.analytic.describe()
        return out


def _bump(rho: np.ndarray, a: float, b: float) -> np.ndarray:
    out = np.zeros_like(rho)
    inside = (rho > a) & (rho < b)
    x = rho[inside]
    out[inside] = np.exp(-1.0 / ((x - a) * (b - x)) + 4.0 / (b - a) ** 2)
    return out


def make_potential(family: str, domain: Domain, **params) -> PotentialField:
    """Sample an analytic potential family on ``domain``.

    Families
    --------
    Gaussian(depth, width, center=0)
        ``-depth * exp(-|x - center|^2 / width^2)``.
    BallIndicator(depth, radius)
        ``-depth`` on the open ball of the given radius.
    SingleSite(depth, site=0)
        ``-depth`` at one lattice site.
    AnnularFourier(inner, outer, amplitude=1)
        real potential whose Fourier transform is a smooth radial bump in
        the annulus ``inner < |xi| < outer``; scaled so ``min V = -amplitude``.
    RandomSites(depth_max, support_radius, seed)
        lattice potential with i.i.d. ``-U[0, depth_max]`` values on a cube.
    """
    d = domain.dim
    spacing = np.asarray(getattr(domain, "spacing", np.ones(d)))
    x = domain.points()
    fam = family
    if fam == "Gaussian":
        depth = float(params.get("depth", 1.0))
        width = _positive("width", params.get("width", 1.0))
        center = np.asarray(params.get("center", np.zeros(d)), dtype=float) * np.ones(d)
        if width < 2 * spacing.max():
            raise ResolutionError(f"Gaussian width {width} spans fewer than 2 cells")
        vals = -depth * np.exp(-np.sum((x - center) ** 2, axis=-1) / width**2)
        form = AnalyticForm(fam, {"depth": depth, "width": width, "center": tuple(center.tolist())})
    elif fam == "BallIndicator":
        depth = float(params.get("depth", 1.0))
        radius = _positive("radius", params.get("radius", 1.0))
        if radius < 2 * spacing.max():
            raise ResolutionError(f"ball radius {radius} spans fewer than 2 cells")
        vals = np.where(np.sum(x * x, axis=-1) < radius**2, -depth, 0.0)
        form = AnalyticForm(fam, {"depth": depth, "radius": radius})
    elif fam == "SingleSite":
        if not isinstance(domain, LatticeWindow):
            raise ParameterError("SingleSite needs a lattice window")
        depth = float(params.get("depth", 1.0))
        site = np.asarray(params.get("site", np.zeros(d)), dtype=int) * np.ones(d, dtype=int)
        vals = np.zeros(domain.shape)
        idx = tuple(int(s + r) for s, r in zip(site, domain.radius))
        if any(i < 0 or i >= n for i, n in zip(idx, domain.shape)):
            raise ParameterError("site lies outside the window")
        vals[idx] = -depth
        form = AnalyticForm(fam, {"depth": depth, "site": tuple(int(v) for v in site)})
    elif fam == "AnnularFourier":
        if not isinstance(domain, ContinuumBox):
            raise ParameterError("AnnularFourier needs a continuum box")
        inner = _positive("inner", params.get("inner", 2.0), allow_zero=True)
        outer = _positive("outer", params.get("outer", 3.0))
        amp = _positive("amplitude", params.get("amplitude", 1.0))
        if outer <= inner:
            raise ParameterError("outer radius must exceed inner radius")
        dk = 2 * math.pi / np.asarray(domain.lengths)
        nyquist = math.pi / spacing.max()
        if outer > 0.9 * nyquist or (outer - inner) < 2 * dk.max():
            raise ResolutionError("annulus not resolved by the dual grid")
        k = domain.dual_points()
        phase = np.exp(1j * (k @ np.asarray(domain.origin) + 0.5 * (k @ spacing)))
        bump = _bump(np.sqrt(np.sum(k * k, axis=-1)), inner, outer)
        raw = np.fft.ifftn(bump * phase).real * np.prod(domain.shape)
        vals = -amp * raw / raw.max()
        form = AnalyticForm(fam, {"inner": inner, "outer": outer, "amplitude": amp})
    elif fam == "RandomSites":
        if not isinstance(domain, LatticeWindow):
            raise ParameterError("RandomSites needs a lattice window")
        depth_max = _positive("depth_max", params.get("depth_max", 1.0))
        rad = int(params.get("support_radius", 2))
        if any(rad >= r for r in domain.radius):
            raise ResolutionError("support must lie strictly inside the window")
        rng = _philox(int(params.get("seed", 0)), int(params.get("stream", 0)))
        vals = np.zeros(domain.shape)
        core = tuple(slice(r - rad, r + rad + 1) for r in domain.radius)
        vals[core] = -rng.uniform(0.0, depth_max, size=(2 * rad + 1,) * d)
        keep = rng.random((2 * rad + 1,) * d) < float(params.get("fill", 0.5))
        vals[core] *= keep
        form = AnalyticForm(fam, {"depth_max": depth_max, "support_radius": rad, "seed": int(params.get("seed", 0)), "stream": int(params.get("stream", 0))})
    else:
        raise ParameterError(f"unknown potential family {family!r}")
    return PotentialField(vals, domain, form)


def analytic_integral(potential: PotentialField, func: Callable[[np.ndarray], np.ndarray]) -> float | None:
    """Exact-form spatial integral of ``func(V_-)``, or ``None`` if unavailable.

    ``func`` must vanish at 0.  Supports Gaussian wells, ball indicators and
    single sites; used by the closed-form route of the semiclassical split.
    """
    form = potential.analytic
    if form is None:
        return None
    d = potential.dim
    depth = float(form.params.get("depth", 0.0))
    if depth <= 0:
        return 0.0
    f = lambda v: float(np.asarray(func(np.atleast_1d(np.asarray(v, dtype=float))))[0])
    if form.family == "BallIndicator":
        return f(depth) * unit_ball_volume(d) * form.params["radius"] ** d
    if form.family == "SingleSite":
        return f(depth)
    if form.family == "Gaussian":
        w = form.params["width"]
        radial = lambda r: f(depth * math.exp(-r * r)) * r ** (d - 1)
        val, _ = integrate.quad(radial, 0.0, math.inf, epsabs=0.0, epsrel=1e-12, limit=400)
        return unit_sphere_area(d) * w**d * val
    return None

