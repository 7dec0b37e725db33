"""The G function ``G(u) = u * int_{T<u} T^{-1} deta / (2 pi)^d`` and regime classification.

Two independent routes are provided:

* :func:`g_closed_form` evaluates the catalog of explicit formulas (upper
  bounds for G, exact for pure powers);
* :func:`g_numeric` evaluates the layer-cake form
  ``(2 pi)^{-d} [ |{T<u}| + int_0^1 |{T<su}| s^{-2} ds ]`` using
  :func:`boundcount.kernel.excess_volume` and a dyadic Gauss rule in
  ``t = sqrt(s)``.

For the finite-temperature BCS symbol both routes use ``T - 2/beta``, since
bound states are counted below the bottom ``2/beta`` of its spectrum.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from boundcount.errors import NoCatalogError, ParameterError
from boundcount.kernel import (
    KineticSymbol,
    MCConfig,
    SymbolKind,
    _pair_volume,
    _philox,
    excess_volume,
    unit_ball_volume,
    unit_sphere_area,
)

# Proved divergence is reported with this value; overflow never produces it
# because every closed form is evaluated under ``np.errstate(over="raise")``.
DIVERGENT = math.inf


class GMethod(str, enum.Enum):
    CLOSED_FORM = "ClosedForm"
    LAYER_CAKE = "LayerCake"
    MONTE_CARLO = "MonteCarlo"


@dataclass(frozen=True)
class GEvaluation:
    u: float
    value: float
    error: float
    method: GMethod

    @property
    def divergent(self) -> bool:
        return self.value == DIVERGENT


@dataclass(frozen=True)
class QuadConfig:
    """Settings for the layer-cake quadrature."""

    min_panels: int = 40
    max_panels: int = 4000
    rel_tol: float = 1e-13
    growth_window: int = 3
    mc: MCConfig = field(default_factory=lambda: MCConfig(samples=400_000))


def _two_pi_d(d: int) -> float:
    return (2 * math.pi) ** d


# ---------------------------------------------------------------------------
# closed forms


def g_closed_values(symbol: KineticSymbol, u) -> np.ndarray:
    """Vectorized catalog evaluation; raises :class:`NoCatalogError`."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ParameterError("u must be nonnegative")
    d = symbol.dim
    p = symbol.params
    kind = symbol.kind
    B = unit_ball_volume(d)
    c = B / _two_pi_d(d)
    with np.errstate(over="raise", invalid="raise"):
        if kind is SymbolKind.POWER:
            gam = p["gamma"]
            if gam >= d:
                return np.where(u > 0, DIVERGENT, 0.0)
            return unit_sphere_area(d) / ((d - gam) * _two_pi_d(d)) * u ** (d / gam)
        if kind is SymbolKind.SHIFTED_POWER:
            gam, beta = p["gamma"], p["beta"]
            excess = np.maximum(u / beta - 1.0, 0.0)
            if gam > d:
                cap = (math.pi * d / gam) / math.sin(math.pi * d / gam)
                return beta ** ((d - gam) / gam) * c * u * np.minimum(excess ** (d / gam), cap)
            if gam == d:
                return c * u * np.log1p(excess)
            raise NoCatalogError("ShiftedPower has a catalog entry only for gamma >= d")
        if kind is SymbolKind.MASSIVE_RELATIVISTIC:
            if d < 3:
                raise NoCatalogError("MassiveRelativistic catalog needs d >= 3")
            m = p["m"]
            return d / (d - 2) * c * u ** (d / 2) * (u + 2 * m) ** (d / 2)
        if kind is SymbolKind.RELATIVISTIC_PAIR:
            Pn = float(np.linalg.norm(p["P"]))
            M = p["M"]
            mt = 0.5 * (p["mu_minus"] - p["mu_plus"])
            vol = _pair_volume(d, u, Pn, M, mt)
            if d >= 4:
                return 3.0 * vol / _two_pi_d(d)
            if d == 3:
                q = Pn**2 / M**2
                log_term = math.log(math.sqrt(1 + q) + math.sqrt(2 + q))
                return 3.0 * vol / _two_pi_d(3) + u * B / (math.sqrt(2) * _two_pi_d(3)) * (Pn**2 + M**2) * log_term
            raise NoCatalogError("RelativisticPair catalog needs d >= 3")
        if kind is SymbolKind.ULTRA_RELATIVISTIC_PAIR:
            Pn = float(np.linalg.norm(p["P"]))
            if Pn == 0.0:
                if d < 2:
                    raise NoCatalogError("UltraRelativisticPair with P=0 needs d >= 2")
                # T = 2|eta| is a scaled power
                return d / (d - 1) * c * (u / 2) ** d
            if d < 4:
                raise NoCatalogError("UltraRelativisticPair catalog needs d >= 4")
            return (d - 1) * B / ((d - 3) * (4 * math.pi) ** d) * u ** ((d - 1) / 2) * (u + Pn) * (u + 2 * Pn) ** ((d - 1) / 2)
        if kind is SymbolKind.HEAVY_MASSLESS_PAIR:
            if d < 2:
                raise NoCatalogError("HeavyMasslessPair catalog needs d >= 2")
            Pn = float(np.linalg.norm(p["P"]))
            m = p["m"]
            g = math.hypot(Pn, m)
            root = np.sqrt(u * u + 2 * u * g + m * m)
            first = u**d * (u + g) * (u + 2 * g) ** d / root ** (d + 1)
            second = 2.0**d * (g / m) ** d * u**d * (u + 2 * g) / (root + m)
            return B / (4 * math.pi) ** d * (first + second)
    raise NoCatalogError(f"no closed form for {kind.value}")


def g_closed_form(symbol: KineticSymbol, u: float) -> GEvaluation:
    u = float(u)
    value = float(g_closed_values(symbol, u))
    return GEvaluation(u, value, 0.0, GMethod.CLOSED_FORM)


def has_catalog(symbol: KineticSymbol) -> bool:
    try:
        g_closed_values(symbol, 1.0)
    except NoCatalogError:
        return False
    return True


# ---------------------------------------------------------------------------
# layer-cake route

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(16)
_NODES = 0.5 * (_NODES + 1.0)
_WEIGHTS = 0.5 * _WEIGHTS


def volume_onset(symbol: KineticSymbol, s_max: float) -> float:
    """Largest level (up to ``s_max``) at which the excess sublevel set is still null.

    Located by bisection on the volume itself; zero whenever ``{T' < s}`` has
    positive measure for every ``s > 0``.
    """
    tiny = 1e-300
    if s_max <= 0 or excess_volume(symbol, [tiny])[0][0] > 0:
        return 0.0
    if excess_volume(symbol, [s_max])[0][0] == 0:
        return s_max
    lo, hi = 0.0, s_max
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if excess_volume(symbol, [mid])[0][0] > 0:
            hi = mid
        else:
            lo = mid
    return lo


def scaled_volume_integral(symbol: KineticSymbol, s, cfg: QuadConfig | None = None):
    """``J(s) = int_0^1 |{T' < r s}| r^{-2} dr`` with ``T' = T - floor``.

    Returns ``(value, error, divergent)`` arrays.  With ``r = t^2`` the
    integrand becomes ``2 t^{-3} |{T' < s t^2}|``, summed over dyadic panels
    in ``t``.  Divergence is declared when panel contributions stop
    decaying for ``growth_window`` consecutive panels.
    """
    cfg = cfg or QuadConfig()
    s = np.atleast_1d(np.asarray(s, dtype=float))
    total = np.zeros_like(s)
    err = np.zeros_like(s)
    state = np.where(s > 0, 0, 1)  # 0 active, 1 converged, 2 divergent
    history: list[np.ndarray] = []
    rising = np.zeros(s.shape, dtype=int)
    onset = volume_onset(symbol, float(s.max()) if s.size else 0.0)
    cut = np.sqrt(onset / np.where(s > 0, s, 1.0))
    for j in range(cfg.max_panels):
        act = state == 0
        if not np.any(act):
            break
        hi = 2.0**-j
        # the volume vanishes below the onset, so start the panel at the kink
        lo = np.maximum(hi / 2, cut[act])
        width = np.maximum(hi - lo, 0.0)
        # quadratic clustering at a kink absorbs square-root onsets
        kinked = (lo > hi / 2)[:, None]
        x = np.where(kinked, _NODES**2, _NODES)
        t = lo[:, None] + width[:, None] * x
        w = width[:, None] * _WEIGHTS * np.where(kinked, 2 * _NODES, 1.0)
        arg = s[act, None] * t**2
        vol, _, _ = excess_volume(symbol, arg.ravel(), cfg.mc)
        contrib = np.zeros_like(s)
        contrib[act] = np.sum(2.0 * w * vol.reshape(arg.shape) / t**3, axis=1)
        total += contrib
        if history:
            prev = history[-1]
            up = act & (contrib > 0) & (contrib >= prev * (1 - 1e-9))
            rising = np.where(up, rising + 1, 0)
        history.append(contrib)
        if j + 1 < cfg.min_panels:
            continue
        div = act & (rising >= cfg.growth_window)
        state[div] = 2
        prev = history[-2]
        ratio = np.where(prev > 0, contrib / np.where(prev > 0, prev, 1.0), 0.0)
        small = contrib <= cfg.rel_tol * np.maximum(total, 1e-300)
        done = act & ~div & small & (ratio < 1)
        tail = np.where(ratio < 1, contrib * ratio / np.maximum(1 - ratio, 1e-12), 0.0)
        total[done] += tail[done]
        err[done] = tail[done]
        state[done] = 1
    still = state == 0
    if np.any(still):
        # ran out of panels while still decaying: report the geometric tail as error
        prev, last = history[-2], history[-1]
        ratio = np.where(prev > 0, last / np.where(prev > 0, prev, 1.0), 1.0)
        tail = np.where(ratio < 1, last * ratio / np.maximum(1 - ratio, 1e-12), np.inf)
        err[still] = tail[still]
        total[still] += np.where(np.isfinite(tail), tail, 0.0)[still]
        state[still & ~np.isfinite(tail)] = 2
    divergent = state == 2
    total[divergent] = DIVERGENT
    return total, err, divergent


def _mc_g_values(symbol: KineticSymbol, s: np.ndarray, cfg: QuadConfig):
    """Direct importance-weighted estimate for sampled symbols (torus only)."""
    d = symbol.dim
    mc = cfg.mc
    rng = _philox(mc.seed, 7)
    box = (2 * math.pi) ** d
    vals = np.empty(0)
    for start in range(0, mc.samples, mc.batch):
        n = min(mc.batch, mc.samples - start)
        pts = rng.uniform(-math.pi, math.pi, size=(n, d))
        vals = np.concatenate([vals, symbol.excess(pts)])
    out = np.zeros_like(s)
    errs = np.zeros_like(s)
    divergent = np.zeros(s.shape, dtype=bool)
    N = vals.size
    for i, u in enumerate(s):
        if u <= 0:
            continue
        estimates = []
        for tau in (u * 1e-6, u * 1e-8, u * 1e-10):
            w = np.where(vals < u, 1.0 / np.maximum(vals, tau), 0.0)
            estimates.append(u * box * w.mean() / _two_pi_d(d))
        grow = estimates[2] > 1.5 * estimates[1] and estimates[1] > 1.5 * estimates[0]
        if grow or estimates[-1] > 1e6:
            divergent[i] = True
            out[i] = DIVERGENT
            continue
        w = np.where(vals < u, 1.0 / np.maximum(vals, u * 1e-10), 0.0)
        out[i] = u * box * w.mean() / _two_pi_d(d)
        errs[i] = u * box * w.std(ddof=1) / math.sqrt(N) / _two_pi_d(d)
    return out, errs, divergent


def g_numeric_values(symbol: KineticSymbol, u, cfg: QuadConfig | None = None):
    """Vectorized layer-cake evaluation; returns ``(values, errors, method)``."""
    cfg = cfg or QuadConfig()
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(u < 0) or np.any(np.isnan(u)):
        raise ParameterError("u must be nonnegative")
    if symbol.kind is SymbolKind.DISCRETE_CUSTOM:
        vals, errs, _ = _mc_g_values(symbol, u, cfg)
        return vals, errs, GMethod.MONTE_CARLO
    vol, verr, _ = excess_volume(symbol, u, cfg.mc)
    J, jerr, div = scaled_volume_integral(symbol, u, cfg)
    vals = np.where(div, DIVERGENT, (vol + np.where(div, 0.0, J)) / _two_pi_d(symbol.dim))
    vals = np.where(u == 0, 0.0, vals)
    errs = (verr + jerr) / _two_pi_d(symbol.dim)
    return vals, errs, GMethod.LAYER_CAKE


def g_numeric(symbol: KineticSymbol, u: float, quad_config: QuadConfig | None = None) -> GEvaluation:
    """G(u) through the layer-cake route, with ``+inf`` on detected divergence."""
    vals, errs, method = g_numeric_values(symbol, [float(u)], quad_config)
    return GEvaluation(float(u), float(vals[0]), float(errs[0]), method)


# ---------------------------------------------------------------------------
# tabulated G for the lattice Laplacian


@functools.lru_cache(maxsize=8)
def _lattice_table(d: int, points: int = 480) -> tuple[np.ndarray, np.ndarray]:
    """log-log table of G for the lattice Laplacian on [1e-9, 4d].

    Built incrementally: ``C(u) = int_0^u V(t) t^{-2} dt`` is accumulated
    interval by interval, seeded by the small-u asymptotics
    ``V(t) ~ |B_1| t^{d/2}`` (relative error O(u)).
    """
    symbol = KineticSymbol.discrete_laplacian(d)
    top = 4.0 * d
    # van Hove kinks of the lattice volume sit at T = 4j; make them panel edges
    grid = np.union1d(np.geomspace(1e-9, top, points), 4.0 * np.arange(1, d + 1))
    B = unit_ball_volume(d)
    h = d / 2
    if h <= 1:
        raise NoCatalogError("lattice G is infinite for d <= 2")
    C0 = B * grid[0] ** (h - 1) / (h - 1)
    lo, hi = np.log(grid[:-1]), np.log(grid[1:])
    x = lo[:, None] + (hi - lo)[:, None] * _NODES
    t = np.exp(x)
    vol, _, _ = excess_volume(symbol, t.ravel())
    inc = np.sum((hi - lo)[:, None] * _WEIGHTS * vol.reshape(t.shape) / t, axis=1)
    C = C0 + np.concatenate([[0.0], np.cumsum(inc)])
    V, _, _ = excess_volume(symbol, grid)
    G = (V + grid * C) / _two_pi_d(d)
    return np.log(grid), np.log(G)


def lattice_g_table(d: int, u) -> np.ndarray:
    """G for the lattice Laplacian from the cached table (d >= 3).

    Linear in u above 4d, where {T < u} is the whole torus.  Below the table
    the leading power law of the continuum Laplacian is used.
    """
    from scipy.interpolate import PchipInterpolator

    lg, lG = _lattice_table(d)
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    top = math.exp(lg[-1])
    slope = math.exp(lG[-1]) / top
    big = u >= top
    out[big] = slope * u[big]
    small = (u > 0) & (u < math.exp(lg[0]))
    out[small] = math.exp(lG[0]) * (u[small] / math.exp(lg[0])) ** (d / 2)
    mid = (u > 0) & ~big & ~small
    if np.any(mid):
        out[mid] = np.exp(PchipInterpolator(lg, lG)(np.log(u[mid])))
    return out


def watson_constant(d: int = 3) -> float:
    """``int 1/T deta/(2 pi)^d`` for the lattice Laplacian.

    d = 3 uses the Gamma-function closed form of the simple-cubic Watson
    integral; other d >= 3 come from the layer-cake table.
    """
    if d == 3:
        g = math.gamma
        return math.sqrt(6) / (192 * math.pi**3) * g(1 / 24) * g(5 / 24) * g(7 / 24) * g(11 / 24)
    lg, lG = _lattice_table(d)
    return math.exp(lG[-1] - lg[-1])


# ---------------------------------------------------------------------------
# regime classification


class Regime(str, enum.Enum):
    WEAK_COUPLING = "WeakCoupling"
    QUANTITATIVE = "Quantitative"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class ProbeConfig:
    probes: tuple[float, ...] = tuple(2.0**-k for k in range(1, 21))
    top: float = 1.0
    divergence_threshold: float = 1e6
    growth_factor: float = 1.5
    window: int = 3
    flat_exponent: float = -0.02
    decay_exponent: float = -0.1
    tolerance: float = 1e-2


@dataclass(frozen=True)
class RegimeVerdict:
    regime: Regime
    evidence: tuple[tuple[float, float], ...]
    growth_exponent: float
    note: str = "numerical evidence; assumes 1/T integrable away from the zero set"


def _layer_masses(symbol: KineticSymbol, edges: np.ndarray, cfg: ProbeConfig) -> np.ndarray:
    """``int_{a <= T' < b} dη / T'`` for consecutive edges b > a, via
    ``V(b)/b - V(a)/a + int_a^b V(s) s^-2 ds``."""
    if symbol.kind is SymbolKind.DISCRETE_CUSTOM:
        mc = MCConfig(samples=1_000_000)
        rng = _philox(mc.seed, 11)
        pts = rng.uniform(-math.pi, math.pi, size=(mc.samples, symbol.dim))
        vals = symbol.excess(pts)
        box = (2 * math.pi) ** symbol.dim
        out = []
        for b, a in zip(edges[:-1], edges[1:]):
            sel = (vals >= a) & (vals < b)
            out.append(box * np.sum(1.0 / vals[sel]) / vals.size if sel.sum() >= 50 else math.nan)
        return np.array(out)
    b, a = edges[:-1], edges[1:]
    Vb, _, _ = excess_volume(symbol, b)
    Va, _, _ = excess_volume(symbol, a)
    la, lb = np.log(a), np.log(b)
    x = la[:, None] + (lb - la)[:, None] * _NODES
    s = np.exp(x)
    vs, _, _ = excess_volume(symbol, s.ravel())
    inner = np.sum((lb - la)[:, None] * _WEIGHTS * vs.reshape(s.shape) / s, axis=1)
    return Vb / b - Va / a + inner


def thickness_classify(symbol: KineticSymbol, probe_config: ProbeConfig | None = None) -> RegimeVerdict:
    """Classify ``symbol`` as weak-coupling (thick zero set) or quantitative.

    Evidence is the sequence ``(u_k, I_k)`` with
    ``I_k = int_{u_k <= T' < top} dη / T'``.  The layer masses
    ``I_{k+1} - I_k`` decay geometrically when ``1/T'`` is integrable near the
    zero set and do not decay otherwise; ``growth_exponent`` is their fitted
    log-log slope against ``1/u`` (nonnegative means non-summable).
    """
    cfg = probe_config or ProbeConfig()
    probes = np.asarray(sorted(cfg.probes, reverse=True), dtype=float)
    if np.any(probes <= 0) or probes[0] >= cfg.top:
        raise ParameterError("probes must be positive and below the top level")
    edges = np.concatenate([[cfg.top], probes])
    masses = _layer_masses(symbol, edges, cfg)
    if np.any(np.isnan(masses)):
        cum = np.nancumsum(masses)
        return RegimeVerdict(Regime.INCONCLUSIVE, tuple(zip(probes.tolist(), cum.tolist())), math.nan, "too few samples in the deepest layers")
    cum = np.cumsum(masses) / _two_pi_d(symbol.dim)
    evidence = tuple(zip(probes.tolist(), cum.tolist()))
    tail = slice(len(probes) // 2, None)
    pos = masses[tail] > 0
    if pos.sum() >= 2:
        slope = float(np.polyfit(np.log(1 / probes[tail][pos]), np.log(masses[tail][pos]), 1)[0])
    else:
        slope = -math.inf
    w = cfg.window
    last = cum[-(w + 1):]
    keeps_growing = bool(np.all(last[1:] > cfg.growth_factor * last[:-1]))
    recent = masses[-(w + 1):]
    flat = bool(masses[-1] > 0 and np.all(recent[1:] >= 2.0**cfg.flat_exponent * recent[:-1]))
    if cum[-1] > cfg.divergence_threshold or keeps_growing or (slope >= cfg.flat_exponent and flat):
        return RegimeVerdict(Regime.WEAK_COUPLING, evidence, slope)
    if slope <= cfg.decay_exponent or masses[-1] == 0:
        rho = 2.0**slope if math.isfinite(slope) else 0.0
        rest = masses[-1] * rho / (1 - rho) / _two_pi_d(symbol.dim) if cum[-1] > 0 else 0.0
        rel = [abs(cum[-i] - cum[-i - 1]) / max(cum[-1], 1e-300) for i in range(1, w + 1)]
        if rest <= cfg.tolerance * max(cum[-1], 1e-300) and max(rel) < cfg.tolerance:
            return RegimeVerdict(Regime.QUANTITATIVE, evidence, slope)
    return RegimeVerdict(Regime.INCONCLUSIVE, evidence, slope)
