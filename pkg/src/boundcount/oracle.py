"""Independent eigenvalue counters for discretized operators.

Lattice operators ``-Delta + V`` live on a Dirichlet window; continuum
operators ``T(p) + V`` on a periodic grid where ``T`` is diagonal in the
unitary DFT basis.  Counts below a threshold come from matrix inertia
(Sylvester's law) and are exact for the discretized matrix.  Extremal
eigenvalues come from LAPACK or LOBPCG and are cross-checked against the
inertia count.
"""

from __future__ import annotations

import functools
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import fft as sfft
from scipy import integrate, optimize, special

from boundcount.errors import (
    ConvergenceError,
    FactorizationError,
    ParameterError,
    SupportTooLargeError,
    WindowTooSmallError,
)
from boundcount.kernel import (
    ContinuumBox,
    KineticSymbol,
    LatticeWindow,
    PotentialField,
    SymbolKind,
    _philox,
)

log = logging.getLogger(__name__)

DENSE_CAP = 4096
SCHUR_SUPPORT_CAP = 600
SPARSE_CAP = 60_000


@dataclass(frozen=True)
class EigencountResult:
    """Counts ``#{lambda < threshold_low}`` and ``#{lambda > threshold_high}``."""

    count_below: int
    count_above: int
    extremal: tuple[float, ...]
    box: dict
    threshold_low: float
    threshold_high: float
    method: str
    notes: tuple[str, ...] = ()
    log_abs_lowest: float | None = None
    vectors: np.ndarray | None = field(default=None, repr=False, compare=False)
    count_exact: bool = True

    @property
    def lowest(self) -> float:
        return self.extremal[0] if self.extremal else math.nan

    def row(self, instance_id: str = "") -> dict:
        return {
            "instance_id": instance_id,
            "box": _box_text(self.box),
            "threshold": self.threshold_low,
            "count": self.count_below,
            "lowest_eig": self.lowest,
            "method": self.method,
        }


@dataclass(frozen=True)
class BSCount:
    E: float
    count: int
    top_eigenvalues: tuple[float, ...]
    support_size: int
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class SpectrumConfig:
    """Settings for the continuum eigensolver."""

    k: int = 4
    tol: float = 1e-8
    maxiter: int = 5000
    seed: int = 0
    dense_cap: int = DENSE_CAP
    max_block: int = 64


def _box_text(box: dict) -> str:
    return ";".join(f"{k}={v}" for k, v in box.items())


# ---------------------------------------------------------------------------
# inertia helpers


def _sturm_count(diag: np.ndarray, off: np.ndarray, sigma: float) -> tuple[int, bool]:
    """Negative pivots of ``T - sigma`` for a symmetric tridiagonal ``T``."""
    count = 0
    jitter = False
    d = 1.0
    off2 = off * off
    for i in range(diag.size):
        d = diag[i] - sigma - (off2[i - 1] / d if i > 0 else 0.0)
        if d == 0.0:
            d = -1e-13 if i == 0 else 1e-13 * max(abs(off[i - 1]), 1.0)
            jitter = True
        count += d < 0
    return int(count), jitter


def _ldl_inertia(A: np.ndarray) -> tuple[int, int, int]:
    """(negative, zero, positive) eigenvalue counts from a Bunch-Kaufman factorization."""
    _, D, _ = sla.ldl(A, hermitian=True)
    n = D.shape[0]
    neg = zero = pos = 0
    i = 0
    while i < n:
        if i + 1 < n and D[i + 1, i] != 0:
            ev = np.linalg.eigvalsh(D[i : i + 2, i : i + 2])
            i += 2
        else:
            ev = np.array([D[i, i].real])
            i += 1
        neg += int(np.sum(ev < 0))
        pos += int(np.sum(ev > 0))
        zero += int(np.sum(ev == 0))
    return neg, zero, pos


def _splu_inertia(A: sp.csc_matrix) -> tuple[int, int, int]:
    """Inertia from a symmetric-mode SuperLU factorization without pivoting."""
    lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise FactorizationError("SuperLU applied a non-symmetric permutation")
    u = lu.U.diagonal()
    return int(np.sum(u < 0)), int(np.sum(u == 0)), int(np.sum(u > 0))


# ---------------------------------------------------------------------------
# lattice operators


def _dirichlet_eigs(n: int) -> np.ndarray:
    """Eigenvalues of the 1-d Dirichlet second difference on n sites, DST-I order."""
    k = np.arange(1, n + 1)
    return 2.0 - 2.0 * np.cos(np.pi * k / (n + 1))


def _dirichlet_modes(n: int) -> np.ndarray:
    """Orthonormal DST-I basis; row k, column x."""
    k = np.arange(1, n + 1)[:, None]
    x = np.arange(1, n + 1)[None, :]
    return math.sqrt(2.0 / (n + 1)) * np.sin(np.pi * k * x / (n + 1))


def _embed(potential: PotentialField, window_radius) -> tuple[np.ndarray, LatticeWindow]:
    if not potential.is_lattice:
        raise ParameterError("lattice_eigencount needs a lattice potential")
    dom = potential.domain
    d = dom.dim
    if window_radius is None:
        target = tuple(dom.radius)
    else:
        target = tuple(int(r) for r in np.broadcast_to(np.asarray(window_radius), (d,)))
    vals = potential.values
    out = np.zeros(tuple(2 * r + 1 for r in target))
    src, dst = [], []
    for r_old, r_new in zip(dom.radius, target):
        keep = min(r_old, r_new)
        src.append(slice(r_old - keep, r_old + keep + 1))
        dst.append(slice(r_new - keep, r_new + keep + 1))
    out[tuple(dst)] = vals[tuple(src)]
    lost = np.abs(vals).sum() - np.abs(vals[tuple(src)]).sum()
    if lost > 0:
        raise WindowTooSmallError("window cuts off part of the potential support")
    scale = np.abs(out).max()
    if scale > 0:
        for axis in range(d):
            edge = np.take(np.abs(out), [0, out.shape[axis] - 1], axis=axis)
            if edge.max() > 1e-12 * scale:
                raise WindowTooSmallError("potential support touches the window boundary")
    return out, LatticeWindow(target)


def lattice_hamiltonian(values: np.ndarray) -> sp.csc_matrix:
    """Sparse ``-Delta_d + V`` on the window with Dirichlet truncation."""
    shape = values.shape
    mats = []
    for axis, n in enumerate(shape):
        t1 = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
        term = sp.identity(1, format="csr")
        for j, m in enumerate(shape):
            term = sp.kron(term, t1 if j == axis else sp.identity(m), format="csr")
        mats.append(term)
    H = sum(mats) + sp.diags(values.ravel())
    return sp.csc_matrix(H)


class _SchurInertia:
    """Exact inertia of ``H0 + P D P^T - sigma`` through the support block.

    ``H0`` is the free Dirichlet Laplacian, diagonal in the DST-I basis, and
    ``D`` the potential on its support S.  Haynsworth's inertia additivity
    gives ``neg(H - s) = neg(H0 - s) + pos(D^-1 + G_SS) - pos(D^-1)`` with
    ``G_SS = P^T (H0 - s)^-1 P``.
    """

    def __init__(self, values: np.ndarray, chunk: int = 8192):
        self.shape = values.shape
        support = np.nonzero(values)
        self.sites = np.stack(support, axis=1)
        self.D = values[support]
        self.m = self.D.size
        if self.m > SCHUR_SUPPORT_CAP:
            raise SupportTooLargeError(f"support of {self.m} sites exceeds {SCHUR_SUPPORT_CAP}")
        self.lams = [_dirichlet_eigs(n) for n in self.shape]
        self.modes = [_dirichlet_modes(n) for n in self.shape]
        self.free = functools.reduce(np.add, np.ix_(*self.lams)).ravel() if len(self.shape) > 1 else self.lams[0]
        self.chunk = chunk

    def green(self, sigma: float) -> np.ndarray:
        """``G_SS(sigma)`` by an explicit mode sum, chunked over the first axis."""
        d = len(self.shape)
        cols = [self.modes[j][:, self.sites[:, j]] for j in range(d)]  # (n_j, m)
        G = np.zeros((self.m, self.m))
        rest_shape = self.shape[1:]
        rest_lam = functools.reduce(np.add, np.ix_(*self.lams[1:])).ravel() if d > 2 else (self.lams[1] if d == 2 else np.zeros(1))
        if d > 1:
            rest = cols[1]
            for j in range(2, d):
                rest = (rest[:, None, :] * cols[j][None, :, :]).reshape(-1, self.m)
        else:
            rest = np.ones((1, self.m))
        del rest_shape
        for k1 in range(self.shape[0]):
            F = cols[0][k1][None, :] * rest  # (prod rest, m)
            w = 1.0 / (self.lams[0][k1] + rest_lam - sigma)
            G += (F * w[:, None]).T @ F
        return G

    def counts(self, sigma: float) -> tuple[int, int]:
        """(#eigenvalues < sigma, #eigenvalues > sigma)."""
        if np.any(self.free == sigma):
            raise FactorizationError("shift coincides with a free eigenvalue")
        neg0 = int(np.sum(self.free < sigma))
        pos0 = self.free.size - neg0
        if self.m == 0:
            return neg0, pos0
        Dinv = 1.0 / self.D
        ev = np.linalg.eigvalsh(np.diag(Dinv) + self.green(sigma))
        neg = neg0 + int(np.sum(ev > 0)) - int(np.sum(Dinv > 0))
        pos = pos0 + int(np.sum(ev < 0)) - int(np.sum(Dinv < 0))
        return neg, pos


def _dst_preconditioner(shape: tuple[int, ...], shift: float) -> Callable[[np.ndarray], np.ndarray]:
    lam = functools.reduce(np.add, np.ix_(*[_dirichlet_eigs(n) for n in shape])) if len(shape) > 1 else _dirichlet_eigs(shape[0])
    inv = 1.0 / (lam + shift)

    def apply(X):
        X = np.asarray(X)
        cols = X.reshape(shape + (-1,))
        axes = tuple(range(len(shape)))
        Y = sfft.dstn(cols, type=1, axes=axes, norm="ortho")
        Y *= inv[..., None]
        return sfft.idstn(Y, type=1, axes=axes, norm="ortho").reshape(X.shape)

    return apply


def _lobpcg_lowest(
    matvec, precond, n: int, k: int, tol: float, maxiter: int, seed: int, dtype=float, X0: np.ndarray | None = None, guard: int = 3
) -> tuple[np.ndarray, np.ndarray]:
    """k lowest eigenpairs with a residual check; raises ConvergenceError.

    The block carries ``guard`` extra vectors to speed up convergence of the
    wanted ones; only the first ``k`` residuals are checked.  Unconverged
    runs are restarted from their own Ritz vectors until ``maxiter`` total
    iterations are spent.
    """
    A = spla.LinearOperator((n, n), matvec=matvec, matmat=matvec, dtype=dtype)
    M = spla.LinearOperator((n, n), matvec=precond, matmat=precond, dtype=dtype)
    kb = min(k + guard, n)
    rng = _philox(seed, 101)
    X = rng.standard_normal((n, kb))
    if dtype is complex:
        X = X + 1j * rng.standard_normal((n, kb))
    if X0 is not None and X0.shape[0] == n:
        m = min(kb, X0.shape[1])
        X[:, :m] = X0[:, :m]
    spent = 0
    chunk = min(maxiter, 400)
    while True:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            vals, vecs = spla.lobpcg(A, X, M=M, tol=tol, maxiter=chunk, largest=False)
        spent += chunk
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        res = np.linalg.norm(matvec(vecs) - vecs * vals, axis=0) / np.maximum(np.linalg.norm(vecs, axis=0), 1e-300)
        bad = res[:k] > tol * np.maximum(1.0, np.abs(vals[:k]))
        if not np.any(bad):
            return vals[:k], vecs[:, :k]
        if spent >= maxiter:
            raise ConvergenceError(f"LOBPCG residual {res[:k].max():.2e} above {tol:.0e} after {spent} iterations")
        X = vecs


def lattice_eigencount(
    potential: PotentialField,
    window_radius=None,
    thresholds: tuple[float, float] | None = None,
    *,
    k: int = 4,
    method: str = "auto",
    seed: int = 0,
) -> EigencountResult:
    """Exact eigenvalue counts of ``-Delta_d + V`` on a Dirichlet window.

    ``thresholds=(low, high)`` defaults to ``(0, 4d)``.  ``method`` is one of
    ``auto``, ``sturm`` (d=1), ``dense``, ``schur`` or ``sparse``.  ``k``
    lowest eigenvalues are returned in ``extremal`` (``k=0`` skips them).
    """
    values, window = _embed(potential, window_radius)
    d = values.ndim
    n = values.size
    low, high = thresholds if thresholds is not None else (0.0, 4.0 * d)
    notes: list[str] = []
    support = int(np.count_nonzero(values))
    if method == "auto":
        if d == 1:
            method = "sturm"
        elif n <= DENSE_CAP:
            method = "dense"
        elif support <= SCHUR_SUPPORT_CAP:
            method = "schur"
        elif n <= SPARSE_CAP:
            method = "sparse"
        else:
            raise SupportTooLargeError("window and support both too large for exact inertia")
    k = min(k, n)
    extremal: np.ndarray = np.empty(0)
    if method == "sturm":
        if d != 1:
            raise ParameterError("sturm counting needs d=1")
        diag = 2.0 + values
        off = -np.ones(n - 1)
        below, jit1 = _sturm_count(diag, off, low)
        not_above, jit2 = _sturm_count(diag, off, high)
        # eigenvalues equal to ``high`` have measure zero; counted as not above
        above = n - not_above
        if jit1 or jit2:
            notes.append("zero pivot replaced by 1e-13 jitter")
        if k:
            extremal = sla.eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, k - 1))
    elif method == "dense":
        H = lattice_hamiltonian(values).toarray()
        below = _ldl_inertia(H - low * np.eye(n))[0]
        above = _ldl_inertia(high * np.eye(n) - H)[0]
        if k:
            extremal = sla.eigvalsh(H, subset_by_index=[0, k - 1])
    elif method == "schur":
        schur = _SchurInertia(values)
        below = schur.counts(low)[0]
        above = schur.counts(high)[1]
        if k:
            extremal = _lattice_lobpcg(values, max(k, below + 1) if below < n else k, seed)
    elif method == "sparse":
        H = lattice_hamiltonian(values)
        eye = sp.identity(n, format="csc")
        try:
            below = _splu_inertia(sp.csc_matrix(H - low * eye))[0]
            above = _splu_inertia(sp.csc_matrix(high * eye - H))[0]
        except RuntimeError:
            notes.append("singular pivot at the shift; retried with 1e-13 jitter")
            below = _splu_inertia(sp.csc_matrix(H - (low - 1e-13) * eye))[0]
            above = _splu_inertia(sp.csc_matrix((high + 1e-13) * eye - H))[0]
        if k:
            extremal = _lattice_lobpcg(values, max(k, below + 1), seed)
    else:
        raise ParameterError(f"unknown method {method!r}")
    extremal = np.sort(np.asarray(extremal, dtype=float))[: max(k, 0)] if k else extremal
    if k and method in ("schur", "sparse"):
        iterative_below = int(np.sum(extremal < low))
        if iterative_below != min(below, extremal.size):
            raise ConvergenceError(f"iterative count {iterative_below} disagrees with inertia count {below}")
    box = {"type": "lattice", "radius": int(window.radius[0]) if len(set(window.radius)) == 1 else list(window.radius), "d": d, "sites": n}
    return EigencountResult(int(below), int(above), tuple(float(v) for v in extremal), box, float(low), float(high), method, tuple(notes))


def _lattice_lobpcg(values: np.ndarray, k: int, seed: int) -> np.ndarray:
    H = lattice_hamiltonian(values)
    shift = max(1.0, float(np.abs(values).max()))
    vals, _ = _lobpcg_lowest(lambda X: H @ X, _dst_preconditioner(values.shape, shift), values.size, k, 1e-8, 5000, seed)
    return vals


# ---------------------------------------------------------------------------
# infinite-lattice single-site reference


def lattice_green_origin(d: int, E: float | None = None, log_E: float | None = None) -> float:
    """``int (T + E)^-1 deta / (2 pi)^d`` for the lattice Laplacian, E >= 0.

    Uses ``int_0^inf exp(-t E) (e^{-2t} I_0(2t))^d dt``.  For d=2 the tail
    beyond ``t0`` is integrated against the large-t expansion of ``I_0`` so
    that arbitrarily small ``E = exp(log_E)`` stays representable.
    """
    if log_E is not None:
        E = math.exp(log_E) if log_E > -700 else 0.0
    elif E is None:
        raise ParameterError("give E or log_E")
    else:
        if E < 0:
            raise ParameterError("E must be nonnegative")
        log_E = math.log(E) if E > 0 else -math.inf
    if d == 1:
        return 1.0 / math.sqrt(E * (E + 4.0)) if E > 0 else math.inf
    f = lambda t: math.exp(-t * E) * special.ive(0, 2 * t) ** d
    t0 = 200.0
    head = 0.0
    edges = [0.0, 1.0, 5.0, 25.0, 100.0, t0]
    for a, b in zip(edges[:-1], edges[1:]):
        head += integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-13, limit=200)[0]
    if d != 2:
        if d > 2 or E > 0:
            tail = integrate.quad(f, t0, math.inf, epsabs=0.0, epsrel=1e-12, limit=400)[0]
            return head + tail
        return math.inf
    if not math.isfinite(log_E):
        return math.inf
    # e^{-2t} I_0(2t) = (4 pi t)^-1/2 (1 + a1/t + a2/t^2 + a3/t^3 + ...)
    a = np.array([1.0, 1 / 16, 9 / 512, 75 / 8192])
    c = np.convolve(a, a)[:4]  # square, truncated
    z = E * t0
    total = 0.0
    for j, cj in enumerate(c):
        p = 1 + j
        if p == 1:
            En = -np.euler_gamma - (math.log(t0) + log_E) + z if z < 1e-8 else float(special.exp1(z))
        else:
            En = float(special.expn(p, z)) if z > 0 else 1.0 / (p - 1)
        total += cj * t0 ** (1 - p) * En
    return head + total / (4 * math.pi)


def single_site_secular(d: int, depth: float) -> EigencountResult:
    """Bound state of ``-Delta + depth * delta_0``-type well on the infinite lattice.

    Solves ``depth * G(0; |E|) = 1`` in ``x = log|E|`` (rank-one
    Birman-Schwinger condition).  ``log_abs_lowest`` stays finite even when
    ``|E|`` underflows double precision.
    """
    if depth <= 0:
        return EigencountResult(0, 0, (), {"type": "infinite-lattice", "d": d}, 0.0, 4.0 * d, "secular")
    fn = lambda x: depth * lattice_green_origin(d, log_E=x) - 1.0
    hi = math.log(depth + 4 * d + 1.0)
    if d >= 3:
        if depth * lattice_green_origin(d, 0.0) <= 1.0:
            return EigencountResult(0, 0, (), {"type": "infinite-lattice", "d": d}, 0.0, 4.0 * d, "secular")
    lo = -1.0
    while fn(lo) <= 0:
        lo *= 2
        if lo < -1e7:
            raise ConvergenceError("no bracket for the secular equation")
    x = optimize.brentq(fn, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500)
    energy = -math.exp(x) if x > -745 else -0.0
    return EigencountResult(1, 0, (energy,), {"type": "infinite-lattice", "d": d}, 0.0, 4.0 * d, "secular", log_abs_lowest=x)


# ---------------------------------------------------------------------------
# binding threshold


@dataclass(frozen=True)
class ThresholdResult:
    per_window: dict
    extrapolated: float
    method: str = "bisection on Dirichlet-window counts, extrapolated in 1/r"


def binding_threshold(d: int = 3, windows=(15, 30), c_bracket=(1.0, 10.0), tol: float = 1e-7) -> ThresholdResult:
    """Critical single-site depth by bisection on ``count_below`` for each window.

    The window values approach the infinite-lattice value like ``O(1/r)``;
    the extrapolation fits ``c(r) = c_inf + a/r (+ b/r^2)`` by least squares.
    """
    out = {}
    for r in windows:
        dom = LatticeWindow.cube(d, int(r))
        lo, hi = c_bracket

        def count(c):
            vals = np.zeros(dom.shape)
            vals[dom.center_index()] = -c
            return lattice_eigencount(PotentialField(vals, dom), k=0).count_below

        if count(lo) != 0 or count(hi) == 0:
            raise ConvergenceError("bracket does not straddle the binding threshold")
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if count(mid) == 0:
                lo = mid
            else:
                hi = mid
        out[int(r)] = 0.5 * (lo + hi)
    rs = np.array(sorted(out), dtype=float)
    cs = np.array([out[int(r)] for r in rs])
    if rs.size == 1:
        return ThresholdResult(out, float(cs[0]), "bisection on one Dirichlet window")
    cols = [np.ones_like(rs), 1 / rs] + ([1 / rs**2] if rs.size >= 3 else [])
    coef = np.linalg.lstsq(np.stack(cols, axis=1), cs, rcond=None)[0]
    return ThresholdResult(out, float(coef[0]))


def stabilized_count(count_at: Callable[[float], int], energies=(1e-2, 1e-3, 1e-4)) -> tuple[int, bool, tuple[int, ...]]:
    """Counts at ``-E`` for each E; stable when all agree.  Returns the last count."""
    counts = tuple(int(count_at(E)) for E in energies)
    return counts[-1], len(set(counts)) == 1, counts


# ---------------------------------------------------------------------------
# continuum torus


def _torus_symbol(symbol: KineticSymbol, box: ContinuumBox) -> np.ndarray:
    if symbol.is_discrete:
        raise ParameterError("continuum_spectrum needs a continuum symbol")
    if symbol.dim != box.dim:
        raise ParameterError("symbol and box dimensions differ")
    return np.asarray(symbol(box.dual_points()), dtype=float)


def _is_even(T: np.ndarray) -> bool:
    flipped = T
    for axis in range(T.ndim):
        flipped = np.roll(np.flip(flipped, axis=axis), 1, axis=axis)
    return bool(np.array_equal(flipped, T))


def torus_operator(symbol: KineticSymbol, potential: PotentialField):
    """Return ``(apply, T, real)`` for ``H = F^* T F + V`` acting on column stacks."""
    box = potential.domain
    if not isinstance(box, ContinuumBox):
        raise ParameterError("continuum potential required")
    T = _torus_symbol(symbol, box)
    V = potential.values
    shape = box.shape
    real = _is_even(T)
    axes = tuple(range(len(shape)))

    def apply(X):
        X = np.asarray(X)
        cols = X.reshape(shape + (-1,))
        Y = sfft.ifftn(T[..., None] * sfft.fftn(cols, axes=axes), axes=axes)
        if real:
            Y = Y.real
        return (Y + V[..., None] * cols).reshape(X.shape)

    return apply, T, real


def continuum_spectrum(
    symbol: KineticSymbol,
    potential: PotentialField,
    grid_config: SpectrumConfig | None = None,
    threshold: float | None = None,
    initial: np.ndarray | None = None,
) -> EigencountResult:
    """Lowest eigenvalues and ``#{lambda < threshold}`` of ``T(p) + V`` on the torus.

    ``threshold`` defaults to the symbol floor (0, or 2/beta for BCS).  For
    ``n^d <= dense_cap`` the matrix is assembled and counted by LDL inertia;
    otherwise LOBPCG with a Fourier preconditioner supplies both the
    eigenvalues and the count, enlarging the block until an eigenvalue above
    the threshold is reached.  ``initial`` warm-starts LOBPCG from earlier
    eigenvectors (``result.vectors``).
    """
    cfg = grid_config or SpectrumConfig()
    apply, T, real = torus_operator(symbol, potential)
    box = potential.domain
    n = int(np.prod(box.shape))
    sigma = symbol.floor if threshold is None else float(threshold)
    notes: list[str] = []
    exact = True
    dtype = float if real else complex
    if n <= cfg.dense_cap:
        H = apply(np.eye(n, dtype=dtype))
        H = 0.5 * (H + H.conj().T)
        vals, vecs = sla.eigh(H)
        below = _ldl_inertia(H - sigma * np.eye(n))[0] if np.isfinite(sigma) else 0
        if below != int(np.sum(vals < sigma)):
            notes.append("inertia and eigenvalue counts differ by rounding at the threshold")
        extremal = vals[: cfg.k]
        method = "dense-ldl"
    else:
        shift = max(1.0, float(np.abs(potential.values).max())) + max(0.0, -float(T.min()))
        inv = 1.0 / (T + shift)
        shape = box.shape
        axes = tuple(range(len(shape)))

        def precond(X):
            X = np.asarray(X)
            cols = X.reshape(shape + (-1,))
            Y = sfft.ifftn(inv[..., None] * sfft.fftn(cols, axes=axes), axes=axes)
            return (Y.real if real else Y).reshape(X.shape)

        k = max(cfg.k, 2)
        X0 = initial
        while True:
            vals, vecs = _lobpcg_lowest(apply, precond, n, k, cfg.tol, cfg.maxiter, cfg.seed, dtype, X0=X0)
            X0 = vecs
            below = int(np.sum(vals < sigma))
            if below < k or k >= cfg.max_block:
                break
            k = min(2 * k, cfg.max_block)
        if below == k:
            exact = False
            notes.append(f"all {k} computed eigenvalues lie below the threshold; count_below is a lower bound")
        extremal = vals[: cfg.k]
        method = "lobpcg"
    tmax = float(T.max()) - symbol.floor
    if extremal.size and tmax < 100 * abs(float(extremal[0]) - symbol.floor):
        msg = "kinetic cutoff below 100 x |lowest eigenvalue|; refine the grid"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    boxrec = {"type": "torus", "L": float(box.lengths[0]), "n": int(box.shape[0]), "d": box.dim}
    return EigencountResult(
        int(below), 0, tuple(float(v) for v in extremal), boxrec, sigma, math.inf, method, tuple(notes), vectors=vecs[:, : cfg.k], count_exact=exact
    )


# ---------------------------------------------------------------------------
# Birman-Schwinger


def birman_schwinger_count(
    symbol: KineticSymbol,
    potential: PotentialField,
    E: float,
    *,
    support_cap: int = 4000,
    window_radius=None,
) -> BSCount:
    """Number of eigenvalues ``>= 1`` of ``sqrt(V_-) (T' + E)^-1 sqrt(V_-)``.

    On a lattice the Green function is that of the Dirichlet window (mode
    sums over the DST-I basis); on the torus it is the circulant DFT sum.
    Either way it is the exact inverse of the free part of the matching
    oracle, so for ``V <= 0`` the count equals the number of Hamiltonian
    eigenvalues ``<= floor - E``.
    """
    if E <= 0:
        raise ParameterError("E must be positive")
    notes = []
    if np.any(potential.values > 0):
        notes.append("positive part dropped: count bounds the Hamiltonian count from above")
    if potential.is_lattice:
        if symbol.kind is not SymbolKind.DISCRETE_LAPLACIAN:
            raise ParameterError("lattice Birman-Schwinger needs the discrete Laplacian")
        vals, _ = _embed(potential, window_radius)
        neg = np.where(vals < 0, vals, 0.0)
        schur = _SchurInertia(neg) if np.count_nonzero(neg) <= support_cap else None
        if schur is None:
            raise SupportTooLargeError(f"support exceeds the dense cap {support_cap}")
        f = np.sqrt(-schur.D)
        K = f[:, None] * schur.green(-E) * f[None, :]
    else:
        box = potential.domain
        T = np.asarray(symbol.excess(box.dual_points()), dtype=float)
        vm = potential.negative_part
        idx = np.argwhere(vm > 0)
        if idx.shape[0] > support_cap:
            raise SupportTooLargeError(f"support of {idx.shape[0]} cells exceeds {support_cap}")
        c = sfft.ifftn(1.0 / (T + E))
        shape = np.array(box.shape)
        diff = (idx[:, None, :] - idx[None, :, :]) % shape
        G = c[tuple(diff[..., j] for j in range(box.dim))]
        f = np.sqrt(vm[tuple(idx.T)])
        K = f[:, None] * G * f[None, :]
        K = 0.5 * (K + K.conj().T)
        if _is_even(T):
            K = K.real
    if K.size == 0:
        return BSCount(float(E), 0, (), 0, tuple(notes))
    ev = np.linalg.eigvalsh(K)[::-1]
    return BSCount(float(E), int(np.sum(ev >= 1.0)), tuple(float(v) for v in ev[:8]), int(K.shape[0]), tuple(notes))


# ---------------------------------------------------------------------------
# Cwikel split


@dataclass(frozen=True)
class CwikelReport:
    alpha: float
    r: float
    E: float
    b_norm: float
    b_bound: float
    hs_norm_sq: float
    hs_bound: float
    b_holds: bool
    hs_holds: bool

    @property
    def b_slack(self) -> float:
        return self.b_bound - self.b_norm

    @property
    def hs_slack(self) -> float:
        return self.hs_bound - self.hs_norm_sq


def _layer_index(x: np.ndarray, scale: float, r: float) -> np.ndarray:
    """Index k with ``scale r^(k-1) < x <= scale r^k`` (x > 0)."""
    k = np.ceil(np.log(x / scale) / math.log(r))
    # guard the closed upper end against rounding in the logarithm
    k = np.where(scale * r**k < x, k + 1, k)
    k = np.where(scale * r ** (k - 1) >= x, k - 1, k)
    return k.astype(np.int64)


def cwikel_split_check(symbol: KineticSymbol, potential: PotentialField, alpha: float, r: float = 2.0, E: float = 0.01) -> CwikelReport:
    """Check the bounded/Hilbert-Schmidt split of ``f(x) g(p)`` on the torus.

    ``f = sqrt(V_-)`` and ``g = (T' + E)^-1/2``.  The operator is realized
    as ``diag(f) F^* diag(g) F``; ``B`` keeps the layer pairs with
    ``k + l <= 1`` and is applied matrix-free (one FFT pair per f-layer),
    its norm from a sparse SVD.  The squared HS norm of the rest and the
    bound ``sum_x sum_eta f^2 g^2 1{f g > alpha} / N`` are exact sums.
    """
    if not (alpha > 0 and r > 1 and E > 0):
        raise ParameterError("need alpha > 0, r > 1, E > 0")
    box = potential.domain
    if not isinstance(box, ContinuumBox):
        raise ParameterError("continuum potential required")
    T = np.asarray(symbol.excess(box.dual_points()), dtype=float)
    g = (T + E) ** -0.5
    f = np.sqrt(potential.negative_part)
    N = f.size
    if not np.any(f > 0):
        return CwikelReport(alpha, r, E, 0.0, alpha * r * r / (r - 1), 0.0, 0.0, True, True)
    kf = np.where(f > 0, _layer_index(np.where(f > 0, f, 1.0), alpha, r), np.iinfo(np.int64).min)
    lg = _layer_index(g, 1.0, r)
    shape = box.shape
    # B = sum_k f_k(x) g_{<= 1-k}(p); f-layers with 1-k >= max(l) share the full g
    lmax = int(lg.max())
    kvals = np.unique(kf[f > 0])
    groups = {}
    for k in kvals:
        cap = min(1 - int(k), lmax)
        groups.setdefault(cap, np.zeros(shape))
        groups[cap] += np.where(kf == k, f, 0.0)
    terms = [(fk, np.where(lg <= cap, g, 0.0)) for cap, fk in groups.items()]

    def mv(v):
        v = np.asarray(v).reshape(shape)
        vh = sfft.fftn(v, norm="ortho")
        out = np.zeros(shape, dtype=complex)
        for fk, gk in terms:
            out += fk * sfft.ifftn(gk * vh, norm="ortho")
        return out.ravel()

    def rmv(v):
        v = np.asarray(v).reshape(shape)
        out = np.zeros(shape, dtype=complex)
        for fk, gk in terms:
            out += sfft.ifftn(gk * sfft.fftn(fk * v, norm="ortho"), norm="ortho")
        return out.ravel()

    op = spla.LinearOperator((N, N), matvec=mv, rmatvec=rmv, dtype=complex)
    rng = _philox(0, 202)
    v0 = rng.standard_normal(N) + 0j
    b_norm = float(spla.svds(op, k=1, which="LM", return_singular_vectors=False, tol=1e-10, v0=v0, maxiter=2000)[0])
    # HS norms via layer histograms
    fl, fw = np.unique(kf[f > 0], return_inverse=True)
    F = np.bincount(fw, weights=(f[f > 0] ** 2))
    gl, gw = np.unique(lg.ravel(), return_inverse=True)
    Gm = np.bincount(gw, weights=(g.ravel() ** 2))
    mask = (fl[:, None] + gl[None, :]) >= 2
    hs = float(np.sum(F[:, None] * Gm[None, :] * mask) / N)
    gs = np.sort(g.ravel())
    tail = np.concatenate([np.cumsum((gs**2)[::-1])[::-1], [0.0]])
    fv = f[f > 0]
    start = np.searchsorted(gs, alpha / fv, side="right")
    hs_bound = float(np.sum(fv**2 * tail[start]) / N)
    b_bound = alpha * r * r / (r - 1)
    return CwikelReport(alpha, r, E, b_norm, b_bound, hs, hs_bound, b_norm <= b_bound * (1 + 1e-12), hs <= hs_bound * (1 + 1e-12))
