import math

import numpy as np
import pytest

from boundcount.errors import ConstructionError, DuplicatePointsError, ResolutionError
from boundcount.existence import (
    Verdict,
    build_trial_state,
    corrected_trial_energy,
    corrected_trial_scan,
    default_center,
    multipoint_matrix,
    rayleigh_energy,
    rayleigh_quotient,
    tau_schedule,
    to_dual_space,
    to_real_space,
)
from boundcount.kernel import ContinuumBox, KineticSymbol, PotentialField, make_potential
from boundcount.oracle import continuum_spectrum

P1 = KineticSymbol.power(1, 2.0)


@pytest.fixture(scope="module")
def box1():
    return ContinuumBox.cube(1, 2048.0, 4096)


@pytest.fixture(scope="module")
def well1(box1):
    return make_potential("Gaussian", box1, depth=1.0, width=1.0)


def test_fourier_roundtrip(rng):
    box = ContinuumBox((10.0, 14.0), (16, 20))
    c = rng.normal(size=box.shape) + 1j * rng.normal(size=box.shape)
    assert np.allclose(to_dual_space(to_real_space(c, box), box), c, atol=1e-13)


def test_plancherel(rng):
    box = ContinuumBox.cube(2, 12.0, 24)
    c = rng.normal(size=box.shape)
    psi = to_real_space(c, box)
    assert np.sum(np.abs(psi) ** 2) * box.cell_volume == pytest.approx(np.sum(c**2) * box.dual_cell, rel=1e-12)


def test_kinetic_bound_random_draws(rng):
    symbols = [
        KineticSymbol.power(2, 2.0),
        KineticSymbol.power(2, 0.7),
        KineticSymbol.shifted_power(2, 2.0, 0.3),
        KineticSymbol.massive_relativistic(2, 1.0),
        KineticSymbol.bcs(2, 2.0, 1.0),
        KineticSymbol.ultra_relativistic_pair(2, (1.0, 0.0), 0.5),
    ]
    box = ContinuumBox.cube(2, 80.0, 32)
    for _ in range(100):
        sym = symbols[rng.integers(len(symbols))]
        omega = rng.uniform(-1, 1, size=2)
        n = int(rng.integers(1, 3))
        tau = 10 ** rng.uniform(-4, 0)
        st = build_trial_state(sym, omega, n, tau, box)
        T = sym(box.dual_points())
        kinetic_w = np.sum(T * st.coefficients**2) * box.dual_cell
        assert np.all(st.coefficients >= 0)
        assert kinetic_w <= st.l1_norm * (1 + 1e-12)


def test_l1_norm_grows_for_thick_zero_set(box1):
    tau = 1e-4
    l1 = [build_trial_state(P1, (0.0,), 4, t, box1).l1_norm for t in (1e-3, 1e-4, 1e-5)]
    assert l1[1] >= 2 * (tau**-0.5 - 4)
    assert l1[0] < l1[1] < l1[2]


def test_l1_norm_bounded_for_point_zero_set():
    # twisted dual grid keeps grid points off the zero itself
    box = ContinuumBox.cube(3, 200.0, 32)
    sym = KineticSymbol.power(3, 2.0)
    twist = 0.5 * 2 * math.pi / 200.0
    l1 = [build_trial_state(sym, (0.0,) * 3, 4, t, box, twist=twist).l1_norm for t in (1e-2, 1e-4, 1e-6, 1e-8)]
    assert l1[-1] == l1[-2] == l1[-3]
    # continuum value int_{|eta|<1/4} |eta|^-2 = pi
    assert l1[-1] == pytest.approx(math.pi, rel=0.1)


def test_under_resolved_ball():
    box = ContinuumBox.cube(1, 20.0, 64)
    with pytest.raises(ResolutionError):
        build_trial_state(P1, (0.0,), 4, 1e-3, box)


def test_tau_schedule_forces_l1_at_least_n(box1):
    for n in (2, 8, 32):
        tau = tau_schedule(P1, box1, (0.0,), n)
        st = build_trial_state(P1, (0.0,), n, tau, box1)
        assert st.l1_norm >= n
        assert build_trial_state(P1, (0.0,), n, tau * 1.01, box1).l1_norm < n


def test_zero_potential(box1):
    V = PotentialField(np.zeros(box1.shape), box1)
    st = build_trial_state(P1, (0.0,), 4, None, box1)
    k, p, t = rayleigh_quotient(st, P1, V)
    assert p == 0 and t == k > 0
    assert k <= 1 / st.l1_norm


def test_gaussian_total_negative(box1, well1):
    st = build_trial_state(P1, (0.0,), 32, None, box1)
    assert rayleigh_quotient(st, P1, well1)[2] < 0


def test_potential_term_limit(box1, well1):
    target = -math.sqrt(math.pi) / (2 * math.pi)
    st = build_trial_state(P1, (0.0,), 64, None, box1)
    assert rayleigh_quotient(st, P1, well1)[1] == pytest.approx(target, rel=2e-2)


def test_kinetic_term_vanishes_along_schedule(box1, well1):
    kin = [rayleigh_quotient(build_trial_state(P1, (0.0,), n, None, box1), P1, well1)[0] for n in (2, 4, 8, 16, 32, 64)]
    tail = kin[-5:]
    assert all(a > b for a, b in zip(tail, tail[1:]))
    assert tail[-1] < 1 / 64


def test_attractive_case_needs_no_correction(box1, well1):
    row = corrected_trial_scan(P1, well1, n=16, alpha_mix=0.0)
    assert row.total < 0 and row.alpha_mix == 0


def test_repulsive_potential_cannot_certify(box1, well1):
    with pytest.raises(ConstructionError):
        corrected_trial_energy(P1, well1.scaled(-1.0), n=4)


def test_certificate_above_oracle():
    box = ContinuumBox.cube(1, 1024.0, 2048)
    V = make_potential("Gaussian", box, depth=0.3, width=1.0)
    row = corrected_trial_scan(P1, V, n=16)
    st = build_trial_state(P1, (0.0,), 16, None, box)
    e = rayleigh_energy(st, P1, V)
    res = continuum_spectrum(P1, V)
    assert row.certified and res.lowest < 0
    assert row.normalized >= res.lowest
    assert e.normalized >= res.lowest


def test_annular_certificate():
    box = ContinuumBox.cube(2, 160.0, 256)
    V = make_potential("AnnularFourier", box, inner=2.0, outer=3.0, amplitude=2.0)
    # phi_n alone sees no potential: V_hat vanishes near the origin
    st = build_trial_state(KineticSymbol.power(2, 2.0), None, 16, None, box)
    assert abs(rayleigh_quotient(st, KineticSymbol.power(2, 2.0), V)[1]) < 1e-12
    assert corrected_trial_energy(KineticSymbol.power(2, 2.0), V, n=16) < 0


def test_default_center_lexicographic():
    box = ContinuumBox.cube(1, 2 * math.pi * 4, 64)
    sym = KineticSymbol.bcs(1, 1.0, 1.0)
    assert default_center(sym, box) == pytest.approx((-1.0,))
    assert default_center(KineticSymbol.power(2, 2.0), ContinuumBox.cube(2, 10.0, 8)) == (0.0, 0.0)


# ---------------------------------------------------------------------------
# multi-point matrix


@pytest.fixture(scope="module")
def gauss2():
    return make_potential("Gaussian", ContinuumBox.cube(2, 20.0, 64), depth=1.0, width=1.0)


def test_negative_well_two_points(gauss2):
    m = multipoint_matrix(gauss2, [(0.0, 0.0), (1.0, 0.0)])
    assert m.verdict is Verdict.STRICTLY_NEGATIVE_DEFINITE and m.prediction == 2
    assert np.abs(m.M - m.M.conj().T).max() <= 1e-12


def test_single_point_is_integral(gauss2):
    m = multipoint_matrix(gauss2, [(0.0, 0.0)])
    assert m.M[0, 0].real == pytest.approx(gauss2.integral(), rel=1e-12)
    assert m.M[0, 0].real == pytest.approx(-math.pi, rel=1e-6)


def test_annular_matrix_is_degenerate():
    box = ContinuumBox.cube(2, 40.0, 64)
    V = make_potential("AnnularFourier", box, inner=2.0, outer=3.0)
    # a dual-grid separation inside the gap |xi| < 2 of the annulus
    step = 6 * 2 * math.pi / 40.0
    m = multipoint_matrix(V, [(0.0, 0.0), (step, 0.0)])
    assert np.abs(m.M).max() < 1e-10
    assert m.verdict is Verdict.INDEFINITE and m.prediction is None
    assert "degenerate" in m.note


def test_relabel_invariance(gauss2, rng):
    pts = [tuple(p) for p in rng.uniform(-2, 2, size=(4, 2))]
    a = multipoint_matrix(gauss2, pts)
    b = multipoint_matrix(gauss2, pts[::-1])
    assert a.verdict is b.verdict
    assert np.allclose(a.eigenvalues, b.eigenvalues, atol=1e-12)


def test_duplicate_points(gauss2):
    with pytest.raises(DuplicatePointsError):
        multipoint_matrix(gauss2, [(0.0, 0.0), (0.0, 0.0)])
