import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boundcount.errors import DomainError, ParameterError, ResolutionError
from boundcount.kernel import (
    ContinuumBox,
    KineticSymbol,
    LatticeWindow,
    MCConfig,
    VolumeMethod,
    eval_symbol,
    make_potential,
    sublevel_volume,
    unit_ball_volume,
)

BUILTIN = [
    KineticSymbol.power(3, 1.5),
    KineticSymbol.shifted_power(2, 2.0, 0.5),
    KineticSymbol.massive_relativistic(3, 1.0),
    KineticSymbol.relativistic_pair(3, (1.0, 0.0, 0.0), 1.0, 0.3),
    KineticSymbol.ultra_relativistic_pair(3, (1.0, 0.0, 0.0), 0.4),
    KineticSymbol.heavy_massless_pair(3, (1.0, 0.0, 0.0), 1.0),
    KineticSymbol.bcs(3, 2.0, 1.0),
    KineticSymbol.discrete_laplacian(3),
]


def test_power_unit_vector():
    assert eval_symbol(KineticSymbol.power(3, 2.0), [1.0, 0.0, 0.0]) == pytest.approx(1.0, abs=1e-15)


def test_bcs_removable_singularity_is_exact():
    sym = KineticSymbol.bcs(3, 2.0, 1.0)
    assert eval_symbol(sym, [1.0, 0.0, 0.0]) == 1.0
    assert eval_symbol(sym, [0.6, 0.8, 0.0]) == pytest.approx(1.0, abs=1e-15)


def test_pair_zero_at_origin():
    for P in [(0.0, 0.0, 0.0), (1.0, 2.0, 0.5)]:
        sym = KineticSymbol.relativistic_pair(3, P, 1.3, 0.25)
        assert eval_symbol(sym, np.zeros(3)) == pytest.approx(0.0, abs=1e-14)


def test_ultra_relativistic_segment_is_zero_set():
    mu_plus = 0.4
    sym = KineticSymbol.ultra_relativistic_pair(3, (1.0, 0.0, 0.0), mu_plus)
    s = np.linspace(-(1 - mu_plus), mu_plus, 11)
    eta = s[:, None] * np.array([1.0, 0.0, 0.0])
    assert np.max(np.abs(eval_symbol(sym, eta))) < 1e-14


@pytest.mark.parametrize("sym", BUILTIN, ids=lambda s: s.kind.value)
def test_nonnegative_on_random_points(sym, rng):
    scale = math.pi if sym.is_discrete else 5.0
    eta = rng.uniform(-scale, scale, size=(100_000, sym.dim))
    assert np.all(eval_symbol(sym, eta) >= 0)


def test_discrete_range_and_domain(rng):
    sym = KineticSymbol.discrete_laplacian(2)
    eta = rng.uniform(-math.pi, math.pi, size=(10_000, 2))
    vals = eval_symbol(sym, eta)
    assert vals.min() >= 0 and vals.max() <= 8
    with pytest.raises(DomainError):
        eval_symbol(sym, [4.0, 0.0])


def test_bcs_floor_and_monotone_in_beta(rng):
    mu = 1.0
    eta = rng.normal(size=(100_000, 3)) * 1.2
    vals = {b: eval_symbol(KineticSymbol.bcs(3, b, mu), eta) for b in (0.5, 1.0, 4.0)}
    for b, v in vals.items():
        assert np.all(v - 2 / b >= 0)
        near = np.abs(v - 2 / b) < 1e-12
        assert np.all(np.abs(np.linalg.norm(eta[near], axis=1) - 1) < 1e-3)
    off = np.abs(np.sum(eta**2, axis=1) - mu) > 1e-6
    assert np.all(vals[1.0] <= vals[0.5]) and np.all(vals[4.0] <= vals[1.0])
    assert np.all(vals[1.0][off] < vals[0.5][off])


def test_bcs_series_branch_is_continuous():
    sym = KineticSymbol.bcs(1, 3.0, 1.0)
    # |beta (eta^2 - mu)| straddles the series cutoff
    x = np.sqrt(1 + np.array([3.33e-5, 3.334e-5, 3.3e-5, 3.4e-5]))
    v = eval_symbol(sym, x[:, None]) - 2 / 3
    exact = 3 * (x**2 - 1) ** 2 / 6
    assert np.allclose(v, exact, rtol=1e-6)


def test_invalid_parameters():
    with pytest.raises(ParameterError):
        KineticSymbol.power(0, 2.0)
    with pytest.raises(ParameterError):
        KineticSymbol.bcs(3, -1.0, 1.0)
    with pytest.raises(ParameterError):
        KineticSymbol.relativistic_pair(3, (0, 0, 0), 1.0, 1.5)


def test_sublevel_zero_level():
    for sym in BUILTIN:
        assert sublevel_volume(sym, 0.0).value == 0.0


def test_massive_relativistic_volume():
    v = sublevel_volume(KineticSymbol.massive_relativistic(3, 1.0), 1.0)
    assert v.method is VolumeMethod.CLOSED_FORM
    assert v.value == pytest.approx(4 * math.pi / 3 * 3 * math.sqrt(3), rel=1e-12)


def test_pair_closed_form_vs_montecarlo():
    sym = KineticSymbol.relativistic_pair(3, (1.0, 0.0, 0.0), 1.0, 0.5)
    closed = sublevel_volume(sym, 1.0)
    mc = sublevel_volume(sym, 1.0, MCConfig(samples=1_000_000, seed=3), method="montecarlo")
    assert mc.error > 0
    assert abs(closed.value - mc.value) < 3 * mc.error


def test_pair_scaling_identity():
    # |{T_{P,M} < u}| = |P|^d |{T_{P/|P|, M/|P|} < u/|P|}|
    P, M, u = 2.0, 1.0, 1.5
    a = sublevel_volume(KineticSymbol.relativistic_pair(3, (P, 0, 0), M, 0.3), u).value
    b = sublevel_volume(KineticSymbol.relativistic_pair(3, (1.0, 0, 0), M / P, 0.3), u / P).value
    assert a == pytest.approx(P**3 * b, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_sublevel_monotone(u1, u2):
    sym = KineticSymbol.massive_relativistic(3, 0.7)
    lo, hi = sorted((u1, u2))
    assert sublevel_volume(sym, lo).value <= sublevel_volume(sym, hi).value


def test_single_site_potential():
    V = make_potential("SingleSite", LatticeWindow.cube(2, 3), depth=1.0)
    assert V.values[3, 3] == -1.0
    assert np.count_nonzero(V.values) == 1


def test_gaussian_moment():
    box = ContinuumBox((16.0,) * 3, (64,) * 3)
    V = make_potential("Gaussian", box, depth=1.0, width=1.0)
    moment = np.sum(V.negative_part**1.5) * V.cell_volume
    assert moment == pytest.approx((2 * math.pi / 3) ** 1.5, rel=5e-3)


def test_annular_fourier_has_zero_mean():
    box = ContinuumBox.cube(2, 40.0, 64)
    V = make_potential("AnnularFourier", box, inner=2.0, outer=3.0)
    assert abs(V.integral()) < 1e-6 * V.l1_norm()
    assert V.values.min() == pytest.approx(-1.0)


def test_parts_partition_absolute_value(rng):
    box = ContinuumBox.cube(2, 40.0, 64)
    V = make_potential("AnnularFourier", box, inner=2.0, outer=3.0)
    assert np.allclose(V.negative_part + V.positive_part, np.abs(V.values))
    assert np.all(V.negative_part * V.positive_part == 0)


def test_resolution_error():
    box = ContinuumBox.cube(3, 40.0, 64)
    with pytest.raises(ResolutionError):
        make_potential("Gaussian", box, depth=1.0, width=1.0)


def test_unit_ball_volume():
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
