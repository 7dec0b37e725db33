import math

import numpy as np
import pytest

from boundcount.errors import ParameterError, SupportTooLargeError, WindowTooSmallError
from boundcount.gfunction import watson_constant
from boundcount.kernel import ContinuumBox, KineticSymbol, LatticeWindow, PotentialField, make_potential
from boundcount.oracle import (
    SpectrumConfig,
    birman_schwinger_count,
    continuum_spectrum,
    cwikel_split_check,
    lattice_eigencount,
    lattice_green_origin,
    binding_threshold,
    single_site_secular,
    stabilized_count,
)


def site(d, r, c):
    return make_potential("SingleSite", LatticeWindow.cube(d, r), depth=c)


def random_cluster(d, r, seed, depth=6.0, rad=2):
    return make_potential("RandomSites", LatticeWindow.cube(d, r), depth_max=depth, support_radius=rad, seed=seed)


def test_free_lattice_counts():
    V = PotentialField(np.zeros((9, 9, 9)), LatticeWindow.cube(3, 4))
    res = lattice_eigencount(V)
    assert res.count_below == 0 and res.count_above == 0


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_one_dimensional_exact_bound_state(c):
    res = lattice_eigencount(site(1, 2000, c))
    assert res.count_below == 1
    assert res.lowest == pytest.approx(2 - math.sqrt(4 + c * c), abs=1e-6)
    # rank-one secular equation c G(0; E) = 1 has the same root
    assert single_site_secular(1, c).lowest == pytest.approx(2 - math.sqrt(4 + c * c), abs=1e-12)


def test_three_dimensional_threshold_counts():
    assert lattice_eigencount(site(3, 30, 3.5), k=0).count_below == 0
    assert lattice_eigencount(site(3, 30, 4.5), k=0).count_below == 1


def test_binding_threshold_extrapolation():
    res = binding_threshold(3, (15, 30))
    assert res.per_window[15] > res.per_window[30] > res.extrapolated
    assert res.extrapolated == pytest.approx(1 / watson_constant(3), abs=0.02)


def test_methods_agree():
    V = random_cluster(3, 8, seed=3, depth=10.0)
    runs = {m: lattice_eigencount(V, k=6, method=m) for m in ("dense", "schur", "sparse")}
    counts = {m: (r.count_below, r.count_above) for m, r in runs.items()}
    assert len(set(counts.values())) == 1
    ref = np.array(runs["dense"].extremal)
    for m in ("schur", "sparse"):
        assert np.allclose(runs[m].extremal, ref, atol=1e-7)


def test_inertia_matches_iterative_count():
    V = random_cluster(3, 10, seed=5, depth=9.0, rad=1)
    res = lattice_eigencount(V, k=12, method="sparse")
    assert res.count_below < 12
    assert res.count_below == int(np.sum(np.array(res.extremal) < 0))


def test_window_doubling_stability():
    a = lattice_eigencount(site(1, 200, 1.0))
    b = lattice_eigencount(site(1, 400, 1.0))
    assert a.count_below == b.count_below
    assert abs(a.lowest - b.lowest) < 1e-8
    V = random_cluster(3, 10, seed=1, depth=12.0, rad=1)
    c = lattice_eigencount(V, k=2)
    d = lattice_eigencount(V, 20, k=2)
    assert c.count_below == d.count_below
    assert np.allclose(c.extremal, d.extremal, atol=1e-8)


def test_window_too_small():
    V = random_cluster(3, 4, seed=0, rad=3)
    with pytest.raises(WindowTooSmallError):
        lattice_eigencount(V, 3)


def test_birman_schwinger_matches_inertia():
    V = random_cluster(3, 12, seed=11, depth=10.0)
    sym = KineticSymbol.discrete_laplacian(3)
    for E in (0.01, 0.1, 0.5, 1.0, 3.0):
        bs = birman_schwinger_count(sym, V, E)
        ham = lattice_eigencount(V, thresholds=(-E + 1e-12, 12.0), k=0).count_below
        assert bs.count == ham


def test_birman_schwinger_monotone_in_E():
    V = random_cluster(3, 10, seed=2, depth=10.0)
    sym = KineticSymbol.discrete_laplacian(3)
    counts = [birman_schwinger_count(sym, V, E).count for E in (0.01, 0.1, 0.4, 1.0, 2.0, 4.0)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_birman_schwinger_single_site_top_eigenvalue():
    c = 2.0
    bs = birman_schwinger_count(KineticSymbol.discrete_laplacian(3), site(3, 30, c), 1e-6)
    # Dirichlet window Green function approaches the Watson value from below
    assert bs.top_eigenvalues[0] == pytest.approx(c * watson_constant(3), rel=2e-2)
    assert bs.top_eigenvalues[0] < c * watson_constant(3)
    assert bs.count == 0


def test_birman_schwinger_weak_scaling_has_no_count():
    V = random_cluster(3, 8, seed=4, depth=10.0)
    sym = KineticSymbol.discrete_laplacian(3)
    assert birman_schwinger_count(sym, V.scaled(1e-3), 1e-4).count == 0


def test_support_cap():
    V = random_cluster(3, 8, seed=4, depth=10.0, rad=4)
    with pytest.raises(SupportTooLargeError):
        birman_schwinger_count(KineticSymbol.discrete_laplacian(3), V, 0.1, support_cap=10)


def test_lattice_green_origin():
    assert lattice_green_origin(3, 0.0) == pytest.approx(watson_constant(3), rel=1e-10)
    assert lattice_green_origin(1, 1.0) == pytest.approx(1 / math.sqrt(5), rel=1e-14)


def test_two_dimensional_secular_underflow():
    res = single_site_secular(2, 0.01)
    assert res.count_below == 1 and res.log_abs_lowest < -700
    assert single_site_secular(3, 0.1).count_below == 0


def test_stabilized_count():
    V = random_cluster(3, 10, seed=6, depth=10.0)
    count, stable, counts = stabilized_count(lambda E: lattice_eigencount(V, thresholds=(-E, 12.0), k=0).count_below)
    assert stable and count == lattice_eigencount(V, k=0).count_below


# ---------------------------------------------------------------------------
# continuum torus


def test_free_torus_lowest_is_symbol_minimum():
    box = ContinuumBox.cube(2, 10.0, 16)
    V = PotentialField(np.zeros(box.shape), box)
    sym = KineticSymbol.massive_relativistic(2, 1.0)
    res = continuum_spectrum(sym, V)
    assert res.lowest == pytest.approx(0.0, abs=1e-12)
    assert res.count_below == 0


def test_one_dimensional_weak_well_binds():
    box = ContinuumBox.cube(1, 200.0, 2048)
    V = make_potential("Gaussian", box, depth=0.1, width=1.0)
    res = continuum_spectrum(KineticSymbol.power(1, 2.0), V)
    assert res.lowest < 0 and res.count_below >= 1


def test_dense_inertia_matches_eigenvalues():
    box = ContinuumBox.cube(2, 12.0, 32)
    V = make_potential("BallIndicator", box, depth=1.8, radius=2.5)
    res = continuum_spectrum(KineticSymbol.power(2, 2.0), V, SpectrumConfig(k=64))
    assert res.method == "dense-ldl"
    assert res.count_below == int(np.sum(np.array(res.extremal) < 0))


def test_torus_birman_schwinger_matches_spectrum():
    box = ContinuumBox.cube(2, 12.0, 32)
    V = make_potential("BallIndicator", box, depth=1.8, radius=2.5)
    sym = KineticSymbol.power(2, 2.0)
    ev = np.array(continuum_spectrum(sym, V, SpectrumConfig(k=64)).extremal)
    for E in (0.05, 0.3, 1.0, 2.0):
        assert birman_schwinger_count(sym, V, E).count == int(np.sum(ev <= -E))


@pytest.mark.slow
def test_bcs_eigenvalue_below_floor():
    box = ContinuumBox.cube(3, 40.0, 64)
    V = make_potential("Gaussian", box, depth=0.5, width=2.0)
    res = continuum_spectrum(KineticSymbol.bcs(3, 4.0, 1.0), V, SpectrumConfig(k=2, max_block=2))
    assert res.lowest < 0.5 and res.count_below >= 1


# ---------------------------------------------------------------------------
# Cwikel split


@pytest.fixture(scope="module")
def cwikel_reports():
    box = ContinuumBox.cube(3, 12.0, 32)
    V = make_potential("Gaussian", box, depth=1.0, width=1.0)
    return {r: cwikel_split_check(KineticSymbol.power(3, 2.0), V, 0.1, r=r, E=0.01) for r in (1.5, 2.0, 3.0)}


def test_cwikel_inequalities(cwikel_reports):
    for r, rep in cwikel_reports.items():
        assert rep.b_norm <= 0.1 * r * r / (r - 1)
        assert rep.b_holds and rep.hs_holds
        assert rep.hs_norm_sq <= rep.hs_bound
        assert rep.b_slack >= 0 and rep.hs_slack >= 0


def test_cwikel_hs_bound_independent_of_r(cwikel_reports):
    vals = [rep.hs_bound for rep in cwikel_reports.values()]
    assert max(vals) - min(vals) <= 1e-10 * max(vals)


def test_cwikel_zero_potential():
    box = ContinuumBox.cube(3, 12.0, 16)
    rep = cwikel_split_check(KineticSymbol.power(3, 2.0), PotentialField(np.zeros(box.shape), box), 0.1)
    assert rep.b_norm == 0 and rep.hs_norm_sq == 0


def test_bad_energy():
    with pytest.raises(ParameterError):
        birman_schwinger_count(KineticSymbol.discrete_laplacian(3), site(3, 4, 1.0), 0.0)
