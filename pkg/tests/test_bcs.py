import math

import numpy as np
import pytest

from boundcount.bcs import (
    BracketConfig,
    aligned_box,
    aligned_box_length,
    critical_beta,
    energy_chain,
    ground_energy,
    sphere_gap,
)
from boundcount.errors import ParameterError
from boundcount.kernel import KineticSymbol, PotentialField, eval_symbol, make_potential

MU = 1.0


@pytest.fixture(scope="module")
def box():
    return aligned_box(3, MU, 2, 32)


def well(box, depth):
    return make_potential("Gaussian", box, depth=depth, width=1.0)


@pytest.fixture(scope="module")
def brackets(box):
    return {depth: critical_beta(MU, well(box, depth)) for depth in (1.0, 2.0)}


def test_aligned_box_meets_fermi_sphere(box):
    assert aligned_box_length(MU, 2) == pytest.approx(4 * math.pi)
    assert sphere_gap(box, MU) < 1e-2
    with pytest.raises(ParameterError):
        aligned_box_length(-1.0, 2)


def test_free_ground_energy_is_symbol_minimum(box):
    V = PotentialField(np.zeros(box.shape), box)
    for beta in (0.5, 2.0):
        assert ground_energy(beta, MU, V) == pytest.approx(2 / beta, abs=1e-10)


def test_energy_strictly_decreasing_in_beta(box):
    e = energy_chain(MU, well(box, 0.3), [1, 2, 4, 8, 16])
    assert np.all(np.diff(e) < 0)


def test_zero_temperature_limit(box):
    V = well(box, 4.0)
    e64, e_inf = energy_chain(MU, V, [64.0, math.inf])
    assert e64 >= e_inf
    assert abs(e64 - e_inf) < 0.05 * abs(e_inf)


def test_symbol_dominates_zero_temperature(rng):
    eta = rng.normal(size=(100_000, 3))
    zero = np.abs(np.sum(eta**2, axis=1) - MU)
    for beta in (0.5, 4.0, 64.0):
        K = eval_symbol(KineticSymbol.bcs(3, beta, MU), eta)
        assert np.all(K >= zero)
        # the excess 2x/(e^{beta x} - 1) is below rounding once beta x is large
        visible = beta * zero < 30
        assert np.all(K[visible] > zero[visible])


def test_free_potential_is_never_bracketed(box):
    V = PotentialField(np.zeros(box.shape), box)
    res = critical_beta(MU, V, BracketConfig(beta_hi_max=64.0))
    assert not res.bracketed and res.beta_cr == math.inf
    assert all(e >= 0 for e in res.energy_at.values())


def test_bracket_and_sign_change(box, brackets):
    res = brackets[2.0]
    assert res.bracketed and res.width < 1e-3
    assert res.energy_at[res.beta_lo] >= 0 > res.energy_at[res.beta_hi]
    V = well(box, 2.0)
    assert ground_energy(res.beta_cr - 1e-2, MU, V) > 0 > ground_energy(res.beta_cr + 1e-2, MU, V)


def test_deeper_well_does_not_raise_critical_beta(brackets):
    assert brackets[2.0].beta_cr <= brackets[1.0].beta_cr


def test_shallow_well_needs_larger_cap(box):
    V = well(box, 0.3)
    res = critical_beta(MU, V, BracketConfig(beta_hi_max=4096.0))
    assert res.bracketed and res.width < 1e-3
    assert res.energy_at[res.beta_lo] >= 0 > res.energy_at[res.beta_hi]


def test_invalid_bracket(box):
    with pytest.raises(ParameterError):
        critical_beta(MU, well(box, 1.0), BracketConfig(width=0.0))
