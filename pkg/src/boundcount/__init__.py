"""Bound-state counting bounds for generalized Schrödinger operators T(p) + V.

The package is split into:

``kernel``
    kinetic symbols, sampled potentials and sublevel-set volumes;
``gfunction``
    the G function, its closed-form catalog and the regime classifier;
``bounds``
    the counting bound, its semiclassical split and the lattice variants;
``oracle``
    independent eigenvalue counters used to validate every bound;
``existence``
    trial-state certificates for strictly negative spectrum;
``bcs``
    ground energy and critical inverse temperature of the BCS operator;
``cli``
    the ``boundcount`` command-line driver.
"""

from boundcount.kernel import (
    AnalyticForm,
    ContinuumBox,
    KineticSymbol,
    LatticeWindow,
    MCConfig,
    PotentialField,
    SymbolKind,
    VolumeMethod,
    VolumeResult,
    eval_symbol,
    make_potential,
    sublevel_volume,
)

__all__ = [
    "AnalyticForm",
    "ContinuumBox",
    "KineticSymbol",
    "LatticeWindow",
    "MCConfig",
    "PotentialField",
    "SymbolKind",
    "VolumeMethod",
    "VolumeResult",
    "eval_symbol",
    "make_potential",
    "sublevel_volume",
]

__version__ = "0.1.0"
