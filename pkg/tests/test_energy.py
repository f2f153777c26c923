"""Energy functionals: kinetic perspective cost, couplings, groupings,
thresholds, and the scale-free quotient."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfg_ground.constraints import random_feasible
from mfg_ground.energy import (
    CouplingParams,
    HamiltonianParams,
    MFGParams,
    PotentialSpec,
    Well,
    coupling_s,
    cross_term,
    gn_quotient,
    kinetic_cost,
    overlap,
    potential_energy,
    self_term,
    sq_diff_term,
    thresholds,
    total_energy,
)
from mfg_ground.errors import InfeasibleKinetic
from mfg_ground.fields import (
    DensityField,
    FluxField,
    GridSpec,
    ScalarField,
    grad,
    zero_boundary_faces,
)

HP = HamiltonianParams(gamma=2.0, c_h=1.0)
GRID = GridSpec(dim=1, half_width=6.0, cells_per_axis=128)


def _gaussian_pair(grid, sigma=1.0):
    x = grid.cell_coords()[0]
    mv = np.exp(-x ** 2 / (2 * sigma ** 2))
    mv /= grid.cell_volume * float(np.sum(mv))
    m = DensityField(grid, mv)
    return m, grad(m)


# ---------------------------------------------------------------------------
# parameter objects
# ---------------------------------------------------------------------------

def test_hamiltonian_conjugates():
    assert HP.gamma_conj == pytest.approx(2.0)
    assert HP.c_l == pytest.approx(0.25)          # (1/2)(2*1)^{-1}
    hp3 = HamiltonianParams(gamma=3.0, c_h=2.0)
    assert hp3.gamma_conj == pytest.approx(1.5)
    assert hp3.c_l == pytest.approx((1 / 1.5) * 6.0 ** (-0.5))
    with pytest.raises(ValueError):
        HamiltonianParams(gamma=1.0, c_h=1.0)
    with pytest.raises(ValueError):
        HamiltonianParams(gamma=2.0, c_h=0.0)


def test_coupling_s():
    assert coupling_s(1, HP) == pytest.approx(1.5)   # 1/2 + 2/2
    assert coupling_s(2, HamiltonianParams(gamma=1.5, c_h=1.0)) \
        == pytest.approx(0.5 + 3.0 / 4.0)


def test_potential_spec():
    v = PotentialSpec.quadratic(center=(1.0,), coefficient=2.0)
    vals = v.evaluate(GRID).values
    x = GRID.cell_coords()[0]
    np.testing.assert_allclose(vals, 2.0 * (x - 1.0) ** 2)
    # product form vanishes at every well center and nowhere else
    v2 = PotentialSpec(wells=(Well((-1.0,), 2.0, 1.0), Well((1.0,), 4.0, 1.0)))
    assert v2.growth_exponent == 6.0
    vv = v2.evaluate(GRID).values
    assert float(np.min(vv)) >= 0.0
    with pytest.raises(ValueError):
        Well((0.0,), -1.0, 1.0)
    with pytest.raises(ValueError):
        PotentialSpec(wells=())


# ---------------------------------------------------------------------------
# kinetic perspective cost
# ---------------------------------------------------------------------------

def test_kinetic_cost_analytic():
    # For gamma=2 (gamma'=2, C_L=1/4): K = (1/4) int |w|^2 / m.
    # With m Gaussian and w = grad m = -(x/sigma^2) m: K = (1/4) E[x^2]/sigma^4.
    grid = GridSpec(dim=1, half_width=8.0, cells_per_axis=1024)
    m, w = _gaussian_pair(grid, sigma=1.0)
    K = kinetic_cost(m, w, HP)
    assert K == pytest.approx(0.25, rel=1e-3)


def test_kinetic_scaling_in_amplitude():
    m, w = _gaussian_pair(GRID)
    K = kinetic_cost(m, w, HP)
    m2 = ScalarField(GRID, 3.0 * m.values)
    w2 = FluxField(GRID, tuple(3.0 * c for c in w.components))
    assert kinetic_cost(m2, w2, HP) == pytest.approx(3.0 * K, rel=1e-12)


def test_kinetic_zero_flux_zero_cost():
    m, _ = _gaussian_pair(GRID)
    assert kinetic_cost(m, FluxField.zeros(GRID), HP) == 0.0


def test_kinetic_infeasible_flux_through_empty_region():
    # compactly supported bump, then inject flux far away where m = 0
    x = GRID.cell_coords()[0]
    mv = np.clip(1.0 - x ** 2, 0.0, None)
    mv /= GRID.cell_volume * float(np.sum(mv))
    m = ScalarField(GRID, mv)
    w = grad(m)
    comps = [np.array(w.components[0])]
    comps[0][10] = 1.0      # deep inside the dead region
    w_bad = FluxField(GRID, zero_boundary_faces(GRID, comps))
    with pytest.raises(InfeasibleKinetic):
        kinetic_cost(m, w_bad, HP)
    # the support-edge faces of the same bump are fine: w = grad m there
    assert np.isfinite(kinetic_cost(m, w, HP))


# ---------------------------------------------------------------------------
# coupling terms and groupings
# ---------------------------------------------------------------------------

def test_self_and_cross_terms_identical_densities():
    m, _ = _gaussian_pair(GRID)
    s1 = self_term(m, 1.0, HP)
    assert s1 < 0
    # for m1 = m2 the overlap integral equals int m^{2s} = int m^{1+gamma'/N}
    ov = overlap(m, m, HP)
    nl = GRID.cell_volume * float(np.sum(m.values ** (1.0 + 2.0)))
    assert ov == pytest.approx(nl, rel=1e-12)
    assert cross_term(m, m, 1.0, HP) == pytest.approx(2.0 * s1, rel=1e-12)
    assert sq_diff_term(m, m, HP) == 0.0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.0, 5.0), st.floats(0.0, 5.0),
       st.floats(-3.0, 3.0))
def test_energy_groupings_agree(seed, a1, a2, beta):
    pair1 = random_feasible(seed, GRID)
    pair2 = random_feasible(seed + 1, GRID)
    params = MFGParams(hp=HP, couplings=CouplingParams(a1, a2, beta),
                       v1=PotentialSpec.quadratic(),
                       v2=PotentialSpec.quadratic())
    bd = total_energy((pair1.m, pair1.w, pair2.m, pair2.w), params)
    assert bd.total == pytest.approx(bd.total_regrouped,
                                     rel=1e-10, abs=1e-10)
    parts = (bd.kinetic_1 + bd.kinetic_2 + bd.potential_1 + bd.potential_2
             + bd.self_1 + bd.self_2 + bd.cross)
    assert bd.total == pytest.approx(parts, rel=1e-12)


def test_potential_energy_values():
    m, _ = _gaussian_pair(GRID)
    v = PotentialSpec.quadratic()
    # int x^2 * gaussian(sigma=1) ~ 1 on a wide box
    assert potential_energy(v, m) == pytest.approx(1.0, rel=1e-2)
    assert potential_energy(None, m) == 0.0


# ---------------------------------------------------------------------------
# thresholds and quotient
# ---------------------------------------------------------------------------

def test_thresholds():
    a_star = 7.4
    cp = CouplingParams(3.4, 5.4, 0.0)
    th = thresholds(cp, a_star)
    assert th.beta_sub == pytest.approx(math.sqrt(4.0 * 2.0))
    assert th.beta_super == pytest.approx(0.5 * (2 * a_star - 3.4 - 5.4))
    assert th.alpha_beta_star == pytest.approx(a_star)
    # supercritical alpha kills the geometric-mean branch
    assert thresholds(CouplingParams(8.0, 1.0, 0.0), a_star).beta_sub == 0.0


def test_gn_quotient_scale_free():
    m, w = _gaussian_pair(GRID)
    q = gn_quotient(m, w, HP)
    m2 = ScalarField(GRID, 5.0 * m.values)
    w2 = FluxField(GRID, tuple(5.0 * c for c in w.components))
    # Q(c m, c w) = Q(m, w): amplitude invariance of the quotient
    assert gn_quotient(m2, w2, HP) == pytest.approx(q, rel=1e-12)
