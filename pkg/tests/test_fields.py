"""Grid geometry, calculus operators, quadrature oracles, and dump format."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfg_ground.fields import (
    DensityField,
    FluxField,
    GridSpec,
    ScalarField,
    div,
    dump_flux,
    dump_scalar,
    face_average,
    face_spread,
    flux_inner,
    grad,
    inner,
    integral,
    laplacian,
    load_flux,
    load_scalar,
    mass,
    pack_flux,
    unpack_flux,
)

GRID1 = GridSpec(dim=1, half_width=6.0, cells_per_axis=64)
GRID2 = GridSpec(dim=2, half_width=4.0, cells_per_axis=32)


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def test_grid_geometry():
    assert GRID1.spacing == pytest.approx(12.0 / 64)
    assert GRID1.num_cells == 64
    assert GRID2.num_cells == 32 * 32
    assert GRID2.cell_volume == pytest.approx(GRID2.spacing ** 2)
    centers = GRID1.axis_centers()
    faces = GRID1.axis_faces()
    assert len(centers) == 64 and len(faces) == 65
    # centers sit midway between faces and the layout is symmetric
    np.testing.assert_allclose(centers, 0.5 * (faces[:-1] + faces[1:]))
    np.testing.assert_allclose(centers, -centers[::-1])
    assert faces[0] == -6.0 and faces[-1] == 6.0


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(dim=3, half_width=1.0, cells_per_axis=32)
    with pytest.raises(ValueError):
        GridSpec(dim=1, half_width=-1.0, cells_per_axis=32)
    with pytest.raises(ValueError):
        GridSpec(dim=1, half_width=1.0, cells_per_axis=8)


def test_field_shape_checks():
    with pytest.raises(ValueError):
        ScalarField(GRID1, np.zeros(32))
    with pytest.raises(ValueError):
        ScalarField(GRID1, np.full(64, np.nan))
    with pytest.raises(ValueError):
        FluxField(GRID1, (np.zeros(64),))          # must be n+1 faces
    bad = np.ones(65)
    with pytest.raises(ValueError):
        FluxField(GRID1, (bad,))                   # nonzero boundary faces


def test_density_clips_roundoff_negativity_only():
    v = np.ones(GRID1.shape)
    v[0] = -1e-14
    d = DensityField(GRID1, v)
    assert float(np.min(d.values)) == 0.0
    v[0] = -1e-3
    with pytest.raises(ValueError):
        DensityField(GRID1, v)


# ---------------------------------------------------------------------------
# quadrature oracle: Gaussian mass via erf
# ---------------------------------------------------------------------------

def test_gaussian_mass_matches_erf():
    # midpoint quadrature of exp(-x^2/2)/sqrt(2 pi) on [-6, 6]:
    # exact integral is erf(6/sqrt(2)); midpoint error is O(h^2)
    x = GRID1.cell_coords()[0]
    m = ScalarField(GRID1, np.exp(-x ** 2 / 2) / math.sqrt(2 * math.pi))
    exact = math.erf(6.0 / math.sqrt(2.0))
    assert mass(m) == pytest.approx(exact, abs=5e-4)
    fine = GridSpec(dim=1, half_width=6.0, cells_per_axis=1024)
    xf = fine.cell_coords()[0]
    mf = ScalarField(fine, np.exp(-xf ** 2 / 2) / math.sqrt(2 * math.pi))
    assert mass(mf) == pytest.approx(exact, abs=2e-8)


def test_gaussian_mass_2d():
    xs, ys = GRID2.cell_coords()
    m = ScalarField(GRID2, np.exp(-(xs ** 2 + ys ** 2) / 2) / (2 * math.pi))
    exact = math.erf(4.0 / math.sqrt(2.0)) ** 2
    assert mass(m) == pytest.approx(exact, abs=2e-3)


# ---------------------------------------------------------------------------
# gradient / divergence adjointness and Laplacian accuracy
# ---------------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 9), st.sampled_from([GRID1, GRID2]))
def test_grad_div_adjoint(seed, grid):
    rng = np.random.default_rng(seed)
    u = ScalarField(grid, rng.standard_normal(grid.shape))
    comps = [rng.standard_normal(grid.face_shape(ax)) for ax in range(grid.dim)]
    from mfg_ground.fields import zero_boundary_faces
    w = FluxField(grid, zero_boundary_faces(grid, comps))
    lhs = flux_inner(grad(u), w)
    rhs = -inner(u, div(w))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_laplacian_analytic():
    # u = cos(pi x / L) has zero normal derivative at the boundary, so the
    # zero-flux Laplacian is second-order accurate against -(pi/L)^2 u
    for n in (64, 128):
        grid = GridSpec(dim=1, half_width=6.0, cells_per_axis=n)
        x = grid.cell_coords()[0]
        k = math.pi / 6.0
        u = ScalarField(grid, np.cos(k * x))
        lap = laplacian(u).values
        err = float(np.max(np.abs(lap + k ** 2 * np.cos(k * x))))
        assert err < 4.0 * (grid.spacing * k) ** 2
    # halving h quarters the error
    errs = []
    for n in (64, 128):
        grid = GridSpec(dim=1, half_width=6.0, cells_per_axis=n)
        x = grid.cell_coords()[0]
        u = ScalarField(grid, np.cos(math.pi * x / 6.0))
        errs.append(float(np.max(np.abs(
            laplacian(u).values + (math.pi / 6.0) ** 2 * np.cos(math.pi * x / 6.0)))))
    assert errs[1] < 0.3 * errs[0]


def test_face_average_spread_adjoint():
    rng = np.random.default_rng(7)
    for grid in (GRID1, GRID2):
        cell_vec = rng.standard_normal((grid.dim,) + grid.shape)
        comps = [rng.standard_normal(grid.face_shape(ax))
                 for ax in range(grid.dim)]
        from mfg_ground.fields import zero_boundary_faces
        comps = zero_boundary_faces(grid, comps)
        w = FluxField(grid, comps)
        lhs = float(np.sum(face_average(w) * cell_vec))
        spread = face_spread(grid, cell_vec)
        rhs = float(sum(np.sum(a * b) for a, b in zip(w.components, spread)))
        assert lhs == pytest.approx(rhs, rel=1e-12)


# ---------------------------------------------------------------------------
# packing and dumps
# ---------------------------------------------------------------------------

def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(3)
    for grid in (GRID1, GRID2):
        comps = [rng.standard_normal(grid.face_shape(ax))
                 for ax in range(grid.dim)]
        from mfg_ground.fields import zero_boundary_faces
        w = FluxField(grid, zero_boundary_faces(grid, comps))
        w2 = unpack_flux(grid, pack_flux(w))
        for a, b in zip(w.components, w2.components):
            np.testing.assert_array_equal(a, b)


def test_dump_load_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    u = ScalarField(GRID2, rng.standard_normal(GRID2.shape))
    p = tmp_path / "u.field"
    dump_scalar(u, p)
    u2 = load_scalar(p)
    assert u2.grid == GRID2
    np.testing.assert_array_equal(u.values, u2.values)
    from mfg_ground.fields import zero_boundary_faces
    comps = zero_boundary_faces(
        GRID2, [rng.standard_normal(GRID2.face_shape(ax)) for ax in range(2)])
    w = FluxField(GRID2, comps)
    q = tmp_path / "w.field"
    dump_flux(w, q)
    w2 = load_flux(q)
    for a, b in zip(w.components, w2.components):
        np.testing.assert_array_equal(a, b)
    # a second dump of the reloaded field is byte-identical
    q2 = tmp_path / "w2.field"
    dump_flux(w2, q2)
    assert q.read_bytes() == q2.read_bytes()


def test_integral_linear():
    u = ScalarField(GRID1, np.full(GRID1.shape, 2.5))
    assert integral(u) == pytest.approx(2.5 * 12.0)
