"""Discrete feasible set for one population: the weak Fokker-Planck identity
-Lap(m) + div(w) = 0 on every cell, unit mass, and nonnegativity.

The PDE rows and the mass row are assembled once per grid into a sparse
operator A acting on the stacked vector z = (m, w).  Euclidean projection
onto {A z = (0, 1)} is computed through the dual normal equations
A A^T y = A z - b.  One PDE row is redundant (the rows telescope to zero),
so it is dropped before factorization; the reduced system is symmetric
positive definite and is pre-factorized per grid, which makes repeated
projections cheap inside the optimizer.  A Jacobi-preconditioned CG path is
kept for cross-checking the direct solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.ndimage import gaussian_filter

from .errors import AlternatingProjectionStalled, SolverDiverged
from .fields import (
    DensityField,
    FluxField,
    GridSpec,
    ScalarField,
    div,
    grad,
    laplacian,
    pack_flux,
    unpack_flux,
    zero_boundary_faces,
)


@dataclass(frozen=True)
class FeasiblePair:
    """A density/flux pair satisfying the discrete constraint set."""

    m: ScalarField
    w: FluxField
    residual_norm: float

    @property
    def density(self) -> DensityField:
        return DensityField(self.m.grid, np.clip(self.m.values, 0.0, None))

    @property
    def grid(self) -> GridSpec:
        return self.m.grid


def fp_residual(m: ScalarField, w: FluxField) -> ScalarField:
    """Per-cell residual -Lap(m) + div(w) of the weak Fokker-Planck identity."""
    r = -laplacian(m).values + div(w).values
    return ScalarField(m.grid, r)


def _grad_matrix(grid: GridSpec) -> sp.csr_matrix:
    """Sparse matrix of the discrete gradient (cells -> all faces, boundary
    face rows identically zero)."""
    n = grid.cells_per_axis
    h = grid.spacing
    # 1D single-axis gradient: (n+1) x n, interior rows only.
    rows, cols, vals = [], [], []
    for k in range(1, n):
        rows += [k, k]
        cols += [k - 1, k]
        vals += [-1.0 / h, 1.0 / h]
    g1 = sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))
    if grid.dim == 1:
        return g1
    eye = sp.identity(n, format="csr")
    g_ax0 = sp.kron(g1, eye, format="csr")   # faces normal to axis 0
    g_ax1 = sp.kron(eye, g1, format="csr")   # faces normal to axis 1
    return sp.vstack([g_ax0, g_ax1], format="csr")


class ConstraintOperator:
    """Assembled linear map A(m, w) = (-Lap m + div w, <1,m> h^dim)."""

    def __init__(self, grid: GridSpec):
        self.grid = grid
        nc = grid.num_cells
        G = _grad_matrix(grid)
        D = (-G.T).tocsr()                 # exact negative adjoint
        L = (D @ G).tocsr()                # zero-flux Laplacian
        pde = sp.hstack([-L, D], format="csr")
        mass_row = sp.hstack(
            [sp.csr_matrix(np.full((1, nc), grid.cell_volume)),
             sp.csr_matrix((1, D.shape[1]))],
            format="csr",
        )
        self.A = sp.vstack([pde, mass_row], format="csr")
        # PDE rows sum to zero: drop the last one before factorizing.
        keep = list(range(nc - 1)) + [nc]
        self.A_red = self.A[keep, :].tocsr()
        self._aat = (self.A_red @ self.A_red.T).tocsc()
        self._factor = None
        self.b_red = np.zeros(nc)
        self.b_red[-1] = 1.0   # mass row target
        self.b_full = np.zeros(nc + 1)
        self.b_full[-1] = 1.0

    @property
    def factor(self):
        if self._factor is None:
            self._factor = spla.splu(self._aat)
        return self._factor

    # -- packing helpers ----------------------------------------------------
    def pack(self, m: ScalarField, w: FluxField) -> np.ndarray:
        return np.concatenate([np.asarray(m.values, float).ravel(), pack_flux(w)])

    def unpack(self, z: np.ndarray):
        nc = self.grid.num_cells
        m = ScalarField(self.grid, z[:nc].reshape(self.grid.shape))
        w = unpack_flux(self.grid, z[nc:])
        return m, w

    def residual(self, z: np.ndarray) -> np.ndarray:
        return self.A @ z - self.b_full

    def residual_norm(self, z: np.ndarray) -> float:
        r = self.residual(z)
        return float(np.linalg.norm(r[:-1], np.inf))

    # -- projections --------------------------------------------------------
    def project_vec(self, z: np.ndarray, target_mass: float = 1.0) -> np.ndarray:
        """Euclidean projection of z onto {A z = (0, target_mass)}."""
        b = self.b_red.copy()
        b[-1] = target_mass
        r = self.A_red @ z - b
        y = self.factor.solve(r)
        return z - self.A_red.T @ y

    def project_vec_cg(self, z: np.ndarray, target_mass: float = 1.0,
                       tol: float = 1e-12, max_iter: int = 20000) -> np.ndarray:
        """Same projection via Jacobi-preconditioned CG on A A^T y = r."""
        b = self.b_red.copy()
        b[-1] = target_mass
        r = self.A_red @ z - b
        diag = self._aat.diagonal()
        M = sp.diags(1.0 / diag)
        y, info = spla.cg(self._aat, r, rtol=tol, atol=0.0, maxiter=max_iter, M=M)
        if info != 0:
            raise SolverDiverged(f"projection CG failed (info={info})")
        return z - self.A_red.T @ y

    def project_tangent(self, g: np.ndarray) -> np.ndarray:
        """Project a gradient onto the tangent space {A g = 0}."""
        y = self.factor.solve(self.A_red @ g)
        return g - self.A_red.T @ y

    def dense_matrix(self) -> np.ndarray:
        """Dense copy of the full operator (small grids only, for oracles)."""
        if self.grid.num_cells > 2048:
            raise ValueError("dense form requested on a large grid")
        return self.A.toarray()


def project(m: ScalarField, w: FluxField, op: ConstraintOperator | None = None,
            method: str = "direct") -> FeasiblePair:
    """Project (m, w) onto the affine constraint set (PDE rows + unit mass)."""
    if op is None:
        op = ConstraintOperator(m.grid)
    z = op.pack(m, w)
    if method == "cg":
        z = op.project_vec_cg(z)
    else:
        z = op.project_vec(z)
    mp, wp = op.unpack(z)
    return FeasiblePair(m=mp, w=wp, residual_norm=op.residual_norm(z))


def clip_nonnegative(pair: FeasiblePair, op: ConstraintOperator | None = None,
                     max_rounds: int = 50) -> FeasiblePair:
    """Alternate clipping m at zero with re-projection until the pair is
    feasible and nonnegative to round-off.  Intended for mild negativity."""
    if op is None:
        op = ConstraintOperator(pair.grid)
    grid = pair.grid
    mv = np.asarray(pair.m.values, float)
    scale = max(float(np.max(np.abs(mv))), 1e-300)
    if float(np.min(mv)) < -1e-3 * scale:
        raise AlternatingProjectionStalled(
            "input negativity too severe for alternating projection")
    z = op.pack(pair.m, pair.w)
    nc = grid.num_cells
    for _ in range(max_rounds):
        mv = z[:nc]
        scale = max(float(np.max(np.abs(mv))), 1e-300)
        neg = float(np.min(mv))
        res = op.residual_norm(z)
        if neg >= -1e-12 * scale and res <= 1e-10 * (1.0 + float(np.linalg.norm(z))):
            z = z.copy()
            z[:nc] = np.clip(z[:nc], 0.0, None)
            m, w = op.unpack(z)
            return FeasiblePair(m=m, w=w, residual_norm=op.residual_norm(z))
        z = z.copy()
        z[:nc] = np.clip(z[:nc], 0.0, None)
        z = op.project_vec(z)
    raise AlternatingProjectionStalled(
        f"no nonnegative feasible point after {max_rounds} rounds")


def scrub_tails(z: np.ndarray, op: ConstraintOperator,
                floor_rel: float = 1e-13) -> np.ndarray:
    """Zero out sub-round-off tail debris while keeping the state exactly
    feasible and within the perspective conventions (no flux through empty
    cells).

    Cells with m below floor_rel*max(m) are set to exactly zero and the mass
    is restored by a multiplicative rescale.  The flux is then rebuilt as
    grad(m) plus the solenoidal remainder w - grad(m_old), which preserves
    the Fokker-Planck identity exactly; the remainder is zeroed on faces
    touching dead cells (in 1D it vanishes identically, so no re-projection
    is needed; in 2D one projection absorbs the small divergence this
    introduces)."""
    grid = op.grid
    nc = grid.num_cells
    mv = np.asarray(z[:nc], float).reshape(grid.shape)
    floor = floor_rel * max(float(np.max(mv)), 1e-300)
    dead = mv <= floor
    m2 = np.where(dead, 0.0, np.clip(mv, 0.0, None))
    total = grid.cell_volume * float(np.sum(m2))
    if total <= 0.0:
        raise SolverDiverged("density vanished during tail scrub")
    c = 1.0 / total
    m2 = c * m2
    w = unpack_flux(grid, z[nc:])
    g_old = grad(ScalarField(grid, mv))
    g_new = grad(ScalarField(grid, m2))
    comps = []
    for ax in range(grid.dim):
        s = c * (np.asarray(w.components[ax], float) - g_old.components[ax])
        deadface = np.zeros(grid.face_shape(ax), dtype=bool)
        interior = [slice(None)] * grid.dim
        interior[ax] = slice(1, -1)
        sl_l = [slice(None)] * grid.dim
        sl_l[ax] = slice(0, -1)
        sl_r = [slice(None)] * grid.dim
        sl_r[ax] = slice(1, None)
        deadface[tuple(interior)] = dead[tuple(sl_l)] | dead[tuple(sl_r)]
        s[deadface] = 0.0
        comps.append((g_new.components[ax] + s).ravel())
    z2 = np.concatenate([m2.ravel()] + comps)
    if grid.dim > 1:
        z2 = op.project_vec(z2)
        z2[:nc] = np.clip(z2[:nc], 0.0, None)
    return z2


def _stream_to_flux(grid: GridSpec, psi: np.ndarray) -> FluxField:
    """2D divergence-free flux from a node-based stream function.

    psi has shape (n+1, n+1) and vanishes on the boundary nodes; the face
    fluxes are exact node differences, so the discrete divergence is zero.
    """
    h = grid.spacing
    wx = (psi[:, 1:] - psi[:, :-1]) / h          # (n+1, n) faces normal to x
    wy = -(psi[1:, :] - psi[:-1, :]) / h         # (n, n+1) faces normal to y
    return FluxField(grid, tuple(zero_boundary_faces(grid, (wx, wy))))


def random_feasible(seed: int, grid: GridSpec, smoothness: float = 4.0) -> FeasiblePair:
    """Random exactly-feasible pair: m is normalized smoothed positive noise
    (tapered to zero at the box boundary) and w = grad(m) plus, in 2D, a
    divergence-free flux whose size shrinks as smoothness grows."""
    rng = np.random.default_rng(seed)
    noise = gaussian_filter(rng.standard_normal(grid.shape), sigma=smoothness,
                            mode="constant")
    noise = noise / max(float(np.std(noise)), 1e-12)
    taper = np.ones(grid.shape)
    for ax, c in enumerate(grid.cell_coords()):
        taper = taper * np.clip(1.0 - (c / grid.half_width) ** 2, 0.0, None) ** 2
    mv = np.exp(noise) * taper
    mv = mv / (grid.cell_volume * float(np.sum(mv)))
    m = ScalarField(grid, mv)
    w = grad(m)
    if grid.dim == 2:
        n = grid.cells_per_axis
        psi = gaussian_filter(rng.standard_normal((n + 1, n + 1)),
                              sigma=smoothness, mode="constant")
        psi[0, :] = psi[-1, :] = 0.0
        psi[:, 0] = psi[:, -1] = 0.0
        sol = _stream_to_flux(grid, psi * (0.1 / max(smoothness, 1e-6)))
        w = FluxField(grid, tuple(a + b for a, b in zip(w.components, sol.components)))
    op = ConstraintOperator(grid)
    z = op.pack(m, w)
    return FeasiblePair(m=m, w=w, residual_norm=op.residual_norm(z))
