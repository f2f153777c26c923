"""Value-function reconstruction and PDE diagnostics.

Recovers the value function u and the ergodic constant lambda from a
variational state (via the pointwise flux relation and via a closed
Lagrange-multiplier formula), solves ergodic HJB problems by semi-implicit
time marching with an upwind Hamiltonian, and provides residual and
tail-decay diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import (HamiltonianParams, MFGParams, coupling_s, kinetic_cost,
                     potential_values)
from .errors import DegenerateCell, InsufficientTail, MarchingDiverged
from .fields import (
    FluxField,
    GridSpec,
    ScalarField,
    face_average,
    grad,
    laplacian,
    zero_boundary_faces,
)


@dataclass(frozen=True)
class ValuePair:
    """Value function normalized to min u = 0, with its ergodic constant."""

    u: ScalarField
    lam: float
    x_min: tuple   # coordinates of the (lexicographically first) argmin cell

    def __post_init__(self):
        if float(np.min(self.u.values)) < -1e-9:
            raise ValueError("value function must be min-normalized")


@dataclass(frozen=True)
class DecayFit:
    kappa: float
    delta0: float
    fit_range: tuple
    r2: float


@dataclass(frozen=True)
class HJBConfig:
    dt: float | None = None
    tol: float = 1e-9
    max_steps: int = 400000
    scheme: str = "upwind"   # "upwind" | "centered"
    polish: bool = True      # second-order centered polish after upwind pass


def _argmin_cell(u: ScalarField) -> tuple:
    idx = np.unravel_index(int(np.argmin(u.values)), u.grid.shape)
    centers = u.grid.axis_centers()
    return tuple(float(centers[i]) for i in idx)


def argmax_cell(m: ScalarField) -> tuple:
    """Lexicographically-first argmax cell center (deterministic tie-break)."""
    idx = np.unravel_index(int(np.argmax(m.values)), m.grid.shape)
    centers = m.grid.axis_centers()
    return tuple(float(centers[i]) for i in idx)


def _face_density(m: ScalarField) -> tuple:
    """Density interpolated to faces (boundary faces get the edge cell)."""
    grid = m.grid
    out = []
    for ax in range(grid.dim):
        f = np.zeros(grid.face_shape(ax))
        interior = [slice(None)] * grid.dim
        interior[ax] = slice(1, -1)
        # interior faces: mean of the two adjacent cells
        sl_l = [slice(None)] * grid.dim
        sl_l[ax] = slice(0, -1)
        sl_r = [slice(None)] * grid.dim
        sl_r[ax] = slice(1, None)
        f[tuple(interior)] = 0.5 * (m.values[tuple(sl_l)] + m.values[tuple(sl_r)])
        out.append(f)
    return tuple(out)


def _face_tangential_sq(w: FluxField) -> tuple:
    """Squared magnitude of the tangential flux components at each face
    (zero in 1D), interpolated from the cell-centered reconstruction."""
    grid = w.grid
    if grid.dim == 1:
        return (np.zeros(grid.face_shape(0)),)
    wbar = face_average(w)   # (dim, n, n) at cell centers
    out = []
    for ax in range(grid.dim):
        other = 1 - ax
        t = np.zeros(grid.face_shape(ax))
        interior = [slice(None)] * grid.dim
        interior[ax] = slice(1, -1)
        sl_l = [slice(None)] * grid.dim
        sl_l[ax] = slice(0, -1)
        sl_r = [slice(None)] * grid.dim
        sl_r[ax] = slice(1, None)
        t[tuple(interior)] = (0.5 * (wbar[other][tuple(sl_l)]
                                     + wbar[other][tuple(sl_r)])) ** 2
        out.append(t)
    return tuple(out)


def grad_u_from_flux(m: ScalarField, w: FluxField, hp: HamiltonianParams) -> FluxField:
    """Invert w = -C_H gamma m |grad u|^{gamma-2} grad u for grad u on faces."""
    grid = w.grid
    mf = _face_density(m)
    tang = _face_tangential_sq(w)
    floor = 1e-14 * max(float(np.max(m.values)), 0.0)
    w_scale = max(max(float(np.max(np.abs(c))) for c in w.components), 1e-300)
    comps = []
    for ax in range(grid.dim):
        wn = w.components[ax]
        wmag = np.sqrt(wn ** 2 + tang[ax])
        dead = mf[ax] <= floor
        if np.any(np.abs(wn[dead]) > max(1e-10, 1e-6 * w_scale)):
            raise DegenerateCell("flux through a face with no adjacent mass")
        wn = np.where(dead, 0.0, wn)
        wmag = np.where(dead, 0.0, wmag)
        speed = np.zeros_like(wn)
        live = ~dead & (wmag > 0)
        speed[live] = (wmag[live] / (hp.c_h * hp.gamma * mf[ax][live])) ** (
            1.0 / (hp.gamma - 1.0))
        gu = np.zeros_like(wn)
        gu[live] = -speed[live] * wn[live] / wmag[live]
        comps.append(gu)
    return FluxField(grid, tuple(zero_boundary_faces(grid, comps)))


def recover_w_from_u(m: ScalarField, u: ScalarField, hp: HamiltonianParams) -> FluxField:
    """w = -C_H gamma m |grad u|^{gamma-2} grad u with face-interpolated m."""
    grid = u.grid
    gu = grad(u)
    mf = _face_density(m)
    tang = _face_tangential_sq(gu)
    comps = []
    for ax in range(grid.dim):
        gn = gu.components[ax]
        gmag = np.sqrt(gn ** 2 + tang[ax])
        scale = np.zeros_like(gn)
        live = gmag > 0
        scale[live] = hp.c_h * hp.gamma * mf[ax][live] * gmag[live] ** (hp.gamma - 2.0)
        comps.append(-scale * gn)
    return FluxField(grid, tuple(zero_boundary_faces(grid, comps)))


def lambda_formula(i: int, state, params: MFGParams) -> float:
    """Closed Lagrange-multiplier formula:
    lambda_i = kinetic_i + int V_i m_i - alpha_i int m_i^{1+g'/N} - beta int (m1 m2)^s.
    """
    m1, w1, m2, w2 = state
    grid = m1.grid
    hp, cp = params.hp, params.couplings
    N = grid.dim
    gc = hp.gamma_conj
    s = coupling_s(N, hp)
    mi, wi = (m1, w1) if i == 1 else (m2, w2)
    vol = grid.cell_volume
    mvi = np.clip(np.asarray(mi.values, float), 0.0, None)
    m1v = np.clip(np.asarray(m1.values, float), 0.0, None)
    m2v = np.clip(np.asarray(m2.values, float), 0.0, None)
    lam = kinetic_cost(mi, wi, hp)
    lam += vol * float(np.sum(potential_values(params.potential(i), grid) * mvi))
    lam -= cp.alpha(i) * vol * float(np.sum(mvi ** (1.0 + gc / N)))
    lam -= cp.beta * vol * float(np.sum((m1v * m2v) ** s))
    return lam


# ---------------------------------------------------------------------------
# ergodic HJB marching
# ---------------------------------------------------------------------------

def _upwind_grad_mag(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Rouy-Tourin monotone gradient magnitude (Neumann at the box edge)."""
    h = grid.spacing
    total = np.zeros(grid.shape)
    for ax in range(grid.dim):
        d = np.diff(u, axis=ax) / h
        pad_lo = [(0, 0)] * grid.dim
        pad_lo[ax] = (1, 0)
        pad_hi = [(0, 0)] * grid.dim
        pad_hi[ax] = (0, 1)
        dminus = np.pad(d, pad_lo)          # backward difference, 0 at low edge
        dplus = np.pad(d, pad_hi)           # forward difference, 0 at high edge
        val = np.maximum(np.maximum(dminus, 0.0), np.maximum(-dplus, 0.0))
        total += val ** 2
    return np.sqrt(total)


def centered_grad_mag(u: ScalarField) -> np.ndarray:
    gu = face_average(grad(u))
    return np.sqrt(np.sum(gu ** 2, axis=0))


def _laplacian_matrix(grid: GridSpec) -> sp.csc_matrix:
    from .constraints import _grad_matrix
    G = _grad_matrix(grid)
    return (-(G.T @ G)).tocsc()


_lap_cache: dict = {}


def laplacian_matrix(grid: GridSpec) -> sp.csc_matrix:
    key = (grid.dim, grid.cells_per_axis, grid.half_width)
    if key not in _lap_cache:
        _lap_cache[key] = _laplacian_matrix(grid)
    return _lap_cache[key]


def potential_from_gradient(grid: GridSpec, gu: FluxField) -> ScalarField:
    """Least-squares potential u with grad(u) closest to the face field gu,
    normalized to min u = 0.  Solves the Neumann Poisson problem
    Lap u = div(gu) with one pinned cell (the right-hand side is compatible
    because face fields with zero boundary flux have zero total divergence).
    """
    from .fields import div as _div
    L = laplacian_matrix(grid).tolil()
    rhs = _div(gu).values.ravel().copy()
    L[0, :] = 0.0
    L[0, 0] = 1.0
    rhs[0] = 0.0
    u = spla.spsolve(L.tocsc(), rhs).reshape(grid.shape)
    u = u - float(np.min(u))
    return ScalarField(grid, u)


def solve_ergodic_hjb(F: ScalarField, hp: HamiltonianParams,
                      cfg: HJBConfig | None = None) -> ValuePair:
    """March du/dt = Lap u - C_H |grad u|^gamma + F - lambda(t) to steady
    state; lambda(t) is the spatial mean of the right-hand side, so the mean
    of u is conserved and lambda converges to the ergodic constant."""
    cfg = cfg or HJBConfig()
    grid = F.grid
    h = grid.spacing
    fv = F.values
    # gradient scale estimate from the range of F
    p_est = (max(float(np.max(fv) - np.min(fv)), 1.0) / hp.c_h) ** (1.0 / hp.gamma)
    dt = cfg.dt or 0.5 * h / (hp.c_h * hp.gamma * max(p_est, 1.0) ** (hp.gamma - 1.0) + 1.0)
    L = laplacian_matrix(grid)
    solver = spla.splu((sp.identity(grid.num_cells, format="csc") - dt * L).tocsc())

    def march(u, scheme, tol, max_steps, dt_local):
        lam = 0.0
        for step in range(max_steps):
            if scheme == "upwind":
                gmag = _upwind_grad_mag(u, grid)
            else:
                gmag = centered_grad_mag(ScalarField(grid, u))
            lap_u = laplacian(ScalarField(grid, u)).values
            rhs = lap_u - hp.c_h * gmag ** hp.gamma + fv
            lam = float(np.mean(rhs))
            unew = solver.solve((u + dt_local * (rhs - lam - lap_u)).ravel()).reshape(grid.shape)
            delta = float(np.max(np.abs(unew - u))) / dt_local
            u = unew
            if not np.isfinite(delta) or float(np.max(np.abs(u))) > 1e12:
                raise MarchingDiverged(f"HJB marching blew up at step {step}")
            if delta < tol:
                return u, lam, True
        return u, lam, False

    u0 = np.zeros(grid.shape)
    scheme = cfg.scheme
    u, lam, ok = march(u0, scheme, cfg.tol, cfg.max_steps, dt)
    if not ok:
        raise MarchingDiverged("HJB marching did not reach tolerance")
    if scheme == "upwind" and cfg.polish:
        # second-order polish: restart the march with the centered gradient
        # from the upwind solution; fall back to the upwind answer if the
        # centered march is unstable for this problem.
        try:
            u2, lam2, ok2 = march(u.copy(), "centered", cfg.tol, cfg.max_steps, dt)
            if ok2:
                u, lam = u2, lam2
        except MarchingDiverged:
            pass
    u = u - float(np.min(u))
    uf = ScalarField(grid, u)
    return ValuePair(u=uf, lam=lam, x_min=_argmin_cell(uf))


def hjb_residual(u: ScalarField, lam: float, m: ScalarField, F: ScalarField,
                 hp: HamiltonianParams, scheme: str = "centered") -> float:
    """Max-norm residual of -Lap u + C_H|grad u|^gamma + lambda = F over the
    cells where m carries mass (m > 1e-10 max m)."""
    grid = u.grid
    if scheme == "upwind":
        gmag = _upwind_grad_mag(u.values, grid)
    else:
        gmag = centered_grad_mag(u)
    res = -laplacian(u).values + hp.c_h * gmag ** hp.gamma + lam - F.values
    mask = m.values > 1e-10 * float(np.max(m.values))
    if not np.any(mask):
        return float(np.max(np.abs(res)))
    return float(np.max(np.abs(res[mask])))


def coupling_rhs(i: int, m1: ScalarField, m2: ScalarField, params: MFGParams) -> ScalarField:
    """Right-hand side V_i + f_i(m1, m2) of population i's HJB equation."""
    grid = m1.grid
    hp, cp = params.hp, params.couplings
    N = grid.dim
    gc = hp.gamma_conj
    s = coupling_s(N, hp)
    mo = np.clip((m1 if i == 1 else m2).values, 0.0, None)
    mt = np.clip((m2 if i == 1 else m1).values, 0.0, None)
    f = -cp.alpha(i) * mo ** (gc / N) - cp.beta * mo ** (s - 1.0) * mt ** s
    v = potential_values(params.potential(i), grid)
    return ScalarField(grid, v + f)


def decay_fit(m: ScalarField, center: tuple | None = None,
              delta0_grid=None, floor_rel: float = 1e-4) -> DecayFit:
    """Fit log m ~ log C - kappa * r^{delta0} on the tail of a single bump,
    scanning delta0 over (0, 1] and keeping the best r^2.

    The window spans (floor_rel, 0.5) relative to the peak: the upper cut
    excludes the core where the profile is not yet in its decay regime, the
    lower cut excludes the last few digits where stored profiles are tapered
    to exact zero at their support edge."""
    grid = m.grid
    mv = np.asarray(m.values, float)
    peak = float(np.max(mv))
    if center is None:
        center = argmax_cell(m)
    r = grid.radius(origin=center)
    usable = (mv > floor_rel * peak) & (mv < 0.5 * peak) & (r > 0)
    if int(np.sum(usable)) < 10:
        raise InsufficientTail("fewer than 10 usable tail cells")
    rr = r[usable]
    ll = np.log(mv[usable])
    if delta0_grid is None:
        delta0_grid = np.linspace(0.2, 1.0, 33)
    best = None
    for d0 in delta0_grid:
        x = rr ** d0
        A = np.column_stack([np.ones_like(x), x])
        coef, *_ = np.linalg.lstsq(A, ll, rcond=None)
        pred = A @ coef
        ss_res = float(np.sum((ll - pred) ** 2))
        ss_tot = float(np.sum((ll - np.mean(ll)) ** 2))
        r2 = 1.0 - ss_res / max(ss_tot, 1e-300)
        kappa = -coef[1]
        if kappa <= 0:
            continue
        if best is None or r2 > best[0]:
            best = (r2, float(d0), float(kappa))
    if best is None:
        raise InsufficientTail("no decaying fit found")
    r2, d0, kappa = best
    return DecayFit(kappa=kappa, delta0=d0,
                    fit_range=(float(np.min(rr)), float(np.max(rr))), r2=r2)
