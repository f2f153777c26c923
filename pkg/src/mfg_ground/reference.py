"""Potential-free single-population reference problem.

Minimizes the scale-free quotient

    Q(m, w) = kinetic(m, w) * mass(m)^{gamma'/N} / ((N/(N+gamma')) int m^{1+gamma'/N})

over the discrete feasible set by projected gradient descent with the two
scale invariances (mass, dilation) pinned: mass is held at 1 by the
constraint projection and the dilation direction is renormalized by exact
rescaling whenever it drifts.  The infimum is the best constant a*; the
stored profile is rescaled once at the end to the standard normalization
kinetic = 1, mass = M* = a*^{N/gamma'}, int m^{1+gamma'/N} = (N+gamma')/N.

Also provides the Pohozaev-type residual diagnostics, the translated moment
functionals entering all blow-up rate prefactors, and the exact-scaling-ray
resampler used by the test-pair energy probes.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator
from scipy.optimize import minimize_scalar

from .constraints import ConstraintOperator, FeasiblePair, project, scrub_tails
from .dual import grad_u_from_flux, potential_from_gradient
from .energy import HamiltonianParams, kinetic_cost
from .errors import ScaleOutOfRange, SolverDiverged
from .fields import (
    DensityField,
    FluxField,
    GridSpec,
    ScalarField,
    dump_flux,
    dump_scalar,
    face_average,
    face_spread,
    grad,
    load_flux,
    load_scalar,
    mass,
    pack_flux,
    unpack_flux,
)


@dataclass(frozen=True)
class ReferenceConfig:
    max_iter: int = 30000
    tol_grad: float = 1e-10
    stall_iters: int = 300
    init_width: float | None = None
    seed: int = 0


@dataclass(frozen=True)
class MomentResult:
    p: float
    nu_bar: float
    y_opt: tuple


@dataclass(frozen=True)
class ReferenceSolution:
    m0: DensityField
    w0: FluxField
    u0: ScalarField
    M_star: float
    a_star: float
    lambda0: float
    grid: GridSpec
    hp: HamiltonianParams

    def unit_profile(self) -> DensityField:
        """Mass-1 rescale m0 / M* on the same grid (no dilation)."""
        return DensityField(self.grid, self.m0.values / self.M_star)

    def nu_bar_unit(self, p: float) -> float:
        """Translated p-th moment infimum of the mass-1, kinetic-1 normalized
        profile, via the exact scaling transform
        nu_bar_unit(p) = nu_bar(m0, p) * M*^{-1 - p/gamma'}."""
        base = minimize_moment(self.m0, p).nu_bar
        return base * self.M_star ** (-1.0 - p / self.hp.gamma_conj)


# ---------------------------------------------------------------------------
# moment functionals
# ---------------------------------------------------------------------------

def moment_functional(m: ScalarField, p: float, y) -> float:
    """H_{m,p}(y) = int |x + y|^p m(x) dx."""
    if p <= 0:
        raise ValueError("moment exponent must be positive")
    grid = m.grid
    y = np.atleast_1d(np.asarray(y, float))
    coords = grid.cell_coords()
    sq = sum((c + yi) ** 2 for c, yi in zip(coords, y))
    return grid.cell_volume * float(np.sum(np.sqrt(sq) ** p * m.values))


def minimize_moment(m: ScalarField, p: float, tol: float = 1e-8) -> MomentResult:
    """Coordinate descent with golden-section line minimization over y."""
    grid = m.grid
    y = np.zeros(grid.dim)
    bound = grid.half_width
    for _ in range(200):
        moved = 0.0
        for ax in range(grid.dim):
            def f(t, ax=ax):
                yy = y.copy()
                yy[ax] = t
                return moment_functional(m, p, yy)
            res = minimize_scalar(f, bounds=(-bound, bound), method="bounded",
                                  options={"xatol": 0.1 * tol})
            moved = max(moved, abs(res.x - y[ax]))
            y[ax] = res.x
        if moved < tol:
            break
    return MomentResult(p=p, nu_bar=moment_functional(m, p, y),
                        y_opt=tuple(float(v) for v in y))


# ---------------------------------------------------------------------------
# exact-scaling resampler
# ---------------------------------------------------------------------------

def _interp_scalar(grid: GridSpec, values: np.ndarray, pts, kind: str) -> np.ndarray:
    """Interpolate cell-centered values at query coordinates (0 outside)."""
    centers = grid.axis_centers()
    if grid.dim == 1:
        x = np.asarray(pts[0])
        if kind == "cubic":
            # C^2 smoothness matters here: a less smooth interpolant makes
            # -Lap(m) of the resample noisy at the cell scale and the
            # subsequent constraint projection then damages the flux
            spl = CubicSpline(centers, values, extrapolate=False)
            out = spl(x)
            out[~np.isfinite(out)] = 0.0
        else:
            out = np.interp(x, centers, values, left=0.0, right=0.0)
        return out
    itp = RegularGridInterpolator((centers, centers), values, method=kind,
                                  bounds_error=False, fill_value=0.0)
    q = np.stack([np.broadcast_to(p, pts[0].shape if hasattr(pts[0], "shape") else ())
                  for p in np.broadcast_arrays(*pts)], axis=-1)
    return itp(q)


def _resample_pair(grid: GridSpec, m_vals, w_comps, t: float, x0, amp_m: float,
                   amp_w: float, kind: str = "linear"):
    """Sample (amp_m t^N m(t(x-x0)), amp_w t^{N+1} w(t(x-x0))) on the grid."""
    N = grid.dim
    x0 = np.zeros(N) if x0 is None else np.atleast_1d(np.asarray(x0, float))
    centers = grid.axis_centers()
    if N == 1:
        xq = [t * (centers - x0[0])]
        mv = amp_m * t ** N * _interp_scalar(grid, m_vals, xq, kind)
    else:
        xg, yg = np.meshgrid(centers, centers, indexing="ij")
        mv = amp_m * t ** N * _interp_scalar(
            grid, m_vals, (t * (xg - x0[0]), t * (yg - x0[1])), kind)
    comps = []
    for ax in range(N):
        faces = grid.axis_faces()
        # face-sample the source component by interpolating its own lattice
        src = w_comps[ax]
        src_centers = [centers] * N
        src_centers[ax] = faces
        if N == 1:
            itp_vals = np.interp(t * (faces - x0[0]), src_centers[0], src,
                                 left=0.0, right=0.0)
        else:
            itp = RegularGridInterpolator(tuple(src_centers), src, method="linear",
                                          bounds_error=False, fill_value=0.0)
            ax_coords = [centers] * N
            ax_coords[ax] = faces
            gg = np.meshgrid(*ax_coords, indexing="ij")
            q = np.stack([t * (g - x) for g, x in zip(gg, x0)], axis=-1)
            itp_vals = itp(q)
        comps.append(amp_w * t ** (N + 1) * itp_vals)
    return mv, comps


def bump_width_cells(m_vals: np.ndarray, grid: GridSpec) -> int:
    """Number of cells above half of the peak value (resolution proxy)."""
    peak = float(np.max(m_vals))
    count = int(np.sum(m_vals > 0.5 * peak))
    if grid.dim == 2:
        count = int(np.sqrt(count))
    return count


def rescale_reference(ref: ReferenceSolution, t: float, x0=None,
                      op: ConstraintOperator | None = None) -> FeasiblePair:
    """Mass-1 scaling-ray sample ((t^N/M*) m0(t(x-x0)), (t^{N+1}/M*) w0(...)),
    cubic-resampled, re-projected to machine feasibility, and scrubbed of
    tail debris."""
    if t <= 0:
        raise ValueError("scale t must be positive")
    grid = ref.grid
    op = op or ConstraintOperator(grid)
    mv, comps = _resample_pair(grid, ref.m0.values, [c for c in ref.w0.components],
                               t, x0, 1.0 / ref.M_star, 1.0 / ref.M_star,
                               kind="cubic")
    if bump_width_cells(mv, grid) < 8:
        raise ScaleOutOfRange(f"bump under-resolved at t={t}")
    boundary_val = max(float(np.max(np.abs(mv[0]))) if grid.dim == 1 else
                       float(np.max(np.abs(mv[0, :]))), 0.0)
    if boundary_val > 1e-8 * float(np.max(mv)):
        raise ScaleOutOfRange(f"bump spills over the box at t={t}")
    z = np.concatenate([np.clip(mv, 0.0, None).ravel()] +
                       [np.asarray(c, float).ravel() for c in comps])
    z = scrub_tails(op.project_vec(z), op)
    m2, w2 = op.unpack(z)
    return FeasiblePair(m=m2, w=w2, residual_norm=op.residual_norm(z))


# ---------------------------------------------------------------------------
# quotient minimization
# ---------------------------------------------------------------------------

def _quotient_state(z, op, hp):
    """Value and Euclidean gradient of the quotient at mass-1 z = (m, w)."""
    grid = op.grid
    nc = grid.num_cells
    N = grid.dim
    gc = hp.gamma_conj
    vol = grid.cell_volume
    mv = z[:nc].reshape(grid.shape)
    w = unpack_flux(grid, z[nc:])
    wbar = face_average(w)
    speed = np.sqrt(np.sum(wbar ** 2, axis=0))
    # floored perspective cost: cells with (numerically) no mass pay a steep
    # price for carrying flux, so the optimizer cannot hide kinetic cost in
    # clipped tail cells
    floor = 1e-10 * max(float(np.max(mv)), 1e-300)
    meff = np.maximum(mv, floor)
    live = mv > floor
    K_cells = speed ** gc / meff ** (gc - 1.0)
    K = hp.c_l * vol * float(np.sum(K_cells))
    mpos = np.clip(mv, 0.0, None)
    P = (N / (N + gc)) * vol * float(np.sum(mpos ** (1.0 + gc / N)))
    R = K / P

    gK_m = np.zeros(grid.shape)
    gK_m[live] = -(gc - 1.0) * hp.c_l * K_cells[live] / meff[live]
    gK_m *= vol
    ratio = np.zeros((N,) + grid.shape)
    scale = np.zeros(grid.shape)
    pos = speed > 0
    scale[pos] = gc * hp.c_l * speed[pos] ** (gc - 2.0) / meff[pos] ** (gc - 1.0)
    for ax in range(N):
        ratio[ax][pos] = scale[pos] * wbar[ax][pos]
    gK_w = pack_flux(FluxField(grid, face_spread(grid, ratio * vol)))
    gP_m = mpos ** (gc / N) * vol
    g = np.concatenate([((gK_m - R * gP_m) / P).ravel(), gK_w / P])
    return K, P, R, g


def _dilate_vec(z, op, t, kind="cubic"):
    """Exact-scaling dilation (t^N m(tx), t^{N+1} w(tx)) by resampling,
    followed by re-projection to the mass-1 feasible set."""
    grid = op.grid
    nc = grid.num_cells
    mv = z[:nc].reshape(grid.shape)
    w = unpack_flux(grid, z[nc:])
    mv2, comps = _resample_pair(grid, mv, list(w.components), t, None, 1.0, 1.0,
                                kind=kind)
    z2 = np.concatenate([np.clip(mv2, 0.0, None).ravel()] +
                        [np.asarray(c, float).ravel() for c in comps])
    return op.project_vec(z2)


def _taper_tail(z, op, tol_rel: float = 1e-5, width: float = 1.5):
    """Multiply the density by a quintic-smoothstep radial cutoff so that the
    tail reaches exact zero, then rebuild the flux as grad(m) plus the tapered
    solenoidal remainder.

    Repeated constraint projections leave a low-level positive debris plateau
    in the far tail (the dual corrections have global support and clipping at
    zero keeps their positive ripples).  Cutting the tail where the profile
    has already decayed below tol_rel removes the plateau without touching
    the bulk, and because w = grad(m) is exactly feasible the cleaned state
    needs no further projection in 1D (and only one mild projection in 2D for
    the tapered solenoidal part)."""
    grid = op.grid
    nc = grid.num_cells
    mv = np.clip(np.asarray(z[:nc], float).reshape(grid.shape), 0.0, None)
    w = unpack_flux(grid, z[nc:])
    peak = float(np.max(mv))
    r = grid.radius()
    above = mv > tol_rel * peak
    if not np.any(above):
        return z
    r_cut = float(np.max(r[above])) + grid.spacing
    r_end = min(r_cut + width, grid.half_width - grid.spacing)
    if r_end <= r_cut:               # no room to taper: leave the state alone
        return z
    t = np.clip((r - r_cut) / (r_end - r_cut), 0.0, 1.0)
    chi = 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t ** 2)
    m2 = mv * chi
    c = 1.0 / (grid.cell_volume * float(np.sum(m2)))
    m2 *= c
    m2f = ScalarField(grid, m2)
    sol = [c * chi_f * (np.asarray(wc, float) - gc_)
           for wc, gc_, chi_f in zip(
               w.components,
               grad(ScalarField(grid, mv)).components,
               face_spread(grid, np.stack([chi] * grid.dim)))]
    dead = m2 == 0.0
    for ax in range(grid.dim):
        deadface = np.zeros(grid.face_shape(ax), dtype=bool)
        interior = [slice(None)] * grid.dim
        interior[ax] = slice(1, -1)
        sl_l = [slice(None)] * grid.dim
        sl_l[ax] = slice(0, -1)
        sl_r = [slice(None)] * grid.dim
        sl_r[ax] = slice(1, None)
        deadface[tuple(interior)] = dead[tuple(sl_l)] | dead[tuple(sl_r)]
        sol[ax][deadface] = 0.0
    w2 = [g_ + s_ for g_, s_ in zip(grad(m2f).components, sol)]
    z2 = np.concatenate([m2.ravel()] + [np.asarray(c_, float).ravel() for c_ in w2])
    if grid.dim > 1:
        z2 = op.project_vec(z2)
        z2[:nc] = np.clip(z2[:nc], 0.0, None)
    return z2


def _gaussian_init(grid: GridSpec, width: float, op: ConstraintOperator):
    r2 = grid.radius() ** 2
    mv = np.exp(-r2 / (2.0 * width ** 2))
    mv /= grid.cell_volume * float(np.sum(mv))
    m = ScalarField(grid, mv)
    z = op.pack(m, grad(m))
    return op.project_vec(z)


def _mass_metric(z, op):
    """Diagonal metric approximating the inverse kinetic Hessian: the
    perspective cost has curvature ~ 1/m, so scaling search directions by the
    local mass equalizes step sizes between the bump and the tails."""
    grid = op.grid
    nc = grid.num_cells
    mv = np.clip(z[:nc].reshape(grid.shape), 0.0, None)
    floor = 1e-8 * max(float(np.max(mv)), 1e-300)
    pm = mv + floor
    # face weights: mean of the adjacent cell weights
    comps = []
    for ax in range(grid.dim):
        f = np.full(grid.face_shape(ax), floor)
        interior = [slice(None)] * grid.dim
        interior[ax] = slice(1, -1)
        sl_l = [slice(None)] * grid.dim
        sl_l[ax] = slice(0, -1)
        sl_r = [slice(None)] * grid.dim
        sl_r[ax] = slice(1, None)
        f[tuple(interior)] = 0.5 * (pm[tuple(sl_l)] + pm[tuple(sl_r)])
        comps.append(f.ravel())
    return np.concatenate([pm.ravel()] + comps)


def _minimize_quotient(hp: HamiltonianParams, grid: GridSpec, cfg: ReferenceConfig):
    op = ConstraintOperator(grid)
    width = cfg.init_width or min(1.0, grid.half_width / 6.0)
    z = _gaussian_init(grid, width, op)
    nc = grid.num_cells
    K, P, R, g = _quotient_state(z, op, hp)
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    def metric_direction(z, g):
        p = _mass_metric(z, op)
        apag = op.A_red @ (p * g)
        apa = (op.A_red @ sp.diags(p) @ op.A_red.T).tocsc()
        y = spla.splu(apa).solve(apag)
        return p * (g - op.A_red.T @ y)

    def renorm_factor(K, R):
        if K <= 0.0 or R <= 0.0:
            raise SolverDiverged("quotient state degenerated to zero cost")
        M_est = R ** (grid.dim / hp.gamma_conj)
        return (K * M_est) ** (-1.0 / hp.gamma_conj)

    state = {"z": z, "K": K, "P": P, "R": R, "g": g, "step": 1.0}

    def renorm(tol: float) -> float:
        t = renorm_factor(state["K"], state["R"])
        if abs(t - 1.0) > tol:
            z2 = _dilate_vec(state["z"], op, t)
            K2, P2, R2, g2 = _quotient_state(z2, op, hp)
            state.update(z=z2, K=K2, P=P2, R=R2, g=g2)
        return t

    def descend(max_iters: int, stall_budget: int) -> None:
        stall = 0
        best_R = state["R"]
        for _ in range(max_iters):
            d = metric_direction(state["z"], state["g"])
            slope = float(state["g"] @ d)
            gnorm = np.sqrt(max(slope, 0.0) / d.size)
            if gnorm < cfg.tol_grad or stall > stall_budget:
                return
            step = min(state["step"] * 2.0, 1e3)
            accepted = False
            for _ in range(50):
                z_try = state["z"] - step * d
                z_try[:nc] = np.clip(z_try[:nc], 0.0, None)
                z_try = op.project_vec(z_try)
                K2, P2, R2, g2 = _quotient_state(z_try, op, hp)
                if R2 < state["R"] - 1e-6 * step * slope:
                    state.update(z=z_try, K=K2, P=P2, R=R2, g=g2, step=step)
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                # a fully exhausted line search means the numerical floor
                stall += max(1, stall_budget // 4)
                state["step"] = 1.0
            else:
                # keep the scale pinned at every step: the box-truncated
                # quotient decreases along pure scale changes (toward both
                # under-resolved and boundary-filling profiles), which are
                # discretization artifacts, not descent progress
                renorm(0.02)
            if state["R"] < best_R * (1.0 - 1e-11):
                best_R = state["R"]
                stall = 0
            else:
                stall += 1

    # Phase 1: descent in blocks, re-pinning the scale K * M = 1 after each
    # block.  The discrete quotient loses its scale invariance to truncation
    # error, so an unpinned descent drifts toward under-resolved profiles;
    # progress is therefore judged between same-scale checkpoints.
    block = 100
    checkpoint = state["R"]
    for _ in range(max(1, cfg.max_iter // block)):
        descend(block, cfg.stall_iters)
        renorm(1e-3)
        if state["R"] > checkpoint * (1.0 - 1e-9):
            break
        checkpoint = state["R"]
    # Phase 2: iterate the renormalization to its fixed point (each resample
    # corrects the scale only up to interpolation error), so the returned
    # state is pinned to K * M = 1 without further descent, which would
    # reintroduce the scale drift.
    for _ in range(10):
        t = renorm(1e-9)
        if abs(t - 1.0) <= 1e-8:
            break
    if not np.all(np.isfinite(state["z"])):
        raise SolverDiverged("quotient descent produced non-finite state")
    z = scrub_tails(state["z"], op)
    K, P, R, _ = _quotient_state(z, op, hp)
    return z, op, (K, P, R)


def _centroid(mv, grid):
    tot = float(np.sum(mv))
    return [float(np.sum(mv * c)) / tot for c in grid.cell_coords()]


def _center_peak(z, op, subcell_tol: float = 1e-4):
    """Move the density centroid to the origin: integer-cell roll first, then
    a fractional cubic-resample shift until the residual offset is below
    subcell_tol (in units of the spacing)."""
    z = _roll_center(z, op)
    grid = op.grid
    nc = grid.num_cells
    for _ in range(4):
        cen = _centroid(np.clip(z[:nc].reshape(grid.shape), 0.0, None), grid)
        if max(abs(c) for c in cen) <= subcell_tol * grid.spacing:
            break
        mv = z[:nc].reshape(grid.shape)
        w = unpack_flux(grid, z[nc:])
        mv2, comps = _resample_pair(grid, mv, list(w.components), 1.0,
                                    [-c for c in cen], 1.0, 1.0, kind="cubic")
        z = op.project_vec(np.concatenate(
            [np.clip(mv2, 0.0, None).ravel()] +
            [np.asarray(c, float).ravel() for c in comps]))
    return z


def _roll_center(z, op):
    """Integer-cell roll so that the density centroid is nearest the origin."""
    grid = op.grid
    nc = grid.num_cells
    mv = z[:nc].reshape(grid.shape)
    coords = grid.cell_coords()
    tot = float(np.sum(mv))
    shifts = []
    for c in coords:
        cen = float(np.sum(mv * c)) / tot
        shifts.append(-int(np.round(cen / grid.spacing)))
    if all(s == 0 for s in shifts):
        return z
    w = unpack_flux(grid, z[nc:])
    mv2 = mv
    comps = [np.asarray(c, float).copy() for c in w.components]
    for ax, s in enumerate(shifts):
        if s == 0:
            continue
        mv2 = np.roll(mv2, s, axis=ax)
        edge = [slice(None)] * grid.dim
        edge[ax] = slice(0, s) if s > 0 else slice(s, None)
        mv2[tuple(edge)] = 0.0
        for k in range(grid.dim):
            comps[k] = np.roll(comps[k], s, axis=ax)
            e2 = [slice(None)] * grid.dim
            e2[ax] = slice(0, s) if s > 0 else slice(s, None)
            comps[k][tuple(e2)] = 0.0
    z2 = np.concatenate([np.clip(mv2, 0.0, None).ravel()] +
                        [c.ravel() for c in comps])
    return op.project_vec(z2)


def solve_reference(hp: HamiltonianParams, grid: GridSpec,
                    cfg: ReferenceConfig | None = None,
                    cache: bool = True) -> ReferenceSolution:
    """Compute (or load from cache) the reference solution on this grid."""
    if hp.gamma_conj <= grid.dim:
        raise ValueError("standing assumption gamma' > N violated")
    cfg = cfg or ReferenceConfig()
    if cache:
        hit = _cache_load(hp, grid)
        if hit is not None:
            return hit
    z, op, (K, P, R) = _minimize_quotient(hp, grid, cfg)
    z = _center_peak(z, op)
    z = _taper_tail(z, op)
    K, P, R, _ = _quotient_state(z, op, hp)
    N = grid.dim
    gc = hp.gamma_conj
    # a* is the best quotient found; rescale once to the standard
    # normalization (kinetic -> 1 after the amplitude step below)
    a_star = R
    M_star = a_star ** (N / gc)
    # The descent loop drives the dilation normalization K * M_star = 1 to
    # convergence, so only an exact amplitude scaling remains; resampling
    # here would reintroduce interpolation error into the certificates.
    t = (K * M_star) ** (-1.0 / gc)
    if abs(t - 1.0) > 1e-3:
        z = _dilate_vec(z, op, t)
        z = scrub_tails(z, op)
    nc = grid.num_cells
    mv = np.clip(z[:nc].reshape(grid.shape), 0.0, None) * M_star
    w0 = unpack_flux(grid, z[nc:] * M_star)
    m0 = DensityField(grid, mv)
    gu = grad_u_from_flux(m0, w0, hp)
    u0 = potential_from_gradient(grid, gu)
    I_nl = grid.cell_volume * float(np.sum(mv ** (1.0 + gc / N)))
    lambda0 = (kinetic_cost(m0, w0, hp) - I_nl) / M_star
    ref = ReferenceSolution(m0=m0, w0=w0, u0=u0, M_star=M_star, a_star=a_star,
                            lambda0=lambda0, grid=grid, hp=hp)
    if cache:
        _cache_store(ref)
    return ref


# ---------------------------------------------------------------------------
# Pohozaev residuals
# ---------------------------------------------------------------------------

def _kinetic_face_quadrature(m: ScalarField, w: FluxField,
                             hp: HamiltonianParams) -> float:
    """Kinetic cost integrated over faces instead of cells: the density is
    interpolated to faces and the tangential flux components reconstructed
    there.  Differs from the cell quadrature by O(h^2), which makes the
    identity checks below genuine consistency certificates rather than
    algebraic tautologies."""
    grid = m.grid
    gc = hp.gamma_conj
    mv = np.clip(np.asarray(m.values, float), 0.0, None)
    floor = 1e-13 * max(float(np.max(mv)), 1e-300)
    wbar = face_average(w)
    total = 0.0
    for ax in range(grid.dim):
        sl_l = [slice(None)] * grid.dim
        sl_l[ax] = slice(0, -1)
        sl_r = [slice(None)] * grid.dim
        sl_r[ax] = slice(1, None)
        m_f = 0.5 * (mv[tuple(sl_l)] + mv[tuple(sl_r)])   # interior faces
        interior = [slice(None)] * grid.dim
        interior[ax] = slice(1, -1)
        sq = np.asarray(w.components[ax], float)[tuple(interior)] ** 2
        for bx in range(grid.dim):
            if bx == ax:
                continue
            # tangential component at the ax-faces: cell average, then
            # interpolated across the ax-face like the density
            cb = wbar[bx]
            sq = sq + (0.5 * (cb[tuple(sl_l)] + cb[tuple(sl_r)])) ** 2
        live = m_f > floor
        total += float(np.sum(sq[live] ** (gc / 2.0) / m_f[live] ** (gc - 1.0)))
    return hp.c_l * grid.cell_volume * total / grid.dim


def pohozaev_residuals(m: ScalarField, w: FluxField, lam: float, nu: float,
                       hp: HamiltonianParams):
    """Relative residuals of the three integral identities satisfied by
    solutions of the potential-free system with coupling -m^nu:

      r1:  lam int m  =  -((nu+1)gamma' - N nu)/((nu+1)gamma') int m^{nu+1}
      r2:  kinetic    =  (N nu/((nu+1)gamma')) int m^{nu+1}
      r3:  kinetic    =  (gamma-1) C_H int m |grad u|^gamma   (u from w)

    The kinetic term in r2 is evaluated with the face quadrature and r3 with
    the value-function route, so each identity compares independently
    discretized quantities (r1 is meaningful when lam comes from an
    independent solve of the value equation)."""
    grid = m.grid
    N = grid.dim
    gc = hp.gamma_conj
    vol = grid.cell_volume
    mv = np.clip(np.asarray(m.values, float), 0.0, None)
    I_nl = vol * float(np.sum(mv ** (nu + 1.0)))
    mass_val = vol * float(np.sum(mv))
    K = kinetic_cost(m, w, hp)
    K_face = _kinetic_face_quadrature(m, w, hp)

    c1 = ((nu + 1.0) * gc - N * nu) / ((nu + 1.0) * gc)
    lhs1, rhs1 = lam * mass_val, -c1 * I_nl
    r1 = abs(lhs1 - rhs1) / max(abs(lhs1), abs(rhs1), 1e-300)

    c2 = (N * nu) / ((nu + 1.0) * gc)
    r2 = abs(K_face - c2 * I_nl) / max(K_face, abs(c2 * I_nl), 1e-300)

    gu = grad_u_from_flux(m, w, hp)
    gu_cells = face_average(gu)
    gmag = np.sqrt(np.sum(gu_cells ** 2, axis=0))
    ctrl = (hp.gamma - 1.0) * hp.c_h * vol * float(np.sum(mv * gmag ** hp.gamma))
    r3 = abs(K - ctrl) / max(K, ctrl, 1e-300)
    return r1, r2, r3


# ---------------------------------------------------------------------------
# disk cache
# ---------------------------------------------------------------------------

def _cache_dir() -> Path:
    root = os.environ.get("MFG_CACHE_DIR")
    if root:
        return Path(root)
    return Path.home() / ".cache" / "mfg_ground"


def _cache_key(hp: HamiltonianParams, grid: GridSpec) -> str:
    tag = (f"g={hp.gamma!r};ch={hp.c_h!r};N={grid.dim};"
           f"n={grid.cells_per_axis};L={grid.half_width!r}")
    return hashlib.sha256(tag.encode()).hexdigest()[:16]


def _cache_store(ref: ReferenceSolution) -> None:
    d = _cache_dir() / _cache_key(ref.hp, ref.grid)
    d.mkdir(parents=True, exist_ok=True)
    dump_scalar(ref.m0, d / "m0.field")
    dump_flux(ref.w0, d / "w0.field")
    dump_scalar(ref.u0, d / "u0.field")
    with open(d / "meta.txt", "w") as f:
        f.write(f"gamma={ref.hp.gamma!r}\n")
        f.write(f"c_h={ref.hp.c_h!r}\n")
        f.write(f"dim={ref.grid.dim}\n")
        f.write(f"n={ref.grid.cells_per_axis}\n")
        f.write(f"L={ref.grid.half_width!r}\n")
        f.write(f"M_star={ref.M_star!r}\n")
        f.write(f"a_star={ref.a_star!r}\n")
        f.write(f"lambda0={ref.lambda0!r}\n")


def _cache_load(hp: HamiltonianParams, grid: GridSpec) -> ReferenceSolution | None:
    d = _cache_dir() / _cache_key(hp, grid)
    meta = d / "meta.txt"
    if not meta.exists():
        return None
    kv = {}
    with open(meta) as f:
        for line in f:
            if "=" in line:
                k, v = line.strip().split("=", 1)
                kv[k] = v
    try:
        m0 = load_scalar(d / "m0.field")
        w0 = load_flux(d / "w0.field")
        u0 = load_scalar(d / "u0.field")
    except FileNotFoundError:
        return None
    return ReferenceSolution(
        m0=DensityField(grid, m0.values), w0=w0, u0=u0,
        M_star=float(kv["M_star"]), a_star=float(kv["a_star"]),
        lambda0=float(kv["lambda0"]), grid=grid, hp=hp)
