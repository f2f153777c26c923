"""Parameter sweeps confronting computed minimizers with asymptotic theory.

Provides the flattest-common-well selection rule that determines where
near-critical attractive minimizers concentrate, closed-form blow-up scale
predictions (attractive and both repulsive readings), sweep drivers that
solve chains of near-critical problems and record concentration diagnostics,
log-log rate fits, the (alpha, beta) existence phase diagram, and the
energy upper-bound check near attractive criticality.

Sweep points are independent jobs (each a seeded continuation solve), so
they can be executed by a parallel process map; aggregation is always
ordered by the schedule, not by completion order.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .constraints import ConstraintOperator, scrub_tails
from .dual import grad_u_from_flux, potential_from_gradient
from .energy import (
    CouplingParams,
    HamiltonianParams,
    MFGParams,
    PotentialSpec,
    overlap as overlap_integral,
)
from .errors import InsufficientSpan, MFGError, NoCommonZero, ScaleOutOfRange
from .fields import (
    DensityField,
    FluxField,
    ScalarField,
    zero_boundary_faces,
)
from .reference import (
    ReferenceSolution,
    _interp_scalar,
    _resample_pair,
    rescale_reference,
)
from .solve import (
    ExistenceVerdict,
    MinimizerResult,
    SolverConfig,
    _energy_state,
    _state_size,
    classify_existence,
    continuation_solve,
    descend,
    potential_values,
)

# ---------------------------------------------------------------------------
# flattest-minimum selection
# ---------------------------------------------------------------------------

_CENTER_TOL = 1e-12


@dataclass(frozen=True)
class ZeroRecord:
    """One common well center with its per-population local behavior.

    Near a shared center x_j each potential behaves like a_ij |x - x_j|^{p_ij};
    p is the smaller of the two exponents (the sum V1+V2 vanishes at order p)
    and mu is the coefficient of that leading term:
    a_1j when p_1j < p_2j, a_1j + a_2j at a tie, a_2j when p_1j > p_2j.
    """

    x: tuple
    p1: float
    p2: float
    a1: float
    a2: float
    p: float
    mu: float


@dataclass(frozen=True)
class FlattestSelection:
    """Where near-critical attractive minimizers concentrate.

    Among the common zeros, p0 is the largest per-zero order p_j (the sum
    potential is flattest there), Z_bar collects the zeros achieving p0, mu
    is the smallest leading coefficient over Z_bar, and Z0 the zeros
    achieving it: concentration selects the flattest, then shallowest, well.
    """

    records: tuple
    p0: float
    Z_bar: tuple
    mu: float
    Z0: tuple


def _local_coefficient(V: PotentialSpec, center: tuple) -> tuple:
    """(exponent, coefficient) of V near one of its own well centers:
    for a product of wells the other factors are smooth and nonzero there,
    so V(x) ~ a_j * prod_{k != j} a_k |x_j - x_k|^{p_k} * |x - x_j|^{p_j}."""
    c = np.asarray(center, float)
    target = None
    coeff = 1.0
    for w in V.wells:
        d = float(np.linalg.norm(np.asarray(w.center, float) - c))
        if d <= _CENTER_TOL and target is None:
            target = w
        else:
            coeff *= w.coefficient * d ** w.exponent
    if target is None:
        raise ValueError("center is not a well of this potential")
    return target.exponent, target.coefficient * coeff


def select_flattest(V1: PotentialSpec, V2: PotentialSpec) -> FlattestSelection:
    """Evaluate the concentration-selection rule symbolically from the well
    lists of the two potentials (no grid sampling involved)."""
    common = []
    for w1 in V1.wells:
        for w2 in V2.wells:
            if np.linalg.norm(np.asarray(w1.center) - np.asarray(w2.center)) \
                    <= _CENTER_TOL:
                common.append(w1.center)
    if not common:
        raise NoCommonZero("the two potentials share no well center")
    records = []
    for x in common:
        p1, a1 = _local_coefficient(V1, x)
        p2, a2 = _local_coefficient(V2, x)
        if p1 < p2:
            mu = a1
        elif p1 > p2:
            mu = a2
        else:
            mu = a1 + a2
        records.append(ZeroRecord(x=x, p1=p1, p2=p2, a1=a1, a2=a2,
                                  p=min(p1, p2), mu=mu))
    p0 = max(r.p for r in records)
    z_bar = tuple(r for r in records if r.p == p0)
    mu = min(r.mu for r in z_bar)
    z0 = tuple(r for r in z_bar if r.mu == mu)
    return FlattestSelection(records=tuple(records), p0=p0,
                             Z_bar=tuple(r.x for r in z_bar), mu=mu,
                             Z0=tuple(r.x for r in z0))


# ---------------------------------------------------------------------------
# blow-up scale predictions
# ---------------------------------------------------------------------------

def predicted_eps_attractive(delta: float, ref: ReferenceSolution,
                             selection: FlattestSelection) -> float:
    """Predicted concentration scale for the symmetric attractive schedule at
    distance delta from criticality:
    eps = (2 gamma' / (p0 mu nu_bar_{p0} a*))^{1/(gamma'+p0)} delta^{1/(gamma'+p0)},
    with nu_bar the translated p0-th moment infimum of the mass-1 reference
    profile."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    gc = ref.hp.gamma_conj
    p0 = selection.p0
    nu = ref.nu_bar_unit(p0)
    base = 2.0 * gc / (p0 * selection.mu * nu * ref.a_star)
    return (base * delta) ** (1.0 / (gc + p0))


def predicted_eps_repulsive(alpha_i: float, ref: ReferenceSolution,
                            well_i: tuple) -> tuple:
    """Both candidate predictions for the per-population repulsive blow-up
    scale at self-coupling alpha_i < a* with single-well potential
    b_i |x - x_i|^{q_i}.  The two asymptotic statements in the source theory
    differ by a gamma' power and the sweep adjudicates empirically, so BOTH
    are returned:

        eps_lemma   = (gamma' (a* - alpha_i) / (a* b_i nu_bar_{q_i} q_i))^{1/(gamma'+q_i)}
        eps_theorem = eps_lemma^{1/gamma'}
    """
    if alpha_i >= ref.a_star:
        raise ValueError("alpha_i must lie below a*")
    b_i, q_i = float(well_i[0]), float(well_i[1])
    gc = ref.hp.gamma_conj
    nu = ref.nu_bar_unit(q_i)
    base = gc * (ref.a_star - alpha_i) / (ref.a_star * b_i * nu * q_i)
    eps_lemma = base ** (1.0 / (gc + q_i))
    return eps_lemma, eps_lemma ** (1.0 / gc)


# ---------------------------------------------------------------------------
# sweep records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlowupRecord:
    """One sweep point.  All diagnostic entries are computed from `result`
    by `make_blowup_record`; nothing is free-floating, so a record can be
    regenerated from (params, cfg) alone."""

    params: MFGParams
    cfg: SolverConfig
    delta: object               # float (attractive) or (d1, d2) (repulsive)
    eps_measured: tuple         # per population
    eps_predicted: object       # float, or per-population (lemma, theorem)
    x_conc: tuple
    overlap: float
    lambda_eps_gamma: tuple     # lambda_i * eps_i^{gamma'}
    sq_diff: float
    kinetic_ratio: float
    profile_l1: tuple           # L1 distance of rescaled m_i to the reference
    profile_linf: tuple         # sup distance, relative to the reference peak
    resolved: bool              # eps >= 8h (bump resolved on this grid)
    converged: bool
    energy: float
    result: MinimizerResult | None = None
    error: str | None = None

    def scalar_delta(self) -> float:
        return float(np.min(self.delta)) if np.ndim(self.delta) else float(self.delta)

    def scalar_eps(self) -> float:
        return float(np.mean(self.eps_measured))


def rescale_blowup(result: MinimizerResult, i: int, ref: ReferenceSolution):
    """Blow up population i of a minimizer to the reference scale:
    m_resc(y) = s^N m_i(s y + x_c), w_resc(y) = s^{N+1} w_i(s y + x_c),
    u_resc(y) = s^{gamma'-2} u_i(s y + x_c), with s = eps_i * M*^{-1/gamma'}
    so that m_resc carries unit mass and the same kinetic cost as the mass-1
    reference profile.  Returns (m_resc, w_resc, u_resc); u_resc is None when
    the value function cannot be reconstructed from the flux."""
    grid = ref.grid
    pair = result.state[i]
    eps = result.eps[i]
    gc = ref.hp.gamma_conj
    s = eps * ref.M_star ** (-1.0 / gc)
    x_c = np.asarray(result.x_conc[i], float)
    x0 = tuple(-c / s for c in x_c)
    mv, comps = _resample_pair(grid, pair.m.values,
                               [c for c in pair.w.components],
                               s, x0, 1.0, 1.0, kind="cubic")
    m_resc = ScalarField(grid, np.clip(mv, 0.0, None))
    # blow-up sampling can land nonzero interior flux on the outer faces of
    # the target grid; those faces are fixed zero degrees of freedom
    w_resc = FluxField(grid, zero_boundary_faces(
        grid, [np.asarray(c, float) for c in comps]))
    u_resc = None
    try:
        gu = grad_u_from_flux(pair.m, pair.w, ref.hp)
        u = potential_from_gradient(grid, gu)
        pts = [s * c + xc for c, xc in
               zip(np.meshgrid(*[grid.axis_centers()] * grid.dim,
                               indexing="ij"), x_c)] \
            if grid.dim > 1 else [s * grid.axis_centers() + x_c[0]]
        uv = s ** (gc - 2.0) * _interp_scalar(grid, u.values, pts, "cubic")
        u_resc = ScalarField(grid, uv.reshape(grid.shape))
    except MFGError:
        pass
    return m_resc, w_resc, u_resc


def _profile_distances(result: MinimizerResult, ref: ReferenceSolution) -> tuple:
    """Per-population (L1, relative sup) distances of the blown-up density
    to the mass-1 reference profile."""
    target = ref.m0.values / ref.M_star
    peak = float(np.max(target))
    l1, linf = [], []
    for i in (0, 1):
        m_resc, _, _ = rescale_blowup(result, i, ref)
        diff = m_resc.values - target
        l1.append(ref.grid.cell_volume * float(np.sum(np.abs(diff))))
        linf.append(float(np.max(np.abs(diff))) / peak)
    return tuple(l1), tuple(linf)


def make_blowup_record(params: MFGParams, cfg: SolverConfig,
                       result: MinimizerResult, ref: ReferenceSolution,
                       delta, eps_predicted,
                       keep_result: bool = True) -> BlowupRecord:
    """Assemble the full diagnostic record from a finished solve."""
    bd = result.breakdown
    gc = params.hp.gamma_conj
    m1, m2 = result.state[0].m, result.state[1].m
    lam_eps = tuple(result.lam[i] * result.eps[i] ** gc for i in (0, 1))
    l1, linf = _profile_distances(result, ref)
    h = ref.grid.spacing
    return BlowupRecord(
        params=params, cfg=cfg, delta=delta,
        eps_measured=tuple(result.eps),
        eps_predicted=eps_predicted,
        x_conc=tuple(result.x_conc),
        overlap=overlap_integral(m1, m2, params.hp),
        lambda_eps_gamma=lam_eps,
        sq_diff=bd.sq_diff,
        kinetic_ratio=bd.kinetic_1 / bd.kinetic_2,
        profile_l1=l1, profile_linf=linf,
        resolved=bool(min(result.eps) >= 8.0 * h),
        converged=result.converged,
        energy=bd.total,
        result=result if keep_result else None,
    )


def _failed_record(params: MFGParams, cfg: SolverConfig, delta,
                   eps_predicted, exc: Exception) -> BlowupRecord:
    return BlowupRecord(
        params=params, cfg=cfg, delta=delta, eps_measured=(math.nan, math.nan),
        eps_predicted=eps_predicted, x_conc=(), overlap=math.nan,
        lambda_eps_gamma=(math.nan, math.nan), sq_diff=math.nan,
        kinetic_ratio=math.nan, profile_l1=(math.nan, math.nan),
        profile_linf=(math.nan, math.nan), resolved=False, converged=False,
        energy=math.nan, result=None, error=f"{type(exc).__name__}: {exc}",
    )


# ---------------------------------------------------------------------------
# schedules and sweep drivers
# ---------------------------------------------------------------------------

def attractive_delta_schedule(ref: ReferenceSolution,
                              selection: FlattestSelection,
                              start_frac: float = 0.3, ratio: float = 0.5,
                              min_eps_cells: float = 8.0,
                              mesh_margin: float = 40.0) -> list:
    """Geometric delta ladder from start_frac * a* down to the smallest delta
    the grid can trust; equal log spacing keeps rate fits honest.

    Two cutoffs.  The predicted concentration scale must stay resolvable
    (eps >= min_eps_cells * h).  Separately, the discrete sharp constant in
    the mass-critical inequality undershoots its continuum value by
    O((h/eps)^2), so once delta / a* falls below a multiple of (h/eps)^2 the
    discrete energy loses coercivity and the minimizer collapses to a
    one-cell spike.  Measured bias of the concentration scale vs the margin
    ratio delta / (a* (h/eps)^2): full collapse below ~3, -27% at ~6,
    -2.6% at ~17, -2% at ~48; mesh_margin=40 keeps the bias inside the
    rate-fit noise floor."""
    h = ref.grid.spacing
    out = []
    delta = start_frac * ref.a_star
    while True:
        eps = predicted_eps_attractive(delta, ref, selection)
        if eps < min_eps_cells * h:
            break
        if delta < mesh_margin * ref.a_star * (h / eps) ** 2:
            break
        out.append(delta)
        delta *= ratio
    return out


def _continuation_cfg(cfg: SolverConfig, beta: float, a_star: float,
                      alphas_target: tuple, start_frac: float = 0.3) -> SolverConfig:
    """Per-point warm-start schedule: approach the target couplings through
    a geometric ladder of distances to criticality, starting from the easy
    convex-dominated regime.  Each sweep point rebuilds its own ladder, so
    points stay independent jobs."""
    a1, a2 = alphas_target
    # only positive (attractive) beta shifts the critical self-coupling
    crit = a_star - max(beta, 0.0)
    gap = max(crit - a1, crit - a2, 1e-12)
    way = []
    d = start_frac * a_star
    while d > gap * 1.0000001:
        a_way = max(crit - d, 0.0)
        way.append(CouplingParams(min(a_way, a1), min(a_way, a2), beta))
        d *= 0.5
    way.append(CouplingParams(a1, a2, beta))
    return replace(cfg, continuation=tuple(way))


def _warm_start(ref: ReferenceSolution, op: ConstraintOperator,
                eps_preds: tuple, centers: tuple,
                widen: float = 1.3) -> np.ndarray:
    """Packed two-population init: each population is the reference bump
    pre-dilated near its predicted concentration scale (slightly widened so
    descent approaches the minimizer from the spread side) and centered at
    its target well.  Deterministic; no random perturbation."""
    gc = ref.hp.gamma_conj
    eps_hat = ref.M_star ** (1.0 / gc)
    zs = []
    for i in (0, 1):
        t = max(eps_hat / (widen * eps_preds[i]), 1.0)
        pair = None
        while pair is None:
            try:
                pair = rescale_reference(ref, t, x0=centers[i], op=op)
            except ScaleOutOfRange:
                if t <= 1.0:
                    raise
                t = max(t / 1.3, 1.0)
        zs.append(op.pack(pair.m, pair.w))
    return np.concatenate(zs)


def _dilated_candidate(Z: np.ndarray, op: ConstraintOperator,
                       centers: tuple, factors: tuple) -> np.ndarray:
    """Packed state with population i resampled at dilation factor
    factors[i] about its concentration point centers[i]."""
    grid = op.grid
    nz = _state_size(grid)
    zs = []
    for i in (0, 1):
        zi = Z[i * nz:(i + 1) * nz]
        t = factors[i]
        if t == 1.0:
            zs.append(zi)
            continue
        m, w = op.unpack(zi)
        c = np.atleast_1d(np.asarray(centers[i], float))
        x0 = c * (t - 1.0) / t
        mv, comps = _resample_pair(grid, m.values, list(w.components), t, x0,
                                   1.0, 1.0, kind="cubic")
        z = np.concatenate([np.clip(mv, 0.0, None).ravel()]
                           + [np.asarray(cc, float).ravel() for cc in comps])
        zs.append(scrub_tails(op.project_vec(z), op))
    return np.concatenate(zs)


def _dilation_polish(params: MFGParams, cfg: SolverConfig,
                     ref: ReferenceSolution, op: ConstraintOperator,
                     result: MinimizerResult, rounds: int = 6,
                     factors: tuple = (0.90, 0.95, 1.05, 1.10)
                     ) -> MinimizerResult:
    """Escape repair-granularity attractors along the stiff dilation mode.

    Projected descent can stall in states whose energy is still reducible by
    a coordinated rescaling of a whole population (the valley direction the
    cell-wise repair keeps breaking up).  Trial dilations of each population
    about its concentration point, followed by a fresh descent from any
    improving trial, tunnel along that valley; descent monotonicity keeps
    every accepted move an energy improvement."""
    grid = op.grid
    pots = (potential_values(params.v1, grid),
            potential_values(params.v2, grid))
    for _ in range(rounds):
        Z = np.concatenate([op.pack(p.m, p.w) for p in result.state])
        E_best, _ = _energy_state(Z, op, params, pots)
        cand_best = None
        for t in factors:
            for pair in ((t, t), (t, 1.0), (1.0, t)):
                try:
                    Zc = _dilated_candidate(Z, op, result.x_conc, pair)
                except MFGError:
                    continue
                Ec, _ = _energy_state(Zc, op, params, pots)
                if Ec < E_best - 1e-12:
                    E_best, cand_best = Ec, Zc
        if cand_best is None:
            return result
        result = descend(params, cand_best, cfg, ref=ref, op=op)
    return result


def _solve_point(params: MFGParams, cfg_pt: SolverConfig,
                 ref: ReferenceSolution, eps_preds: tuple,
                 centers: tuple) -> MinimizerResult:
    """Near-critical solve: descend from the predicted-scale warm start,
    fall back to the full continuation ladder if that stalls, then polish
    along the dilation valley."""
    op = ConstraintOperator(ref.grid)
    result = None
    try:
        Z0 = _warm_start(ref, op, eps_preds, centers)
        result = descend(params, Z0, cfg_pt, ref=ref, op=op)
    except MFGError:
        result = None
    if result is None or not result.converged:
        result = continuation_solve(params, cfg_pt, ref)
    return _dilation_polish(params, cfg_pt, ref, op, result)


def _attractive_job(args):
    delta, hp, beta, v1, v2, ref, cfg, selection, keep = args
    alpha = ref.a_star - beta - delta
    params = MFGParams(hp=hp,
                       couplings=CouplingParams(alpha, alpha, beta),
                       v1=v1, v2=v2)
    cfg_pt = _continuation_cfg(cfg, beta, ref.a_star, (alpha, alpha))
    eps_pred = predicted_eps_attractive(delta, ref, selection)
    center = selection.Z0[0]
    try:
        result = _solve_point(params, cfg_pt, ref, (eps_pred, eps_pred),
                              (center, center))
        return make_blowup_record(params, cfg_pt, result, ref, delta,
                                  eps_pred, keep_result=keep)
    except MFGError as exc:
        return _failed_record(params, cfg_pt, delta, eps_pred, exc)


def _parallel_map(fn, jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def attractive_sweep(hp: HamiltonianParams, beta: float,
                     v1: PotentialSpec, v2: PotentialSpec,
                     delta_list, ref: ReferenceSolution, cfg: SolverConfig,
                     threads: int = 1, keep_results: bool = True) -> list:
    """Symmetric near-critical schedule alpha_1 = alpha_2 = a* - beta - delta
    at fixed attractive beta > 0.  Each delta is an independent seeded
    continuation solve; failures are recorded and the sweep continues.
    Records are returned ordered by decreasing delta."""
    if beta <= 0:
        raise ValueError("attractive sweep requires beta > 0")
    # rate measurement needs a deeper relaxation than existence checks: a
    # residual energy slope of 1e-7 still shifts the measured scale by ~10%
    cfg = replace(cfg, tol_energy=min(cfg.tol_energy, 1e-9))
    selection = select_flattest(v1, v2)
    deltas = sorted(float(d) for d in delta_list)[::-1]
    jobs = [(d, hp, beta, v1, v2, ref, cfg, selection, keep_results)
            for d in deltas]
    return _parallel_map(_attractive_job, jobs, threads)


def _repulsive_job(args):
    (d1, d2, hp, beta, v1, v2, ref, cfg, keep) = args
    a1, a2 = ref.a_star - d1, ref.a_star - d2
    params = MFGParams(hp=hp, couplings=CouplingParams(a1, a2, beta),
                       v1=v1, v2=v2)
    cfg_pt = _continuation_cfg(cfg, beta, ref.a_star, (a1, a2))
    preds = tuple(
        predicted_eps_repulsive(a, ref,
                                (v.wells[0].coefficient, v.wells[0].exponent))
        for a, v in ((a1, v1), (a2, v2)))
    centers = (v1.wells[0].center, v2.wells[0].center)
    try:
        result = _solve_point(params, cfg_pt, ref,
                              (preds[0][0], preds[1][0]), centers)
        return make_blowup_record(params, cfg_pt, result, ref, (d1, d2),
                                  preds, keep_result=keep)
    except MFGError as exc:
        return _failed_record(params, cfg_pt, (d1, d2), preds, exc)


def repulsive_delta_pairs(delta_list, ref: ReferenceSolution,
                          v1: PotentialSpec, v2: PotentialSpec,
                          s_exponent: float = 1.0) -> list:
    """Per-population (delta_1, delta_2) pairs implementing the comparability
    schedule eps_1 = eps_2^s: delta_2 runs over delta_list and delta_1 is
    chosen so the first-reading predictions satisfy the relation exactly.
    s = 1 (the default) gives matched scales; s = 1/2 exercises the widest
    admissible mismatch."""
    gc = ref.hp.gamma_conj
    b1, q1 = v1.wells[0].coefficient, v1.wells[0].exponent
    pairs = []
    for d2 in delta_list:
        e2, _ = predicted_eps_repulsive(ref.a_star - d2, ref,
                                        (v2.wells[0].coefficient,
                                         v2.wells[0].exponent))
        e1_target = e2 ** s_exponent
        d1 = ref.a_star * b1 * ref.nu_bar_unit(q1) * q1 / gc \
            * e1_target ** (gc + q1)
        pairs.append((float(d1), float(d2)))
    return pairs


def repulsive_sweep(hp: HamiltonianParams, beta: float,
                    v1: PotentialSpec, v2: PotentialSpec,
                    delta_list, ref: ReferenceSolution, cfg: SolverConfig,
                    s_exponent: float = 1.0, threads: int = 1,
                    keep_results: bool = True) -> list:
    """Repulsive near-critical schedule alpha_i = a* - delta_i at fixed
    beta < 0 with single-well potentials at distinct centers.  The delta
    pairs follow the comparability schedule (see repulsive_delta_pairs)."""
    if beta >= 0:
        raise ValueError("repulsive sweep requires beta < 0")
    cfg = replace(cfg, tol_energy=min(cfg.tol_energy, 1e-9))
    for v in (v1, v2):
        if v is None or len(v.wells) != 1:
            raise ValueError("repulsive sweep requires single-well potentials")
    if np.allclose(v1.wells[0].center, v2.wells[0].center):
        raise ValueError("repulsive sweep requires distinct well centers")
    pairs = sorted(repulsive_delta_pairs(delta_list, ref, v1, v2, s_exponent),
                   key=lambda p: -p[1])
    jobs = [(d1, d2, hp, beta, v1, v2, ref, cfg, keep_results)
            for d1, d2 in pairs]
    return _parallel_map(_repulsive_job, jobs, threads)


def schedule_validity(eps1_tilde: float, eps2_tilde: float, q2: float,
                      delta_hat: float, tol: float = 1e-3) -> bool:
    """Relaxed comparability predicate: exp(-eps1^{-delta_hat}) / eps2^{q2}
    must be negligible at the sweep's smallest scales."""
    if eps1_tilde <= 0 or eps2_tilde <= 0:
        raise ValueError("scales must be positive")
    val = math.exp(-eps1_tilde ** (-delta_hat)) / eps2_tilde ** q2
    return val < tol


# ---------------------------------------------------------------------------
# rate fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    prefactor: float
    r2: float
    slope_band: float       # ~95% half-width on the slope
    n_points: int
    decades: float


def _extract(rec, key):
    if callable(key):
        val = key(rec)
    elif isinstance(key, int):
        val = rec[key]
    else:
        val = getattr(rec, key)
        if callable(val):
            val = val()
    arr = np.atleast_1d(np.asarray(val, float))
    return float(np.mean(arr))


def fit_rate(records, x="scalar_delta", y="scalar_eps") -> RateFit:
    """Power-law fit y = C x^p by least squares on log-log coordinates.

    `x` and `y` select values from each record: an attribute name (methods
    are called), an integer index, or a callable.  Requires at least 4
    finite positive points spanning at least 1.5 decades in x.  Records
    flagged unconverged or unresolved are skipped: they measure the grid,
    not the rate."""
    xs, ys = [], []
    for rec in records:
        if getattr(rec, "converged", True) is False:
            continue
        if getattr(rec, "resolved", True) is False:
            continue
        xv, yv = _extract(rec, x), _extract(rec, y)
        if np.isfinite(xv) and np.isfinite(yv) and xv > 0 and yv > 0:
            xs.append(xv)
            ys.append(yv)
    xs, ys = np.asarray(xs), np.asarray(ys)
    if len(xs) < 4:
        raise InsufficientSpan(f"need >= 4 usable points, got {len(xs)}")
    decades = float(np.log10(xs.max() / xs.min()))
    if decades < 1.5:
        raise InsufficientSpan(f"x spans {decades:.2f} decades, need >= 1.5")
    lx, ly = np.log(xs), np.log(ys)
    X = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
    fit = X @ coef
    ss_res = float(np.sum((ly - fit) ** 2))
    ss_tot = float(np.sum((ly - np.mean(ly)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = max(len(xs) - 2, 1)
    sxx = float(np.sum((lx - np.mean(lx)) ** 2))
    se = math.sqrt(ss_res / dof / sxx) if sxx > 0 else math.inf
    return RateFit(slope=float(coef[0]), prefactor=float(math.exp(coef[1])),
                   r2=r2, slope_band=2.0 * se, n_points=len(xs),
                   decades=decades)


# ---------------------------------------------------------------------------
# energy upper bound near attractive criticality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundCheck:
    checked: bool       # False when delta is outside the asymptotic regime
    passed: bool
    energy: float
    bound: float | None


def energy_upper_bound_check(energy: float, delta: float,
                             selection: FlattestSelection,
                             ref: ReferenceSolution, slack: float = 0.2,
                             regime_frac: float = 0.1) -> BoundCheck:
    """Near attractive criticality the minimal energy obeys
    0 <= e <= ((gamma'+p0)/gamma') (mu nu_bar_{p0})^{gamma'/(gamma'+p0)}
              (2 gamma'/(a* p0))^{p0/(gamma'+p0)} delta^{p0/(gamma'+p0)}
              (1 + slack),
    the value of the model energy (2 delta/a*) eps^{-gamma'}
    + mu nu_bar_{p0} eps^{p0} at its minimizing scale.  The upper bound is
    only asserted inside the asymptotic regime (delta <= regime_frac * a*);
    nonnegativity is asserted always."""
    gc = ref.hp.gamma_conj
    p0 = selection.p0
    nu = ref.nu_bar_unit(p0)
    bound = ((gc + p0) / gc) \
        * (selection.mu * nu) ** (gc / (gc + p0)) \
        * (2.0 * gc / (ref.a_star * p0)) ** (p0 / (gc + p0)) \
        * delta ** (p0 / (gc + p0))
    checked = delta <= regime_frac * ref.a_star
    passed = energy >= -1e-12 and (not checked or energy <= bound * (1.0 + slack))
    return BoundCheck(checked=checked, passed=passed, energy=energy,
                      bound=bound if checked else None)


# ---------------------------------------------------------------------------
# phase diagram
# ---------------------------------------------------------------------------

def _phase_solver(v1: PotentialSpec, v2: PotentialSpec):
    """Warm-started solver for phase-diagram points.  The continuation
    ladder's perturbed cold starts can wander into mesh-scale collapse near
    the critical curves; starting at the predicted concentration scale
    avoids that region entirely.  Falls back to the ladder when the
    potentials have no common zero (no scale prediction available)."""
    try:
        selection = select_flattest(v1, v2)
    except NoCommonZero:
        return None

    def solver(params, cfg, ref):
        cp = params.couplings
        centers = []
        preds = []
        for i, (a_i, v) in enumerate(((cp.alpha1, v1), (cp.alpha2, v2))):
            delta = max(ref.a_star - a_i - max(cp.beta, 0.0),
                        1e-3 * ref.a_star)
            preds.append(predicted_eps_attractive(delta, ref, selection))
            centers.append(selection.Z0[0] if cp.beta > 0
                           else v.wells[0].center)
        return _solve_point(params, cfg, ref, tuple(preds), tuple(centers))

    return solver


def _phase_job(args):
    alpha, beta, hp, v1, v2, ref, ref_fine, cfg = args
    params = MFGParams(hp=hp, couplings=CouplingParams(alpha, alpha, beta),
                       v1=v1, v2=v2)
    cfg_pt = _continuation_cfg(cfg, beta, ref.a_star, (alpha, alpha)) \
        if alpha + max(beta, 0.0) < ref.a_star else cfg
    return classify_existence(params, cfg_pt, ref, ref_fine,
                              solver=_phase_solver(v1, v2))


def phase_diagram(alpha_grid, beta_grid, hp: HamiltonianParams,
                  ref: ReferenceSolution, cfg: SolverConfig,
                  v1: PotentialSpec | None = None,
                  v2: PotentialSpec | None = None,
                  ref_fine: ReferenceSolution | None = None,
                  threads: int = 1, csv_path=None):
    """Existence verdict on the symmetric (alpha, beta) grid: alpha_1 =
    alpha_2 = alpha.  Both potentials default to the unit quadratic well.
    Returns a matrix of ExistenceVerdict, rows indexed by alpha, columns by
    beta; optionally writes (alpha1, alpha2, beta, verdict) rows to CSV.
    Grid points are independent jobs; the output order never depends on
    completion order."""
    dim = ref.grid.dim
    if v1 is None:
        v1 = PotentialSpec.quadratic(center=(0.0,) * dim)
    if v2 is None:
        v2 = PotentialSpec.quadratic(center=(0.0,) * dim)
    alphas = [float(a) for a in alpha_grid]
    betas = [float(b) for b in beta_grid]
    jobs = [(a, b, hp, v1, v2, ref, ref_fine, cfg)
            for a in alphas for b in betas]
    flat = _parallel_map(_phase_job, jobs, threads)
    matrix = [flat[i * len(betas):(i + 1) * len(betas)]
              for i in range(len(alphas))]
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["alpha1", "alpha2", "beta", "verdict"])
            for i, a in enumerate(alphas):
                for j, b in enumerate(betas):
                    writer.writerow([repr(a), repr(a), repr(b),
                                     matrix[i][j].verdict.value])
    return matrix


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _fmt_point(x) -> str:
    arr = np.atleast_1d(np.asarray(x, float))
    return ";".join(repr(float(v)) for v in arr)


def write_attractive_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta", "eps_measured", "eps_predicted",
                         "lambda1_eps_g", "lambda2_eps_g", "sq_diff",
                         "overlap", "x1", "x2", "converged"])
        for r in records:
            writer.writerow([
                repr(r.scalar_delta()), repr(r.scalar_eps()),
                repr(float(r.eps_predicted)),
                repr(r.lambda_eps_gamma[0]), repr(r.lambda_eps_gamma[1]),
                repr(r.sq_diff), repr(r.overlap),
                _fmt_point(r.x_conc[0]) if r.x_conc else "",
                _fmt_point(r.x_conc[1]) if r.x_conc else "",
                int(r.converged),
            ])


def write_repulsive_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta1", "delta2", "eps1", "eps2",
                         "eps1_pred_first", "eps1_pred_second",
                         "eps2_pred_first", "eps2_pred_second",
                         "lambda1_eps_g", "lambda2_eps_g", "sq_diff",
                         "overlap", "x1", "x2", "converged"])
        for r in records:
            d1, d2 = r.delta
            (p1a, p1b), (p2a, p2b) = r.eps_predicted
            writer.writerow([
                repr(float(d1)), repr(float(d2)),
                repr(r.eps_measured[0]), repr(r.eps_measured[1]),
                repr(p1a), repr(p1b), repr(p2a), repr(p2b),
                repr(r.lambda_eps_gamma[0]), repr(r.lambda_eps_gamma[1]),
                repr(r.sq_diff), repr(r.overlap),
                _fmt_point(r.x_conc[0]) if r.x_conc else "",
                _fmt_point(r.x_conc[1]) if r.x_conc else "",
                int(r.converged),
            ])
