"""Scalar functionals of the two-population model.

Kinetic (perspective/Lagrangian) cost, potential energy, self- and
cross-interaction terms, the full two-population energy in both algebraic
groupings, the single-population energy, and the critical coupling
thresholds derived from the best constant a*.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleKinetic
from .fields import DensityField, FluxField, GridSpec, ScalarField, face_average

# Perspective-function conventions at machine precision: cells whose density
# is below M_FLOOR * max(m) contribute zero kinetic cost.  Flux on a face
# between two such dead cells signals infeasibility when it exceeds
# W_FLOOR * max(|w|) (transport through empty regions has infinite cost); a
# face between a dead cell and a live cell may carry flux — a compactly
# supported density has w = grad(m) != 0 on its support edge — and its cost
# is attributed to the live side.  Both floors are relative so the
# conventions respect the scaling invariance of the cost.
M_FLOOR = 1e-14
W_FLOOR = 1e-6


@dataclass(frozen=True)
class HamiltonianParams:
    """H(p) = C_H |p|^gamma.  Conjugate quantities are always recomputed."""

    gamma: float
    c_h: float

    def __post_init__(self):
        if self.gamma <= 1:
            raise ValueError("gamma must exceed 1")
        if self.c_h <= 0:
            raise ValueError("c_h must be positive")

    @property
    def gamma_conj(self) -> float:
        """gamma' = gamma/(gamma-1) > 1."""
        return self.gamma / (self.gamma - 1.0)

    @property
    def c_l(self) -> float:
        """Lagrangian constant C_L = (1/gamma') (gamma C_H)^(1/(1-gamma))."""
        return (1.0 / self.gamma_conj) * (self.gamma * self.c_h) ** (1.0 / (1.0 - self.gamma))


@dataclass(frozen=True)
class CouplingParams:
    """Intra-population strengths alpha_i >= 0 and cross strength beta."""

    alpha1: float
    alpha2: float
    beta: float

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("alpha coefficients must be nonnegative")

    def alpha(self, i: int) -> float:
        return self.alpha1 if i == 1 else self.alpha2


@dataclass(frozen=True)
class Well:
    center: tuple
    exponent: float
    coefficient: float

    def __post_init__(self):
        if self.exponent <= 0 or self.coefficient <= 0:
            raise ValueError("well exponent and coefficient must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class PotentialSpec:
    """Coercive confining potential built from power-law wells.

    form = "product": V(x) = prod_j a_j |x - x_j|^{p_j}  (vanishes at every
    well center, grows like |x|^{sum p_j}).
    form = "single": exactly one well, V(x) = b |x - x_0|^q.
    """

    wells: tuple
    form: str = "product"

    def __post_init__(self):
        wells = tuple(self.wells)
        if not wells:
            raise ValueError("at least one well required")
        if self.form not in ("product", "single"):
            raise ValueError("form must be 'product' or 'single'")
        if self.form == "single" and len(wells) != 1:
            raise ValueError("single form takes exactly one well")
        object.__setattr__(self, "wells", wells)

    @property
    def growth_exponent(self) -> float:
        return float(sum(w.exponent for w in self.wells))

    def evaluate(self, grid: GridSpec) -> ScalarField:
        coords = grid.cell_coords()
        out = np.ones(grid.shape)
        for w in self.wells:
            r = np.sqrt(sum((c - x) ** 2 for c, x in zip(coords, w.center)))
            out = out * (w.coefficient * r ** w.exponent)
        return ScalarField(grid, out)

    @staticmethod
    def quadratic(center=(0.0,), coefficient=1.0) -> "PotentialSpec":
        return PotentialSpec(wells=(Well(tuple(center), 2.0, coefficient),), form="single")


def potential_values(V, grid: GridSpec) -> np.ndarray:
    """Cell values of a PotentialSpec, or zeros when V is None (free motion)."""
    if V is None:
        return np.zeros(grid.shape)
    return V.evaluate(grid).values


@dataclass(frozen=True)
class MFGParams:
    """Full physics parameter set for one two-population problem.

    Either potential may be None, meaning V_i = 0 (used for potential-free
    diagnostics; confined problems should always supply both)."""

    hp: HamiltonianParams
    couplings: CouplingParams
    v1: PotentialSpec | None
    v2: PotentialSpec | None

    def potential(self, i: int) -> PotentialSpec | None:
        return self.v1 if i == 1 else self.v2


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic_1: float
    kinetic_2: float
    potential_1: float
    potential_2: float
    self_1: float
    self_2: float
    cross: float
    total: float
    # Same energy regrouped: (alpha_i + beta) self terms plus the
    # square-difference penalty; agrees with `total` to round-off.
    total_regrouped: float
    sq_diff: float


def coupling_s(dim: int, hp: HamiltonianParams) -> float:
    """Cross-coupling exponent s = 1/2 + gamma'/(2N)."""
    return 0.5 + hp.gamma_conj / (2.0 * dim)


def kinetic_cost(m, w: FluxField, hp: HamiltonianParams) -> float:
    """C_L * integral of |w_bar/m|^{gamma'} m, with w_bar the face-averaged
    flux at cell centers and the perspective convention at m = 0."""
    grid = w.grid
    mv = np.asarray(m.values if isinstance(m, ScalarField) else m, dtype=float)
    wbar = face_average(w)
    speed = np.sqrt(np.sum(wbar ** 2, axis=0))
    floor = M_FLOOR * max(float(np.max(mv)), 0.0)
    live = mv > floor
    dead = ~live
    w_max = max(float(np.max(np.abs(c))) for c in w.components)
    w_floor = W_FLOOR * w_max
    for ax in range(grid.dim):
        sl_l = [slice(None)] * grid.dim
        sl_l[ax] = slice(0, -1)
        sl_r = [slice(None)] * grid.dim
        sl_r[ax] = slice(1, None)
        interior = [slice(None)] * grid.dim
        interior[ax] = slice(1, -1)
        dd = dead[tuple(sl_l)] & dead[tuple(sl_r)]
        wf = np.abs(np.asarray(w.components[ax], float)[tuple(interior)])
        if np.any(wf[dd] > w_floor):
            raise InfeasibleKinetic("flux through a region with no mass")
    gc = hp.gamma_conj
    contrib = np.zeros(grid.shape)
    contrib[live] = speed[live] ** gc / mv[live] ** (gc - 1.0)
    return hp.c_l * grid.cell_volume * float(np.sum(contrib))


def potential_energy(V, m) -> float:
    grid = m.grid
    if V is None:
        return 0.0
    vals = V.evaluate(grid).values
    return grid.cell_volume * float(np.sum(vals * m.values))


def self_term(m, alpha: float, hp: HamiltonianParams) -> float:
    """-(N alpha/(N+gamma')) * integral m^{1+gamma'/N}."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    grid = m.grid
    N = grid.dim
    gc = hp.gamma_conj
    mv = np.clip(np.asarray(m.values, dtype=float), 0.0, None)
    val = grid.cell_volume * float(np.sum(mv ** (1.0 + gc / N)))
    return -(N * alpha / (N + gc)) * val


def overlap(m1, m2, hp: HamiltonianParams) -> float:
    """integral (m1 m2)^s with s = 1/2 + gamma'/(2N)."""
    grid = m1.grid
    s = coupling_s(grid.dim, hp)
    a = np.clip(np.asarray(m1.values, dtype=float), 0.0, None)
    b = np.clip(np.asarray(m2.values, dtype=float), 0.0, None)
    return grid.cell_volume * float(np.sum((a * b) ** s))


def cross_term(m1, m2, beta: float, hp: HamiltonianParams) -> float:
    """-(2 beta N/(N+gamma')) * integral (m1 m2)^s."""
    N = m1.grid.dim
    gc = hp.gamma_conj
    return -(2.0 * beta * N / (N + gc)) * overlap(m1, m2, hp)


def sq_diff_term(m1, m2, hp: HamiltonianParams) -> float:
    """integral (m1^s - m2^s)^2 — the symmetrization defect."""
    grid = m1.grid
    s = coupling_s(grid.dim, hp)
    a = np.clip(np.asarray(m1.values, dtype=float), 0.0, None) ** s
    b = np.clip(np.asarray(m2.values, dtype=float), 0.0, None) ** s
    return grid.cell_volume * float(np.sum((a - b) ** 2))


def single_energy(m, w, alpha: float, V, hp: HamiltonianParams) -> float:
    """One-population energy: kinetic + potential + self term."""
    e = kinetic_cost(m, w, hp)
    if V is not None:
        e += potential_energy(V, m)
    if alpha != 0.0:
        e += self_term(m, alpha, hp)
    return e


def total_energy(state, params: MFGParams) -> EnergyBreakdown:
    """Full two-population energy with both algebraic groupings.

    `state` is (m1, w1, m2, w2).  The direct grouping sums kinetic,
    potential, self and cross terms.  The regrouped form absorbs beta into
    the self coefficients and adds the square-difference penalty
    (N beta/(N+gamma')) * integral (m1^s - m2^s)^2.
    """
    m1, w1, m2, w2 = state
    hp, cp = params.hp, params.couplings
    N = m1.grid.dim
    gc = hp.gamma_conj

    k1 = kinetic_cost(m1, w1, hp)
    k2 = kinetic_cost(m2, w2, hp)
    p1 = potential_energy(params.v1, m1)
    p2 = potential_energy(params.v2, m2)
    s1 = self_term(m1, cp.alpha1, hp)
    s2 = self_term(m2, cp.alpha2, hp)
    cr = cross_term(m1, m2, cp.beta, hp)
    total = k1 + k2 + p1 + p2 + s1 + s2 + cr

    sq = sq_diff_term(m1, m2, hp)

    # regrouped self coefficients alpha_i + beta may be negative for
    # repulsive beta; the identity holds regardless of sign
    def nl_integral(m):
        mv = np.clip(np.asarray(m.values, dtype=float), 0.0, None)
        return m1.grid.cell_volume * float(np.sum(mv ** (1.0 + gc / N)))

    regroup = (
        k1 + k2 + p1 + p2
        - (N * (cp.alpha1 + cp.beta) / (N + gc)) * nl_integral(m1)
        - (N * (cp.alpha2 + cp.beta) / (N + gc)) * nl_integral(m2)
        + (N * cp.beta / (N + gc)) * sq
    )
    return EnergyBreakdown(
        kinetic_1=k1, kinetic_2=k2, potential_1=p1, potential_2=p2,
        self_1=s1, self_2=s2, cross=cr, total=total,
        total_regrouped=regroup, sq_diff=sq,
    )


@dataclass(frozen=True)
class Thresholds:
    beta_sub: float     # existence holds for beta below this (attractive side)
    beta_super: float   # no minimizer above this
    alpha_beta_star: float  # a* - beta: critical common alpha at fixed beta


def thresholds(couplings: CouplingParams, a_star: float) -> Thresholds:
    """Critical coupling curves derived from the best constant a*."""
    d1 = a_star - couplings.alpha1
    d2 = a_star - couplings.alpha2
    beta_sub = float(np.sqrt(d1 * d2)) if (d1 > 0 and d2 > 0) else 0.0
    beta_super = 0.5 * (2.0 * a_star - couplings.alpha1 - couplings.alpha2)
    return Thresholds(beta_sub=beta_sub, beta_super=beta_super,
                      alpha_beta_star=a_star - couplings.beta)


def gn_quotient(m, w, hp: HamiltonianParams, mass_val: float | None = None) -> float:
    """Scale-free quotient whose infimum over feasible pairs is a*:
    kinetic * mass^{gamma'/N} / ((N/(N+gamma')) * integral m^{1+gamma'/N})."""
    grid = m.grid
    N = grid.dim
    gc = hp.gamma_conj
    if mass_val is None:
        mass_val = grid.cell_volume * float(np.sum(m.values))
    mv = np.clip(np.asarray(m.values, dtype=float), 0.0, None)
    denom = (N / (N + gc)) * grid.cell_volume * float(np.sum(mv ** (1.0 + gc / N)))
    if denom <= 0:
        raise ValueError("degenerate density in quotient")
    return kinetic_cost(m, w, hp) * mass_val ** (gc / N) / denom
