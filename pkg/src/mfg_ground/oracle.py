"""Independent ODE oracle for the potential-free reference problem in the
quadratic-Hamiltonian, one-dimensional case (gamma = 2, N = 1).

The logarithmic (Cole) substitution psi = exp(-C_H u) together with the
stationary Fokker-Planck relation m = psi^2 turns the coupled system into a
single scalar ODE

    psi'' = a psi - b psi^5,   a = -C_H lambda,  b = C_H,

whose even, decaying (homoclinic) solution is found by bisection shooting on
psi(0).  The self-consistency lambda = -2 / mass(m) is closed by a scalar
fixed-point iteration on a.  This path shares no code with the variational
grid solver and serves as its accuracy oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp


@dataclass(frozen=True)
class ShootingSolution:
    x: np.ndarray          # nonnegative sample points
    m: np.ndarray          # density samples at x (even in x)
    mass: float            # total mass M*
    a_star: float          # mass^{gamma'/N} = mass^2 here
    lambda0: float         # ergodic constant -2/mass
    a_coef: float          # ODE stiffness a = -C_H * lambda0
    psi0: float            # shooting amplitude psi(0)

    def sample(self, xq: np.ndarray) -> np.ndarray:
        """Even-extension density samples at arbitrary points."""
        return np.interp(np.abs(xq), self.x, self.m, right=0.0)


def _shoot_amplitude(a: float, b: float, x_max: float, n_bisect: int = 80):
    """Bisection on psi(0) for the decaying solution of psi'' = a psi - b psi^5."""

    def classify(A: float) -> int:
        """The conserved energy psi'^2 - a psi^2 + (b/3) psi^6 is zero on the
        homoclinic.  Below it (A too small) the orbit is periodic around the
        interior center, so psi' turns back up; above it (A too large) the
        orbit has positive energy and crosses psi = 0."""

        def rhs(x, y):
            return [y[1], a * y[0] - b * y[0] ** 5]

        def hit_zero(x, y):
            return y[0]
        hit_zero.terminal = True
        hit_zero.direction = -1

        def turn_up(x, y):
            return y[1]
        turn_up.terminal = True
        turn_up.direction = 1

        sol = solve_ivp(rhs, (0.0, x_max), [A, 0.0], events=[hit_zero, turn_up],
                        rtol=1e-12, atol=1e-14, max_step=0.1)
        if sol.t_events[0].size:
            return +1   # crossed zero: amplitude above the homoclinic
        if sol.t_events[1].size:
            return -1   # turned around: amplitude below the homoclinic
        return -1 if sol.y[0, -1] > 0 else +1

    lo, hi = 1e-6, 10.0 * (a / b) ** 0.25 + 1.0
    if classify(lo) != -1:
        raise RuntimeError("shooting bracket: lower end did not undershoot")
    if classify(hi) != +1:
        raise RuntimeError("shooting bracket: upper end did not overshoot")
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        if classify(mid) == +1:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _profile(a: float, b: float, x_grid: np.ndarray):
    """Density profile m = psi^2 on x_grid >= 0, with an exponential-tail
    extension where the shot trajectory loses the homoclinic."""
    x_max = float(x_grid[-1])
    A = _shoot_amplitude(a, b, min(x_max, 30.0 / np.sqrt(a)))

    def rhs(x, y):
        return [y[1], a * y[0] - b * y[0] ** 5]

    def leave(x, y):
        # stop once the trajectory is clearly off the homoclinic
        return y[0] - 1e-7 * A
    leave.terminal = True
    leave.direction = -1

    sol = solve_ivp(rhs, (0.0, x_max), [A, 0.0], t_eval=x_grid, events=[leave],
                    rtol=1e-12, atol=1e-16, max_step=0.05, dense_output=True)
    psi = np.zeros_like(x_grid)
    ngot = sol.y.shape[1]
    psi[:ngot] = np.clip(sol.y[0], 0.0, None)
    if ngot < x_grid.size:
        # linear-in-log tail: psi ~ C exp(-sqrt(a) x) far out
        x_sw = x_grid[ngot - 1]
        c_sw = max(psi[ngot - 1], 1e-300)
        psi[ngot:] = c_sw * np.exp(-np.sqrt(a) * (x_grid[ngot:] - x_sw))
    return psi ** 2


def solve_reference_ode(c_h: float, x_max: float = 25.0, n_samples: int = 8001,
                        fp_iters: int = 40) -> ShootingSolution:
    """Shooting solution of the reference problem for gamma = 2, N = 1."""
    b = c_h
    x = np.linspace(0.0, x_max, n_samples)
    a = c_h  # any positive start; the fixed point is very mildly contracting
    mass = np.nan
    for _ in range(fp_iters):
        m = _profile(a, b, x)
        mass = float(np.trapezoid(m, x)) * 2.0
        a_new = 2.0 * c_h / mass
        if abs(a_new - a) <= 1e-12 * a:
            a = a_new
            break
        a = a_new
    m = _profile(a, b, x)
    mass = float(np.trapezoid(m, x)) * 2.0
    psi0 = float(np.sqrt(m[0]))
    return ShootingSolution(x=x, m=m, mass=mass, a_star=mass ** 2,
                            lambda0=-2.0 / mass, a_coef=a, psi0=psi0)
