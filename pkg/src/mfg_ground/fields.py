"""Uniform tensor grid on a truncated box with cell-centered scalars and
face-staggered vector fields (marker-and-cell layout).

Scalars (densities, value functions, potentials) live at cell centers,
vector fields (fluxes, gradients) live on cell faces with one extra face
per axis.  Outer boundary faces always carry zero flux, which makes the
discrete gradient and (negative) divergence exact adjoints under the
midpoint-rule inner product.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [-L, L]^dim with n cells per axis."""

    dim: int
    half_width: float
    cells_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.cells_per_axis < 16:
            raise ValueError("need at least 16 cells per axis")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.cells_per_axis

    @property
    def shape(self) -> tuple:
        return (self.cells_per_axis,) * self.dim

    @property
    def num_cells(self) -> int:
        return self.cells_per_axis ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    def axis_centers(self) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        n, h = self.cells_per_axis, self.spacing
        return -self.half_width + h * (np.arange(n) + 0.5)

    def axis_faces(self) -> np.ndarray:
        """Face coordinates along one axis (n+1 of them)."""
        n, h = self.cells_per_axis, self.spacing
        return -self.half_width + h * np.arange(n + 1)

    def cell_coords(self) -> list:
        """Broadcastable cell-center coordinate arrays, one per axis."""
        c = self.axis_centers()
        if self.dim == 1:
            return [c]
        return list(np.meshgrid(c, c, indexing="ij", sparse=True))

    def face_shape(self, axis: int) -> tuple:
        n = self.cells_per_axis
        shape = [n] * self.dim
        shape[axis] = n + 1
        return tuple(shape)

    def radius(self, origin=None) -> np.ndarray:
        """|x - origin| at cell centers."""
        coords = self.cell_coords()
        if origin is None:
            origin = (0.0,) * self.dim
        sq = sum((c - o) ** 2 for c, o in zip(coords, origin))
        return np.sqrt(sq)


@dataclass(frozen=True)
class ScalarField:
    """Cell-centered scalar samples."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite scalar field values")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


# Negativity below this (relative to the max) is treated as round-off and
# clipped; anything worse must go through the feasibility projection first.
DENSITY_NEG_TOL = 1e-12


@dataclass(frozen=True)
class DensityField(ScalarField):
    """Nonnegative cell-centered density.  Round-off negativity is clipped."""

    def __post_init__(self):
        super().__post_init__()
        v = self.values
        scale = max(float(np.max(np.abs(v))), 1.0)
        if float(np.min(v)) < -DENSITY_NEG_TOL * scale:
            raise ValueError("density has negativity beyond round-off")
        if float(np.min(v)) < 0.0:
            v = np.clip(v, 0.0, None)
            v.setflags(write=False)
            object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class FluxField:
    """Face-staggered vector field; outer boundary faces are zero."""

    grid: GridSpec
    components: tuple = field(repr=False)

    def __post_init__(self):
        comps = tuple(np.asarray(c, dtype=float) for c in self.components)
        if len(comps) != self.grid.dim:
            raise ValueError("one component per axis required")
        for ax, c in enumerate(comps):
            if c.shape != self.grid.face_shape(ax):
                raise ValueError(
                    f"component {ax} shape {c.shape} != {self.grid.face_shape(ax)}"
                )
            if not np.all(np.isfinite(c)):
                raise ValueError("non-finite flux values")
            bd_lo = np.take(c, 0, axis=ax)
            bd_hi = np.take(c, -1, axis=ax)
            if np.any(bd_lo != 0.0) or np.any(bd_hi != 0.0):
                raise ValueError("boundary faces must carry zero flux")
        comps = tuple(c.copy() for c in comps)
        for c in comps:
            c.setflags(write=False)
        object.__setattr__(self, "components", comps)

    @staticmethod
    def zeros(grid: GridSpec) -> "FluxField":
        return FluxField(grid, tuple(np.zeros(grid.face_shape(ax)) for ax in range(grid.dim)))


def zero_boundary_faces(grid: GridSpec, comps) -> tuple:
    """Force the outer faces of raw per-axis arrays to zero (in place copy)."""
    out = []
    for ax, c in enumerate(comps):
        c = np.array(c, dtype=float)
        idx_lo = [slice(None)] * grid.dim
        idx_lo[ax] = 0
        idx_hi = [slice(None)] * grid.dim
        idx_hi[ax] = -1
        c[tuple(idx_lo)] = 0.0
        c[tuple(idx_hi)] = 0.0
        out.append(c)
    return tuple(out)


# ---------------------------------------------------------------------------
# quadrature and inner products
# ---------------------------------------------------------------------------

def integral(field: ScalarField) -> float:
    """Midpoint-rule integral over the box."""
    return field.grid.cell_volume * float(np.sum(field.values))


def mass(field: ScalarField) -> float:
    """Total mass: midpoint quadrature h^dim * sum(values)."""
    return integral(field)


def inner(u: ScalarField, v: ScalarField) -> float:
    return u.grid.cell_volume * float(np.sum(u.values * v.values))


def flux_inner(w: FluxField, v: FluxField) -> float:
    vol = w.grid.cell_volume
    return vol * float(sum(np.sum(a * b) for a, b in zip(w.components, v.components)))


# ---------------------------------------------------------------------------
# discrete gradient / divergence (adjoint pair)
# ---------------------------------------------------------------------------

def grad(u: ScalarField) -> FluxField:
    """Face differences (u_{i+1}-u_i)/h; boundary faces zero."""
    g = u.grid
    h = g.spacing
    comps = []
    for ax in range(g.dim):
        c = np.zeros(g.face_shape(ax))
        interior = [slice(None)] * g.dim
        interior[ax] = slice(1, -1)
        c[tuple(interior)] = np.diff(u.values, axis=ax) / h
        comps.append(c)
    return FluxField(g, tuple(comps))


def div(w: FluxField) -> ScalarField:
    """Per-cell face-difference divergence; exact negative adjoint of grad."""
    g = w.grid
    h = g.spacing
    out = np.zeros(g.shape)
    for ax, c in enumerate(w.components):
        out += np.diff(c, axis=ax) / h
    return ScalarField(g, out)


def laplacian(u: ScalarField) -> ScalarField:
    """div(grad(u)): zero-flux second-difference Laplacian."""
    return div(grad(u))


def face_average(w: FluxField) -> np.ndarray:
    """Cell-centered vector reconstruction: mean of the two faces per axis.

    Returns an array of shape (dim, n, ..., n).
    """
    g = w.grid
    out = np.empty((g.dim,) + g.shape)
    for ax, c in enumerate(w.components):
        lo = [slice(None)] * g.dim
        hi = [slice(None)] * g.dim
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        out[ax] = 0.5 * (c[tuple(lo)] + c[tuple(hi)])
    return out


def face_spread(grid: GridSpec, cell_vec: np.ndarray) -> tuple:
    """Adjoint of face_average: distribute cell-centered vector data to faces.

    Each interior face receives half of each adjacent cell's value; boundary
    faces stay zero (they are fixed degrees of freedom).
    """
    comps = []
    for ax in range(grid.dim):
        c = np.zeros(grid.face_shape(ax))
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        c[tuple(lo)] += 0.5 * cell_vec[ax]
        c[tuple(hi)] += 0.5 * cell_vec[ax]
        comps.append(c)
    return tuple(zero_boundary_faces(grid, comps))


# ---------------------------------------------------------------------------
# flat-vector packing (used by the constraint operator and the optimizer)
# ---------------------------------------------------------------------------

def flux_sizes(grid: GridSpec) -> list:
    return [int(np.prod(grid.face_shape(ax))) for ax in range(grid.dim)]


def pack_flux(w: FluxField) -> np.ndarray:
    return np.concatenate([c.ravel() for c in w.components])


def unpack_flux(grid: GridSpec, vec: np.ndarray) -> FluxField:
    comps = []
    off = 0
    for ax in range(grid.dim):
        size = int(np.prod(grid.face_shape(ax)))
        comps.append(vec[off:off + size].reshape(grid.face_shape(ax)))
        off += size
    return FluxField(grid, tuple(zero_boundary_faces(grid, comps)))


# ---------------------------------------------------------------------------
# field dump format
# ---------------------------------------------------------------------------

def _header(grid: GridSpec) -> str:
    return f"mfg-field v1 dim={grid.dim} n={grid.cells_per_axis} L={grid.half_width!r}"


def dump_scalar(field: ScalarField, path) -> None:
    """Write `mfg-field v1 ...` header plus row-major ASCII floats."""
    with open(path, "w") as f:
        f.write(_header(field.grid) + "\n")
        for v in field.values.ravel():
            f.write(f"{v:.17g}\n")


def dump_flux(w: FluxField, path) -> None:
    with open(path, "w") as f:
        f.write(_header(w.grid) + "\n")
        for c in w.components:
            for v in c.ravel():
                f.write(f"{v:.17g}\n")


def _parse_header(line: str) -> GridSpec:
    parts = line.strip().split()
    if len(parts) != 5 or parts[0] != "mfg-field" or parts[1] != "v1":
        raise ValueError(f"bad field header: {line!r}")
    kv = dict(p.split("=", 1) for p in parts[2:])
    return GridSpec(dim=int(kv["dim"]), half_width=float(kv["L"]),
                    cells_per_axis=int(kv["n"]))


def load_scalar(path) -> ScalarField:
    with open(path) as f:
        grid = _parse_header(f.readline())
        vals = np.array([float(line) for line in f if line.strip()])
    return ScalarField(grid, vals.reshape(grid.shape))


def load_flux(path) -> FluxField:
    with open(path) as f:
        grid = _parse_header(f.readline())
        vals = np.array([float(line) for line in f if line.strip()])
    return unpack_flux(grid, vals)
