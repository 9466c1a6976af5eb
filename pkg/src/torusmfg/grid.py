"""Periodic space(-time) lattices, fields, and discrete calculus.

Layout is marker-and-cell: scalar quantities (densities, potentials,
coupling fields) live at cell centers, vector quantities (fluxes) live on
the cell faces.  The spatial domain is the unit torus in one or two
dimensions, so every index is periodic.  Time is a uniform grid on [0, T]
with scalar fields either at the time nodes or at the interval midpoints.

Conventions used throughout the package:

* ``gradient`` is the forward difference onto faces; component ``a`` of a
  flux field stored at spatial index ``i`` is the value on the face
  between cells ``i`` and ``i + e_a``.  ``divergence`` is the backward
  difference, which makes ``<grad(phi), w> == -<phi, div(w)>`` an exact
  rearrangement of the same products.
* a field slab with time-midpoint staggering at slice ``k`` covers the
  interval ``[t_k, t_{k+1}]``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_MAGIC = "MFGF1"


class GridError(ValueError):
    """Incompatible grids, staggering, or solver right-hand sides."""


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic lattice on the unit torus, optionally with time.

    ``n_time == 0`` marks a stationary grid: fields carry a single slice
    and no time quadrature.
    """

    dim: int
    n_space: int
    n_time: int = 0
    T: float = 0.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GridError(f"dim must be 1 or 2, got {self.dim}")
        if self.n_space < 4:
            raise GridError(f"n_space must be >= 4, got {self.n_space}")
        if not _is_power_of_two(self.n_space):
            raise GridError(f"n_space must be a power of two, got {self.n_space}")
        if self.n_time < 0:
            raise GridError("n_time must be >= 0")
        if self.n_time > 0 and self.T <= 0.0:
            raise GridError("time-dependent grid needs T > 0")

    @property
    def hx(self) -> float:
        # n_space is a power of two so 1/n_space is exact in binary.
        return 1.0 / self.n_space

    @property
    def ht(self) -> float:
        if self.n_time == 0:
            return 0.0
        return self.T / self.n_time

    @property
    def cell_volume(self) -> float:
        return self.hx**self.dim

    @property
    def space_shape(self) -> tuple[int, ...]:
        return (self.n_space,) * self.dim

    @property
    def n_cells(self) -> int:
        return self.n_space**self.dim

    @property
    def stationary(self) -> bool:
        return self.n_time == 0

    def slices(self, staggering: str) -> int:
        """Number of time slices a field with the given staggering carries."""
        if staggering == "node":
            return self.n_time + 1
        if staggering == "mid":
            return max(self.n_time, 1)
        raise GridError(f"unknown staggering {staggering!r}")

    def cell_centers(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of the cell centers, broadcastable to space_shape."""
        axes = []
        x = (np.arange(self.n_space) + 0.5) * self.hx
        for a in range(self.dim):
            shape = [1] * self.dim
            shape[a] = self.n_space
            axes.append(x.reshape(shape))
        return tuple(axes)

    def time_nodes(self) -> np.ndarray:
        return np.arange(self.n_time + 1) * self.ht


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise GridError("fields live on different grids")


@dataclass
class ScalarField:
    """Cell-centered scalar field; values indexed (time slice, *space)."""

    grid: GridSpec
    values: np.ndarray
    staggering: str = "node"

    def __post_init__(self):
        want = (self.grid.slices(self.staggering),) + self.grid.space_shape
        if self.values.shape != want:
            raise GridError(
                f"scalar field shape {self.values.shape} != expected {want}"
            )

    @classmethod
    def zeros(cls, grid: GridSpec, staggering: str = "node") -> "ScalarField":
        shape = (grid.slices(staggering),) + grid.space_shape
        return cls(grid, np.zeros(shape), staggering)

    @classmethod
    def from_spatial(cls, grid, spatial: np.ndarray, staggering="node"):
        """Replicate one spatial slice over all time slices."""
        n = grid.slices(staggering)
        vals = np.broadcast_to(spatial, (n,) + grid.space_shape).copy()
        return cls(grid, vals, staggering)

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.staggering)


@dataclass
class FluxField:
    """Face vector field; values indexed (time slice, axis, *space).

    Component ``a`` at spatial multi-index ``i`` is the face between cells
    ``i`` and ``i + e_a`` (forward face of cell ``i``).  Time staggering is
    always at the interval midpoints.
    """

    grid: GridSpec
    values: np.ndarray
    staggering: str = field(default="mid")

    def __post_init__(self):
        want = (self.grid.slices("mid"), self.grid.dim) + self.grid.space_shape
        if self.values.shape != want:
            raise GridError(f"flux field shape {self.values.shape} != expected {want}")

    @classmethod
    def zeros(cls, grid: GridSpec) -> "FluxField":
        shape = (grid.slices("mid"), grid.dim) + grid.space_shape
        return cls(grid, np.zeros(shape))

    def copy(self) -> "FluxField":
        return FluxField(self.grid, self.values.copy())


# ---------------------------------------------------------------------------
# discrete calculus on raw arrays (space axes are the trailing `dim` axes)


def grad_array(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Forward-difference gradient; adds an axis for the component.

    values: (..., *space) -> (..., dim, *space)
    """
    hx = grid.hx
    comps = []
    for a in range(grid.dim):
        ax = values.ndim - grid.dim + a
        comps.append((np.roll(values, -1, axis=ax) - values) / hx)
    return np.stack(comps, axis=values.ndim - grid.dim)


def div_array(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Backward-difference divergence; consumes the component axis.

    values: (..., dim, *space) -> (..., *space)
    """
    hx = grid.hx
    out = None
    for a in range(grid.dim):
        idx = (Ellipsis, a) + (slice(None),) * grid.dim
        comp = values[idx]
        ax = comp.ndim - grid.dim + a
        term = (comp - np.roll(comp, 1, axis=ax)) / hx
        out = term if out is None else out + term
    return out


def gradient(phi: ScalarField) -> FluxField:
    """Forward-difference gradient; result is a midpoint-tagged flux field."""
    if phi.values.shape[0] != phi.grid.slices("mid"):
        raise GridError("gradient needs one slice per time interval")
    return FluxField(phi.grid, grad_array(phi.values, phi.grid))


def divergence(w: FluxField) -> ScalarField:
    """Backward-difference divergence; exact negative adjoint of gradient."""
    return ScalarField(w.grid, div_array(w.values, w.grid), "mid")


def time_derivative(m: ScalarField) -> ScalarField:
    """Node-to-midpoint forward time difference (m^{k+1} - m^k)/ht."""
    if m.staggering != "node":
        raise GridError("time_derivative expects a time-node scalar field")
    if m.grid.stationary:
        raise GridError("time_derivative undefined on a stationary grid")
    ht = m.grid.ht
    return ScalarField(m.grid, np.diff(m.values, axis=0) / ht, "mid")


def continuity_residual(m: ScalarField, w: FluxField) -> ScalarField:
    """Residual of the discrete transport constraint, slab by slab.

    Time-dependent: (m^{k+1} - m^k)/ht + div w^{k+1/2}; stationary grids
    reduce to div w alone.
    """
    _check_same_grid(m, w)
    dv = divergence(w)
    if m.grid.stationary:
        return dv
    dt = time_derivative(m)
    return ScalarField(m.grid, dt.values + dv.values, "mid")


def translate_array(values: np.ndarray, grid: GridSpec, delta) -> np.ndarray:
    """Periodic lattice shift: out(x) = in(x + delta*hx), exact reindexing."""
    delta = np.asarray(delta, dtype=int)
    if delta.shape != (grid.dim,):
        raise GridError(f"delta must have {grid.dim} integer components")
    out = values
    for a, d in enumerate(delta):
        ax = values.ndim - grid.dim + a
        out = np.roll(out, -int(d), axis=ax)
    return out


def translate(fld, delta):
    """Shift a ScalarField or FluxField by an integer lattice vector."""
    if isinstance(fld, ScalarField):
        return ScalarField(fld.grid, translate_array(fld.values, fld.grid, delta), fld.staggering)
    if isinstance(fld, FluxField):
        return FluxField(fld.grid, translate_array(fld.values, fld.grid, delta))
    raise GridError(f"cannot translate {type(fld).__name__}")


def space_integral(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Cell-volume-weighted sum over the trailing space axes."""
    axes = tuple(range(values.ndim - grid.dim, values.ndim))
    return values.sum(axis=axes) * grid.cell_volume


def inner(a: np.ndarray, b: np.ndarray, grid: GridSpec) -> float:
    """Plain cell-volume-weighted inner product of equally shaped arrays."""
    return float(np.sum(a * b) * grid.cell_volume)


# ---------------------------------------------------------------------------
# spectral Poisson solves


class PoissonSolver:
    """Fourier-diagonalized solves for the splitting scheme's phi updates.

    The spatial operator is div(grad(.)) with the staggered difference
    pair, whose symbol on mode k is -(2 - 2 cos(2 pi k / n)) / hx^2 per
    axis.  Space is handled by a real FFT; the time direction of the
    space-time system is a tridiagonal solve per spatial mode.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        n, hx = grid.n_space, grid.hx
        full = (2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(n) / n)) / hx**2
        half = full[: n // 2 + 1]
        if grid.dim == 1:
            self.symbol = half.copy()
        else:
            self.symbol = full[:, None] + half[None, :]
        self._space_axes = tuple(range(-grid.dim, 0))

    def _rfft(self, values):
        return np.fft.rfftn(values, axes=self._space_axes)

    def _irfft(self, spec):
        return np.fft.irfftn(spec, s=self.grid.space_shape, axes=self._space_axes)

    def apply_laplacian(self, values: np.ndarray) -> np.ndarray:
        """Apply -div(grad(.)) (positive semidefinite) to spatial slices."""
        return -div_array(grad_array(values, self.grid), self.grid)

    def solve_spatial(self, rhs: np.ndarray, mean_tol: float = 1e-10) -> np.ndarray:
        """Solve -div(grad(phi)) = rhs on the torus, zero-mean solution.

        rhs must be mean free; the zero mode of the transform is dropped,
        which also scrubs summation dust of order machine epsilon.
        """
        scale = np.max(np.abs(rhs)) if rhs.size else 0.0
        mean = float(rhs.mean())
        if abs(mean) > mean_tol * (1.0 + scale):
            raise GridError(f"poisson rhs has nonzero mean {mean:.3e}")
        spec = self._rfft(rhs)
        sym = self.symbol.copy()
        sym.reshape(-1)[0] = 1.0  # zero mode handled separately
        out = spec / sym
        if self.grid.dim == 1:
            out[..., 0] = 0.0
        else:
            out[..., 0, 0] = 0.0
        return self._irfft(out)

    def solve_space_time(self, rhs: np.ndarray, phi_T: np.ndarray) -> np.ndarray:
        """Solve the space-time system of the augmented phi update.

        Unknowns are the node slices phi^0..phi^{K-1}; phi^K = phi_T is a
        Dirichlet condition, and the t=0 end is natural (Neumann).  The
        operator is D_t^T D_t + (-div grad) acting on each unknown node,
        with D_t the forward node difference.  rhs has shape (K, *space).

        Returns the full (K+1, *space) node field including the tail.
        """
        grid = self.grid
        K = grid.n_time
        if K < 1:
            raise GridError("space-time solve needs n_time >= 1")
        if rhs.shape != (K,) + grid.space_shape:
            raise GridError(f"rhs shape {rhs.shape} != {(K,) + grid.space_shape}")
        ht = grid.ht
        spec = self._rfft(rhs)
        tail = self._rfft(phi_T[None])[0]
        # Dirichlet tail enters the last row through the -1/ht^2 coupling.
        spec[K - 1] += tail / ht**2
        lam = self.symbol  # broadcastable over mode axes
        inv_ht2 = 1.0 / ht**2
        # Thomas algorithm on the K x K tridiagonal (per spatial mode):
        # diag = [1, 2, ..., 2]/ht^2 + lam, off-diagonals -1/ht^2.
        diag0 = inv_ht2 + lam
        diagk = 2.0 * inv_ht2 + lam
        cp = np.empty((K,) + lam.shape)
        dp = np.empty((K,) + spec.shape[1:], dtype=spec.dtype)
        beta = diag0
        cp[0] = -inv_ht2 / beta
        dp[0] = spec[0] / beta
        for k in range(1, K):
            beta = diagk + inv_ht2 * cp[k - 1]
            cp[k] = -inv_ht2 / beta
            dp[k] = (spec[k] + inv_ht2 * dp[k - 1]) / beta
        sol = np.empty_like(dp)
        sol[K - 1] = dp[K - 1]
        for k in range(K - 2, -1, -1):
            sol[k] = dp[k] - cp[k] * sol[k + 1]
        phi = np.empty((K + 1,) + grid.space_shape)
        phi[:K] = self._irfft(sol)
        phi[K] = phi_T
        return phi

    def apply_space_time(self, phi: np.ndarray) -> np.ndarray:
        """Apply the space-time operator to a full node field; returns (K, ...).

        Row k of the result matches what solve_space_time inverts, with the
        Dirichlet tail contribution left inside (so apply(solve(r)) == r
        once the tail term is added back by the caller's rhs convention).
        """
        grid = self.grid
        K = grid.n_time
        ht = grid.ht
        out = np.empty((K,) + grid.space_shape)
        for k in range(K):
            if k == 0:
                tt = (phi[0] - phi[1]) / ht**2
            else:
                tt = (-phi[k - 1] + 2.0 * phi[k] - phi[k + 1]) / ht**2
            out[k] = tt + self.apply_laplacian(phi[k])
        return out


def poisson_solve(rhs: ScalarField, solver: PoissonSolver | None = None) -> ScalarField:
    """Zero-mean spatial Poisson solve of -div(grad(phi)) = rhs, slicewise."""
    solver = solver or PoissonSolver(rhs.grid)
    out = np.empty_like(rhs.values)
    for k in range(rhs.values.shape[0]):
        out[k] = solver.solve_spatial(rhs.values[k])
    return ScalarField(rhs.grid, out, rhs.staggering)


# ---------------------------------------------------------------------------
# field checkpoint format


def save_field(fh, values: np.ndarray, grid: GridSpec, staggering: str) -> None:
    """Write one array in the package checkpoint format.

    Text header `MFGF1 dim n_space n_time staggering` then little-endian
    float64 in row-major (time-major) order.  The round trip is bit exact.
    """
    header = f"{CHECKPOINT_MAGIC} {grid.dim} {grid.n_space} {grid.n_time} {staggering}\n"
    fh.write(header.encode("ascii"))
    fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def load_field(fh, expected_grid: GridSpec | None = None):
    """Read one array written by save_field; returns (values, meta dict)."""
    header = io.BytesIO()
    while True:
        c = fh.read(1)
        if not c:
            raise GridError("truncated checkpoint header")
        if c == b"\n":
            break
        header.write(c)
    parts = header.getvalue().decode("ascii").split()
    if len(parts) != 5 or parts[0] != CHECKPOINT_MAGIC:
        raise GridError(f"bad checkpoint header {parts!r}")
    dim, n_space, n_time = int(parts[1]), int(parts[2]), int(parts[3])
    staggering = parts[4]
    meta = {"dim": dim, "n_space": n_space, "n_time": n_time, "staggering": staggering}
    if expected_grid is not None:
        if (dim, n_space, n_time) != (
            expected_grid.dim,
            expected_grid.n_space,
            expected_grid.n_time,
        ):
            raise GridError(f"checkpoint grid {meta} does not match {expected_grid}")
    raw = fh.read()
    values = np.frombuffer(raw, dtype="<f8").astype(np.float64, copy=True)
    slices = (n_time + 1) if staggering == "node" else max(n_time, 1)
    shape = (slices,) + (n_space,) * dim
    if values.size != int(np.prod(shape)):
        raise GridError(f"checkpoint payload size {values.size} != {shape}")
    return values.reshape(shape), meta
