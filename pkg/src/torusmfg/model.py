"""Problem data: exponents, coefficient fields, initial and terminal data.

A ModelSpec carries the exponents and the coefficient fields as callables
of the torus coordinates, so one model can be sampled onto any lattice in
a refinement study.  ModelOnGrid is the sampled form the numerics consume;
the initial density is renormalized to unit mass at discretization time
and every positivity hypothesis is enforced there.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernel
from .grid import GridSpec

FieldFn = Callable[..., np.ndarray]


class InfeasibleModel(ValueError):
    """Model data violating the standing hypotheses."""


def constant(value: float) -> FieldFn:
    def fn(*coords):
        return np.broadcast_to(np.float64(value), np.broadcast_shapes(*[c.shape for c in coords])).copy()

    return fn


@dataclass(frozen=True)
class ModelSpec:
    """Continuous description of one mean field game instance."""

    r: float
    q: float
    dim: int
    T: float
    c1: FieldFn = field(default_factory=lambda: constant(1.0))
    c2: FieldFn = field(default_factory=lambda: constant(1.0))
    m0: FieldFn = field(default_factory=lambda: constant(1.0))
    phi_T: FieldFn = field(default_factory=lambda: constant(0.0))
    name: str = ""

    def __post_init__(self):
        if not self.r > 1.0:
            raise InfeasibleModel(f"Hamiltonian growth exponent r must be > 1, got {self.r}")
        if not self.q > 1.0:
            raise InfeasibleModel(f"coupling growth exponent q must be > 1, got {self.q}")
        if not self.T > 0.0:
            raise InfeasibleModel(f"horizon T must be > 0, got {self.T}")
        if self.dim not in (1, 2):
            raise InfeasibleModel(f"dim must be 1 or 2, got {self.dim}")

    @property
    def r_conj(self) -> float:
        return kernel.conjugate_exponent(self.r)

    @property
    def p(self) -> float:
        """Conjugate exponent of q."""
        return kernel.conjugate_exponent(self.q)

    def on_grid(self, grid: GridSpec) -> "ModelOnGrid":
        return ModelOnGrid.sample(self, grid)


MASS_TOL = 1e-12


class ModelOnGrid:
    """Model data sampled at the cell centers of one grid.

    Wraps the kernel functions with the sampled coefficient arrays so the
    rest of the package can write model.hamiltonian(xi) etc. without
    shuttling coefficients around.  All wrapped operations are pure.
    """

    def __init__(self, spec_r, spec_q, dim, T, c1, c2, m0, phi_T, grid, name=""):
        self.r = float(spec_r)
        self.q = float(spec_q)
        self.dim = int(dim)
        self.T = float(T)
        self.grid = grid
        self.name = name
        if self.dim != grid.dim:
            raise InfeasibleModel(f"model dim {self.dim} != grid dim {grid.dim}")
        self.c1 = np.asarray(c1, dtype=float)
        self.c2 = np.asarray(c2, dtype=float)
        self.phi_T = np.asarray(phi_T, dtype=float)
        m0 = np.asarray(m0, dtype=float)
        for label, arr in (("c1", self.c1), ("c2", self.c2), ("m0", m0), ("phi_T", self.phi_T)):
            if arr.shape != grid.space_shape:
                raise InfeasibleModel(f"{label} has shape {arr.shape}, expected {grid.space_shape}")
        if self.c1.min() <= 0.0:
            raise InfeasibleModel("c1 must be strictly positive on the grid")
        if self.c2.min() <= 0.0:
            raise InfeasibleModel("c2 must be strictly positive on the grid")
        if m0.min() <= 0.0:
            raise InfeasibleModel("m0 must be strictly positive on the grid")
        mass = m0.sum() * grid.cell_volume
        self.m0 = m0 / mass
        assert abs(self.m0.sum() * grid.cell_volume - 1.0) < MASS_TOL

    @classmethod
    def sample(cls, spec: ModelSpec, grid: GridSpec) -> "ModelOnGrid":
        coords = grid.cell_centers()
        shape = grid.space_shape
        smp = lambda fn: np.broadcast_to(np.asarray(fn(*coords), dtype=float), shape).copy()
        return cls(
            spec.r, spec.q, spec.dim, spec.T,
            smp(spec.c1), smp(spec.c2), smp(spec.m0), smp(spec.phi_T),
            grid, name=spec.name,
        )

    # ranges used by the coercivity sampling
    @property
    def c1_range(self):
        return float(self.c1.min()), float(self.c1.max())

    @property
    def c2_range(self):
        return float(self.c2.min()), float(self.c2.max())

    @property
    def r_conj(self):
        return kernel.conjugate_exponent(self.r)

    @property
    def p(self):
        return kernel.conjugate_exponent(self.q)

    # --- kernel wrappers bound to the sampled coefficients --------------
    # Vector fields are indexed (..., dim, *space): the component axis sits
    # in front of the space axes, matching FluxField storage.

    @property
    def _vec_axis(self):
        return -(self.dim + 1)

    def hamiltonian(self, xi) -> np.ndarray:
        return kernel.hamiltonian(self.r, self.c2, xi, axis=self._vec_axis)

    def d_xi_hamiltonian(self, xi) -> np.ndarray:
        return kernel.d_xi_hamiltonian(self.r, self.c2, xi, axis=self._vec_axis)

    def hamiltonian_conjugate(self, zeta) -> np.ndarray:
        return kernel.hamiltonian_conjugate(self.r, self.c2, zeta, axis=self._vec_axis)

    def coupling(self, m) -> np.ndarray:
        return kernel.coupling(self.q, self.c1, m)

    def F(self, m) -> np.ndarray:
        return kernel.antiderivative_F(self.q, self.c1, m)

    def Fstar(self, a) -> np.ndarray:
        return kernel.conjugate_Fstar(self.q, self.c1, a)

    def d_Fstar(self, a) -> np.ndarray:
        return kernel.d_Fstar(self.q, self.c1, a)

    def perspective(self, m, w) -> np.ndarray:
        return kernel.perspective(self.r, self.c2, m, w, axis=self._vec_axis)

    def prox_perspective(self, m_hat, w_hat, tau, m_init=None):
        return kernel.prox_perspective(
            self.r, self.q, self.c1, self.c2, m_hat, w_hat, tau,
            axis=self._vec_axis, m_init=m_init,
        )

    def prox_Fstar(self, a_hat, rho):
        return kernel.prox_Fstar(self.q, self.c1, a_hat, rho)

    def coercivity_maps(self) -> kernel.CoercivityMaps:
        return kernel.CoercivityMaps.certify(self.r, self.q, self.dim)

    def translate(self, delta) -> "ModelOnGrid":
        """Shift every coefficient field by an integer lattice vector."""
        from .grid import translate_array

        g = self.grid
        return ModelOnGrid(
            self.r, self.q, self.dim, self.T,
            translate_array(self.c1, g, delta),
            translate_array(self.c2, g, delta),
            translate_array(self.m0, g, delta),
            translate_array(self.phi_T, g, delta),
            g, name=self.name,
        )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.array([self.r, self.q, self.dim, self.T], dtype="<f8").tobytes())
        for arr in (self.c1, self.c2, self.m0, self.phi_T):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()
