"""The two dual energy functionals, their stationary versions, feasibility.

Discrete quadrature conventions (fixed across the package so the exact
summation-by-parts duality holds):

* a time slab [t_k, t_{k+1}] carries the density of its right node, the
  flux of its midpoint slice, and the gradient of its left node;
* transport energy (time-dependent):
      B(m, w) = ht hx^d sum_k sum_x [ m^{k+1} H*(x, -w/m^{k+1}) + F(x, m^{k+1}) ]
                + hx^d sum_x phi_T m^K
* value-function energy on the relaxed constraint set:
      A(phi, alpha) = ht hx^d sum_k sum_x F*(x, alpha^{k+1/2})
                      - hx^d sum_x phi^0 m0
  feasible when alpha >= -(phi^{k+1}-phi^k)/ht + H(x, grad phi^k) cellwise
  and phi^K <= phi_T.

With these choices A + B >= <phi_T - phi^K, m^K> >= 0 holds exactly
(up to rounding) for every feasible pair: the proof is a finite telescoping
sum, so weak duality is a machine-precision identity here, not an estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .grid import (
    FluxField,
    GridSpec,
    ScalarField,
    continuity_residual,
    div_array,
    grad_array,
    space_integral,
)
from .model import ModelOnGrid

FEAS_TOL = 1e-8
COMPLEMENTARITY_EPS = 1e-10


class EnergyValue(NamedTuple):
    """Extended-real energy: `finite` is decided by exact vacuum masks."""

    value: float
    finite: bool

    def __float__(self):
        return self.value


@dataclass
class PrimalState:
    """Density / flux pair subject to the transport constraint."""

    m: ScalarField
    w: FluxField

    @property
    def grid(self) -> GridSpec:
        return self.m.grid

    def copy(self):
        return PrimalState(self.m.copy(), self.w.copy())


@dataclass
class DualState:
    """Value function, coupling level, and (stationary) mass multiplier."""

    phi: ScalarField
    alpha: ScalarField
    lam: float = 0.0

    @property
    def grid(self) -> GridSpec:
        return self.phi.grid

    def copy(self):
        return DualState(self.phi.copy(), self.alpha.copy(), self.lam)


def slab_density(m: ScalarField) -> np.ndarray:
    """Density samples attached to the slabs (right node per slab)."""
    if m.grid.stationary:
        return m.values
    return m.values[1:]


def slab_gradient(phi: ScalarField, grid: GridSpec) -> np.ndarray:
    """Gradient field entering slab quadratures (left node per slab)."""
    vals = phi.values if grid.stationary else phi.values[:-1]
    return grad_array(vals, grid)


def hj_level(model: ModelOnGrid, phi: ScalarField) -> np.ndarray:
    """-d_t phi + H(x, grad phi) per slab; lam + H(x, grad phi) stationary."""
    grid = phi.grid
    ham = model.hamiltonian(slab_gradient(phi, grid))
    if grid.stationary:
        return ham
    dt = np.diff(phi.values, axis=0) / grid.ht
    return -dt + ham


def eval_B_td(model: ModelOnGrid, state: PrimalState) -> EnergyValue:
    """Transport energy of a time-dependent primal state."""
    grid = state.grid
    if grid.stationary:
        raise ValueError("eval_B_td needs a time-dependent grid")
    m_slab = slab_density(state.m)
    wv = state.w.values
    vac = m_slab == 0.0
    wmag2 = np.sum(wv * wv, axis=1)
    finite = not bool(np.any(vac & (wmag2 > 0.0)))
    if not finite:
        return EnergyValue(np.inf, False)
    persp = model.perspective(m_slab, wv)
    body = float(np.sum(persp + model.F(m_slab))) * grid.ht * grid.cell_volume
    terminal = float(np.sum(model.phi_T * state.m.values[-1])) * grid.cell_volume
    return EnergyValue(body + terminal, True)


def eval_A_td(model: ModelOnGrid, state: DualState) -> float:
    """Relaxed Hamilton-Jacobi control energy of a dual state."""
    grid = state.grid
    if grid.stationary:
        raise ValueError("eval_A_td needs a time-dependent grid")
    body = float(np.sum(model.Fstar(state.alpha.values))) * grid.ht * grid.cell_volume
    initial = float(np.sum(state.phi.values[0] * model.m0)) * grid.cell_volume
    return body - initial


def eval_B_stat(model: ModelOnGrid, m: ScalarField, w: FluxField) -> EnergyValue:
    grid = m.grid
    mv = m.values
    wv = w.values
    vac = mv == 0.0
    wmag2 = np.sum(wv * wv, axis=1)
    if bool(np.any(vac & (wmag2 > 0.0))):
        return EnergyValue(np.inf, False)
    persp = model.perspective(mv, wv)
    return EnergyValue(float(np.sum(persp + model.F(mv))) * grid.cell_volume, True)


def eval_A_stat(model: ModelOnGrid, lam: float, phi: ScalarField) -> float:
    level = lam + model.hamiltonian(slab_gradient(phi, phi.grid))
    return float(np.sum(model.Fstar(level))) * phi.grid.cell_volume - lam


def duality_gap(model: ModelOnGrid, primal: PrimalState, dual: DualState):
    """(A + B, relative gap).  Infinite B gives an infinite gap."""
    if primal.grid.stationary:
        b = eval_B_stat(model, primal.m, primal.w)
        a = eval_A_stat(model, dual.lam, dual.phi)
    else:
        b = eval_B_td(model, primal)
        a = eval_A_td(model, dual)
    total = a + b.value
    rel = abs(total) / (1.0 + abs(b.value)) if b.finite else np.inf
    return total, rel


@dataclass
class FeasibilityReport:
    """Max-norm residuals of every constraint both players must satisfy.

    Raw magnitudes are reported; thresholding against FEAS_TOL is left to
    the caller so diagnostics stay quantitative.
    """

    continuity: float
    negativity: float
    mass: float
    hj: float
    trace: float
    complementarity: float
    coupling_inequality: float

    def feasible(self, tol: float = FEAS_TOL) -> bool:
        worst = max(self.continuity, self.negativity, self.mass, self.hj, self.trace)
        return worst <= tol

    def as_dict(self):
        return {
            "res_continuity": self.continuity,
            "res_negativity": self.negativity,
            "res_mass": self.mass,
            "res_hj": self.hj,
            "res_trace": self.trace,
            "res_complementarity": self.complementarity,
            "res_coupling_inequality": self.coupling_inequality,
        }


def feasibility_report(model: ModelOnGrid, primal: PrimalState, dual: DualState) -> FeasibilityReport:
    grid = primal.grid
    res_cont = continuity_residual(primal.m, primal.w)
    continuity = float(np.max(np.abs(res_cont.values)))
    negativity = float(max(0.0, -primal.m.values.min()))

    masses = space_integral(primal.m.values, grid)
    mass = float(np.max(np.abs(masses - 1.0)))
    if not grid.stationary:
        # the initial slice must carry m0 itself, not just unit mass
        mass = max(mass, float(np.max(np.abs(primal.m.values[0] - model.m0))))

    level = hj_level(model, dual.phi)
    if grid.stationary:
        level = dual.lam + level
    hj = float(np.max(np.maximum(level - dual.alpha.values, 0.0)))

    if grid.stationary:
        trace = float(np.max(np.abs(space_integral(dual.phi.values, grid))))
    else:
        trace = float(np.max(np.maximum(dual.phi.values[-1] - model.phi_T, 0.0)))

    m_slab = slab_density(primal.m)
    f_of_m = model.coupling(np.maximum(m_slab, 0.0))
    mism = np.abs(dual.alpha.values - f_of_m) * (m_slab > COMPLEMENTARITY_EPS)
    weight = grid.cell_volume * (grid.ht if not grid.stationary else 1.0)
    complementarity = float(np.sum(mism)) * weight
    coupling_ineq = float(np.max(np.maximum(dual.alpha.values - f_of_m, 0.0)))

    return FeasibilityReport(
        continuity=continuity,
        negativity=negativity,
        mass=mass,
        hj=hj,
        trace=trace,
        complementarity=complementarity,
        coupling_inequality=coupling_ineq,
    )


def project_dual_feasible(model: ModelOnGrid, dual: DualState) -> DualState:
    """Smallest alpha increase making the Hamilton-Jacobi inequality exact."""
    level = hj_level(model, dual.phi)
    if dual.grid.stationary:
        level = dual.lam + level
    alpha = np.maximum(dual.alpha.values, level)
    return DualState(dual.phi, ScalarField(dual.grid, alpha, "mid"), dual.lam)


def energy_identity_residual(model: ModelOnGrid, primal: PrimalState, dual: DualState) -> float:
    """Gap in the discrete integrated optimality identity.

    The continuum identity pairs m with H - grad(phi).D_xi H - f(m) against
    the boundary terms; discretely it holds only to quadrature error, so it
    is reported, never asserted.
    """
    grid = primal.grid
    g = slab_gradient(dual.phi, grid)
    dH = model.d_xi_hamiltonian(g)
    m_slab = slab_density(primal.m)
    integrand = m_slab * (
        model.hamiltonian(g) - np.sum(g * dH, axis=1) - model.coupling(np.maximum(m_slab, 0.0))
    )
    if grid.stationary:
        lhs = float(np.sum(integrand)) * grid.cell_volume + dual.lam
        rhs = 0.0
    else:
        lhs = float(np.sum(integrand)) * grid.ht * grid.cell_volume
        rhs = float(
            np.sum(model.phi_T * primal.m.values[-1] - dual.phi.values[0] * model.m0)
        ) * grid.cell_volume
    return abs(lhs - rhs)
