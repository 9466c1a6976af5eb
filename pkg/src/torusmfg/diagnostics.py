"""Quantitative diagnostics on converged states.

Everything here is read-only over immutable state snapshots: discrete
Sobolev quantities whose boundedness under refinement is the checkable
shadow of the uniform estimates, the translation probe measuring the
quadratic response of the stationary energy to shifted competitors, and
refinement studies tabulating the lot into one CSV row per grid.

Entries that do not apply are tagged "NA:<reason>" rather than guessed:
the time bound needs a quadratically growing Hamiltonian, the positive
part exponents are undefined on their borderline, the congestion norm
needs an integrable reciprocal density.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import energies, kernel, solver
from .energies import DualState, PrimalState
from .grid import GridSpec, ScalarField, grad_array, translate
from .model import ModelOnGrid, ModelSpec

Entry = Union[float, str]

CSV_COLUMNS = [
    "grid", "n_time", "gap", "res_cont",
    "sob_space", "sob_second", "sob_time",
    "h1_Jm", "h1_Jstar", "trans_slope",
    "phi_plus_eta", "phi_plus_gamma", "congestion",
]

# Growth flags ignore quantities below this level: the splitting solver's
# attainable accuracy for gradient fields is residual^(1/3) on superquadratic
# Hamiltonians (cubically flat energy near a vanishing optimal gradient), so
# second-order quantities of nominally-zero fields stall around 1e-5.  Real
# signals on the shipped models sit three orders of magnitude above.
ABS_FLOOR = 1e-4


def na(reason: str) -> str:
    return f"NA:{reason}"


def is_na(entry: Entry) -> bool:
    return isinstance(entry, str)


@dataclass
class DiagnosticsReport:
    grid: int
    n_time: int
    gap: float
    res_cont: float
    sob_space: Entry
    sob_second: Entry
    sob_time: Entry
    h1_Jm: Entry
    h1_Jstar: Entry
    trans_slope: Entry
    phi_plus_eta: Entry
    phi_plus_gamma: Entry
    congestion: Entry
    energy_identity: float = 0.0
    residuals: dict | None = None
    failed: bool = False

    def csv_row(self) -> list[str]:
        out = []
        for name in CSV_COLUMNS:
            value = getattr(self, name)
            if is_na(value):
                out.append(value)
            elif name in ("grid", "n_time"):
                out.append(str(int(value)))
            else:
                out.append(repr(float(value)))
        return out


def _slab_weight(grid: GridSpec) -> float:
    return grid.cell_volume * (grid.ht if not grid.stationary else 1.0)


def _lp_norm(values: np.ndarray, weight: float, p: float) -> float:
    return float((np.sum(np.abs(values) ** p) * weight) ** (1.0 / p))


def sobolev_space(model: ModelOnGrid, m: ScalarField) -> float:
    """|| m^(q/2-1) grad m ||_2 computed as (2/q) || grad(m^(q/2)) ||_2.

    The power-first form stays finite at vacuum cells for every q > 1,
    which is why it is the primary evaluation.
    """
    grid = m.grid
    u = energies.slab_density(m) ** (model.q / 2.0)
    gu = grad_array(u, grid)
    return (2.0 / model.q) * np.sqrt(float(np.sum(gu * gu)) * _slab_weight(grid))


def sobolev_space_direct(model: ModelOnGrid, m: ScalarField) -> float:
    """Same quantity with face-averaged density powers times grad m."""
    grid = m.grid
    mv = energies.slab_density(m)
    gm = grad_array(mv, grid)
    total = 0.0
    for a in range(grid.dim):
        ax = mv.ndim - grid.dim + a
        m_face = 0.5 * (mv + np.roll(mv, -1, axis=ax))
        vals = m_face ** (model.q / 2.0 - 1.0) * gm[:, a]
        total += float(np.sum(vals * vals))
    return np.sqrt(total * _slab_weight(grid))


def _dj1_field(model: ModelOnGrid, phi: ScalarField) -> np.ndarray:
    """Difference matrix of j1 applied to the potential gradient.

    Shape (slabs, dim, dim, *space): component (c, d) is the forward
    difference along axis d of the face field j1(grad phi)_c.
    """
    grid = phi.grid
    g = energies.slab_gradient(phi, grid)
    j1g = kernel.j1(model.r, g, axis=1)
    rows = [grad_array(j1g[:, c], grid) for c in range(grid.dim)]
    return np.stack(rows, axis=1)


def sobolev_second(model: ModelOnGrid, m: ScalarField, phi: ScalarField) -> float:
    """|| m^(1/2) D(j1(grad phi)) ||_2 with the difference matrix above."""
    grid = phi.grid
    dj = _dj1_field(model, phi)
    frob2 = np.sum(dj * dj, axis=(1, 2))
    m_slab = np.maximum(energies.slab_density(m), 0.0)
    return np.sqrt(float(np.sum(m_slab * frob2)) * _slab_weight(grid))


def sobolev_second_quadratic(model: ModelOnGrid, m: ScalarField, phi: ScalarField) -> float:
    """Dedicated r = 2 path: || m^(1/2) D^2 phi ||_2, no coercivity map call."""
    grid = phi.grid
    g = energies.slab_gradient(phi, grid)
    rows = [grad_array(g[:, c], grid) for c in range(grid.dim)]
    hess = np.stack(rows, axis=1)
    frob2 = np.sum(hess * hess, axis=(1, 2))
    m_slab = np.maximum(energies.slab_density(m), 0.0)
    return np.sqrt(float(np.sum(m_slab * frob2)) * _slab_weight(grid))


def sobolev_time(model: ModelOnGrid, m: ScalarField) -> Entry:
    """|| d_t (m^(q/2)) ||_1; only the quadratic-growth case supports it."""
    if model.r != 2.0:
        return na("requires r=2")
    grid = m.grid
    if grid.stationary:
        return na("stationary state")
    u = m.values ** (model.q / 2.0)
    du = np.diff(u, axis=0) / grid.ht
    return float(np.sum(np.abs(du)) * grid.ht * grid.cell_volume)


def stationary_H1(model: ModelOnGrid, lam: float, phi: ScalarField, m: ScalarField):
    """H^1 seminorms of J(m) and J*(H(., grad phi) + lam)."""
    grid = phi.grid
    Jm = kernel.J_map(model.q, m.values)
    gJ = grad_array(Jm, grid)
    h1_Jm = np.sqrt(float(np.sum(gJ * gJ)) * grid.cell_volume)
    level = lam + model.hamiltonian(energies.slab_gradient(phi, grid))
    Js = kernel.Jstar_map(model.q, level)
    gJs = grad_array(Js, grid)
    h1_Js = np.sqrt(float(np.sum(gJs * gJs)) * grid.cell_volume)
    return h1_Jm, h1_Js


def phi_plus_bounds(model: ModelOnGrid, phi: ScalarField):
    """Norms of the positive part of phi at the dual growth exponents.

    eta = d(r(p-1)+1)/(d - r(p-1)) and gamma = r p (1+d)/(d - r(p-1))
    when p < 1 + d/r; both are +inf (max norms) when p > 1 + d/r; the
    borderline is reported as not applicable.
    """
    d, r, p = model.dim, model.r, model.p
    margin = p - (1.0 + d / r)
    pos = np.maximum(phi.values, 0.0)
    grid = phi.grid
    if abs(margin) < 1e-12:
        reason = na("borderline exponent p = 1 + d/r")
        return reason, reason, None, None
    if margin > 0.0:
        eta = gamma = np.inf
        n_eta = float(pos.max())
        n_gamma = float(pos.max())
        return n_eta, n_gamma, eta, gamma
    denom = d - r * (p - 1.0)
    eta = d * (r * (p - 1.0) + 1.0) / denom
    gamma = r * p * (1.0 + d) / denom
    sup_Leta = float(np.max((pos**eta).sum(axis=tuple(range(1, pos.ndim))) * grid.cell_volume) ** (1.0 / eta))
    if grid.stationary:
        n_gamma = _lp_norm(pos, grid.cell_volume, gamma)
    else:
        n_gamma = _lp_norm(pos[1:], grid.ht * grid.cell_volume, gamma)
    return sup_Leta, n_gamma, eta, gamma


def congestion_norm(model: ModelOnGrid, primal: PrimalState, dual: DualState, s: float = 1.0) -> Entry:
    """|| D(j1(grad phi)) ||_{2s/(s+1)} when m^{-1} is s-integrable."""
    m_slab = energies.slab_density(primal.m)
    if m_slab.min() <= 1e-10:
        return na("m^-1 not integrable: vacuum cells present")
    dj = _dj1_field(model, dual.phi)
    frob = np.sqrt(np.sum(dj * dj, axis=(1, 2)))
    expo = 2.0 * s / (s + 1.0)
    return _lp_norm(frob, _slab_weight(primal.grid), expo)


# ---------------------------------------------------------------------------
# translation probe


@dataclass
class TranslationProbe:
    mode: str                      # "stationary" | "time-dependent"
    shifts: list[int]
    axis: int
    deltas_plus: list[float]
    deltas_minus: list[float]
    slope: Entry
    rearrangement_error: float
    dual_deltas_plus: list = None   # stationary only: translated-potential energies
    dual_deltas_minus: list = None

    @property
    def symmetric_means(self):
        return [0.5 * (p + m) for p, m in zip(self.deltas_plus, self.deltas_minus)]


def _fit_loglog(hs, values) -> Entry:
    vals = np.asarray(values, dtype=float)
    scale = 1.0 + float(np.max(np.abs(vals), initial=0.0))
    if np.all(np.abs(vals) <= 1e-14 * scale):
        return na("translation-invariant data")
    if np.any(vals <= 0.0):
        return na("nonpositive energy difference")
    coeffs = np.polyfit(np.log(np.asarray(hs, dtype=float)), np.log(vals), 1)
    return float(coeffs[0])


def translation_probe(model: ModelOnGrid, primal: PrimalState, dual: DualState,
                      shifts=(1, 2, 4, 8), axis: int = 0) -> TranslationProbe:
    """Quadratic-response probe behind the duality regularity argument.

    Stationary: lattice translates of the optimizers are feasible
    competitors, so their energy increase is nonnegative and second order
    in the shift (first-order terms vanish at the discrete optimum).  The
    fitted log-log slope uses the transport-side energy of the translated
    density/flux pair: for the power Hamiltonians shipped here the optimal
    potential is constant, which makes the translated-potential energy
    differences vanish identically; those are still evaluated and reported
    alongside.

    Time-dependent: checks the exact rearrangement identity (translating
    data and state together leaves the transport energy unchanged) and
    fits the centered second difference of the data-translated energies
    on the untranslated state against the squared shift.
    """
    grid = primal.grid
    shifts = [int(k) for k in shifts]
    if any(k < 1 for k in shifts):
        raise ValueError("translation shifts must be at least one lattice cell")
    if max(shifts) * 2 >= grid.n_space:
        raise ValueError("largest shift does not fit on the grid")
    hs = [k * grid.hx for k in shifts]

    def dvec(k):
        d = [0] * grid.dim
        d[axis] = k
        return d

    if grid.stationary:
        base_a = energies.eval_A_stat(model, dual.lam, dual.phi)
        base_b = energies.eval_B_stat(model, primal.m, primal.w).value
        a_plus, a_minus, b_plus, b_minus = [], [], [], []
        for k in shifts:
            # f_h(x) = f(x - h): shift the stored samples by -k cells
            for sign, a_out, b_out in ((-k, a_plus, b_plus), (+k, a_minus, b_minus)):
                ph = translate(dual.phi, dvec(sign))
                a_out.append(energies.eval_A_stat(model, dual.lam, ph) - base_a)
                mh = translate(primal.m, dvec(sign))
                wh = translate(primal.w, dvec(sign))
                b_out.append(energies.eval_B_stat(model, mh, wh).value - base_b)
        slope = _fit_loglog(hs, [0.5 * (p + m) for p, m in zip(b_plus, b_minus)])
        tm = model.translate(dvec(1))
        b1 = energies.eval_B_stat(
            tm, translate(primal.m, dvec(1)), translate(primal.w, dvec(1))
        ).value
        rearr = abs(b1 - base_b)
        return TranslationProbe("stationary", shifts, axis, b_plus, b_minus, slope,
                                rearr, dual_deltas_plus=a_plus, dual_deltas_minus=a_minus)

    base = energies.eval_B_td(model, primal).value
    tm1 = model.translate(dvec(1))
    shifted = PrimalState(translate(primal.m, dvec(1)), translate(primal.w, dvec(1)))
    rearr = abs(energies.eval_B_td(tm1, shifted).value - base)

    plus, minus = [], []
    for k in shifts:
        ep = energies.eval_B_td(model.translate(dvec(+k)), primal).value
        em = energies.eval_B_td(model.translate(dvec(-k)), primal).value
        plus.append(ep - base)
        minus.append(em - base)
    second = [p + m for p, m in zip(plus, minus)]
    slope = _fit_loglog(hs, second)
    return TranslationProbe("time-dependent", shifts, axis, plus, minus, slope, rearr)


# ---------------------------------------------------------------------------
# assembled report and refinement studies


def diagnose(model: ModelOnGrid, primal: PrimalState, dual: DualState,
             congestion_s: float = 1.0, shifts=(1, 2, 4, 8)) -> DiagnosticsReport:
    """All report entries for one converged primal/dual pair."""
    grid = primal.grid
    gap_abs, gap_rel = energies.duality_gap(model, primal, dual)
    feas = energies.feasibility_report(model, primal, dual)

    sob_sp = sobolev_space(model, primal.m)
    sob_2nd = sobolev_second(model, primal.m, dual.phi)
    sob_t = sobolev_time(model, primal.m)

    if grid.stationary:
        h1m, h1s = stationary_H1(model, dual.lam, dual.phi, primal.m)
        h1m_e, h1s_e = float(h1m), float(h1s)
    else:
        h1m_e = na("time-dependent state")
        h1s_e = na("time-dependent state")

    try:
        probe = translation_probe(model, primal, dual, shifts=shifts)
        slope = probe.slope
    except ValueError as exc:
        slope = na(str(exc))

    eta_n, gamma_n, _, _ = phi_plus_bounds(model, dual.phi)
    cong = congestion_norm(model, primal, dual, s=congestion_s)

    return DiagnosticsReport(
        grid=grid.n_space,
        n_time=grid.n_time,
        gap=gap_rel,
        res_cont=feas.continuity,
        sob_space=sob_sp,
        sob_second=sob_2nd,
        sob_time=sob_t,
        h1_Jm=h1m_e,
        h1_Jstar=h1s_e,
        trans_slope=slope,
        phi_plus_eta=eta_n,
        phi_plus_gamma=gamma_n,
        congestion=cong,
        energy_identity=energies.energy_identity_residual(model, primal, dual),
        residuals=feas.as_dict(),
    )


@dataclass
class GrowthFlag:
    quantity: str
    coarse: int
    fine: int
    ratio: float


@dataclass
class StudyResult:
    rows: list
    flags: list

    @property
    def clean(self) -> bool:
        return not self.flags and not any(r.failed for r in self.rows)


GROWTH_QUANTITIES = ("sob_space", "sob_second", "sob_time", "h1_Jm", "h1_Jstar")


def refinement_study(spec: ModelSpec, grids, opts: solver.SolveOptions,
                     growth_factor: float = 1.10, congestion_s: float = 1.0,
                     shifts=(1, 2, 4, 8), abs_floor: float = ABS_FLOOR) -> StudyResult:
    """Solve on a dyadic ladder and flag Sobolev quantities that grow.

    Boundedness of the discrete quantities under refinement is the
    checkable shadow of the uniform estimates; any entry growing by more
    than `growth_factor` between consecutive grids is flagged.  Solver
    failures are recorded on their row and skipped by the comparison.
    """
    grids = list(grids)
    if len(grids) < 3:
        raise ValueError("a refinement study needs at least three grids")
    rows = []
    for grid in grids:
        model = spec.on_grid(grid)
        try:
            if grid.stationary:
                lam, primal, dual, rep = solver.solve_stationary(model, grid, opts)
            else:
                primal, dual, rep = solver.solve_time_dependent(model, grid, opts)
            row = diagnose(model, primal, dual, congestion_s=congestion_s, shifts=shifts)
        except solver.NonConvergence as exc:
            row = diagnose(model, exc.primal, exc.dual,
                           congestion_s=congestion_s, shifts=shifts)
            row.failed = True
        rows.append(row)

    flags = []
    for prev, cur in zip(rows, rows[1:]):
        if prev.failed or cur.failed:
            continue
        for name in GROWTH_QUANTITIES:
            a, b = getattr(prev, name), getattr(cur, name)
            if is_na(a) or is_na(b):
                continue
            if b <= abs_floor:
                continue
            ratio = float(b / max(a, abs_floor))
            if ratio > growth_factor:
                flags.append(GrowthFlag(name, prev.grid, cur.grid, ratio))
    return StudyResult(rows=rows, flags=flags)


def write_report_csv(path, rows) -> None:
    """One CSV per study, fixed schema, missing entries as NA:<reason>."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.csv_row())
