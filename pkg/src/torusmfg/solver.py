"""Augmented-Lagrangian splitting solver for both game formulations.

The solver minimizes the relaxed Hamilton-Jacobi control energy by an
alternating scheme (ALG2 flavour) on the splitting

    (a, b) = (d_t phi, grad phi)          time-dependent
    (l, b) = (lam * 1, grad phi)          stationary

with multipliers sigma.  One iteration:

1.  phi update: a space-time (or space) Poisson solve of the augmented
    quadratic, Dirichlet at the terminal time, natural at t = 0 where the
    initial density enters as a boundary source.
2.  splitting update: cellwise prox of the transport integrand plus
    density cost (kernel.prox_perspective, via the Moreau identity), and
    the coupling level alpha through the scalar prox of F*.
3.  multiplier ascent with step rho; the updated multiplier coincides
    with the prox output, which keeps the density iterate exactly
    nonnegative and provides the warm start of the next prox.

The multipliers are the primal pair: sigma_a = -m (slab densities),
sigma_b = -w.  Reported states are feasibility-projected every iteration:
slab densities renormalized to unit mass and the flux corrected by a
gradient so the discrete transport constraint holds to solver precision.
On that pair A + B >= 0 exactly, so the recorded gap doubles as a
certificate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import energies
from .energies import DualState, PrimalState, FeasibilityReport
from .grid import (
    FluxField,
    GridSpec,
    PoissonSolver,
    ScalarField,
    div_array,
    grad_array,
    load_field,
    save_field,
)
from .model import InfeasibleModel, ModelOnGrid

CHECKPOINT_MANIFEST = "manifest.txt"
RHO_MIN, RHO_MAX = 1e-6, 1e6
INIT_NOISE = 1e-3


@dataclass
class SolveOptions:
    penalty: float = 1.0
    max_iters: int = 20000
    gap_tol: float = 1e-4
    residual_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.penalty <= 0.0:
            raise ValueError("penalty must be > 0")
        if self.gap_tol <= 0.0:
            raise ValueError("gap_tol must be > 0")


@dataclass
class TraceRow:
    iteration: int
    gap_abs: float
    gap_rel: float
    primal_res: float
    dual_res: float
    rho: float


@dataclass
class SolveReport:
    iterations: int
    converged: bool
    gap_abs: float
    gap_rel: float
    primal_res: float
    dual_res: float
    residuals: FeasibilityReport
    optimality_w: float
    complementarity_mean: float
    rho_final: float
    wall_time: float
    trace: list[TraceRow] = field(default_factory=list)
    penalty_changed: bool = False


class NonConvergence(RuntimeError):
    """Raised after max_iters; carries the best iterate seen so far."""

    def __init__(self, message, primal, dual, report):
        super().__init__(message)
        self.primal = primal
        self.dual = dual
        self.report = report


class CheckpointError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# shared iteration machinery


class _State:
    """Persistent iterate: splitting variables, multipliers, penalty."""

    def __init__(self, a, b, sa, sb, rho, iteration=0, lam=0.0):
        self.a = a          # (K, *space) splitting scalar (l field when stationary)
        self.b = b          # (K, dim, *space) splitting gradient
        self.sa = sa        # multiplier of a: -m slab densities (+m stationary)
        self.sb = sb        # multiplier of b: -w
        self.rho = float(rho)
        self.iteration = int(iteration)
        self.lam = float(lam)


def _initial_state(model: ModelOnGrid, grid: GridSpec, opts: SolveOptions) -> _State:
    """Feasible-flavoured start: density m0, zero flux, terminal potential.

    A seeded perturbation of the splitting variables gives distinct seeds
    distinct trajectories; the limit is unique by convexity, which the
    reproducibility tests rely on.
    """
    K = grid.slices("mid")
    stationary = grid.stationary
    alpha0 = model.coupling(model.m0)
    b0 = grad_array(model.phi_T, grid)
    if stationary:
        lam0 = float(np.mean(alpha0 - model.hamiltonian(b0)))
        a0 = np.broadcast_to(lam0, (K,) + grid.space_shape).copy()
        sa = np.broadcast_to(model.m0, (K,) + grid.space_shape).copy()
    else:
        lam0 = 0.0
        a0 = np.broadcast_to(
            model.hamiltonian(b0) - alpha0, (K,) + grid.space_shape
        ).copy()
        sa = np.broadcast_to(-model.m0, (K,) + grid.space_shape).copy()
    b = np.broadcast_to(b0, (K, grid.dim) + grid.space_shape).copy()
    sb = np.zeros_like(b)

    rng = np.random.default_rng(opts.seed)
    a0 = a0 + INIT_NOISE * (1.0 + np.abs(a0).max()) * (2.0 * rng.random(a0.shape) - 1.0)
    b = b + INIT_NOISE * (1.0 + np.abs(b).max()) * (2.0 * rng.random(b.shape) - 1.0)
    return _State(a0, b, sa, sb, opts.penalty, 0, lam0)


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x)))


def _project_states(model, grid, st: _State, phi_nodes, alpha, poisson: PoissonSolver):
    """Exactly feasible primal/dual pair from the raw iterate.

    Primal: slab densities are the prox outputs renormalized to unit mass
    (node 0 carries m0 itself); the flux gains a gradient correction so
    every slab satisfies the discrete transport identity.  Dual: alpha is
    raised where the Hamilton-Jacobi inequality would fail.
    """
    if grid.stationary:
        m_raw = st.sa[0]
        mass = m_raw.sum() * grid.cell_volume
        m_sp = m_raw / mass if mass > 1e-8 else np.full_like(m_raw, 1.0)
        w_raw = -st.sb
        psi = poisson.solve_spatial(div_array(w_raw, grid), mean_tol=np.inf)
        w_sp = w_raw + grad_array(psi, grid)
        m = ScalarField(grid, m_sp[None].copy(), "node")
        w = FluxField(grid, w_sp.copy())
        level = st.lam + model.hamiltonian(grad_array(phi_nodes, grid))
        alpha_f = ScalarField(grid, level, "mid")
        phi_f = ScalarField(grid, phi_nodes.copy(), "node")
        return PrimalState(m, w), DualState(phi_f, alpha_f, st.lam)

    K = grid.n_time
    m_nodes = np.empty((K + 1,) + grid.space_shape)
    m_nodes[0] = model.m0
    slabs = -st.sa
    masses = slabs.sum(axis=tuple(range(1, slabs.ndim))) * grid.cell_volume
    masses = np.where(masses > 1e-8, masses, 1.0)
    m_nodes[1:] = slabs / masses.reshape((K,) + (1,) * grid.dim)

    w_raw = -st.sb
    g = -np.diff(m_nodes, axis=0) / grid.ht
    defect = div_array(w_raw, grid) - g
    psi = poisson.solve_spatial(defect, mean_tol=np.inf)
    w_proj = w_raw + grad_array(psi, grid)

    m = ScalarField(grid, m_nodes, "node")
    w = FluxField(grid, w_proj)
    phi_f = ScalarField(grid, phi_nodes.copy(), "node")
    dual = energies.project_dual_feasible(
        model, DualState(phi_f, ScalarField(grid, alpha.copy(), "mid"), 0.0)
    )
    return PrimalState(m, w), dual


def _iterate(model, grid, st: _State, poisson: PoissonSolver):
    """One full splitting iteration; returns (phi, alpha, primal_res, dual_res)."""
    rho = st.rho
    stationary = grid.stationary
    ht = grid.ht

    a_t = st.a - st.sa / rho
    b_t = st.b - st.sb / rho

    if stationary:
        # scalar multiplier of the mass constraint, then the potential
        st.lam = float(np.sum(a_t[0]) * grid.cell_volume) + 1.0 / rho
        rhs = -div_array(b_t, grid)[0]
        phi_sp = poisson.solve_spatial(rhs, mean_tol=np.inf)
        phi_nodes = phi_sp[None]
        lam_field = np.broadcast_to(st.lam, st.a.shape)
        za = lam_field + st.sa / rho
        zb = grad_array(phi_nodes, grid) + st.sb / rho
        m_hat = rho * za
    else:
        K = grid.n_time
        rhs = np.empty_like(a_t)
        rhs[0] = -a_t[0] / ht + model.m0 / (rho * ht)
        rhs[1:] = (a_t[:-1] - a_t[1:]) / ht
        rhs -= div_array(b_t, grid)
        phi_nodes = poisson.solve_space_time(rhs, model.phi_T)
        za = np.diff(phi_nodes, axis=0) / ht + st.sa / rho
        zb = grad_array(phi_nodes[:-1], grid) + st.sb / rho
        m_hat = -rho * za

    w_hat = -rho * zb
    warm = st.sa if stationary else -st.sa
    m_new, w_new = model.prox_perspective(m_hat, w_hat, rho, m_init=warm)

    a_prev, b_prev = st.a, st.b
    if stationary:
        st.a = za - m_new / rho
        st.b = zb + w_new / rho
        st.sa = m_new
        st.sb = -w_new
        alpha = st.a + model.hamiltonian(st.b)
    else:
        st.a = za + m_new / rho
        st.b = zb + w_new / rho
        st.sa = -m_new
        st.sb = -w_new
        # coupling level through the scalar F* prox (equals -a + H(x, b))
        alpha = model.prox_Fstar(model.hamiltonian(st.b) - za, rho)

    lam_part = (np.broadcast_to(st.lam, st.a.shape) if stationary
                else np.diff(phi_nodes, axis=0) / ht)
    grad_part = grad_array(phi_nodes if stationary else phi_nodes[:-1], grid)
    ra = lam_part - st.a
    rb = grad_part - st.b
    primal = float(
        np.sqrt(_rms(ra) ** 2 + _rms(rb) ** 2)
        / (1.0 + np.sqrt(_rms(st.a) ** 2 + _rms(st.b) ** 2))
    )
    dual = float(
        rho * np.sqrt(_rms(st.a - a_prev) ** 2 + _rms(st.b - b_prev) ** 2)
        / (1.0 + np.sqrt(_rms(st.sa) ** 2 + _rms(st.sb) ** 2))
    )
    return phi_nodes, alpha, primal, dual


def _optimality_residuals(model, grid, primal, dual):
    """Residuals of the pointwise optimality system on the returned states."""
    g = energies.slab_gradient(dual.phi, grid)
    m_slab = energies.slab_density(primal.m)
    w_opt = -np.expand_dims(m_slab, 1) * model.d_xi_hamiltonian(g)
    opt_w = float(np.max(np.abs(primal.w.values - w_opt)))
    f_of_m = model.coupling(np.maximum(m_slab, 0.0))
    mask = m_slab > 1e-6
    if mask.any():
        comp = float(np.mean(np.abs(dual.alpha.values - f_of_m)[mask]))
    else:
        comp = 0.0
    return opt_w, comp


def _run(model, grid, opts, st: _State, checkpoint_dir=None, checkpoint_every=0,
         penalty_changed=False):
    poisson = PoissonSolver(grid)
    t0 = time.perf_counter()
    trace = []
    best = None

    if st.iteration >= opts.max_iters:
        raise ValueError("iteration budget already exhausted")
    converged = False
    phi = alpha = None
    primal_res = dual_res = np.inf
    primal = dual = None
    gap_abs = gap_rel = np.inf
    while st.iteration < opts.max_iters:
        phi, alpha, primal_res, dual_res = _iterate(model, grid, st, poisson)
        st.iteration += 1

        primal, dual = _project_states(model, grid, st, phi, alpha, poisson)
        gap_abs, gap_rel = energies.duality_gap(model, primal, dual)
        trace.append(TraceRow(st.iteration, gap_abs, gap_rel, primal_res, dual_res, st.rho))

        if best is None or gap_rel < best[0]:
            best = (gap_rel, primal, dual)

        if checkpoint_dir and checkpoint_every and st.iteration % checkpoint_every == 0:
            write_checkpoint(checkpoint_dir, model, grid, st, opts.seed, opts.penalty,
                             phi=phi, alpha=alpha)

        if (
            gap_rel <= opts.gap_tol
            and primal_res <= opts.residual_tol
            and dual_res <= opts.residual_tol
        ):
            converged = True
            break

        # residual balancing, factor-of-two steps within fixed bounds
        if primal_res > 10.0 * dual_res and st.rho < RHO_MAX:
            st.rho *= 2.0
        elif dual_res > 10.0 * primal_res and st.rho > RHO_MIN:
            st.rho *= 0.5

    wall = time.perf_counter() - t0
    feas = energies.feasibility_report(model, primal, dual)
    opt_w, comp_mean = _optimality_residuals(model, grid, primal, dual)
    report = SolveReport(
        iterations=st.iteration,
        converged=converged,
        gap_abs=gap_abs,
        gap_rel=gap_rel,
        primal_res=primal_res,
        dual_res=dual_res,
        residuals=feas,
        optimality_w=opt_w,
        complementarity_mean=comp_mean,
        rho_final=st.rho,
        wall_time=wall,
        trace=trace,
        penalty_changed=penalty_changed,
    )
    if checkpoint_dir:
        write_checkpoint(checkpoint_dir, model, grid, st, opts.seed, opts.penalty,
                         phi=phi, alpha=alpha)
    if not converged:
        _, bp, bd = best
        raise NonConvergence(
            f"no convergence after {st.iteration} iterations "
            f"(gap {gap_rel:.3e}, residuals {primal_res:.3e}/{dual_res:.3e})",
            bp, bd, report,
        )
    return primal, dual, report


def solve_time_dependent(model: ModelOnGrid, grid: GridSpec, opts: SolveOptions,
                         checkpoint_dir=None, checkpoint_every=0):
    """Minimize both functionals of the finite-horizon game.

    Returns (PrimalState, DualState, SolveReport).  The states are the
    feasibility-projected pair: unit mass at every node, exact initial
    density, nonnegative density, transport residual at solver precision.
    """
    if grid.stationary:
        raise ValueError("time-dependent solve needs n_time >= 1")
    if model.grid != grid:
        raise InfeasibleModel("model was sampled on a different grid")
    st = _initial_state(model, grid, opts)
    return _run(model, grid, opts, st, checkpoint_dir, checkpoint_every)


def solve_stationary(model: ModelOnGrid, grid: GridSpec, opts: SolveOptions,
                     checkpoint_dir=None, checkpoint_every=0):
    """Minimize both ergodic functionals; returns (lam, primal, dual, report)."""
    if not grid.stationary:
        raise ValueError("stationary solve needs n_time == 0")
    if model.grid != grid:
        raise InfeasibleModel("model was sampled on a different grid")
    st = _initial_state(model, grid, opts)
    primal, dual, report = _run(model, grid, opts, st, checkpoint_dir, checkpoint_every)
    return dual.lam, primal, dual, report


# ---------------------------------------------------------------------------
# checkpointing


def write_checkpoint(path, model: ModelOnGrid, grid: GridSpec, st: _State,
                     seed: int, penalty_initial: float,
                     phi=None, alpha=None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    kind = "stat" if grid.stationary else "td"
    manifest = {
        "format": "torusmfg-checkpoint-1",
        "kind": kind,
        "iteration": st.iteration,
        "rho": repr(st.rho),
        "lambda": repr(st.lam),
        "seed": seed,
        "penalty_initial": repr(penalty_initial),
        "model_hash": model.content_hash(),
        "r": repr(model.r),
        "q": repr(model.q),
        "dim": grid.dim,
        "T": repr(model.T),
        "n_space": grid.n_space,
        "n_time": grid.n_time,
    }
    with open(path / CHECKPOINT_MANIFEST, "w") as fh:
        for k, v in manifest.items():
            fh.write(f"{k} = {v}\n")
    np.savez(
        path / "model.npz",
        c1=model.c1, c2=model.c2, m0=model.m0, phi_T=model.phi_T,
    )
    fields = {"a": (st.a, "mid"), "sa": (st.sa, "mid")}
    # phi/alpha are derived quantities; stored so `diagnose` can rebuild
    # the reported states without advancing the iterate
    if phi is not None:
        fields["phi"] = (phi, "node")
    if alpha is not None:
        fields["alpha"] = (alpha, "mid")
    for comp in range(grid.dim):
        fields[f"b{comp}"] = (st.b[:, comp], "mid")
        fields[f"sb{comp}"] = (st.sb[:, comp], "mid")
    for name, (arr, stag) in fields.items():
        with open(path / f"{name}.mfgf", "wb") as fh:
            save_field(fh, arr, grid, stag)


def read_manifest(path) -> dict:
    manifest = {}
    with open(Path(path) / CHECKPOINT_MANIFEST) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition(" = ")
            manifest[key] = value
    if manifest.get("format") != "torusmfg-checkpoint-1":
        raise CheckpointError(f"unrecognized checkpoint at {path}")
    return manifest


def load_checkpoint(path):
    """Rebuild (model, grid, state, manifest) from a checkpoint directory."""
    path = Path(path)
    manifest = read_manifest(path)
    dim = int(manifest["dim"])
    grid = GridSpec(
        dim=dim,
        n_space=int(manifest["n_space"]),
        n_time=int(manifest["n_time"]),
        T=float(manifest["T"]) if int(manifest["n_time"]) else 0.0,
    )
    data = np.load(path / "model.npz")
    model = ModelOnGrid(
        float(manifest["r"]), float(manifest["q"]), dim, float(manifest["T"]),
        data["c1"], data["c2"], data["m0"], data["phi_T"], grid,
    )
    if model.content_hash() != manifest["model_hash"]:
        raise CheckpointError("model data does not match its recorded hash")

    def read(name):
        with open(path / f"{name}.mfgf", "rb") as fh:
            values, _ = load_field(fh, grid)
        return values

    a = read("a")
    sa = read("sa")
    K = grid.slices("mid")
    b = np.empty((K, grid.dim) + grid.space_shape)
    sb = np.empty_like(b)
    for comp in range(grid.dim):
        b[:, comp] = read(f"b{comp}")
        sb[:, comp] = read(f"sb{comp}")
    st = _State(
        a, b, sa, sb,
        rho=float(manifest["rho"]),
        iteration=int(manifest["iteration"]),
        lam=float(manifest["lambda"]),
    )
    return model, grid, st, manifest


def resume(checkpoint_path, opts: SolveOptions, checkpoint_dir=None, checkpoint_every=0):
    """Continue a checkpointed solve up to opts.max_iters total iterations.

    With an unchanged penalty the continued trajectory is bitwise the one
    an uninterrupted run would have produced.  A changed penalty is
    permitted and flagged in the report.
    """
    model, grid, st, manifest = load_checkpoint(checkpoint_path)
    penalty_changed = False
    if opts.penalty != float(manifest["penalty_initial"]):
        st.rho = opts.penalty
        penalty_changed = True
    if st.iteration >= opts.max_iters:
        raise CheckpointError(
            f"checkpoint already at iteration {st.iteration} >= max_iters {opts.max_iters}"
        )
    result = _run(model, grid, opts, st, checkpoint_dir, checkpoint_every,
                  penalty_changed=penalty_changed)
    if grid.stationary:
        primal, dual, report = result
        return dual.lam, primal, dual, report
    return result
