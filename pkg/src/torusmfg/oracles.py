"""Brute-force oracles: grid suprema and grid minimizers.

These deliberately share no code with the closed forms and Newton solvers
they certify.  Everything is a dense evaluation over explicit grids with
staged refinement; the final pitch is fine enough to localize minimizers
to 1e-6.
"""

from __future__ import annotations

import numpy as np

from . import kernel


def conjugate_on_grid(values_fn, points: np.ndarray, slope: np.ndarray) -> float:
    """sup over the grid of <slope, p> - values_fn(p); points (N, d)."""
    vals = points @ np.asarray(slope) - values_fn(points)
    return float(vals.max())


def hamiltonian_conjugate_oracle(r, c2, zeta, radius=None, n=200001):
    """1-D brute-force sup of t |zeta| - c2 t^r / r over t >= 0."""
    zmag = float(np.linalg.norm(zeta))
    if radius is None:
        radius = max(2.0, (2.0 * zmag / c2) ** (1.0 / (r - 1.0)) + 2.0)
    t = np.linspace(0.0, radius, n)
    vals = zmag * t - c2 * t**r / r
    return float(vals.max())


def Fstar_oracle(q, c1, a, mmax=None, n=400001):
    """Brute-force sup of a m - F(x, m) over an m >= 0 grid."""
    if mmax is None:
        base = (max(a, 0.0) / c1) ** (1.0 / (q - 1.0)) if a > 0 else 1.0
        mmax = 2.0 * base + 4.0
    m = np.linspace(0.0, mmax, n)
    vals = a * m - c1 * (m**q - 1.0) / q
    return float(vals.max())


def prox_objective(r, q, c1, c2, m_hat, s_hat, tau, m, s):
    """Objective of the joint prox with the flux reduced to one signed scalar."""
    rp = kernel.conjugate_exponent(r)
    kappa = c2 ** (1.0 - rp)
    with np.errstate(divide="ignore", invalid="ignore"):
        persp = kappa * np.abs(s) ** rp * np.where(m > 0, m, np.nan) ** (1.0 - rp) / rp
    persp = np.where(m > 0, persp, np.where(np.abs(s) > 0, np.inf, 0.0))
    F = c1 * (np.where(m >= 0, m, 0.0) ** q - 1.0) / q
    quad = ((m - m_hat) ** 2 + (s - s_hat) ** 2) / (2.0 * tau)
    return persp + F + quad


def prox_oracle_2d(r, q, c1, c2, m_hat, s_hat, tau, stages=5, coarse=501, fine=241):
    """Staged dense-grid minimizer of the prox objective; returns (m, s).

    Stage one scans a wide box; each later stage re-grids a shrinking
    window around the running argmin (four old pitches wide, so curved
    flat valleys cannot walk out of it).  Pure evaluation, no derivatives.
    """
    m_hi = max(4.0, 2.0 * abs(m_hat) + 2.0, abs(s_hat) + 2.0)
    s_hi = max(4.0, 2.0 * abs(s_hat) + 2.0)
    m_grid = np.linspace(0.0, m_hi, coarse)
    s_grid = np.linspace(-s_hi, s_hi, coarse)

    best_m, best_s = 0.0, 0.0
    for stage in range(stages):
        M, S = np.meshgrid(m_grid, s_grid, indexing="ij")
        vals = prox_objective(r, q, c1, c2, m_hat, s_hat, tau, M, S)
        idx = np.unravel_index(np.nanargmin(vals), vals.shape)
        best_m, best_s = float(M[idx]), float(S[idx])
        if stage == stages - 1:
            break
        dm = (m_grid[-1] - m_grid[0]) / (len(m_grid) - 1)
        ds = (s_grid[-1] - s_grid[0]) / (len(s_grid) - 1)
        m_grid = np.linspace(max(best_m - 4 * dm, 0.0), best_m + 4 * dm, fine)
        s_grid = np.linspace(best_s - 4 * ds, best_s + 4 * ds, fine)
    return best_m, best_s


def prox_oracle_3d(r, q, c1, c2, m_hat, w_hat, tau, n=81, stages=3):
    """Full-vector brute force for 2-D fluxes; validates ray collinearity."""
    w_hat = np.asarray(w_hat, dtype=float)
    m_hi = max(3.0, 2.0 * abs(m_hat) + 1.0)
    w_hi = float(np.abs(w_hat).max()) + 2.0
    m_grid = np.linspace(0.0, m_hi, n)
    u_grid = np.linspace(-w_hi, w_hi, n)
    v_grid = np.linspace(-w_hi, w_hi, n)
    best = (0.0, 0.0, 0.0)
    for stage in range(stages):
        M, U, V = np.meshgrid(m_grid, u_grid, v_grid, indexing="ij")
        rp = kernel.conjugate_exponent(r)
        kappa = c2 ** (1.0 - rp)
        wmag = np.sqrt(U**2 + V**2)
        with np.errstate(divide="ignore", invalid="ignore"):
            persp = kappa * wmag**rp * np.where(M > 0, M, np.nan) ** (1.0 - rp) / rp
        persp = np.where(M > 0, persp, np.where(wmag > 0, np.inf, 0.0))
        F = c1 * (M**q - 1.0) / q
        quad = ((M - m_hat) ** 2 + (U - w_hat[0]) ** 2 + (V - w_hat[1]) ** 2) / (2.0 * tau)
        vals = persp + F + quad
        idx = np.unravel_index(np.nanargmin(vals), vals.shape)
        best = (float(M[idx]), float(U[idx]), float(V[idx]))
        if stage == stages - 1:
            break
        dm = m_grid[1] - m_grid[0]
        du = u_grid[1] - u_grid[0]
        m_grid = np.linspace(max(best[0] - 2 * dm, 0.0), best[0] + 2 * dm, n)
        u_grid = np.linspace(best[1] - 2 * du, best[1] + 2 * du, n)
        v_grid = np.linspace(best[2] - 2 * du, best[2] + 2 * du, n)
    return best
