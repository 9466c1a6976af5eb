"""Standalone property suite for the convex kernel.

Each check is deterministic (fixed seeds) and returns a CheckResult; the
command line runs the whole battery and reports one line per check.  The
tests exercise the same functions through finer oracles; this suite is the
quick self-contained certification run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernel
from .model import ModelOnGrid


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _sample_vectors(rng, n, dim, scale=3.0):
    return scale * rng.standard_normal((n, dim))


def fenchel_young(model: ModelOnGrid, n=2000) -> CheckResult:
    rng = np.random.default_rng(11)
    dim = model.dim
    c2 = rng.uniform(*model.c2_range, size=n)
    xi = _sample_vectors(rng, n, dim)
    zeta = _sample_vectors(rng, n, dim)
    gap = kernel.young_gap_H(model.r, c2, xi, zeta)
    worst = float(gap.min())
    # equality case at conjugate pairs
    zeta_c = kernel.d_xi_hamiltonian(model.r, c2, xi)
    eq_gap = kernel.young_gap_H(model.r, c2, xi, zeta_c)
    eq_worst = float(np.max(np.abs(eq_gap)))
    ok = worst >= -1e-10 and eq_worst <= 1e-8 * (1.0 + np.abs(eq_gap).max())
    return CheckResult(
        "fenchel-young", ok, f"min gap {worst:.2e}, conjugate-pair gap {eq_worst:.2e}"
    )


def conjugate_round_trip(model: ModelOnGrid, n=50) -> CheckResult:
    """Brute-force conjugate of H* must reproduce H."""
    rng = np.random.default_rng(12)
    dim = model.dim
    worst = 0.0
    lo, hi = model.c2_range
    for _ in range(n):
        c2 = rng.uniform(lo, hi)
        xi = rng.uniform(-1.5, 1.5, size=dim)
        smax = float(np.linalg.norm(xi))
        zmax = hi * max(2.0, (2.0 * max(smax, 1.0)) ** (model.r - 1.0)) * 2.0
        if dim == 1:
            zeta = np.linspace(-zmax, zmax, 40001)[:, None]
        else:
            grid = np.linspace(-zmax, zmax, 301)
            zeta = np.stack(np.meshgrid(grid, grid, indexing="ij"), axis=-1).reshape(-1, 2)
        vals = zeta @ xi - kernel.hamiltonian_conjugate(model.r, c2, zeta)
        hnum = float(vals.max())
        href = float(kernel.hamiltonian(model.r, c2, xi))
        worst = max(worst, abs(hnum - href))
    return CheckResult("conjugate-round-trip", worst < 1e-4, f"max |H_num - H| = {worst:.2e}")


def growth_sandwich(model: ModelOnGrid, n=4000) -> CheckResult:
    """Power bounds with C = max(c)*s or 1/(min(c)*s), additive slack C."""
    rng = np.random.default_rng(13)
    dim = model.dim
    r, q = model.r, model.q
    c2lo, c2hi = model.c2_range
    CH = max(c2hi * r, 1.0 / (c2lo * r))
    xi = _sample_vectors(rng, n, dim, scale=5.0)
    c2 = rng.uniform(c2lo, c2hi, size=n)
    H = kernel.hamiltonian(r, c2, xi)
    mags = np.linalg.norm(xi, axis=-1)
    lo_ok = np.all(H >= mags**r / (r * CH) - CH - 1e-12)
    hi_ok = np.all(H <= CH / r * mags**r + CH + 1e-12)

    c1lo, c1hi = model.c1_range
    CF = max(c1hi * q, 1.0 / (c1lo * q))
    m = rng.uniform(1.0, 8.0, size=n)
    c1 = rng.uniform(c1lo, c1hi, size=n)
    F = kernel.antiderivative_F(q, c1, m)
    flo_ok = np.all(F >= m**q / (q * CF) - CF - 1e-12)
    fhi_ok = np.all(F <= CF / q * m**q + CF + 1e-12)
    ok = bool(lo_ok and hi_ok and flo_ok and fhi_ok)
    return CheckResult("growth-sandwich", ok, f"H bounds {lo_ok}/{hi_ok}, F bounds {flo_ok}/{fhi_ok}")


def strong_monotonicity(model: ModelOnGrid, maps: kernel.CoercivityMaps, n=4000) -> CheckResult:
    """(f(m1) - f(m2))(m1 - m2) >= c0 min(m1, m2)^(q-2) |m1 - m2|^2.

    For q < 2 the vanishing-density pairs fall back to f(x,m) m >= c0 m^q;
    elsewhere the minimum power is evaluated only on positive densities.
    """
    rng = np.random.default_rng(14)
    q = model.q
    c0 = maps.c0_F
    c1 = rng.uniform(*model.c1_range, size=n)
    m1 = rng.uniform(0.0, 5.0, size=n)
    m1[: n // 10] = 0.0  # make sure the vanishing-density branch is hit
    m2 = rng.uniform(0.0, 5.0, size=n)
    diff = (kernel.coupling(q, c1, m1) - kernel.coupling(q, c1, m2)) * (m1 - m2)
    lo = np.minimum(m1, m2)
    fallback = (lo <= 1e-12) & (q < 2.0)
    main = ~fallback & (np.abs(m1 - m2) > 0.0)
    with np.errstate(divide="ignore"):
        # min of the powers: for q < 2 this is the power of the larger density
        power = np.minimum(m1[main] ** (q - 2.0), m2[main] ** (q - 2.0))
    rhs = c0 * power * (m1[main] - m2[main]) ** 2
    main_ok = np.all(diff[main] >= rhs - 1e-10)
    mf = np.maximum(m1, m2)[fallback]
    cf = c1[fallback]
    fb_ok = np.all(kernel.coupling(q, cf, mf) * mf >= c0 * mf**q - 1e-10)
    ok = bool(main_ok and fb_ok)
    return CheckResult("strong-monotonicity", ok, f"pairs {n}, fallback {int(fallback.sum())}")


def perspective_homogeneity(model: ModelOnGrid, n=2000) -> CheckResult:
    rng = np.random.default_rng(15)
    dim = model.dim
    c2 = rng.uniform(*model.c2_range, size=n)
    m = rng.uniform(0.05, 4.0, size=n)
    w = _sample_vectors(rng, n, dim)
    lam = rng.uniform(0.1, 10.0, size=n)
    v1 = lam * kernel.perspective(model.r, c2, m, w)
    v2 = kernel.perspective(model.r, c2, lam * m, lam[:, None] * w)
    err = float(np.max(np.abs(v1 - v2) / (1.0 + np.abs(v1))))
    return CheckResult("perspective-homogeneity", err <= 1e-10, f"max rel err {err:.2e}")


def prox_oracle_spot(model: ModelOnGrid, n=20) -> CheckResult:
    """Compare the prox against a refined brute-force grid minimizer."""
    from .oracles import prox_objective, prox_oracle_2d

    rng = np.random.default_rng(16)
    worst_pt = 0.0
    for _ in range(n):
        c1 = rng.uniform(*model.c1_range)
        c2 = rng.uniform(*model.c2_range)
        tau = rng.uniform(0.2, 3.0)
        m_hat = rng.uniform(-1.0, 3.0)
        s_hat = rng.uniform(-2.5, 2.5)
        w_hat = np.zeros(model.dim)
        w_hat[0] = s_hat
        m, w = kernel.prox_perspective(model.r, model.q, c1, c2,
                                       np.array(m_hat), w_hat, tau)
        mo, so = prox_oracle_2d(model.r, model.q, c1, c2, m_hat, s_hat, tau)
        err = max(abs(float(m) - mo), abs(float(w[0]) - so))
        worst_pt = max(worst_pt, err)
    return CheckResult("prox-vs-oracle", worst_pt <= 1e-5, f"max point err {worst_pt:.2e}")


def coercivity(model: ModelOnGrid, maps: kernel.CoercivityMaps, samples=100000) -> CheckResult:
    rep = kernel.verify_coercivity(model, maps, samples)
    detail = (
        f"min H ratio {rep.min_ratio_H:.4f} vs c0 {rep.c0_H:.4f}; "
        f"min F ratio {rep.min_ratio_F:.4f} vs c0 {rep.c0_F:.4f}"
    )
    return CheckResult("coercivity-sampling", rep.passed, detail)


def run_kernel_checks(model: ModelOnGrid, fast: bool = False):
    maps = model.coercivity_maps()
    results = [
        fenchel_young(model),
        conjugate_round_trip(model, n=10 if fast else 50),
        growth_sandwich(model),
        strong_monotonicity(model, maps),
        perspective_homogeneity(model),
        prox_oracle_spot(model, n=5 if fast else 20),
        coercivity(model, maps, samples=20000 if fast else 100000),
    ]
    return results
