"""Scalar convex analysis for the power-law model class.

All quantities are derived from the pair of integrands

    H(x, xi)  = c2(x) |xi|^r / r                    (control cost)
    f(x, m)   = c1(x) m^(q-1)                       (local coupling)

with r, q > 1 and strictly positive coefficient fields.  The 1/r
normalization gives closed conjugates:

    H*(x, zeta) = c2(x)^(1-r') |zeta|^(r') / r',    r' = r/(r-1)
    F(x, m)     = c1(x) (m^q - 1) / q               (antiderivative, F(x,1)=0)
    F*(x, a)    = c1(x)^(1-p) max(a,0)^p / p + c1(x)/q,   p = q/(q-1)

The additive c1/q constant in F* is kept exactly; dropping it would shift
the duality gap.  Functions are vectorized over numpy arrays and broadcast
coefficient values against point values; vectors carry their components on
a dedicated axis (axis -1-dim by convention of the callers, here simply an
explicit `axis` argument).

Proximal maps reduce to safeguarded scalar Newton iterations (tolerance
1e-12 on the residual, cap 200) applied elementwise on arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

NEWTON_TOL = 1e-12
NEWTON_CAP = 200


class ProxConvergenceError(RuntimeError):
    """A safeguarded root-find exhausted its iteration cap."""


def conjugate_exponent(s: float) -> float:
    return s / (s - 1.0)


def _mag(vec: np.ndarray, axis: int) -> np.ndarray:
    return np.sqrt(np.sum(vec * vec, axis=axis))


# ---------------------------------------------------------------------------
# Hamiltonian side


def hamiltonian(r: float, c2, xi: np.ndarray, axis: int = -1) -> np.ndarray:
    """H(x, xi) = c2 |xi|^r / r."""
    return c2 * _mag(xi, axis) ** r / r


def d_xi_hamiltonian(r: float, c2, xi: np.ndarray, axis: int = -1) -> np.ndarray:
    """Gradient c2 |xi|^(r-2) xi, set to 0 at xi = 0 (relevant for r < 2)."""
    mag = _mag(xi, axis)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mag > 0.0, mag ** (r - 2.0), 0.0)
    return np.expand_dims(np.asarray(c2 * scale), axis) * xi


def hamiltonian_conjugate(r: float, c2, zeta: np.ndarray, axis: int = -1) -> np.ndarray:
    """H*(x, zeta) = c2^(1-r') |zeta|^(r') / r'."""
    rp = conjugate_exponent(r)
    return np.asarray(c2) ** (1.0 - rp) * _mag(zeta, axis) ** rp / rp


# ---------------------------------------------------------------------------
# coupling side


def coupling(q: float, c1, m) -> np.ndarray:
    """f(x, m) = c1 m^(q-1) for m >= 0."""
    m = np.asarray(m, dtype=float)
    if np.any(m < 0.0):
        raise ValueError("coupling requires m >= 0")
    return c1 * m ** (q - 1.0)


def antiderivative_F(q: float, c1, m) -> np.ndarray:
    """F(x, m) = c1 (m^q - 1)/q for m >= 0 (base point F(x,1) = 0)."""
    m = np.asarray(m, dtype=float)
    if np.any(m < 0.0):
        raise ValueError("antiderivative_F requires m >= 0")
    return c1 * (m**q - 1.0) / q


def conjugate_Fstar(q: float, c1, a) -> np.ndarray:
    """F*(x, a) = sup_{m>=0} (a m - F(x, m)); finite and nondecreasing."""
    p = conjugate_exponent(q)
    a = np.asarray(a, dtype=float)
    c1 = np.asarray(c1, dtype=float)
    pos = np.maximum(a, 0.0)
    return c1 ** (1.0 - p) * pos**p / p + c1 / q


def d_Fstar(q: float, c1, a) -> np.ndarray:
    """(F*)'(x, a) = (max(a,0)/c1)^(p-1): the density dual to the level a."""
    p = conjugate_exponent(q)
    pos = np.maximum(np.asarray(a, dtype=float), 0.0)
    return (pos / c1) ** (p - 1.0)


# ---------------------------------------------------------------------------
# perspective integrand of the transport energy


def perspective(r: float, c2, m, w, axis: int = -1) -> np.ndarray:
    """m H*(x, -w/m) with the vacuum convention.

    Returns +inf where m == 0 and w != 0, exactly 0 where both vanish.
    Raises on m < 0 (the integrand's domain).
    """
    m = np.asarray(m, dtype=float)
    if np.any(m < 0.0):
        raise ValueError("perspective requires m >= 0")
    rp = conjugate_exponent(r)
    kappa = np.asarray(c2, dtype=float) ** (1.0 - rp)
    wmag = _mag(np.asarray(w, dtype=float), axis)
    with np.errstate(divide="ignore", invalid="ignore"):
        body = kappa * wmag**rp * m ** (1.0 - rp) / rp
    vac = m == 0.0
    out = np.where(vac & (wmag == 0.0), 0.0, np.where(vac, np.inf, body))
    return out


# ---------------------------------------------------------------------------
# safeguarded scalar Newton on arrays


def _newton_bisection(f, fprime, lo, hi, x0, scale=1.0, tol=NEWTON_TOL, cap=NEWTON_CAP):
    """Vectorized Newton iteration with a bisection bracket [lo, hi].

    f must be increasing on the bracket with f(lo) <= 0 <= f(hi).  Any
    Newton step leaving the current bracket falls back to the midpoint.
    `scale` sets the residual magnitude the tolerance is relative to.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    x = np.clip(x0, lo, hi)
    fx = f(x)
    for _ in range(cap):
        active = np.abs(fx) > tol * scale
        if not active.any():
            return x
        hi = np.where(fx > 0.0, np.minimum(hi, x), hi)
        lo = np.where(fx < 0.0, np.maximum(lo, x), lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = fx / fprime(x)
        cand = x - step
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        cand = np.where(bad, 0.5 * (lo + hi), cand)
        x = np.where(active, cand, x)
        fx = np.where(active, f(x), fx)
    if np.any(np.abs(fx) > 1e-6 * np.asarray(scale)):
        raise ProxConvergenceError("scalar Newton exceeded its iteration cap")
    return x


def _speed_from_m(r: float, kappa, tau, m, s):
    """Solve m v + tau kappa v^(r'-1) = s for v >= 0 (elementwise).

    Closed form for r = 2; otherwise a safeguarded Newton.  Returns the
    optimal transport speed of the flux subproblem for each cell.
    """
    rp = conjugate_exponent(r)
    c = tau * kappa
    if rp == 2.0:
        return s / (m + c)
    expo = 1.0 / (rp - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        v_cap = np.where(s > 0.0, (s / c) ** expo, 0.0)
        v_m = np.where((m > 0.0) & (s > 0.0), s / np.maximum(m, 1e-300), np.inf)
    hi = np.where(s > 0.0, np.minimum(v_cap, v_m), 0.0)
    lo = np.zeros_like(hi)

    def f(v):
        return m * v + c * v ** (rp - 1.0) - s

    def fp(v):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = c * (rp - 1.0) * v ** (rp - 2.0)
        return m + np.where(np.isfinite(d), d, 1e300)

    x0 = 0.5 * hi
    return _newton_bisection(f, fp, lo, hi, x0, scale=1.0 + s)


def prox_perspective(r, q, c1, c2, m_hat, w_hat, tau, axis=-1, m_init=None):
    """Joint prox of the transport integrand plus the density cost.

    Minimizes over m >= 0 and w:

        m H*(x, -w/m) + F(x, m) + (|m - m_hat|^2 + |w - w_hat|^2) / (2 tau)

    The flux is eliminated along the ray of w_hat (optimality forces
    collinearity), leaving an increasing scalar optimality condition in m
    solved by safeguarded Newton.  Returns (m, w).
    """
    if np.ndim(tau) == 0 and tau <= 0.0:
        raise ValueError("tau must be > 0")
    rp = conjugate_exponent(r)
    m_hat = np.asarray(m_hat, dtype=float)
    w_hat = np.asarray(w_hat, dtype=float)
    kappa = np.asarray(c2, dtype=float) ** (1.0 - rp)
    s = _mag(w_hat, axis)
    c = tau * kappa

    # boundary test at m -> 0+: if the one-sided slope is nonnegative the
    # constrained minimum sits at the vacuum point (m, w) = (0, 0)
    expo = 1.0 / (rp - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        v0 = np.where(s > 0.0, (s / c) ** expo, 0.0)
    chi0 = -(kappa / r) * v0**rp - m_hat / tau
    at_boundary = chi0 >= 0.0
    # boundary cells get a well-posed stand-in problem and are masked after
    m_hat_solve = np.where(at_boundary, 1.0, m_hat)

    def speed(m):
        return _speed_from_m(r, kappa, tau, m, s)

    def chi(m):
        v = speed(m)
        return -(kappa / r) * v**rp + c1 * m ** (q - 1.0) + (m - m_hat_solve) / tau

    def chi_prime(m):
        v = speed(m)
        with np.errstate(divide="ignore", invalid="ignore"):
            vp = -v / (m + c * (rp - 1.0) * v ** (rp - 2.0))
            vp = np.where(v > 0.0, vp, 0.0)
            curv = c1 * (q - 1.0) * m ** (q - 2.0)
            curv = np.where(np.isfinite(curv), curv, 1e300)
        return -kappa * v ** (rp - 1.0) * vp + curv + 1.0 / tau

    lo = np.zeros_like(m_hat)
    hi = np.maximum(np.abs(m_hat_solve), 1.0)
    # expand the bracket until chi > 0 (chi is increasing and -> +inf)
    for _ in range(200):
        need = chi(hi) <= 0.0
        if not need.any():
            break
        hi = np.where(need, hi * 2.0, hi)
    else:
        raise ProxConvergenceError("prox bracket expansion failed")

    if m_init is not None:
        x0 = np.clip(np.asarray(m_init, dtype=float), 1e-12, hi)
    else:
        x0 = np.clip(np.maximum(m_hat, 0.25), lo, hi)
    res_scale = 1.0 + np.abs(m_hat_solve) / tau + np.abs(chi0)
    m = _newton_bisection(chi, chi_prime, lo, hi, x0, scale=res_scale)
    m = np.where(at_boundary, 0.0, m)

    v = np.where(at_boundary, 0.0, speed(m))
    sigma = m * v
    with np.errstate(divide="ignore", invalid="ignore"):
        ray = np.where(s > 0.0, sigma / s, 0.0)
    w = np.expand_dims(ray, axis) * w_hat
    return m, w


def prox_Fstar(q, c1, a_hat, rho):
    """prox of F*(x, .) with weight rho: argmin F*(a) + rho (a - a_hat)^2 / 2.

    Closed form for q = 2, safeguarded Newton otherwise.  The optimality
    condition is (F*)'(a) + rho (a - a_hat) = 0 with (F*)' >= 0, so the
    solution never exceeds a_hat and equals a_hat when a_hat <= 0.
    """
    p = conjugate_exponent(q)
    a_hat = np.asarray(a_hat, dtype=float)
    c1 = np.asarray(c1, dtype=float)
    if p == 2.0:
        neg = np.minimum(a_hat, 0.0)
        pos = np.maximum(a_hat, 0.0) / (1.0 + 1.0 / (c1 * rho))
        return neg + pos

    # only a_hat > 0 needs a root-find; masked cells solve a dummy problem
    a_work = np.where(a_hat > 0.0, a_hat, 1.0)

    def f(a):
        return d_Fstar(q, c1, a) + rho * (a - a_work)

    def fp(a):
        pos = np.maximum(a, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = (p - 1.0) / c1 * (pos / c1) ** (p - 2.0)
            d = np.where(pos > 0.0, d, 0.0)
            d = np.where(np.isfinite(d), d, 1e300)
        return d + rho

    lo = np.zeros_like(a_work)
    hi = a_work
    out = _newton_bisection(f, fp, lo, hi, 0.5 * a_work, scale=1.0 + rho * np.abs(a_work))
    return np.where(a_hat > 0.0, out, a_hat)


# ---------------------------------------------------------------------------
# coercivity maps and their certification


def j1(r: float, xi: np.ndarray, axis: int = -1) -> np.ndarray:
    """|xi|^(r/2-1) xi, the gradient-side coercivity map (identity at r=2)."""
    if r == 2.0:
        return np.asarray(xi, dtype=float)
    mag = _mag(np.asarray(xi, dtype=float), axis)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mag > 0.0, mag ** (r / 2.0 - 1.0), 0.0)
    return np.expand_dims(scale, axis) * xi


def j2(r: float, zeta: np.ndarray, axis: int = -1) -> np.ndarray:
    """|zeta|^(r'/2-1) zeta, the momentum-side coercivity map."""
    return j1(conjugate_exponent(r), zeta, axis)


def J_map(q: float, m) -> np.ndarray:
    """J(m) = m^(q/2)."""
    return np.asarray(m, dtype=float) ** (q / 2.0)


def Jstar_map(q: float, a) -> np.ndarray:
    """J*(a) = max(a, 0)^(p/2), matched so J(m) = J*(f(m)) at unit c1."""
    p = conjugate_exponent(q)
    return np.maximum(np.asarray(a, dtype=float), 0.0) ** (p / 2.0)


@dataclass(frozen=True)
class CoercivityMaps:
    """Nonlinear maps of the sharpened Young inequalities plus constants.

    c0_H and c0_F are certified at construction by dense deterministic
    sampling of the unit-coefficient model (the ratio is invariant under
    the coefficient rescaling used in the verification), then shrunk by a
    5% margin so later quasi-random sampling stays above them.
    """

    r: float
    q: float
    dim: int
    c0_H: float
    c0_F: float

    def j1(self, xi, axis=-1):
        return j1(self.r, xi, axis)

    def j2(self, zeta, axis=-1):
        return j2(self.r, zeta, axis)

    def J(self, m):
        return J_map(self.q, m)

    def Jstar(self, a):
        return Jstar_map(self.q, a)

    @classmethod
    def certify(cls, r: float, q: float, dim: int, n_mag: int = 400, n_ang: int = 181):
        c0_H = 0.95 * _min_ratio_H_dense(r, dim, n_mag, n_ang)
        c0_F = 0.95 * _min_ratio_F_dense(q, n_mag)
        return cls(r=r, q=q, dim=dim, c0_H=c0_H, c0_F=c0_F)


def young_gap_H(r, c2, xi, zeta, axis=-1):
    """H(x,xi) + H*(x,zeta) - xi.zeta (nonnegative by Fenchel-Young)."""
    dot = np.sum(np.asarray(xi) * np.asarray(zeta), axis=axis)
    return hamiltonian(r, c2, xi, axis) + hamiltonian_conjugate(r, c2, zeta, axis) - dot


def coercivity_remainder_H(r, c2, xi, zeta, axis=-1):
    """|j1 - j2|^2 with the coefficient scaling that keeps conjugate pairs exact.

    For c2 != 1 the x-free maps are rescaled by c2^(1/2) and c2^((1-r')/2);
    this reduces the inequality to the unit model at every point, so the
    certified constant depends only on r (and the dimension).
    """
    rp = conjugate_exponent(r)
    c2 = np.asarray(c2, dtype=float)
    a = np.expand_dims(np.sqrt(c2), axis) * j1(r, xi, axis)
    b = np.expand_dims(c2 ** ((1.0 - rp) / 2.0), axis) * j2(r, zeta, axis)
    return np.sum((a - b) ** 2, axis=axis)


def young_gap_F(q, c1, m, a):
    """F(x,m) + F*(x,a) - m a."""
    return antiderivative_F(q, c1, m) + conjugate_Fstar(q, c1, a) - m * a


def coercivity_remainder_F(q, c1, m, a):
    """|J - J*|^2 with the coefficient scaling matching conjugate pairs."""
    p = conjugate_exponent(q)
    c1 = np.asarray(c1, dtype=float)
    u = np.sqrt(c1) * J_map(q, m)
    v = c1 ** ((1.0 - p) / 2.0) * Jstar_map(q, a)
    return (u - v) ** 2


def _min_ratio_H_dense(r, dim, n_mag, n_ang):
    """Dense-grid infimum of gap/remainder for the unit-c2 model.

    The ratio is invariant under (xi, zeta) -> (l xi, l^(r-1) zeta), so the
    magnitude of xi is pinned at 1; the xi = 0 fiber contributes 1/r'
    analytically and the zeta = 0 fiber 1/r.
    """
    mags = np.logspace(-6.0, 6.0, n_mag)
    if dim == 1:
        angles = np.array([0.0, np.pi])
    else:
        angles = np.linspace(0.0, np.pi, n_ang)
    t, th = np.meshgrid(mags, angles, indexing="ij")
    xi = np.zeros(t.shape + (dim,))
    xi[..., 0] = 1.0
    zeta = np.zeros_like(xi)
    zeta[..., 0] = t * np.cos(th)
    if dim == 2:
        zeta[..., 1] = t * np.sin(th)
    gap = young_gap_H(r, 1.0, xi, zeta)
    rem = coercivity_remainder_H(r, 1.0, xi, zeta)
    ok = _resolvable_H(r, 1.0, xi, zeta, gap, rem)
    ratios = gap[ok] / rem[ok]
    rp = conjugate_exponent(r)
    return float(min(ratios.min(), 1.0 / r, 1.0 / rp))


def _min_ratio_F_dense(q, n_mag):
    """Dense-grid infimum of gap/remainder for the unit-c1 coupling."""
    a_pos = np.logspace(-6.0, 6.0, n_mag)
    a = np.concatenate([-a_pos[::-1], [0.0], a_pos])
    m = np.ones_like(a)
    gap = young_gap_F(q, 1.0, m, a)
    rem = coercivity_remainder_F(q, 1.0, m, a)
    ok = _resolvable_F(q, 1.0, m, a, gap, rem)
    ratios = gap[ok] / rem[ok]
    p = conjugate_exponent(q)
    # m = 0 fiber: gap = a_+^p / p, remainder = a_+^p, ratio = 1/p
    return float(min(ratios.min(), 1.0 / p))


def _resolvable_H(r, c2, xi, zeta, gap, rem, rel=1e-9):
    """Mask of pairs where gap/remainder is numerically meaningful.

    Near conjugate pairs both sides vanish and float cancellation dominates;
    the equality case of Fenchel-Young counts as a pass, so those pairs are
    excluded from the ratio rather than reported as dips.
    """
    dot = np.abs(np.sum(np.asarray(xi) * np.asarray(zeta), axis=-1))
    magn = hamiltonian(r, c2, xi) + hamiltonian_conjugate(r, c2, zeta) + dot + 1.0
    return (gap > rel * magn) & (rem > rel * magn)


def _resolvable_F(q, c1, m, a, gap, rem, rel=1e-9):
    magn = (
        np.abs(antiderivative_F(q, c1, m))
        + conjugate_Fstar(q, c1, a)
        + np.abs(m * a)
        + 1.0
    )
    return (gap > rel * magn) & (rem > rel * magn)


@dataclass
class CoercivityReport:
    samples: int
    min_ratio_H: float
    min_ratio_F: float
    c0_H: float
    c0_F: float
    passed_H: bool
    passed_F: bool

    @property
    def passed(self) -> bool:
        return self.passed_H and self.passed_F


def verify_coercivity(model, maps: CoercivityMaps, samples: int) -> CoercivityReport:
    """Quasi-random sampling check of both sharpened Young inequalities.

    Draws Halton points over a compactified range of pair magnitudes,
    coefficient values from the model's actual range, and angles (d = 2).
    Near-conjugate pairs, where both sides vanish, count as passes.
    Failure is encoded in the report, never raised.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    r, q, dim = model.r, model.q, model.dim
    eng = qmc.Halton(d=7, scramble=False, seed=0)
    u = eng.random(samples)
    mag = lambda col: np.tan(0.5 * np.pi * np.clip(u[:, col], 1e-9, 1.0 - 1e-9))

    c2 = model.c2_range[0] + (model.c2_range[1] - model.c2_range[0]) * u[:, 4]
    c1 = model.c1_range[0] + (model.c1_range[1] - model.c1_range[0]) * u[:, 5]

    xi = np.zeros((samples, dim))
    zeta = np.zeros((samples, dim))
    xi[:, 0] = mag(0)
    if dim == 2:
        ang_x = 2.0 * np.pi * u[:, 2]
        xi[:, 0] = mag(0) * np.cos(ang_x)
        xi[:, 1] = mag(0) * np.sin(ang_x)
        ang_z = 2.0 * np.pi * u[:, 3]
        zeta[:, 0] = mag(1) * np.cos(ang_z)
        zeta[:, 1] = mag(1) * np.sin(ang_z)
    else:
        zeta[:, 0] = mag(1) * np.where(u[:, 3] < 0.5, -1.0, 1.0)

    gap_H = young_gap_H(r, c2, xi, zeta)
    rem_H = coercivity_remainder_H(r, c2, xi, zeta)
    ok = _resolvable_H(r, c2, xi, zeta, gap_H, rem_H)
    min_H = float((gap_H[ok] / rem_H[ok]).min()) if ok.any() else np.inf

    m = mag(2) if dim == 1 else np.tan(0.5 * np.pi * np.clip(u[:, 6], 1e-9, 1 - 1e-9))
    a_mag = np.tan(0.5 * np.pi * np.clip(u[:, 1], 1e-9, 1.0 - 1e-9))
    a = np.where(u[:, 0] < 0.25, -a_mag, a_mag)
    gap_F = young_gap_F(q, c1, m, a)
    rem_F = coercivity_remainder_F(q, c1, m, a)
    ok = _resolvable_F(q, c1, m, a, gap_F, rem_F)
    min_F = float((gap_F[ok] / rem_F[ok]).min()) if ok.any() else np.inf

    return CoercivityReport(
        samples=samples,
        min_ratio_H=min_H,
        min_ratio_F=min_F,
        c0_H=maps.c0_H,
        c0_F=maps.c0_F,
        passed_H=min_H >= maps.c0_H,
        passed_F=min_F >= maps.c0_F,
    )
