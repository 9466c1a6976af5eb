"""Shipped test models: closed-form anchors and cosine-perturbed bumps.

The homogeneous instances have exact discrete solutions (constant density,
affine-in-time potential) used as anchors; the bump family perturbs the
coefficients with low cosine modes, small enough to keep the density
bounded away from vacuum at every shipped resolution.
"""

from __future__ import annotations

import numpy as np

from .model import ModelSpec

TWO_PI = 2.0 * np.pi


def _cos1(k, amp):
    def fn(x, *rest):
        return 1.0 + amp * np.cos(TWO_PI * k * x) + 0.0 * sum(rest)

    return fn


def _cos2(kx, ky, amp):
    def fn(x, y):
        return 1.0 + amp * np.cos(TWO_PI * kx * x) * np.cos(TWO_PI * ky * y)

    return fn


def _bump1(amp, k=1):
    def fn(x, *rest):
        return amp * np.cos(TWO_PI * k * x) + 0.0 * sum(rest)

    return fn


def _bump2(amp):
    def fn(x, y):
        return amp * (np.cos(TWO_PI * x) + np.cos(TWO_PI * y))

    return fn


def homogeneous(dim: int, r: float = 2.0, q: float = 2.0, c: float = 1.0, T: float = 1.0):
    """Constant-coefficient instance; the solution is m = 1, w = 0."""
    from .model import constant

    return ModelSpec(
        r=r, q=q, dim=dim, T=T,
        c1=constant(c), c2=constant(c), m0=constant(1.0),
        name=f"hom-{dim}d",
    )


def _registry():
    from .model import constant

    models = {}
    for d in (1, 2):
        models[f"td-hom-{d}d"] = homogeneous(d)
        models[f"stat-hom-{d}d"] = homogeneous(d)

    models["td-bump-1d"] = ModelSpec(
        r=2.0, q=2.0, dim=1, T=1.0,
        c1=_cos1(1, 0.2), m0=_cos1(1, 0.1), phi_T=_bump1(0.1),
        name="td-bump-1d",
    )
    models["td-bump-q3-1d"] = ModelSpec(
        r=2.0, q=3.0, dim=1, T=1.0,
        c1=_cos1(1, 0.2), m0=_cos1(2, 0.1), phi_T=_bump1(0.1),
        name="td-bump-q3-1d",
    )
    models["td-bump-2d"] = ModelSpec(
        r=2.0, q=2.0, dim=2, T=1.0,
        c1=_cos2(1, 1, 0.2), m0=_cos2(1, 0, 0.1), phi_T=_bump2(0.05),
        name="td-bump-2d",
    )
    models["stat-bump-1d"] = ModelSpec(
        r=2.0, q=2.0, dim=1, T=1.0,
        c1=_cos1(1, 0.3), c2=_cos1(1, 0.1),
        name="stat-bump-1d",
    )
    models["stat-bump-2d"] = ModelSpec(
        r=2.0, q=2.0, dim=2, T=1.0,
        c1=_cos2(1, 1, 0.3), c2=constant(1.0),
        name="stat-bump-2d",
    )
    models["stat-bump-r3-1d"] = ModelSpec(
        r=3.0, q=2.0, dim=1, T=1.0,
        c1=_cos1(1, 0.3),
        name="stat-bump-r3-1d",
    )
    return models


SHIPPED = _registry()


def get(name: str) -> ModelSpec:
    try:
        return SHIPPED[name]
    except KeyError:
        raise KeyError(f"unknown shipped model {name!r}; have {sorted(SHIPPED)}") from None


def time_dependent_names():
    return [n for n in SHIPPED if n.startswith("td-")]


def stationary_names():
    return [n for n in SHIPPED if n.startswith("stat-")]
