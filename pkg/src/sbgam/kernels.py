"""Boundary-corrected kernel weights on the unit interval.

Smoothing always happens in rescaled coordinates, so every covariate lives
on [0, 1].  A base kernel K0 is a symmetric density supported on [-1, 1];
with bandwidth h it scales to K0((u - v) / h) / h.  Near the edges that
scaled kernel loses mass outside [0, 1], so it is divided by its own mass
over the interval:

    K_h(u, v) = K0_h(u - v) / integral_0^1 K0_h(w - v) dw

which restores unit integral in u for every data location v.  Discrete rows
evaluated on a working grid are renormalized once more under the trapezoid
rule, so that grid-level integration of any row is exact rather than only
O(delta^2) accurate.  That discrete normalization is what makes the
backfitting identities (marginals of marginals, Fubini on the grid) hold to
machine precision downstream.

Conventions: `v` is the data location, `u` the evaluation point, both in
[0, 1]; bandwidths satisfy 0 < h <= 1/2 so at most one edge correction is
active at a time.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .errors import InputError

__all__ = [
    "KernelConstants",
    "base_kernel",
    "base_kernel_cdf",
    "boundary_kernel",
    "kernel_rows",
    "kernel_constants",
    "partial_moment",
    "row_windows",
    "validate_bandwidths",
    "KERNEL_NAMES",
]

KERNEL_NAMES = ("epanechnikov", "quartic", "triangular")


def _epanechnikov(t: np.ndarray) -> np.ndarray:
    return np.where(np.abs(t) <= 1.0, 0.75 * (1.0 - t * t), 0.0)


def _epanechnikov_cdf(t: np.ndarray) -> np.ndarray:
    tc = np.clip(t, -1.0, 1.0)
    return 0.25 * (2.0 + 3.0 * tc - tc**3)


def _quartic(t: np.ndarray) -> np.ndarray:
    inside = np.abs(t) <= 1.0
    s = 1.0 - t * t
    return np.where(inside, (15.0 / 16.0) * s * s, 0.0)


def _quartic_cdf(t: np.ndarray) -> np.ndarray:
    tc = np.clip(t, -1.0, 1.0)
    return 0.5 + (15.0 / 16.0) * (tc - 2.0 * tc**3 / 3.0 + tc**5 / 5.0)


def _triangular(t: np.ndarray) -> np.ndarray:
    return np.maximum(1.0 - np.abs(t), 0.0)


def _triangular_cdf(t: np.ndarray) -> np.ndarray:
    tc = np.clip(t, -1.0, 1.0)
    lower = 0.5 * (1.0 + tc) ** 2
    upper = 1.0 - 0.5 * (1.0 - tc) ** 2
    return np.where(tc < 0.0, lower, upper)


# name -> (pdf, cdf, mu2, roughness); mu2 and roughness are closed forms
_BASES = {
    "epanechnikov": (_epanechnikov, _epanechnikov_cdf, 0.2, 0.6),
    "quartic": (_quartic, _quartic_cdf, 1.0 / 7.0, 5.0 / 7.0),
    "triangular": (_triangular, _triangular_cdf, 1.0 / 6.0, 2.0 / 3.0),
}


def _base(name: str):
    try:
        return _BASES[name]
    except KeyError:
        raise InputError(
            f"unknown kernel {name!r}; choose one of {', '.join(KERNEL_NAMES)}"
        ) from None


def base_kernel(t: np.ndarray, name: str = "epanechnikov") -> np.ndarray:
    """Evaluate the base kernel K0 at ``t``."""
    return _base(name)[0](np.asarray(t, dtype=float))


def base_kernel_cdf(t: np.ndarray, name: str = "epanechnikov") -> np.ndarray:
    """Evaluate integral_{-1}^t K0, clipped to [0, 1] outside the support."""
    return _base(name)[1](np.asarray(t, dtype=float))


def validate_bandwidths(h, ndim: int) -> np.ndarray:
    """Broadcast and check bandwidths, one per covariate, each in (0, 1/2]."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if h.size == 1:
        h = np.full(ndim, h[0])
    if h.shape != (ndim,):
        raise InputError(f"expected {ndim} bandwidths, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise InputError("bandwidths must be finite")
    if np.any(h <= 0.0) or np.any(h > 0.5):
        raise InputError(
            "bandwidths must lie in (0, 0.5] in rescaled coordinates; "
            f"got {h}"
        )
    return h


def boundary_kernel(u, v, h: float, name: str = "epanechnikov") -> np.ndarray:
    """Boundary-corrected kernel K_h(u, v) for u, v in [0, 1].

    Parameters
    ----------
    u, v : array_like
        Evaluation points and data locations; broadcast against each other.
    h : float
        Bandwidth in (0, 1/2].
    name : str
        Base kernel name.

    Returns
    -------
    ndarray
        K0_h(u - v) divided by its mass over [0, 1] at location v, so that
        the continuous integral over u in [0, 1] equals one.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    pdf, cdf, _, _ = _base(name)
    vals = pdf((u - v) / h) / h
    mass = cdf((1.0 - v) / h) - cdf((0.0 - v) / h)
    return vals / mass


def kernel_rows(
    grid_points: np.ndarray,
    v: np.ndarray,
    h: float,
    name: str = "epanechnikov",
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Discrete kernel rows, one per data location, trapezoid-normalized.

    Parameters
    ----------
    grid_points : ndarray, shape (G,)
        Increasing working grid in [0, 1].
    v : ndarray, shape (n,)
        Data locations in [0, 1].
    h : float
        Bandwidth in (0, 1/2].
    name : str
        Base kernel name.
    weights : ndarray, shape (G,), optional
        Trapezoid weights of the grid; recomputed if omitted.

    Returns
    -------
    ndarray, shape (n, G)
        Row i holds K_h(grid, v_i) renormalized so that its trapezoid-rule
        integral over the grid is exactly one.
    """
    grid_points = np.asarray(grid_points, dtype=float)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if weights is None:
        weights = _trapz_weights(grid_points)
    rows = boundary_kernel(grid_points[None, :], v[:, None], h, name)
    mass = rows @ weights
    if np.any(mass <= 0.0):
        bad = v[mass <= 0.0][0]
        raise InputError(
            f"no grid point falls inside the kernel support at v = {bad:.4f}; "
            f"bandwidth {h:.4g} is below the grid resolution"
        )
    rows /= mass[:, None]
    return rows


def _trapz_weights(points: np.ndarray) -> np.ndarray:
    w = np.empty_like(points)
    w[1:-1] = 0.5 * (points[2:] - points[:-2])
    w[0] = 0.5 * (points[1] - points[0])
    w[-1] = 0.5 * (points[-1] - points[-2])
    return w


def row_windows(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Half-open index ranges [lo, hi) of the nonzero part of each row."""
    nz = rows > 0.0
    lo = nz.argmax(axis=1)
    hi = rows.shape[1] - nz[:, ::-1].argmax(axis=1)
    return lo, hi


def partial_moment(j: int, c: float, name: str = "epanechnikov") -> float:
    """Truncated moment integral_c^1 u^j K0(u) du.

    Exact Gauss-Legendre evaluation; the triangular kernel is handled
    piecewise around its kink at zero.
    """
    pdf = _base(name)[0]
    c = float(max(c, -1.0))
    if c >= 1.0:
        return 0.0
    breaks = [c, 1.0] if c >= 0.0 else [c, 0.0, 1.0]
    nodes, wts = np.polynomial.legendre.leggauss(24)
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        u = mid + half * nodes
        total += half * float(np.sum(wts * u**j * pdf(u)))
    return total


@dataclass(frozen=True)
class KernelConstants:
    """Moment constants of a base kernel.

    mu2 is the second moment, roughness the integral of the squared kernel,
    and kappa the boundary constant integral_0^1 mu1(-t) / mu0(-t) dt built
    from the truncated moments mu_j(c) = integral_c^1 u^j K0(u) du.
    """

    mu2: float
    roughness: float
    kappa: float


@lru_cache(maxsize=None)
def kernel_constants(name: str = "epanechnikov") -> KernelConstants:
    """Moment constants for a base kernel by name."""
    _, _, mu2, rough = _base(name)
    kappa, _ = quad(
        lambda t: partial_moment(1, -t, name) / partial_moment(0, -t, name),
        0.0,
        1.0,
        epsabs=1e-11,
        epsrel=1e-11,
    )
    return KernelConstants(mu2=mu2, roughness=rough, kappa=kappa)
