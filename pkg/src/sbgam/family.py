"""Response families for quasi-likelihood smoothing.

A family bundles a link g, its inverse, and a variance function V, and from
them the derivatives of the quasi-likelihood Q(m, y) defined through

    dQ/dm = (y - m) / V(m).

Everything the fitting code consumes is expressed on the scale of the
linear predictor u = g(m):

    q1(u, y) = d/du Q(g^{-1}(u), y)
    q2(u, y) = d^2/du^2 Q(g^{-1}(u), y)

For the built-in canonical pairs (identity/Gaussian, logit/Bernoulli,
log/Poisson) these reduce to y - g^{-1}(u) and -(g^{-1})'(u).

Because dQ/dm is linear in y, both derivatives are affine in y for every
family:

    q1(u, y) = y * c(u) - d(u),      q2(u, y) = y * c'(u) - d'(u).

The fitters exploit this to reduce kernel-weighted sums over observations
to two precomputed smooths (of 1 and of y); `score_weight_pieces` exposes
the four coefficient functions.  The same structure holds for Q itself up
to an additive term that depends on y alone, exposed by `qll_pieces` and
`qll_offset`.

Links are clamped before any evaluation: the logit predictor to [-30, 30]
and the log predictor to at most 30.  That keeps weights strictly positive
and bounded without changing anything in the numerically relevant range.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import InputError

__all__ = [
    "Family",
    "GaussianIdentity",
    "BernoulliLogit",
    "PoissonLog",
    "QuasiFamily",
    "get_family",
    "family_eval",
    "FAMILY_NAMES",
]


class Family:
    """Base class; subclasses define the link, variance and derivatives."""

    name: str = ""
    response_description: str = ""
    clamp_lo: float | None = None
    clamp_hi: float | None = None

    # ---- link and mean -------------------------------------------------

    def clamp(self, u: np.ndarray) -> np.ndarray:
        """Clip the linear predictor to the family's safe range."""
        u = np.asarray(u, dtype=float)
        if self.clamp_lo is not None or self.clamp_hi is not None:
            u = np.clip(u, self.clamp_lo, self.clamp_hi)
        return u

    def link(self, m: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def mean(self, u: np.ndarray) -> np.ndarray:
        """Inverse link g^{-1}(u), after clamping."""
        raise NotImplementedError

    def mean_d1(self, u: np.ndarray) -> np.ndarray:
        """First derivative of the inverse link."""
        u = self.clamp(u)
        return 1.0 / self.link_deriv(self.mean(u))

    def mean_d2(self, u: np.ndarray) -> np.ndarray:
        """Second derivative of the inverse link.

        Default is a central difference of `mean_d1`; the built-in families
        override with closed forms.  Only the asymptotic formulas use this.
        """
        step = 1e-5
        u = np.asarray(u, dtype=float)
        return (self.mean_d1(u + step) - self.mean_d1(u - step)) / (2 * step)

    def link_deriv(self, m: np.ndarray) -> np.ndarray:
        """g'(m) on the mean scale."""
        raise NotImplementedError

    def variance(self, m: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # ---- quasi-likelihood on the predictor scale -----------------------

    def q1(self, u: np.ndarray, y) -> np.ndarray:
        u = self.clamp(u)
        m = self.mean(u)
        return (y - m) / (self.variance(m) * self.link_deriv(m))

    def q2(self, u: np.ndarray, y) -> np.ndarray:
        raise NotImplementedError

    def qll(self, u: np.ndarray, y) -> np.ndarray:
        """Quasi-likelihood Q(g^{-1}(u), y), up to terms constant in u."""
        raise NotImplementedError

    def psi(self, u: np.ndarray) -> np.ndarray:
        """The weight function -q2(u, g^{-1}(u)) = 1 / [V(m) g'(m)]."""
        u = self.clamp(u)
        m = self.mean(u)
        return 1.0 / (self.variance(m) * self.link_deriv(m))

    # ---- affine-in-y decompositions ------------------------------------

    def score_weight_pieces(self, u: np.ndarray):
        """Coefficient functions (c, d, cp, dp) of the affine forms

        q1(u, y) = y c(u) - d(u) and q2(u, y) = y cp(u) - dp(u).

        The generic implementation extracts them by evaluating at y = 0 and
        y = 1, which is exact because both derivatives are affine in y.
        """
        u = self.clamp(u)
        q10 = self.q1(u, 0.0)
        q20 = self.q2(u, 0.0)
        return self.q1(u, 1.0) - q10, -q10, self.q2(u, 1.0) - q20, -q20

    def qll_pieces(self, u: np.ndarray):
        """Coefficient functions (A, B) with Q(g^{-1}(u), y) = y A(u) - B(u)
        plus a term depending on y alone (see `qll_offset`)."""
        u = self.clamp(u)
        q0 = self.qll(u, 0.0)
        return self.qll(u, 1.0) - q0, -q0

    def qll_offset(self, y) -> np.ndarray:
        """The y-only term of Q; drops out of all differences in u."""
        y = np.asarray(y, dtype=float)
        a, b = self.qll_pieces(np.zeros(1))
        return self.qll(np.zeros(1), y) - y * a[0] + b[0]

    # ---- data validation ------------------------------------------------

    def validate_response(self, y: np.ndarray) -> None:
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise InputError("response contains non-finite values")

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class GaussianIdentity(Family):
    """Identity link, constant variance: penalized least squares."""

    name = "gaussian"
    response_description = "any finite real value"

    def link(self, m):
        return np.asarray(m, dtype=float)

    def mean(self, u):
        return np.asarray(u, dtype=float)

    def mean_d1(self, u):
        return np.ones_like(np.asarray(u, dtype=float))

    def mean_d2(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))

    def link_deriv(self, m):
        return np.ones_like(np.asarray(m, dtype=float))

    def variance(self, m):
        return np.ones_like(np.asarray(m, dtype=float))

    def q1(self, u, y):
        return y - np.asarray(u, dtype=float)

    def q2(self, u, y):
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(-1.0, np.broadcast(u, y).shape).copy()

    def qll(self, u, y):
        r = y - np.asarray(u, dtype=float)
        return -0.5 * r * r

    def psi(self, u):
        return np.ones_like(np.asarray(u, dtype=float))

    def score_weight_pieces(self, u):
        u = np.asarray(u, dtype=float)
        one = np.ones_like(u)
        return one, u.copy(), np.zeros_like(u), one

    def qll_pieces(self, u):
        u = np.asarray(u, dtype=float)
        return u.copy(), 0.5 * u * u

    def qll_offset(self, y):
        y = np.asarray(y, dtype=float)
        return -0.5 * y * y


class BernoulliLogit(Family):
    """Logit link, binomial variance m(1 - m)."""

    name = "bernoulli"
    response_description = "values in [0, 1]"
    clamp_lo = -30.0
    clamp_hi = 30.0

    def link(self, m):
        m = np.asarray(m, dtype=float)
        return np.log(m) - np.log1p(-m)

    def mean(self, u):
        return expit(self.clamp(u))

    def mean_d1(self, u):
        m = self.mean(u)
        return m * (1.0 - m)

    def mean_d2(self, u):
        m = self.mean(u)
        return m * (1.0 - m) * (1.0 - 2.0 * m)

    def link_deriv(self, m):
        m = np.asarray(m, dtype=float)
        return 1.0 / (m * (1.0 - m))

    def variance(self, m):
        m = np.asarray(m, dtype=float)
        return m * (1.0 - m)

    def q1(self, u, y):
        return y - self.mean(u)

    def q2(self, u, y):
        m = self.mean(u)
        res = -m * (1.0 - m)
        return np.broadcast_to(res, np.broadcast(res, y).shape).copy()

    def qll(self, u, y):
        u = self.clamp(u)
        return y * u - np.logaddexp(0.0, u)

    def psi(self, u):
        return self.mean_d1(u)

    def score_weight_pieces(self, u):
        m = self.mean(u)
        one = np.ones_like(m)
        return one, m, np.zeros_like(m), m * (1.0 - m)

    def qll_pieces(self, u):
        u = self.clamp(u)
        return u.copy(), np.logaddexp(0.0, u)

    def qll_offset(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    def validate_response(self, y):
        super().validate_response(y)
        y = np.asarray(y, dtype=float)
        if np.any(y < 0.0) or np.any(y > 1.0):
            raise InputError(
                "bernoulli responses must lie in [0, 1]; got values outside"
            )


class PoissonLog(Family):
    """Log link, variance equal to the mean."""

    name = "poisson"
    response_description = "nonnegative values"
    clamp_hi = 30.0

    def link(self, m):
        return np.log(np.asarray(m, dtype=float))

    def mean(self, u):
        return np.exp(self.clamp(u))

    def mean_d1(self, u):
        return self.mean(u)

    def mean_d2(self, u):
        return self.mean(u)

    def link_deriv(self, m):
        return 1.0 / np.asarray(m, dtype=float)

    def variance(self, m):
        return np.asarray(m, dtype=float)

    def q1(self, u, y):
        return y - self.mean(u)

    def q2(self, u, y):
        res = -self.mean(u)
        return np.broadcast_to(res, np.broadcast(res, y).shape).copy()

    def qll(self, u, y):
        u = self.clamp(u)
        return y * u - np.exp(u)

    def psi(self, u):
        return self.mean(u)

    def score_weight_pieces(self, u):
        m = self.mean(u)
        one = np.ones_like(m)
        return one, m, np.zeros_like(m), m.copy()

    def qll_pieces(self, u):
        u = self.clamp(u)
        return u.copy(), np.exp(u)

    def qll_offset(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    def validate_response(self, y):
        super().validate_response(y)
        y = np.asarray(y, dtype=float)
        if np.any(y < 0.0):
            raise InputError("poisson responses must be nonnegative")


class QuasiFamily(Family):
    """Family assembled from user-supplied scalar maps.

    Parameters
    ----------
    name : str
        Label used in reports.
    link, mean, link_deriv, variance : callables
        The link g, its inverse, g' on the mean scale, and V on the mean
        scale.  All must be vectorized over ndarray inputs.
    q2 : callable
        Analytic second derivative q2(u, y) of Q(g^{-1}(u), y) in u,
        vectorized in u with scalar or array y.  Must be strictly negative.
    qll : callable
        Quasi-likelihood Q(g^{-1}(u), y) itself, up to y-only terms.
    clamp_lo, clamp_hi : float, optional
        Safe range for the linear predictor.
    validate : callable, optional
        Response-range check; raises InputError on violation.

    q1 is derived from the defining relation (y - m) / [V(m) g'(m)]; the
    affine coefficient functions come from the generic two-point
    extraction, which is exact because q1 and q2 are affine in y.
    """

    def __init__(
        self,
        name: str,
        link,
        mean,
        link_deriv,
        variance,
        q2,
        qll,
        clamp_lo: float | None = None,
        clamp_hi: float | None = None,
        validate=None,
    ):
        self.name = name
        self._link = link
        self._mean = mean
        self._link_deriv = link_deriv
        self._variance = variance
        self._q2 = q2
        self._qll = qll
        self.clamp_lo = clamp_lo
        self.clamp_hi = clamp_hi
        self._validate = validate

    def link(self, m):
        return np.asarray(self._link(np.asarray(m, dtype=float)))

    def mean(self, u):
        return np.asarray(self._mean(self.clamp(u)))

    def link_deriv(self, m):
        return np.asarray(self._link_deriv(np.asarray(m, dtype=float)))

    def variance(self, m):
        return np.asarray(self._variance(np.asarray(m, dtype=float)))

    def q2(self, u, y):
        return np.asarray(self._q2(self.clamp(u), y))

    def qll(self, u, y):
        return np.asarray(self._qll(self.clamp(u), y))

    def validate_response(self, y):
        super().validate_response(y)
        if self._validate is not None:
            self._validate(np.asarray(y, dtype=float))


_REGISTRY = {
    "gaussian": GaussianIdentity(),
    "bernoulli": BernoulliLogit(),
    "poisson": PoissonLog(),
}

FAMILY_NAMES = tuple(_REGISTRY)


def get_family(name) -> Family:
    """Look up a built-in family by name, or pass a Family through."""
    if isinstance(name, Family):
        return name
    try:
        return _REGISTRY[name]
    except KeyError:
        raise InputError(
            f"unknown family {name!r}; choose one of {', '.join(FAMILY_NAMES)}"
        ) from None


def family_eval(fam: Family, u, y):
    """Evaluate (Q, q1, q2) at predictor values u and responses y."""
    fam = get_family(fam)
    return fam.qll(u, y), fam.q1(u, y), fam.q2(u, y)
