"""Additive quasi-likelihood fitting with local constant smoothing.

The estimator maximizes the smoothed quasi-likelihood

    SQ(eta) = integral n^{-1} sum_i Q(g^{-1}(eta(x)), Y_i) K_h(x, X_i) dx

over additive predictors eta(x) = eta_0 + sum_j eta_j(x_j), where K_h is
the product of boundary-corrected kernels and each component is pinned
down by the constraint integral eta_j(x_j) w_j(x_j) dx_j = 0 against the
current smoothed weight marginal.

The optimizer is a Newton scheme in function space.  At the current
iterate the quasi-likelihood is expanded to second order, which turns the
step into a penalized least-squares backfitting problem driven by two
smoothed fields,

    score(x)  = n^{-1} sum_i q1(eta(x), Y_i) K_h(x, X_i),
    weight(x) = n^{-1} sum_i -q2(eta(x), Y_i) K_h(x, X_i),

and that inner problem is solved by Gauss-Seidel sweeps over components
using only the weight's one- and two-dimensional marginals.  Because q1
and q2 are affine in y (see `family`), score and weight are combinations
of two data smooths: the kernel density smooth and the kernel smooth of
the response.  For d <= 2 both are precomputed once per fit, making each
Newton step a handful of dense G x G operations.  For d >= 3 the marginals
are accumulated by streaming over observations on their kernel support
windows; no d-dimensional tensor is ever materialized.

After every Newton step the components are recentered against the weight
marginals of the updated iterate, and the intercept absorbs the shifts,
which leaves the fitted predictor untouched and the constraints satisfied
to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    DegenerateWeightError,
    InitializerError,
    InputError,
    NonConvergenceError,
)
from .family import Family, get_family
from .grid import Dataset, Grid, MarginalAccumulator, window_tensor

__all__ = [
    "FitConfig",
    "FitDiagnostics",
    "NwContext",
    "NwMarginals",
    "NwFit",
    "nw_prepare",
    "nw_marginals",
    "nw_inner_solve",
    "nw_outer_update",
    "fit_nw",
    "smoothed_ql_nw",
    "nw_residual_norm",
]

# positivity floor for smoothed weight marginals, relative to mass per cell
WEIGHT_FLOOR = 1e-12


@dataclass(frozen=True)
class FitConfig:
    """Iteration controls shared by both smoothers.

    tol_outer is the relative sup-norm change of the fitted predictor that
    stops the Newton loop; tol_inner the absolute sup-norm change of the
    step components that stops the backfitting sweeps.  damping scales the
    Newton step (1 is a full step).
    """

    tol_outer: float = 1e-6
    tol_inner: float = 1e-8
    max_outer: int = 30
    max_inner: int = 100
    damping: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.damping <= 1.0):
            raise InputError("damping must lie in (0, 1]")
        if self.tol_outer <= 0.0 or self.tol_inner <= 0.0:
            raise InputError("tolerances must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise InputError("iteration limits must be at least 1")


@dataclass
class FitDiagnostics:
    """Per-iteration record of a fit.

    outer_changes holds the relative sup-norm predictor changes, one per
    Newton step; constraint_residuals the largest component-constraint
    integral after each step's recentering; sq_path the smoothed
    quasi-likelihood at the start and after each step.
    """

    converged: bool = False
    outer_iterations: int = 0
    outer_changes: list = field(default_factory=list)
    inner_sweep_counts: list = field(default_factory=list)
    inner_contractions: list = field(default_factory=list)
    inner_change_histories: list = field(default_factory=list)
    constraint_residuals: list = field(default_factory=list)
    sq_path: list = field(default_factory=list)
    weight_total: float = 0.0
    residual_norm: float = float("nan")


@dataclass
class NwContext:
    """Per-fit precomputations: kernel rows, windows and data smooths."""

    dataset: Dataset
    grid: Grid
    family: Family
    bandwidths: np.ndarray
    kernel: str
    rows: list
    windows: list
    phat: np.ndarray | None = None
    rhat: np.ndarray | None = None


@dataclass
class NwMarginals:
    """Marginals of the smoothed weight and score at one iterate."""

    total: float
    weight_curves: list
    weight_pairs: dict
    score_total: float
    score_curves: list
    sq: float


def nw_prepare(
    dataset: Dataset,
    bandwidths,
    grid: Grid | None = None,
    family: Family | str = "gaussian",
    kernel: str = "epanechnikov",
) -> NwContext:
    """Validate inputs and precompute everything that does not change
    across Newton iterations."""
    fam = get_family(family)
    fam.validate_response(dataset.y)
    d = dataset.ndim
    if grid is None:
        grid = Grid.uniform(d)
    if grid.ndim != d:
        raise InputError(f"grid has {grid.ndim} dimensions, data has {d}")
    h = kernels.validate_bandwidths(bandwidths, d)
    rows = [
        kernels.kernel_rows(grid.points[j], dataset.x[:, j], h[j], kernel,
                            grid.weights[j])
        for j in range(d)
    ]
    windows = [kernels.row_windows(r) for r in rows]
    ctx = NwContext(
        dataset=dataset, grid=grid, family=fam, bandwidths=h,
        kernel=kernel, rows=rows, windows=windows,
    )
    n = dataset.n
    if d == 1:
        ctx.phat = rows[0].sum(axis=0) / n
        ctx.rhat = dataset.y @ rows[0] / n
    elif d == 2:
        ctx.phat = rows[0].T @ rows[1] / n
        ctx.rhat = (rows[0] * dataset.y[:, None]).T @ rows[1] / n
    return ctx


def _check_weight_curves(curves, total, grid):
    for j, w in enumerate(curves):
        floor = WEIGHT_FLOOR * total / grid.shape[j]
        k = int(np.argmin(w))
        if w[k] < floor:
            raise DegenerateWeightError(j, float(grid.points[j][k]),
                                        float(w[k]), floor)


def nw_marginals(ctx: NwContext, eta0: float, components) -> NwMarginals:
    """Smoothed weight and score marginals at the given additive predictor.

    Returns the weight total (mass), its one-dimensional curves and, for
    d >= 2, its two-dimensional surfaces keyed by dimension pairs (j, l)
    with j < l, together with the score total and curves and the smoothed
    quasi-likelihood value.
    """
    grid = ctx.grid
    if grid.ndim <= 2:
        marg = _nw_marginals_dense(ctx, eta0, components)
    else:
        marg = _nw_marginals_streamed(ctx, eta0, components)
    if marg.total <= 0.0:
        raise DegenerateWeightError(0, 0.0, marg.total, 0.0)
    _check_weight_curves(marg.weight_curves, marg.total, grid)
    return marg


def _nw_marginals_dense(ctx, eta0, components):
    grid, fam = ctx.grid, ctx.family
    tw = grid.weights
    if grid.ndim == 1:
        u = eta0 + components[0]
        c, dd, cp, dp = fam.score_weight_pieces(u)
        wcurve = dp * ctx.phat - cp * ctx.rhat
        scurve = c * ctx.rhat - dd * ctx.phat
        qa, qb = fam.qll_pieces(u)
        sq = float(tw[0] @ (qa * ctx.rhat - qb * ctx.phat))
        sq += float(np.mean(fam.qll_offset(ctx.dataset.y)))
        return NwMarginals(
            total=float(tw[0] @ wcurve),
            weight_curves=[wcurve],
            weight_pairs={},
            score_total=float(tw[0] @ scurve),
            score_curves=[scurve],
            sq=sq,
        )
    u = eta0 + components[0][:, None] + components[1][None, :]
    c, dd, cp, dp = fam.score_weight_pieces(u)
    wfield = dp * ctx.phat - cp * ctx.rhat
    sfield = c * ctx.rhat - dd * ctx.phat
    qa, qb = fam.qll_pieces(u)
    sq = float(tw[0] @ ((qa * ctx.rhat - qb * ctx.phat) @ tw[1]))
    sq += float(np.mean(fam.qll_offset(ctx.dataset.y)))
    w1 = wfield @ tw[1]
    w2 = tw[0] @ wfield
    s1 = sfield @ tw[1]
    s2 = tw[0] @ sfield
    return NwMarginals(
        total=float(tw[0] @ w1),
        weight_curves=[w1, w2],
        weight_pairs={(0, 1): wfield},
        score_total=float(tw[0] @ s1),
        score_curves=[s1, s2],
        sq=sq,
    )


def _nw_marginals_streamed(ctx, eta0, components):
    grid, fam, y = ctx.grid, ctx.family, ctx.dataset.y
    d = grid.ndim
    n = ctx.dataset.n
    dims = range(d)
    pairs = [(j, l) for j in dims for l in dims if j < l]
    wacc = MarginalAccumulator(grid, curve_dims=dims, pair_dims=pairs)
    sacc = MarginalAccumulator(grid, curve_dims=dims)
    sq_acc = 0.0
    for i in range(n):
        lo = [ctx.windows[j][0][i] for j in dims]
        hi = [ctx.windows[j][1][i] for j in dims]
        kprod = window_tensor([ctx.rows[j][i, lo[j]:hi[j]] for j in dims])
        u = eta0
        for j in dims:
            shape = [1] * d
            shape[j] = hi[j] - lo[j]
            u = u + components[j][lo[j]:hi[j]].reshape(shape)
        wacc.add(lo, hi, -fam.q2(u, y[i]) * kprod)
        sacc.add(lo, hi, fam.q1(u, y[i]) * kprod)
        qfield = fam.qll(u, y[i]) * kprod
        for ax in reversed(dims):
            qfield = np.tensordot(qfield, grid.weights[ax][lo[ax]:hi[ax]],
                                  axes=([ax], [0]))
        sq_acc += float(qfield)
    return NwMarginals(
        total=wacc.total / n,
        weight_curves=[wacc.curves[j] / n for j in dims],
        weight_pairs={k: v / n for k, v in wacc.pairs.items()},
        score_total=sacc.total / n,
        score_curves=[sacc.curves[j] / n for j in dims],
        sq=sq_acc / n,
    )


def nw_inner_solve(marg: NwMarginals, grid: Grid, config: FitConfig):
    """Solve the linearized backfitting system by Gauss-Seidel sweeps.

    Returns (xi0, xi, sweeps, contraction, change_history) where xi0 is the
    intercept step, xi the component step curves (each centered against the
    weight marginals), sweeps the number of sweeps used, and contraction
    the ratio of the last two sweep-change norms.
    """
    total = marg.total
    tw = grid.weights
    d = grid.ndim
    xi0 = marg.score_total / total
    xit = [marg.score_curves[j] / marg.weight_curves[j] for j in range(d)]

    def center(j, v):
        return v - (tw[j] @ (v * marg.weight_curves[j])) / total

    xi = [center(j, xit[j]) for j in range(d)]
    changes = []
    for _ in range(config.max_inner):
        delta = 0.0
        for j in range(d):
            acc = xit[j] - xi0
            for l in range(d):
                if l == j:
                    continue
                g = tw[l] * xi[l]
                if j < l:
                    cross = marg.weight_pairs[(j, l)] @ g
                else:
                    cross = g @ marg.weight_pairs[(l, j)]
                acc = acc - cross / marg.weight_curves[j]
            new = center(j, acc)
            delta = max(delta, float(np.max(np.abs(new - xi[j]))))
            xi[j] = new
        changes.append(delta)
        if delta < config.tol_inner:
            break
    else:
        raise NonConvergenceError(
            f"backfitting sweeps did not converge in {config.max_inner} "
            f"iterations (last change {changes[-1]:.3e})",
            history=changes,
        )
    contraction = 0.0
    if len(changes) >= 2 and changes[-2] > 0.0:
        contraction = changes[-1] / changes[-2]
    return xi0, xi, len(changes), contraction, changes


def _additive_sup(const: float, curves) -> float:
    """Exact sup norm of const + sum_j curve_j(x_j) over the product grid."""
    hi = const + sum(float(c.max()) for c in curves)
    lo = const + sum(float(c.min()) for c in curves)
    return max(abs(hi), abs(lo))


def nw_outer_update(ctx: NwContext, eta0: float, components, xi0: float, xi,
                    config: FitConfig):
    """Apply one damped Newton step and recenter at the new iterate.

    Returns (eta0, components, marginals, constraint_residual, change)
    where marginals are evaluated at the updated predictor (they serve the
    next iteration), constraint_residual is the largest component
    constraint integral after recentering, and change is the exact sup-norm
    of the predictor update over the grid.
    """
    d = ctx.grid.ndim
    tw = ctx.grid.weights
    step0 = config.damping * xi0
    steps = [config.damping * xi[j] for j in range(d)]
    change = _additive_sup(step0, steps)
    new_eta0 = eta0 + step0
    new_comps = [components[j] + steps[j] for j in range(d)]
    marg = nw_marginals(ctx, new_eta0, new_comps)
    shifts = [
        float(tw[j] @ (new_comps[j] * marg.weight_curves[j])) / marg.total
        for j in range(d)
    ]
    new_comps = [new_comps[j] - shifts[j] for j in range(d)]
    new_eta0 = new_eta0 + sum(shifts)
    residual = max(
        abs(float(tw[j] @ (new_comps[j] * marg.weight_curves[j])))
        for j in range(d)
    )
    return new_eta0, new_comps, marg, residual, change


@dataclass
class NwFit:
    """Fitted additive predictor with local constant components.

    components[j] tabulates the centered component on grid.points[j] in
    rescaled coordinates; eta0 is the intercept.
    """

    eta0: float
    components: list
    grid: Grid
    bandwidths: np.ndarray
    family: str
    kernel: str
    lo: np.ndarray
    hi: np.ndarray
    diagnostics: FitDiagnostics

    def predictor_on_grid(self) -> np.ndarray:
        """Full additive predictor on the product grid (small d only)."""
        out = np.full(self.grid.shape, self.eta0)
        for j, comp in enumerate(self.components):
            shape = [1] * self.grid.ndim
            shape[j] = comp.size
            out = out + comp.reshape(shape)
        return out

    def component_at(self, j: int, u: np.ndarray) -> np.ndarray:
        """Linear interpolation of component j at rescaled coordinates."""
        return np.interp(np.asarray(u, dtype=float),
                         self.grid.points[j], self.components[j])

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Additive predictor at covariate rows (n, d), original scale.

        Points outside the training support are clamped to its edges.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(x.shape[0], self.eta0)
        for j in range(self.grid.ndim):
            u = (x[:, j] - self.lo[j]) / (self.hi[j] - self.lo[j])
            out += self.component_at(j, np.clip(u, 0.0, 1.0))
        return out

    def predict_mean(self, x: np.ndarray) -> np.ndarray:
        """Fitted response mean at original-scale covariate rows."""
        return get_family(self.family).mean(self.predict(x))


def _initial_intercept(fam: Family, y: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        eta0 = float(np.asarray(fam.link(np.mean(y))))
    if not np.isfinite(eta0):
        raise InitializerError(
            f"constant-model start g(mean(y)) is not finite for family "
            f"{fam.name!r}; the response is degenerate"
        )
    return eta0


def fit_nw(
    dataset: Dataset,
    bandwidths,
    grid: Grid | None = None,
    family: Family | str = "gaussian",
    kernel: str = "epanechnikov",
    config: FitConfig | None = None,
) -> NwFit:
    """Fit the additive model by Newton steps over smoothed backfitting.

    Starts from the constant fit eta_0 = g(mean(y)), iterates Newton steps
    solved by Gauss-Seidel backfitting, and stops when the relative
    sup-norm change of the fitted predictor falls below tol_outer.

    Raises
    ------
    InitializerError, DegenerateWeightError, NonConvergenceError
    """
    config = config or FitConfig()
    ctx = nw_prepare(dataset, bandwidths, grid, family, kernel)
    grid = ctx.grid
    eta0 = _initial_intercept(ctx.family, dataset.y)
    comps = [np.zeros(g) for g in grid.shape]
    marg = nw_marginals(ctx, eta0, comps)
    diag = FitDiagnostics(sq_path=[marg.sq])
    for _ in range(config.max_outer):
        xi0, xi, sweeps, contraction, history = nw_inner_solve(
            marg, grid, config
        )
        eta0, comps, marg, resid, change = nw_outer_update(
            ctx, eta0, comps, xi0, xi, config
        )
        rel = change / max(1.0, _additive_sup(eta0, comps))
        diag.outer_iterations += 1
        diag.outer_changes.append(rel)
        diag.inner_sweep_counts.append(sweeps)
        diag.inner_contractions.append(contraction)
        diag.inner_change_histories.append(history)
        diag.constraint_residuals.append(resid)
        diag.sq_path.append(marg.sq)
        if rel < config.tol_outer:
            diag.converged = True
            break
    if not diag.converged:
        raise NonConvergenceError(
            f"no convergence in {config.max_outer} Newton steps "
            f"(last relative change {diag.outer_changes[-1]:.3e})",
            history=diag.outer_changes,
        )
    diag.weight_total = marg.total
    diag.residual_norm = _residual_from_marginals(marg, grid)
    return NwFit(
        eta0=eta0,
        components=comps,
        grid=grid,
        bandwidths=ctx.bandwidths,
        family=ctx.family.name,
        kernel=ctx.kernel,
        lo=ctx.dataset.lo,
        hi=ctx.dataset.hi,
        diagnostics=diag,
    )


def _residual_from_marginals(marg: NwMarginals, grid: Grid) -> float:
    parts = marg.score_total ** 2
    for j, s in enumerate(marg.score_curves):
        parts += float(grid.weights[j] @ (s * s))
    return float(np.sqrt(parts))


def smoothed_ql_nw(ctx: NwContext, eta0: float, components) -> float:
    """Smoothed quasi-likelihood of an additive predictor."""
    return nw_marginals(ctx, eta0, components).sq


def nw_residual_norm(ctx: NwContext, eta0: float, components) -> float:
    """Size of the estimating-equation fields at a predictor.

    The square root of score_total^2 plus the integrated squared score
    curves; identically zero exactly at a solution of the estimating
    equations.
    """
    return _residual_from_marginals(nw_marginals(ctx, eta0, components),
                                    ctx.grid)
