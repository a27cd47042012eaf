"""Convex constraint sets and their metric projections.

Set descriptors are small immutable records; `project` dispatches on the
descriptor kind.  All projections are metric projections in the L2 geometry
of the grid.  Because the grid is uniform, the dt weight cancels from every
cellwise projection, so the per-cell rules coincide with plain Euclidean
ones; only integral constraints (budget, caps, ball) see dt explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateSet, NonConvergence
from .grids import GridFunction, PriceCurve, TimeGrid


class SetDescriptor:
    """Base marker for projectable convex sets."""


@dataclass(frozen=True)
class PointwiseSimplex(SetDescriptor):
    """Per-cell unit simplex: values >= 0 and each cell's components sum to 1.

    The time-regularity condition that yields compactness of the price set
    in the continuum model has no nontrivial analogue for step functions;
    membership here is the per-cell simplex constraint only.
    """


@dataclass(frozen=True)
class BudgetHalfspace(SetDescriptor):
    """{x : <<p, x - e>> <= 0} in the L2 pairing (budget feasibility)."""

    price: GridFunction
    endowment: GridFunction


@dataclass(frozen=True)
class CapBox(SetDescriptor):
    """Nonnegative functions with per-component integral caps.

    caps[j] = +inf drops the integral constraint for component j, leaving
    the plain nonnegative cone in that component.
    """

    caps: tuple

    def __post_init__(self):
        caps = tuple(float(c) for c in self.caps)
        if any(c <= 0 for c in caps):
            raise ValueError(f"caps must be strictly positive, got {caps}")
        object.__setattr__(self, "caps", caps)


@dataclass(frozen=True)
class Ball(SetDescriptor):
    """Closed L2 ball of given radius; `center` is a constant per-component shift."""

    radius: float
    center: tuple = ()

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class Intersection(SetDescriptor):
    """Intersection of the listed parts, projected by Dykstra's alternation."""

    parts: tuple
    tol: float = 1e-10
    max_iter: int = 10000

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise ValueError("intersection needs at least one part")
        object.__setattr__(self, "parts", parts)


# --- array-level projection kernels (hot path; values shaped (cells, m)) ---


def _simplex_rows(v: np.ndarray) -> np.ndarray:
    """Project each row of v onto the unit simplex (sort-and-threshold)."""
    n = v.shape[1]
    u = np.sort(v, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1)
    ks = np.arange(1, n + 1)
    # largest k with u_k > (sum of top k - 1)/k; ties give the same projection
    cond = u * ks > css - 1.0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = (css[np.arange(v.shape[0]), rho] - 1.0) / (rho + 1.0)
    out = np.maximum(v - theta[:, None], 0.0)
    # renormalize so the constraint holds exactly, not just to threshold error
    return out / out.sum(axis=1, keepdims=True)


def _capbox_values(v: np.ndarray, caps: Sequence[float], dt: float) -> np.ndarray:
    """Clamp to the cone, then water-fill the components whose integral cap binds.

    The water-filling threshold per component solves
    sum_k max(0, v_k - tau) = cap/dt, the KKT condition of the projection.
    """
    out = np.maximum(v, 0.0)
    caps_arr = np.asarray(caps, dtype=float)
    finite = np.isfinite(caps_arr)
    if not finite.any():
        return out
    sums = dt * out.sum(axis=0)
    need = finite & (sums > caps_arr)
    if not need.any():
        return out
    idx = np.nonzero(need)[0]
    V = v[:, idx]
    budgets = caps_arr[idx] / dt
    U = np.sort(V, axis=0)[::-1]
    css = np.cumsum(U, axis=0)
    ks = np.arange(1, V.shape[0] + 1)[:, None]
    taus = (css - budgets[None, :]) / ks
    valid = U > taus
    rho = V.shape[0] - 1 - np.argmax(valid[::-1], axis=0)
    tau = taus[rho, np.arange(idx.size)]
    out[:, idx] = np.maximum(V - tau[None, :], 0.0)
    return out


def _halfspace_values(v: np.ndarray, p: np.ndarray, e: np.ndarray, dt: float) -> np.ndarray:
    gap = dt * np.sum(p * (v - e))
    if gap <= 0.0:
        return v
    pnorm2 = dt * np.sum(p * p)
    if pnorm2 <= 1e-300:
        raise DegenerateSet("cannot project onto a budget set with zero price curve")
    return v - (gap / pnorm2) * p


def _ball_values(v: np.ndarray, radius: float, center: tuple, dt: float) -> np.ndarray:
    c = np.asarray(center) if center else 0.0
    d = v - c
    r = np.sqrt(dt) * np.linalg.norm(d)
    if r <= radius:
        return v
    return c + d * (radius / r)


def _project_budget_capbox(v, p, e, caps, dt):
    """Exact projection onto {z in capbox : <<p, z - e>> <= 0}.

    The budget multiplier is the root of the monotone piecewise-linear map
    lam -> <<p, P_capbox(v - lam p) - e>>, found by bracketing plus regula
    falsi; each evaluation is one cheap capbox projection.  When nothing
    else binds, the plain halfspace multiplier is the exact root, so it is
    tried first and the common case costs two evaluations.
    """
    caps_arr = np.asarray(caps, dtype=float)
    finite = np.isfinite(caps_arr)
    caps_active = bool(finite.any())
    budgets = np.where(finite, caps_arr / dt, np.inf)

    def proj_box(y):
        out = np.maximum(y, 0.0)
        if caps_active:
            need = finite & (out.sum(axis=0) > budgets)
            if need.any():
                idx = np.nonzero(need)[0]
                V = y[:, idx]
                U = np.sort(V, axis=0)[::-1]
                css = np.cumsum(U, axis=0)
                ks = np.arange(1, V.shape[0] + 1)[:, None]
                taus = (css - budgets[idx][None, :]) / ks
                rho = V.shape[0] - 1 - np.argmax((U > taus)[::-1], axis=0)
                out[:, idx] = np.maximum(V - taus[rho, np.arange(idx.size)][None, :], 0.0)
        return out

    z = proj_box(v)
    wealth = dt * float(np.vdot(p, e))
    scale = 1.0 + abs(wealth)
    g0 = dt * float(np.vdot(p, z)) - wealth
    if g0 <= 1e-15 * scale:
        return z
    if wealth <= 1e-300:
        # worthless endowment: every component with positive price must vanish
        return proj_box(np.where(p > 0, np.minimum(v, 0.0), v))

    def g(lam):
        zz = proj_box(v - lam * p)
        return dt * float(np.vdot(p, zz)) - wealth, zz

    lo, glo = 0.0, g0
    hi = g0 / max(dt * float(np.vdot(p, p)), 1e-300)
    ghi, zhi = g(hi)
    while ghi > 0 and hi < 1e18:
        lo, glo = hi, ghi
        hi *= 2.0
        ghi, zhi = g(hi)
    for _ in range(200):
        if -ghi <= 1e-14 * scale or hi - lo <= 1e-16 * (1.0 + hi):
            break
        mid = hi - ghi * (hi - lo) / (ghi - glo)
        if not lo < mid < hi:
            mid = 0.5 * (lo + hi)
        gm, zm = g(mid)
        if gm > 0:
            lo, glo = mid, gm
        else:
            hi, ghi, zhi = mid, gm, zm
    return zhi


def _canonical_parts(parts):
    """Split an intersection into (budget, capbox, rest) when the pattern fits."""
    budget = [p for p in parts if isinstance(p, BudgetHalfspace)]
    capbox = [p for p in parts if isinstance(p, CapBox)]
    rest = [p for p in parts if not isinstance(p, (BudgetHalfspace, CapBox))]
    if len(budget) == 1 and len(capbox) == 1:
        return budget[0], capbox[0], rest
    return None


@dataclass(frozen=True)
class _BudgetCapBox(SetDescriptor):
    """Internal composite set with an exact projection (budget cap + capped cone)."""

    budget: BudgetHalfspace
    capbox: CapBox


def project_values(v: np.ndarray, s: SetDescriptor, grid: TimeGrid) -> np.ndarray:
    """Project raw values onto `s`; used internally by the iterative solvers."""
    dt = grid.dt
    if isinstance(s, PointwiseSimplex):
        return _simplex_rows(v)
    if isinstance(s, BudgetHalfspace):
        return _halfspace_values(v, s.price.values, s.endowment.values, dt)
    if isinstance(s, CapBox):
        return _capbox_values(v, s.caps, dt)
    if isinstance(s, Ball):
        return _ball_values(v, s.radius, s.center, dt)
    if isinstance(s, _BudgetCapBox):
        b = s.budget
        return _project_budget_capbox(v, b.price.values, b.endowment.values, s.capbox.caps, dt)
    if isinstance(s, Intersection):
        canon = _canonical_parts(s.parts)
        if canon is not None:
            budget, capbox, rest = canon
            composite = _BudgetCapBox(budget, capbox)
            if not rest:
                return project_values(v, composite, grid)
            return _dykstra_values(v, (composite, *rest), grid, s.tol, s.max_iter)
        return _dykstra_values(v, s.parts, grid, s.tol, s.max_iter)
    raise TypeError(f"not a projectable set descriptor: {s!r}")


def _dykstra_values(v, parts, grid, tol, max_iter):
    """Dykstra's alternating projections with per-part correction terms.

    Plain alternation converges to a point of the intersection but not to
    the metric projection; the corrections restore it for convex parts.
    """
    x = np.array(v, dtype=float)
    corrections = [np.zeros_like(x) for _ in parts]
    scale = np.sqrt(grid.dt)
    for _ in range(max_iter):
        x_prev = x
        for i, part in enumerate(parts):
            y = project_values(x + corrections[i], part, grid)
            corrections[i] = x + corrections[i] - y
            x = y
        change = scale * np.linalg.norm(x - x_prev)
        if change <= tol:
            resid = max(membership_residual_values(x, part, grid) for part in parts)
            if resid <= max(tol, 1e-12):
                return x
    resids = {repr(p): membership_residual_values(x, p, grid) for p in parts}
    raise NonConvergence(
        f"Dykstra projection did not reach tol={tol} in {max_iter} iterations",
        last_iterate=x,
        residuals=resids,
    )


def membership_residual_values(v: np.ndarray, s: SetDescriptor, grid: TimeGrid) -> float:
    dt = grid.dt
    if isinstance(s, PointwiseSimplex):
        sum_viol = np.max(np.abs(v.sum(axis=1) - 1.0))
        neg_viol = max(0.0, -v.min())
        return float(max(sum_viol, neg_viol))
    if isinstance(s, BudgetHalfspace):
        return float(max(0.0, dt * np.sum(s.price.values * (v - s.endowment.values))))
    if isinstance(s, CapBox):
        neg = max(0.0, -v.min())
        excess = 0.0
        for j, cap in enumerate(s.caps):
            if np.isfinite(cap):
                excess = max(excess, dt * v[:, j].sum() - cap)
        return float(max(neg, excess))
    if isinstance(s, Ball):
        c = np.asarray(s.center) if s.center else 0.0
        r = np.sqrt(dt) * np.linalg.norm(v - c)
        return float(max(0.0, r - s.radius))
    if isinstance(s, _BudgetCapBox):
        return float(
            max(
                membership_residual_values(v, s.budget, grid),
                membership_residual_values(v, s.capbox, grid),
            )
        )
    if isinstance(s, Intersection):
        return float(max(membership_residual_values(v, p, grid) for p in s.parts))
    raise TypeError(f"not a set descriptor: {s!r}")


# --- grid-function API ---


def project(x: GridFunction, s: SetDescriptor) -> GridFunction:
    """Metric projection of `x` onto the set described by `s`."""
    if isinstance(s, PointwiseSimplex):
        return project_pointwise_simplex(x)
    return x.with_values(project_values(x.values, s, x.grid))


def membership_residual(x: GridFunction, s: SetDescriptor) -> float:
    """Maximum constraint violation of `x` against `s`, in natural units."""
    return membership_residual_values(x.values, s, x.grid)


def project_pointwise_simplex(q: GridFunction) -> PriceCurve:
    """Cell-by-cell projection onto the unit simplex of price space."""
    return PriceCurve(q.grid, _simplex_rows(q.values))


def project_budget_halfspace(x: GridFunction, p: GridFunction, e: GridFunction) -> GridFunction:
    """Closed-form projection onto {z : <<p, z - e>> <= 0}."""
    if x.grid.dt * np.sum(p.values**2) <= 1e-300:
        raise DegenerateSet("cannot project onto a budget set with zero price curve")
    return x.with_values(_halfspace_values(x.values, p.values, e.values, x.grid.dt))


def project_cap_box(x: GridFunction, caps: Sequence[float]) -> GridFunction:
    """Projection onto the nonnegative cone with per-component integral caps."""
    box = CapBox(tuple(caps))
    return x.with_values(_capbox_values(x.values, box.caps, x.grid.dt))


def project_intersection(
    x: GridFunction,
    parts: Sequence[SetDescriptor],
    tol: float = 1e-10,
    max_iter: int = 10000,
) -> GridFunction:
    """Dykstra projection onto the intersection of `parts`.

    Always runs the general alternating scheme; `project` with an
    `Intersection` descriptor additionally recognizes the budget-and-caps
    pattern and solves it exactly, which the tests cross-check against
    this path.
    """
    return x.with_values(_dykstra_values(x.values, tuple(parts), x.grid, tol, max_iter))


def sample_feasible(
    s: SetDescriptor,
    center: GridFunction,
    scale: float,
    rng: np.random.Generator,
    count: int,
) -> list[GridFunction]:
    """Feasible points obtained by projecting Gaussian clouds around `center`."""
    out = []
    for _ in range(count):
        noise = rng.normal(0.0, scale, size=center.values.shape)
        out.append(project(center.with_values(center.values + noise), s))
    return out
