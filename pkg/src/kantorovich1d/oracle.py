"""Independent ground truth for cross-validation.

Nothing here touches the dual solver: the limit (tent) potential and its
Kantorovich value come from geometry and closed-form antiderivatives, and
the discrete verifier is plain coordinate search on a grid.  Shared code
is limited to raw quadrature (for tabulated densities only).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly

from .density import Density, TransportProblem, cdf, pdf
from .errors import FeasibilityError, LayoutError
from .numerics import DEFAULT_TOL, Tolerances, integrate_split


@dataclass(frozen=True)
class TentPotential:
    """The k -> infinity limit shape: +tent on the source, -tent on the sink."""

    source_interval: Tuple[float, float]
    sink_interval: Tuple[float, float]

    @property
    def source_apex(self) -> float:
        lo, hi = self.source_interval
        return 0.5 * (lo + hi)

    @property
    def sink_apex(self) -> float:
        lo, hi = self.sink_interval
        return 0.5 * (lo + hi)

    def __call__(self, x):
        xs = np.asarray(x, dtype=float)
        out = np.zeros(xs.shape)
        (a, b) = self.source_interval
        (c, d) = self.sink_interval
        src = (xs >= a) & (xs <= b)
        snk = (xs >= c) & (xs <= d)
        out[src] = np.minimum(xs[src] - a, b - xs[src])
        out[snk] = -np.minimum(xs[snk] - c, d - xs[snk])
        return float(out) if np.ndim(x) == 0 else out

    def slope(self, x):
        """+-1 slope field (0 exactly at the apexes and outside the supports)."""
        xs = np.asarray(x, dtype=float)
        out = np.zeros(xs.shape)
        (a, b) = self.source_interval
        (c, d) = self.sink_interval
        src = (xs >= a) & (xs <= b)
        snk = (xs >= c) & (xs <= d)
        out[src] = np.where(xs[src] < self.source_apex, 1.0, -1.0)
        out[src & (xs == self.source_apex)] = 0.0
        out[snk] = np.where(xs[snk] < self.sink_apex, -1.0, 1.0)
        out[snk & (xs == self.sink_apex)] = 0.0
        return float(out) if np.ndim(x) == 0 else out


def tent_potential(problem: TransportProblem) -> TentPotential:
    """The pointwise-extremal feasible potential (disjoint layouts only).

    Any feasible u satisfies |u(x)| <= min(x - lo, hi - x) on each side, and
    with strictly positive densities the bound is attained exactly by the
    tent pair, which therefore maximizes K.
    """
    if problem.layout != "disjoint":
        raise LayoutError(f"tent oracle requires a disjoint layout, got {problem.layout}")
    return TentPotential(problem.source.interval, problem.sink.interval)


def _tent_against_density(d: Density) -> float:
    """Closed form of int tent * density over one side where available."""
    lo, hi = d.interval
    mid = 0.5 * (lo + hi)
    if d.spec.kind == "uniform":
        return d.scale * 0.25 * (hi - lo) ** 2
    if d.spec.kind == "polynomial":
        c = np.asarray(d.spec.coefficients, dtype=float) * d.scale
        # int_lo^mid (x - lo) p(x) dx + int_mid^hi (hi - x) p(x) dx
        xp = npoly.polymulx(c)
        a_xp = npoly.polyint(xp)
        a_p = npoly.polyint(c)

        def seg(poly_anti, x1, x0):
            return npoly.polyval(x1, poly_anti) - npoly.polyval(x0, poly_anti)

        left = seg(a_xp, mid, lo) - lo * seg(a_p, mid, lo)
        right = hi * seg(a_p, hi, mid) - seg(a_xp, hi, mid)
        return float(left + right)
    tent = lambda x: np.minimum(x - lo, hi - x)
    return integrate_split(lambda x: tent(x) * pdf(d, x), [lo, mid, hi], DEFAULT_TOL)


def tent_value(problem: TransportProblem) -> float:
    """K[tent]: the limiting (maximal) Kantorovich value."""
    if problem.layout != "disjoint":
        raise LayoutError(f"tent oracle requires a disjoint layout, got {problem.layout}")
    return float(_tent_against_density(problem.source) + _tent_against_density(problem.sink))


def limit_constant(problem: TransportProblem, side: str) -> float:
    """Limit of the balance constant: the CDF at the interval midpoint.

    As k grows the slope field hardens to +-1 with the flip at the stress
    zero, and closing the potential forces equal lengths of the two slope
    regions, i.e. the zero sits at the midpoint.
    """
    d = problem.source if side == "source" else problem.sink
    lo, hi = d.interval
    return float(cdf(d, 0.5 * (lo + hi)))


@dataclass(frozen=True)
class ImprovementReport:
    best_improvement: float
    best_side: str
    best_index: int
    feasible_moves: int


def grid_improve_check(
    problem: TransportProblem,
    u: Callable,
    n: int = 101,
    step: Optional[float] = None,
    feas_tol: float = 1e-8,
) -> ImprovementReport:
    """Exhaustive single-coordinate ascent check of K on an n-point grid.

    The feasible set per side is |u_{i+1} - u_i| <= h with zero endpoints.
    Every interior move u_i +- step that stays feasible is scored by its
    exact (linear) change of the trapezoid K; the best change found is
    reported.  For the tent and for converged large-k solutions no move
    should improve beyond roundoff.
    """
    best = -np.inf
    best_side, best_idx = "source", -1
    feasible = 0

    for side, dens, k_sign in (("source", problem.source, 1.0), ("sink", problem.sink, -1.0)):
        lo, hi = dens.interval
        x = np.linspace(lo, hi, n)
        h = x[1] - x[0]
        local_step = 0.25 * h if step is None else step
        uu = np.asarray(u(x), dtype=float)

        violations = []
        if abs(uu[0]) > feas_tol or abs(uu[-1]) > feas_tol:
            violations.append(f"{side}: nonzero endpoints ({uu[0]:.3e}, {uu[-1]:.3e})")
        du = np.diff(uu)
        worst = float(np.abs(du).max())
        if worst > h + feas_tol:
            violations.append(f"{side}: |du| = {worst:.6e} exceeds h = {h:.6e}")
        if violations:
            raise FeasibilityError("input is infeasible on the grid", violations)

        w = np.full(n, h)
        w[0] = w[-1] = 0.5 * h
        grad = k_sign * w * pdf(dens, x)  # dK/du_i for the trapezoid K

        for direction in (+1.0, -1.0):
            d_new_left = du[:-1] + direction * local_step  # u_i moves: left increment
            d_new_right = du[1:] - direction * local_step
            ok = (np.abs(d_new_left) <= h + feas_tol) & (np.abs(d_new_right) <= h + feas_tol)
            gain = direction * local_step * grad[1:-1]
            feasible += int(np.count_nonzero(ok))
            if np.any(ok):
                i_rel = int(np.argmax(np.where(ok, gain, -np.inf)))
                if gain[i_rel] > best:
                    best = float(gain[i_rel])
                    best_side, best_idx = side, i_rel + 1

    return ImprovementReport(
        best_improvement=float(best),
        best_side=best_side,
        best_index=best_idx,
        feasible_moves=feasible,
    )
