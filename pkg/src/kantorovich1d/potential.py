"""Dual stress fields, balance constants, and the assembled potential.

On the source interval the stress solving theta' + f = 0 is
theta(x) = C - F_src(x); on the sink interval it is theta(x) = F_snk(x) - D.
The constants are pinned by requiring the potential, rebuilt from the
slope field eta(x) = slope_from_theta(k, theta(x)), to vanish at the right
endpoint of each side.  That mismatch integral is strictly monotone in the
trial constant (increasing on the source side, decreasing on the sink
side), so a bracketed root solve on (0,1) determines C and D uniquely.

The potential itself is assembled by cumulative adaptive quadrature of the
slope over a fixed 2049-point grid per side, with an extra split exactly at
the stress zero where the slope has its logarithmic corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from .density import Density, TransportProblem, cdf, inverse_cdf, validate_problem
from .dual_algebra import check_index, lambda_from_slope, slope_from_theta, K_CAP
from .errors import BracketError, DomainError, LayoutError, StateError
from .numerics import (
    DEFAULT_TOL,
    Bracket,
    Tolerances,
    _root_with_stats,
    integrate,
    integrate_cells,
)

GRID_POINTS = 2049
Side = Literal["source", "sink"]


@dataclass(frozen=True)
class DualField:
    """Affine-in-CDF stress on one side; `constant` may be set later."""

    side: Side
    density: Density
    constant: Optional[float] = None

    def with_constant(self, c: float) -> "DualField":
        return DualField(side=self.side, density=self.density, constant=float(c))


def theta_at(field_: DualField, x):
    """Stress value(s): C - F(x) on the source side, F(x) - D on the sink side."""
    if field_.constant is None:
        raise StateError(f"{field_.side} stress constant is unset")
    F = cdf(field_.density, x)
    if field_.side == "source":
        return field_.constant - F
    return F - field_.constant


def _stress_zero(field_: DualField, tol: Tolerances) -> float:
    return inverse_cdf(field_.density, field_.constant, tol)


def balance_mismatch(k: float, field_: DualField, tol: Tolerances = DEFAULT_TOL) -> float:
    """Integral of the slope field over the side, as a function of the trial
    constant: M_k on the source side (increasing), N_k on the sink side
    (decreasing).  Zero exactly when the potential closes at the right end.
    """
    k = check_index(k)
    if field_.constant is None:
        raise StateError("balance_mismatch needs a trial constant")
    if not 0.0 < field_.constant < 1.0:
        raise DomainError(f"trial constant must lie in (0,1), got {field_.constant!r}")
    lo, hi = field_.density.interval
    x0 = _stress_zero(field_, tol)
    f = lambda x: slope_from_theta(k, theta_at(field_, x))
    return integrate(f, lo, x0, tol) + integrate(f, x0, hi, tol)


def _expand_bracket(g, lo, hi, max_expand=40):
    """Widen [lo, hi] geometrically toward (0,1) until g changes sign."""
    flo, fhi = g(lo), g(hi)
    for _ in range(max_expand):
        if flo == 0.0 or fhi == 0.0 or (flo > 0.0) != (fhi > 0.0):
            return lo, hi
        lo /= 8.0
        hi = 1.0 - (1.0 - hi) / 8.0
        flo, fhi = g(lo), g(hi)
    raise BracketError(
        "no sign change of the balance mismatch in (0,1); "
        "the density likely violates strict positivity"
    )


@dataclass(frozen=True)
class ConstantSolve:
    value: float
    iterations: int
    residual: float


def _solve_constant(k: float, side: Side, problem: TransportProblem, tol: Tolerances) -> ConstantSolve:
    density = problem.source if side == "source" else problem.sink
    base = DualField(side=side, density=density)
    g = lambda t: balance_mismatch(k, base.with_constant(t), tol)
    lo, hi = _expand_bracket(g, 1e-6, 1.0 - 1e-6)
    root, evals = _root_with_stats(g, Bracket(lo, hi), tol)
    return ConstantSolve(value=root, iterations=evals, residual=g(root))


def solve_balance_constant(
    k: float, side: Side, problem: TransportProblem, tol: Tolerances = DEFAULT_TOL
) -> float:
    """The unique constant in (0,1) where the side's balance mismatch vanishes."""
    validate_problem(problem)
    return _solve_constant(k, side, problem, tol).value


@dataclass(frozen=True)
class SideSamples:
    """Sampled fields on one side's uniform grid."""

    side: Side
    x: np.ndarray
    theta: np.ndarray
    lam: np.ndarray
    eta: np.ndarray
    u: np.ndarray


@dataclass(frozen=True)
class SolveStats:
    c_iterations: int
    d_iterations: int
    c_residual: float
    d_residual: float
    quad_abs_tol: float
    root_abs_tol: float


@dataclass(frozen=True)
class PotentialSolution:
    """The analytic approximate potential at one index k.

    Immutable; independent k values may be solved fully in parallel.
    """

    k: float
    problem: TransportProblem
    C_k: float
    D_k: float
    x_plus: float
    x_minus: float
    source: SideSamples
    sink: SideSamples
    stats: SolveStats
    _interp_source: object = field(repr=False, compare=False, default=None)
    _interp_sink: object = field(repr=False, compare=False, default=None)

    def stress_field(self, side: Side) -> DualField:
        if side == "source":
            return DualField("source", self.problem.source, self.C_k)
        return DualField("sink", self.problem.sink, self.D_k)

    def stress_zero(self, side: Side) -> float:
        return self.x_plus if side == "source" else self.x_minus

    def samples(self, side: Side) -> SideSamples:
        return self.source if side == "source" else self.sink

    @property
    def sup_slope(self) -> float:
        return float(max(np.abs(self.source.eta).max(), np.abs(self.sink.eta).max()))

    @property
    def sup_u(self) -> float:
        return float(max(np.abs(self.source.u).max(), np.abs(self.sink.u).max()))

    @property
    def boundary_values(self) -> Tuple[float, float, float, float]:
        return (
            float(self.source.u[0]),
            float(self.source.u[-1]),
            float(self.sink.u[0]),
            float(self.sink.u[-1]),
        )


def _sample_side(k, field_: DualField, x0: float, tol: Tolerances, n: int) -> SideSamples:
    lo, hi = field_.density.interval
    x = np.linspace(lo, hi, n)
    theta = theta_at(field_, x)
    eta = slope_from_theta(k, theta)
    lam = lambda_from_slope(k, eta)
    cells = integrate_cells(
        lambda t: slope_from_theta(k, theta_at(field_, t)), x, tol, breaks=(x0,)
    )
    u = np.concatenate([[0.0], np.cumsum(cells)])
    return SideSamples(side=field_.side, x=x, theta=theta, lam=lam, eta=eta, u=u)


def solve_potential(
    k: float,
    problem: TransportProblem,
    tol: Tolerances = DEFAULT_TOL,
    grid_points: int = GRID_POINTS,
) -> PotentialSolution:
    """Solve both balance constants and assemble the potential of index k."""
    k = check_index(k)
    if k > K_CAP:
        raise DomainError(f"k={k} exceeds the certified cap {K_CAP}")
    validate_problem(problem)
    if problem.layout != "disjoint":
        raise LayoutError(
            f"certified solve requires disjoint supports, got {problem.layout}; "
            "use decompose()/solve_experimental() for the experimental path"
        )

    csol = _solve_constant(k, "source", problem, tol)
    dsol = _solve_constant(k, "sink", problem, tol)
    src_field = DualField("source", problem.source, csol.value)
    snk_field = DualField("sink", problem.sink, dsol.value)
    x_plus = _stress_zero(src_field, tol)
    x_minus = _stress_zero(snk_field, tol)

    source = _sample_side(k, src_field, x_plus, tol, grid_points)
    sink = _sample_side(k, snk_field, x_minus, tol, grid_points)
    stats = SolveStats(
        c_iterations=csol.iterations,
        d_iterations=dsol.iterations,
        c_residual=csol.residual,
        d_residual=dsol.residual,
        quad_abs_tol=tol.quad_abs_tol,
        root_abs_tol=tol.root_abs_tol,
    )
    return PotentialSolution(
        k=k,
        problem=problem,
        C_k=csol.value,
        D_k=dsol.value,
        x_plus=x_plus,
        x_minus=x_minus,
        source=source,
        sink=sink,
        stats=stats,
        _interp_source=PchipInterpolator(source.x, source.u, extrapolate=False),
        _interp_sink=PchipInterpolator(sink.x, sink.u, extrapolate=False),
    )


def evaluate_potential(sol: PotentialSolution, x):
    """Monotone-cubic interpolation of the sampled potential.

    Points outside both supports (in particular the gap between them)
    evaluate to 0, the unique continuous extension with zero boundary
    values on every endpoint.
    """
    xs = np.asarray(x, dtype=float)
    out = np.zeros(xs.shape)
    (a, b) = sol.problem.source.interval
    (c, d) = sol.problem.sink.interval
    in_src = (xs >= a) & (xs <= b)
    in_snk = (xs >= c) & (xs <= d)
    if np.any(in_src):
        out[in_src] = sol._interp_source(xs[in_src])
    if np.any(in_snk):
        out[in_snk] = sol._interp_sink(xs[in_snk])
    return float(out) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class SideProblem:
    """One component of the decomposition, solvable on its own."""

    side: Side
    density: Density
    interval: Tuple[float, float]
    mass: float
    experimental: bool


def decompose(problem: TransportProblem) -> List[SideProblem]:
    """Split into per-side components with zero boundary on any overlap.

    Disjoint and touching layouts give the two full sides; an overlapping
    layout gives the components of each support minus the closure of the
    other, every piece flagged experimental.
    """
    (a, b) = problem.source.interval
    (c, d) = problem.sink.interval
    if problem.layout in ("disjoint", "touching"):
        experimental = problem.layout == "touching"
        return [
            SideProblem("source", problem.source, (a, b), 1.0, experimental),
            SideProblem("sink", problem.sink, (c, d), 1.0, experimental),
        ]

    pieces: List[SideProblem] = []
    for side, dens, (lo, hi), (olo, ohi) in (
        ("source", problem.source, (a, b), (c, d)),
        ("sink", problem.sink, (c, d), (a, b)),
    ):
        for plo, phi in _interval_minus((lo, hi), (olo, ohi)):
            mass = cdf(dens, phi) - cdf(dens, plo)
            pieces.append(SideProblem(side, dens, (plo, phi), mass, True))
    return pieces


def _interval_minus(base, cut):
    lo, hi = base
    clo, chi = cut
    out = []
    if clo > lo:
        out.append((lo, min(hi, clo)))
    if chi < hi:
        out.append((max(lo, chi), hi))
    return out


@dataclass(frozen=True)
class ComponentSolution:
    piece: SideProblem
    constant: float
    x: np.ndarray
    eta: np.ndarray
    u: np.ndarray
    boundary_residual: float


def solve_component(
    k: float, piece: SideProblem, tol: Tolerances = DEFAULT_TOL, grid_points: int = 257
) -> ComponentSolution:
    """Experimental per-component solve with its own balance constant.

    The stress uses the component-local CDF, so the constant lives in
    (0, component mass); no coupling between components is assumed and the
    achieved right-endpoint residual is reported instead.
    """
    k = check_index(k)
    lo, hi = piece.interval
    base = cdf(piece.density, lo)

    def local_theta(t, x):
        F_local = cdf(piece.density, x) - base
        return (t - F_local) if piece.side == "source" else (F_local - t)

    def mismatch(t):
        fn = lambda x: slope_from_theta(k, local_theta(t, x))
        return integrate(fn, lo, hi, tol)

    eps = 1e-6 * piece.mass
    g = mismatch
    blo, bhi = eps, piece.mass - eps
    flo, fhi = g(blo), g(bhi)
    for _ in range(40):
        if flo == 0.0 or fhi == 0.0 or (flo > 0.0) != (fhi > 0.0):
            break
        blo /= 8.0
        bhi = piece.mass - (piece.mass - bhi) / 8.0
        flo, fhi = g(blo), g(bhi)
    else:
        raise BracketError("no sign change for the component balance constant")
    const, _ = _root_with_stats(g, Bracket(blo, bhi), tol)

    x = np.linspace(lo, hi, grid_points)
    eta = slope_from_theta(k, local_theta(const, x))
    cells = integrate_cells(lambda t: slope_from_theta(k, local_theta(const, t)), x, tol)
    u = np.concatenate([[0.0], np.cumsum(cells)])
    return ComponentSolution(
        piece=piece,
        constant=const,
        x=x,
        eta=eta,
        u=u,
        boundary_residual=float(abs(u[-1])),
    )


def solve_experimental(
    k: float, problem: TransportProblem, tol: Tolerances = DEFAULT_TOL
) -> List[ComponentSolution]:
    """Solve every component of a touching/overlapping layout independently."""
    validate_problem(problem)
    if problem.layout == "disjoint":
        raise LayoutError("disjoint layouts use solve_potential, not the experimental path")
    return [solve_component(k, piece, tol) for piece in decompose(problem)]
