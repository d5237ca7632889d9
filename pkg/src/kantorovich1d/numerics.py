"""Deterministic numeric kernels: adaptive Simpson quadrature and bracketed
monotone root finding.

Both kernels are pure functions of their inputs (no globals, no RNG), so
identical inputs give bit-identical outputs and concurrent use is safe.

The quadrature is classic adaptive Simpson with Richardson correction,
implemented as a batched work queue: at every wave all still-unconverged
intervals are split at once and the integrand is evaluated on a single
array of midpoints.  Integrands therefore see array arguments when they
support them; scalar-only callables are detected and looped transparently.
The per-interval error budget is redistributed proportionally to width, so
refinement concentrates where the integrand bends (for the transport
integrands: the logarithmic corner at the zero of the dual stress).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BracketError,
    DomainError,
    EvaluationError,
    QuadratureError,
    RootConvergenceError,
)


@dataclass(frozen=True)
class Tolerances:
    """Explicit accuracy knobs, passed everywhere instead of module globals."""

    quad_abs_tol: float = 1e-10
    root_abs_tol: float = 1e-12
    max_quad_depth: int = 40
    max_root_iters: int = 200

    def __post_init__(self):
        if not (self.quad_abs_tol > 0.0 and self.root_abs_tol > 0.0):
            raise ValueError("tolerances must be strictly positive")
        if self.max_quad_depth < 1 or self.max_root_iters < 1:
            raise ValueError("iteration caps must be >= 1")


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class Bracket:
    """A sign-change interval [lo, hi] for the root solver."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise BracketError(f"bracket endpoints must be finite, got [{self.lo}, {self.hi}]")
        if not self.lo < self.hi:
            raise BracketError(f"bracket requires lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


class _BatchFn:
    """Adapt a scalar- or array-valued callable to array-in/array-out."""

    __slots__ = ("fn", "scalar_only")

    def __init__(self, fn: Callable[[float], float]):
        self.fn = fn
        self.scalar_only = False

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        if xs.size == 0:
            return np.empty(0)
        if not self.scalar_only:
            try:
                ys = np.asarray(self.fn(xs), dtype=float)
            except (TypeError, ValueError):
                self.scalar_only = True
            else:
                if ys.shape == xs.shape:
                    return ys
                if ys.ndim == 0:
                    return np.full(xs.shape, float(ys))
                raise EvaluationError(
                    f"integrand returned shape {ys.shape} for input shape {xs.shape}"
                )
        return np.array([float(self.fn(float(x))) for x in xs], dtype=float)


def _require_finite(xs: np.ndarray, ys: np.ndarray) -> None:
    bad = ~np.isfinite(ys)
    if bad.any():
        x0 = float(xs[bad][0])
        raise EvaluationError(f"non-finite integrand value {ys[bad][0]!r} at x={x0!r}")


def _adaptive_core(fn, a, b, cell, budget, max_depth):
    """Run the batched Simpson refinement.

    a, b       initial interval endpoints (equal-length arrays)
    cell       index of the output cell each interval accumulates into
    budget     per-interval absolute error budget (sums to the call budget)

    Returns (cell_sums, cell_err, exhausted) where cell_err is the
    accumulated |error estimate| per cell and exhausted is True if any
    leaf was force-accepted at the depth cap while still over budget.
    """
    ncells = (int(cell.max()) + 1) if cell.size else 0
    sums = np.zeros(ncells)
    errs = np.zeros(ncells)
    exhausted = False

    fa = fn(a)
    _require_finite(a, fa)
    fb = fn(b)
    _require_finite(b, fb)
    m = 0.5 * (a + b)
    fm = fn(m)
    _require_finite(m, fm)
    s = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    depth = 0

    while a.size:
        m = 0.5 * (a + b)
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        xs = np.concatenate([lm, rm])
        ys = fn(xs)
        _require_finite(xs, ys)
        flm, frm = ys[: a.size], ys[a.size:]

        sl = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        sr = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        s2 = sl + sr
        err = (s2 - s) / 15.0

        converged = np.abs(err) <= budget
        # Cannot subdivide below float spacing; treat as converged.
        degenerate = (lm <= a) | (m <= lm) | (rm <= m) | (b <= rm)
        at_cap = depth >= max_depth
        accept = converged | degenerate | at_cap
        if at_cap and not bool(converged.all()):
            exhausted = True

        acc = accept
        np.add.at(sums, cell[acc], s2[acc] + err[acc])
        np.add.at(errs, cell[acc], np.abs(err[acc]))

        keep = ~accept
        a = np.concatenate([a[keep], m[keep]])
        b = np.concatenate([m[keep], b[keep]])
        fa = np.concatenate([fa[keep], fm[keep]])
        fb = np.concatenate([fm[keep], fb[keep]])
        fm = np.concatenate([flm[keep], frm[keep]])
        s = np.concatenate([sl[keep], sr[keep]])
        cell = np.concatenate([cell[keep], cell[keep]])
        budget = np.concatenate([0.5 * budget[keep], 0.5 * budget[keep]])
        depth += 1

    return sums, errs, exhausted


def integrate(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: Tolerances = DEFAULT_TOL,
) -> float:
    """Adaptive Simpson estimate Q of the integral of f over [lo, hi].

    Guarantees |Q - integral| <= quad_abs_tol * (1 + |Q|) unless the depth
    cap is exhausted, in which case a QuadratureError carrying the best
    estimate and the achieved error bound is raised.
    """
    lo = float(lo)
    hi = float(hi)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise DomainError(f"integration endpoints must be finite, got [{lo}, {hi}]")
    if lo > hi:
        raise DomainError(f"integration requires lo <= hi, got [{lo}, {hi}]")
    if lo == hi:
        return 0.0
    a = np.array([lo])
    b = np.array([hi])
    cell = np.array([0])
    budget = np.array([tol.quad_abs_tol])
    sums, errs, exhausted = _adaptive_core(_BatchFn(f), a, b, cell, budget, tol.max_quad_depth)
    q = float(sums[0])
    achieved = float(errs[0])
    if exhausted and achieved > tol.quad_abs_tol * (1.0 + abs(q)):
        raise QuadratureError(
            f"depth {tol.max_quad_depth} exhausted on [{lo}, {hi}]: "
            f"best estimate {q!r}, error bound {achieved:.3e}",
            best_estimate=q,
            error_bound=achieved,
        )
    return q


def integrate_split(
    f: Callable[[float], float],
    points: Sequence[float],
    tol: Tolerances = DEFAULT_TOL,
) -> float:
    """Integrate f over [points[0], points[-1]] split at the interior points.

    Use when the integrand has known kinks: each piece converges on smooth
    data instead of hunting the corner.
    """
    pts = [float(p) for p in points]
    if len(pts) < 2:
        raise DomainError("integrate_split needs at least two points")
    if any(q < p for p, q in zip(pts, pts[1:])):
        raise DomainError(f"split points must be ascending, got {pts}")
    return float(sum(integrate(f, p, q, tol) for p, q in zip(pts, pts[1:])))


def integrate_cells(
    f: Callable[[float], float],
    edges: np.ndarray,
    tol: Tolerances = DEFAULT_TOL,
    breaks: Sequence[float] = (),
) -> np.ndarray:
    """Per-cell integrals of f over consecutive [edges[i], edges[i+1]].

    The error budget quad_abs_tol is shared across all cells in proportion
    to width, so the cumulative sum of the result is accurate to the same
    budget as a single integrate() call.  `breaks` are extra split points
    (e.g. the known zero of the dual stress) inserted into whichever cell
    contains them.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2:
        raise DomainError("edges must be a 1-D array with at least two entries")
    if np.any(np.diff(edges) < 0):
        raise DomainError("edges must be ascending")

    a_list, b_list, cell_list = [], [], []
    inner = sorted(float(x) for x in breaks)
    for i in range(edges.size - 1):
        lo, hi = edges[i], edges[i + 1]
        if hi <= lo:
            continue
        cuts = [x for x in inner if lo < x < hi]
        pieces = [lo] + cuts + [hi]
        for p, q in zip(pieces, pieces[1:]):
            a_list.append(p)
            b_list.append(q)
            cell_list.append(i)

    ncells = edges.size - 1
    if not a_list:
        return np.zeros(ncells)
    a = np.array(a_list)
    b = np.array(b_list)
    cell = np.array(cell_list)
    total_w = float(np.sum(b - a))
    budget = tol.quad_abs_tol * (b - a) / total_w if total_w > 0 else np.full(a.shape, tol.quad_abs_tol)

    sums, errs, exhausted = _adaptive_core(_BatchFn(f), a, b, cell, budget, tol.max_quad_depth)
    out = np.zeros(ncells)
    out[: sums.size] = sums
    q = float(np.sum(sums))
    achieved = float(np.sum(errs))
    if exhausted and achieved > tol.quad_abs_tol * (1.0 + abs(q)):
        raise QuadratureError(
            f"depth {tol.max_quad_depth} exhausted over {ncells} cells: "
            f"total {q!r}, error bound {achieved:.3e}",
            best_estimate=q,
            error_bound=achieved,
        )
    return out


def _eval_scalar(g, x: float) -> float:
    y = float(g(x))
    if not np.isfinite(y):
        raise EvaluationError(f"non-finite value {y!r} at x={x!r}")
    return y


def find_root_monotone(
    g: Callable[[float], float],
    bracket: Bracket,
    tol: Tolerances = DEFAULT_TOL,
) -> float:
    """Root of a monotone g inside `bracket`, by secant steps safeguarded
    with bisection.

    Requires g(lo) and g(hi) of opposite (or zero) sign.  The returned
    point always lies inside the input bracket, and the final bracket
    width is <= root_abs_tol (or the local float spacing if that is
    coarser).  If the bracket fails to halve over two consecutive secant
    steps a bisection step is forced, so convergence is guaranteed.
    """
    root, _ = _root_with_stats(g, bracket, tol)
    return root


def _root_with_stats(g, bracket: Bracket, tol: Tolerances):
    lo, hi = bracket.lo, bracket.hi
    flo = _eval_scalar(g, lo)
    if flo == 0.0:
        return lo, 1
    fhi = _eval_scalar(g, hi)
    if fhi == 0.0:
        return hi, 2
    if (flo > 0.0) == (fhi > 0.0):
        raise BracketError(
            f"no sign change on [{lo}, {hi}]: g(lo)={flo:.6g}, g(hi)={fhi:.6g}"
        )

    evals = 2
    widths = [hi - lo]
    while hi - lo > tol.root_abs_tol:
        if evals - 2 >= tol.max_root_iters:
            raise RootConvergenceError(
                f"root iteration cap {tol.max_root_iters} hit, bracket width {hi - lo:.3e}"
            )
        w = hi - lo
        stalled = len(widths) >= 3 and w > 0.5 * widths[-3]
        x = hi - fhi * w / (fhi - flo)
        if stalled or not (lo < x < hi):
            x = lo + 0.5 * w
        if not (lo < x < hi):
            break  # float spacing reached; cannot split further
        fx = _eval_scalar(g, x)
        evals += 1
        if fx == 0.0:
            return x, evals
        if (fx > 0.0) == (fhi > 0.0):
            hi, fhi = x, fx
        else:
            lo, flo = x, fx
        widths.append(hi - lo)
    return lo + 0.5 * (hi - lo), evals
