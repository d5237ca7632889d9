"""Densities on closed intervals, their CDFs, and the transport problem.

A density is one of three families: uniform, polynomial (coefficients in
increasing degree) or tabulated (positive values at sorted nodes).  The
families keep every CDF either closed-form or a cached monotone
interpolant, which is what the downstream solver needs: it only ever
touches a density through cdf / inverse_cdf / pdf.

Strict positivity on the closed interval is enforced at construction by a
deterministic 1025-point scan plus the endpoints: a density touching zero
would destroy strict monotonicity of the CDF and with it the invertibility
the balance-constant solve relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.interpolate import PchipInterpolator

from .errors import BalanceError, DomainError, PositivityError
from .numerics import DEFAULT_TOL, Bracket, Tolerances, find_root_monotone, integrate

POSITIVITY_GRID = 1025
BALANCE_TOL = 1e-6
NORMALIZED_TOL = 1e-9

Kind = Literal["uniform", "polynomial", "tabulated"]
Layout = Literal["disjoint", "touching", "overlapping"]


@dataclass(frozen=True)
class DensitySpec:
    """Declarative description of one density family on an interval."""

    kind: Kind
    interval: Tuple[float, float]
    coefficients: Optional[Tuple[float, ...]] = None
    nodes: Optional[Tuple[float, ...]] = None
    values: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        lo, hi = self.interval
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise DomainError(f"interval must satisfy lo < hi, got {self.interval}")
        if self.kind == "uniform":
            pass
        elif self.kind == "polynomial":
            if not self.coefficients:
                raise DomainError("polynomial spec needs coefficients")
            object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        elif self.kind == "tabulated":
            if not self.nodes or not self.values or len(self.nodes) != len(self.values):
                raise DomainError("tabulated spec needs matching nodes and values")
            nodes = tuple(float(x) for x in self.nodes)
            values = tuple(float(v) for v in self.values)
            if len(nodes) < 2 or any(q <= p for p, q in zip(nodes, nodes[1:])):
                raise DomainError("tabulated nodes must be strictly ascending, length >= 2")
            if nodes[0] != lo or nodes[-1] != hi:
                raise DomainError("tabulated nodes must span the interval exactly")
            if any(v <= 0.0 for v in values):
                raise PositivityError(f"tabulated values must be positive, got min {min(values)}")
            object.__setattr__(self, "nodes", nodes)
            object.__setattr__(self, "values", values)
        else:
            raise DomainError(f"unknown density kind {self.kind!r}")


@dataclass(frozen=True)
class Density:
    """A positive density = scale * (raw family values), with cached mass.

    Immutable after construction; safe for shared concurrent reads.
    """

    spec: DensitySpec
    scale: float
    mass: float
    normalized: bool
    pdf_min: float
    pdf_max: float
    _forms: object = field(default=None, repr=False, compare=False)

    @property
    def interval(self) -> Tuple[float, float]:
        return self.spec.interval


class _UniformForms:
    def __init__(self, lo: float):
        self.lo = lo

    def pdf(self, x):
        return np.ones_like(x)

    def cdf(self, x):
        return x - self.lo


class _PolynomialForms:
    def __init__(self, coefficients, lo: float):
        self.coeffs = np.asarray(coefficients, dtype=float)
        self.anti = npoly.polyint(self.coeffs)
        self.anti_lo = float(npoly.polyval(lo, self.anti))

    def pdf(self, x):
        return npoly.polyval(x, self.coeffs)

    def cdf(self, x):
        return npoly.polyval(x, self.anti) - self.anti_lo


class _TabulatedForms:
    def __init__(self, nodes, values):
        nodes = np.asarray(nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        # Monotone cubic through the trapezoid cumulative values keeps the
        # interpolated CDF strictly increasing, hence invertible.
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(nodes))])
        self.interp = PchipInterpolator(nodes, cum, extrapolate=False)
        self.deriv = self.interp.derivative()

    def pdf(self, x):
        return self.deriv(x)

    def cdf(self, x):
        return self.interp(x)


def _make_forms(spec: DensitySpec):
    if spec.kind == "uniform":
        return _UniformForms(spec.interval[0])
    if spec.kind == "polynomial":
        return _PolynomialForms(spec.coefficients, spec.interval[0])
    return _TabulatedForms(spec.nodes, spec.values)


def make_density(spec: DensitySpec) -> Density:
    """Build a Density: quadrature mass plus a strict-positivity scan."""
    lo, hi = spec.interval
    forms = _make_forms(spec)

    grid = np.linspace(lo, hi, POSITIVITY_GRID)
    pdf_vals = forms.pdf(grid)
    # Strict positivity on the open interval; the endpoints may touch zero
    # (e.g. 3x^2 on (0,1)) without hurting strict monotonicity of the CDF.
    bad = pdf_vals[1:-1] <= 0.0
    if bad.any():
        x0 = float(grid[1:-1][bad][0])
        raise PositivityError(
            f"density is not strictly positive at x={x0!r} ({pdf_vals[1:-1][bad][0]!r})"
        )
    if pdf_vals[0] < 0.0 or pdf_vals[-1] < 0.0:
        raise PositivityError("density is negative at an endpoint")

    mass = integrate(forms.pdf, lo, hi)
    if mass <= 0.0:
        raise PositivityError(f"density mass {mass!r} is not positive")
    return Density(
        spec=spec,
        scale=1.0,
        mass=mass,
        normalized=abs(mass - 1.0) <= NORMALIZED_TOL,
        pdf_min=float(pdf_vals.min()),
        pdf_max=float(pdf_vals.max()),
        _forms=forms,
    )


def normalize(d: Density) -> Density:
    """Rescale to unit mass.  Idempotent: a unit-mass density is returned as is."""
    if d.mass <= 0.0:
        raise PositivityError(f"cannot normalize degenerate density of mass {d.mass!r}")
    if d.normalized and d.mass == 1.0:
        return d
    factor = 1.0 / d.mass
    return replace(
        d,
        scale=d.scale * factor,
        mass=1.0,
        normalized=True,
        pdf_min=d.pdf_min * factor,
        pdf_max=d.pdf_max * factor,
    )


def _check_in_interval(d: Density, x: np.ndarray) -> None:
    lo, hi = d.interval
    slack = 1e-12 * (1.0 + abs(lo) + abs(hi))
    xmin, xmax = float(np.min(x)), float(np.max(x))
    if xmin < lo - slack or xmax > hi + slack:
        raise DomainError(f"x={xmin if xmin < lo - slack else xmax!r} outside interval [{lo}, {hi}]")


def pdf(d: Density, x):
    """Density value(s) at x (scalar or array), scale included."""
    xs = np.asarray(x, dtype=float)
    _check_in_interval(d, xs)
    lo, hi = d.interval
    out = d.scale * d._forms.pdf(np.clip(xs, lo, hi))
    return float(out) if np.ndim(x) == 0 else out


def cdf(d: Density, x):
    """Cumulative mass from the left endpoint to x; in [0,1] when normalized."""
    xs = np.asarray(x, dtype=float)
    _check_in_interval(d, xs)
    lo, hi = d.interval
    out = d.scale * d._forms.cdf(np.clip(xs, lo, hi))
    return float(out) if np.ndim(x) == 0 else out


def inverse_cdf(d: Density, p: float, tol: Tolerances = DEFAULT_TOL) -> float:
    """The x with cdf(d, x) = p, for p in [0, 1]."""
    p = float(p)
    if not 0.0 <= p <= 1.0 + 1e-12:
        raise DomainError(f"inverse_cdf needs p in [0,1], got {p!r}")
    lo, hi = d.interval
    if p <= 0.0:
        return lo
    if p >= 1.0:
        return hi
    if d.spec.kind == "uniform":
        return lo + p / (d.scale)
    # Tighten the bracket target so |cdf(x) - p| <= root_abs_tol even for
    # steep densities.
    slope_cap = max(1.0, d.pdf_max)
    inner = Tolerances(
        quad_abs_tol=tol.quad_abs_tol,
        root_abs_tol=tol.root_abs_tol / slope_cap,
        max_quad_depth=tol.max_quad_depth,
        max_root_iters=tol.max_root_iters,
    )
    return find_root_monotone(lambda x: cdf(d, x) - p, Bracket(lo, hi), inner)


@dataclass(frozen=True)
class TransportProblem:
    """Source density on (a,b), sink density on (c,d), with layout metadata."""

    source: Density
    sink: Density
    layout: Layout

    @property
    def domain_length(self) -> float:
        (a, b) = self.source.interval
        (c, d) = self.sink.interval
        return (b - a) + (d - c)


def classify_layout(source_interval, sink_interval) -> Layout:
    a, b = source_interval
    c, d = sink_interval
    if b < c or d < a:
        return "disjoint"
    if b == c or d == a:
        return "touching"
    return "overlapping"


def make_problem(source: Density, sink: Density) -> TransportProblem:
    return TransportProblem(
        source=source,
        sink=sink,
        layout=classify_layout(source.interval, sink.interval),
    )


@dataclass(frozen=True)
class ProblemDiagnostics:
    layout: Layout
    experimental: bool
    source_balance_residual: float
    sink_balance_residual: float
    source_pdf_min: float
    sink_pdf_min: float
    domain_length: float


def validate_problem(p: TransportProblem) -> ProblemDiagnostics:
    """Check the unit-mass balance condition and classify the layout.

    Raises BalanceError when either mass is off by more than 1e-6; the
    touching/overlapping layouts are reported with the experimental flag
    set (the certified solver path accepts only disjoint supports).
    """
    res_src = abs(p.source.mass - 1.0)
    res_snk = abs(p.sink.mass - 1.0)
    if res_src > BALANCE_TOL or res_snk > BALANCE_TOL:
        raise BalanceError(
            f"densities must both have unit mass (residuals {res_src:.3e}, {res_snk:.3e}); "
            "apply normalize() first"
        )
    return ProblemDiagnostics(
        layout=p.layout,
        experimental=p.layout != "disjoint",
        source_balance_residual=res_src,
        sink_balance_residual=res_snk,
        source_pdf_min=p.source.pdf_min,
        sink_pdf_min=p.sink.pdf_min,
        domain_length=p.domain_length,
    )


def uniform_density(lo: float, hi: float, normalized: bool = True) -> Density:
    """Convenience constructor used throughout the tests and the CLI."""
    d = make_density(DensitySpec(kind="uniform", interval=(lo, hi)))
    return normalize(d) if normalized else d


def polynomial_density(coefficients, lo: float, hi: float, normalized: bool = True) -> Density:
    d = make_density(DensitySpec(kind="polynomial", interval=(lo, hi), coefficients=tuple(coefficients)))
    return normalize(d) if normalized else d
