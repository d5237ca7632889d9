"""Pointwise algebra of the regularized dual transformation.

For index k >= 1 the primal integrand is H_k(s) = exp(k(s^2-1)/2)/k, whose
derivative g(s) = s*exp(k(s^2-1)/2) maps [-1,1] monotonically onto [-1,1].
The scaled dual variable lam = exp(k(s^2-1)/2) lives in [exp(-k/2), 1] and
is tied to the dual stress theta = g(s) by the algebraic identity

    theta^2 = E_k(lam),    E_k(lam) = lam^2 * (1 + (2/k) * ln(lam)),

with E_k strictly increasing on its band.  Everything here is a scalar (or
elementwise-array) function with no state, so concurrent use is
unrestricted.

Slope recovery inverts g directly in logarithmic form

    ln|theta| = ln(s) + k(s^2-1)/2,    s in (0, 1],

which stays well conditioned for large k where lam itself underflows; the
E_k route is kept as a cross-check where it is representable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InfeasibleStressError
from .numerics import DEFAULT_TOL, Bracket, Tolerances, find_root_monotone

# Beyond this index double precision cannot tell the potential from its
# tent limit, so the certified pipeline refuses larger k.
K_CAP = 4096.0

_DOMAIN_SLACK = 1e-12
_EXP_OVERFLOW = 709.0  # exp() overflows just above this


def check_index(k: float) -> float:
    k = float(k)
    if not math.isfinite(k) or k < 1.0:
        raise DomainError(f"regularization index must be finite and >= 1, got {k!r}")
    return k


def lambda_floor(k: float) -> float:
    """Lower end exp(-k/2) of the dual feasible band (0 if it underflows)."""
    return math.exp(-0.5 * k) if k < 1416.0 else 0.0


def H(k: float, s):
    """Regularized cost H_k(s) = exp(k(s^2-1)/2)/k.

    For |s| <= 1 the value lies in (0, 1/k].  Exponent overflow (|s| > 1 at
    large k) is reported as an explicit infinity rather than an exception.
    """
    k = check_index(k)
    x = np.asarray(s, dtype=float)
    e = 0.5 * k * (x * x - 1.0)
    out = np.where(e > _EXP_OVERFLOW, np.inf, np.exp(np.minimum(e, _EXP_OVERFLOW)) / k)
    return float(out) if np.ndim(s) == 0 else out


def psi_star(k: float, zeta: float, check_domain: bool = True) -> float:
    """Legendre conjugate value zeta * (ln(k*zeta) - 1) for zeta in (0, 1/k]."""
    k = check_index(k)
    zeta = float(zeta)
    if check_domain and not (0.0 < zeta <= (1.0 + _DOMAIN_SLACK) / k):
        raise DomainError(f"zeta={zeta!r} outside (0, 1/k] for k={k}")
    if zeta <= 0.0:
        raise DomainError(f"psi_star needs zeta > 0, got {zeta!r}")
    return zeta * (math.log(k * zeta) - 1.0)


def E(k: float, lam: float) -> float:
    """E_k(lam) = lam^2 (1 + (2/k) ln lam), strictly increasing on the band."""
    k = check_index(k)
    lam = float(lam)
    floor = lambda_floor(k)
    if lam < floor * (1.0 - 1e-9) or lam > 1.0 + _DOMAIN_SLACK:
        raise DomainError(f"lam={lam!r} outside [exp(-k/2), 1] = [{floor!r}, 1] for k={k}")
    if lam <= 0.0:
        return 0.0  # only reachable when exp(-k/2) underflowed
    val = lam * lam * (1.0 + (2.0 / k) * math.log(lam))
    # Roundoff at the lower band edge can leave a tiny negative remnant.
    return val if val > 0.0 else 0.0


def E_inv(k: float, y: float, tol: Tolerances = DEFAULT_TOL) -> float:
    """Inverse of E_k on [exp(-k/2), 1], by safeguarded bracketed root finding."""
    k = check_index(k)
    y = float(y)
    if not -_DOMAIN_SLACK <= y <= 1.0 + _DOMAIN_SLACK:
        raise DomainError(f"E_inv needs y in [0, 1], got {y!r}")
    floor = lambda_floor(k)
    if y <= 0.0:
        return floor
    if y >= 1.0:
        return 1.0
    return find_root_monotone(lambda lam: E(k, lam) - y, Bracket(floor, 1.0), tol)


def _solve_slope_batch(k: float, t: np.ndarray) -> np.ndarray:
    """Solve ln(s) + k(s^2-1)/2 = ln(t) for s in (0,1], elementwise.

    t must already be in (0, 1).  The residual is increasing in s with a
    guaranteed bracket [t, 1] (since g(s) <= s); Newton steps are clipped
    into the shrinking bracket, so the iteration cannot escape or stall.
    """
    lnt = np.log(t)
    # The residual plateaus at roundoff of the logarithms, so the step
    # tolerance must scale with |ln t| or tiny-theta entries never settle.
    rel_tol = 4e-16 * (2.0 + np.abs(lnt))
    lo = t.copy()
    hi = np.ones_like(t)
    s = np.clip(1.0 + lnt / (k + 1.0), lo, hi)  # large-k asymptote as initial guess
    for _ in range(90):
        h = np.log(s) + 0.5 * k * (s * s - 1.0) - lnt
        neg = h < 0.0
        lo = np.where(neg, s, lo)
        hi = np.where(neg, hi, s)
        step = h / (1.0 / s + k * s)
        s_new = s - step
        # The current point always sits on one bracket endpoint, so only a
        # strict escape triggers the bisection fallback.
        outside = (s_new < lo) | (s_new > hi)
        s_new = np.where(outside, 0.5 * (lo + hi), s_new)
        settled = (np.abs(s_new - s) <= rel_tol * np.abs(s_new) + 1e-300) | (
            hi - lo <= 4e-16 * hi
        )
        s = s_new
        if np.all(settled):
            break
    return s


def slope_from_theta(k: float, theta):
    """The unique s in [-1,1] with s * exp(k(s^2-1)/2) = theta.

    Accepts scalars or arrays.  theta = 0 maps to s = 0 exactly (the
    removable singularity at the stress zero); |theta| = 1 maps to +-1.
    """
    k = check_index(k)
    th = np.asarray(theta, dtype=float)
    flat = np.atleast_1d(th).ravel()
    t = np.abs(flat)
    if np.any(t > 1.0 + _DOMAIN_SLACK):
        worst = float(flat[np.argmax(t)])
        raise InfeasibleStressError(
            f"|theta| <= 1 required (|u_x| <= 1 would be violated), got theta={worst!r}"
        )
    t = np.minimum(t, 1.0)
    out = np.ones_like(t)
    interior = (t > 0.0) & (t < 1.0)
    if np.any(interior):
        out[interior] = _solve_slope_batch(k, t[interior])
    out = np.where(flat < 0.0, -out, out)
    out[t == 0.0] = 0.0
    return float(out[0]) if th.ndim == 0 else out.reshape(th.shape)


def lambda_from_theta(k: float, theta: float, tol: Tolerances = DEFAULT_TOL) -> float:
    """Scaled dual variable lam = E_k^{-1}(theta^2), in [exp(-k/2), 1]."""
    k = check_index(k)
    theta = float(theta)
    if abs(theta) > 1.0 + _DOMAIN_SLACK:
        raise InfeasibleStressError(f"|theta| <= 1 required, got {theta!r}")
    if theta == 0.0:
        return lambda_floor(k)
    return E_inv(k, min(theta * theta, 1.0), tol)


def xi_from_slope(k: float, s):
    """Geometric-map value xi = k(s^2-1)/2 (<= 0 on the feasible band)."""
    x = np.asarray(s, dtype=float)
    out = 0.5 * k * (x * x - 1.0)
    return float(out) if np.ndim(s) == 0 else out


def lambda_from_slope(k: float, s):
    """lam = exp(k(s^2-1)/2); underflow at huge k flushes cleanly to 0."""
    x = np.asarray(s, dtype=float)
    out = np.exp(0.5 * k * (x * x - 1.0))
    return float(out) if np.ndim(s) == 0 else out


@dataclass(frozen=True)
class DualScalars:
    """One consistent pointwise bundle of the dual quantities."""

    k: float
    theta: float
    slope: float
    lam: float
    zeta: float
    xi: float

    def __post_init__(self):
        if self.xi > 1e-12:
            raise DomainError(f"xi must be <= 0, got {self.xi!r}")
        if not abs(self.lam - self.k * self.zeta) <= 1e-12 * (1.0 + self.lam):
            raise DomainError("lam must equal k * zeta")
        if abs(self.theta) > 1.0 + _DOMAIN_SLACK:
            raise InfeasibleStressError(f"|theta| <= 1 required, got {self.theta!r}")


def dual_scalars(k: float, theta: float) -> DualScalars:
    """Assemble slope/lam/zeta/xi consistently from a stress value."""
    k = check_index(k)
    s = slope_from_theta(k, theta)
    xi = xi_from_slope(k, s)
    lam = math.exp(xi)
    return DualScalars(k=k, theta=float(theta), slope=s, lam=lam, zeta=lam / k, xi=xi)
