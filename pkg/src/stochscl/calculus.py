"""Entropy pairs, mollifiers, entropy fluxes and doubled test functions.

The approximate absolute value uses a polynomial profile,

    beta''(r) = (15/8) (1 - r^2)^2  on [-1, 1],  0 outside,

so ``beta'`` rises from -1 to 1 on ``[-1, 1]`` and ``beta(r) = |r| - 5/16``
for ``|r| >= 1``. Scaling gives ``beta_eps(r) = eps * beta(r / eps)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import FluxModel

PROFILE_M1 = 5.0 / 16.0
PROFILE_M2 = 15.0 / 8.0

_GL5_NODES, _GL5_WEIGHTS = np.polynomial.legendre.leggauss(5)


def _profile_d2(r):
    r = np.asarray(r, dtype=float)
    return np.where(np.abs(r) <= 1.0, PROFILE_M2 * (1.0 - r * r) ** 2, 0.0)


def _profile_d1(r):
    r = np.asarray(r, dtype=float)
    rc = np.clip(r, -1.0, 1.0)
    core = PROFILE_M2 * (rc - 2.0 * rc**3 / 3.0 + rc**5 / 5.0)
    return np.where(np.abs(r) < 1.0, core, np.sign(r))


def _profile(r):
    r = np.asarray(r, dtype=float)
    rc = np.clip(r, -1.0, 1.0)
    r2 = rc * rc
    core = PROFILE_M2 * r2 * (0.5 - r2 / 6.0 + r2 * r2 / 30.0)
    return np.where(np.abs(r) < 1.0, core, np.abs(r) - PROFILE_M1)


def _profile_d3(r):
    r = np.asarray(r, dtype=float)
    return np.where(np.abs(r) <= 1.0, -4.0 * PROFILE_M2 * r * (1.0 - r * r), 0.0)


@dataclass(frozen=True, eq=False)
class EntropyPair:
    """Smooth convex approximation ``beta_eps`` of ``|r|`` and its derivatives."""

    eps: float
    beta: Callable
    dbeta: Callable
    d2beta: Callable
    M1: float
    M2: float
    d3beta: Callable | None = None

    def reflected(self) -> "EntropyPair":
        """The pair for ``r -> beta(-r)``."""
        b, db, d2b, d3b = self.beta, self.dbeta, self.d2beta, self.d3beta
        neg = lambda r: -np.asarray(r, dtype=float)  # noqa: E731
        return EntropyPair(
            self.eps,
            lambda r: b(neg(r)),
            lambda r: -db(neg(r)),
            lambda r: d2b(neg(r)),
            self.M1,
            self.M2,
            (lambda r: -d3b(neg(r))) if d3b is not None else None,
        )


def build_entropy_pair(eps: float) -> EntropyPair:
    if not eps > 0:
        raise ValueError("eps must be positive")
    e = float(eps)
    return EntropyPair(
        eps=e,
        beta=lambda r: e * _profile(np.asarray(r, dtype=float) / e),
        dbeta=lambda r: _profile_d1(np.asarray(r, dtype=float) / e),
        d2beta=lambda r: _profile_d2(np.asarray(r, dtype=float) / e) / e,
        M1=PROFILE_M1,
        M2=PROFILE_M2,
        d3beta=lambda r: _profile_d3(np.asarray(r, dtype=float) / e) / (e * e),
    )


# ---------------------------------------------------------------------------
# Entropy fluxes


def entropy_flux(pair: EntropyPair, flux: FluxModel, a: float, b: float) -> float:
    """``F^beta(a, b) = int_b^a beta'(s - b) F'(s) ds`` by composite 5-point
    Gauss-Legendre on panels no wider than ``eps/4``.

    The integral runs from ``b`` to ``a``, so it changes sign with the
    orientation of the interval.
    """
    a, b = float(a), float(b)
    if a == b:
        return 0.0
    e = pair.eps
    # panel edges include the kinks b +- eps of beta', so each panel sees a
    # single polynomial piece
    cuts = [c for c in (b - e, b + e) if min(a, b) < c < max(a, b)]
    knots = sorted({a, b, *cuts}, reverse=a < b)
    total = 0.0
    for p0, p1 in zip(knots[:-1], knots[1:]):
        n_panels = max(1, int(np.ceil(abs(p1 - p0) / (e / 4.0) - 1e-12)))
        edges = np.linspace(p0, p1, n_panels + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        s = mid[:, None] + half[:, None] * _GL5_NODES[None, :]
        vals = pair.dbeta(s - b) * flux.df(s)
        total += float(np.sum(half[:, None] * _GL5_WEIGHTS[None, :] * vals))
    return total


def entropy_flux_array(pair: EntropyPair, flux: FluxModel, a, b):
    """Vectorized ``F^beta(a, b)`` for array arguments.

    Only ``|s - b| < eps`` needs quadrature (4 Gauss-Legendre panels of width
    ``eps/4`` per side, exact for polynomial ``F'`` up to degree 4); beyond it
    ``beta' = +-1`` and the integral is a flux difference.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    e = pair.eps
    d = a - b
    lo = b + np.clip(np.minimum(d, 0.0), -e, 0.0)
    hi = b + np.clip(np.maximum(d, 0.0), 0.0, e)
    # core part: int over [lo, hi] oriented like [b, a]
    core = np.zeros(a.shape)
    edges = np.linspace(0.0, 1.0, 5)
    for k in range(4):
        for lo_k, hi_k in ((lo, b), (b, hi)):
            p0 = lo_k + edges[k] * (hi_k - lo_k)
            p1 = lo_k + edges[k + 1] * (hi_k - lo_k)
            half = 0.5 * (p1 - p0)
            mid = 0.5 * (p1 + p0)
            s = mid[..., None] + half[..., None] * _GL5_NODES
            core += np.sum(_GL5_WEIGHTS * pair.dbeta(s - b[..., None]) * flux.df(s), axis=-1) * half
    core = np.where(d >= 0, core, -core)
    tail = np.where(d > e, flux.f(a) - flux.f(b + e), 0.0)
    tail = tail + np.where(d < -e, flux.f(b - e) - flux.f(a), 0.0)
    return core + tail


def kruzkov_flux(flux: FluxModel, a, b):
    """``sign(a - b) (F(a) - F(b))`` with ``sign(0) = 0``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.sign(a - b) * (np.asarray(flux.f(a)) - np.asarray(flux.f(b)))
    return float(out) if out.ndim == 0 else out


def entropy_flux_error_bound(pair: EntropyPair, flux: FluxModel, u: float, v: float) -> float:
    """``|F^beta(v, u) - F(u, v)|``, the gap between the smoothed and the
    Kruzkov entropy flux."""
    return abs(entropy_flux(pair, flux, v, u) - kruzkov_flux(flux, u, v))


# ---------------------------------------------------------------------------
# Mollifiers


def _rho_profile(r):
    r = np.asarray(r, dtype=float)
    z = 2.0 * r + 1.0
    return np.where((r >= -1.0) & (r <= 0.0), (15.0 / 8.0) * (1.0 - z * z) ** 2, 0.0)


def _varrho_profile(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= 1.0, (15.0 / 16.0) * (1.0 - x * x) ** 2, 0.0)


def _varrho_profile_d1(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= 1.0, -(15.0 / 4.0) * x * (1.0 - x * x), 0.0)


@dataclass(frozen=True, eq=False)
class MollifierPair:
    """One-sided time kernel on ``[-delta0, 0]`` and even space kernel on
    ``[-delta, delta]``, both of unit mass."""

    delta0: float
    delta: float
    rho: Callable
    varrho: Callable
    dvarrho: Callable


def build_mollifiers(delta0: float, delta: float) -> MollifierPair:
    if not (delta0 > 0 and delta > 0):
        raise ValueError("delta0 and delta must be positive")
    d0, d = float(delta0), float(delta)
    return MollifierPair(
        d0,
        d,
        rho=lambda r: _rho_profile(np.asarray(r, dtype=float) / d0) / d0,
        varrho=lambda x: _varrho_profile(np.asarray(x, dtype=float) / d) / d,
        dvarrho=lambda x: _varrho_profile_d1(np.asarray(x, dtype=float) / d) / (d * d),
    )


# ---------------------------------------------------------------------------
# Test functions


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Nonnegative ``psi(t, x)`` with derivatives and declared supports."""

    __test__ = False  # not a pytest class

    psi: Callable
    dpsi_dt: Callable
    dpsi_dx: Callable
    d2psi_dxx: Callable
    support_t: tuple
    support_x: tuple

    def scaled(self, lam: float) -> "TestFunction":
        p, pt, px, pxx = self.psi, self.dpsi_dt, self.dpsi_dx, self.d2psi_dxx
        return TestFunction(
            lambda t, x: lam * p(t, x),
            lambda t, x: lam * pt(t, x),
            lambda t, x: lam * px(t, x),
            lambda t, x: lam * pxx(t, x),
            self.support_t,
            self.support_x,
        )

    def __add__(self, other: "TestFunction") -> "TestFunction":
        a, b = self, other
        return TestFunction(
            lambda t, x: a.psi(t, x) + b.psi(t, x),
            lambda t, x: a.dpsi_dt(t, x) + b.dpsi_dt(t, x),
            lambda t, x: a.dpsi_dx(t, x) + b.dpsi_dx(t, x),
            lambda t, x: a.d2psi_dxx(t, x) + b.d2psi_dxx(t, x),
            (min(a.support_t[0], b.support_t[0]), max(a.support_t[1], b.support_t[1])),
            (min(a.support_x[0], b.support_x[0]), max(a.support_x[1], b.support_x[1])),
        )


def _time_window(t_end):
    """``(1 - (t/t_end)^2)^3`` on ``[0, t_end)``: C^2 at ``t_end``, flat at 0."""

    def th(t):
        s = np.asarray(t, dtype=float) / t_end
        return np.where((s >= 0) & (s < 1), (1.0 - s * s) ** 3, 0.0)

    def dth(t):
        s = np.asarray(t, dtype=float) / t_end
        return np.where((s >= 0) & (s < 1), -6.0 * s * (1.0 - s * s) ** 2 / t_end, 0.0)

    return th, dth


def spatial_bump(center: float, half_width: float, amplitude: float = 1.0):
    """``amplitude (1 - z^2)^4`` and its first two derivatives (C^3 overall)."""
    c, w, a = float(center), float(half_width), float(amplitude)

    def chi(x):
        z = (np.asarray(x, dtype=float) - c) / w
        return np.where(np.abs(z) < 1, a * (1 - z * z) ** 4, 0.0)

    def dchi(x):
        z = (np.asarray(x, dtype=float) - c) / w
        return np.where(np.abs(z) < 1, -8 * a * z * (1 - z * z) ** 3 / w, 0.0)

    def d2chi(x):
        z = (np.asarray(x, dtype=float) - c) / w
        q = 1 - z * z
        return np.where(np.abs(z) < 1, a * (-8 * q**3 + 48 * z * z * q**2) / (w * w), 0.0)

    return chi, dchi, d2chi


def product_test_function(
    t_end: float, x_center: float, x_half_width: float, amplitude: float = 1.0
) -> TestFunction:
    """``psi(t, x) = theta(t) chi(x)`` with a C^2 time window ending at ``t_end``
    and a C^3 spatial bump."""
    th, dth = _time_window(float(t_end))
    chi, dchi, d2chi = spatial_bump(x_center, x_half_width, amplitude)
    return TestFunction(
        psi=lambda t, x: th(t) * chi(x),
        dpsi_dt=lambda t, x: dth(t) * chi(x),
        dpsi_dx=lambda t, x: th(t) * dchi(x),
        d2psi_dxx=lambda t, x: th(t) * d2chi(x),
        support_t=(0.0, float(t_end)),
        support_x=(x_center - x_half_width, x_center + x_half_width),
    )


def zero_test_function() -> TestFunction:
    z = lambda t, x: np.zeros(np.broadcast(np.asarray(t), np.asarray(x)).shape)  # noqa: E731
    return TestFunction(z, z, z, z, (0.0, 0.0), (0.0, 0.0))


@dataclass(frozen=True, eq=False)
class DoubledTestFunction:
    mollifiers: MollifierPair
    psi: TestFunction

    def value(self, t, x, s, y):
        m = self.mollifiers
        return m.rho(np.asarray(t) - np.asarray(s)) * m.varrho(np.asarray(x) - np.asarray(y)) * self.psi.psi(s, y)


def doubled_test_value(dtf: DoubledTestFunction, t, x, s, y):
    v = dtf.value(t, x, s, y)
    return float(v) if np.ndim(v) == 0 else v
