"""Reference solutions: Riemann problems, the linear additive-noise SPDE and
smooth characteristics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FluxModel, WienerPath
from .errors import PostShock


@dataclass(frozen=True, eq=False)
class RiemannProblem:
    uL: float
    uR: float
    flux: FluxModel

    def __post_init__(self):
        lo, hi = sorted((self.uL, self.uR))
        r = np.linspace(lo, hi, 257)
        if np.any(np.asarray(self.flux.d2f(r), dtype=float) < 0):
            raise ValueError("flux is not convex between the Riemann states")

    @property
    def shock_speed(self) -> float | None:
        """Rankine-Hugoniot speed, or ``None`` for a rarefaction."""
        if self.uL <= self.uR:
            return None
        f = self.flux.f
        return float((f(self.uL) - f(self.uR)) / (self.uL - self.uR))

    def solution(self, t, x):
        """Entropy solution for a convex flux (shock or centered fan)."""
        x = np.asarray(x, dtype=float)
        uL, uR = self.uL, self.uR
        if uL == uR:
            return np.full(x.shape, uL)
        s = self.shock_speed
        if s is not None:
            return np.where(x < s * t, uL, uR)
        df = self.flux.df
        xi = x / t
        aL, aR = float(df(uL)), float(df(uR))
        out = np.where(xi <= aL, uL, np.where(xi >= aR, uR, 0.0))
        fan = (xi > aL) & (xi < aR)
        if np.any(fan):
            # invert F' on [uL, uR] by bisection (F' nondecreasing)
            lo = np.full(int(fan.sum()), uL)
            hi = np.full(lo.shape, uR)
            target = xi[fan]
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                left = np.asarray(df(mid)) < target
                lo = np.where(left, mid, lo)
                hi = np.where(left, hi, mid)
                if np.max(hi - lo) <= 1e-14:
                    break
            out[fan] = 0.5 * (lo + hi)
        return out


def burgers_riemann(uL: float, uR: float, t: float, x):
    """Entropy solution of Burgers' equation with Riemann data at ``x = 0``."""
    if not t > 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    if uL > uR:
        out = np.where(x < 0.5 * (uL + uR) * t, uL, uR)
    elif uL < uR:
        out = np.clip(x / t, uL, uR)
    else:
        out = np.full(x.shape, float(uL))
    return float(out) if out.ndim == 0 else out


def linear_additive_exact(u0, c: float, sigma0: float, path: WienerPath, t: float, x, wrap=None):
    """``u(t,x) = u0(x - c t) + sigma0 W(t)`` for ``du + c u_x dt = sigma0 dW``.

    ``t`` must lie on the path's time grid. ``wrap`` (e.g. ``grid.wrap``)
    maps shifted positions back into a periodic box.
    """
    k = int(round(t / path.dt))
    if abs(k * path.dt - t) > 1e-9 * max(1.0, t) or k > path.n_steps:
        raise ValueError(f"t={t} is not on the path's time grid")
    xs = np.asarray(x, dtype=float) - c * t
    if wrap is not None:
        xs = wrap(xs)
    return np.asarray(u0(xs), dtype=float) + sigma0 * path.cumulative[k]


def breaking_time(u0_derivative, flux: FluxModel, u0, x_samples) -> float:
    """``T* = -1 / min_x d/dx F'(u0(x))`` sampled on ``x_samples`` (inf if the
    characteristics never cross)."""
    x = np.asarray(x_samples, dtype=float)
    slope = np.asarray(flux.d2f(u0(x)), dtype=float) * np.asarray(u0_derivative(x), dtype=float)
    m = float(np.min(slope))
    return np.inf if m >= 0 else -1.0 / m


def smooth_characteristics(u0, flux: FluxModel, t: float, x, domain=(-1.0, 1.0), tol=1e-12, max_iter=200):
    """Classical solution ``u0(xi)`` with ``x = xi + F'(u0(xi)) t``.

    Before the breaking time the map ``xi -> xi + F'(u0(xi)) t`` is strictly
    increasing, so the foot point is bracketed and found by bisection,
    tightened until the residual of the implicit equation is below ``tol``.
    ``u0.derivative`` is required to compute the breaking time; the call
    raises :class:`PostShock` once ``t >= 0.95 T*``.
    """
    x = np.asarray(x, dtype=float)
    if t == 0:
        return np.asarray(u0(x), dtype=float)
    a, b = domain
    samples = np.linspace(a, b, 20001)
    T_star = breaking_time(u0.derivative, flux, u0, samples)
    if t >= 0.95 * T_star:
        raise PostShock(f"t={t} is past 0.95 of the breaking time {T_star:.6g}")
    speed = lambda xi: np.asarray(flux.df(u0(xi)), dtype=float)  # noqa: E731
    smax = float(np.max(np.abs(speed(samples))))
    # a foot-point error e moves the residual by at most L (1 + L_F L t) e
    L = float(np.max(np.abs(u0.derivative(samples))))
    LF = float(np.max(np.abs(flux.d2f(u0(samples)))))
    xtol = tol / max(1.0, L * (1.0 + LF * L * t))
    lo = x - smax * t - 1e-12
    hi = x + smax * t + 1e-12
    g = lambda xi: xi + speed(xi) * t - x  # noqa: E731
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        pos = g(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
        if np.max(hi - lo) <= xtol:
            break
    xi = 0.5 * (lo + hi)
    return np.asarray(u0(xi), dtype=float)


def characteristics_residual(u0, flux: FluxModel, t: float, x, value):
    """Residual of the implicit equation ``u = u0(x - F'(u) t)``."""
    x = np.asarray(x, dtype=float)
    value = np.asarray(value, dtype=float)
    return np.abs(value - np.asarray(u0(x - np.asarray(flux.df(value)) * t), dtype=float))
