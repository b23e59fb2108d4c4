"""Viscous approximation: mollified coefficients, regularized data and an
explicit Euler-Maruyama finite-volume scheme.

The update for one step is

    u_j <- u_j - dt/dx (H_{j+1/2} - H_{j-1/2})
               + eps dt/dx^2 (u_{j+1} - 2 u_j + u_{j-1})
               + sigma_eps(x_j, u_j) dW

with the local Lax-Friedrichs flux ``H`` of ``F_eps``. Noise is evaluated at
the left endpoint (Ito). Ensembles are advanced in fixed-size batches of
paths, so results never depend on how many worker threads are used.
"""

from __future__ import annotations

import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .core import EnsembleSpec, FluxModel, Grid1D, NoiseModel, WienerPath, sample_wiener, steps_for
from .errors import NumericalBlowup, StabilityError, SupportViolation

CHUNK = 16  # paths per batch; fixed so results do not depend on thread count


# ---------------------------------------------------------------------------
# Mollifier J and cutoff phi


def _smooth_step(t):
    """C-infinity transition: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def cutoff(r):
    """Smooth cutoff: 1 on ``|r| <= 1``, 0 on ``|r| >= 2``."""
    return 1.0 - _smooth_step(np.abs(np.asarray(r, dtype=float)) - 1.0)


def _bump(z):
    z = np.asarray(z, dtype=float)
    inside = np.abs(z) < 1
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - z * z, 1.0)), 0.0)


@functools.lru_cache(maxsize=None)
def mollifier_rule(n: int = 32):
    """Nodes on ``[-1, 1]`` and weights of the discrete mollifier ``J``.

    Gauss-Legendre nodes weighted by the C-infinity bump, renormalized to sum
    exactly one; symmetric, so first moments vanish.
    """
    z, w = np.polynomial.legendre.leggauss(n)
    w = w * _bump(z)
    w = w / w.sum()
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


# ---------------------------------------------------------------------------
# Mollified coefficients


def mollify_flux(flux: FluxModel, eps_reg: float, n_nodes: int = 8001) -> FluxModel:
    """``F_eps = (phi(eps r^2) F) * J_eps`` tabulated with a cubic spline.

    The table spans ``|r| <= R = sqrt(2/eps) + eps``; outside it the cutoff
    makes ``F_eps`` vanish identically.
    """
    if not eps_reg > 0:
        raise ValueError("eps_reg must be positive")
    e = float(eps_reg)
    R = math.sqrt(2.0 / e) + e
    r = np.linspace(-R, R, n_nodes)
    z, w = mollifier_rule(32)
    pts = r[:, None] - e * z[None, :]
    vals = (cutoff(e * pts * pts) * np.asarray(flux.f(pts), dtype=float)) @ w
    vals[0] = vals[-1] = 0.0
    spl = CubicSpline(r, vals)
    d1, d2 = spl.derivative(1), spl.derivative(2)

    def wrap(g):
        def h(u):
            u = np.asarray(u, dtype=float)
            return np.where(np.abs(u) < R, g(np.clip(u, -R, R)), 0.0)

        return h

    return FluxModel(
        f=wrap(spl),
        df=wrap(d1),
        d2f=wrap(d2),
        growth_degree=0,
        name=f"{flux.name}~",
        params={**flux.params, "eps_reg": e, "support_radius": R},
    )


def _sigma_quadrature(noise: NoiseModel, e: float, x, u, n: int = 12):
    """Direct 2-D quadrature of the mollified noise at points ``(x, u)``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    x, u = np.broadcast_arrays(x, u)
    z, w = mollifier_rule(n)
    Y = x[..., None, None] - e * z[:, None]
    V = u[..., None, None] - e * z[None, :]
    Y, V = np.broadcast_arrays(Y, V)
    vals = cutoff(e * (Y * Y + V * V)) * np.asarray(noise.sigma(Y, V), dtype=float)
    return np.einsum("...ab,a,b->...", vals, w, w)


@dataclass(frozen=True, eq=False)
class SigmaTable:
    """``sigma_eps`` on the tensor grid ``x_nodes x u_nodes`` (uniform in u)."""

    noise: NoiseModel
    eps_reg: float
    x_nodes: np.ndarray
    u_lo: float
    u_hi: float
    values: np.ndarray  # (n_x, n_u)

    @property
    def du(self) -> float:
        return (self.u_hi - self.u_lo) / (self.values.shape[1] - 1)

    def at_nodes(self, u):
        """Linear interpolation in ``u`` at every x node; ``u`` has shape
        ``(..., n_x)``. Entries outside the u-range fall back to quadrature."""
        u = np.asarray(u, dtype=float)
        n_u = self.values.shape[1]
        s = (u - self.u_lo) / self.du
        k = np.clip(np.floor(s), 0, n_u - 2).astype(np.intp)
        w = s - k
        cols = np.arange(self.values.shape[0])
        out = self.values[cols, k] * (1.0 - w) + self.values[cols, k + 1] * w
        outside = (u < self.u_lo) | (u > self.u_hi)
        if np.any(outside):
            xb = np.broadcast_to(self.x_nodes, u.shape)
            out[outside] = _sigma_quadrature(self.noise, self.eps_reg, xb[outside], u[outside])
        return out

    def __call__(self, x, u):
        """Bilinear interpolation at arbitrary ``(x, u)``."""
        x, u = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(u, dtype=float))
        xn = self.x_nodes
        sx = np.interp(x, xn, np.arange(xn.size, dtype=float))
        i = np.clip(np.floor(sx), 0, xn.size - 2).astype(np.intp)
        a = sx - i
        n_u = self.values.shape[1]
        su = (u - self.u_lo) / self.du
        k = np.clip(np.floor(su), 0, n_u - 2).astype(np.intp)
        b = su - k
        V = self.values
        out = (
            V[i, k] * (1 - a) * (1 - b)
            + V[i + 1, k] * a * (1 - b)
            + V[i, k + 1] * (1 - a) * b
            + V[i + 1, k + 1] * a * b
        )
        outside = (u < self.u_lo) | (u > self.u_hi) | (x < xn[0]) | (x > xn[-1])
        if np.any(outside):
            out = np.array(out, dtype=float)
            out[outside] = _sigma_quadrature(self.noise, self.eps_reg, x[outside], u[outside])
        return out


@functools.lru_cache(maxsize=64)
def _cached_table(noise, eps_reg, x_key, u_lo, u_hi, n_u):
    x_nodes = np.frombuffer(x_key, dtype=float).copy()
    u_nodes = np.linspace(u_lo, u_hi, n_u)
    if noise.is_zero:
        vals = np.zeros((x_nodes.size, n_u))
    else:
        vals = np.stack([_sigma_quadrature(noise, eps_reg, x_nodes, uk) for uk in u_nodes], axis=1)
    x_nodes.setflags(write=False)
    vals.setflags(write=False)
    return SigmaTable(noise, eps_reg, x_nodes, u_lo, u_hi, vals)


def sigma_table(noise: NoiseModel, eps_reg: float, x_nodes, u_lo: float, u_hi: float, n_u: int = 257) -> SigmaTable:
    x = np.ascontiguousarray(x_nodes, dtype=float)
    return _cached_table(noise, float(eps_reg), x.tobytes(), float(u_lo), float(u_hi), int(n_u))


def mollify_sigma(noise: NoiseModel, eps_reg: float, x_nodes=None, u_range=None, n_u: int = 257) -> NoiseModel:
    """``sigma_eps(x,u) = int int J_eps(x-y) J_eps(u-v) phi(eps(y^2+v^2)) sigma(y,v)``.

    Without ``x_nodes`` every call is a direct quadrature; with ``x_nodes`` and
    ``u_range`` the values are tabulated and interpolated bilinearly. The
    declared Lipschitz constant and envelope are inflated by ``1 + eps_reg``.
    """
    if not eps_reg > 0:
        raise ValueError("eps_reg must be positive")
    e = float(eps_reg)
    params = {**noise.params, "eps_reg": e}
    if noise.is_zero:
        sig = noise.sigma
    elif x_nodes is None:
        sig = functools.partial(_sigma_quadrature, noise, e)
    else:
        lo, hi = u_range
        sig = sigma_table(noise, e, x_nodes, lo, hi, n_u)
    g = noise.envelope_g
    return NoiseModel(
        sigma=sig,
        lipschitz_C=noise.lipschitz_C * (1.0 + e),
        envelope_g=lambda x: (1.0 + e) * np.asarray(g(x), dtype=float),
        name=f"{noise.name}~",
        params=params,
    )


def regularize_initial(u0, eps_reg: float, grid: Grid1D) -> np.ndarray:
    """Cell-center values of ``(u0 phi(eps x^2)) * J_eps``.

    ``u0.support`` (when present) must stay clear of a boundary layer of width
    ``max(eps_reg, 2 dx)`` at both box ends.
    """
    e = float(eps_reg)
    support = getattr(u0, "support", None)
    if support is not None and support[1] > support[0]:
        layer = max(e, 2.0 * grid.dx)
        if support[0] < grid.x_min + layer or support[1] > grid.x_max - layer:
            raise SupportViolation(
                f"initial data support {support} enters the boundary layer of "
                f"[{grid.x_min}, {grid.x_max}] (width {layer:.3g})"
            )
    z, w = mollifier_rule(32)
    y = grid.centers[:, None] - e * z[None, :]
    vals = np.asarray(u0(grid.wrap(y)), dtype=float) * cutoff(e * y * y)
    return vals @ w


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True, eq=False)
class ViscousConfig:
    """Numerical setup for one viscous problem.

    ``u_bound`` is the expected range ``|u| <= u_bound`` used to bound the
    wave speed in the stability check. ``require_viscous_dominance`` enforces
    ``eps_visc >= dx max|F_eps'| / 2``.
    """

    eps_visc: float
    grid: Grid1D
    T: float
    dt: float
    flux: FluxModel
    noise: NoiseModel
    eps_reg: float | None = None
    u_bound: float = 2.0
    require_viscous_dominance: bool = True
    blowup_guard: float = 1e6
    n_u_table: int = 257
    flux_eps: FluxModel = field(init=False, repr=False)
    sigma_eps: SigmaTable | None = field(init=False, repr=False)

    def __post_init__(self):
        if not self.eps_visc > 0:
            raise StabilityError("stability: eps_visc must be positive")
        if self.eps_reg is None:
            object.__setattr__(self, "eps_reg", float(self.eps_visc))
        steps_for(self.T, self.dt)
        object.__setattr__(self, "flux_eps", _mollified_flux(self.flux, self.eps_reg))
        check_stability(self)
        if self.noise.is_zero:
            table = None
        else:
            span = self.u_bound + 1.0
            table = sigma_table(self.noise, self.eps_reg, self.grid.centers, -span, span, self.n_u_table)
        object.__setattr__(self, "sigma_eps", table)

    @property
    def n_steps(self) -> int:
        return steps_for(self.T, self.dt)

    @property
    def max_speed(self) -> float:
        return max_wave_speed(self.flux_eps, self.u_bound)

    @property
    def numerical_viscosity(self) -> float:
        return 0.5 * self.grid.dx * self.max_speed

    def replace(self, **changes) -> "ViscousConfig":
        kw = {
            k: getattr(self, k)
            for k in (
                "eps_visc", "grid", "T", "dt", "flux", "noise", "eps_reg", "u_bound",
                "require_viscous_dominance", "blowup_guard", "n_u_table",
            )
        }
        if "eps_visc" in changes and "eps_reg" not in changes:
            kw["eps_reg"] = None
        kw.update(changes)
        return ViscousConfig(**kw)


@functools.lru_cache(maxsize=32)
def _mollified_flux(flux, eps_reg):
    return mollify_flux(flux, eps_reg)


def max_wave_speed(flux: FluxModel, u_bound: float, n: int = 2001) -> float:
    r = np.linspace(-u_bound, u_bound, n)
    return float(np.max(np.abs(flux.df(r))))


def max_stable_dt(grid: Grid1D, flux_eps: FluxModel, eps_visc: float, u_bound: float) -> float:
    a = max_wave_speed(flux_eps, u_bound)
    lim = grid.dx * grid.dx / (2.0 * eps_visc)
    if a > 0:
        lim = min(lim, grid.dx / a)
    return 0.4 * lim


def stable_dt(grid: Grid1D, flux: FluxModel, eps_visc: float, T: float, u_bound: float = 2.0, eps_reg=None) -> float:
    """Largest ``T / n`` satisfying the stability bound."""
    fe = _mollified_flux(flux, float(eps_reg if eps_reg is not None else eps_visc))
    dmax = max_stable_dt(grid, fe, eps_visc, u_bound)
    return T / math.ceil(T / dmax - 1e-9)


def check_stability(cfg: ViscousConfig) -> None:
    dmax = max_stable_dt(cfg.grid, cfg.flux_eps, cfg.eps_visc, cfg.u_bound)
    if cfg.dt > dmax * (1 + 1e-12):
        raise StabilityError(
            f"stability: dt={cfg.dt:.6g} exceeds the explicit limit {dmax:.6g} "
            f"(dx={cfg.grid.dx:.6g}, eps_visc={cfg.eps_visc:.6g}, u_bound={cfg.u_bound})"
        )
    if cfg.require_viscous_dominance and cfg.eps_visc < cfg.numerical_viscosity * (1 - 1e-12):
        raise StabilityError(
            f"stability: eps_visc={cfg.eps_visc:.6g} is below the scheme's numerical "
            f"viscosity {cfg.numerical_viscosity:.6g}; refine the grid"
        )


# ---------------------------------------------------------------------------
# Time stepping


def step(u, dW, cfg: ViscousConfig):
    """One Euler-Maruyama step. ``u`` is ``(n_cells,)`` or ``(batch, n_cells)``;
    ``dW`` a scalar or ``(batch,)``."""
    u = np.asarray(u, dtype=float)
    dx, dt = cfg.grid.dx, cfg.dt
    F = cfg.flux_eps
    up = np.roll(u, -1, axis=-1)
    um = np.roll(u, 1, axis=-1)
    fu = F.f(u)
    a = np.abs(F.df(u))
    amax = np.maximum(a, np.roll(a, -1, axis=-1))
    H = 0.5 * (fu + np.roll(fu, -1, axis=-1)) - 0.5 * amax * (up - u)
    out = u - (dt / dx) * (H - np.roll(H, 1, axis=-1))
    out = out + (cfg.eps_visc * dt / (dx * dx)) * (up - 2.0 * u + um)
    if cfg.sigma_eps is not None:
        dW = np.asarray(dW, dtype=float)
        out = out + cfg.sigma_eps.at_nodes(u) * (dW[..., None] if dW.ndim else dW)
    return out


def _advance(cfg: ViscousConfig, u0_vals, increments, stride):
    """Run a batch: ``increments`` is ``(batch, n_steps)``. Returns snapshots
    ``(batch, n_snap, n_cells)``."""
    n_steps = increments.shape[1]
    if n_steps % stride:
        raise ValueError(f"stride {stride} does not divide {n_steps} steps")
    B = increments.shape[0]
    n_snap = n_steps // stride + 1
    snaps = np.empty((B, n_snap, cfg.grid.n_cells))
    u = np.broadcast_to(u0_vals, (B, cfg.grid.n_cells)).copy()
    snaps[:, 0] = u
    guard = cfg.blowup_guard
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            u = step(u, increments[:, n], cfg)
            m = np.max(np.abs(u))
            if not m <= guard:
                raise NumericalBlowup(f"max|u| = {m:.3g} exceeds guard {guard:.3g} at step {n + 1}", step=n + 1)
            if (n + 1) % stride == 0:
                snaps[:, (n + 1) // stride] = u
    return snaps


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots ``u(n stride dt, x_j)`` of one sample path."""

    config: ViscousConfig
    path: WienerPath
    snapshots: np.ndarray
    stride: int = 10

    @property
    def dt_snapshot(self) -> float:
        return self.stride * self.config.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.snapshots.shape[0]) * self.dt_snapshot


def solve(cfg: ViscousConfig, path: WienerPath, u0, stride: int = 10) -> Trajectory:
    if abs(path.dt - cfg.dt) > 1e-15 * cfg.dt:
        raise ValueError("path.dt differs from cfg.dt")
    n = cfg.n_steps
    if path.n_steps < n:
        raise ValueError(f"path has {path.n_steps} steps, {n} needed")
    u0v = regularize_initial(u0, cfg.eps_reg, cfg.grid)
    snaps = _advance(cfg, u0v, path.increments[None, :n], stride)[0]
    snaps.setflags(write=False)
    return Trajectory(cfg, path, snaps, stride)


# ---------------------------------------------------------------------------
# Ensembles


@dataclass(frozen=True, eq=False)
class Ensemble:
    """All paths of one Monte Carlo run.

    ``snapshots`` is ``(n_paths, n_snap, n_cells)`` and ``increments``
    ``(n_paths, n_steps)``, both in path-id order.
    """

    config: ViscousConfig
    base_seed: int
    snapshots: np.ndarray
    increments: np.ndarray
    stride: int
    u0_values: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.snapshots.shape[0]

    @property
    def dt_snapshot(self) -> float:
        return self.stride * self.config.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.snapshots.shape[1]) * self.dt_snapshot

    @property
    def snapshot_increments(self) -> np.ndarray:
        """Brownian increments aggregated over each snapshot interval."""
        M, n = self.increments.shape
        return self.increments.reshape(M, n // self.stride, self.stride).sum(axis=2)

    def trajectory(self, i: int) -> Trajectory:
        inc = self.increments[i]
        cum = np.concatenate([[0.0], np.cumsum(inc)])
        path = WienerPath(self.base_seed, i, self.config.dt, inc, cum)
        return Trajectory(self.config, path, self.snapshots[i], self.stride)

    def __len__(self):
        return self.n_paths

    def __iter__(self):
        return (self.trajectory(i) for i in range(self.n_paths))


def run_ensemble(
    cfg: ViscousConfig,
    n_paths: int,
    base_seed: int,
    u0,
    stride: int = 10,
    threads: int = 1,
    u0_values=None,
) -> Ensemble:
    """Simulate paths ``0..n_paths-1`` driven by ``sample_wiener(base_seed, i)``.

    Paths are processed in fixed batches of ``CHUNK``; threads only change the
    order in which batches are scheduled, never their content.
    """
    spec = EnsembleSpec(n_paths, base_seed, cfg.T, cfg.dt, cfg.grid)
    n = spec.n_steps
    u0v = regularize_initial(u0, cfg.eps_reg, cfg.grid) if u0_values is None else np.asarray(u0_values, float)
    inc = np.stack([sample_wiener(base_seed, i, n, cfg.dt).increments for i in range(n_paths)])
    out = np.empty((n_paths, n // stride + 1, cfg.grid.n_cells))

    def work(lo):
        hi = min(lo + CHUNK, n_paths)
        out[lo:hi] = _advance(cfg, u0v, inc[lo:hi], stride)

    starts = range(0, n_paths, CHUNK)
    if threads <= 1:
        for lo in starts:
            work(lo)
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            for f in [ex.submit(work, lo) for lo in starts]:
                f.result()
    out.setflags(write=False)
    inc.setflags(write=False)
    u0v = np.array(u0v)
    u0v.setflags(write=False)
    return Ensemble(cfg, int(base_seed), out, inc, int(stride), u0v)


# ---------------------------------------------------------------------------
# Monitors


def moments(traj, p: int) -> np.ndarray:
    """``||u(t_n)||_p^p = sum_j |u_j|^p dx`` for every snapshot (works on a
    trajectory or on an ensemble, giving ``(n_paths, n_snap)``)."""
    if int(p) != p or p < 1:
        raise ValueError("p must be a positive integer")
    return np.sum(np.abs(traj.snapshots) ** p, axis=-1) * traj.config.grid.dx


def gradient_energy(traj, phi_d2) -> float:
    """``eps sum_n sum_j phi''(u_j^n) ((u_{j+1}^n - u_j^n)/dx)^2 dx dt_snap``
    over the left endpoints of the snapshot intervals."""
    cfg = traj.config
    u = traj.snapshots[..., :-1, :]
    g = (np.roll(u, -1, axis=-1) - u) / cfg.grid.dx
    w = np.asarray(phi_d2(u), dtype=float)
    return cfg.eps_visc * np.sum(w * g * g, axis=(-1, -2)) * cfg.grid.dx * traj.dt_snapshot


# ---------------------------------------------------------------------------
# Export


def _header(traj: Trajectory) -> dict:
    cfg = traj.config
    return {
        "seed": traj.path.seed,
        "path_id": traj.path.path_id,
        "eps_visc": cfg.eps_visc,
        "dx": cfg.grid.dx,
        "dt": cfg.dt,
        "stride": traj.stride,
        "x_min": cfg.grid.x_min,
        "n_cells": cfg.grid.n_cells,
    }


def export_trajectory(traj: Trajectory, path, fmt: str = "csv") -> None:
    """Write snapshots (row = time, column = cell).

    CSV files start with one ``# key=value`` comment line per header field;
    the ``npz`` format stores the same fields as scalar arrays next to
    ``snapshots``.
    """
    head = _header(traj)
    if fmt == "csv":
        with open(path, "w") as fh:
            for k, v in head.items():
                fh.write(f"# {k}={v!r}\n")
            np.savetxt(fh, traj.snapshots, delimiter=",", fmt="%.17g")
    elif fmt == "npz":
        with open(path, "wb") as fh:
            np.savez(fh, snapshots=traj.snapshots, **{k: np.asarray(v) for k, v in head.items()})
    else:
        raise ValueError(f"unknown format {fmt!r}")


def load_trajectory(path, fmt: str = "csv"):
    """Inverse of :func:`export_trajectory`: ``(header dict, snapshots)``."""
    if fmt == "npz":
        with np.load(path) as z:
            head = {k: z[k].item() for k in z.files if k != "snapshots"}
            return head, z["snapshots"]
    head = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            k, v = line[1:].strip().split("=", 1)
            head[k] = float(v) if "." in v or "e" in v else int(v)
    return head, np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
