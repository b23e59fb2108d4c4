"""Grids, Brownian drivers and coefficient models.

Everything here is immutable once built and can be shared freely between
worker threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AssumptionViolated, DerivativeMismatch, InvalidDomain

_U64 = (1 << 64) - 1


class Boundary(enum.Enum):
    PERIODIC = "periodic"


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid of ``n_cells`` finite-volume cells."""

    x_min: float
    x_max: float
    n_cells: int
    boundary: Boundary = Boundary.PERIODIC

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    def neighbor(self, j: int, offset: int) -> int:
        return (j + offset) % self.n_cells

    def wrap(self, x):
        """Map positions back into ``[x_min, x_max)``."""
        return self.x_min + np.mod(np.asarray(x, dtype=float) - self.x_min, self.length)


def build_grid(x_min: float, x_max: float, n_cells: int) -> Grid1D:
    if not x_max > x_min:
        raise InvalidDomain(f"x_max ({x_max}) must exceed x_min ({x_min})")
    if int(n_cells) != n_cells or n_cells < 8:
        raise InvalidDomain(f"n_cells must be an integer >= 8, got {n_cells}")
    return Grid1D(float(x_min), float(x_max), int(n_cells))


# ---------------------------------------------------------------------------
# Brownian driver


@dataclass(frozen=True, eq=False)
class WienerPath:
    seed: int
    path_id: int
    dt: float
    increments: np.ndarray
    cumulative: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    def increments_over(self, stride: int) -> np.ndarray:
        """Increments aggregated over blocks of ``stride`` steps."""
        return np.diff(self.cumulative[::stride])


def _philox(seed: int, path_id: int) -> np.random.Generator:
    key = np.array([int(seed) & _U64, int(path_id) & _U64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_wiener(seed: int, path_id: int, n_steps: int, dt: float) -> WienerPath:
    """Brownian increments for one path.

    The stream comes from a Philox counter-based generator keyed on
    ``(seed, path_id)``; step ``k`` is the k-th draw of that stream, so the
    result depends only on the arguments and never on which worker (or in
    which order) the path is generated. Shorter paths are exact prefixes of
    longer ones.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not dt > 0:
        raise ValueError("dt must be positive")
    z = _philox(seed, path_id).standard_normal(int(n_steps))
    inc = np.sqrt(dt) * z
    cum = np.zeros(n_steps + 1)
    np.cumsum(inc, out=cum[1:])
    inc.setflags(write=False)
    cum.setflags(write=False)
    return WienerPath(int(seed), int(path_id), float(dt), inc, cum)


@dataclass(frozen=True)
class EnsembleSpec:
    n_paths: int
    base_seed: int
    T: float
    dt: float
    grid: Grid1D

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")

    @property
    def n_steps(self) -> int:
        return steps_for(self.T, self.dt)

    def path(self, path_id: int) -> WienerPath:
        if not 0 <= path_id < self.n_paths:
            raise IndexError(path_id)
        return sample_wiener(self.base_seed, path_id, self.n_steps, self.dt)

    def increments(self) -> np.ndarray:
        """(n_paths, n_steps) array of all increments, path-id order."""
        return np.stack([self.path(i).increments for i in range(self.n_paths)])


def steps_for(T: float, dt: float) -> int:
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    return n


# ---------------------------------------------------------------------------
# Coefficient models


@dataclass(frozen=True, eq=False)
class FluxModel:
    f: Callable
    df: Callable
    d2f: Callable
    growth_degree: int
    name: str = "custom"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Noise coefficient ``sigma(x, u)`` with its Lipschitz constant and
    growth envelope ``|sigma(x,u)| <= envelope_g(x) (1 + |u|)``."""

    sigma: Callable
    lipschitz_C: float
    envelope_g: Callable
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def is_zero(self) -> bool:
        return bool(self.params.get("_zero", False))


@dataclass
class ValidationReport:
    passed: bool
    quantities: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)


def validate_noise(model: NoiseModel, x_samples, u_samples, chunk: int = 512) -> ValidationReport:
    """Scan all sample pairs for the Lipschitz and envelope bounds.

    Points are the tensor grid ``x_samples x u_samples``. The Lipschitz ratio
    uses the distance ``|u-v| + |x-y|``.
    """
    xs = np.asarray(x_samples, dtype=float).ravel()
    us = np.asarray(u_samples, dtype=float).ravel()
    if xs.size == 0 or us.size == 0:
        raise ValueError("sample arrays must be nonempty")
    X, U = np.meshgrid(xs, us, indexing="ij")
    X, U = X.ravel(), U.ravel()
    S = np.broadcast_to(np.asarray(model.sigma(X, U), dtype=float), X.shape)
    tol = 1.0 + 1e-9

    g = np.broadcast_to(np.asarray(model.envelope_g(X), dtype=float), X.shape)
    bound = g * (1.0 + np.abs(U))
    with np.errstate(divide="ignore", invalid="ignore"):
        env = np.where(np.abs(S) == 0.0, 0.0, np.abs(S) / bound)
    k = int(np.argmax(env))
    env_ratio = float(env[k])
    if env_ratio > tol:
        raise AssumptionViolated(
            f"growth envelope exceeded: |sigma|/(g(x)(1+|u|)) = {env_ratio:.6g} at "
            f"(x={X[k]:.6g}, u={U[k]:.6g})",
            sample=(float(X[k]), float(U[k])),
        )

    lip = 0.0
    worst = None
    n = X.size
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        dist = np.abs(X[sl, None] - X[None, :]) + np.abs(U[sl, None] - U[None, :])
        diff = np.abs(S[sl, None] - S[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(dist > 0, diff / dist, 0.0)
        i, j = np.unravel_index(int(np.argmax(r)), r.shape)
        if r[i, j] > lip:
            lip = float(r[i, j])
            worst = ((float(X[start + i]), float(U[start + i])), (float(X[j]), float(U[j])))
    if lip > model.lipschitz_C * tol:
        raise AssumptionViolated(
            f"Lipschitz bound exceeded: ratio {lip:.6g} > C = {model.lipschitz_C:.6g} "
            f"between {worst[0]} and {worst[1]}",
            sample=worst,
        )
    return ValidationReport(True, {"lipschitz_ratio": lip, "envelope_ratio": env_ratio})


def _fd_check(fun, dfun, r, what):
    h = 1e-5 * np.maximum(1.0, np.abs(r))
    fd = (np.asarray(fun(r + h), dtype=float) - np.asarray(fun(r - h), dtype=float)) / (2 * h)
    exact = np.broadcast_to(np.asarray(dfun(r), dtype=float), r.shape)
    err = np.abs(fd - exact) / np.maximum(1.0, np.abs(exact))
    k = int(np.argmax(err))
    if err[k] > 1e-6:
        raise DerivativeMismatch(
            f"{what} inconsistent at r={r[k]:.6g}: finite difference {fd[k]:.9g} vs {exact[k]:.9g}",
            sample=float(r[k]),
        )
    return float(err[k])


def validate_flux(model: FluxModel, r_samples) -> ValidationReport:
    """Finite-difference derivative check plus a sampled genuine-nonlinearity flag.

    The nonlinearity fraction is the share of samples with ``|F''| > 1e-12``.
    Density of that set cannot be decided from samples, so the flag is a
    heuristic: it fails when two neighbouring (sorted) samples both have
    ``F'' == 0``, i.e. when the samples resolve an interval of linearity.
    Isolated inflection points are tolerated.
    """
    r = np.asarray(r_samples, dtype=float).ravel()
    if r.size == 0:
        raise ValueError("r_samples must be nonempty")
    e1 = _fd_check(model.f, model.df, r, "df")
    e2 = _fd_check(model.df, model.d2f, r, "d2f")
    rs = np.sort(r)
    d2 = np.broadcast_to(np.asarray(model.d2f(rs), dtype=float), rs.shape)
    nonlinear = np.abs(d2) > 1e-12
    frac = float(np.mean(nonlinear))
    flat = ~nonlinear
    a4 = bool(frac > 0 and not np.any(flat[1:] & flat[:-1]))
    return ValidationReport(
        True,
        {"df_rel_error": e1, "d2f_rel_error": e2, "a4_fraction": frac},
        {"a4": a4},
    )
