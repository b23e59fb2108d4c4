"""Monte Carlo estimators for the entropy-solution properties.

Every estimator consumes :class:`~stochscl.solver.Ensemble` objects (or a
single :class:`~stochscl.solver.Trajectory`) and reduces over paths in
path-id order, so results do not depend on how the ensemble was scheduled.
Space integrals are cell sums; time integrals use the trapezoid rule on the
snapshots, and Ito integrals use left-endpoint sums over the snapshot
increments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .calculus import EntropyPair, TestFunction, build_mollifiers, entropy_flux_array
from .core import FluxModel, NoiseModel, validate_flux
from .errors import A4Violation, EnsembleMismatch, SupportViolation, VGridOverflow
from .solver import Ensemble, Trajectory


# ---------------------------------------------------------------------------
# Reports


def _clean(v):
    """Convert numpy scalars/arrays to plain JSON types."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    return v


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of one property check.

    For one-sided properties ``passed`` means ``estimate <= threshold +
    2 std_error``; ladder-type properties document their rule in
    ``metadata["rule"]``.
    """

    property_name: str
    estimate: float
    std_error: float
    threshold: float
    passed: bool
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "property": self.property_name,
            "estimate": _clean(self.estimate),
            "std_error": _clean(self.std_error),
            "threshold": _clean(self.threshold),
            "passed": bool(self.passed),
            "metadata": _clean(self.metadata),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def csv_row(self, experiment: str) -> list:
        return [experiment, self.property_name, repr(float(self.estimate)), repr(float(self.std_error)),
                repr(float(self.threshold)), str(bool(self.passed)).lower()]


CSV_COLUMNS = ("experiment", "property", "estimate", "std_error", "threshold", "passed")


@dataclass(frozen=True)
class EntropyFunctionalResult:
    per_path_values: np.ndarray
    mean: float
    std_error: float
    fraction_nonnegative: float
    tolerance: float
    budgets: np.ndarray | None = None


def mean_se(values):
    """Sample mean and standard error (0 for a single sample)."""
    v = np.asarray(values, dtype=float)
    m = float(np.mean(v, axis=0)) if v.ndim == 1 else np.mean(v, axis=0)
    if v.shape[0] < 2:
        return m, (0.0 if v.ndim == 1 else np.zeros_like(m))
    se = np.std(v, axis=0, ddof=1) / math.sqrt(v.shape[0])
    return m, (float(se) if v.ndim == 1 else se)


def _as_ensemble_arrays(obj):
    """``(snapshots (M,S,N), snapshot increments (M,S-1), config, dt_snap)``."""
    if isinstance(obj, Trajectory):
        inc = obj.path.increments[: obj.config.n_steps]
        dW = inc.reshape(-1, obj.stride).sum(axis=1)
        return obj.snapshots[None], dW[None], obj.config, obj.dt_snapshot
    if isinstance(obj, Ensemble):
        return obj.snapshots, obj.snapshot_increments, obj.config, obj.dt_snapshot
    raise TypeError(f"expected Trajectory or Ensemble, got {type(obj).__name__}")


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _check_support(psi: TestFunction, grid, T: float):
    lo, hi = psi.support_x
    if hi > lo and (lo < grid.x_min + grid.dx or hi > grid.x_max - grid.dx):
        raise SupportViolation(f"test function support {psi.support_x} leaves the box interior")
    if psi.support_t[1] > T * (1 + 1e-12):
        raise SupportViolation(f"test function time support {psi.support_t} exceeds T={T}")


# ---------------------------------------------------------------------------
# Entropy inequality


class _FluxTable:
    """``u -> F^beta(u, k)`` by cubic spline over a value range."""

    def __init__(self, pair, flux, k, lo, hi, n=4001):
        pad = 2 * pair.eps + 1e-6
        r = np.linspace(lo - pad, hi + pad, n)
        self.spline = CubicSpline(r, entropy_flux_array(pair, flux, r, k))

    def __call__(self, u):
        return self.spline(u)


def _zero_sigma(x, u):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(u)).shape)


def _solver_sigma(cfg):
    return _zero_sigma if cfg.sigma_eps is None else cfg.sigma_eps


_TERMS = ("initial", "time", "flux", "quadratic", "ito")
_BUDGET = ("viscous", "coefficients", "ito", "quadrature", "consistency")


def _entropy_batch(obj, pair, k_grid, psi_set, *, with_budget=True, mollified=False, chunk=50):
    """Functional terms (and budget parts) for every path, k and psi.

    Returns dicts of arrays shaped ``(n_paths, len(k_grid), len(psi_set))``.
    Coefficient evaluations are shared across ``k`` and ``psi``; paths are
    processed in chunks to bound memory.
    """
    U_all, dW_all, cfg, dts = _as_ensemble_arrays(obj)
    grid = cfg.grid
    for psi in psi_set:
        _check_support(psi, grid, cfg.T)
    x, dx = grid.centers, grid.dx
    M, S_, N = U_all.shape
    t = np.arange(S_) * dts
    T_, X_ = t[:, None], x[None, :]
    ones = np.ones((S_, N))
    ev = lambda f: np.asarray(f(T_, X_), dtype=float) * ones  # noqa: E731
    P = [ev(p.psi) for p in psi_set]
    Pt = [ev(p.dpsi_dt) for p in psi_set]
    Px = [ev(p.dpsi_dx) for p in psi_set]
    Pxx = [ev(p.d2psi_dxx) for p in psi_set]
    w = _trapezoid_weights(S_, dts)
    wl = np.full(S_, dts)
    wl[-1] = 0.0
    lo, hi = float(U_all.min()), float(U_all.max())
    F_model, F_moll = cfg.flux, cfg.flux_eps
    sig_model, sig_moll = cfg.noise.sigma, _solver_sigma(cfg)
    if mollified:
        F_model, sig_model = F_moll, sig_moll
    tables = [(_FluxTable(pair, F_model, float(k), lo, hi), _FluxTable(pair, F_moll, float(k), lo, hi)) for k in k_grid]
    nu = 0.5 * dx * float(np.max(np.abs(F_moll.df(U_all))))
    kappa = cfg.eps_visc + nu
    K, Q = len(k_grid), len(psi_set)
    terms = {name: np.zeros((M, K, Q)) for name in _TERMS}
    budget = {name: np.zeros((M, K, Q)) for name in _BUDGET}

    def functional(B, dB, d2B, Z, Sg, q, m_sl, out):
        out["initial"][m_sl, ik, q] = B[:, 0] @ P[q][0] * dx
        out["time"][m_sl, ik, q] = np.einsum("msj,sj,s->m", B, Pt[q], w) * dx
        out["flux"][m_sl, ik, q] = np.einsum("msj,sj,s->m", Z, Px[q], w) * dx
        out["quadratic"][m_sl, ik, q] = 0.5 * np.einsum("msj,sj,s->m", Sg * Sg * d2B, P[q], w) * dx
        out["ito"][m_sl, ik, q] = np.einsum("msj,sj,ms->m", (Sg * dB)[:, :-1], P[q][:-1], dW) * dx

    for m0 in range(0, M, chunk):
        sl = slice(m0, min(m0 + chunk, M))
        U, dW = U_all[sl], dW_all[sl]
        Sg = np.asarray(sig_model(X_, U), dtype=float)
        if with_budget:
            Se = np.asarray(sig_moll(X_, U), dtype=float)
            dU = np.diff(U, axis=1)
            fU = F_moll.f(U)
            dF = (np.roll(fU, -1, axis=-1) - np.roll(fU, 1, axis=-1)) / (2 * dx)
        for ik, k in enumerate(k_grid):
            D = U - float(k)
            B, dB, d2B = pair.beta(D), pair.dbeta(D), pair.d2beta(D)
            Z = tables[ik][0](U)
            for q in range(Q):
                functional(B, dB, d2B, Z, Sg, q, sl, terms)
            if not with_budget:
                continue
            Ze = tables[ik][1](U)
            moll = {name: np.zeros((M, K, Q)) for name in _TERMS}
            for q in range(Q):
                functional(B, dB, d2B, Ze, Se, q, sl, moll)
            coef = sum(terms[n][sl, ik] for n in _TERMS) - sum(moll[n][sl, ik] for n in _TERMS)
            chain = B[:, 1:] - B[:, :-1] - dB[:, :-1] * dU - 0.5 * d2B[:, :-1] * Se[:, :-1] ** 2 * dts
            absB = np.abs(B)
            dt_core = Ze
            cons_core = dB * dF
            for q in range(Q):
                budget["viscous"][sl, ik, q] = kappa * np.einsum("msj,sj,s->m", absB, np.abs(Pxx[q]), w) * dx
                budget["coefficients"][sl, ik, q] = np.abs(coef[:, q])
                budget["ito"][sl, ik, q] = np.abs(np.einsum("msj,sj->m", chain, P[q][:-1]) * dx)
                integrand = B * Pt[q] + dt_core * Px[q] + 0.5 * Se * Se * d2B * P[q]
                budget["quadrature"][sl, ik, q] = np.abs(integrand.reshape(U.shape[0], -1) @ np.repeat(w - wl, N) * dx)
                cons = Ze * Px[q] + P[q] * cons_core
                budget["consistency"][sl, ik, q] = np.abs(cons.reshape(U.shape[0], -1) @ np.repeat(w, N) * dx)
    terms["total"] = sum(terms[n] for n in _TERMS)
    if with_budget:
        budget["total"] = sum(budget[n] for n in _BUDGET)
    return terms, (budget if with_budget else None)


def _pick(arr_dict, single):
    return {k: (float(v[0, 0, 0]) if single else v[:, 0, 0].copy()) for k, v in arr_dict.items()}


def entropy_functional(traj, pair: EntropyPair, k: float, psi: TestFunction, *, mollified=False, terms=False):
    """Entropy functional of one trajectory (or every path of an ensemble)
    for the entropy ``beta(. - k)`` with flux ``F^beta(., k)``.

    The initial term uses the first snapshot (the regularized data the path
    actually started from). ``mollified=True`` evaluates with the solver's
    ``F_eps``/``sigma_eps`` instead of the model coefficients.
    Returns a float for a trajectory and an ``(n_paths,)`` array for an
    ensemble; with ``terms=True`` a dict of the individual terms.
    """
    parts, _ = _entropy_batch(traj, pair, [k], [psi], with_budget=False, mollified=mollified)
    out = _pick(parts, isinstance(traj, Trajectory))
    return out if terms else out["total"]


def entropy_budget(traj, pair: EntropyPair, k: float, psi: TestFunction) -> dict:
    """Per-path a-posteriori error budget for the entropy functional.

    For the viscous scheme the functional equals a nonnegative dissipation
    plus the following non-sign-definite contributions, each bounded or
    evaluated pathwise:

    ``viscous``   (eps_visc + nu_num) * int int |beta(u-k)| |psi_xx|, the
                  diffusive flux against psi (nu_num = dx max|F'(u)| / 2 is
                  the scheme's numerical viscosity);
    ``coefficients``  |functional(F, sigma) - functional(F_eps, sigma_eps)|;
    ``ito``       |sum psi^n [beta(u^{n+1}) - beta(u^n) - beta'(u^n) du^n
                  - beta''(u^n) sigma_eps^2 dt / 2]|, the gap between the
                  discrete chain rule and the Ito formula;
    ``quadrature`` |trapezoid - left rectangle| for the dt-integrals;
    ``consistency`` |int int [F^beta psi_x + psi beta' D F(u)]|, centered flux
                  differences against the entropy flux.
    """
    _, bud = _entropy_batch(traj, pair, [k], [psi])
    return _pick(bud, isinstance(traj, Trajectory))


def default_k_grid(ens, n: int = 9) -> np.ndarray:
    """``n`` quantiles (endpoints included) of all observed solution values."""
    return np.quantile(np.asarray(ens.snapshots), np.linspace(0.0, 1.0, n))


def entropy_report(ens, pair: EntropyPair, k_grid, psi_set, tolerance=None) -> EntropyFunctionalResult:
    """Per-path minimum of the functional over ``k_grid x psi_set``.

    A path counts as nonnegative when every functional value is at least
    ``-tolerance``. ``tolerance=None`` uses the per-path, per-(k, psi)
    budget of :func:`entropy_budget`; a float applies one fixed tolerance.
    """
    terms, bud = _entropy_batch(ens, pair, list(k_grid), list(psi_set), with_budget=tolerance is None)
    V = terms["total"].reshape(terms["total"].shape[0], -1)
    if tolerance is None:
        Bd = bud["total"].reshape(V.shape)
    else:
        Bd = np.full(V.shape, float(tolerance))
    ok = np.all(V >= -Bd, axis=1)
    per_path = V.min(axis=1)
    m, se = mean_se(per_path)
    return EntropyFunctionalResult(per_path, m, se, float(np.mean(ok)), float(Bd.max()), Bd)


# ---------------------------------------------------------------------------
# Contraction, comparison, initial condition


def _check_coupled(u_ens: Ensemble, v_ens: Ensemble):
    cu, cv = u_ens.config, v_ens.config
    if (
        u_ens.base_seed != v_ens.base_seed
        or u_ens.n_paths != v_ens.n_paths
        or u_ens.increments.shape != v_ens.increments.shape
        or not np.array_equal(u_ens.increments, v_ens.increments)
    ):
        raise EnsembleMismatch("ensembles are not driven by the same Wiener paths")
    if cu.grid != cv.grid or cu.dt != cv.dt or cu.eps_visc != cv.eps_visc or u_ens.stride != v_ens.stride:
        raise EnsembleMismatch("ensembles differ in grid, dt, eps_visc or stride")


def _time_indices(ens, times):
    idx = []
    for t in times:
        i = int(round(t / ens.dt_snapshot))
        if abs(i * ens.dt_snapshot - t) > 1e-9 * max(1.0, t) or not 0 <= i < ens.snapshots.shape[1]:
            raise ValueError(f"time {t} is not a snapshot time")
        idx.append(i)
    return idx


def _distance_report(name, u_ens, v_ens, times, slack, positive):
    _check_coupled(u_ens, v_ens)
    dx = u_ens.config.grid.dx
    idx = _time_indices(u_ens, times)
    diff0 = u_ens.snapshots[:, 0] - v_ens.snapshots[:, 0]
    init_abs = np.sum(np.abs(diff0), axis=1) * dx
    init_pos = np.sum(np.maximum(diff0, 0.0), axis=1) * dx
    ia, _ = mean_se(init_abs)
    ip, ip_se = mean_se(init_pos if positive else init_abs)
    threshold = ip + slack * ia
    ests, ses, oks = [], [], []
    for i in idx:
        d = u_ens.snapshots[:, i] - v_ens.snapshots[:, i]
        per = np.sum(np.maximum(d, 0.0) if positive else np.abs(d), axis=1) * dx
        m, se = mean_se(per)
        ests.append(m)
        ses.append(se)
        oks.append(m <= threshold + 2 * se)
    worst = int(np.argmax(np.asarray(ests) - 2 * np.asarray(ses)))
    meta = {
        "times": list(times),
        "estimates": ests,
        "std_errors": ses,
        "initial_distance": ia,
        "initial_positive_part": ip if positive else ia,
        "slack": slack,
        "paths": u_ens.n_paths,
        "eps_visc": u_ens.config.eps_visc,
        "n_cells": u_ens.config.grid.n_cells,
        "rule": "estimate(t) <= initial + slack * initial_L1 + 2 std_error(t) at every t",
    }
    return VerificationReport(name, ests[worst], ses[worst], threshold, bool(all(oks)), meta)


def l1_contraction(u_ens: Ensemble, v_ens: Ensemble, times, slack: float = 0.05) -> VerificationReport:
    """``E||u(t) - v(t)||_1`` against ``E||u(0) - v(0)||_1 (1 + slack)``.

    The reported estimate is the time with the least margin.
    """
    return _distance_report("l1_contraction", u_ens, v_ens, times, slack, positive=False)


def comparison(u_ens: Ensemble, v_ens: Ensemble, times, slack: float = 0.05) -> VerificationReport:
    """``E||(u(t) - v(t))_+||_1`` against ``E||(u0 - v0)_+||_1 + slack E||u0 - v0||_1``."""
    return _distance_report("comparison", u_ens, v_ens, times, slack, positive=True)


def initial_attainment(ens: Ensemble, u0, psi_x, h_ladder) -> VerificationReport:
    """``A(h) = E[(1/h) int_0^h int |u(t,x) - u0(x)| psi(x) dx dt]`` on a
    ladder of ``h`` (trapezoid in time). Passes when ``A`` strictly decreases
    as ``h`` shrinks and ``A(h_min) <= A(h_max) / 2``."""
    grid = ens.config.grid
    x = grid.centers
    u0v = np.asarray(u0(x), dtype=float)
    wx = np.asarray(psi_x(x), dtype=float) * grid.dx
    hs = sorted((float(h) for h in h_ladder), reverse=True)
    vals, ses = [], []
    for h in hs:
        n = int(round(h / ens.dt_snapshot))
        if abs(n * ens.dt_snapshot - h) > 1e-9 * h or n < 2:
            raise ValueError(f"h={h} must be a multiple of the snapshot interval, at least 2 of them")
        if n >= ens.snapshots.shape[1]:
            raise ValueError(f"h={h} exceeds the simulated horizon")
        w = _trapezoid_weights(n + 1, ens.dt_snapshot) / h
        per = np.einsum("msj,j,s->m", np.abs(ens.snapshots[:, : n + 1] - u0v), wx, w)
        m, se = mean_se(per)
        vals.append(m)
        ses.append(se)
    decreasing = all(b < a for a, b in zip(vals, vals[1:]))
    threshold = vals[0] / 2
    passed = decreasing and vals[-1] <= threshold
    meta = {"h": hs, "A": vals, "std_errors": ses, "strictly_decreasing": decreasing, "paths": ens.n_paths,
            "rule": "A strictly decreasing along the ladder and A(h_min) <= A(h_max)/2"}
    return VerificationReport("initial_attainment", vals[-1], ses[-1], threshold, bool(passed), meta)


# ---------------------------------------------------------------------------
# Strong entropy condition


def _periodic_kernel(grid, delta):
    """``K[y, x] = varrho_delta(x - y) dx`` with periodic distance."""
    x = grid.centers
    d = x[None, :] - x[:, None]
    d = d - grid.length * np.round(d / grid.length)
    m = build_mollifiers(1.0, delta)
    return m.varrho(d) * grid.dx


def _interp_weights(V, lo, h, n):
    s = (V - lo) / h
    k = np.clip(np.floor(s), 0, n - 2).astype(np.intp)
    return k, s - k


def _take_v(A, k, a):
    """Linear interpolation along the last axis of ``A`` at (index, weight)."""
    k = k[..., None]
    return (np.take_along_axis(A, k, -1)[..., 0] * (1 - a) + np.take_along_axis(A, k + 1, -1)[..., 0] * a)


@dataclass(frozen=True)
class _StrongSetup:
    """Precomputed kernels restricted to where ``psi`` (and the x-band
    around it) is nonzero."""

    ys: np.ndarray        # y cells inside the psi support
    cols: np.ndarray      # x cells reached from ys by the kernel
    Kx: np.ndarray        # (len(ys), len(cols)) varrho_delta(x - y) dx
    offsets: np.ndarray   # band offsets o with x = y + o
    band_w: np.ndarray    # kernel weight per offset
    Psi: np.ndarray       # (S, len(ys)) psi(s_m, y)
    w: np.ndarray         # (S,) trapezoid weights for ds
    rho: np.ndarray       # (S-1, S) rho_{delta0}(t_n - s_m)
    G: np.ndarray         # (S-1, len(ys)) int rho(r - s) psi(s, y) ds
    dx: float
    dts: float
    n_cells: int


def _strong_setup(cfg, n_snap, dts, psi, delta, delta0):
    grid = cfg.grid
    _check_support(psi, grid, cfg.T)
    lo, hi = psi.support_x
    if hi > lo and (lo - delta < grid.x_min or hi + delta > grid.x_max):
        raise SupportViolation("psi support widened by delta leaves the box")
    if delta0 < 4 * dts * (1 - 1e-12):
        raise ValueError(f"delta0={delta0} must span at least 4 snapshot intervals ({4 * dts})")
    t = np.arange(n_snap) * dts
    x = grid.centers
    N = x.size
    Psi = np.asarray(psi.psi(t[:, None], x[None, :]), dtype=float) * np.ones((n_snap, N))
    ys = np.nonzero(np.any(Psi != 0, axis=0))[0]
    if ys.size == 0:
        ys = np.arange(1)
    full = _periodic_kernel(grid, delta)
    cols = np.nonzero(np.any(full[ys] != 0, axis=0))[0]
    b = int(math.ceil(delta / grid.dx)) + 1
    offsets = np.arange(-b, b + 1)
    band_w = full[0, offsets % N]
    keep = band_w != 0
    m = build_mollifiers(delta0, delta)
    rho = m.rho(t[:-1, None] - t[None, :])
    w = _trapezoid_weights(n_snap, dts)
    Psi = Psi[:, ys]
    G = rho @ (w[:, None] * Psi)
    return _StrongSetup(ys, cols, full[np.ix_(ys, cols)], offsets[keep], band_w[keep], Psi, w, rho, G,
                        grid.dx, dts, N)


def _v_grid(V, pair, v_grid_n, v_range):
    if v_range is None:
        lo, hi = float(V.min()) - pair.eps, float(V.max()) + pair.eps
    else:
        lo, hi = map(float, v_range)
    n = max(int(v_grid_n), int(math.ceil((hi - lo) / (pair.eps / 8.0))) + 1)
    return lo, hi, n


def _tabulate_J(setup, Ut, su, dW, pair, vk):
    """``K(r, y, v_k)`` and ``J(s, y, v_k)`` on the restricted index sets."""
    A = su[:-1, setup.cols, None] * pair.dbeta(Ut[:-1, setup.cols, None] - vk)
    K = np.matmul(setup.Kx, A)                         # (S-1, ys, n_v)
    Pr = setup.rho.T * dW[None, :]                     # (S, S-1): rho(t_n - s_m) dW_n
    n1, ny, nv = K.shape
    J = (Pr @ K.reshape(n1, -1)).reshape(-1, ny, nv) * setup.Psi[:, :, None]
    return K, J, Pr


def _strong_path(setup, Ut, V, dW, sig_u, sig_v, pair, vg, direct=False):
    """LHS, control variate, RHS and interpolation budget for one path."""
    lo, hi, n_v = vg
    if V.min() < lo or V.max() > hi:
        raise VGridOverflow(f"v(s, y) range [{V.min():.4g}, {V.max():.4g}] leaves the v-grid [{lo:.4g}, {hi:.4g}]")
    h = (hi - lo) / (n_v - 1)
    vk = lo + h * np.arange(n_v)
    ys, dx, dts = setup.ys, setup.dx, setup.dts
    K, J, Pr = _tabulate_J(setup, Ut, sig_u, dW, pair, vk)
    Vy = V[:, ys]
    kk, aa = _interp_weights(Vy, lo, h, n_v)
    Jv = _take_v(J, kk, aa)                            # J(s, y, v(s, y))
    wy = setup.w[:, None] * dx
    lhs = float(np.sum(Jv * wy))
    # second differences of J bound the linear-interpolation error
    d2 = np.abs(np.diff(J, 2, axis=-1))
    d2 = np.concatenate([d2[..., :1], d2, d2[..., -1:]], axis=-1)
    ki = kk[..., None]
    bound = 0.125 * np.maximum(np.take_along_axis(d2, ki, -1), np.take_along_axis(d2, ki + 1, -1))[..., 0]
    interp = float(np.sum(bound * wy))
    # zero-mean control variate: same sum with v frozen at the integration time r
    kr, ar = _interp_weights(Vy[:-1], lo, h, n_v)
    Kr = _take_v(K, kr, ar)                            # K(r, y, v(r, y))
    cv = float(np.sum(dW[:, None] * Kr * setup.G) * dx)
    # RHS: -sum sigma(x,u~) sigma_eps(y,v) beta''(u~ - v) phi, banded in x - y
    xi = (ys[:, None] + setup.offsets[None, :]) % setup.n_cells       # (ys, band)
    Ub = Ut[:-1][:, xi]                                                # (S-1, ys, band)
    B2 = pair.d2beta(Ub - Vy[:-1, :, None])
    inner = np.einsum("nyo,o,nyo->ny", B2, setup.band_w, sig_u[:-1][:, xi])
    rhs = -float(np.sum(inner * sig_v[:, ys] * setup.G) * dts * dx)
    out = {"lhs": lhs, "control": cv, "rhs": rhs, "interp": interp}
    if direct:
        out["lhs_direct"] = _strong_direct(setup, Ut, Vy, sig_u[:-1], Pr, pair)
    return out


def _strong_direct(setup, Ut, Vy, Su, Pr, pair):
    """LHS with ``v = v(s, y)`` substituted before the x and r sums (no
    v-grid); for cross-checks."""
    total = 0.0
    cols = setup.cols
    for m in range(Pr.shape[0]):
        nz = np.nonzero(Pr[m])[0]
        if nz.size == 0 or not np.any(setup.Psi[m]):
            continue
        # A[n, y, x] = sigma(x, u~(r_n, x)) beta'(u~(r_n, x) - v(s_m, y))
        A = Su[nz][:, None, cols] * pair.dbeta(Ut[nz][:, None, cols] - Vy[m][None, :, None])
        inner = np.sum(A * setup.Kx[None], axis=-1)
        Jm = (Pr[m, nz] @ inner) * setup.Psi[m]
        total += float(np.sum(Jm) * setup.w[m] * setup.dx)
    return total


def strong_entropy_residual(
    v_ens: Ensemble,
    u_tilde_ens: Ensemble,
    pair: EntropyPair,
    psi: TestFunction,
    delta: float,
    delta0_ladder,
    v_grid_n: int = 64,
    *,
    v_range=None,
    control_variate: bool = True,
    direct_paths: int = 0,
) -> list:
    """Residual ``R = LHS - RHS`` of the strong entropy inequality for each
    ``delta0`` in the ladder.

    LHS is the Ito sum ``sum_r h(r, s; v, y) dW_r`` tabulated on a uniform
    v-grid and interpolated linearly at ``v = v(s, y)``. With
    ``control_variate`` the same sum with ``v`` frozen at the integration
    time, which has mean zero, is subtracted path by path. The model
    ``sigma`` is used for the probe ``u~`` and the solver's ``sigma_eps`` for
    ``v``. ``direct_paths`` additionally evaluates LHS for the first paths
    by direct substitution (no v-grid) and records the gap in metadata.

    Report ``k`` passes when ``|R_k| < |R_{k-1}|``; the last one must also
    satisfy ``|R| <= 2 std_error + budget``, where the budget is the
    ensemble mean of the v-interpolation error bound.
    """
    _check_coupled_drivers(v_ens, u_tilde_ens)
    cfg = v_ens.config
    dts = v_ens.dt_snapshot
    M, S_, N = v_ens.snapshots.shape
    x = cfg.grid.centers
    dW_all = v_ens.snapshot_increments
    vg = _v_grid(v_ens.snapshots, pair, v_grid_n, v_range)
    ladder = [float(d) for d in delta0_ladder]
    reports = []
    prev = None
    for j, d0 in enumerate(ladder):
        setup = _strong_setup(cfg, S_, dts, psi, delta, d0)
        rows = []
        for i in range(M):
            Ut = u_tilde_ens.snapshots[i]
            V = v_ens.snapshots[i]
            su = np.asarray(u_tilde_ens.config.noise.sigma(x[None, :], Ut), dtype=float)
            sv = np.asarray(_solver_sigma(cfg)(x[None, :], V[:-1]), dtype=float)  # at nodes
            rows.append(_strong_path(setup, Ut, V, dW_all[i], su, sv, pair, vg, direct=i < direct_paths))
        lhs = np.array([r["lhs"] for r in rows])
        cv = np.array([r["control"] for r in rows])
        rhs = np.array([r["rhs"] for r in rows])
        interp = np.array([r["interp"] for r in rows])
        raw = lhs - rhs
        per = raw - cv if control_variate else raw
        R, se = mean_se(per)
        raw_m, raw_se = mean_se(raw)
        budget = float(np.mean(interp))
        meta = {
            "delta": delta,
            "delta0": d0,
            "paths": M,
            "eps_visc": cfg.eps_visc,
            "n_cells": cfg.grid.n_cells,
            "entropy_eps": pair.eps,
            "v_grid": [vg[0], vg[1], vg[2]],
            "lhs": mean_se(lhs)[0],
            "rhs": mean_se(rhs)[0],
            "raw_estimate": raw_m,
            "raw_std_error": raw_se,
            "control_variate": control_variate,
            "interpolation_budget": budget,
        }
        if direct_paths:
            gaps = [r["lhs_direct"] - r["lhs"] for r in rows[:direct_paths]]
            meta["direct_lhs_max_gap"] = float(np.max(np.abs(gaps)))
            meta["direct_lhs_scale"] = float(np.max(np.abs(lhs[:direct_paths])))
        if j == len(ladder) - 1:
            threshold = budget
            passed = abs(R) <= threshold + 2 * se and (prev is None or abs(R) < abs(prev))
            meta["rule"] = "|R| below the previous rung and |R| <= budget + 2 std_error"
        else:
            threshold = abs(prev) if prev is not None else math.inf
            passed = prev is None or abs(R) < abs(prev)
            meta["rule"] = "|R| below the previous rung"
        reports.append(VerificationReport("strong_entropy_residual", R, se, threshold, bool(passed), meta))
        prev = R
    return reports


def _check_coupled_drivers(a: Ensemble, b: Ensemble):
    if a.n_paths != b.n_paths or a.base_seed != b.base_seed or not np.array_equal(a.increments, b.increments):
        raise EnsembleMismatch("ensembles are not driven by the same Wiener paths")
    if a.config.grid != b.config.grid or a.stride != b.stride or a.config.dt != b.config.dt:
        raise EnsembleMismatch("ensembles differ in grid, dt or stride")


def jbeta_linf_probe(u_tilde_ens: Ensemble, pair: EntropyPair, psi: TestFunction, delta: float, delta0: float,
                     v_grid_n: int = 64) -> tuple:
    """``sup_s E ||J[beta', phi](s; ., .)||_inf^2`` over the (y, v) tabulation.

    The v-grid spans the observed range of ``u~`` widened by two entropy
    widths; beyond it ``beta'`` is constant in ``v``, so the sup is reached
    inside. Returns ``(estimate, std_error at the maximizing s)``.
    """
    cfg = u_tilde_ens.config
    M, S_, N = u_tilde_ens.snapshots.shape
    dts = u_tilde_ens.dt_snapshot
    setup = _strong_setup(cfg, S_, dts, psi, delta, delta0)
    U = u_tilde_ens.snapshots
    lo, hi = float(U.min()) - 2 * pair.eps, float(U.max()) + 2 * pair.eps
    n_v = max(int(v_grid_n), int(math.ceil((hi - lo) / (pair.eps / 8.0))) + 1)
    vk = np.linspace(lo, hi, n_v)
    x = cfg.grid.centers
    dW_all = u_tilde_ens.snapshot_increments
    sup2 = np.zeros((M, S_))
    for i in range(M):
        su = np.asarray(cfg.noise.sigma(x[None, :], U[i]), dtype=float)
        _, J, _ = _tabulate_J(setup, U[i], su, dW_all[i], pair, vk)
        sup2[i] = np.max(np.abs(J), axis=(1, 2)) ** 2
    m, se = mean_se(sup2)
    s = int(np.argmax(m))
    return float(m[s]), float(se[s])


# ---------------------------------------------------------------------------
# Vanishing-viscosity ladders


def _check_ladder(ladder):
    if len(ladder) < 2:
        raise ValueError("a ladder needs at least two ensembles")
    first = ladder[0]
    for e in ladder[1:]:
        if (
            e.base_seed != first.base_seed
            or e.n_paths != first.n_paths
            or e.increments.shape != first.increments.shape
            or not np.array_equal(e.increments, first.increments)
        ):
            raise EnsembleMismatch("ladder ensembles are not driven by the same Wiener paths")
        if e.config.T != first.config.T:
            raise EnsembleMismatch("ladder ensembles have different horizons")


def _cell_means(ens: Ensemble, values, cells):
    """Average ``values`` (M, S, N) over blocks of ``k_t`` snapshots by
    ``k_x`` grid cells; the last snapshot is dropped when it does not fill a
    block."""
    k_x, k_t = cells
    M, S_, N = values.shape
    if N % k_x:
        raise ValueError(f"n_cells={N} is not a multiple of k_x={k_x}")
    n_t = S_ // k_t
    if n_t == 0:
        raise ValueError(f"fewer than k_t={k_t} snapshots")
    v = values[:, : n_t * k_t].reshape(M, n_t, k_t, N // k_x, k_x)
    return v.mean(axis=(2, 4))


def young_diagnostic(eps_ladder, flux: FluxModel, psi: TestFunction, cells=(4, 4), enforce_a4: bool = True,
                     r_samples=None, control_bound=None) -> VerificationReport:
    """Jensen gap of the empirical Young measures along a viscosity ladder.

    For each ensemble the space-time box is cut into cells of ``k_x`` grid
    cells by ``k_t`` snapshots. Per (path, cell) the empirical measure of
    ``u`` gives ``D = sum_cells psi (mean F(u) - F(mean u))^2 |cell|``, which
    is averaged over paths. Cells scale with each rung's own grid, so the
    ladder should refine ``dx`` and the snapshot interval together with
    ``eps_visc``. Passes when ``D`` strictly decreases along the ladder.

    With ``enforce_a4`` a flux that fails the genuine-nonlinearity check
    raises :class:`A4Violation`; affine fluxes give ``D = 0`` identically.
    Giving ``control_bound`` turns the report into that control: it passes
    when ``D <= control_bound`` on every rung.
    """
    if enforce_a4:
        r = np.linspace(-2.0, 2.0, 401) if r_samples is None else r_samples
        if not validate_flux(flux, r).flags["a4"]:
            raise A4Violation(f"flux {flux.name!r} is not genuinely nonlinear on the sampled range")
    ladder = list(eps_ladder)
    _check_ladder(ladder)
    vals, ses, eps, shapes = [], [], [], []
    for ens in ladder:
        cfg = ens.config
        k_x, k_t = cells
        U = ens.snapshots
        mu = _cell_means(ens, U, cells)
        mf = _cell_means(ens, np.asarray(flux.f(U), dtype=float), cells)
        gap2 = (mf - np.asarray(flux.f(mu), dtype=float)) ** 2
        n_t, n_x = mu.shape[1:]
        tc = (np.arange(n_t) + 0.5) * k_t * ens.dt_snapshot
        xc = cfg.grid.x_min + (np.arange(n_x) + 0.5) * k_x * cfg.grid.dx
        w = np.asarray(psi.psi(tc[:, None], xc[None, :]), dtype=float) * np.ones((n_t, n_x))
        vol = k_t * ens.dt_snapshot * k_x * cfg.grid.dx
        per = np.einsum("mtx,tx->m", gap2, w) * vol
        m, se = mean_se(per)
        vals.append(m)
        ses.append(se)
        eps.append(cfg.eps_visc)
        shapes.append([int(n_t), int(n_x)])
    decreasing = all(b < a for a, b in zip(vals, vals[1:]))
    meta = {"eps_visc": eps, "D": vals, "std_errors": ses, "cells": list(cells), "cell_counts": shapes,
            "flux": flux.name, "paths": ladder[0].n_paths, "strictly_decreasing": decreasing}
    if control_bound is not None:
        meta["rule"] = "D <= control_bound on every rung"
        worst = max(vals)
        return VerificationReport("young_diagnostic_control", worst, 0.0, float(control_bound),
                                  bool(worst <= control_bound), meta)
    meta["rule"] = "D strictly decreasing along the ladder"
    return VerificationReport("young_diagnostic", vals[-1], ses[-1], vals[-2], bool(decreasing), meta)


def moment_uniformity(eps_ladder, p_values=(2, 4), max_ratio: float = 2.0) -> VerificationReport:
    """``max_t E||u_eps(t)||_p^p`` per rung; passes when neighbouring rungs
    differ by less than ``max_ratio`` for every ``p``."""
    ladder = list(eps_ladder)
    table, worst = {}, 1.0
    ses = {}
    for p in p_values:
        row, row_se = [], []
        for ens in ladder:
            per = np.sum(np.abs(ens.snapshots) ** p, axis=2) * ens.config.grid.dx   # (M, S)
            m, se = mean_se(per)
            i = int(np.argmax(m))
            row.append(float(m[i]))
            row_se.append(float(se[i]))
        for a, b in zip(row, row[1:]):
            worst = max(worst, max(a, b) / min(a, b) if min(a, b) > 0 else math.inf)
        table[str(p)] = row
        ses[str(p)] = row_se
    meta = {"eps_visc": [e.config.eps_visc for e in ladder], "sup_moments": table, "std_errors": ses,
            "p": list(p_values), "rule": f"neighbouring rungs differ by a factor < {max_ratio}"}
    return VerificationReport("moment_uniformity", worst, 0.0, max_ratio, bool(worst < max_ratio), meta)


def _restrict(ens: Ensemble, n_cells: int, times) -> np.ndarray:
    """Cell averages on a coarser periodic grid at the given snapshot times."""
    N = ens.config.grid.n_cells
    if N % n_cells:
        raise EnsembleMismatch(f"grid of {N} cells does not nest over {n_cells} cells")
    idx = _time_indices(ens, times)
    U = ens.snapshots[:, idx]
    return U.reshape(U.shape[0], U.shape[1], n_cells, N // n_cells).mean(axis=3)


def cauchy_convergence(eps_ladder) -> VerificationReport:
    """``E||u_{eps_k} - u_{eps_{k+1}}||_{L^1}`` over space-time per rung.

    Rungs are compared on the coarsest grid (cell averages) at the coarsest
    snapshot times, trapezoid in time. Passes when the differences do not
    increase along the ladder.
    """
    ladder = list(eps_ladder)
    _check_ladder(ladder)
    g0 = ladder[0].config.grid
    for e in ladder[1:]:
        g = e.config.grid
        if (g.x_min, g.x_max) != (g0.x_min, g0.x_max):
            raise EnsembleMismatch("ladder grids cover different boxes")
    coarse = min(ladder, key=lambda e: (e.config.grid.n_cells, -e.dt_snapshot))
    n_cells = coarse.config.grid.n_cells
    dts = max(e.dt_snapshot for e in ladder)
    n_t = int(round(ladder[0].config.T / dts))
    times = [i * dts for i in range(n_t + 1)]
    wt = _trapezoid_weights(n_t + 1, dts)
    dx = (g0.x_max - g0.x_min) / n_cells
    fields = [_restrict(e, n_cells, times) for e in ladder]
    vals, ses = [], []
    for a, b in zip(fields, fields[1:]):
        per = np.einsum("msx,s->m", np.abs(a - b), wt) * dx
        m, se = mean_se(per)
        vals.append(m)
        ses.append(se)
    ok = all(b <= a for a, b in zip(vals, vals[1:]))
    meta = {"eps_visc": [e.config.eps_visc for e in ladder], "differences": vals, "std_errors": ses,
            "n_cells": n_cells, "dt_snapshot": dts, "paths": ladder[0].n_paths,
            "rule": "rung differences nonincreasing"}
    thr = vals[-2] if len(vals) > 1 else math.inf
    return VerificationReport("cauchy_convergence", vals[-1], ses[-1], thr, bool(ok), meta)
