import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochscl.calculus import build_entropy_pair, product_test_function, spatial_bump, zero_test_function
from stochscl.core import build_grid, sample_wiener
from stochscl.errors import A4Violation, EnsembleMismatch, SupportViolation
from stochscl.models import (
    additive_noise,
    bounded_sine_noise,
    bump,
    burgers_flux,
    linear_flux,
    riemann,
    sine,
    two_bumps,
    zero_data,
    zero_flux,
    zero_noise,
)
from stochscl.solver import Ensemble, ViscousConfig, run_ensemble, solve
from stochscl.verify import (
    CSV_COLUMNS,
    VerificationReport,
    cauchy_convergence,
    comparison,
    entropy_budget,
    entropy_functional,
    entropy_report,
    initial_attainment,
    jbeta_linf_probe,
    l1_contraction,
    mean_se,
    moment_uniformity,
    strong_entropy_residual,
    young_diagnostic,
)


def cfg(n=64, eps=0.04, T=0.2, flux=None, noise=None, dt=None, **kw):
    g = build_grid(-1.0, 1.0, n)
    return ViscousConfig(eps, g, T, dt or T / 50, burgers_flux() if flux is None else flux,
                         bounded_sine_noise() if noise is None else noise, **kw)


@pytest.fixture(scope="module")
def pair_uv():
    c = cfg()
    u = run_ensemble(c, 24, 2, two_bumps(-0.25, 0.25, 0.3, 0.5, 0.5), stride=1)
    v = run_ensemble(c, 24, 2, bump(0.1, 0.4, 0.6), stride=1)
    return u, v


class TestReport:
    def test_json_and_csv(self):
        r = VerificationReport("p", 0.5, 0.1, 1.0, True, {"a": np.float64(2.0), "b": np.arange(2), "c": math.inf})
        d = json.loads(r.to_json())
        assert set(d) == {"property", "estimate", "std_error", "threshold", "passed", "metadata"}
        assert d["metadata"] == {"a": 2.0, "b": [0, 1], "c": "inf"}
        assert r.csv_row("exp") == ["exp", "p", "0.5", "0.1", "1.0", "true"]
        assert CSV_COLUMNS == ("experiment", "property", "estimate", "std_error", "threshold", "passed")

    def test_mean_se(self):
        m, se = mean_se([1.0, 2.0, 3.0])
        assert m == 2.0 and se == pytest.approx(1 / math.sqrt(3))
        assert mean_se([4.0]) == (4.0, 0.0)


class TestEntropyFunctional:
    def test_constant_state_is_zero(self):
        c = cfg(noise=zero_noise())
        tr = solve(c, sample_wiener(0, 0, c.n_steps, c.dt), zero_data(), stride=2)
        assert entropy_functional(tr, build_entropy_pair(0.1), 0.0, product_test_function(0.2, 0, 0.5)) == 0.0

    def test_affine_in_psi(self, pair_uv):
        tr = pair_uv[0].trajectory(3)
        pair = build_entropy_pair(0.05)
        a = product_test_function(0.2, -0.3, 0.3)
        b = product_test_function(0.15, 0.35, 0.3)
        fa = entropy_functional(tr, pair, 0.1, a)
        fb = entropy_functional(tr, pair, 0.1, b)
        assert entropy_functional(tr, pair, 0.1, a + b) == pytest.approx(fa + fb, abs=1e-13)
        assert entropy_functional(tr, pair, 0.1, a.scaled(2.5)) == pytest.approx(2.5 * fa, abs=1e-13)

    def test_deterministic_shock_within_budget(self):
        g = build_grid(-1, 1, 128)
        c = ViscousConfig(0.01, g, 0.3, 0.3 / 75, burgers_flux(), zero_noise(), u_bound=1.0)
        tr = solve(c, sample_wiener(0, 0, c.n_steps, c.dt), riemann(1.0, 0.0, -0.2), stride=1)
        pair = build_entropy_pair(0.05)
        psi = product_test_function(0.3, -0.1, 0.5)
        for k in (0.25, 0.5, 0.75):
            val = entropy_functional(tr, pair, k, psi)
            assert val >= -entropy_budget(tr, pair, k, psi)["total"]

    def test_smooth_zero_noise_outside_range(self):
        g = build_grid(-1, 1, 128)
        c = ViscousConfig(0.01, g, 0.2, 0.2 / 50, burgers_flux(), zero_noise(), u_bound=1.0)
        tr = solve(c, sample_wiener(0, 0, c.n_steps, c.dt), bump(0, 0.5, 0.4), stride=1)
        pair = build_entropy_pair(0.05)
        psi = product_test_function(0.2, 0.0, 0.7)
        # beta(. - k) is affine on the solution range: only discretization error remains
        vals = [entropy_functional(tr, pair, k, psi) for k in (-0.5, 1.0)]
        assert max(abs(v) for v in vals) < 5e-3
        for k, val in zip((-0.5, 1.0), vals):
            assert val >= -entropy_budget(tr, pair, k, psi)["total"]

    def test_single_path_ensemble(self, pair_uv):
        u = pair_uv[0]
        one = Ensemble(u.config, u.base_seed, u.snapshots[:1], u.increments[:1], u.stride, u.u0_values)
        pair = build_entropy_pair(0.05)
        psi = product_test_function(0.2, 0, 0.6)
        res = entropy_report(one, pair, [0.1], [psi], tolerance=0.0)
        assert res.per_path_values[0] == entropy_functional(u.trajectory(0), pair, 0.1, psi)

    def test_report_fraction(self, pair_uv):
        u = pair_uv[0]
        psis = [product_test_function(0.2, 0, 0.6)]
        res = entropy_report(u, build_entropy_pair(0.05), [0.0, 0.2], psis)
        assert 0.0 <= res.fraction_nonnegative <= 1.0
        assert res.per_path_values.shape == (u.n_paths,)

    def test_support_outside_box(self, pair_uv):
        with pytest.raises(SupportViolation):
            entropy_functional(pair_uv[0].trajectory(0), build_entropy_pair(0.1), 0.0,
                               product_test_function(0.2, 0.8, 0.5))


class TestContraction:
    def test_identical_data(self, pair_uv):
        u = pair_uv[0]
        r = l1_contraction(u, u, [0.1, 0.2])
        assert r.metadata["estimates"] == [0.0, 0.0]
        assert r.passed

    def test_symmetry(self, pair_uv):
        u, v = pair_uv
        a = l1_contraction(u, v, [0.04, 0.1, 0.2])
        b = l1_contraction(v, u, [0.04, 0.1, 0.2])
        assert a.metadata["estimates"] == b.metadata["estimates"]

    def test_positive_parts_sum(self, pair_uv):
        u, v = pair_uv
        t = [0.04, 0.1, 0.2]
        full = l1_contraction(u, v, t).metadata["estimates"]
        p = comparison(u, v, t).metadata["estimates"]
        n = comparison(v, u, t).metadata["estimates"]
        np.testing.assert_allclose(np.add(p, n), full, rtol=1e-13)

    def test_deterministic_contraction(self):
        c = cfg(noise=zero_noise(), T=0.4, dt=0.004)
        u = run_ensemble(c, 1, 0, two_bumps(-0.3, 0.3, 0.25, 0.5, 0.5), stride=1)
        v = run_ensemble(c, 1, 0, bump(0.0, 0.4, 0.6), stride=1)
        est = l1_contraction(u, v, [0.1, 0.2, 0.3, 0.4], slack=0.0).metadata["estimates"]
        assert np.all(np.diff(est) <= 1e-12)

    def test_ordered_data(self, pair_uv):
        u = pair_uv[0]
        c = u.config
        base = two_bumps(-0.25, 0.25, 0.3, 0.5, 0.5)
        lower = bump(0.0, 0.3, 0.3)
        v = run_ensemble(c, 24, 2, lambda x: base(x) - lower(x), stride=1)
        assert comparison(v, u, [0.1, 0.2]).passed

    def test_mismatched_drivers(self, pair_uv):
        u = pair_uv[0]
        w = run_ensemble(u.config, 24, 3, bump(), stride=1)
        with pytest.raises(EnsembleMismatch):
            l1_contraction(u, w, [0.1])

    def test_time_not_on_snapshots(self, pair_uv):
        with pytest.raises(ValueError):
            l1_contraction(*pair_uv, [0.1234])


class TestInitialAttainment:
    def test_zero_weight(self, pair_uv):
        r = initial_attainment(pair_uv[0], two_bumps(-0.25, 0.25, 0.3, 0.5, 0.5), lambda x: 0 * x, [0.04, 0.02])
        assert r.metadata["A"] == [0.0, 0.0]

    def test_heat_decay(self):
        c = cfg(flux=zero_flux(), noise=zero_noise(), eps=0.05, T=0.1, dt=0.1 / 200)
        ens = run_ensemble(c, 1, 0, bump(0, 0.4, 0.5), stride=1)
        r = initial_attainment(ens, bump(0, 0.4, 0.5), spatial_bump(0, 0.8)[0], [0.08, 0.04, 0.02, 0.01])
        assert r.passed
        assert r.metadata["strictly_decreasing"]

    def test_h_must_be_resolved(self, pair_uv):
        with pytest.raises(ValueError):
            initial_attainment(pair_uv[0], bump(), lambda x: 1 + 0 * x, [0.005])


def frozen_pair(M=100, n=32, c=0.1):
    """v = c + s_eps(y) W(t) (exact for additive noise without flux or
    viscosity) against the frozen probe u~ = c, sharing the Brownian paths."""
    conf = ViscousConfig(0.1, build_grid(-1, 1, n), 0.4, 0.4 / 200, zero_flux(), additive_noise(0.3, 0.5),
                         u_bound=1.0)
    base = run_ensemble(conf, M, 3, zero_data(), stride=1)
    W = np.concatenate([np.zeros((M, 1)), np.cumsum(base.increments, axis=1)], axis=1)
    s = conf.sigma_eps.at_nodes(np.zeros(n))
    V = c + W[:, :, None] * s
    U = np.full_like(V, c)
    return (Ensemble(conf, 3, V, base.increments, 1, V[0, 0].copy()),
            Ensemble(conf, 3, U, base.increments, 1, U[0, 0].copy()))


class TestStrongResidual:
    def test_zero_noise(self):
        c = cfg(noise=zero_noise(), T=0.4, dt=0.004)
        v = run_ensemble(c, 3, 0, bump(0, 0.3), stride=1)
        u = run_ensemble(c, 3, 0, bump(0.1, 0.3), stride=1)
        reps = strong_entropy_residual(v, u, build_entropy_pair(0.1), product_test_function(0.4, 0, 0.5), 0.1,
                                       [0.08, 0.04])
        for r in reps:
            assert r.estimate == 0.0
            assert r.metadata["lhs"] == 0.0 and r.metadata["rhs"] == 0.0

    def test_reflection_invariance(self):
        c = cfg(T=0.4, dt=0.004)
        v = run_ensemble(c, 4, 1, bump(0, 0.3), stride=1)
        u = run_ensemble(c, 4, 1, bump(0.1, 0.3, 0.3), stride=1)
        pair = build_entropy_pair(0.1)
        psi = product_test_function(0.4, 0, 0.5)
        a = strong_entropy_residual(v, u, pair, psi, 0.1, [0.04])[0]
        b = strong_entropy_residual(v, u, pair.reflected(), psi, 0.1, [0.04])[0]
        assert b.metadata["rhs"] == pytest.approx(a.metadata["rhs"], rel=1e-12, abs=1e-15)

    def test_direct_substitution_agrees(self):
        c = cfg(T=0.4, dt=0.004)
        v = run_ensemble(c, 2, 1, bump(0, 0.3), stride=1)
        u = run_ensemble(c, 2, 1, bump(0.1, 0.3, 0.3), stride=1)
        r = strong_entropy_residual(v, u, build_entropy_pair(0.1), product_test_function(0.4, 0, 0.5), 0.1,
                                    [0.04], direct_paths=2)[0]
        assert r.metadata["direct_lhs_max_gap"] <= 0.02 * r.metadata["direct_lhs_scale"] + 1e-6

    def test_constant_field_reduction(self):
        # LHS is driven towards the closed-form RHS as delta0 shrinks
        v, u = frozen_pair()
        reps = strong_entropy_residual(v, u, build_entropy_pair(0.1), product_test_function(0.4, 0, 0.5), 0.1,
                                       [0.04, 0.01])
        big, small = reps
        assert abs(small.estimate) < abs(big.estimate)
        rhs = small.metadata["rhs"]
        assert abs(small.metadata["lhs"] - rhs) <= 0.1 * abs(rhs)

    def test_delta0_precondition(self, pair_uv):
        u, v = pair_uv
        with pytest.raises(ValueError):
            strong_entropy_residual(u, v, build_entropy_pair(0.1), product_test_function(0.2, 0, 0.5), 0.1,
                                    [0.01])

    def test_mismatched_drivers(self, pair_uv):
        u = pair_uv[0]
        w = run_ensemble(u.config, 24, 5, bump(), stride=1)
        with pytest.raises(EnsembleMismatch):
            strong_entropy_residual(u, w, build_entropy_pair(0.1), product_test_function(0.2, 0, 0.5), 0.1,
                                    [0.04])


class TestJBetaProbe:
    def test_zero_noise(self):
        c = cfg(noise=zero_noise(), T=0.4, dt=0.004)
        u = run_ensemble(c, 3, 0, bump(0, 0.3), stride=1)
        assert jbeta_linf_probe(u, build_entropy_pair(0.1), product_test_function(0.4, 0, 0.5), 0.1, 0.04)[0] == 0.0

    def test_zero_psi(self):
        c = cfg(T=0.4, dt=0.004)
        u = run_ensemble(c, 3, 0, bump(0, 0.3), stride=1)
        assert jbeta_linf_probe(u, build_entropy_pair(0.1), zero_test_function(), 0.1, 0.04)[0] == 0.0

    def test_growth_when_delta0_halves(self):
        c = cfg(T=0.4, dt=0.004)
        u = run_ensemble(c, 16, 0, bump(0, 0.3), stride=1)
        pair = build_entropy_pair(0.1)
        psi = product_test_function(0.4, 0, 0.5)
        a = jbeta_linf_probe(u, pair, psi, 0.1, 0.04)[0]
        b = jbeta_linf_probe(u, pair, psi, 0.1, 0.02)[0]
        assert 0 < b / a <= 2**1.8


def ladder(flux, noise=None, M=8, u0=None):
    out = []
    u0 = sine(1.0, 1.0) if u0 is None else u0
    for e, n, s in ((8e-3, 160, 16), (4e-3, 320, 8), (2e-3, 640, 4)):
        c = ViscousConfig(e, build_grid(-1, 1, n), 0.25, 0.25 / 512, flux,
                          bounded_sine_noise() if noise is None else noise, u_bound=1.25)
        out.append(run_ensemble(c, M, 5, u0, stride=s))
    return out


@pytest.fixture(scope="module")
def burgers_ladder():
    return ladder(burgers_flux())


class TestYoung:
    def test_burgers_decreasing(self, burgers_ladder):
        r = young_diagnostic(burgers_ladder, burgers_flux(), product_test_function(0.25, 0, 0.9))
        assert r.passed

    def test_linear_flux_vanishes(self):
        lad = ladder(linear_flux(1.0), M=4)
        r = young_diagnostic(lad, linear_flux(1.0), product_test_function(0.25, 0, 0.9), enforce_a4=False,
                             control_bound=1e-12)
        assert r.passed
        assert max(r.metadata["D"]) <= 1e-12

    def test_a4_enforced(self, burgers_ladder):
        with pytest.raises(A4Violation):
            young_diagnostic(burgers_ladder, linear_flux(1.0), product_test_function(0.25, 0, 0.9))

    def test_smooth_deterministic_shrinks_with_dx(self):
        # smooth data well before breaking: the cell measures are nearly
        # point masses and D falls at least like dx^2
        lad = ladder(burgers_flux(), noise=zero_noise(), M=1, u0=sine(0.1, 1.0))
        r = young_diagnostic(lad, burgers_flux(), product_test_function(0.25, 0, 0.9))
        D = r.metadata["D"]
        assert D[0] / D[1] >= 4 and D[1] / D[2] >= 4

    def test_mismatched_ladder(self, burgers_ladder):
        other = ladder(burgers_flux(), M=4)
        with pytest.raises(EnsembleMismatch):
            young_diagnostic([burgers_ladder[0], other[1]], burgers_flux(), product_test_function(0.25, 0, 0.9))


class TestLadders:
    def test_moments_uniform(self, burgers_ladder):
        r = moment_uniformity(burgers_ladder)
        assert r.passed and r.estimate < 2.0

    def test_cauchy_identical_rungs(self, burgers_ladder):
        r = cauchy_convergence([burgers_ladder[0], burgers_ladder[0]])
        assert r.estimate == 0.0

    def test_cauchy_deterministic(self):
        lad = ladder(burgers_flux(), noise=zero_noise(), M=1)
        r = cauchy_convergence(lad)
        d = r.metadata["differences"]
        assert d[1] / d[0] <= 1.0

    def test_cauchy_linear_exact_case(self):
        # rung differences come from diffusion smearing only: ~ C * delta eps
        lad = ladder(linear_flux(1.0), M=4)
        d = cauchy_convergence(lad).metadata["differences"]
        deps = [4e-3, 2e-3]
        C = d[0] / deps[0]
        assert d[1] <= 1.5 * C * deps[1]


def test_standard_error_scaling():
    c = cfg(T=0.2)
    u = run_ensemble(c, 256, 7, bump(0, 0.3), stride=1)
    v = run_ensemble(c, 256, 7, bump(0.1, 0.3), stride=1)

    def se(m):
        uu = Ensemble(c, 7, u.snapshots[:m], u.increments[:m], 1, u.u0_values)
        vv = Ensemble(c, 7, v.snapshots[:m], v.increments[:m], 1, v.u0_values)
        return l1_contraction(uu, vv, [0.2]).metadata["std_errors"][0]

    s64, s128, s256 = se(64), se(128), se(256)
    assert math.sqrt(2) / 1.6 <= s64 / s128 <= math.sqrt(2) * 1.6
    assert 2 / 1.6 <= s64 / s256 <= 2 * 1.6
