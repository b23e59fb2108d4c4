import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochscl.core import (
    EnsembleSpec,
    NoiseModel,
    FluxModel,
    build_grid,
    sample_wiener,
    steps_for,
    validate_flux,
    validate_noise,
)
from stochscl.errors import AssumptionViolated, DerivativeMismatch, InvalidDomain
from stochscl.models import burgers_flux, linear_flux, zero_noise


class TestGrid:
    def test_spacing(self):
        assert build_grid(0, 1, 100).dx == pytest.approx(0.01, abs=1e-15)

    def test_first_center(self):
        assert build_grid(-1, 1, 8).centers[0] == -0.875

    def test_degenerate_domain(self):
        with pytest.raises(InvalidDomain):
            build_grid(0, 0, 10)

    def test_too_few_cells(self):
        with pytest.raises(InvalidDomain):
            build_grid(0, 1, 4)

    def test_neighbor_wraps(self):
        g = build_grid(0, 1, 10)
        assert g.neighbor(9, 1) == 0
        assert g.neighbor(0, -1) == 9

    @given(st.floats(-50, 50))
    def test_wrap_lands_in_box(self, x):
        g = build_grid(-1.0, 1.0, 16)
        w = float(g.wrap(x))
        assert -1.0 <= w < 1.0 + 1e-12
        assert (x - w) / g.length == pytest.approx(round((x - w) / g.length), abs=1e-9)


class TestWiener:
    def test_bit_identical(self):
        a = sample_wiener(3, 7, 500, 1e-3)
        b = sample_wiener(3, 7, 500, 1e-3)
        assert a.increments.tobytes() == b.increments.tobytes()

    def test_distinct_paths_differ(self):
        a = sample_wiener(3, 7, 50, 1e-3)
        b = sample_wiener(3, 8, 50, 1e-3)
        assert not np.array_equal(a.increments, b.increments)

    def test_prefix_property(self):
        short = sample_wiener(1, 2, 100, 0.01)
        long = sample_wiener(1, 2, 300, 0.01)
        np.testing.assert_array_equal(short.increments, long.increments[:100])

    def test_increment_variance(self):
        w = sample_wiener(0, 0, 1000, 1e-3)
        assert np.var(w.increments) == pytest.approx(1e-3, rel=0.1)

    def test_terminal_variance(self):
        # i.i.d. Gaussian sum: Var W(1) = 1
        z = np.array([sample_wiener(99, i, 4, 0.25).cumulative[-1] for i in range(100_000)])
        assert np.var(z) == pytest.approx(1.0, abs=0.02)

    def test_arrays_read_only(self):
        w = sample_wiener(0, 0, 10, 0.1)
        with pytest.raises(ValueError):
            w.increments[0] = 1.0

    def test_increments_over_stride(self):
        w = sample_wiener(0, 0, 12, 0.1)
        agg = w.increments_over(4)
        np.testing.assert_allclose(agg, w.increments.reshape(3, 4).sum(1), atol=1e-14)

    def test_spec_paths(self):
        spec = EnsembleSpec(3, 5, 1.0, 0.1, build_grid(0, 1, 8))
        assert spec.increments().shape == (3, 10)
        with pytest.raises(IndexError):
            spec.path(3)

    def test_steps_for_rejects_non_multiple(self):
        with pytest.raises(ValueError):
            steps_for(1.0, 0.3)


class TestValidateNoise:
    def test_gaussian_linear_passes(self):
        m = NoiseModel(lambda x, u: 0.2 * np.exp(-x * x) * u, 0.4, lambda x: 0.2 * np.exp(-x * x))
        rep = validate_noise(m, np.linspace(-3, 3, 41), np.linspace(-2, 2, 41))
        assert rep.passed
        assert rep.quantities["lipschitz_ratio"] <= 0.4

    def test_zero_noise(self):
        rep = validate_noise(zero_noise(), np.linspace(-1, 1, 5), np.linspace(-1, 1, 5))
        assert rep.quantities["lipschitz_ratio"] == 0.0
        assert rep.quantities["envelope_ratio"] == 0.0

    def test_quadratic_not_lipschitz(self):
        m = NoiseModel(lambda x, u: u * u, 1.0, lambda x: 1e6 + 0 * x)
        with pytest.raises(AssumptionViolated) as info:
            validate_noise(m, [0.0], np.linspace(0, 10, 21))
        assert info.value.sample is not None


class TestValidateFlux:
    def test_burgers_nonlinear(self):
        rep = validate_flux(burgers_flux(), np.linspace(-2, 2, 101))
        assert rep.passed and rep.flags["a4"]
        assert rep.quantities["a4_fraction"] == 1.0

    def test_linear_flags_a4(self):
        rep = validate_flux(linear_flux(1.0), np.linspace(-2, 2, 101))
        assert rep.passed and not rep.flags["a4"]
        assert rep.quantities["a4_fraction"] == 0.0

    def test_wrong_derivative(self):
        bad = FluxModel(lambda u: u * u, lambda u: 3 * u, lambda u: 0 * u + 2, 2)
        with pytest.raises(DerivativeMismatch):
            validate_flux(bad, np.linspace(-1, 1, 11))
