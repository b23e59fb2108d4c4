"""Named flux, noise and initial-data builders.

The registry maps a name to ``(builder, schema)`` where ``schema`` lists the
accepted parameters and their defaults. The CLI resolves config blocks
through it; extensions may call :func:`register_flux` and friends.
"""

from __future__ import annotations

import math

import numpy as np

from .core import FluxModel, NoiseModel

_XE = math.sqrt(0.5) * math.exp(-0.5)  # max of |x| exp(-x^2)


def burgers_flux() -> FluxModel:
    return FluxModel(
        f=lambda u: 0.5 * np.asarray(u, dtype=float) ** 2,
        df=lambda u: np.asarray(u, dtype=float) * 1.0,
        d2f=lambda u: np.ones_like(np.asarray(u, dtype=float)),
        growth_degree=2,
        name="burgers",
    )


def linear_flux(c: float = 1.0) -> FluxModel:
    c = float(c)
    return FluxModel(
        f=lambda u: c * np.asarray(u, dtype=float),
        df=lambda u: np.full_like(np.asarray(u, dtype=float), c),
        d2f=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
        growth_degree=1,
        name="linear",
        params={"c": c},
    )


def cubic_flux(a: float = 1.0) -> FluxModel:
    a = float(a)
    return FluxModel(
        f=lambda u: a * np.asarray(u, dtype=float) ** 3 / 3.0,
        df=lambda u: a * np.asarray(u, dtype=float) ** 2,
        d2f=lambda u: 2.0 * a * np.asarray(u, dtype=float),
        growth_degree=3,
        name="cubic",
        params={"a": a},
    )


def zero_flux() -> FluxModel:
    z = lambda u: np.zeros_like(np.asarray(u, dtype=float))  # noqa: E731
    return FluxModel(f=z, df=z, d2f=z, growth_degree=0, name="zero")


# ---------------------------------------------------------------------------


def zero_noise() -> NoiseModel:
    return NoiseModel(
        sigma=lambda x, u: np.zeros(np.broadcast(np.asarray(x), np.asarray(u)).shape),
        lipschitz_C=0.0,
        envelope_g=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        name="zero",
        params={"_zero": True},
    )


def constant_noise(sigma0: float = 0.3) -> NoiseModel:
    """Spatially uniform additive noise; only meaningful on a bounded box."""
    s = float(sigma0)
    return NoiseModel(
        sigma=lambda x, u: np.full(np.broadcast(np.asarray(x), np.asarray(u)).shape, s),
        lipschitz_C=0.0,
        envelope_g=lambda x: np.full_like(np.asarray(x, dtype=float), abs(s)),
        name="constant",
        params={"sigma0": s},
    )


def additive_noise(amp: float = 0.2, width: float = 1.0) -> NoiseModel:
    """``sigma(x,u) = amp exp(-(x/width)^2)``, independent of ``u``."""
    a, w = float(amp), float(width)
    s = lambda x: a * np.exp(-((np.asarray(x, dtype=float) / w) ** 2))  # noqa: E731
    return NoiseModel(
        sigma=lambda x, u: s(x) + 0.0 * np.asarray(u, dtype=float),
        lipschitz_C=abs(a) * 2 * _XE / w,
        envelope_g=lambda x: np.abs(s(x)),
        name="additive",
        params={"amp": a, "width": w},
    )


def gaussian_linear_noise(amp: float = 0.2, u_max: float = 2.0) -> NoiseModel:
    """``sigma(x,u) = amp exp(-x^2) u``; the Lipschitz constant is quoted for
    ``|u| <= u_max`` since the x-derivative grows with ``u``."""
    a = float(amp)
    C = abs(a) * max(1.0, 2 * _XE * float(u_max))
    return NoiseModel(
        sigma=lambda x, u: a * np.exp(-np.asarray(x, dtype=float) ** 2) * np.asarray(u, dtype=float),
        lipschitz_C=C,
        envelope_g=lambda x: abs(a) * np.exp(-np.asarray(x, dtype=float) ** 2),
        name="gaussian_linear",
        params={"amp": a, "u_max": float(u_max)},
    )


def bounded_sine_noise(amp: float = 0.2, b: float = 0.5) -> NoiseModel:
    """``sigma(x,u) = amp exp(-x^2) (1 + b sin u)``: bounded, globally Lipschitz."""
    a, b = float(amp), float(b)
    return NoiseModel(
        sigma=lambda x, u: a
        * np.exp(-np.asarray(x, dtype=float) ** 2)
        * (1.0 + b * np.sin(np.asarray(u, dtype=float))),
        lipschitz_C=abs(a) * max(abs(b), 2 * _XE * (1 + abs(b))),
        envelope_g=lambda x: abs(a) * (1 + abs(b)) * np.exp(-np.asarray(x, dtype=float) ** 2),
        name="bounded_sine",
        params={"amp": a, "b": b},
    )


# ---------------------------------------------------------------------------
# Initial data: plain vectorized callables x -> u0(x)


def bump(center: float = 0.0, half_width: float = 0.3, amplitude: float = 0.5):
    """``amplitude (1 - z^2)^4`` for ``|z| < 1``, ``z = (x - center)/half_width``."""
    c, w, a = float(center), float(half_width), float(amplitude)

    def u0(x):
        z = (np.asarray(x, dtype=float) - c) / w
        return np.where(np.abs(z) < 1.0, a * (1.0 - z * z) ** 4, 0.0)

    u0.support = (c - w, c + w)
    return u0


def two_bumps(c1=-0.3, c2=0.3, half_width=0.25, a1=0.5, a2=0.5):
    b1, b2 = bump(c1, half_width, a1), bump(c2, half_width, a2)

    def u0(x):
        return b1(x) + b2(x)

    u0.support = (min(b1.support[0], b2.support[0]), max(b1.support[1], b2.support[1]))
    return u0


def step(left: float = -0.5, right: float = 0.5, height: float = 1.0):
    a, b, h = float(left), float(right), float(height)

    def u0(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= a) & (x <= b), h, 0.0)

    u0.support = (a, b)
    return u0


def riemann(u_left: float = 1.0, u_right: float = 0.0, x0: float = 0.0):
    """Riemann data; on a periodic box this also creates a jump at the wrap."""
    uL, uR, x0 = float(u_left), float(u_right), float(x0)

    def u0(x):
        return np.where(np.asarray(x, dtype=float) < x0, uL, uR)

    u0.support = None
    return u0


def sine(amplitude: float = 0.5, wavenumber: float = 1.0):
    a, k = float(amplitude), float(wavenumber)

    def u0(x):
        return a * np.sin(2 * np.pi * k * np.asarray(x, dtype=float))

    u0.support = None
    u0.derivative = lambda x: a * 2 * np.pi * k * np.cos(2 * np.pi * k * np.asarray(x, dtype=float))
    return u0


def zero_data():
    def u0(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    u0.support = (0.0, 0.0)
    return u0


# ---------------------------------------------------------------------------

FLUXES = {
    "burgers": (burgers_flux, {}),
    "linear": (linear_flux, {"c": 1.0}),
    "cubic": (cubic_flux, {"a": 1.0}),
    "zero": (zero_flux, {}),
}

NOISES = {
    "zero": (zero_noise, {}),
    "constant": (constant_noise, {"sigma0": 0.3}),
    "additive": (additive_noise, {"amp": 0.2, "width": 1.0}),
    "gaussian_linear": (gaussian_linear_noise, {"amp": 0.2, "u_max": 2.0}),
    "bounded_sine": (bounded_sine_noise, {"amp": 0.2, "b": 0.5}),
}

INITIAL_DATA = {
    "bump": (bump, {"center": 0.0, "half_width": 0.3, "amplitude": 0.5}),
    "two_bumps": (two_bumps, {"c1": -0.3, "c2": 0.3, "half_width": 0.25, "a1": 0.5, "a2": 0.5}),
    "step": (step, {"left": -0.5, "right": 0.5, "height": 1.0}),
    "riemann": (riemann, {"u_left": 1.0, "u_right": 0.0, "x0": 0.0}),
    "sine": (sine, {"amplitude": 0.5, "wavenumber": 1.0}),
    "zero": (zero_data, {}),
}

_BUILTIN = {"flux": dict(FLUXES), "noise": dict(NOISES), "u0": dict(INITIAL_DATA)}
_TABLES = {"flux": FLUXES, "noise": NOISES, "u0": INITIAL_DATA}


def register(kind: str, name: str, builder, schema: dict):
    if kind not in _TABLES:
        raise KeyError(kind)
    _TABLES[kind][name] = (builder, dict(schema))


def reset_registry():
    """Drop every extension registration, keeping the built-ins."""
    for kind, table in _TABLES.items():
        table.clear()
        table.update(_BUILTIN[kind])


def build(kind: str, name: str, params: dict | None = None):
    """Instantiate a registered model; unknown parameters raise ``KeyError``."""
    table = _TABLES[kind]
    if name not in table:
        raise KeyError(name)
    builder, schema = table[name]
    params = dict(params or {})
    unknown = sorted(set(params) - set(schema))
    if unknown:
        raise KeyError(unknown[0])
    kwargs = {**schema, **params}
    return builder(**kwargs)
