"""Built-in field families for first runs and test suites."""

from __future__ import annotations

import numpy as np

from . import spectral
from .closed_forms import loss_yau_field
from .fields import Grid, VectorField


def gaussian_bump(grid: Grid, center, width: float, polarization, twist=(0.0, 0.0, 0.0)) -> VectorField:
    """p·g(x) + t∧(x - c)·g(x) with g a Gaussian of the given width."""
    c = np.asarray(center, dtype=float).reshape(3, 1, 1, 1)
    p = np.asarray(polarization, dtype=float).reshape(3, 1, 1, 1)
    t = np.asarray(twist, dtype=float).reshape(3, 1, 1, 1)
    d = grid.coords - c
    g = np.exp(-np.sum(d**2, axis=0) / (2 * width**2))
    return VectorField(grid, (p + np.cross(t, d, axis=0)) * g)


def random_bumps(grid: Grid, rng: np.random.Generator, count: int = 3, width=(0.8, 1.6), spread: float = 1.5) -> VectorField:
    """Sum of ``count`` twisted Gaussian bumps with random centres, widths and
    polarisations; smooth and decaying well inside boxes with L ≳ 5."""
    total = np.zeros((3, *grid.shape))
    for _ in range(count):
        c = rng.uniform(-spread, spread, size=3)
        s = rng.uniform(*width)
        p = rng.normal(size=3)
        t = rng.normal(size=3) / s
        total += gaussian_bump(grid, c, s, p, t).values
    return VectorField(grid, total)


def random_divfree(grid: Grid, rng: np.random.Generator, smoothing: float = 0.5) -> VectorField:
    """Heat-smoothed white noise projected onto divergence-free, mean-free fields."""
    noise = VectorField(grid, rng.normal(size=(3, *grid.shape)))
    w = spectral.waves(grid)
    vh = spectral.rfft3(spectral.heat(noise, smoothing).values)
    vh, _ = spectral.leray_hat(vh, w)
    vh[:, 0, 0, 0] = 0.0
    return VectorField(grid, spectral.irfft3(vh, grid.n))


def bump_suite(grid: Grid, size: int = 50, seed: int = 0) -> list[VectorField]:
    """Seeded suite of random bump fields with one to four bumps each.

    Every member is drawn from analytic parameters, so the same seed gives
    the same continuum fields on any grid.
    """
    rng = np.random.default_rng(seed)
    return [random_bumps(grid, rng, count=1 + k % 4) for k in range(size)]


FAMILIES = ("lossyau", "gaussian-bump", "random-divfree")


def build(name: str, grid: Grid, seed: int = 42, w=(0.0, 0.0, 1.0)) -> VectorField:
    rng = np.random.default_rng(seed)
    if name == "lossyau":
        return loss_yau_field(w, grid)
    if name == "gaussian-bump":
        return random_bumps(grid, rng)
    if name == "random-divfree":
        return random_divfree(grid, rng)
    raise ValueError(f"unknown field family {name!r}; choose from {', '.join(FAMILIES)}")
