"""Stereographic transport between ℝ³ and S³ and grand Lebesgue norms.

Points of S³ ⊂ ℝ⁴ are written s = (s₁, s₂, s₃, s₄) with the projection

    S(x) = (2x/(1+|x|²), (1−|x|²)/(1+|x|²)).

A 1-form α on S³ pulls back to A = DSᵀ α∘S and a 2-form Ω to DSᵀ Ω DS, so
transport to the sphere applies the pseudo-inverse of the Jacobian on each
side.  Sphere integrals are seeded Monte Carlo averages over uniform samples,
independent of the ℝ³ grid quadrature they are compared with.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from . import spectral
from .fields import Grid, VectorField, lp_norm

SPHERE_AREA = 2.0 * np.pi**2
POLE_TOL = 1e-12


@dataclass(frozen=True)
class SpherePoint:
    s: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float).reshape(4)
        if abs(np.linalg.norm(s) - 1.0) > 1e-12:
            raise ValueError("sphere point must have unit length")
        object.__setattr__(self, "s", s)


def stereographic(x) -> np.ndarray:
    """S(x) for points of shape (..., 3); returns (..., 4)."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    return np.concatenate([2 * x, 1 - r2], axis=-1) / (1 + r2)


def inverse_stereographic(s) -> np.ndarray:
    """S⁻¹(s) = s_{1..3}/(1+s₄); the point s₄ = −1 has no preimage."""
    s = np.asarray(s, dtype=float)
    if isinstance(s, SpherePoint):
        s = s.s
    denom = 1 + s[..., 3:]
    if np.any(denom <= POLE_TOL):
        raise ValueError("s₄ = −1 is the image of the point at infinity")
    return s[..., :3] / denom


def jacobian(x) -> np.ndarray:
    """DS(x) with shape (..., 4, 3)."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)[..., None, None]
    outer = x[..., :, None] * x[..., None, :]
    top = 2 * np.eye(3) / (1 + r2) - 4 * outer / (1 + r2) ** 2
    bottom = -4 * x[..., None, :] / (1 + r2) ** 2
    return np.concatenate([top, bottom], axis=-2)


def _pinv_t(J: np.ndarray) -> np.ndarray:
    """J (JᵀJ)^{-1}, the transpose of the pseudo-inverse, batched."""
    gram = np.swapaxes(J, -1, -2) @ J
    return np.swapaxes(np.linalg.solve(gram, np.swapaxes(J, -1, -2)), -1, -2)


def conformal_weight(x, q: float) -> np.ndarray:
    """(2/(1+|x|²))^{3−q}."""
    r2 = np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)
    return (2 / (1 + r2)) ** (3 - q)


@dataclass
class SphereSampleSet:
    """Samples of a tangent form on S³.

    ``form_values`` holds 4-vectors for 1-forms and antisymmetric 4×4
    matrices for 2-forms.  ``inside`` marks samples whose preimage lies in
    the box; the others carry zero.
    """

    points: np.ndarray
    weights: np.ndarray
    form_values: np.ndarray
    inside: np.ndarray = None
    seed: int | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.inside is None:
            self.inside = np.ones(len(self.points), dtype=bool)
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")

    def __len__(self) -> int:
        return len(self.points)

    def point(self, i: int) -> SpherePoint:
        return SpherePoint(self.points[i])

    @property
    def degree(self) -> int:
        return 1 if self.form_values.ndim == 2 else 2

    def magnitudes(self) -> np.ndarray:
        """Pointwise form norm; for 2-forms the norm with |e_i∧e_j| = 1."""
        if self.degree == 1:
            return np.linalg.norm(self.form_values, axis=-1)
        return np.sqrt(0.5 * np.sum(self.form_values**2, axis=(-2, -1)))

    def integral(self, values: np.ndarray) -> tuple[float, float]:
        """Weighted sum and its Monte Carlo standard error."""
        contrib = self.weights * values
        n = len(contrib)
        err = float(np.std(contrib) * np.sqrt(n)) if n > 1 else 0.0
        return float(np.sum(contrib)), err

    def tangency_defect(self) -> float:
        """max |⟨α, s⟩| / max|α| over the samples (1-forms), or the analogous
        defect of Ω s for 2-forms."""
        if self.degree == 1:
            d = np.abs(np.sum(self.form_values * self.points, axis=-1))
        else:
            d = np.linalg.norm(self.form_values @ self.points[..., None], axis=(-2, -1))
        scale = self.magnitudes().max(initial=0.0)
        return float(d.max(initial=0.0) / scale) if scale > 0 else 0.0


def uniform_sphere(count: int, seed: int = 42) -> tuple[np.ndarray, np.ndarray]:
    """Uniform S³ points (normalized 4-D Gaussians from a counter-based
    Philox stream) and equal weights summing to 2π²."""
    rng = np.random.Generator(np.random.Philox(seed))
    g = rng.normal(size=(count, 4))
    pts = g / np.linalg.norm(g, axis=1, keepdims=True)
    return pts, np.full(count, SPHERE_AREA / count)


def sample_grid_field(V, points: np.ndarray) -> np.ndarray:
    """Cubic-spline values of the field components at physical points (m, 3)."""
    g = V.grid
    coords = ((np.asarray(points, dtype=float) + g.L) / g.h).T
    vals = V.values if V.values.ndim == 4 else V.values[None]
    out = np.stack([ndimage.map_coordinates(c, coords, order=3, mode="grid-wrap") for c in vals], axis=-1)
    return out


def _in_box(grid: Grid, x: np.ndarray) -> np.ndarray:
    return np.all((x >= -grid.L) & (x < grid.L), axis=-1)


def _in_region(grid: Grid, x: np.ndarray, radius: float | None) -> np.ndarray:
    inside = _in_box(grid, x)
    if radius is not None:
        inside &= np.sum(x * x, axis=-1) < radius**2
    return inside


def _grid_mask(grid: Grid, radius: float | None) -> np.ndarray:
    if radius is None:
        return np.ones(grid.shape, dtype=bool)
    return grid.r2 < radius**2


def one_form_at(A_values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """α(S(x)) from A(x) = DS(x)ᵀ α(S(x)), using the explicit Jacobian."""
    return np.einsum("...ij,...j->...i", _pinv_t(jacobian(x)), A_values)


def two_form_at(B_values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Ω(S(x)) from the 2-form F = dA with F_{kl} = ε_{klm} B_m."""
    b1, b2, b3 = np.moveaxis(B_values, -1, 0)
    z = np.zeros_like(b1)
    F = np.stack([
        np.stack([z, b3, -b2], axis=-1),
        np.stack([-b3, z, b1], axis=-1),
        np.stack([b2, -b1, z], axis=-1),
    ], axis=-2)
    P = _pinv_t(jacobian(x))
    return P @ F @ np.swapaxes(P, -1, -2)


def pushforward_field(A: VectorField, samples, weights=None, degree: int = 1) -> SphereSampleSet:
    """Transport A (degree 1) or curl A (degree 2) to the sphere at the images
    of the given ℝ³ points, which must lie in the box."""
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if not np.all(_in_box(A.grid, x)):
        raise ValueError("sample point outside the box")
    if weights is None:
        weights = np.full(len(x), SPHERE_AREA / len(x))
    src = A if degree == 1 else spectral.curl(A)
    vals = sample_grid_field(src, x)
    form = one_form_at(vals, x) if degree == 1 else two_form_at(vals, x)
    out = SphereSampleSet(stereographic(x), weights, form)
    defect = out.tangency_defect()
    if defect > 1e-10:
        raise ArithmeticError(f"transported form is not tangent (defect {defect:.2e})")
    return out


def sphere_transport(V: VectorField, count: int, seed: int, degree: int = 1,
                     radius: float | None = None) -> SphereSampleSet:
    """Monte Carlo sample set for A (degree 1) or curl A (degree 2).

    Samples whose preimage leaves the box (or the ball of the given radius)
    carry zero, matching the grid quadrature over the same region.
    """
    pts, w = uniform_sphere(count, seed)
    safe = pts[:, 3] > -1 + 1e-9
    x = np.full((count, 3), np.inf)
    x[safe] = inverse_stereographic(pts[safe])
    inside = _in_region(V.grid, x, radius)
    src = V if degree == 1 else spectral.curl(V)
    shape = (count, 4) if degree == 1 else (count, 4, 4)
    form = np.zeros(shape)
    xi = x[inside]
    vals = sample_grid_field(src, xi)
    form[inside] = one_form_at(vals, xi) if degree == 1 else two_form_at(vals, xi)
    return SphereSampleSet(pts, w, form, inside, seed)


@dataclass
class IdentityCheck:
    lhs: float
    rhs: float
    gap: float
    stderr: float

    @classmethod
    def of(cls, lhs: float, rhs: float, stderr: float) -> "IdentityCheck":
        scale = max(abs(lhs), abs(rhs))
        return cls(lhs, rhs, abs(lhs - rhs) / scale if scale > 0 else 0.0, stderr)


@dataclass
class ConformalReport:
    energy: IdentityCheck
    seminorm: IdentityCheck | None
    samples: int
    seed: int
    inside_fraction: float
    tangency_defect: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def conformal_energy_check(A: VectorField, samples: int = 1_000_000, seed: int = 42,
                           seminorm: bool = True, gauge_tol: float = 1e-7,
                           radius: float | None = None) -> ConformalReport:
    """Compare ∫|curl A|^{3/2} dx with ∫_{S³}|dα|^{3/2} dω.

    With ``seminorm`` the field is also gauge fixed and ∫|A′|³ dx is compared
    with ∫|α′|³ dω.  Both sides run over the box, or over the ball of the
    given radius and its image cap on the sphere.
    """
    g = A.grid
    mask = _grid_mask(g, radius)
    lhs = float(np.sum(spectral.curl(A).magnitude()[mask] ** 1.5) * g.cell_volume)
    two = sphere_transport(A, samples, seed, degree=2, radius=radius)
    rhs, err = two.integral(two.magnitudes() ** 1.5)
    energy = IdentityCheck.of(lhs, rhs, err)
    tangency = two.tangency_defect()
    semi = None
    if seminorm:
        from .gauge import gauge_fix

        fixed = gauge_fix(A, tol=gauge_tol).a_fixed
        one = sphere_transport(fixed, samples, seed, degree=1, radius=radius)
        r1, e1 = one.integral(one.magnitudes() ** 3)
        semi = IdentityCheck.of(float(np.sum(fixed.magnitude()[mask] ** 3) * g.cell_volume), r1, e1)
        tangency = max(tangency, one.tangency_defect())
    return ConformalReport(energy, semi, samples, seed, float(two.inside.mean()), tangency,
                           {"radius": radius})


def weighted_norm_check(A1: VectorField, A2: VectorField, q: float = 2.0,
                        samples: int = 1_000_000, seed: int = 42,
                        radius: float | None = None) -> ConformalReport:
    """Compare ∫|A1−A2|^q (2/(1+x²))^{3−q} dx with ∫_{S³}|α1−α2|^q dω."""
    if not 1 <= q < 3:
        raise ValueError("q must lie in [1, 3)")
    diff = A1 - A2
    g = diff.grid
    weight = conformal_weight(np.moveaxis(g.coords, 0, -1), q)
    mask = _grid_mask(g, radius)
    lhs = float(np.sum((diff.magnitude() ** q * weight)[mask]) * g.cell_volume)
    one = sphere_transport(diff, samples, seed, degree=1, radius=radius)
    rhs, err = one.integral(one.magnitudes() ** q)
    return ConformalReport(IdentityCheck.of(lhs, rhs, err), None, samples, seed,
                           float(one.inside.mean()), one.tangency_defect(), {"q": q, "radius": radius})


@dataclass(frozen=True)
class GrandNormParams:
    theta: float = 1.0
    deltas: tuple = tuple(np.geomspace(2.0, 1e-4, 40))

    def __post_init__(self):
        if not 0 < self.theta <= 3:
            raise ValueError("theta must lie in (0, 3]")
        d = np.asarray(self.deltas, dtype=float)
        if d.size == 0 or np.any(d <= 0) or np.any(d > 2):
            raise ValueError("δ-grid must lie in (0, 2]")
        if np.any(np.diff(d) >= 0):
            raise ValueError("δ-grid must be strictly decreasing")
        if not (np.isclose(d[0], 2.0) and np.isclose(d[-1], 1e-4)):
            raise ValueError("δ-grid must include 2 and 1e-4")
        object.__setattr__(self, "deltas", tuple(float(v) for v in d))


def normalized_lp(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    """(Σ w|f|ᵖ / Σ w)^{1/p}."""
    values = np.abs(np.asarray(values, dtype=float))
    weights = np.asarray(weights, dtype=float)
    return float((np.sum(weights * values**p) / np.sum(weights)) ** (1 / p))


def grand_profile(values, weights, params: GrandNormParams) -> np.ndarray:
    """δ^{θ/3}·(normalized L^{3−δ} norm) for each δ of the grid."""
    d = np.asarray(params.deltas)
    return np.array([delta ** (params.theta / 3) * normalized_lp(values, weights, 3 - delta) for delta in d])


def grand_norm(f, params: GrandNormParams | None = None, weights=None) -> float:
    """Grid supremum of δ^{θ/3}·(normalized L^{3−δ} norm).

    ``f`` is a SphereSampleSet (its pointwise form magnitudes are used) or an
    array of values with ``weights``.
    """
    params = params or GrandNormParams()
    if isinstance(f, SphereSampleSet):
        values, weights = f.magnitudes(), f.weights
    else:
        values = np.asarray(f, dtype=float)
        if weights is None:
            weights = np.ones_like(values)
    return float(grand_profile(values, weights, params).max())
