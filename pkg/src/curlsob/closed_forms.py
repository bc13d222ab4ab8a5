"""Loss–Yau spinor/vector-potential pair, Pauli algebra and zero-mode residuals."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import spectral
from .fields import Grid, GridMismatchError, SpinorField, VectorField, lp_norm

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


def pauli_dot(v) -> np.ndarray:
    """σ·v for a real or complex 3-vector."""
    v = np.asarray(v)
    return np.tensordot(v, SIGMA, axes=(0, 0))


def anticommutator(j: int, k: int) -> np.ndarray:
    return SIGMA[j] @ SIGMA[k] + SIGMA[k] @ SIGMA[j]


@dataclass(frozen=True)
class PauliVector:
    w: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.w))


def pauli_expectation(eta) -> PauliVector:
    """w_j = ⟨η, σ_j η⟩ (real for every η since σ_j is Hermitian)."""
    eta = np.asarray(eta, dtype=complex).reshape(2)
    w = np.einsum("a,jab,b->j", eta.conj(), SIGMA, eta).real
    return PauliVector(w)


def loss_yau_field(w, grid: Grid) -> VectorField:
    """A(x) = 3/(1+|x|²)² [(1-|x|²) w + 2 (x·w) x + 2 w∧x]."""
    w = np.asarray(w, dtype=float).reshape(3)
    x = grid.coords
    r2 = grid.r2
    xw = np.tensordot(w, x, axes=(0, 0))
    wx = np.cross(w[:, None, None, None], x, axis=0)
    bracket = (1 - r2) * w[:, None, None, None] + 2 * xw * x + 2 * wx
    return VectorField(grid, 3.0 / (1 + r2) ** 2 * bracket)


def loss_yau_spinor(eta, grid: Grid) -> SpinorField:
    """ψ(x) = (I + iσ·x)(1+|x|²)^{-3/2} η."""
    eta = np.asarray(eta, dtype=complex).reshape(2)
    x = grid.coords
    # (I + iσ·x)η written out component-wise
    s1, s2 = eta
    up = s1 + 1j * (x[2] * s1 + (x[0] - 1j * x[1]) * s2)
    down = s2 + 1j * ((x[0] + 1j * x[1]) * s1 - x[2] * s2)
    return SpinorField(grid, np.stack([up, down]) / (1 + grid.r2) ** 1.5)


def dirac(psi: SpinorField) -> SpinorField:
    """σ·(-i∇)ψ, applied as the multiplier σ·k in frequency space."""
    w = spectral.waves(psi.grid, half=False)
    ph = spectral.fft3(psi.values)
    kx, ky, kz = w.k
    up = kz * ph[0] + (kx - 1j * ky) * ph[1]
    down = (kx + 1j * ky) * ph[0] - kz * ph[1]
    return SpinorField(psi.grid, spectral.ifft3(np.stack([up, down])))


def pauli_mult(A: VectorField, psi: SpinorField) -> SpinorField:
    """Pointwise (σ·A(x)) ψ(x)."""
    if A.grid != psi.grid:
        raise GridMismatchError("vector potential and spinor live on different grids")
    a1, a2, a3 = A.values
    p1, p2 = psi.values
    return SpinorField(psi.grid, np.stack([a3 * p1 + (a1 - 1j * a2) * p2, (a1 + 1j * a2) * p1 - a3 * p2]))


@dataclass
class ZeroModeReport:
    dirac_residual: float
    relative_residual: float
    b_norm: float
    spinor_quotient: float
    sign: int = 1
    degenerate: bool = False
    radius: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _require_nonzero(psi: SpinorField) -> None:
    if not np.any(psi.values):
        raise ValueError("spinor is identically zero")


def zero_mode_residual(A: VectorField, psi: SpinorField, sign: int = 1, radius: float | None = None) -> ZeroModeReport:
    """Residual of σ·(-i∇)ψ = sign·σ·Aψ in L^{3/2}.

    ``sign=+1`` is the equation σ·(-i∇-A)ψ = 0; ``sign=-1`` tests
    σ·(-i∇+A)ψ = 0 instead.  With ``radius`` the residual and its
    normalisation are restricted to the centred ball of that radius, away
    from the periodic seam of the box.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    _require_nonzero(psi)
    if A.grid != psi.grid:
        raise GridMismatchError("vector potential and spinor live on different grids")
    g = psi.grid
    dpsi = dirac(psi)
    diff = dpsi - sign * pauli_mult(A, psi)
    if radius is None:
        res = lp_norm(diff, 1.5)
        scale = lp_norm(dpsi, 1.5)
    else:
        mask = g.r2 < radius**2
        res = float(np.sum(diff.magnitude()[mask] ** 1.5) * g.cell_volume) ** (2 / 3)
        scale = float(np.sum(dpsi.magnitude()[mask] ** 1.5) * g.cell_volume) ** (2 / 3)
    degenerate = scale == 0.0
    rel = res / scale if not degenerate else 0.0
    return ZeroModeReport(
        dirac_residual=res,
        relative_residual=rel,
        b_norm=lp_norm(spectral.curl(A), 1.5),
        spinor_quotient=lp_norm(dpsi, 1.5) / lp_norm(psi, 3),
        sign=sign,
        degenerate=degenerate,
        radius=radius,
    )


def spinor_quotient(psi: SpinorField) -> float:
    """‖σ·(-i∇)ψ‖_{3/2} / ‖ψ‖_3."""
    _require_nonzero(psi)
    return lp_norm(dirac(psi), 1.5) / lp_norm(psi, 3)
